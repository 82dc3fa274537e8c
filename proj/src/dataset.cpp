#include "splitloc/dataset.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <stdexcept>

#include "binio.hpp"

namespace splitloc {

std::span<const float> Dataset::image(size_t rec, int ap) const {
    const size_t px = static_cast<size_t>(n_angle) * n_tof;
    return std::span<const float>(records[rec].images.data() + static_cast<size_t>(ap) * px, px);
}

void Dataset::validate() const {
    if (n_ap < 1 || n_angle < 1 || n_tof < 1)
        throw DimensionError("dataset: bad dims");
    const size_t px = static_cast<size_t>(n_angle) * n_tof;
    for (const auto& r : records) {
        if (r.images.size() != px * static_cast<size_t>(n_ap) ||
            r.gt_aoa_local.size() != static_cast<size_t>(n_ap) ||
            r.rssi_db.size() != static_cast<size_t>(n_ap))
            throw DimensionError("dataset: record does not match header dims");
    }
}

namespace {
constexpr char kMagic[5] = "FWLD";
constexpr uint32_t kVersion = 1;

size_t record_bytes(int n_ap, int n_angle, int n_tof) {
    // per ap: image + gt_aoa + rssi, then gt_xy and timestamp
    return static_cast<size_t>(n_ap) *
               (static_cast<size_t>(n_angle) * n_tof * 4 + 4 + 4) +
           8 + 8;
}
} // namespace

void write_dataset(const Dataset& ds, const std::string& path) {
    ds.validate();
    auto os = binio::open_out(path);
    binio::write_bytes(os, kMagic, 4);
    binio::write_u32(os, kVersion);
    binio::write_u32(os, static_cast<uint32_t>(ds.n_ap));
    binio::write_u32(os, static_cast<uint32_t>(ds.n_angle));
    binio::write_u32(os, static_cast<uint32_t>(ds.n_tof));
    binio::write_u32(os, static_cast<uint32_t>(ds.records.size()));
    binio::write_u32(os, ds.radio_preset_id);
    const size_t px = static_cast<size_t>(ds.n_angle) * ds.n_tof;
    for (const auto& r : ds.records) {
        for (int ap = 0; ap < ds.n_ap; ++ap) {
            binio::write_bytes(os, r.images.data() + static_cast<size_t>(ap) * px,
                               px * sizeof(float));
            binio::write_f32(os, r.gt_aoa_local[static_cast<size_t>(ap)]);
            binio::write_f32(os, r.rssi_db[static_cast<size_t>(ap)]);
        }
        binio::write_f32(os, r.gt_x);
        binio::write_f32(os, r.gt_y);
        binio::write_f64(os, r.timestamp);
    }
    if (!os)
        throw IoError("write failed: " + path);
}

Dataset read_dataset(const std::string& path) {
    auto is = binio::open_in(path);
    binio::expect_magic(is, "FWLD", "dataset");
    const uint32_t version = binio::read_u32(is, "dataset version");
    if (version != kVersion)
        throw BadVersionError("dataset: unsupported version " + std::to_string(version));
    Dataset ds;
    const uint32_t n_ap = binio::read_u32(is, "dataset n_ap");
    const uint32_t n_angle = binio::read_u32(is, "dataset n_angle");
    const uint32_t n_tof = binio::read_u32(is, "dataset n_tof");
    const uint32_t n_records = binio::read_u32(is, "dataset n_records");
    const uint32_t preset = binio::read_u32(is, "dataset radio preset");
    if (n_ap == 0 || n_ap > 1024 || n_angle == 0 || n_angle > 65536 || n_tof == 0 ||
        n_tof > 65536)
        throw DimensionError("dataset: implausible header dims");

    // The header fixes the byte count exactly; check before bulk reads.
    const auto expected = static_cast<uintmax_t>(28) +
                          static_cast<uintmax_t>(n_records) *
                              record_bytes(static_cast<int>(n_ap), static_cast<int>(n_angle),
                                           static_cast<int>(n_tof));
    std::error_code ec;
    const auto actual = std::filesystem::file_size(path, ec);
    if (!ec) {
        if (actual < expected)
            throw TruncatedError("dataset: file holds " + std::to_string(actual) +
                                 " bytes, header implies " + std::to_string(expected));
        if (actual > expected)
            throw DimensionError("dataset: trailing bytes after last record");
    }

    ds.n_ap = static_cast<int>(n_ap);
    ds.n_angle = static_cast<int>(n_angle);
    ds.n_tof = static_cast<int>(n_tof);
    ds.radio_preset_id = preset;
    const size_t px = static_cast<size_t>(ds.n_angle) * ds.n_tof;
    ds.records.resize(n_records);
    for (auto& r : ds.records) {
        r.images.resize(px * static_cast<size_t>(ds.n_ap));
        r.gt_aoa_local.resize(static_cast<size_t>(ds.n_ap));
        r.rssi_db.resize(static_cast<size_t>(ds.n_ap));
        for (int ap = 0; ap < ds.n_ap; ++ap) {
            binio::read_bytes(is, r.images.data() + static_cast<size_t>(ap) * px,
                              px * sizeof(float), "record image");
            r.gt_aoa_local[static_cast<size_t>(ap)] = binio::read_f32(is, "record bearing");
            r.rssi_db[static_cast<size_t>(ap)] = binio::read_f32(is, "record rssi");
        }
        r.gt_x = binio::read_f32(is, "record x");
        r.gt_y = binio::read_f32(is, "record y");
        r.timestamp = binio::read_f64(is, "record timestamp");
    }
    return ds;
}

Dataset concat_datasets(const Dataset& a, const Dataset& b) {
    if (a.n_ap != b.n_ap || a.n_angle != b.n_angle || a.n_tof != b.n_tof)
        throw std::invalid_argument("concat: datasets have different dims");
    Dataset out = a;
    out.records.insert(out.records.end(), b.records.begin(), b.records.end());
    if (a.radio_preset_id != b.radio_preset_id)
        out.radio_preset_id = kPresetMixed;
    return out;
}

SamplerKind sampler_from_name(std::string_view name) {
    if (name == "grid")
        return SamplerKind::Grid;
    if (name == "random" || name == "uniform")
        return SamplerKind::UniformRandom;
    if (name == "trajectory")
        return SamplerKind::Trajectory;
    throw std::invalid_argument("unknown sampler: " + std::string(name));
}

namespace {

constexpr double kMinSampleApDist = 0.1;

bool too_close_to_ap(const Environment& env, double x, double y) {
    for (const auto& ap : env.ap_poses)
        if (std::hypot(x - ap.x, y - ap.y) < kMinSampleApDist)
            return true;
    return false;
}

std::vector<Vec2> sample_positions(const Environment& env, const GenerateOptions& opt,
                                   Substream stream) {
    std::vector<Vec2> pts;
    pts.reserve(static_cast<size_t>(opt.n_points));
    switch (opt.sampler) {
    case SamplerKind::Grid: {
        const int side = static_cast<int>(std::llround(std::sqrt(double(opt.n_points))));
        if (side * side != opt.n_points)
            throw std::invalid_argument("grid sampler needs a square count, got " +
                                        std::to_string(opt.n_points));
        const double cw = (env.xmax - env.xmin) / side;
        const double ch = (env.ymax - env.ymin) / side;
        for (int iy = 0; iy < side; ++iy)
            for (int ix = 0; ix < side; ++ix)
                pts.push_back(Vec2{env.xmin + (ix + 0.5) * cw, env.ymin + (iy + 0.5) * ch});
        break;
    }
    case SamplerKind::UniformRandom: {
        for (int i = 0; i < opt.n_points; ++i) {
            Substream s = stream.fork(static_cast<uint64_t>(i));
            Vec2 p;
            int tries = 0;
            do {
                p.x = s.uniform(env.xmin, env.xmax);
                p.y = s.uniform(env.ymin, env.ymax);
                if (++tries > 1000)
                    throw std::runtime_error("sampler cannot place a point away from the APs");
            } while (too_close_to_ap(env, p.x, p.y));
            pts.push_back(p);
        }
        break;
    }
    case SamplerKind::Trajectory: {
        Substream s = stream;
        Vec2 p;
        int tries = 0;
        do {
            p.x = s.uniform(env.xmin, env.xmax);
            p.y = s.uniform(env.ymin, env.ymax);
            if (++tries > 1000)
                throw std::runtime_error("sampler cannot place a start away from the APs");
        } while (too_close_to_ap(env, p.x, p.y));
        pts.push_back(p);
        while (static_cast<int>(pts.size()) < opt.n_points) {
            const double ang = s.uniform(0.0, 2.0 * std::numbers::pi);
            const double r = s.uniform(0.0, opt.trajectory_step);
            Vec2 q{p.x + r * std::cos(ang), p.y + r * std::sin(ang)};
            q.x = std::clamp(q.x, env.xmin, env.xmax);
            q.y = std::clamp(q.y, env.ymin, env.ymax);
            if (too_close_to_ap(env, q.x, q.y))
                continue; // stay put this tick and try a new heading
            p = q;
            pts.push_back(p);
        }
        break;
    }
    }
    return pts;
}

} // namespace

Dataset generate_dataset(const Environment& env, const RadioConfig& radio,
                         const ImageGrid& grid, const GenerateOptions& opt,
                         const RngService& rng) {
    env.validate();
    radio.validate();
    grid.validate();
    if (opt.n_points < 1)
        throw std::invalid_argument("generate_dataset: n_points must be positive");

    const auto pts = sample_positions(env, opt, rng.stream("sampler"));

    Dataset ds;
    ds.n_ap = static_cast<int>(env.ap_poses.size());
    ds.n_angle = grid.n_angle_bins;
    ds.n_tof = grid.n_tof_bins;
    ds.radio_preset_id = radio.preset_id();
    ds.records.reserve(pts.size());

    const Substream noise_root = rng.stream("csi-noise");
    const size_t px = static_cast<size_t>(ds.n_angle) * ds.n_tof;
    for (size_t i = 0; i < pts.size(); ++i) {
        DatasetRecord rec;
        rec.images.resize(px * static_cast<size_t>(ds.n_ap));
        rec.gt_aoa_local.resize(static_cast<size_t>(ds.n_ap));
        rec.rssi_db.resize(static_cast<size_t>(ds.n_ap));
        rec.gt_x = static_cast<float>(pts[i].x);
        rec.gt_y = static_cast<float>(pts[i].y);
        rec.timestamp = static_cast<double>(i) * opt.sample_period_s;
        for (int ap = 0; ap < ds.n_ap; ++ap) {
            const auto csi = synth_csi(env, pts[i], ap, radio,
                                       noise_root.fork(i).fork(static_cast<uint64_t>(ap)));
            const auto img = aoa_tof_image(csi, radio, grid);
            for (size_t j = 0; j < px; ++j)
                rec.images[static_cast<size_t>(ap) * px + j] = static_cast<float>(img.pixels[j]);
            rec.gt_aoa_local[static_cast<size_t>(ap)] = static_cast<float>(csi.true_aoa_local);
            rec.rssi_db[static_cast<size_t>(ap)] = static_cast<float>(csi_rssi_db(csi));
        }
        ds.records.push_back(std::move(rec));
    }
    return ds;
}

} // namespace splitloc
