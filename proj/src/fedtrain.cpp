#include "splitloc/fedtrain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <stdexcept>

#include "splitloc/io_error.hpp"
#include "splitloc/optim.hpp"

namespace splitloc {

ParamSet fedavg(std::span<const ParamSet* const> sets,
                const std::function<bool(ParamKind)>& exclude) {
    if (sets.empty())
        throw std::invalid_argument("fedavg: no parameter sets");
    for (size_t i = 1; i < sets.size(); ++i) {
        std::string why;
        if (!sets[0]->same_structure(*sets[i], &why))
            throw std::invalid_argument("fedavg: set " + std::to_string(i) +
                                        " differs from set 0 at " + why);
    }
    ParamSet out = sets[0]->clone();
    const double inv = 1.0 / static_cast<double>(sets.size());
    for (size_t ei = 0; ei < out.size(); ++ei) {
        auto& entry = out.entries()[ei];
        if (exclude && exclude(entry.kind))
            continue; // left at set 0's values
        auto& acc = entry.tensor.data;
        std::fill(acc.begin(), acc.end(), 0.0);
        for (const ParamSet* s : sets) {
            const auto& src = s->entries()[ei].tensor.data;
            for (size_t j = 0; j < acc.size(); ++j)
                acc[j] += src[j];
        }
        for (auto& v : acc)
            v *= inv;
    }
    return out;
}

void fedavg_inplace(std::span<ParamSet* const> sets,
                    const std::function<bool(ParamKind)>& exclude) {
    if (sets.empty())
        throw std::invalid_argument("fedavg: no parameter sets");
    std::vector<const ParamSet*> view(sets.begin(), sets.end());
    ParamSet mean = fedavg(view, exclude);
    for (ParamSet* s : sets)
        for (size_t ei = 0; ei < mean.size(); ++ei) {
            auto& entry = mean.entries()[ei];
            if (exclude && exclude(entry.kind))
                continue;
            s->entries()[ei].tensor.data = entry.tensor.data;
        }
}

SplitMode split_mode_from_name(std::string_view name) {
    if (name == "random")
        return SplitMode::Random;
    if (name == "spatial")
        return SplitMode::Spatial;
    throw std::invalid_argument("unknown split mode: " + std::string(name));
}

LossKind loss_kind_from_name(std::string_view name) {
    if (name == "geometric")
        return LossKind::Geometric;
    if (name == "direct_aoa" || name == "direct")
        return LossKind::DirectAoa;
    throw std::invalid_argument("unknown loss kind: " + std::string(name));
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double train_fraction,
                                          SplitMode mode, const RngService& rng) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("train fraction must be in (0,1)");
    const size_t n = ds.records.size();
    if (n < 2)
        throw std::invalid_argument("need at least 2 records to split");

    Dataset train = ds, val = ds;
    train.records.clear();
    val.records.clear();

    if (mode == SplitMode::Random) {
        std::vector<size_t> idx(n);
        for (size_t i = 0; i < n; ++i)
            idx[i] = i;
        Substream s = rng.stream("split");
        for (size_t i = n - 1; i > 0; --i)
            std::swap(idx[i], idx[static_cast<size_t>(s.next_int(static_cast<int>(i + 1)))]);
        const auto n_train = static_cast<size_t>(
            std::llround(train_fraction * static_cast<double>(n)));
        if (n_train == 0 || n_train >= n)
            throw std::invalid_argument("split leaves one side empty");
        for (size_t i = 0; i < n; ++i)
            (i < n_train ? train : val).records.push_back(ds.records[idx[i]]);
    } else {
        double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
        for (const auto& r : ds.records) {
            xmin = std::min(xmin, double(r.gt_x));
            xmax = std::max(xmax, double(r.gt_x));
            ymin = std::min(ymin, double(r.gt_y));
            ymax = std::max(ymax, double(r.gt_y));
        }
        // Corner rectangle sized so its share of the floor area is the
        // validation fraction.
        const double side = std::sqrt(1.0 - train_fraction);
        const double x0 = xmax - side * (xmax - xmin);
        const double y0 = ymax - side * (ymax - ymin);
        for (const auto& r : ds.records) {
            const bool held_out = r.gt_x >= x0 && r.gt_y >= y0;
            (held_out ? val : train).records.push_back(r);
        }
        if (train.records.empty() || val.records.empty())
            throw std::invalid_argument("spatial split leaves one side empty");
    }
    return {std::move(train), std::move(val)};
}

void write_train_report_csv(const TrainReport& report, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os)
        throw IoError("cannot write " + path);
    os << "epoch,train_loss,val_loss,val_median_m,lr\n";
    for (const auto& e : report.epochs)
        os << e.epoch << "," << e.train_loss << "," << e.val_loss << "," << e.val_median_m
           << "," << e.lr_last << "\n";
}

namespace {

struct BatchGraph {
    Graph g;
    std::vector<NodeId> image_in;
    NodeId gt_theta = -1;
    NodeId gt_xy = -1;
    NodeId theta_pred = -1;
    NodeId loss = -1;
};

std::unique_ptr<BatchGraph> build_batch_graph(int B, std::vector<EncoderModel>& encoders,
                                              DecoderModel& decoder,
                                              std::span<const ApPose> poses,
                                              const TrainConfig& cfg, const RngService& rng) {
    auto bg = std::make_unique<BatchGraph>();
    const int n_ap = static_cast<int>(encoders.size());
    const ImageGrid& grid = encoders[0].grid;
    std::vector<NodeId> embeddings;
    for (int a = 0; a < n_ap; ++a) {
        const NodeId in = bg->g.input({B, 1, grid.n_angle_bins, grid.n_tof_bins});
        bg->image_in.push_back(in);
        embeddings.push_back(encoder_forward(
            bg->g, encoders[static_cast<size_t>(a)], in,
            rng.stream("dropout/encoder" + std::to_string(a))));
    }
    bg->theta_pred = decoder_forward(bg->g, decoder, embeddings, rng.stream("dropout/decoder"));
    bg->gt_theta = bg->g.input({B, n_ap});
    bg->gt_xy = bg->g.input({B, 2});
    if (cfg.loss_kind == LossKind::Geometric) {
        bg->loss = bg->g.geometric_loss_node(
            bg->theta_pred, bg->gt_theta, bg->gt_xy,
            std::vector<ApPose>(poses.begin(), poses.end()), cfg.weights, cfg.huber_kind);
    } else {
        bg->loss = bg->g.direct_aoa_loss_node(bg->theta_pred, bg->gt_theta,
                                              cfg.weights.delta1, cfg.huber_kind);
    }
    return bg;
}

void fill_batch(BatchGraph& bg, const Dataset& data, std::span<const size_t> rows) {
    const int n_ap = data.n_ap;
    const size_t px = static_cast<size_t>(data.n_angle) * data.n_tof;
    auto gt_theta = bg.g.input_data(bg.gt_theta);
    auto gt_xy = bg.g.input_data(bg.gt_xy);
    for (int a = 0; a < n_ap; ++a) {
        auto img = bg.g.input_data(bg.image_in[static_cast<size_t>(a)]);
        for (size_t bi = 0; bi < rows.size(); ++bi) {
            const auto& rec = data.records[rows[bi]];
            const float* src = rec.images.data() + static_cast<size_t>(a) * px;
            double* dst = img.data() + bi * px;
            for (size_t j = 0; j < px; ++j)
                dst[j] = static_cast<double>(src[j]);
        }
    }
    for (size_t bi = 0; bi < rows.size(); ++bi) {
        const auto& rec = data.records[rows[bi]];
        for (int a = 0; a < n_ap; ++a)
            gt_theta[bi * static_cast<size_t>(n_ap) + static_cast<size_t>(a)] =
                static_cast<double>(rec.gt_aoa_local[static_cast<size_t>(a)]);
        gt_xy[bi * 2] = static_cast<double>(rec.gt_x);
        gt_xy[bi * 2 + 1] = static_cast<double>(rec.gt_y);
    }
}

struct GraphCache {
    std::vector<EncoderModel>* encoders;
    DecoderModel* decoder;
    std::span<const ApPose> poses;
    const TrainConfig* cfg;
    const RngService* rng;
    std::map<int, std::unique_ptr<BatchGraph>> by_size;

    BatchGraph& get(int B) {
        auto it = by_size.find(B);
        if (it == by_size.end())
            it = by_size
                     .emplace(B, build_batch_graph(B, *encoders, *decoder, poses, *cfg, *rng))
                     .first;
        return *it->second;
    }

    int64_t singular_skips() const {
        int64_t n = 0;
        for (const auto& [_, bg] : by_size)
            n += bg->g.singular_skips();
        return n;
    }
};

// Forward the whole dataset in eval mode; returns per-record predicted
// bearings (rows) and accumulates the weighted loss if wanted.
std::vector<std::vector<double>> predict_bearings(GraphCache& cache, const Dataset& data,
                                                  double* mean_loss) {
    const size_t n = data.records.size();
    std::vector<std::vector<double>> out(n);
    double loss_sum = 0.0;
    std::vector<size_t> rows;
    for (size_t start = 0; start < n;) {
        const int B = static_cast<int>(std::min<size_t>(32, n - start));
        rows.resize(static_cast<size_t>(B));
        for (int i = 0; i < B; ++i)
            rows[static_cast<size_t>(i)] = start + static_cast<size_t>(i);
        BatchGraph& bg = cache.get(B);
        bg.g.set_train_mode(false);
        fill_batch(bg, data, rows);
        bg.g.forward();
        if (mean_loss)
            loss_sum += bg.g.scalar_value(bg.loss) * B;
        const auto pred = bg.g.value(bg.theta_pred);
        for (int i = 0; i < B; ++i)
            out[start + static_cast<size_t>(i)] =
                std::vector<double>(pred.begin() + static_cast<int64_t>(i) * data.n_ap,
                                    pred.begin() + static_cast<int64_t>(i + 1) * data.n_ap);
        start += static_cast<size_t>(B);
    }
    if (mean_loss)
        *mean_loss = loss_sum / static_cast<double>(n);
    return out;
}

std::vector<EstimateSample> samples_from_bearings(
    const std::vector<std::vector<double>>& bearings, const Dataset& data,
    std::span<const ApPose> poses) {
    std::vector<EstimateSample> out;
    out.reserve(bearings.size());
    std::vector<double> global(poses.size());
    for (size_t r = 0; r < bearings.size(); ++r) {
        EstimateSample s;
        s.aoa_est = bearings[r];
        s.aoa_gt.assign(data.records[r].gt_aoa_local.begin(),
                        data.records[r].gt_aoa_local.end());
        s.ground_truth = Vec2{double(data.records[r].gt_x), double(data.records[r].gt_y)};
        for (size_t a = 0; a < poses.size(); ++a)
            global[a] = s.aoa_est[a] + poses[a].orientation_phi;
        Triangulation tri;
        if (!try_triangulate(global, poses, tri))
            continue; // no usable fix for this record
        s.estimate = tri.point;
        out.push_back(std::move(s));
    }
    return out;
}

double median_of(std::vector<EstimateSample>& samples) {
    if (samples.empty())
        return std::numeric_limits<double>::infinity();
    return compute_metrics(samples).median_err_m;
}

} // namespace

TrainOutput train(const Dataset& train_data, const Dataset& val_data,
                  std::span<const ApPose> ap_poses, const ImageGrid& grid,
                  const TrainConfig& cfg) {
    train_data.validate();
    val_data.validate();
    if (train_data.records.empty() || val_data.records.empty())
        throw std::invalid_argument("train: empty dataset");
    if (train_data.n_ap != static_cast<int>(ap_poses.size()))
        throw std::invalid_argument("train: dataset has " + std::to_string(train_data.n_ap) +
                                    " access points, got " + std::to_string(ap_poses.size()) +
                                    " poses");
    if (val_data.n_ap != train_data.n_ap || val_data.n_angle != train_data.n_angle ||
        val_data.n_tof != train_data.n_tof)
        throw std::invalid_argument("train: train/val dims differ");
    if (grid.n_angle_bins != train_data.n_angle || grid.n_tof_bins != train_data.n_tof)
        throw std::invalid_argument("train: grid does not match dataset dims");
    if (cfg.batch_size < 1 || cfg.epochs < 1)
        throw std::invalid_argument("train: batch size and epochs must be positive");

    const int n_ap = train_data.n_ap;
    RngService rng(cfg.seed);
    auto [encoders, decoder] = init_models(grid, n_ap, rng);

    std::vector<OptimizerState> enc_opt;
    enc_opt.reserve(encoders.size());
    for (auto& e : encoders)
        enc_opt.push_back(OptimizerState::for_params(e.params));
    OptimizerState dec_opt = OptimizerState::for_params(decoder.params);

    const size_t n_train = train_data.records.size();
    const int64_t batches_per_epoch =
        static_cast<int64_t>((n_train + cfg.batch_size - 1) / cfg.batch_size);
    const int64_t total_steps = batches_per_epoch * cfg.epochs;

    GraphCache cache{&encoders, &decoder, ap_poses, &cfg, &rng, {}};

    std::vector<ParamSet*> enc_param_ptrs;
    for (auto& e : encoders)
        enc_param_ptrs.push_back(&e.params);
    const auto exclude_norm = [](ParamKind k) { return k == ParamKind::Norm; };

    TrainReport report;
    report.total_steps = total_steps;
    double best_median = std::numeric_limits<double>::infinity();
    std::vector<ParamSet> best_enc;
    ParamSet best_dec;
    int64_t step = 0;

    std::vector<size_t> perm(n_train);
    for (size_t i = 0; i < n_train; ++i)
        perm[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Substream shuffle = rng.stream("shuffle").fork(static_cast<uint64_t>(epoch));
        for (size_t i = n_train - 1; i > 0; --i)
            std::swap(perm[i], perm[static_cast<size_t>(shuffle.next_int(static_cast<int>(i + 1)))]);

        double train_loss_sum = 0.0;
        double lr = 0.0;
        for (size_t start = 0; start < n_train;) {
            const int B = static_cast<int>(std::min<size_t>(
                static_cast<size_t>(cfg.batch_size), n_train - start));
            BatchGraph& bg = cache.get(B);
            bg.g.set_train_mode(true);
            fill_batch(bg, train_data, std::span<const size_t>(perm.data() + start,
                                                               static_cast<size_t>(B)));
            bg.g.forward();
            const double loss = bg.g.scalar_value(bg.loss);
            if (!std::isfinite(loss))
                throw std::runtime_error("training loss is not finite at epoch " +
                                         std::to_string(epoch) + ", step " +
                                         std::to_string(step));
            bg.g.backward(bg.loss);

            lr = one_cycle_lr(step, total_steps, cfg.max_lr);
            for (size_t a = 0; a < encoders.size(); ++a)
                adam_step(encoders[a].params, enc_opt[a], lr);
            adam_step(decoder.params, dec_opt, lr);
            ++step;
            if (cfg.federated && cfg.avg_every_batches > 0 &&
                step % cfg.avg_every_batches == 0)
                fedavg_inplace(enc_param_ptrs, exclude_norm);

            train_loss_sum += loss * B;
            start += static_cast<size_t>(B);
        }

        double val_loss = 0.0;
        auto bearings = predict_bearings(cache, val_data, &val_loss);
        auto samples = samples_from_bearings(bearings, val_data, ap_poses);
        const double val_median = median_of(samples);

        EpochStats es;
        es.epoch = epoch;
        es.train_loss = train_loss_sum / static_cast<double>(n_train);
        es.val_loss = val_loss;
        es.val_median_m = val_median;
        es.lr_last = lr;
        report.epochs.push_back(es);

        if (val_median < best_median) {
            best_median = val_median;
            report.best_epoch = epoch;
            best_enc.clear();
            for (auto& e : encoders)
                best_enc.push_back(e.params.clone());
            best_dec = decoder.params.clone();
        }
        if (!cfg.quiet)
            std::fprintf(stderr, "epoch %3d  train %.6f  val %.6f  median %.3fm  lr %.3e\n",
                         epoch, es.train_loss, es.val_loss, es.val_median_m, lr);
    }

    report.singular_skips = cache.singular_skips();
    report.best_val_median_m = best_median;

    if (!best_enc.empty()) {
        for (size_t a = 0; a < encoders.size(); ++a)
            encoders[a].params.copy_values_from(best_enc[a]);
        decoder.params.copy_values_from(best_dec);
    }

    return TrainOutput{std::move(encoders), std::move(decoder), std::move(report)};
}

std::vector<EstimateSample> predict_dataset(std::vector<EncoderModel>& encoders,
                                            DecoderModel& decoder, const Dataset& data,
                                            std::span<const ApPose> ap_poses) {
    data.validate();
    if (encoders.empty() || static_cast<int>(encoders.size()) != data.n_ap ||
        decoder.n_ap != data.n_ap)
        throw std::invalid_argument("predict: model/dataset access point mismatch");
    TrainConfig cfg; // loss config irrelevant for eval, defaults fine
    RngService rng(0);
    GraphCache cache{&encoders, &decoder, ap_poses, &cfg, &rng, {}};
    auto bearings = predict_bearings(cache, data, nullptr);
    return samples_from_bearings(bearings, data, ap_poses);
}

std::vector<EstimateSample> baseline_peak_dataset(const Dataset& data,
                                                  std::span<const ApPose> ap_poses,
                                                  const ImageGrid& grid) {
    data.validate();
    if (static_cast<int>(ap_poses.size()) != data.n_ap)
        throw std::invalid_argument("baseline: pose count does not match dataset");
    std::vector<std::vector<double>> bearings(data.records.size());
    AoaTofImage img;
    img.n_angle = data.n_angle;
    img.n_tof = data.n_tof;
    img.grid = grid;
    const size_t px = static_cast<size_t>(data.n_angle) * data.n_tof;
    img.pixels.resize(px);
    for (size_t r = 0; r < data.records.size(); ++r) {
        bearings[r].resize(static_cast<size_t>(data.n_ap));
        for (int a = 0; a < data.n_ap; ++a) {
            const auto span = data.image(r, a);
            for (size_t j = 0; j < px; ++j)
                img.pixels[j] = static_cast<double>(span[j]);
            bearings[r][static_cast<size_t>(a)] = peak_aoa(img);
        }
    }
    return samples_from_bearings(bearings, data, ap_poses);
}

} // namespace splitloc
