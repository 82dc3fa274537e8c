// Acceptance suite: ten numbered checks, one [PASS]/[FAIL] line each.
// Exit code 0 only when every check passes. The heavyweight checks (7, 8)
// train the full reference benchmark and its ablation arms, so a complete
// run takes on the order of a couple of hours on one core.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "oracle_helpers.hpp"
#include "splitloc/config.hpp"
#include "splitloc/dataset.hpp"
#include "splitloc/fedtrain.hpp"
#include "splitloc/graph.hpp"
#include "splitloc/model.hpp"
#include "splitloc/simnet.hpp"

using namespace splitloc;
namespace fs = std::filesystem;
constexpr double kPi = std::numbers::pi;

namespace {

struct Outcome {
    int id = 0;
    std::string title;
    bool pass = false;
    std::string detail;
    double seconds = 0;
};

std::vector<Outcome> g_results;

class Timer {
public:
    Timer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

void record(int id, const std::string& title, bool pass, const std::string& detail,
            double seconds) {
    g_results.push_back({id, title, pass, detail, seconds});
    std::fprintf(stderr, "  -> %s (%.1fs) %s\n", pass ? "pass" : "FAIL", seconds,
                 detail.c_str());
}

std::string fmt(double v, int prec = 3) {
    std::ostringstream ss;
    ss.precision(prec);
    ss << std::fixed << v;
    return ss.str();
}

// ---------------------------------------------------------------- check 1
void check_triangulation_oracle() {
    std::fprintf(stderr, "[1] triangulation vs grid-search oracle\n");
    Timer timer;
    Substream rng(20240501);
    int done = 0;
    double worst = 0;
    bool ok = true;
    while (done < 100) {
        const int n_ap = 2 + rng.next_int(4);
        const Vec2 target{rng.uniform(2.0, 8.0), rng.uniform(2.0, 8.0)};
        std::vector<ApPose> poses;
        std::vector<double> angles;
        // azimuths are spread over a 150 degree arc so no pair of rays is
        // near parallel or anti-parallel; bearings carry up to 2 deg noise
        const double base = rng.uniform(0.0, 2.0 * kPi);
        const double slot = (kPi * 5.0 / 6.0) / n_ap;
        for (int i = 0; i < n_ap; ++i) {
            const double az = base + i * slot + rng.uniform(-0.25, 0.25) * slot;
            ApPose p{5.0 + 9.0 * std::cos(az), 5.0 + 9.0 * std::sin(az), 0.0};
            const double bearing = std::atan2(target.y - p.y, target.x - p.x);
            p.orientation_phi = bearing;
            poses.push_back(p);
            angles.push_back(bearing + rng.uniform(-2.0, 2.0) * kPi / 180.0);
        }
        Triangulation tri;
        if (!try_triangulate(angles, poses, tri))
            continue; // degenerate draw, redo
        const Vec2 grid = oracle::grid_search_point(angles, poses, target, 2.0, 0.001);
        const double dx = std::abs(tri.point.x - grid.x);
        const double dy = std::abs(tri.point.y - grid.y);
        worst = std::max({worst, dx, dy});
        if (dx > 0.002 || dy > 0.002)
            ok = false;
        ++done;
    }
    const double sec = timer.seconds();
    if (sec >= 10.0)
        ok = false;
    record(1, "triangulation matches 1 mm grid search on 100 noisy sets", ok,
           "worst axis gap " + fmt(worst * 1000.0) + " mm, " + fmt(sec, 1) + " s", sec);
}

// ---------------------------------------------------------------- check 2
void check_exact_intersection() {
    std::fprintf(stderr, "[2] exact two-ray intersection\n");
    Timer timer;
    const std::vector<ApPose> poses{{0, 0, 0}, {10, 0, 0}};
    const std::vector<double> angles{45.0 * kPi / 180.0, 135.0 * kPi / 180.0};
    const auto t = triangulate(angles, poses);
    const double ex = std::abs(t.point.x - 5.0), ey = std::abs(t.point.y - 5.0);
    const bool ok = ex < 1e-9 && ey < 1e-9;
    record(2, "45/135 degree rays from (0,0)/(10,0) meet at (5,5)", ok,
           "gap (" + fmt(ex, 12) + ", " + fmt(ey, 12) + ") m", timer.seconds());
}

// ---------------------------------------------------------------- check 3
struct GradStats {
    int configs = 0;
    int coords = 0;
    double worst = 0;
    bool ok = true;
};

// FD-checks d loss/d t for up to `max_coords` sampled coordinates of t.
// Coordinates where the objective is locally non-smooth, or where both
// sides agree the gradient is negligible, are skipped.
void fd_probe(GradStats& st, Substream& pick, Tensor& t,
              const std::function<double()>& value,
              const std::function<const std::vector<double>&()>& grads,
              int max_coords = 24) {
    const std::vector<double>& g = grads();
    if (g.size() != t.data.size()) {
        st.ok = false;
        return;
    }
    const int n = static_cast<int>(t.data.size());
    for (int probe = 0; probe < std::min(max_coords, n); ++probe) {
        const int i = n <= max_coords ? probe : pick.next_int(n);
        auto f = [&](double x) {
            const double keep = t.data[static_cast<size_t>(i)];
            t.data[static_cast<size_t>(i)] = x;
            const double v = value();
            t.data[static_cast<size_t>(i)] = keep;
            return v;
        };
        const double x0 = t.data[static_cast<size_t>(i)];
        if (!oracle::fd_smooth(f, x0, 1e-6))
            continue;
        const double fd = oracle::central_diff(f, x0, 1e-6);
        const double an = g[static_cast<size_t>(i)];
        if (std::abs(fd) < 1e-7 && std::abs(an) < 1e-7) {
            ++st.coords;
            continue;
        }
        const double re = oracle::rel_err(an, fd);
        st.worst = std::max(st.worst, re);
        if (re > 1e-4)
            st.ok = false;
        ++st.coords;
    }
    ++st.configs;
}

void check_gradient_suite() {
    std::fprintf(stderr, "[3] finite-difference gradient suite\n");
    Timer timer;
    GradStats st;
    Substream rng(777);

    // elementwise and arithmetic chains: 14 random configs
    for (int cfg = 0; cfg < 14; ++cfg) {
        const int rows = 2 + rng.next_int(3), cols = 3 + rng.next_int(5);
        Tensor a({rows, cols}, true), b({rows, cols}, true);
        for (auto& v : a.data)
            v = rng.normal();
        for (auto& v : b.data)
            v = rng.normal();
        Graph g;
        const NodeId na = g.param(a), nb = g.param(b);
        NodeId x = na;
        switch (cfg % 7) {
        case 0: x = g.relu(g.sub(na, nb)); break;
        case 1: x = g.tanh_act(g.mul(na, nb)); break;
        case 2: x = g.add(g.sin_elem(na), g.cos_elem(nb)); break;
        case 3: x = g.huber_elem(na, nb, 0.8, HuberKind::Huber); break;
        case 4: x = g.huber_elem(na, nb, 0.8, HuberKind::Mse); break;
        case 5: x = g.huber_elem(na, nb, 0.8, HuberKind::L1); break;
        case 6: x = g.mul(g.scale(na, 1.7), g.tanh_act(nb)); break;
        }
        const NodeId loss = (cfg % 2 == 0) ? g.mean(x) : g.sum(x);
        auto value = [&] {
            g.forward();
            return g.scalar_value(loss);
        };
        for (Tensor* t : {&a, &b}) {
            auto grads = [&]() -> const std::vector<double>& {
                g.forward();
                g.backward(loss);
                return t->grad;
            };
            fd_probe(st, rng, *t, value, grads);
        }
    }

    // matmul / linear: 8 configs
    for (int cfg = 0; cfg < 8; ++cfg) {
        const int m = 2 + rng.next_int(3), k = 2 + rng.next_int(4), n = 2 + rng.next_int(3);
        Tensor x({m, k}, true), w({n, k}, true), b({n}, true), wt({k, n}, true);
        for (auto& v : x.data)
            v = rng.normal();
        for (auto& v : w.data)
            v = rng.normal();
        for (auto& v : b.data)
            v = 0.1 * rng.normal();
        for (auto& v : wt.data)
            v = rng.normal();
        Graph g;
        const NodeId out = (cfg % 2 == 0) ? g.linear(g.param(x), g.param(w), g.param(b))
                                          : g.matmul(g.param(x), g.param(wt));
        const NodeId loss = g.mean(g.tanh_act(out));
        auto value = [&] {
            g.forward();
            return g.scalar_value(loss);
        };
        std::vector<Tensor*> touch =
            (cfg % 2 == 0) ? std::vector<Tensor*>{&x, &w, &b} : std::vector<Tensor*>{&x, &wt};
        for (Tensor* t : touch) {
            auto grads = [&]() -> const std::vector<double>& {
                g.forward();
                g.backward(loss);
                return t->grad;
            };
            fd_probe(st, rng, *t, value, grads);
        }
    }

    // conv / pool / flatten / concat: 8 configs
    for (int cfg = 0; cfg < 8; ++cfg) {
        const int B = 1 + rng.next_int(2), C = 1 + rng.next_int(2);
        const int H = 6 + 2 * rng.next_int(2), W = 6;
        const int OC = 2 + rng.next_int(2);
        const int stride = 1 + cfg % 2, pad = rng.next_int(2);
        Tensor x({B, C, H, W}, true), w({OC, C, 3, 3}, true), b({OC}, true);
        Tensor side({B, 3}, true);
        for (auto& v : x.data)
            v = 0.5 * rng.normal();
        for (auto& v : w.data)
            v = 0.5 * rng.normal();
        for (auto& v : b.data)
            v = 0.1 * rng.normal();
        for (auto& v : side.data)
            v = rng.normal();
        Graph g;
        NodeId y = g.conv2d(g.param(x), g.param(w), g.param(b), stride, pad);
        y = g.relu(y);
        if (g.shape(y)[2] % 2 == 0 && g.shape(y)[3] % 2 == 0)
            y = g.max_pool2d(y, 2);
        const NodeId flat = g.flatten(y);
        const std::vector<NodeId> parts{flat, g.param(side)};
        const NodeId loss = g.mean(g.concat_cols(parts));
        auto value = [&] {
            g.forward();
            return g.scalar_value(loss);
        };
        for (Tensor* t : {&x, &w, &b, &side}) {
            auto grads = [&]() -> const std::vector<double>& {
                g.forward();
                g.backward(loss);
                return t->grad;
            };
            fd_probe(st, rng, *t, value, grads);
        }
    }

    // geometric and direct losses through the graph, exercising
    // triangulate_backward: 12 configs
    for (int cfg = 0; cfg < 12; ++cfg) {
        const int B = 1 + rng.next_int(3);
        const int n_ap = 2 + rng.next_int(3);
        std::vector<ApPose> poses;
        const Vec2 target{rng.uniform(3.0, 7.0), rng.uniform(3.0, 7.0)};
        for (int i = 0; i < n_ap; ++i) {
            const double az = rng.uniform(0.0, 2.0 * kPi);
            ApPose p{5.0 + 8.0 * std::cos(az), 5.0 + 8.0 * std::sin(az), 0.0};
            p.orientation_phi = std::atan2(target.y - p.y, target.x - p.x);
            poses.push_back(p);
        }
        Tensor pred({B, n_ap}, true);
        Graph g;
        const NodeId np = g.param(pred);
        const NodeId gt = g.input({B, n_ap});
        const NodeId xy = g.input({B, 2});
        for (int s = 0; s < B; ++s) {
            for (int i = 0; i < n_ap; ++i) {
                const double base = 0.25 * rng.normal();
                g.input_data(gt)[static_cast<size_t>(s) * n_ap + i] = base;
                pred.data[static_cast<size_t>(s) * n_ap + i] = base + 0.2 * rng.normal();
            }
            g.input_data(xy)[static_cast<size_t>(s) * 2] = target.x + 0.3 * rng.normal();
            g.input_data(xy)[static_cast<size_t>(s) * 2 + 1] = target.y + 0.3 * rng.normal();
        }
        LossWeights w;
        const auto kind = static_cast<HuberKind>(cfg % 3);
        const NodeId loss = (cfg % 2 == 0)
                                ? g.geometric_loss_node(np, gt, xy, poses, w, kind)
                                : g.direct_aoa_loss_node(np, gt, 0.5, kind);
        auto value = [&] {
            g.forward();
            return g.scalar_value(loss);
        };
        auto grads = [&]() -> const std::vector<double>& {
            g.forward();
            g.backward(loss);
            return pred.grad;
        };
        fd_probe(st, rng, pred, value, grads);
    }

    // micro encoder/decoder stacks end to end: 8 configs
    for (int cfg = 0; cfg < 8; ++cfg) {
        ImageGrid grid;
        grid.n_angle_bins = 8;
        grid.n_tof_bins = 8;
        const int n_ap = 2;
        auto [encs, dec] = init_models(grid, n_ap, RngService(500 + cfg));
        std::vector<ApPose> poses{{-0.2, 3, 0}, {6.2, 3, kPi}};
        const int B = 2;
        Graph g;
        std::vector<NodeId> embeds;
        std::vector<NodeId> ins;
        for (int i = 0; i < n_ap; ++i) {
            const NodeId in = g.input({B, 1, 8, 8});
            ins.push_back(in);
            embeds.push_back(
                encoder_forward(g, encs[static_cast<size_t>(i)], in,
                                Substream(900 + static_cast<uint64_t>(i))));
        }
        const NodeId theta = decoder_forward(g, dec, embeds, Substream(950));
        const NodeId gt = g.input({B, n_ap});
        const NodeId xy = g.input({B, 2});
        for (const NodeId in : ins)
            for (double& v : g.input_data(in))
                v = rng.uniform();
        for (int s = 0; s < B; ++s) {
            for (int i = 0; i < n_ap; ++i)
                g.input_data(gt)[static_cast<size_t>(s) * n_ap + i] = 0.3 * rng.normal();
            g.input_data(xy)[static_cast<size_t>(s) * 2] = rng.uniform(2.0, 4.0);
            g.input_data(xy)[static_cast<size_t>(s) * 2 + 1] = rng.uniform(2.0, 4.0);
        }
        LossWeights w;
        const NodeId loss = g.geometric_loss_node(theta, gt, xy, poses, w);
        g.set_train_mode(false); // dropout must be inert for clean differences
        auto value = [&] {
            g.forward();
            return g.scalar_value(loss);
        };
        std::vector<Tensor*> probes{&encs[0].params.at("conv1.w"),
                                    &encs[0].params.at("fc3.w"),
                                    &encs[1].params.at("conv2.b"),
                                    &dec.params.at("fc1.w"),
                                    &dec.params.at("fc2.b")};
        for (Tensor* t : probes) {
            auto grads = [&]() -> const std::vector<double>& {
                g.forward();
                g.backward(loss);
                return t->grad;
            };
            fd_probe(st, rng, *t, value, grads, 12);
        }
    }

    // dropout's backward is mask/(1-p) routing by construction; verify that
    // identity directly since a resampled mask defeats finite differencing
    {
        Tensor x({2, 40}, true);
        for (auto& v : x.data)
            v = 1.0 + rng.uniform();
        Graph g;
        const NodeId nx = g.param(x);
        const NodeId y = g.dropout(nx, 0.3, Substream(4242));
        const NodeId loss = g.sum(y);
        g.forward();
        g.backward(loss);
        bool drop_ok = true;
        const auto yv = g.value(y);
        for (size_t i = 0; i < x.data.size(); ++i) {
            const double expect = yv[i] == 0.0 ? 0.0 : 1.0 / 0.7;
            if (std::abs(x.grad[i] - expect) > 1e-12)
                drop_ok = false;
        }
        if (!drop_ok)
            st.ok = false;
        ++st.configs;
    }

    const double sec = timer.seconds();
    bool ok = st.ok && st.configs >= 50 && st.coords > 400;
    if (sec >= 60.0)
        ok = false;
    record(3, "gradients match central differences at rel err <= 1e-4", ok,
           std::to_string(st.configs) + " configs, " + std::to_string(st.coords) +
               " coords, worst rel err " + fmt(st.worst, 7) + ", " + fmt(sec, 1) + " s",
           sec);
}

// ---------------------------------------------------------------- check 4
void check_worked_values() {
    std::fprintf(stderr, "[4] worked sin/cos residual magnitudes\n");
    Timer timer;
    auto rad = [](double d) { return d * kPi / 180.0; };
    const double s1 = std::abs(std::sin(rad(88)) - std::sin(rad(-85)));
    const double c1 = std::abs(std::cos(rad(88)) - std::cos(rad(-85)));
    const double s2 = std::abs(std::sin(rad(5)) - std::sin(rad(25)));
    const double c2 = std::abs(std::cos(rad(5)) - std::cos(rad(25)));
    const bool ok = s1 >= 1.99 && s1 <= 2.00 && c1 >= 0.050 && c1 <= 0.054 &&
                    s2 >= 0.335 && s2 <= 0.336 && c2 >= 0.089 && c2 <= 0.091;
    record(4, "sin/cos residuals of the 88/-85 and 5/25 degree pairs", ok,
           "values " + fmt(s1) + ", " + fmt(c1) + ", " + fmt(s2) + ", " + fmt(c2),
           timer.seconds());
}

// ---------------------------------------------------------------- check 5
Environment small_scene() {
    Environment env;
    env.ap_poses = {ApPose{-0.2, 3, 0}, ApPose{6.2, 3, kPi}, ApPose{3, -0.2, kPi / 2}};
    env.xmin = 0;
    env.ymin = 0;
    env.xmax = 6;
    env.ymax = 6;
    env.snr_db = 25.0;
    return env;
}

void check_fedavg_algebra() {
    std::fprintf(stderr, "[5] federated averaging algebra and synchrony\n");
    Timer timer;
    bool ok = true;
    std::string why;

    auto mk = [](double w, double n) {
        ParamSet ps;
        ps.add("fc.w", ParamKind::Linear, Tensor::from({3}, {w, 2 * w, -w}));
        ps.add("norm.g", ParamKind::Norm, Tensor::from({2}, {n, n * n}));
        return ps;
    };
    auto exclude_norm = [](ParamKind k) { return k == ParamKind::Norm; };

    {
        const ParamSet a = mk(0.1 + 0.2, 1.7);
        const ParamSet b = a.clone();
        const ParamSet* sets[] = {&a, &b};
        const ParamSet avg = fedavg(sets, exclude_norm);
        for (size_t e = 0; e < avg.size() && ok; ++e)
            for (size_t i = 0; i < avg.entries()[e].tensor.data.size(); ++i)
                if (avg.entries()[e].tensor.data[i] != a.entries()[e].tensor.data[i]) {
                    ok = false;
                    why = "idempotence broke";
                }
    }
    {
        const ParamSet a = mk(0.37, 2.0);
        ParamSet b = a.clone();
        for (auto& v : b.at("fc.w").data)
            v = -v;
        const ParamSet* sets[] = {&a, &b};
        const ParamSet avg = fedavg(sets, exclude_norm);
        for (double v : avg.at("fc.w").data)
            if (v != 0.0) {
                ok = false;
                why = "w plus minus w is not exactly zero";
            }
    }
    {
        ParamSet a = mk(1.0, 5.0);
        ParamSet b = mk(2.0, -3.0);
        ParamSet* sets[] = {&a, &b};
        fedavg_inplace(sets, exclude_norm);
        if (a.at("fc.w").data != b.at("fc.w").data) {
            ok = false;
            why = "averaged tensors differ between callers";
        }
        if (a.at("norm.g").data[0] != 5.0 || b.at("norm.g").data[0] != -3.0) {
            ok = false;
            why = "norm-kind entries were not left alone";
        }
    }

    // in-run synchrony: every fifth step is an averaging event and each
    // epoch here is exactly five steps, so the returned snapshot sits right
    // after an averaging event and must be bit-identical across encoders
    {
        GenerateOptions opt;
        opt.n_points = 200;
        const Dataset all = generate_dataset(small_scene(), RadioConfig::preset_40mhz(),
                                             ImageGrid{}, opt, RngService(31));
        const auto [tr, va] = split_dataset(all, 0.8, SplitMode::Random, RngService(31));
        TrainConfig cfg;
        cfg.epochs = 2;
        cfg.batch_size = 32;
        cfg.avg_every_batches = 5;
        cfg.max_lr = 1e-4;
        cfg.seed = 31;
        cfg.quiet = true;
        const auto out = train(tr, va, small_scene().ap_poses, ImageGrid{}, cfg);
        for (size_t a = 1; a < out.encoders.size(); ++a) {
            const auto& e0 = out.encoders[0].params;
            const auto& ea = out.encoders[a].params;
            for (size_t e = 0; e < e0.size(); ++e)
                if (e0.entries()[e].kind != ParamKind::Norm &&
                    e0.entries()[e].tensor.data != ea.entries()[e].tensor.data) {
                    ok = false;
                    why = "encoders diverged across an averaging event";
                }
        }
    }
    record(5, "averaging is idempotent, exact, norm-excluding, synchronizing", ok,
           ok ? "all four algebra properties hold" : why, timer.seconds());
}

// ---------------------------------------------------------------- check 9
void check_format_roundtrips() {
    std::fprintf(stderr, "[9] container round-trips and corruption handling\n");
    Timer timer;
    bool ok = true;
    std::string why;
    const auto dir = fs::temp_directory_path() / "splitloc_acceptance_fmt";
    fs::create_directories(dir);

    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::vector<char>{std::istreambuf_iterator<char>(in),
                                 std::istreambuf_iterator<char>()};
    };
    auto spit = [](const fs::path& p, const std::vector<char>& b) {
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        out.write(b.data(), static_cast<std::streamsize>(b.size()));
    };

    try {
        GenerateOptions opt;
        opt.n_points = 6;
        const Dataset ds = generate_dataset(small_scene(), RadioConfig::preset_40mhz(),
                                            ImageGrid{}, opt, RngService(8));
        const auto dpath = dir / "rt.fwld";
        write_dataset(ds, dpath.string());
        const Dataset back = read_dataset(dpath.string());
        const auto dpath2 = dir / "rt2.fwld";
        write_dataset(back, dpath2.string());
        if (slurp(dpath) != slurp(dpath2)) {
            ok = false;
            why = "dataset files differ after a round-trip";
        }

        auto [encs, dec] = init_models(ImageGrid{}, 3, RngService(9));
        const auto ppath = dir / "rt.fwps";
        encs[0].params.save(ppath.string());
        const ParamSet pback = ParamSet::load(ppath.string());
        const auto ppath2 = dir / "rt2.fwps";
        pback.save(ppath2.string());
        if (slurp(ppath) != slurp(ppath2)) {
            ok = false;
            why = "checkpoint files differ after a round-trip";
        }

        // corruption must land in typed errors, never anything else
        int typed = 0;
        const auto good_ds = slurp(dpath);
        const auto good_ps = slurp(ppath);
        struct Probe {
            const std::vector<char>* base;
            bool is_dataset;
            int mode; // 0 magic, 1 version, 2 truncate, 3 trailing
        };
        std::vector<Probe> probes;
        for (int m = 0; m < 4; ++m) {
            probes.push_back({&good_ds, true, m});
            probes.push_back({&good_ps, false, m});
        }
        const auto bad = dir / "bad.bin";
        for (const auto& p : probes) {
            auto bytes = *p.base;
            switch (p.mode) {
            case 0: bytes[0] = 'Z'; break;
            case 1: bytes[4] = 77; break;
            case 2: bytes.resize(bytes.size() * 2 / 3); break;
            case 3: bytes.push_back('!'); break;
            }
            spit(bad, bytes);
            try {
                if (p.is_dataset)
                    (void)read_dataset(bad.string());
                else
                    (void)ParamSet::load(bad.string());
                ok = false;
                why = "corrupted container loaded silently";
            } catch (const IoError&) {
                ++typed;
            } catch (...) {
                ok = false;
                why = "corruption produced an untyped error";
            }
        }
        if (typed != 8) {
            ok = false;
            if (why.empty())
                why = "expected 8 typed failures, saw " + std::to_string(typed);
        }
    } catch (const std::exception& e) {
        ok = false;
        why = e.what();
    }
    fs::remove_all(dir);
    record(9, "bit-exact round-trips; corrupt headers raise typed errors", ok,
           ok ? "8/8 corruption probes typed" : why, timer.seconds());
}

// --------------------------------------------------------------- check 10
void check_bandwidth_invariance() {
    std::fprintf(stderr, "[10] bandwidth invariance and mixed-preset training\n");
    Timer timer;
    bool ok = true;
    std::string why;
    try {
        const Environment env = small_scene();
        const ImageGrid grid;

        const auto c40 = synth_csi(env, Vec2{2, 3}, 0, RadioConfig::preset_40mhz(),
                                   Substream(1));
        const auto c80 = synth_csi(env, Vec2{2, 3}, 0, RadioConfig::preset_80mhz(),
                                   Substream(1));
        const auto i40 = aoa_tof_image(c40, RadioConfig::preset_40mhz(), grid);
        const auto i80 = aoa_tof_image(c80, RadioConfig::preset_80mhz(), grid);
        if (i40.n_angle != i80.n_angle || i40.n_tof != i80.n_tof) {
            ok = false;
            why = "image dimensions differ between presets";
        }

        GenerateOptions opt;
        opt.n_points = 150;
        const Dataset d40 = generate_dataset(env, RadioConfig::preset_40mhz(), grid, opt,
                                             RngService(41));
        const Dataset d80 = generate_dataset(env, RadioConfig::preset_80mhz(), grid, opt,
                                             RngService(42));
        Dataset mixed = concat_datasets(d40, d80);
        if (mixed.radio_preset_id != kPresetMixed) {
            ok = false;
            why = "concat did not mark the preset mixed";
        }

        const auto [tr, va] = split_dataset(mixed, 0.8, SplitMode::Random, RngService(43));
        TrainConfig cfg;
        cfg.epochs = 3;
        cfg.batch_size = 32;
        cfg.max_lr = 1e-4;
        cfg.seed = 43;
        cfg.quiet = true;
        auto out = train(tr, va, env.ap_poses, grid, cfg);

        // the same trained models must evaluate both presets unchanged
        GenerateOptions evo;
        evo.n_points = 40;
        const Dataset t40 = generate_dataset(env, RadioConfig::preset_40mhz(), grid, evo,
                                             RngService(44));
        const Dataset t80 = generate_dataset(env, RadioConfig::preset_80mhz(), grid, evo,
                                             RngService(45));
        const auto m40 =
            compute_metrics(predict_dataset(out.encoders, out.decoder, t40, env.ap_poses));
        const auto m80 =
            compute_metrics(predict_dataset(out.encoders, out.decoder, t80, env.ap_poses));
        if (!(std::isfinite(m40.median_err_m) && std::isfinite(m80.median_err_m)) ||
            m40.n_samples != 40 || m80.n_samples != 40) {
            ok = false;
            why = "mixed-trained model failed to evaluate a pure preset";
        }
        if (ok)
            why = "dims 64x64 on both; mixed model scored medians " +
                  fmt(m40.median_err_m, 2) + " / " + fmt(m80.median_err_m, 2) + " m";
    } catch (const std::exception& e) {
        ok = false;
        why = e.what();
    }
    record(10, "40 and 80 MHz share the image contract and one model", ok, why,
           timer.seconds());
}

// ------------------------------------------------------------- checks 7+8
struct ArmResult {
    std::string name;
    double median = 0;
    double p90 = 0;
    TrainOutput out;
};

ArmResult run_arm(const std::string& name, const Dataset& tr, const Dataset& va,
                  const Environment& env, const ImageGrid& grid, TrainConfig cfg) {
    std::fprintf(stderr, "  training arm '%s' (%d epochs)...\n", name.c_str(), cfg.epochs);
    ArmResult r;
    r.name = name;
    r.out = train(tr, va, env.ap_poses, grid, cfg);
    auto samples = predict_dataset(r.out.encoders, r.out.decoder, va, env.ap_poses);
    const auto m = compute_metrics(samples);
    r.median = m.median_err_m;
    r.p90 = m.p90_err_m;
    std::fprintf(stderr, "  arm '%s': median %.3f m, p90 %.3f m\n", name.c_str(), r.median,
                 r.p90);
    return r;
}

void check_benchmark_and_ablation(const fs::path& scratch) {
    std::fprintf(stderr, "[7] standard benchmark (full training run)\n");
    Timer bench_timer;

    const ExperimentConfig cfg = ExperimentConfig::standard_benchmark();
    Dataset tr, va;
    {
        Timer gen_timer;
        const Dataset all =
            generate_dataset(cfg.env, cfg.radio, cfg.grid, cfg.gen, RngService(cfg.train.seed));
        auto split = split_dataset(all, cfg.train_fraction, cfg.split_mode,
                                   RngService(cfg.train.seed));
        tr = std::move(split.first);
        va = std::move(split.second);
        std::fprintf(stderr, "  dataset: %zu train / %zu test records (%.1fs)\n", tr.size(),
                     va.size(), gen_timer.seconds());
    }

    bool ok7 = true;
    std::string why7;
    std::optional<ArmResult> base;
    try {
        base = run_arm("geometric_huber_fed", tr, va, cfg.env, cfg.grid, cfg.train);
        if (!(base->median < 0.75)) {
            ok7 = false;
            why7 = "median " + fmt(base->median) + " m is not under 0.75 m";
        }
        const auto baseline =
            compute_metrics(baseline_peak_dataset(va, cfg.env.ap_poses, cfg.grid));
        std::fprintf(stderr, "  peak+triangulate baseline median %.3f m\n",
                     baseline.median_err_m);
        if (!(base->median < baseline.median_err_m)) {
            ok7 = false;
            why7 += std::string(why7.empty() ? "" : "; ") + "did not beat the baseline " +
                    fmt(baseline.median_err_m) + " m";
        }
        if (ok7)
            why7 = "median " + fmt(base->median) + " m vs baseline " +
                   fmt(baseline.median_err_m) + " m";

        // persist the trained bundle for the message-net audit (check 6)
        ModelBundle bundle;
        bundle.encoders = base->out.encoders;
        bundle.decoder = base->out.decoder;
        bundle.ap_poses = cfg.env.ap_poses;
        bundle.grid = cfg.grid;
        bundle.radio_preset_id = cfg.radio.preset_id();
        save_models((scratch / "benchmark_models").string(), bundle);
    } catch (const std::exception& e) {
        ok7 = false;
        why7 = e.what();
    }
    const double full_sec = bench_timer.seconds();

    // micro profile: fresh 500-record run, 10 epochs, strictly decreasing
    bool micro_ok = true;
    std::string micro_why;
    Timer micro_timer;
    try {
        ExperimentConfig m = ExperimentConfig::standard_benchmark();
        m.apply_micro_profile();
        const Dataset mall =
            generate_dataset(m.env, m.radio, m.grid, m.gen, RngService(m.train.seed));
        const auto [mtr, mva] =
            split_dataset(mall, m.train_fraction, m.split_mode, RngService(m.train.seed));
        TrainConfig mcfg = m.train;
        mcfg.quiet = true;
        const auto mout = train(mtr, mva, m.env.ap_poses, m.grid, mcfg);
        if (mout.report.epochs.size() != 10) {
            micro_ok = false;
            micro_why = "micro run did not complete 10 epochs";
        }
        for (size_t i = 1; i < mout.report.epochs.size(); ++i)
            if (!(mout.report.epochs[i].train_loss < mout.report.epochs[i - 1].train_loss)) {
                micro_ok = false;
                micro_why = "epoch-mean loss rose at epoch " + std::to_string(i);
            }
    } catch (const std::exception& e) {
        micro_ok = false;
        micro_why = e.what();
    }
    const double micro_sec = micro_timer.seconds();
    if (micro_sec >= 180.0) {
        micro_ok = false;
        micro_why += std::string(micro_why.empty() ? "" : "; ") + "micro took " +
                     fmt(micro_sec, 1) + " s, bound is 180";
    }
    if (!micro_ok) {
        ok7 = false;
        why7 += std::string(why7.empty() ? "" : "; ") + micro_why;
    } else {
        why7 += "; micro profile strictly decreasing in " + fmt(micro_sec, 1) + " s";
    }
    why7 += "; full run " + fmt(full_sec / 60.0, 1) + " min" +
            (full_sec < 45 * 60 ? "" : " (over the 45 min target)");
    record(7, "standard benchmark under 0.75 m, beats peak baseline, micro sane", ok7, why7,
           bench_timer.seconds());

    // ------------------------------------------------------------ check 8
    std::fprintf(stderr, "[8] ablation ordering on the standard benchmark\n");
    Timer abl_timer;
    bool ok8 = true;
    std::string why8;
    if (!base) {
        ok8 = false;
        why8 = "base arm unavailable";
    } else {
        try {
            TrainConfig direct_cfg = cfg.train;
            direct_cfg.loss_kind = LossKind::DirectAoa;
            TrainConfig mse_cfg = cfg.train;
            mse_cfg.huber_kind = HuberKind::Mse;
            TrainConfig l1_cfg = cfg.train;
            l1_cfg.huber_kind = HuberKind::L1;
            TrainConfig nonfed_cfg = cfg.train;
            nonfed_cfg.federated = false;

            const auto direct = run_arm("direct_aoa", tr, va, cfg.env, cfg.grid, direct_cfg);
            const auto mse = run_arm("geometric_mse", tr, va, cfg.env, cfg.grid, mse_cfg);
            const auto l1 = run_arm("geometric_l1", tr, va, cfg.env, cfg.grid, l1_cfg);
            const auto nonfed =
                run_arm("geometric_huber_nonfed", tr, va, cfg.env, cfg.grid, nonfed_cfg);

            std::ostringstream d;
            d << "medians: huber_fed " << fmt(base->median) << ", direct "
              << fmt(direct.median) << ", mse " << fmt(mse.median) << ", l1 "
              << fmt(l1.median) << ", nonfed " << fmt(nonfed.median);
            why8 = d.str();

            if (!(base->median < direct.median)) {
                ok8 = false;
                why8 += "; geometric did not beat direct";
            }
            if (!(base->median <= mse.median)) {
                ok8 = false;
                why8 += "; huber worse than mse";
            }
            if (!(base->median < l1.median)) {
                ok8 = false;
                why8 += "; huber did not beat l1";
            }
            if (!(base->median <= nonfed.median * 1.10)) {
                ok8 = false;
                why8 += "; federated more than 10% behind non-federated";
            }
        } catch (const std::exception& e) {
            ok8 = false;
            why8 = e.what();
        }
    }
    record(8, "loss and federation ablations order as expected", ok8, why8,
           abl_timer.seconds());
}

// ---------------------------------------------------------------- check 6
void check_privacy_audit(const fs::path& scratch) {
    std::fprintf(stderr, "[6] privacy audit over 10000 inference rounds\n");
    Timer timer;
    bool ok = true;
    std::string why;
    try {
        const ExperimentConfig cfg = ExperimentConfig::standard_benchmark();
        std::vector<EncoderModel> encoders;
        DecoderModel decoder;
        std::vector<ApPose> poses = cfg.env.ap_poses;
        const auto model_dir = scratch / "benchmark_models";
        if (fs::exists(model_dir / "manifest.json")) {
            ModelBundle b = load_models(model_dir.string());
            encoders = std::move(b.encoders);
            decoder = std::move(b.decoder);
            poses = b.ap_poses;
        } else {
            auto [e, d] = init_models(cfg.grid, static_cast<int>(poses.size()),
                                      RngService(1));
            encoders = std::move(e);
            decoder = std::move(d);
        }
        std::vector<ApNode> aps;
        for (size_t i = 0; i < encoders.size(); ++i)
            aps.push_back(ApNode{static_cast<int>(i), &encoders[i]});
        UserNode user;
        user.decoder = &decoder;
        user.ap_poses = poses;

        MessageLog log;
        int64_t t = 0;
        Substream walk(606);
        int fixes = 0, missed = 0;
        const int rounds = 10000;
        for (int round = 0; round < rounds; ++round) {
            const Vec2 dev{walk.uniform(cfg.env.xmin + 0.5, cfg.env.xmax - 0.5),
                           walk.uniform(cfg.env.ymin + 0.5, cfg.env.ymax - 0.5)};
            try {
                (void)run_inference_round(cfg.env, cfg.radio, cfg.grid, aps, user, dev,
                                          DropConfig{0.1}, walk.fork(round), log, t);
                ++fixes;
            } catch (const InsufficientBearings&) {
                ++missed;
            }
        }
        const auto rep = audit_privacy(log);
        if (!rep.clean()) {
            ok = false;
            why = std::to_string(rep.violations.size()) + " violations in an honest run";
        }
        if (rep.max_ap_to_user_payload != 258) {
            ok = false;
            why += std::string(why.empty() ? "" : "; ") + "max payload " +
                   std::to_string(rep.max_ap_to_user_payload) + " bytes, want exactly 258";
        }

        // four injected faults, each must raise exactly its own violation
        int faults_ok = 0;
        for (const char rule : {'a', 'b', 'c', 'd'}) {
            MessageLog bad;
            int64_t bt = 0;
            (void)run_inference_round(cfg.env, cfg.radio, cfg.grid, aps, user,
                                      Vec2{5, 6}, DropConfig{0.0}, Substream(9000 + rule),
                                      bad, bt);
            Message m;
            m.logical_time = bt;
            switch (rule) {
            case 'a':
                m.src = kUserNodeId;
                m.dst = 0;
                m.kind = MsgKind::Request;
                m.payload.assign(64, 0); // oversized request
                m.tags = {"request"};
                break;
            case 'b':
                m.src = 1;
                m.dst = kUserNodeId;
                m.kind = MsgKind::EmbeddingReply;
                m.payload.assign(1024, 0); // oversized reply
                m.tags = {"embedding"};
                break;
            case 'c':
                m.src = 0;
                m.dst = 2; // lateral traffic
                m.kind = MsgKind::Request;
                m.payload.assign(kRequestBytes, 0);
                m.tags = {"request"};
                break;
            case 'd':
                m.src = 3;
                m.dst = kUserNodeId;
                m.kind = MsgKind::EmbeddingReply;
                m.payload.assign(kEmbeddingReplyBytes, 0);
                m.tags = {"embedding", "csi"}; // raw measurement leak
                break;
            }
            bad.messages.push_back(m);
            const auto brep = audit_privacy(bad);
            if (brep.violations.size() == 1 && brep.violations[0].rule == rule)
                ++faults_ok;
            else {
                ok = false;
                why += std::string(why.empty() ? "" : "; ") + "fault '" + rule +
                       "' raised " + std::to_string(brep.violations.size()) + " violations";
            }
        }
        if (ok)
            why = std::to_string(fixes) + " fixes, " + std::to_string(missed) +
                  " insufficient-bearing rounds, " + std::to_string(rep.n_messages) +
                  " messages, zero violations, max reply 258 B, 4/4 faults caught";
    } catch (const std::exception& e) {
        ok = false;
        why = e.what();
    }
    record(6, "10k-round audit is clean and injected faults are caught", ok, why,
           timer.seconds());
}

} // namespace

int main() {
    const Timer total;
    const auto scratch = fs::temp_directory_path() / "splitloc_acceptance";
    fs::create_directories(scratch);

    // a check that escapes with an exception is a FAIL, never an abort
    auto safely = [](int id, const char* title, auto&& fn) {
        const Timer t;
        const size_t before = g_results.size();
        try {
            fn();
        } catch (const std::exception& e) {
            if (g_results.size() == before)
                record(id, title, false, std::string("unhandled error: ") + e.what(),
                       t.seconds());
        }
    };

    safely(1, "triangulation oracle", [] { check_triangulation_oracle(); });
    safely(2, "exact intersection", [] { check_exact_intersection(); });
    safely(3, "gradient suite", [] { check_gradient_suite(); });
    safely(4, "worked trig values", [] { check_worked_values(); });
    safely(5, "federated averaging", [] { check_fedavg_algebra(); });
    safely(9, "format round-trips", [] { check_format_roundtrips(); });
    safely(10, "bandwidth invariance", [] { check_bandwidth_invariance(); });
    safely(7, "standard benchmark and ablation",
           [&] { check_benchmark_and_ablation(scratch); });
    safely(6, "privacy audit", [&] { check_privacy_audit(scratch); });

    for (int id = 1; id <= 10; ++id) {
        const bool seen = std::any_of(g_results.begin(), g_results.end(),
                                      [id](const Outcome& r) { return r.id == id; });
        if (!seen)
            record(id, "criterion " + std::to_string(id), false, "check did not run", 0);
    }
    std::sort(g_results.begin(), g_results.end(),
              [](const Outcome& a, const Outcome& b) { return a.id < b.id; });
    bool all = true;
    std::printf("\n================ acceptance summary ================\n");
    for (const auto& r : g_results) {
        std::printf("[%s] %2d. %s\n        %s\n", r.pass ? "PASS" : "FAIL", r.id,
                    r.title.c_str(), r.detail.c_str());
        all = all && r.pass;
    }
    std::printf("====================================================\n");
    std::printf("%d/%zu criteria passed in %.1f min\n",
                static_cast<int>(std::count_if(g_results.begin(), g_results.end(),
                                               [](const Outcome& r) { return r.pass; })),
                g_results.size(), total.seconds() / 60.0);
    fs::remove_all(scratch);
    return all ? 0 : 1;
}
