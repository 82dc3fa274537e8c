#include "splitloc/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include <CLI11.hpp>
#include <json.hpp>

#include "splitloc/config.hpp"
#include "splitloc/io_error.hpp"
#include "splitloc/simnet.hpp"

namespace splitloc {

namespace {

namespace fs = std::filesystem;

void write_metrics_json(const MetricsReport& m, const std::string& path,
                        const TrainReport* train_report = nullptr) {
    nlohmann::json j;
    j["n_samples"] = m.n_samples;
    j["median_m"] = m.median_err_m;
    j["p90_m"] = m.p90_err_m;
    j["mean_m"] = m.mean_err_m;
    j["aoa_mean_err_deg"] = m.aoa_mean_err_deg;
    j["aoa_std_err_deg"] = m.aoa_std_err_deg;
    if (train_report) {
        j["best_epoch"] = train_report->best_epoch;
        j["best_val_median_m"] = train_report->best_val_median_m;
        j["singular_skips"] = train_report->singular_skips;
        j["total_steps"] = train_report->total_steps;
    }
    std::ofstream os(path, std::ios::trunc);
    if (!os)
        throw IoError("cannot write " + path);
    os << j.dump(2) << "\n";
}

void export_metrics(const MetricsReport& m, const fs::path& dir,
                    const TrainReport* report = nullptr) {
    fs::create_directories(dir);
    write_metrics_json(m, (dir / "metrics.json").string(), report);
    export_cdf_csv(m, (dir / "cdf.csv").string());
    export_cdf_svg(m, (dir / "cdf.svg").string());
}

Dataset load_data_files(const std::vector<std::string>& files) {
    Dataset all = read_dataset(files.front());
    for (size_t i = 1; i < files.size(); ++i)
        all = concat_datasets(all, read_dataset(files[i]));
    return all;
}

struct TrainedRun {
    TrainOutput out;
    MetricsReport val_metrics;
};

TrainedRun run_training(const ExperimentConfig& cfg, const Dataset& train_data,
                        const Dataset& val_data) {
    TrainedRun r{train(train_data, val_data, cfg.env.ap_poses, cfg.grid, cfg.train), {}};
    auto samples =
        predict_dataset(r.out.encoders, r.out.decoder, val_data, cfg.env.ap_poses);
    r.val_metrics = compute_metrics(samples);
    return r;
}

void save_run(const TrainedRun& r, const ExperimentConfig& cfg, uint32_t preset_id,
              const fs::path& out_dir) {
    fs::create_directories(out_dir);
    ModelBundle bundle;
    bundle.encoders = r.out.encoders; // copies; run stays usable
    bundle.decoder = r.out.decoder;
    bundle.ap_poses = cfg.env.ap_poses;
    bundle.grid = cfg.grid;
    bundle.radio_preset_id = preset_id;
    save_models((out_dir / "models").string(), bundle);
    write_train_report_csv(r.out.report, (out_dir / "train_report.csv").string());
    export_metrics(r.val_metrics, out_dir, &r.out.report);
}

int cmd_generate(const std::string& config_path, const std::string& out_dir, int64_t seed) {
    ExperimentConfig cfg = ExperimentConfig::from_file(config_path);
    if (seed >= 0)
        cfg.train.seed = static_cast<uint64_t>(seed);
    RngService rng(cfg.train.seed);
    const Dataset ds = generate_dataset(cfg.env, cfg.radio, cfg.grid, cfg.gen, rng);
    fs::create_directories(out_dir);
    const auto path = (fs::path(out_dir) / "data.fwld").string();
    write_dataset(ds, path);
    std::printf("wrote %zu records (%d aps, %dx%d px) to %s\n", ds.records.size(), ds.n_ap,
                ds.n_angle, ds.n_tof, path.c_str());
    return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& data_files,
              const std::string& out_dir, int64_t seed, bool micro) {
    ExperimentConfig cfg = ExperimentConfig::from_file(config_path);
    if (micro)
        cfg.apply_micro_profile();
    if (seed >= 0)
        cfg.train.seed = static_cast<uint64_t>(seed);

    Dataset all;
    if (!data_files.empty()) {
        all = load_data_files(data_files);
    } else {
        RngService rng(cfg.train.seed);
        all = generate_dataset(cfg.env, cfg.radio, cfg.grid, cfg.gen, rng);
    }
    RngService split_rng(cfg.train.seed);
    auto [train_data, val_data] = split_dataset(all, cfg.train_fraction, cfg.split_mode,
                                                split_rng);
    std::printf("training on %zu records, validating on %zu\n", train_data.records.size(),
                val_data.records.size());
    TrainedRun r = run_training(cfg, train_data, val_data);
    save_run(r, cfg, all.radio_preset_id, out_dir);
    std::printf("median error %.3f m, p90 %.3f m (best epoch %d); models in %s\n",
                r.val_metrics.median_err_m, r.val_metrics.p90_err_m, r.out.report.best_epoch,
                (fs::path(out_dir) / "models").string().c_str());
    return 0;
}

int cmd_eval(const std::string& models_dir, const std::vector<std::string>& data_files,
             const std::string& out_dir) {
    ModelBundle bundle = load_models(models_dir);
    const Dataset data = load_data_files(data_files);
    if (data.n_ap != static_cast<int>(bundle.encoders.size()))
        throw std::invalid_argument("dataset has " + std::to_string(data.n_ap) +
                                    " access points, checkpoint has " +
                                    std::to_string(bundle.encoders.size()));
    auto samples = predict_dataset(bundle.encoders, bundle.decoder, data, bundle.ap_poses);
    const auto metrics = compute_metrics(samples);
    export_metrics(metrics, out_dir);
    std::printf("evaluated %zu records: median %.3f m, p90 %.3f m\n", metrics.n_samples,
                metrics.median_err_m, metrics.p90_err_m);
    return 0;
}

int cmd_simulate(const std::string& models_dir, const std::string& config_path, int rounds,
                 double drop_p, const std::string& out_dir, int64_t seed) {
    ModelBundle bundle = load_models(models_dir);
    ExperimentConfig cfg = ExperimentConfig::from_file(config_path);
    // The checkpoint is the authority on poses; the config supplies the
    // physical scene around them.
    cfg.env.ap_poses = bundle.ap_poses;
    cfg.env.validate();
    if (rounds < 1)
        throw std::invalid_argument("need at least one round");

    RngService rng(seed >= 0 ? static_cast<uint64_t>(seed) : cfg.train.seed);
    std::vector<ApNode> aps;
    for (size_t i = 0; i < bundle.encoders.size(); ++i)
        aps.push_back(ApNode{static_cast<int>(i), &bundle.encoders[i]});
    UserNode user{&bundle.decoder, bundle.ap_poses};
    DropConfig drop{drop_p};

    MessageLog log;
    int64_t t = 0;
    int ok = 0, no_fix = 0, insufficient = 0;
    std::string last_error;
    std::vector<double> errors;
    fs::create_directories(out_dir);
    std::ofstream est(fs::path(out_dir) / "estimates.csv", std::ios::trunc);
    est << "round,gt_x,gt_y,est_x,est_y,err_m,n_delivered\n";

    Substream dev_stream = rng.stream("sim-device");
    Substream round_root = rng.stream("sim-round");
    for (int r = 0; r < rounds; ++r) {
        Substream ds = dev_stream.fork(static_cast<uint64_t>(r));
        Vec2 dev;
        int tries = 0;
        do {
            dev.x = ds.uniform(cfg.env.xmin, cfg.env.xmax);
            dev.y = ds.uniform(cfg.env.ymin, cfg.env.ymax);
        } while (++tries < 100 &&
                 [&] {
                     for (const auto& p : cfg.env.ap_poses)
                         if (std::hypot(dev.x - p.x, dev.y - p.y) < 0.1)
                             return true;
                     return false;
                 }());
        try {
            const auto res =
                run_inference_round(cfg.env, cfg.radio, bundle.grid, aps, user, dev, drop,
                                    round_root.fork(static_cast<uint64_t>(r)), log, t);
            if (res.have_fix) {
                ++ok;
                const double err = std::hypot(res.estimate.x - dev.x, res.estimate.y - dev.y);
                errors.push_back(err);
                est << r << "," << dev.x << "," << dev.y << "," << res.estimate.x << ","
                    << res.estimate.y << "," << err << "," << res.delivered_aps.size() << "\n";
            } else {
                ++no_fix;
            }
        } catch (const InsufficientBearings& e) {
            ++insufficient;
            last_error = e.what();
        }
    }

    export_message_log(log, (fs::path(out_dir) / "messages.csv").string());
    const AuditReport audit = audit_privacy(log);
    write_audit_report(audit, (fs::path(out_dir) / "audit.txt").string());

    std::printf("%d rounds: %d with a fix, %d degenerate, %d with too few replies\n", rounds,
                ok, no_fix, insufficient);
    if (!errors.empty()) {
        std::sort(errors.begin(), errors.end());
        std::printf("median error %.3f m over %zu fixes\n",
                    percentile_interp(errors, 0.5), errors.size());
    }
    std::printf("privacy audit: %zu messages, max reply payload %zu bytes, %zu violations\n",
                audit.n_messages, audit.max_ap_to_user_payload, audit.violations.size());
    if (ok == 0 && no_fix == 0)
        throw std::runtime_error("no round produced a result; last failure: " + last_error);
    return audit.clean() ? 0 : 1;
}

int cmd_ablate(const std::string& config_path, const std::string& out_dir, int64_t seed,
               bool micro) {
    ExperimentConfig base = ExperimentConfig::from_file(config_path);
    if (micro)
        base.apply_micro_profile();
    if (seed >= 0)
        base.train.seed = static_cast<uint64_t>(seed);

    RngService rng(base.train.seed);
    const Dataset all = generate_dataset(base.env, base.radio, base.grid, base.gen, rng);
    RngService split_rng(base.train.seed);
    auto [train_data, val_data] =
        split_dataset(all, base.train_fraction, base.split_mode, split_rng);

    struct Arm {
        const char* name;
        LossKind loss;
        HuberKind huber;
        bool federated;
    };
    const Arm arms[] = {
        {"geometric_huber_fed", LossKind::Geometric, HuberKind::Huber, true},
        {"direct_aoa", LossKind::DirectAoa, HuberKind::Huber, true},
        {"geometric_mse", LossKind::Geometric, HuberKind::Mse, true},
        {"geometric_l1", LossKind::Geometric, HuberKind::L1, true},
        {"geometric_huber_nonfed", LossKind::Geometric, HuberKind::Huber, false},
    };

    fs::create_directories(out_dir);
    std::ofstream summary(fs::path(out_dir) / "ablation_summary.csv", std::ios::trunc);
    summary << "arm,loss_kind,penalty,federated,median_m,p90_m\n";
    for (const Arm& arm : arms) {
        ExperimentConfig cfg = base;
        cfg.train.loss_kind = arm.loss;
        cfg.train.huber_kind = arm.huber;
        cfg.train.federated = arm.federated;
        std::printf("=== arm %s ===\n", arm.name);
        TrainedRun r = run_training(cfg, train_data, val_data);
        save_run(r, cfg, all.radio_preset_id, fs::path(out_dir) / arm.name);
        summary << arm.name << "," << (arm.loss == LossKind::Geometric ? "geometric" : "direct_aoa")
                << "," << huber_kind_name(arm.huber) << "," << (arm.federated ? 1 : 0) << ","
                << r.val_metrics.median_err_m << "," << r.val_metrics.p90_err_m << "\n";
        std::printf("arm %s: median %.3f m\n", arm.name, r.val_metrics.median_err_m);
    }
    std::printf("summary in %s\n", (fs::path(out_dir) / "ablation_summary.csv").c_str());
    return 0;
}

} // namespace

int run_cli(std::vector<std::string> args) {
    CLI::App app{"split architecture WiFi localization toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", models_dir;
    std::vector<std::string> data_files;
    int64_t seed = -1;
    bool micro = false;
    int rounds = 1000;
    double drop_p = 0.0;

    auto* gen = app.add_subcommand("generate", "synthesize a labelled dataset");
    gen->add_option("--config", config_path, "experiment config file")->required();
    gen->add_option("--out", out_dir, "output directory");
    gen->add_option("--seed", seed, "seed override");

    auto* tr = app.add_subcommand("train", "train encoders and decoder");
    tr->add_option("--config", config_path, "experiment config file")->required();
    tr->add_option("--data", data_files, "dataset file(s); generated from config if absent");
    tr->add_option("--out", out_dir, "output directory");
    tr->add_option("--seed", seed, "seed override");
    tr->add_flag("--micro", micro, "shrunk profile: 500 records, 10 epochs");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    ev->add_option("--models", models_dir, "checkpoint directory")->required();
    ev->add_option("--data", data_files, "dataset file(s)")->required();
    ev->add_option("--out", out_dir, "output directory");

    auto* sim = app.add_subcommand("simulate", "run inference rounds over the message net");
    sim->add_option("--models", models_dir, "checkpoint directory")->required();
    sim->add_option("--config", config_path, "experiment config file")->required();
    sim->add_option("--rounds", rounds, "number of inference rounds");
    sim->add_option("--drop", drop_p, "reply drop probability")->check(CLI::Range(0.0, 1.0));
    sim->add_option("--out", out_dir, "output directory");
    sim->add_option("--seed", seed, "seed override");

    auto* ab = app.add_subcommand("ablate", "train all ablation arms and compare");
    ab->add_option("--config", config_path, "experiment config file")->required();
    ab->add_option("--out", out_dir, "output directory");
    ab->add_option("--seed", seed, "seed override");
    ab->add_flag("--micro", micro, "shrunk profile: 500 records, 10 epochs");

    std::vector<const char*> argv;
    argv.push_back("splitloc");
    for (const auto& a : args)
        argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed())
            return cmd_generate(config_path, out_dir, seed);
        if (tr->parsed())
            return cmd_train(config_path, data_files, out_dir, seed, micro);
        if (ev->parsed())
            return cmd_eval(models_dir, data_files, out_dir);
        if (sim->parsed())
            return cmd_simulate(models_dir, config_path, rounds, drop_p, out_dir, seed);
        if (ab->parsed())
            return cmd_ablate(config_path, out_dir, seed, micro);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}

} // namespace splitloc
