#include "splitloc/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "splitloc/io_error.hpp"

namespace splitloc {

namespace {

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<double> parse_list(const std::string& key, const std::string& s, size_t want) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty())
            continue;
        try {
            size_t pos = 0;
            out.push_back(std::stod(item, &pos));
            if (pos != item.size())
                throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw std::invalid_argument("config: bad number '" + item + "' in " + key);
        }
    }
    if (want != 0 && out.size() != want)
        throw std::invalid_argument("config: " + key + " needs " + std::to_string(want) +
                                    " comma-separated values, got " +
                                    std::to_string(out.size()));
    return out;
}

} // namespace

KvConfig KvConfig::parse(std::string_view text) {
    KvConfig kv;
    std::stringstream ss{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty())
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
        kv.values_[key] = val;
    }
    return kv;
}

KvConfig KvConfig::parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is)
        throw IoError("cannot open config: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse(ss.str());
}

bool KvConfig::has(const std::string& key) const { return values_.count(key) > 0; }

std::string KvConfig::get_str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end())
        throw std::invalid_argument("config: missing key '" + key + "'");
    return it->second;
}

std::string KvConfig::get_str(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double KvConfig::get_f64(const std::string& key) const {
    const std::string s = get_str(key);
    if (s == "inf" || s == "+inf")
        return std::numeric_limits<double>::infinity();
    try {
        size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size())
            throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: '" + key + "' is not a number: " + s);
    }
}

double KvConfig::get_f64(const std::string& key, double fallback) const {
    return has(key) ? get_f64(key) : fallback;
}

int KvConfig::get_int(const std::string& key) const {
    const std::string s = get_str(key);
    try {
        size_t pos = 0;
        const int v = std::stoi(s, &pos);
        if (pos != s.size())
            throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: '" + key + "' is not an integer: " + s);
    }
}

int KvConfig::get_int(const std::string& key, int fallback) const {
    return has(key) ? get_int(key) : fallback;
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
    if (!has(key))
        return fallback;
    const std::string s = get_str(key);
    if (s == "true" || s == "1" || s == "yes" || s == "on")
        return true;
    if (s == "false" || s == "0" || s == "no" || s == "off")
        return false;
    throw std::invalid_argument("config: '" + key + "' is not a boolean: " + s);
}

ExperimentConfig ExperimentConfig::from_kv(const KvConfig& kv) {
    ExperimentConfig c;
    c.radio = RadioConfig::preset(kv.get_str("bandwidth_preset", "80MHz"));

    const int n_ap = kv.get_int("n_ap");
    for (int i = 0; i < n_ap; ++i) {
        const std::string key = "ap_pose_" + std::to_string(i);
        const auto v = parse_list(key, kv.get_str(key), 3);
        c.env.ap_poses.push_back(ApPose{v[0], v[1], v[2]});
    }
    const auto b = parse_list("bounds", kv.get_str("bounds"), 4);
    c.env.xmin = b[0];
    c.env.ymin = b[1];
    c.env.xmax = b[2];
    c.env.ymax = b[3];
    c.env.snr_db = kv.get_f64("snr_db", 20.0);
    for (int i = 0;; ++i) {
        const std::string key = "reflector_" + std::to_string(i);
        if (!kv.has(key))
            break;
        const auto v = parse_list(key, kv.get_str(key), 5);
        c.env.reflectors.push_back(Reflector{v[0], v[1], v[2], v[3], v[4]});
    }
    if (kv.has("nlos_ap_indices"))
        for (double v : parse_list("nlos_ap_indices", kv.get_str("nlos_ap_indices"), 0))
            c.env.nlos_ap_indices.push_back(static_cast<int>(v));
    c.env.validate();

    c.grid.n_angle_bins = kv.get_int("n_angle_bins", 64);
    c.grid.n_tof_bins = kv.get_int("n_tof_bins", 64);
    c.grid.validate();

    c.gen.n_points = kv.get_int("n_points", 1000);
    c.gen.sampler = sampler_from_name(kv.get_str("sampler", "random"));
    c.gen.trajectory_step = kv.get_f64("trajectory_step", 0.2);

    c.train_fraction = kv.get_f64("train_fraction", 0.8);
    c.split_mode = split_mode_from_name(kv.get_str("split_mode", "random"));

    c.train.batch_size = kv.get_int("batch_size", 32);
    c.train.epochs = kv.get_int("epochs", 100);
    c.train.max_lr = kv.get_f64("max_lr", 5e-5);
    c.train.avg_every_batches = kv.get_int("avg_every_batches", 10);
    c.train.federated = kv.get_bool("federated", true);
    c.train.loss_kind = loss_kind_from_name(kv.get_str("loss_kind", "geometric"));
    c.train.huber_kind = huber_kind_from_name(kv.get_str("huber_kind", "huber"));
    c.train.weights.lambda1 = kv.get_f64("lambda1", 1.0);
    c.train.weights.lambda2 = kv.get_f64("lambda2", 1.0);
    c.train.weights.lambda3 = kv.get_f64("lambda3", 0.1);
    c.train.weights.delta1 = kv.get_f64("delta1", 0.5);
    c.train.weights.delta2 = kv.get_f64("delta2", 1.0);
    c.train.weights.delta3 = kv.get_f64("delta3", 2.0);
    c.train.seed = static_cast<uint64_t>(kv.get_int("seed", 1));
    return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    return from_kv(KvConfig::parse_file(path));
}

ExperimentConfig ExperimentConfig::standard_benchmark() {
    constexpr double pi = std::numbers::pi;
    ExperimentConfig c;
    c.radio = RadioConfig::preset_80mhz();
    c.env.ap_poses = {
        ApPose{-0.2, 6.0, 0.0},       // west wall, facing +x
        ApPose{10.2, 6.0, pi},        // east wall, facing -x
        ApPose{5.0, 12.2, -pi / 2.0}, // north wall, facing -y
        ApPose{5.0, -0.2, pi / 2.0},  // south wall, facing +y
    };
    c.env.xmin = 0;
    c.env.ymin = 0;
    c.env.xmax = 10;
    c.env.ymax = 12;
    c.env.snr_db = 20.0;
    // The long east-side wall gives the NLOS access point (index 2, whose
    // direct path is suppressed 15 dB) a dominant specular path over most of
    // the floor, so naive peak picking follows the mirror image there.
    c.env.reflectors = {Reflector{2, 2, 2, 5, 6.0}, Reflector{9, 2, 9, 11.8, 6.0}};
    c.env.nlos_ap_indices = {2};
    c.grid = ImageGrid::default_grid();
    c.gen.n_points = 6000;
    c.gen.sampler = SamplerKind::UniformRandom;
    c.train_fraction = 5000.0 / 6000.0;
    c.split_mode = SplitMode::Random;
    c.train = TrainConfig{};
    return c;
}

void ExperimentConfig::apply_micro_profile() {
    gen.n_points = 500;
    train.epochs = 10;
    train_fraction = 0.8;
}

} // namespace splitloc
