#pragma once
#include <map>
#include <string>
#include <string_view>

#include "splitloc/channel.hpp"
#include "splitloc/dataset.hpp"
#include "splitloc/features.hpp"
#include "splitloc/fedtrain.hpp"

namespace splitloc {

// Flat key=value file; '#' starts a comment, blank lines ignored.
class KvConfig {
public:
    static KvConfig parse_file(const std::string& path);
    static KvConfig parse(std::string_view text);

    bool has(const std::string& key) const;
    std::string get_str(const std::string& key) const;
    std::string get_str(const std::string& key, const std::string& fallback) const;
    double get_f64(const std::string& key) const;
    double get_f64(const std::string& key, double fallback) const;
    int get_int(const std::string& key) const;
    int get_int(const std::string& key, int fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

// Everything one experiment needs, resolved and validated.
struct ExperimentConfig {
    RadioConfig radio;
    Environment env;
    ImageGrid grid;
    GenerateOptions gen;
    double train_fraction = 0.8;
    SplitMode split_mode = SplitMode::Random;
    TrainConfig train;

    static ExperimentConfig from_kv(const KvConfig& kv);
    static ExperimentConfig from_file(const std::string& path);

    // The pinned reference setup: 4 wall-mounted access points around a
    // 10x12 m floor, 20 dB SNR, two reflecting walls, one NLOS link,
    // 6000 records at 80 MHz split 5000/1000.
    static ExperimentConfig standard_benchmark();

    // Same scene, shrunk for smoke runs: 500 records, 10 epochs.
    void apply_micro_profile();
};

} // namespace splitloc
