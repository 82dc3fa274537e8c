#pragma once
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "splitloc/channel.hpp"
#include "splitloc/features.hpp"
#include "splitloc/io_error.hpp"
#include "splitloc/rng.hpp"

namespace splitloc {

// One labelled snapshot: per access point an AoA/ToF image, the true local
// bearing and an RSSI reading, plus the device ground truth.
struct DatasetRecord {
    std::vector<float> images;        // n_ap * n_angle * n_tof, row-major
    std::vector<float> gt_aoa_local;  // radians, per access point
    std::vector<float> rssi_db;       // per access point
    float gt_x = 0, gt_y = 0;
    double timestamp = 0;
};

struct Dataset {
    int n_ap = 0;
    int n_angle = 0;
    int n_tof = 0;
    uint32_t radio_preset_id = 0;
    std::vector<DatasetRecord> records;

    size_t size() const { return records.size(); }
    std::span<const float> image(size_t rec, int ap) const;
    void validate() const;
};

// Binary container: magic "FWLD", version, dims, then packed records.
void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

// Dims must match; preset ids may differ, the result is marked mixed.
Dataset concat_datasets(const Dataset& a, const Dataset& b);

enum class SamplerKind { Grid, UniformRandom, Trajectory };
SamplerKind sampler_from_name(std::string_view name);

struct GenerateOptions {
    int n_points = 0;
    SamplerKind sampler = SamplerKind::UniformRandom;
    double trajectory_step = 0.2; // max move between consecutive records
    double sample_period_s = 0.05;
};

// Ray-trace n_points device positions and image them at every access point.
Dataset generate_dataset(const Environment& env, const RadioConfig& radio,
                         const ImageGrid& grid, const GenerateOptions& opt,
                         const RngService& rng);

} // namespace splitloc
