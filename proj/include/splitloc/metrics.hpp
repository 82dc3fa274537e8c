#pragma once
#include <span>
#include <string>
#include <vector>

#include "splitloc/geometry.hpp"

namespace splitloc {

struct EstimateSample {
    Vec2 estimate;
    Vec2 ground_truth;
    std::vector<double> aoa_est; // local bearings, radians, per access point
    std::vector<double> aoa_gt;
};

struct MetricsReport {
    size_t n_samples = 0;
    double median_err_m = 0;
    double p90_err_m = 0;
    double mean_err_m = 0;
    std::vector<double> aoa_mean_err_deg; // per access point, signed mean
    std::vector<double> aoa_std_err_deg;
    std::vector<double> sorted_errors_m; // CDF support
};

// Linear-interpolated percentile on a sorted sample: rank = p * (n - 1).
double percentile_interp(std::span<const double> sorted, double p);

MetricsReport compute_metrics(std::span<const EstimateSample> samples);

void export_cdf_csv(const MetricsReport& report, const std::string& path);
void export_cdf_svg(const MetricsReport& report, const std::string& path);

} // namespace splitloc
