#include "splitloc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "splitloc/io_error.hpp"

namespace splitloc {

double percentile_interp(std::span<const double> sorted, double p) {
    if (sorted.empty())
        throw std::invalid_argument("percentile of an empty sample");
    if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("percentile fraction out of [0,1]");
    if (sorted.size() == 1)
        return sorted[0];
    const double rank = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<size_t>(rank);
    if (lo + 1 >= sorted.size())
        return sorted.back();
    const double frac = rank - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

MetricsReport compute_metrics(std::span<const EstimateSample> samples) {
    if (samples.empty())
        throw std::invalid_argument("no samples to evaluate");
    MetricsReport r;
    r.n_samples = samples.size();
    r.sorted_errors_m.reserve(samples.size());
    double sum = 0.0;
    const size_t n_ap = samples[0].aoa_est.size();
    std::vector<double> ap_sum(n_ap, 0.0), ap_sq(n_ap, 0.0);
    for (const auto& s : samples) {
        if (s.aoa_est.size() != n_ap || s.aoa_gt.size() != n_ap)
            throw std::invalid_argument("samples disagree on access point count");
        const double e = std::hypot(s.estimate.x - s.ground_truth.x,
                                    s.estimate.y - s.ground_truth.y);
        r.sorted_errors_m.push_back(e);
        sum += e;
        for (size_t a = 0; a < n_ap; ++a) {
            const double de =
                wrap_angle(s.aoa_est[a] - s.aoa_gt[a]) * 180.0 / std::numbers::pi;
            ap_sum[a] += de;
            ap_sq[a] += de * de;
        }
    }
    std::sort(r.sorted_errors_m.begin(), r.sorted_errors_m.end());
    r.median_err_m = percentile_interp(r.sorted_errors_m, 0.5);
    r.p90_err_m = percentile_interp(r.sorted_errors_m, 0.9);
    r.mean_err_m = sum / static_cast<double>(samples.size());
    r.aoa_mean_err_deg.resize(n_ap);
    r.aoa_std_err_deg.resize(n_ap);
    const double n = static_cast<double>(samples.size());
    for (size_t a = 0; a < n_ap; ++a) {
        r.aoa_mean_err_deg[a] = ap_sum[a] / n;
        const double var = std::max(0.0, ap_sq[a] / n - r.aoa_mean_err_deg[a] * r.aoa_mean_err_deg[a]);
        r.aoa_std_err_deg[a] = std::sqrt(var);
    }
    return r;
}

void export_cdf_csv(const MetricsReport& report, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os)
        throw IoError("cannot write " + path);
    os << "error_m,cdf\n";
    const double n = static_cast<double>(report.sorted_errors_m.size());
    for (size_t i = 0; i < report.sorted_errors_m.size(); ++i)
        os << report.sorted_errors_m[i] << "," << (static_cast<double>(i + 1) / n) << "\n";
}

void export_cdf_svg(const MetricsReport& report, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os)
        throw IoError("cannot write " + path);
    const double width = 640, height = 420;
    const double ml = 60, mr = 20, mt = 20, mb = 50;
    const double pw = width - ml - mr, ph = height - mt - mb;
    const double xmax = std::max(report.sorted_errors_m.back(), 1e-9);

    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
       << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    // axes
    os << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
       << mt + ph << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
       << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double fx = ml + pw * i / 5.0;
        const double vx = xmax * i / 5.0;
        os << "<line x1=\"" << fx << "\" y1=\"" << mt + ph << "\" x2=\"" << fx << "\" y2=\""
           << mt + ph + 5 << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << fx << "\" y=\"" << mt + ph + 20
           << "\" font-size=\"11\" text-anchor=\"middle\">" << std::round(vx * 100) / 100
           << "</text>\n";
        const double fy = mt + ph - ph * i / 5.0;
        os << "<line x1=\"" << ml - 5 << "\" y1=\"" << fy << "\" x2=\"" << ml << "\" y2=\"" << fy
           << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << ml - 10 << "\" y=\"" << fy + 4
           << "\" font-size=\"11\" text-anchor=\"end\">" << i * 20 << "%</text>\n";
    }
    os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 10
       << "\" font-size=\"12\" text-anchor=\"middle\">localization error (m)</text>\n";
    os << "<polyline fill=\"none\" stroke=\"#1565c0\" stroke-width=\"1.5\" points=\"";
    const double n = static_cast<double>(report.sorted_errors_m.size());
    for (size_t i = 0; i < report.sorted_errors_m.size(); ++i) {
        const double px = ml + pw * (report.sorted_errors_m[i] / xmax);
        const double py = mt + ph - ph * (static_cast<double>(i + 1) / n);
        os << px << "," << py << " ";
    }
    os << "\"/>\n</svg>\n";
}

} // namespace splitloc
