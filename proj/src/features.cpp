#include "splitloc/features.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace splitloc {

namespace {
constexpr double kPi = std::numbers::pi;
}

double ImageGrid::angle_center(int a) const {
    const double w = (angle_max - angle_min) / n_angle_bins;
    return angle_min + (a + 0.5) * w;
}

double ImageGrid::tof_center(int t) const {
    const double w = (tof_max - tof_min) / n_tof_bins;
    return tof_min + (t + 0.5) * w;
}

void ImageGrid::validate() const {
    if (n_angle_bins < 2 || n_tof_bins < 2)
        throw std::invalid_argument("image grid: need at least 2 bins per axis");
    if (!(angle_max > angle_min) || !(tof_max > tof_min))
        throw std::invalid_argument("image grid: empty axis range");
    if (angle_min < -kPi / 2 - 1e-12 || angle_max > kPi / 2 + 1e-12)
        throw std::invalid_argument("image grid: angle axis exceeds the array field of view");
}

AoaTofImage aoa_tof_image(const CsiMatrix& csi, const RadioConfig& radio,
                          const ImageGrid& grid) {
    grid.validate();
    if (csi.n_subcarriers != radio.n_subcarriers || csi.n_antennas != radio.n_antennas)
        throw std::invalid_argument("csi dims (" + std::to_string(csi.n_subcarriers) + "," +
                                    std::to_string(csi.n_antennas) +
                                    ") do not match the radio config");

    bool any = false;
    for (const auto& v : csi.values)
        if (v != std::complex<double>(0.0, 0.0)) {
            any = true;
            break;
        }
    if (!any)
        throw std::invalid_argument("csi matrix is all zero");

    // Reduce to the canonical subcarrier count by striding the comb.
    if (csi.n_subcarriers < kCanonicalSubcarriers ||
        csi.n_subcarriers % kCanonicalSubcarriers != 0)
        throw std::invalid_argument("subcarrier count " + std::to_string(csi.n_subcarriers) +
                                    " is not a multiple of " +
                                    std::to_string(kCanonicalSubcarriers));
    const int stride = csi.n_subcarriers / kCanonicalSubcarriers;
    const int K = kCanonicalSubcarriers;
    const int M = csi.n_antennas;

    std::vector<std::complex<double>> h(static_cast<size_t>(K) * M);
    std::vector<double> freq(static_cast<size_t>(K));
    for (int k = 0; k < K; ++k) {
        freq[static_cast<size_t>(k)] = radio.subcarrier_freq_hz(k * stride);
        for (int m = 0; m < M; ++m)
            h[static_cast<size_t>(k) * M + m] = csi.at(k * stride, m);
    }

    // Unwrap the per-antenna phase across subcarriers, average the antennas,
    // then strip the least-squares linear ramp. This cancels any common time
    // offset up to a global phase, which the magnitude image ignores.
    std::vector<double> mean_phase(static_cast<size_t>(K), 0.0);
    for (int m = 0; m < M; ++m) {
        double prev = std::arg(h[static_cast<size_t>(0) * M + m]);
        double acc = prev;
        mean_phase[0] += acc;
        for (int k = 1; k < K; ++k) {
            const double raw = std::arg(h[static_cast<size_t>(k) * M + m]);
            double d = raw - prev;
            while (d > kPi)
                d -= 2 * kPi;
            while (d <= -kPi)
                d += 2 * kPi;
            acc += d;
            prev = raw;
            mean_phase[static_cast<size_t>(k)] += acc;
        }
    }
    for (auto& p : mean_phase)
        p /= M;

    const double kbar = (K - 1) / 2.0;
    double num = 0.0, den = 0.0, pbar = 0.0;
    for (int k = 0; k < K; ++k)
        pbar += mean_phase[static_cast<size_t>(k)];
    pbar /= K;
    for (int k = 0; k < K; ++k) {
        num += (k - kbar) * (mean_phase[static_cast<size_t>(k)] - pbar);
        den += (k - kbar) * (k - kbar);
    }
    const double slope = num / den;
    for (int k = 0; k < K; ++k) {
        const std::complex<double> rot = std::polar(1.0, -slope * k);
        for (int m = 0; m < M; ++m)
            h[static_cast<size_t>(k) * M + m] *= rot;
    }

    AoaTofImage img;
    img.n_angle = grid.n_angle_bins;
    img.n_tof = grid.n_tof_bins;
    img.grid = grid;
    img.ap_index = csi.ap_index;
    img.pixels.assign(static_cast<size_t>(img.n_angle) * img.n_tof, 0.0);

    // S[a][t] = sum_k sum_m h[k][m] e^{+j 2 pi f_k tau_t} e^{+j 2 pi m d sin(theta_a) / lambda}
    // computed as (antenna sum) then (subcarrier sum).
    const double lambda = radio.wavelength_m();
    std::vector<std::complex<double>> ant(static_cast<size_t>(img.n_angle) * M);
    for (int a = 0; a < img.n_angle; ++a) {
        const double step = 2.0 * kPi * radio.antenna_spacing_m *
                            std::sin(grid.angle_center(a)) / lambda;
        for (int m = 0; m < M; ++m)
            ant[static_cast<size_t>(a) * M + m] = std::polar(1.0, step * m);
    }

    std::vector<std::complex<double>> g(static_cast<size_t>(K) * img.n_angle);
    for (int k = 0; k < K; ++k)
        for (int a = 0; a < img.n_angle; ++a) {
            std::complex<double> s{0.0, 0.0};
            for (int m = 0; m < M; ++m)
                s += h[static_cast<size_t>(k) * M + m] * ant[static_cast<size_t>(a) * M + m];
            g[static_cast<size_t>(k) * img.n_angle + a] = s;
        }

    std::vector<std::complex<double>> tph(static_cast<size_t>(K) * img.n_tof);
    for (int k = 0; k < K; ++k)
        for (int t = 0; t < img.n_tof; ++t)
            tph[static_cast<size_t>(k) * img.n_tof + t] =
                std::polar(1.0, 2.0 * kPi * freq[static_cast<size_t>(k)] * grid.tof_center(t));

    double best = 0.0;
    for (int t = 0; t < img.n_tof; ++t) {
        for (int a = 0; a < img.n_angle; ++a) {
            std::complex<double> s{0.0, 0.0};
            for (int k = 0; k < K; ++k)
                s += g[static_cast<size_t>(k) * img.n_angle + a] *
                     tph[static_cast<size_t>(k) * img.n_tof + t];
            const double p = std::abs(s);
            img.at(a, t) = p;
            best = std::max(best, p);
        }
    }

    for (auto& p : img.pixels)
        p /= best;
    return img;
}

double peak_aoa(const AoaTofImage& img) {
    if (img.pixels.empty())
        throw std::invalid_argument("empty image");
    double best = -1.0;
    int best_a = 0;
    for (int a = 0; a < img.n_angle; ++a)
        for (int t = 0; t < img.n_tof; ++t)
            if (img.at(a, t) > best) {
                best = img.at(a, t);
                best_a = a;
            }
    return img.grid.angle_center(best_a);
}

} // namespace splitloc
