#include "splitloc/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace splitloc {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kMinDeviceApDist = 0.01;
constexpr double kNlosExtraLossDb = 15.0;

double db_to_amp(double db) { return std::pow(10.0, db / 20.0); }
} // namespace

RadioConfig RadioConfig::preset_80mhz() {
    RadioConfig r;
    r.bandwidth_hz = 80e6;
    r.n_subcarriers = 64;
    r.center_freq_hz = 5.18e9;
    r.n_antennas = 4;
    r.antenna_spacing_m = 0.5 * r.wavelength_m();
    return r;
}

RadioConfig RadioConfig::preset_40mhz() {
    RadioConfig r = preset_80mhz();
    r.bandwidth_hz = 40e6;
    r.n_subcarriers = 32;
    return r;
}

RadioConfig RadioConfig::preset(std::string_view name) {
    if (name == "80MHz" || name == "80mhz" || name == "80")
        return preset_80mhz();
    if (name == "40MHz" || name == "40mhz" || name == "40")
        return preset_40mhz();
    throw std::invalid_argument("unknown radio preset: " + std::string(name));
}

RadioConfig RadioConfig::from_preset_id(uint32_t id) {
    if (id == kPreset40MHz)
        return preset_40mhz();
    if (id == kPreset80MHz)
        return preset_80mhz();
    throw std::invalid_argument("radio preset id " + std::to_string(id) +
                                " does not name a single preset");
}

uint32_t RadioConfig::preset_id() const {
    if (bandwidth_hz == 40e6 && n_subcarriers == 32)
        return kPreset40MHz;
    if (bandwidth_hz == 80e6 && n_subcarriers == 64)
        return kPreset80MHz;
    throw std::invalid_argument("radio config does not match a named preset");
}

double RadioConfig::subcarrier_spacing_hz() const {
    return bandwidth_hz / n_subcarriers;
}

double RadioConfig::subcarrier_freq_hz(int k) const {
    // k-th tone of a comb spanning [fc - BW/2, fc + BW/2)
    return center_freq_hz - bandwidth_hz / 2.0 + k * subcarrier_spacing_hz();
}

void RadioConfig::validate() const {
    if (bandwidth_hz <= 0 || center_freq_hz <= 0)
        throw std::invalid_argument("radio: bandwidth and carrier must be positive");
    if (n_subcarriers < 2)
        throw std::invalid_argument("radio: need at least 2 subcarriers");
    if (n_antennas < 2)
        throw std::invalid_argument("radio: need at least 2 antennas");
    if (antenna_spacing_m <= 0)
        throw std::invalid_argument("radio: antenna spacing must be set");
    if (antenna_spacing_m > 0.5 * wavelength_m() * (1.0 + 1e-9))
        throw std::invalid_argument("radio: antenna spacing above half wavelength aliases");
}

void Environment::validate() const {
    if (ap_poses.size() < 2)
        throw std::invalid_argument("environment: need at least 2 access points");
    if (!(xmax > xmin) || !(ymax > ymin))
        throw std::invalid_argument("environment: empty bounds rectangle");
    for (int i : nlos_ap_indices)
        if (i < 0 || static_cast<size_t>(i) >= ap_poses.size())
            throw std::invalid_argument("environment: nlos index " + std::to_string(i) +
                                        " out of range");
    for (const auto& r : reflectors)
        if (r.x1 == r.x2 && r.y1 == r.y2)
            throw std::invalid_argument("environment: zero-length reflector");
}

bool Environment::in_bounds(double x, double y) const {
    return x >= xmin && x <= xmax && y >= ymin && y <= ymax;
}

bool Environment::is_nlos(int ap_index) const {
    return std::find(nlos_ap_indices.begin(), nlos_ap_indices.end(), ap_index) !=
           nlos_ap_indices.end();
}

namespace {

struct Path {
    double amp;
    double tau;         // seconds
    double sin_theta;   // of arrival direction in the array's local frame
};

// Mirror p across the infinite line through (a, b).
Vec2 mirror_point(Vec2 p, Vec2 a, Vec2 b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    const double t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2;
    const Vec2 foot{a.x + t * dx, a.y + t * dy};
    return Vec2{2 * foot.x - p.x, 2 * foot.y - p.y};
}

double side_of(Vec2 p, Vec2 a, Vec2 b) {
    return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
}

// Does the open segment p1-p2 cross the closed segment a-b?
bool segments_cross(Vec2 p1, Vec2 p2, Vec2 a, Vec2 b) {
    const double d1 = side_of(a, p1, p2);
    const double d2 = side_of(b, p1, p2);
    const double d3 = side_of(p1, a, b);
    const double d4 = side_of(p2, a, b);
    return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
}

} // namespace

CsiMatrix synth_csi(const Environment& env, Vec2 device_xy, int ap_index,
                    const RadioConfig& radio, Substream noise) {
    env.validate();
    radio.validate();
    if (ap_index < 0 || static_cast<size_t>(ap_index) >= env.ap_poses.size())
        throw std::invalid_argument("ap index " + std::to_string(ap_index) + " out of range");
    const ApPose& ap = env.ap_poses[static_cast<size_t>(ap_index)];

    const double ddx = device_xy.x - ap.x;
    const double ddy = device_xy.y - ap.y;
    const double dist = std::hypot(ddx, ddy);
    if (dist < kMinDeviceApDist)
        throw std::invalid_argument("device coincides with access point " +
                                    std::to_string(ap_index));

    const double bearing = std::atan2(ddy, ddx);
    const double theta_local = wrap_angle(bearing - ap.orientation_phi);
    if (std::abs(theta_local) > kPi / 2 + 1e-9)
        throw std::invalid_argument("device is behind the array of access point " +
                                    std::to_string(ap_index));

    std::vector<Path> paths;
    {
        double amp = 1.0 / dist;
        if (env.is_nlos(ap_index))
            amp /= db_to_amp(kNlosExtraLossDb);
        paths.push_back(Path{amp, dist / kSpeedOfLight, std::sin(theta_local)});
    }

    const Vec2 appt{ap.x, ap.y};
    for (const auto& wall : env.reflectors) {
        const Vec2 w1{wall.x1, wall.y1}, w2{wall.x2, wall.y2};
        // Specular bounce exists when device and array sit on the same side
        // and the mirrored ray actually crosses the wall segment.
        const double sd = side_of(device_xy, w1, w2);
        const double sa = side_of(appt, w1, w2);
        if (sd == 0.0 || sa == 0.0 || (sd > 0) != (sa > 0))
            continue;
        const Vec2 img = mirror_point(device_xy, w1, w2);
        if (!segments_cross(appt, img, w1, w2))
            continue;
        const double plen = std::hypot(img.x - ap.x, img.y - ap.y);
        if (plen < kMinDeviceApDist)
            continue;
        const double rb = std::atan2(img.y - ap.y, img.x - ap.x);
        const double rtheta = wrap_angle(rb - ap.orientation_phi);
        paths.push_back(Path{db_to_amp(-wall.loss_db) / plen, plen / kSpeedOfLight,
                             std::sin(rtheta)});
    }

    CsiMatrix csi;
    csi.n_subcarriers = radio.n_subcarriers;
    csi.n_antennas = radio.n_antennas;
    csi.ap_index = ap_index;
    csi.true_aoa_local = theta_local;
    csi.true_tof_s = dist / kSpeedOfLight;
    csi.values.assign(static_cast<size_t>(radio.n_subcarriers) * radio.n_antennas, {0.0, 0.0});

    const double lambda = radio.wavelength_m();
    for (int k = 0; k < radio.n_subcarriers; ++k) {
        const double fk = radio.subcarrier_freq_hz(k);
        for (const auto& p : paths) {
            const std::complex<double> tof_ph = std::polar(p.amp, -2.0 * kPi * fk * p.tau);
            const double ant_step = -2.0 * kPi * radio.antenna_spacing_m * p.sin_theta / lambda;
            for (int m = 0; m < radio.n_antennas; ++m)
                csi.at(k, m) += tof_ph * std::polar(1.0, ant_step * m);
        }
    }

    if (std::isfinite(env.snr_db)) {
        // Noise floor is set against the unattenuated direct path, so NLOS
        // links really are buried deeper in it.
        const double sig_amp = 1.0 / dist;
        const double sigma =
            sig_amp / std::pow(10.0, env.snr_db / 20.0) / std::sqrt(2.0);
        for (int k = 0; k < radio.n_subcarriers; ++k)
            for (int m = 0; m < radio.n_antennas; ++m)
                csi.at(k, m) += std::complex<double>(sigma * noise.normal(),
                                                     sigma * noise.normal());
    }
    return csi;
}

double csi_rssi_db(const CsiMatrix& csi) {
    double p = 0.0;
    for (const auto& v : csi.values)
        p += std::norm(v);
    p /= static_cast<double>(csi.values.size());
    return 10.0 * std::log10(std::max(p, 1e-30));
}

} // namespace splitloc
