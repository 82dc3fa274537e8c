#pragma once
#include <complex>
#include <string_view>
#include <vector>

#include "splitloc/geometry.hpp"
#include "splitloc/rng.hpp"

namespace splitloc {

inline constexpr double kSpeedOfLight = 299792458.0;

// Preset ids as stored in dataset headers.
inline constexpr uint32_t kPreset40MHz = 0;
inline constexpr uint32_t kPreset80MHz = 1;
inline constexpr uint32_t kPresetMixed = 2;

struct RadioConfig {
    double bandwidth_hz = 80e6;
    int n_subcarriers = 64;
    double center_freq_hz = 5.18e9;
    int n_antennas = 4;
    double antenna_spacing_m = 0.0; // 0 means lambda/2, filled by validate()

    static RadioConfig preset_80mhz();
    static RadioConfig preset_40mhz();
    static RadioConfig preset(std::string_view name);       // "40MHz" / "80MHz"
    static RadioConfig from_preset_id(uint32_t id);

    uint32_t preset_id() const; // kPreset40MHz / kPreset80MHz; throws for custom
    double wavelength_m() const { return kSpeedOfLight / center_freq_hz; }
    double subcarrier_spacing_hz() const;
    double subcarrier_freq_hz(int k) const; // absolute, k in [0, n_subcarriers)
    void validate() const;
};

struct Reflector {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0; // wall segment endpoints
    double loss_db = 6.0;                  // attenuation on top of path loss
};

struct Environment {
    std::vector<ApPose> ap_poses;
    std::vector<Reflector> reflectors;
    double xmin = 0, ymin = 0, xmax = 10, ymax = 10; // device bounds
    double snr_db = 20.0; // measured against the unattenuated direct path;
                          // +inf disables noise
    std::vector<int> nlos_ap_indices; // direct path attenuated 15 dB extra

    void validate() const;
    bool in_bounds(double x, double y) const;
    bool is_nlos(int ap_index) const;
};

// One channel snapshot at one access point: complex gain per
// (subcarrier, antenna), row-major.
struct CsiMatrix {
    int n_subcarriers = 0;
    int n_antennas = 0;
    std::vector<std::complex<double>> values;
    int ap_index = 0;
    double true_aoa_local = 0.0; // radians, direct path, [-pi/2, pi/2]
    double true_tof_s = 0.0;     // direct path propagation delay

    std::complex<double>& at(int k, int m) {
        return values[static_cast<size_t>(k) * n_antennas + m];
    }
    const std::complex<double>& at(int k, int m) const {
        return values[static_cast<size_t>(k) * n_antennas + m];
    }
};

// Ray-traced snapshot: direct path plus one specular bounce per wall that
// has a valid reflection, with circular-Gaussian noise at env.snr_db.
CsiMatrix synth_csi(const Environment& env, Vec2 device_xy, int ap_index,
                    const RadioConfig& radio, Substream noise);

// Mean received power in dB relative to unit amplitude.
double csi_rssi_db(const CsiMatrix& csi);

} // namespace splitloc
