#pragma once
#include <vector>

#include "splitloc/channel.hpp"

namespace splitloc {

// Images from any bandwidth are reduced to this many subcarriers before
// imaging, so they all live on the same grid.
inline constexpr int kCanonicalSubcarriers = 32;

struct ImageGrid {
    int n_angle_bins = 64;
    int n_tof_bins = 64;
    double angle_min = -1.5707963267948966; // -pi/2
    double angle_max = 1.5707963267948966;
    double tof_min = 0.0;
    double tof_max = 200e-9;

    static ImageGrid default_grid() { return ImageGrid{}; }

    double angle_center(int a) const;
    double tof_center(int t) const;
    void validate() const;
};

struct AoaTofImage {
    int n_angle = 0;
    int n_tof = 0;
    std::vector<double> pixels; // row-major (angle, tof), max-normalized to 1
    ImageGrid grid;
    int ap_index = 0;

    double& at(int a, int t) { return pixels[static_cast<size_t>(a) * n_tof + t]; }
    double at(int a, int t) const { return pixels[static_cast<size_t>(a) * n_tof + t]; }
};

// Matched-filter power image over (bearing, relative time of flight).
// The unknown capture time offset is removed by fitting and subtracting a
// linear phase ramp across subcarriers, so the strongest path lands near
// tof 0 and everything later is relative to it.
AoaTofImage aoa_tof_image(const CsiMatrix& csi, const RadioConfig& radio,
                          const ImageGrid& grid);

// Bearing of the strongest pixel; ties resolve to the lower angle bin.
double peak_aoa(const AoaTofImage& img);

} // namespace splitloc
