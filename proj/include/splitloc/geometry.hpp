#pragma once
#include <span>
#include <stdexcept>
#include <vector>

namespace splitloc {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

// Access point pose in the global frame. orientation_phi is the direction
// the array broadside faces; a local bearing of 0 means "straight ahead".
struct ApPose {
    double x = 0.0;
    double y = 0.0;
    double orientation_phi = 0.0;
};

struct SingularGeometry : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Wrap into (-pi, pi].
double wrap_angle(double a);

double to_global_frame(double theta_local, const ApPose& pose);

enum class HuberKind { Huber, Mse, L1 };

HuberKind huber_kind_from_name(std::string_view name);
const char* huber_kind_name(HuberKind k);

// Penalty on a residual; Huber is quadratic inside +-delta, linear outside,
// continuous in value and first derivative at the switch.
double penalty(double err, double delta, HuberKind kind);
double penalty_grad(double err, double delta, HuberKind kind); // d penalty / d err
double huber(double pred, double target, double delta);

struct LossWeights {
    double lambda1 = 1.0; // cos term
    double lambda2 = 1.0; // sin term
    double lambda3 = 0.1; // location term
    double delta1 = 0.5;
    double delta2 = 1.0;
    double delta3 = 2.0;
};

struct Triangulation {
    Vec2 point;
    double condition = 0.0; // of the 2x2 normal matrix
    double det = 0.0;
};

// Least-squares intersection of bearing rays (angles are global, radians).
// Throws SingularGeometry when the normal matrix determinant is < 1e-12,
// i.e. the rays are parallel or nearly so.
Triangulation triangulate(std::span<const double> angles_global,
                          std::span<const ApPose> poses);

// Non-throwing variant; returns false instead of throwing.
bool try_triangulate(std::span<const double> angles_global,
                     std::span<const ApPose> poses, Triangulation& out);

// d(estimate)/d(angle i), chained with an upstream gradient at the point.
// Returns d(upstream . X)/d(theta_i) for every i.
std::vector<double> triangulate_backward(std::span<const double> angles_global,
                                         std::span<const ApPose> poses,
                                         const Triangulation& tri, Vec2 upstream);

struct GeomLossResult {
    double loss = 0.0;
    bool singular = false; // location term was skipped
    Vec2 triangulated;     // valid when !singular
    std::vector<double> grad; // d loss / d theta_pred[i]; filled when want_grad
};

// Combined objective for one sample: penalties on cos/sin of the local
// bearings plus a penalty on the triangulated location against gt_xy.
// theta_* are local bearings per access point, radians.
GeomLossResult geometric_loss(std::span<const double> theta_pred,
                              std::span<const double> theta_gt,
                              std::span<const ApPose> poses, Vec2 gt_xy,
                              const LossWeights& w,
                              HuberKind kind = HuberKind::Huber,
                              bool want_grad = false);

// Baseline objective: penalty directly on the angle residuals.
double direct_aoa_loss(std::span<const double> theta_pred,
                       std::span<const double> theta_gt, double delta,
                       HuberKind kind = HuberKind::Huber,
                       std::vector<double>* grad = nullptr);

} // namespace splitloc
