#include "splitloc/geometry.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace splitloc {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kDetEps = 1e-12;
} // namespace

double wrap_angle(double a) {
    double w = std::atan2(std::sin(a), std::cos(a)); // [-pi, pi]
    if (w <= -kPi)
        w = kPi;
    return w;
}

double to_global_frame(double theta_local, const ApPose& pose) {
    return wrap_angle(theta_local + pose.orientation_phi);
}

HuberKind huber_kind_from_name(std::string_view name) {
    if (name == "huber")
        return HuberKind::Huber;
    if (name == "mse")
        return HuberKind::Mse;
    if (name == "l1")
        return HuberKind::L1;
    throw std::invalid_argument("unknown penalty kind: " + std::string(name));
}

const char* huber_kind_name(HuberKind k) {
    switch (k) {
    case HuberKind::Huber: return "huber";
    case HuberKind::Mse: return "mse";
    case HuberKind::L1: return "l1";
    }
    return "?";
}

double penalty(double err, double delta, HuberKind kind) {
    switch (kind) {
    case HuberKind::Mse:
        return 0.5 * err * err;
    case HuberKind::L1:
        return std::abs(err);
    case HuberKind::Huber:
        break;
    }
    const double a = std::abs(err);
    if (a <= delta)
        return 0.5 * err * err;
    return delta * (a - 0.5 * delta);
}

double penalty_grad(double err, double delta, HuberKind kind) {
    switch (kind) {
    case HuberKind::Mse:
        return err;
    case HuberKind::L1:
        return err > 0.0 ? 1.0 : (err < 0.0 ? -1.0 : 0.0);
    case HuberKind::Huber:
        break;
    }
    if (std::abs(err) <= delta)
        return err;
    return err > 0.0 ? delta : -delta;
}

double huber(double pred, double target, double delta) {
    return penalty(pred - target, delta, HuberKind::Huber);
}

namespace {

struct Normal2x2 {
    double s11 = 0, s12 = 0, s22 = 0; // symmetric system matrix
    double r1 = 0, r2 = 0;            // right-hand side
};

Normal2x2 build_normal(std::span<const double> angles, std::span<const ApPose> poses) {
    Normal2x2 n;
    for (size_t i = 0; i < angles.size(); ++i) {
        const double a = std::cos(angles[i]);
        const double b = std::sin(angles[i]);
        const double xi = poses[i].x;
        const double yi = poses[i].y;
        n.s11 += 1.0 - a * a;
        n.s12 += -a * b;
        n.s22 += 1.0 - b * b;
        n.r1 += (1.0 - a * a) * xi - a * b * yi;
        n.r2 += (1.0 - b * b) * yi - a * b * xi;
    }
    return n;
}

} // namespace

bool try_triangulate(std::span<const double> angles_global, std::span<const ApPose> poses,
                     Triangulation& out) {
    if (angles_global.size() != poses.size())
        throw std::invalid_argument("bearing count " + std::to_string(angles_global.size()) +
                                    " does not match pose count " + std::to_string(poses.size()));
    if (angles_global.size() < 2)
        throw std::invalid_argument("triangulation needs at least two bearings, got " +
                                    std::to_string(angles_global.size()));
    const Normal2x2 n = build_normal(angles_global, poses);
    const double det = n.s11 * n.s22 - n.s12 * n.s12;
    out.det = det;
    if (!(det >= kDetEps))
        return false;
    out.point.x = (n.s22 * n.r1 - n.s12 * n.r2) / det;
    out.point.y = (n.s11 * n.r2 - n.s12 * n.r1) / det;
    const double tr = n.s11 + n.s22;
    const double disc = std::sqrt(std::max(0.0, (n.s11 - n.s22) * (n.s11 - n.s22) +
                                                    4.0 * n.s12 * n.s12));
    const double lmax = 0.5 * (tr + disc);
    const double lmin = 0.5 * (tr - disc);
    out.condition = lmax / std::max(lmin, 1e-300);
    return true;
}

Triangulation triangulate(std::span<const double> angles_global,
                          std::span<const ApPose> poses) {
    Triangulation t;
    if (!try_triangulate(angles_global, poses, t))
        throw SingularGeometry("bearing rays are (near-)parallel, normal matrix determinant " +
                               std::to_string(t.det));
    return t;
}

std::vector<double> triangulate_backward(std::span<const double> angles_global,
                                         std::span<const ApPose> poses,
                                         const Triangulation& tri, Vec2 upstream) {
    const Normal2x2 n = build_normal(angles_global, poses);
    const double det = n.s11 * n.s22 - n.s12 * n.s12;
    // A^-1 rows
    const double i11 = n.s22 / det, i12 = -n.s12 / det, i22 = n.s11 / det;
    const double X = tri.point.x, Y = tri.point.y;

    std::vector<double> g(angles_global.size(), 0.0);
    for (size_t i = 0; i < angles_global.size(); ++i) {
        const double a = std::cos(angles_global[i]);
        const double b = std::sin(angles_global[i]);
        const double xi = poses[i].x;
        const double yi = poses[i].y;
        // Derivatives w.r.t. theta_i of the normal system (a' = -b, b' = a).
        const double dA11 = 2.0 * a * b;
        const double dA12 = b * b - a * a;
        const double dA22 = -2.0 * a * b;
        const double db1 = 2.0 * a * b * xi - (a * a - b * b) * yi;
        const double db2 = -2.0 * a * b * yi - (a * a - b * b) * xi;
        // t = db - dA * X
        const double t1 = db1 - (dA11 * X + dA12 * Y);
        const double t2 = db2 - (dA12 * X + dA22 * Y);
        // dX/dtheta_i = A^-1 t
        const double dx = i11 * t1 + i12 * t2;
        const double dy = i12 * t1 + i22 * t2;
        g[i] = upstream.x * dx + upstream.y * dy;
    }
    return g;
}

GeomLossResult geometric_loss(std::span<const double> theta_pred,
                              std::span<const double> theta_gt,
                              std::span<const ApPose> poses, Vec2 gt_xy, const LossWeights& w,
                              HuberKind kind, bool want_grad) {
    if (theta_pred.size() != theta_gt.size() || theta_pred.size() != poses.size())
        throw std::invalid_argument("geometric_loss: mismatched sizes");
    const size_t n = theta_pred.size();

    GeomLossResult out;
    if (want_grad)
        out.grad.assign(n, 0.0);

    std::vector<double> global(n);
    for (size_t i = 0; i < n; ++i) {
        const double ec = std::cos(theta_pred[i]) - std::cos(theta_gt[i]);
        const double es = std::sin(theta_pred[i]) - std::sin(theta_gt[i]);
        out.loss += w.lambda1 * penalty(ec, w.delta1, kind);
        out.loss += w.lambda2 * penalty(es, w.delta2, kind);
        if (want_grad) {
            out.grad[i] += w.lambda1 * penalty_grad(ec, w.delta1, kind) * (-std::sin(theta_pred[i]));
            out.grad[i] += w.lambda2 * penalty_grad(es, w.delta2, kind) * std::cos(theta_pred[i]);
        }
        global[i] = theta_pred[i] + poses[i].orientation_phi;
    }

    Triangulation tri;
    if (try_triangulate(global, poses, tri)) {
        out.triangulated = tri.point;
        const double ex = tri.point.x - gt_xy.x;
        const double ey = tri.point.y - gt_xy.y;
        out.loss += w.lambda3 * (penalty(ex, w.delta3, kind) + penalty(ey, w.delta3, kind));
        if (want_grad) {
            const Vec2 up{w.lambda3 * penalty_grad(ex, w.delta3, kind),
                          w.lambda3 * penalty_grad(ey, w.delta3, kind)};
            const auto tg = triangulate_backward(global, poses, tri, up);
            for (size_t i = 0; i < n; ++i)
                out.grad[i] += tg[i];
        }
    } else {
        out.singular = true; // location term dropped for this sample
    }
    return out;
}

double direct_aoa_loss(std::span<const double> theta_pred, std::span<const double> theta_gt,
                       double delta, HuberKind kind, std::vector<double>* grad) {
    if (theta_pred.size() != theta_gt.size())
        throw std::invalid_argument("direct_aoa_loss: mismatched sizes");
    double loss = 0.0;
    if (grad)
        grad->assign(theta_pred.size(), 0.0);
    for (size_t i = 0; i < theta_pred.size(); ++i) {
        const double e = theta_pred[i] - theta_gt[i];
        loss += penalty(e, delta, kind);
        if (grad)
            (*grad)[i] = penalty_grad(e, delta, kind);
    }
    return loss;
}

} // namespace splitloc
