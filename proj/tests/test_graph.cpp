#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "oracle_helpers.hpp"
#include "splitloc/graph.hpp"
#include "splitloc/rng.hpp"

using namespace splitloc;

namespace {

void randomize(Tensor& t, Substream& rng, double scale = 1.0) {
    for (double& v : t.data)
        v = scale * rng.normal();
}

// Check d loss / d params against central differences for every element of
// every tensor in `params`. `rebuild` must construct a fresh graph over the
// same tensors and return the loss node; it is re-run for each probe so
// graphs with internal state (dropout) are rebuilt identically.
int fd_check(const std::function<double()>& loss_value,
             const std::function<std::vector<double>()>& grads, Tensor& t,
             double h = 1e-6, double tol = 1e-4) {
    const std::vector<double> analytic = grads();
    REQUIRE(analytic.size() == t.data.size());
    int checked = 0;
    for (size_t i = 0; i < t.data.size(); ++i) {
        auto f = [&](double x) {
            const double keep = t.data[i];
            t.data[i] = x;
            const double v = loss_value();
            t.data[i] = keep;
            return v;
        };
        if (!oracle::fd_smooth(f, t.data[i], h))
            continue;
        const double fd = oracle::central_diff(f, t.data[i], h);
        CHECK(oracle::rel_err(analytic[i], fd) < tol);
        ++checked;
    }
    return checked;
}

// Naive dense conv oracle, NCHW, OIHW weights.
std::vector<double> conv_oracle(const std::vector<double>& x, int B, int C, int H, int W,
                                const std::vector<double>& w, int OC, int KH, int KW,
                                const std::vector<double>& b, int stride, int pad) {
    const int OH = (H + 2 * pad - KH) / stride + 1;
    const int OW = (W + 2 * pad - KW) / stride + 1;
    std::vector<double> y(static_cast<size_t>(B) * OC * OH * OW, 0.0);
    for (int n = 0; n < B; ++n)
        for (int oc = 0; oc < OC; ++oc)
            for (int oh = 0; oh < OH; ++oh)
                for (int ow = 0; ow < OW; ++ow) {
                    double acc = b[static_cast<size_t>(oc)];
                    for (int c = 0; c < C; ++c)
                        for (int kh = 0; kh < KH; ++kh)
                            for (int kw = 0; kw < KW; ++kw) {
                                const int ih = oh * stride + kh - pad;
                                const int iw = ow * stride + kw - pad;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W)
                                    continue;
                                acc += x[((static_cast<size_t>(n) * C + c) * H + ih) * W + iw] *
                                       w[((static_cast<size_t>(oc) * C + c) * KH + kh) * KW + kw];
                            }
                    y[((static_cast<size_t>(n) * OC + oc) * OH + oh) * OW + ow] = acc;
                }
    return y;
}

} // namespace

TEST_CASE("matmul values match hand computation") {
    Graph g;
    Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
    Tensor b = Tensor::from({3, 2}, {7, 8, 9, 10, 11, 12}, true);
    const NodeId y = g.matmul(g.param(a), g.param(b));
    g.forward();
    const auto v = g.value(y);
    // row 0: [1*7+2*9+3*11, 1*8+2*10+3*12] = [58, 64]
    CHECK(v[0] == doctest::Approx(58));
    CHECK(v[1] == doctest::Approx(64));
    CHECK(v[2] == doctest::Approx(139));
    CHECK(v[3] == doctest::Approx(154));
}

TEST_CASE("matmul and linear gradients match finite differences") {
    Substream rng(21);
    Tensor x({4, 3}, true), w({5, 3}, true), b({5}, true);
    randomize(x, rng);
    randomize(w, rng);
    randomize(b, rng, 0.1);

    Graph g;
    const NodeId loss = g.mean(g.linear(g.param(x), g.param(w), g.param(b)));
    auto value = [&] {
        g.forward();
        return g.scalar_value(loss);
    };
    for (Tensor* t : {&x, &w, &b}) {
        auto grads = [&] {
            g.forward();
            g.backward(loss);
            return t->grad;
        };
        CHECK(fd_check(value, grads, *t) > 0);
    }
}

TEST_CASE("conv2d forward matches the naive oracle") {
    Substream rng(31);
    for (const auto& [stride, pad] : {std::pair{1, 0}, {1, 1}, {2, 1}}) {
        Tensor x({2, 3, 6, 5}, true), w({4, 3, 3, 3}, true), b({4}, true);
        randomize(x, rng);
        randomize(w, rng);
        randomize(b, rng);
        Graph g;
        const NodeId y = g.conv2d(g.param(x), g.param(w), g.param(b), stride, pad);
        g.forward();
        const auto got = g.value(y);
        const auto want =
            conv_oracle(x.data, 2, 3, 6, 5, w.data, 4, 3, 3, b.data, stride, pad);
        REQUIRE(got.size() == want.size());
        for (size_t i = 0; i < want.size(); ++i)
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-9));
    }
}

TEST_CASE("conv2d gradients match finite differences") {
    Substream rng(32);
    Tensor x({2, 2, 5, 5}, true), w({3, 2, 3, 3}, true), b({3}, true);
    randomize(x, rng, 0.5);
    randomize(w, rng, 0.5);
    randomize(b, rng, 0.1);
    Graph g;
    const NodeId loss = g.mean(g.conv2d(g.param(x), g.param(w), g.param(b), 2, 1));
    auto value = [&] {
        g.forward();
        return g.scalar_value(loss);
    };
    for (Tensor* t : {&x, &w, &b}) {
        auto grads = [&] {
            g.forward();
            g.backward(loss);
            return t->grad;
        };
        CHECK(fd_check(value, grads, *t) > 0);
    }
}

TEST_CASE("elementwise activations and their gradients") {
    Substream rng(33);
    Tensor x({3, 7}, true);
    randomize(x, rng);

    SUBCASE("relu") {
        Graph g;
        const NodeId y = g.relu(g.param(x));
        const NodeId loss = g.sum(y);
        g.forward();
        for (size_t i = 0; i < x.data.size(); ++i)
            CHECK(g.value(y)[i] == doctest::Approx(std::max(0.0, x.data[i])));
        auto value = [&] {
            g.forward();
            return g.scalar_value(loss);
        };
        auto grads = [&] {
            g.forward();
            g.backward(loss);
            return x.grad;
        };
        CHECK(fd_check(value, grads, x) > 10);
    }
    SUBCASE("tanh sin cos chained") {
        Graph g;
        const NodeId p = g.param(x);
        const NodeId loss =
            g.mean(g.add(g.tanh_act(p), g.mul(g.sin_elem(p), g.cos_elem(p))));
        auto value = [&] {
            g.forward();
            return g.scalar_value(loss);
        };
        auto grads = [&] {
            g.forward();
            g.backward(loss);
            return x.grad;
        };
        CHECK(fd_check(value, grads, x) == static_cast<int>(x.data.size()));
    }
}

TEST_CASE("max_pool2d values and gradient routing") {
    Tensor x = Tensor::from({1, 1, 2, 4}, {1, 5, 2, 3, 4, 0, 7, 6}, true);
    Graph g;
    const NodeId y = g.max_pool2d(g.param(x), 2);
    const NodeId loss = g.sum(y);
    g.forward();
    REQUIRE(g.value(y).size() == 2);
    CHECK(g.value(y)[0] == 5);
    CHECK(g.value(y)[1] == 7);
    g.backward(loss);
    // only the argmax cells receive gradient
    const std::vector<double> want{0, 1, 0, 0, 0, 0, 1, 0};
    for (size_t i = 0; i < want.size(); ++i)
        CHECK(x.grad[i] == want[i]);
}

TEST_CASE("flatten and concat_cols reshape without loss") {
    Substream rng(34);
    Tensor a({2, 3, 2, 2}, true), b({2, 5}, true);
    randomize(a, rng);
    randomize(b, rng);
    Graph g;
    const NodeId fa = g.flatten(g.param(a));
    const std::vector<NodeId> parts{fa, g.param(b)};
    const NodeId cat = g.concat_cols(parts);
    g.forward();
    CHECK(g.shape(cat)[0] == 2);
    CHECK(g.shape(cat)[1] == 12 + 5);
    // row 1 of the concat starts with row 1 of flattened a
    CHECK(g.value(cat)[17 + 0] == a.data[12]);
    CHECK(g.value(cat)[17 + 12] == b.data[5]);

    const NodeId loss = g.mean(cat);
    auto value = [&] {
        g.forward();
        return g.scalar_value(loss);
    };
    for (Tensor* t : {&a, &b}) {
        auto grads = [&] {
            g.forward();
            g.backward(loss);
            return t->grad;
        };
        CHECK(fd_check(value, grads, *t) > 0);
    }
}

TEST_CASE("arithmetic ops and huber_elem gradients") {
    Substream rng(35);
    Tensor a({4, 4}, true), b({4, 4}, true);
    randomize(a, rng);
    randomize(b, rng);
    Graph g;
    const NodeId na = g.param(a), nb = g.param(b);
    const NodeId expr = g.add(g.scale(g.sub(na, nb), 0.5), g.mul(na, nb));
    const NodeId loss = g.add(g.mean(g.huber_elem(expr, nb, 0.7)), g.scale(g.sum(na), 0.01));
    auto value = [&] {
        g.forward();
        return g.scalar_value(loss);
    };
    for (Tensor* t : {&a, &b}) {
        auto grads = [&] {
            g.forward();
            g.backward(loss);
            return t->grad;
        };
        CHECK(fd_check(value, grads, *t) > 8);
    }
}

TEST_CASE("dropout zeroes in train mode and passes through in eval") {
    Tensor x({1, 1000}, true);
    for (auto& v : x.data)
        v = 1.0;
    Graph g;
    const NodeId y = g.dropout(g.param(x), 0.25, Substream(77));
    g.set_train_mode(true);
    g.forward();
    int zeros = 0;
    double sum = 0;
    for (double v : g.value(y)) {
        if (v == 0.0)
            ++zeros;
        else
            CHECK(v == doctest::Approx(1.0 / 0.75));
        sum += v;
    }
    CHECK(zeros > 180);
    CHECK(zeros < 320);
    CHECK(sum / 1000.0 == doctest::Approx(1.0).epsilon(0.1));

    // masks are refreshed between forward passes
    g.forward();
    int zeros2 = 0;
    for (double v : g.value(y))
        if (v == 0.0)
            ++zeros2;
    CHECK(zeros2 > 180);

    g.set_train_mode(false);
    g.forward();
    for (double v : g.value(y))
        CHECK(v == 1.0);
}

TEST_CASE("loss nodes match the standalone implementations") {
    constexpr double kPi = std::numbers::pi;
    const std::vector<ApPose> poses{{-0.2, 6.0, 0.0}, {10.2, 6.0, kPi}, {5.0, -0.2, kPi / 2}};
    Substream rng(36);
    const int B = 4, n_ap = 3;

    Tensor pred({B, n_ap}, true);
    std::vector<double> gt(static_cast<size_t>(B) * n_ap);
    std::vector<double> xy(static_cast<size_t>(B) * 2);
    for (auto& v : gt)
        v = rng.uniform(-1.2, 1.2);
    for (size_t i = 0; i < pred.data.size(); ++i)
        pred.data[i] = gt[i] + 0.3 * rng.normal();
    for (int s = 0; s < B; ++s) {
        xy[2 * s] = rng.uniform(1.0, 9.0);
        xy[2 * s + 1] = rng.uniform(1.0, 11.0);
    }
    LossWeights w;

    SUBCASE("geometric") {
        Graph g;
        const NodeId p = g.param(pred);
        const NodeId tgt = g.input({B, n_ap});
        const NodeId pos = g.input({B, 2});
        std::copy(gt.begin(), gt.end(), g.input_data(tgt).begin());
        std::copy(xy.begin(), xy.end(), g.input_data(pos).begin());
        const NodeId loss = g.geometric_loss_node(p, tgt, pos, poses, w);
        g.forward();

        double want = 0;
        for (int s = 0; s < B; ++s) {
            std::span<const double> ps(&pred.data[static_cast<size_t>(s) * n_ap], n_ap);
            std::span<const double> gs(&gt[static_cast<size_t>(s) * n_ap], n_ap);
            want += geometric_loss(ps, gs, poses, Vec2{xy[2 * s], xy[2 * s + 1]}, w).loss;
        }
        want /= B;
        CHECK(g.scalar_value(loss) == doctest::Approx(want).epsilon(1e-12));

        auto value = [&] {
            g.forward();
            return g.scalar_value(loss);
        };
        auto grads = [&] {
            g.forward();
            g.backward(loss);
            return pred.grad;
        };
        CHECK(fd_check(value, grads, pred) > 8);
    }
    SUBCASE("direct") {
        Graph g;
        const NodeId p = g.param(pred);
        const NodeId tgt = g.input({B, n_ap});
        std::copy(gt.begin(), gt.end(), g.input_data(tgt).begin());
        const NodeId loss = g.direct_aoa_loss_node(p, tgt, 0.5);
        g.forward();
        double want = 0;
        for (int s = 0; s < B; ++s) {
            std::span<const double> ps(&pred.data[static_cast<size_t>(s) * n_ap], n_ap);
            std::span<const double> gs(&gt[static_cast<size_t>(s) * n_ap], n_ap);
            want += direct_aoa_loss(ps, gs, 0.5);
        }
        want /= B;
        CHECK(g.scalar_value(loss) == doctest::Approx(want).epsilon(1e-12));

        auto value = [&] {
            g.forward();
            return g.scalar_value(loss);
        };
        auto grads = [&] {
            g.forward();
            g.backward(loss);
            return pred.grad;
        };
        CHECK(fd_check(value, grads, pred) > 8);
    }
}

TEST_CASE("construction-time shape errors name both shapes") {
    Graph g;
    Tensor a({2, 3}, true), b({4, 2}, true);
    const NodeId na = g.param(a), nb = g.param(b);
    try {
        (void)g.matmul(na, nb);
        FAIL("expected a throw");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("2") != std::string::npos);
        CHECK(msg.find("3") != std::string::npos);
        CHECK(msg.find("4") != std::string::npos);
    }
    Tensor x4({1, 2, 5, 5}, true), w4({3, 9, 3, 3}, true), bias({3}, true);
    CHECK_THROWS_AS(g.conv2d(g.param(x4), g.param(w4), g.param(bias)),
                    std::invalid_argument);
    CHECK_THROWS_AS(g.add(na, nb), std::invalid_argument);
    CHECK_THROWS_AS(g.max_pool2d(na, 2), std::invalid_argument);
}

TEST_CASE("params unreachable from the loss get zero grads") {
    Tensor a({2}, true), b({2}, true);
    a.data = {1, 2};
    b.data = {3, 4};
    Graph g;
    const NodeId na = g.param(a);
    (void)g.param(b); // registered but unused by the loss
    const NodeId loss = g.sum(na);
    g.forward();
    g.backward(loss);
    REQUIRE(b.grad.size() == 2);
    CHECK(b.grad[0] == 0.0);
    CHECK(b.grad[1] == 0.0);
    CHECK(a.grad[0] == 1.0);
}

TEST_CASE("backward overwrites stale grads instead of accumulating") {
    Tensor a({2}, true);
    a.data = {1, 2};
    Graph g;
    const NodeId loss = g.sum(g.scale(g.param(a), 3.0));
    g.forward();
    g.backward(loss);
    CHECK(a.grad[0] == 3.0);
    g.forward();
    g.backward(loss);
    CHECK(a.grad[0] == 3.0); // not 6.0
}
