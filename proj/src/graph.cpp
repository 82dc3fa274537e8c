#include "splitloc/graph.hpp"

#include <cblas.h>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace splitloc {

namespace {

// Row-major dgemm: C = alpha * op(A) op(B) + beta * C
void mm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda,
        const double* b, int ldb, double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
                m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void im2col(const double* x, int C, int H, int W, int KH, int KW, int stride, int pad, int OH,
            int OW, double* cols) {
    for (int c = 0; c < C; ++c) {
        for (int ki = 0; ki < KH; ++ki) {
            for (int kj = 0; kj < KW; ++kj) {
                double* row = cols + ((static_cast<int64_t>(c) * KH + ki) * KW + kj) *
                                         (static_cast<int64_t>(OH) * OW);
                for (int oh = 0; oh < OH; ++oh) {
                    const int ih = oh * stride - pad + ki;
                    double* out = row + static_cast<int64_t>(oh) * OW;
                    if (ih < 0 || ih >= H) {
                        std::memset(out, 0, sizeof(double) * static_cast<size_t>(OW));
                        continue;
                    }
                    const double* src = x + (static_cast<int64_t>(c) * H + ih) * W;
                    for (int ow = 0; ow < OW; ++ow) {
                        const int iw = ow * stride - pad + kj;
                        out[ow] = (iw >= 0 && iw < W) ? src[iw] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_add(const double* cols, int C, int H, int W, int KH, int KW, int stride, int pad,
                int OH, int OW, double* gx) {
    for (int c = 0; c < C; ++c) {
        for (int ki = 0; ki < KH; ++ki) {
            for (int kj = 0; kj < KW; ++kj) {
                const double* row = cols + ((static_cast<int64_t>(c) * KH + ki) * KW + kj) *
                                               (static_cast<int64_t>(OH) * OW);
                for (int oh = 0; oh < OH; ++oh) {
                    const int ih = oh * stride - pad + ki;
                    if (ih < 0 || ih >= H)
                        continue;
                    double* dst = gx + (static_cast<int64_t>(c) * H + ih) * W;
                    const double* src = row + static_cast<int64_t>(oh) * OW;
                    for (int ow = 0; ow < OW; ++ow) {
                        const int iw = ow * stride - pad + kj;
                        if (iw >= 0 && iw < W)
                            dst[iw] += src[ow];
                    }
                }
            }
        }
    }
}

std::string two_shapes(std::span<const int> a, std::span<const int> b) {
    return shape_str(a) + " and " + shape_str(b);
}

} // namespace

NodeId Graph::push(Node n) {
    n.val.assign(static_cast<size_t>(shape_numel(n.shape)), 0.0);
    nodes_.push_back(std::move(n));
    forward_done_ = false;
    return static_cast<NodeId>(nodes_.size() - 1);
}

void Graph::check_id(NodeId id) const {
    if (id < 0 || static_cast<size_t>(id) >= nodes_.size())
        throw std::invalid_argument("node id " + std::to_string(id) + " is not in this graph");
}

NodeId Graph::param(Tensor& t) {
    for (const auto& [ptr, id] : param_nodes_)
        if (ptr == &t)
            return id;
    Node n;
    n.op = Op::Param;
    n.shape = t.shape;
    n.ext = &t;
    n.needs_grad = t.requires_grad;
    const NodeId id = push(std::move(n));
    param_nodes_.emplace_back(&t, id);
    return id;
}

NodeId Graph::input(std::vector<int> shape) {
    Node n;
    n.op = Op::Input;
    n.shape = std::move(shape);
    return push(std::move(n));
}

std::span<double> Graph::input_data(NodeId id) {
    check_id(id);
    Node& n = node(id);
    if (n.op != Op::Input)
        throw std::invalid_argument("input_data on a non-input node");
    return n.val;
}

NodeId Graph::matmul(NodeId a, NodeId b) {
    check_id(a);
    check_id(b);
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.shape.size() != 2 || nb.shape.size() != 2 || na.shape[1] != nb.shape[0])
        throw std::invalid_argument("matmul: incompatible shapes " +
                                    two_shapes(na.shape, nb.shape));
    Node n;
    n.op = Op::Matmul;
    n.shape = {na.shape[0], nb.shape[1]};
    n.in0 = a;
    n.in1 = b;
    n.needs_grad = na.needs_grad || nb.needs_grad;
    return push(std::move(n));
}

NodeId Graph::linear(NodeId x, NodeId w, NodeId b) {
    check_id(x);
    check_id(w);
    check_id(b);
    const Node& nx = node(x);
    const Node& nw = node(w);
    const Node& nb = node(b);
    if (nx.shape.size() != 2 || nw.shape.size() != 2 || nx.shape[1] != nw.shape[1])
        throw std::invalid_argument("linear: input " + shape_str(nx.shape) +
                                    " does not match weight " + shape_str(nw.shape));
    if (nb.shape.size() != 1 || nb.shape[0] != nw.shape[0])
        throw std::invalid_argument("linear: bias " + shape_str(nb.shape) +
                                    " does not match weight " + shape_str(nw.shape));
    Node n;
    n.op = Op::Linear;
    n.shape = {nx.shape[0], nw.shape[0]};
    n.in0 = x;
    n.in1 = w;
    n.in2 = b;
    n.needs_grad = nx.needs_grad || nw.needs_grad || nb.needs_grad;
    return push(std::move(n));
}

NodeId Graph::conv2d(NodeId x, NodeId w, NodeId b, int stride, int pad) {
    check_id(x);
    check_id(w);
    check_id(b);
    const Node& nx = node(x);
    const Node& nw = node(w);
    const Node& nb = node(b);
    if (nx.shape.size() != 4 || nw.shape.size() != 4)
        throw std::invalid_argument("conv2d: expects 4-d input and weight, got " +
                                    two_shapes(nx.shape, nw.shape));
    if (nx.shape[1] != nw.shape[1])
        throw std::invalid_argument("conv2d: channel mismatch between " +
                                    two_shapes(nx.shape, nw.shape));
    if (nb.shape.size() != 1 || nb.shape[0] != nw.shape[0])
        throw std::invalid_argument("conv2d: bias " + shape_str(nb.shape) +
                                    " does not match weight " + shape_str(nw.shape));
    if (stride < 1 || pad < 0)
        throw std::invalid_argument("conv2d: bad stride/pad");
    const int H = nx.shape[2], W = nx.shape[3], KH = nw.shape[2], KW = nw.shape[3];
    const int OH = (H + 2 * pad - KH) / stride + 1;
    const int OW = (W + 2 * pad - KW) / stride + 1;
    if (H + 2 * pad < KH || W + 2 * pad < KW || OH < 1 || OW < 1)
        throw std::invalid_argument("conv2d: kernel larger than padded input, " +
                                    two_shapes(nx.shape, nw.shape));
    Node n;
    n.op = Op::Conv2d;
    n.shape = {nx.shape[0], nw.shape[0], OH, OW};
    n.in0 = x;
    n.in1 = w;
    n.in2 = b;
    n.stride = stride;
    n.pad = pad;
    n.needs_grad = nx.needs_grad || nw.needs_grad || nb.needs_grad;
    const size_t ck = static_cast<size_t>(nw.shape[1]) * KH * KW;
    n.scratch.assign(ck * OH * OW, 0.0);
    return push(std::move(n));
}

NodeId Graph::relu(NodeId x) {
    check_id(x);
    Node n;
    n.op = Op::Relu;
    n.shape = node(x).shape;
    n.in0 = x;
    n.needs_grad = node(x).needs_grad;
    return push(std::move(n));
}

NodeId Graph::tanh_act(NodeId x) {
    check_id(x);
    Node n;
    n.op = Op::Tanh;
    n.shape = node(x).shape;
    n.in0 = x;
    n.needs_grad = node(x).needs_grad;
    return push(std::move(n));
}

NodeId Graph::sin_elem(NodeId x) {
    check_id(x);
    Node n;
    n.op = Op::Sin;
    n.shape = node(x).shape;
    n.in0 = x;
    n.needs_grad = node(x).needs_grad;
    return push(std::move(n));
}

NodeId Graph::cos_elem(NodeId x) {
    check_id(x);
    Node n;
    n.op = Op::Cos;
    n.shape = node(x).shape;
    n.in0 = x;
    n.needs_grad = node(x).needs_grad;
    return push(std::move(n));
}

NodeId Graph::dropout(NodeId x, double p, Substream stream) {
    check_id(x);
    if (!(p >= 0.0 && p < 1.0))
        throw std::invalid_argument("dropout: p must be in [0,1), got " + std::to_string(p));
    Node n;
    n.op = Op::Dropout;
    n.shape = node(x).shape;
    n.in0 = x;
    n.c = p;
    n.rng = stream;
    n.needs_grad = node(x).needs_grad;
    n.mask.assign(static_cast<size_t>(shape_numel(n.shape)), 1);
    return push(std::move(n));
}

NodeId Graph::max_pool2d(NodeId x, int k) {
    check_id(x);
    const Node& nx = node(x);
    if (nx.shape.size() != 4)
        throw std::invalid_argument("max_pool2d: expects 4-d input, got " + shape_str(nx.shape));
    if (k < 1 || nx.shape[2] % k != 0 || nx.shape[3] % k != 0)
        throw std::invalid_argument("max_pool2d: window " + std::to_string(k) +
                                    " does not divide " + shape_str(nx.shape));
    Node n;
    n.op = Op::MaxPool;
    n.shape = {nx.shape[0], nx.shape[1], nx.shape[2] / k, nx.shape[3] / k};
    n.in0 = x;
    n.k = k;
    n.needs_grad = nx.needs_grad;
    n.argmax.assign(static_cast<size_t>(shape_numel(n.shape)), 0);
    return push(std::move(n));
}

NodeId Graph::flatten(NodeId x) {
    check_id(x);
    const Node& nx = node(x);
    if (nx.shape.size() < 2)
        throw std::invalid_argument("flatten: expects at least 2-d input, got " +
                                    shape_str(nx.shape));
    int64_t rest = 1;
    for (size_t i = 1; i < nx.shape.size(); ++i)
        rest *= nx.shape[i];
    Node n;
    n.op = Op::Flatten;
    n.shape = {nx.shape[0], static_cast<int>(rest)};
    n.in0 = x;
    n.needs_grad = nx.needs_grad;
    return push(std::move(n));
}

NodeId Graph::concat_cols(std::span<const NodeId> xs) {
    if (xs.empty())
        throw std::invalid_argument("concat: no inputs");
    int cols = 0;
    bool needs = false;
    for (NodeId id : xs) {
        check_id(id);
        const Node& nx = node(id);
        if (nx.shape.size() != 2 || nx.shape[0] != node(xs[0]).shape[0])
            throw std::invalid_argument("concat: incompatible shapes " +
                                        two_shapes(node(xs[0]).shape, nx.shape));
        cols += nx.shape[1];
        needs = needs || nx.needs_grad;
    }
    Node n;
    n.op = Op::ConcatCols;
    n.shape = {node(xs[0]).shape[0], cols};
    n.ins.assign(xs.begin(), xs.end());
    n.needs_grad = needs;
    return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
    check_id(a);
    check_id(b);
    if (node(a).shape != node(b).shape)
        throw std::invalid_argument("add: shape mismatch " +
                                    two_shapes(node(a).shape, node(b).shape));
    Node n;
    n.op = Op::Add;
    n.shape = node(a).shape;
    n.in0 = a;
    n.in1 = b;
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
    check_id(a);
    check_id(b);
    if (node(a).shape != node(b).shape)
        throw std::invalid_argument("sub: shape mismatch " +
                                    two_shapes(node(a).shape, node(b).shape));
    Node n;
    n.op = Op::Sub;
    n.shape = node(a).shape;
    n.in0 = a;
    n.in1 = b;
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
    check_id(a);
    check_id(b);
    if (node(a).shape != node(b).shape)
        throw std::invalid_argument("mul: shape mismatch " +
                                    two_shapes(node(a).shape, node(b).shape));
    Node n;
    n.op = Op::Mul;
    n.shape = node(a).shape;
    n.in0 = a;
    n.in1 = b;
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    return push(std::move(n));
}

NodeId Graph::scale(NodeId a, double c) {
    check_id(a);
    Node n;
    n.op = Op::Scale;
    n.shape = node(a).shape;
    n.in0 = a;
    n.c = c;
    n.needs_grad = node(a).needs_grad;
    return push(std::move(n));
}

NodeId Graph::sum(NodeId a) {
    check_id(a);
    Node n;
    n.op = Op::Sum;
    n.shape = {1};
    n.in0 = a;
    n.needs_grad = node(a).needs_grad;
    return push(std::move(n));
}

NodeId Graph::mean(NodeId a) {
    check_id(a);
    Node n;
    n.op = Op::Mean;
    n.shape = {1};
    n.in0 = a;
    n.needs_grad = node(a).needs_grad;
    return push(std::move(n));
}

NodeId Graph::huber_elem(NodeId pred, NodeId target, double delta, HuberKind kind) {
    check_id(pred);
    check_id(target);
    if (node(pred).shape != node(target).shape)
        throw std::invalid_argument("huber: shape mismatch " +
                                    two_shapes(node(pred).shape, node(target).shape));
    if (kind == HuberKind::Huber && !(delta > 0.0))
        throw std::invalid_argument("huber: delta must be positive");
    Node n;
    n.op = Op::HuberElem;
    n.shape = node(pred).shape;
    n.in0 = pred;
    n.in1 = target;
    n.c = delta;
    n.hkind = kind;
    n.needs_grad = node(pred).needs_grad || node(target).needs_grad;
    return push(std::move(n));
}

NodeId Graph::geometric_loss_node(NodeId theta_pred, NodeId theta_gt, NodeId gt_xy,
                                  std::vector<ApPose> poses, LossWeights w, HuberKind kind) {
    check_id(theta_pred);
    check_id(theta_gt);
    check_id(gt_xy);
    const Node& np = node(theta_pred);
    const Node& ng = node(theta_gt);
    const Node& nx = node(gt_xy);
    if (np.shape.size() != 2 || np.shape != ng.shape)
        throw std::invalid_argument("geometric loss: bearing shapes differ, " +
                                    two_shapes(np.shape, ng.shape));
    if (static_cast<size_t>(np.shape[1]) != poses.size())
        throw std::invalid_argument("geometric loss: " + std::to_string(poses.size()) +
                                    " poses for " + std::to_string(np.shape[1]) + " bearings");
    if (nx.shape.size() != 2 || nx.shape[0] != np.shape[0] || nx.shape[1] != 2)
        throw std::invalid_argument("geometric loss: gt location shape " + shape_str(nx.shape));
    // Gradient flows into theta_pred only; targets are treated as constants.
    Node n;
    n.op = Op::GeomLoss;
    n.shape = {1};
    n.in0 = theta_pred;
    n.in1 = theta_gt;
    n.in2 = gt_xy;
    n.poses = std::move(poses);
    n.weights = w;
    n.hkind = kind;
    n.needs_grad = np.needs_grad;
    return push(std::move(n));
}

NodeId Graph::direct_aoa_loss_node(NodeId theta_pred, NodeId theta_gt, double delta,
                                   HuberKind kind) {
    check_id(theta_pred);
    check_id(theta_gt);
    const Node& np = node(theta_pred);
    const Node& ng = node(theta_gt);
    if (np.shape.size() != 2 || np.shape != ng.shape)
        throw std::invalid_argument("bearing loss: shapes differ, " +
                                    two_shapes(np.shape, ng.shape));
    Node n;
    n.op = Op::DirectLoss;
    n.shape = {1};
    n.in0 = theta_pred;
    n.in1 = theta_gt;
    n.c = delta;
    n.hkind = kind;
    n.needs_grad = np.needs_grad;
    return push(std::move(n));
}

void Graph::forward() {
    ++forward_count_;
    for (auto& n : nodes_)
        forward_node(n);
    forward_done_ = true;
}

void Graph::forward_node(Node& n) {
    switch (n.op) {
    case Op::Param:
        n.val = n.ext->data;
        break;
    case Op::Input:
        break;
    case Op::Matmul: {
        const Node& a = node(n.in0);
        const Node& b = node(n.in1);
        mm(false, false, a.shape[0], b.shape[1], a.shape[1], 1.0, a.val.data(), a.shape[1],
           b.val.data(), b.shape[1], 0.0, n.val.data(), b.shape[1]);
        break;
    }
    case Op::Linear: {
        const Node& x = node(n.in0);
        const Node& w = node(n.in1);
        const Node& b = node(n.in2);
        const int B = x.shape[0], IN = x.shape[1], OUT = w.shape[0];
        mm(false, true, B, OUT, IN, 1.0, x.val.data(), IN, w.val.data(), IN, 0.0, n.val.data(),
           OUT);
        for (int i = 0; i < B; ++i)
            for (int o = 0; o < OUT; ++o)
                n.val[static_cast<size_t>(i) * OUT + o] += b.val[static_cast<size_t>(o)];
        break;
    }
    case Op::Conv2d: {
        const Node& x = node(n.in0);
        const Node& w = node(n.in1);
        const Node& b = node(n.in2);
        const int N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
        const int OC = w.shape[0], KH = w.shape[2], KW = w.shape[3];
        const int OH = n.shape[2], OW = n.shape[3];
        const int CK = C * KH * KW, OHW = OH * OW;
        for (int s = 0; s < N; ++s) {
            const double* xp = x.val.data() + static_cast<int64_t>(s) * C * H * W;
            double* yp = n.val.data() + static_cast<int64_t>(s) * OC * OHW;
            im2col(xp, C, H, W, KH, KW, n.stride, n.pad, OH, OW, n.scratch.data());
            mm(false, false, OC, OHW, CK, 1.0, w.val.data(), CK, n.scratch.data(), OHW, 0.0, yp,
               OHW);
            for (int oc = 0; oc < OC; ++oc) {
                const double bo = b.val[static_cast<size_t>(oc)];
                double* row = yp + static_cast<int64_t>(oc) * OHW;
                for (int i = 0; i < OHW; ++i)
                    row[i] += bo;
            }
        }
        break;
    }
    case Op::Relu: {
        const Node& x = node(n.in0);
        for (size_t i = 0; i < n.val.size(); ++i)
            n.val[i] = x.val[i] > 0.0 ? x.val[i] : 0.0;
        break;
    }
    case Op::Tanh: {
        const Node& x = node(n.in0);
        for (size_t i = 0; i < n.val.size(); ++i)
            n.val[i] = std::tanh(x.val[i]);
        break;
    }
    case Op::Sin: {
        const Node& x = node(n.in0);
        for (size_t i = 0; i < n.val.size(); ++i)
            n.val[i] = std::sin(x.val[i]);
        break;
    }
    case Op::Cos: {
        const Node& x = node(n.in0);
        for (size_t i = 0; i < n.val.size(); ++i)
            n.val[i] = std::cos(x.val[i]);
        break;
    }
    case Op::Dropout: {
        const Node& x = node(n.in0);
        if (!train_mode_ || n.c == 0.0) {
            n.val = x.val;
            std::fill(n.mask.begin(), n.mask.end(), uint8_t{1});
            break;
        }
        Substream s = n.rng.fork(forward_count_);
        const double keep_scale = 1.0 / (1.0 - n.c);
        for (size_t i = 0; i < n.val.size(); ++i) {
            const bool keep = s.uniform() >= n.c;
            n.mask[i] = keep ? 1 : 0;
            n.val[i] = keep ? x.val[i] * keep_scale : 0.0;
        }
        break;
    }
    case Op::MaxPool: {
        const Node& x = node(n.in0);
        const int N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
        const int k = n.k, OH = H / k, OW = W / k;
        size_t oi = 0;
        for (int s = 0; s < N * C; ++s) {
            const double* plane = x.val.data() + static_cast<int64_t>(s) * H * W;
            for (int oh = 0; oh < OH; ++oh) {
                for (int ow = 0; ow < OW; ++ow, ++oi) {
                    double best = -1e300;
                    int besti = 0;
                    for (int di = 0; di < k; ++di) {
                        for (int dj = 0; dj < k; ++dj) {
                            const int idx = (oh * k + di) * W + ow * k + dj;
                            if (plane[idx] > best) {
                                best = plane[idx];
                                besti = idx;
                            }
                        }
                    }
                    n.val[oi] = best;
                    n.argmax[oi] = static_cast<int32_t>(s) * H * W + besti;
                }
            }
        }
        break;
    }
    case Op::Flatten: {
        n.val = node(n.in0).val;
        break;
    }
    case Op::ConcatCols: {
        const int B = n.shape[0], COLS = n.shape[1];
        int off = 0;
        for (NodeId id : n.ins) {
            const Node& x = node(id);
            const int f = x.shape[1];
            for (int i = 0; i < B; ++i)
                std::memcpy(n.val.data() + static_cast<int64_t>(i) * COLS + off,
                            x.val.data() + static_cast<int64_t>(i) * f,
                            sizeof(double) * static_cast<size_t>(f));
            off += f;
        }
        break;
    }
    case Op::Add: {
        const Node& a = node(n.in0);
        const Node& b = node(n.in1);
        for (size_t i = 0; i < n.val.size(); ++i)
            n.val[i] = a.val[i] + b.val[i];
        break;
    }
    case Op::Sub: {
        const Node& a = node(n.in0);
        const Node& b = node(n.in1);
        for (size_t i = 0; i < n.val.size(); ++i)
            n.val[i] = a.val[i] - b.val[i];
        break;
    }
    case Op::Mul: {
        const Node& a = node(n.in0);
        const Node& b = node(n.in1);
        for (size_t i = 0; i < n.val.size(); ++i)
            n.val[i] = a.val[i] * b.val[i];
        break;
    }
    case Op::Scale: {
        const Node& a = node(n.in0);
        for (size_t i = 0; i < n.val.size(); ++i)
            n.val[i] = n.c * a.val[i];
        break;
    }
    case Op::Sum: {
        const Node& a = node(n.in0);
        double s = 0.0;
        for (double v : a.val)
            s += v;
        n.val[0] = s;
        break;
    }
    case Op::Mean: {
        const Node& a = node(n.in0);
        double s = 0.0;
        for (double v : a.val)
            s += v;
        n.val[0] = a.val.empty() ? 0.0 : s / static_cast<double>(a.val.size());
        break;
    }
    case Op::HuberElem: {
        const Node& p = node(n.in0);
        const Node& t = node(n.in1);
        for (size_t i = 0; i < n.val.size(); ++i)
            n.val[i] = penalty(p.val[i] - t.val[i], n.c, n.hkind);
        break;
    }
    case Op::GeomLoss: {
        const Node& p = node(n.in0);
        const Node& t = node(n.in1);
        const Node& xy = node(n.in2);
        const int B = p.shape[0], A = p.shape[1];
        double total = 0.0;
        for (int s = 0; s < B; ++s) {
            const auto r = geometric_loss(
                std::span<const double>(p.val.data() + static_cast<int64_t>(s) * A,
                                        static_cast<size_t>(A)),
                std::span<const double>(t.val.data() + static_cast<int64_t>(s) * A,
                                        static_cast<size_t>(A)),
                n.poses, Vec2{xy.val[static_cast<size_t>(s) * 2], xy.val[static_cast<size_t>(s) * 2 + 1]},
                n.weights, n.hkind, false);
            total += r.loss;
            if (r.singular)
                ++singular_skips_;
        }
        n.val[0] = total / static_cast<double>(B);
        break;
    }
    case Op::DirectLoss: {
        const Node& p = node(n.in0);
        const Node& t = node(n.in1);
        const int B = p.shape[0], A = p.shape[1];
        double total = 0.0;
        for (int s = 0; s < B; ++s)
            total += direct_aoa_loss(
                std::span<const double>(p.val.data() + static_cast<int64_t>(s) * A,
                                        static_cast<size_t>(A)),
                std::span<const double>(t.val.data() + static_cast<int64_t>(s) * A,
                                        static_cast<size_t>(A)),
                n.c, n.hkind, nullptr);
        n.val[0] = total / static_cast<double>(B);
        break;
    }
    }
}

void Graph::ensure_node_grad(Node& n) {
    if (n.grad.size() != n.val.size())
        n.grad.assign(n.val.size(), 0.0);
}

void Graph::backward(NodeId loss) {
    check_id(loss);
    if (!forward_done_)
        throw std::logic_error("backward before forward");
    Node& ln = node(loss);
    if (ln.val.size() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(ln.shape));
    if (!ln.needs_grad)
        throw std::invalid_argument("backward: loss does not depend on any parameter");

    for (auto& n : nodes_)
        if (!n.grad.empty())
            std::fill(n.grad.begin(), n.grad.end(), 0.0);
    ensure_node_grad(ln);
    ln.grad[0] = 1.0;

    for (size_t i = nodes_.size(); i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.needs_grad || n.grad.empty())
            continue;
        backward_node(n);
    }

    // Publish into the external tensors; overwrite, never accumulate.
    for (auto& [t, id] : param_nodes_) {
        if (!t->requires_grad)
            continue;
        t->ensure_grad();
        Node& n = node(id);
        if (n.grad.empty())
            std::fill(t->grad.begin(), t->grad.end(), 0.0);
        else
            std::copy(n.grad.begin(), n.grad.end(), t->grad.begin());
    }
}

void Graph::backward_node(Node& n) {
    auto grad_into = [&](NodeId id) -> Node* {
        Node& dst = node(id);
        if (!dst.needs_grad)
            return nullptr;
        ensure_node_grad(dst);
        return &dst;
    };

    switch (n.op) {
    case Op::Param:
    case Op::Input:
        break;
    case Op::Matmul: {
        Node* ga = grad_into(n.in0);
        Node* gb = grad_into(n.in1);
        const Node& a = node(n.in0);
        const Node& b = node(n.in1);
        const int M = a.shape[0], K = a.shape[1], N = b.shape[1];
        if (ga)
            mm(false, true, M, K, N, 1.0, n.grad.data(), N, b.val.data(), N, 1.0,
               ga->grad.data(), K);
        if (gb)
            mm(true, false, K, N, M, 1.0, a.val.data(), K, n.grad.data(), N, 1.0,
               gb->grad.data(), N);
        break;
    }
    case Op::Linear: {
        Node* gx = grad_into(n.in0);
        Node* gw = grad_into(n.in1);
        Node* gb = grad_into(n.in2);
        const Node& x = node(n.in0);
        const Node& w = node(n.in1);
        const int B = x.shape[0], IN = x.shape[1], OUT = w.shape[0];
        if (gx)
            mm(false, false, B, IN, OUT, 1.0, n.grad.data(), OUT, w.val.data(), IN, 1.0,
               gx->grad.data(), IN);
        if (gw)
            mm(true, false, OUT, IN, B, 1.0, n.grad.data(), OUT, x.val.data(), IN, 1.0,
               gw->grad.data(), IN);
        if (gb)
            for (int i = 0; i < B; ++i)
                for (int o = 0; o < OUT; ++o)
                    gb->grad[static_cast<size_t>(o)] += n.grad[static_cast<size_t>(i) * OUT + o];
        break;
    }
    case Op::Conv2d: {
        Node* gx = grad_into(n.in0);
        Node* gw = grad_into(n.in1);
        Node* gb = grad_into(n.in2);
        const Node& x = node(n.in0);
        const Node& w = node(n.in1);
        const int N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
        const int OC = w.shape[0], KH = w.shape[2], KW = w.shape[3];
        const int OH = n.shape[2], OW = n.shape[3];
        const int CK = C * KH * KW, OHW = OH * OW;
        if (gx && n.scratch2.size() != n.scratch.size())
            n.scratch2.assign(n.scratch.size(), 0.0);
        for (int s = 0; s < N; ++s) {
            const double* xp = x.val.data() + static_cast<int64_t>(s) * C * H * W;
            const double* gyp = n.grad.data() + static_cast<int64_t>(s) * OC * OHW;
            if (gw) {
                im2col(xp, C, H, W, KH, KW, n.stride, n.pad, OH, OW, n.scratch.data());
                mm(false, true, OC, CK, OHW, 1.0, gyp, OHW, n.scratch.data(), OHW, 1.0,
                   gw->grad.data(), CK);
            }
            if (gx) {
                mm(true, false, CK, OHW, OC, 1.0, w.val.data(), CK, gyp, OHW, 0.0,
                   n.scratch2.data(), OHW);
                col2im_add(n.scratch2.data(), C, H, W, KH, KW, n.stride, n.pad, OH, OW,
                           gx->grad.data() + static_cast<int64_t>(s) * C * H * W);
            }
            if (gb)
                for (int oc = 0; oc < OC; ++oc) {
                    double acc = 0.0;
                    const double* row = gyp + static_cast<int64_t>(oc) * OHW;
                    for (int i = 0; i < OHW; ++i)
                        acc += row[i];
                    gb->grad[static_cast<size_t>(oc)] += acc;
                }
        }
        break;
    }
    case Op::Relu: {
        Node* gx = grad_into(n.in0);
        if (!gx)
            break;
        const Node& x = node(n.in0);
        for (size_t i = 0; i < n.grad.size(); ++i)
            if (x.val[i] > 0.0)
                gx->grad[i] += n.grad[i];
        break;
    }
    case Op::Tanh: {
        Node* gx = grad_into(n.in0);
        if (!gx)
            break;
        for (size_t i = 0; i < n.grad.size(); ++i)
            gx->grad[i] += n.grad[i] * (1.0 - n.val[i] * n.val[i]);
        break;
    }
    case Op::Sin: {
        Node* gx = grad_into(n.in0);
        if (!gx)
            break;
        const Node& x = node(n.in0);
        for (size_t i = 0; i < n.grad.size(); ++i)
            gx->grad[i] += n.grad[i] * std::cos(x.val[i]);
        break;
    }
    case Op::Cos: {
        Node* gx = grad_into(n.in0);
        if (!gx)
            break;
        const Node& x = node(n.in0);
        for (size_t i = 0; i < n.grad.size(); ++i)
            gx->grad[i] -= n.grad[i] * std::sin(x.val[i]);
        break;
    }
    case Op::Dropout: {
        Node* gx = grad_into(n.in0);
        if (!gx)
            break;
        if (!train_mode_ || n.c == 0.0) {
            for (size_t i = 0; i < n.grad.size(); ++i)
                gx->grad[i] += n.grad[i];
        } else {
            const double keep_scale = 1.0 / (1.0 - n.c);
            for (size_t i = 0; i < n.grad.size(); ++i)
                if (n.mask[i])
                    gx->grad[i] += n.grad[i] * keep_scale;
        }
        break;
    }
    case Op::MaxPool: {
        Node* gx = grad_into(n.in0);
        if (!gx)
            break;
        for (size_t i = 0; i < n.grad.size(); ++i)
            gx->grad[static_cast<size_t>(n.argmax[i])] += n.grad[i];
        break;
    }
    case Op::Flatten: {
        Node* gx = grad_into(n.in0);
        if (!gx)
            break;
        for (size_t i = 0; i < n.grad.size(); ++i)
            gx->grad[i] += n.grad[i];
        break;
    }
    case Op::ConcatCols: {
        const int B = n.shape[0], COLS = n.shape[1];
        int off = 0;
        for (NodeId id : n.ins) {
            const int f = node(id).shape[1];
            if (Node* gx = grad_into(id)) {
                for (int i = 0; i < B; ++i) {
                    const double* src = n.grad.data() + static_cast<int64_t>(i) * COLS + off;
                    double* dst = gx->grad.data() + static_cast<int64_t>(i) * f;
                    for (int j = 0; j < f; ++j)
                        dst[j] += src[j];
                }
            }
            off += f;
        }
        break;
    }
    case Op::Add: {
        if (Node* ga = grad_into(n.in0))
            for (size_t i = 0; i < n.grad.size(); ++i)
                ga->grad[i] += n.grad[i];
        if (Node* gb = grad_into(n.in1))
            for (size_t i = 0; i < n.grad.size(); ++i)
                gb->grad[i] += n.grad[i];
        break;
    }
    case Op::Sub: {
        if (Node* ga = grad_into(n.in0))
            for (size_t i = 0; i < n.grad.size(); ++i)
                ga->grad[i] += n.grad[i];
        if (Node* gb = grad_into(n.in1))
            for (size_t i = 0; i < n.grad.size(); ++i)
                gb->grad[i] -= n.grad[i];
        break;
    }
    case Op::Mul: {
        const Node& a = node(n.in0);
        const Node& b = node(n.in1);
        if (Node* ga = grad_into(n.in0))
            for (size_t i = 0; i < n.grad.size(); ++i)
                ga->grad[i] += n.grad[i] * b.val[i];
        if (Node* gb = grad_into(n.in1))
            for (size_t i = 0; i < n.grad.size(); ++i)
                gb->grad[i] += n.grad[i] * a.val[i];
        break;
    }
    case Op::Scale: {
        if (Node* ga = grad_into(n.in0))
            for (size_t i = 0; i < n.grad.size(); ++i)
                ga->grad[i] += n.c * n.grad[i];
        break;
    }
    case Op::Sum: {
        if (Node* ga = grad_into(n.in0))
            for (size_t i = 0; i < ga->grad.size(); ++i)
                ga->grad[i] += n.grad[0];
        break;
    }
    case Op::Mean: {
        if (Node* ga = grad_into(n.in0)) {
            const double g = n.grad[0] / static_cast<double>(ga->grad.size());
            for (size_t i = 0; i < ga->grad.size(); ++i)
                ga->grad[i] += g;
        }
        break;
    }
    case Op::HuberElem: {
        const Node& p = node(n.in0);
        const Node& t = node(n.in1);
        Node* gp = grad_into(n.in0);
        Node* gt = grad_into(n.in1);
        for (size_t i = 0; i < n.grad.size(); ++i) {
            const double pg = penalty_grad(p.val[i] - t.val[i], n.c, n.hkind) * n.grad[i];
            if (gp)
                gp->grad[i] += pg;
            if (gt)
                gt->grad[i] -= pg;
        }
        break;
    }
    case Op::GeomLoss: {
        Node* gp = grad_into(n.in0);
        if (!gp)
            break;
        const Node& p = node(n.in0);
        const Node& t = node(n.in1);
        const Node& xy = node(n.in2);
        const int B = p.shape[0], A = p.shape[1];
        const double g0 = n.grad[0] / static_cast<double>(B);
        for (int s = 0; s < B; ++s) {
            const auto r = geometric_loss(
                std::span<const double>(p.val.data() + static_cast<int64_t>(s) * A,
                                        static_cast<size_t>(A)),
                std::span<const double>(t.val.data() + static_cast<int64_t>(s) * A,
                                        static_cast<size_t>(A)),
                n.poses, Vec2{xy.val[static_cast<size_t>(s) * 2], xy.val[static_cast<size_t>(s) * 2 + 1]},
                n.weights, n.hkind, true);
            for (int i = 0; i < A; ++i)
                gp->grad[static_cast<size_t>(s) * A + i] += g0 * r.grad[static_cast<size_t>(i)];
        }
        break;
    }
    case Op::DirectLoss: {
        Node* gp = grad_into(n.in0);
        if (!gp)
            break;
        const Node& p = node(n.in0);
        const Node& t = node(n.in1);
        const int B = p.shape[0], A = p.shape[1];
        const double g0 = n.grad[0] / static_cast<double>(B);
        std::vector<double> g;
        for (int s = 0; s < B; ++s) {
            direct_aoa_loss(std::span<const double>(p.val.data() + static_cast<int64_t>(s) * A,
                                                    static_cast<size_t>(A)),
                            std::span<const double>(t.val.data() + static_cast<int64_t>(s) * A,
                                                    static_cast<size_t>(A)),
                            n.c, n.hkind, &g);
            for (int i = 0; i < A; ++i)
                gp->grad[static_cast<size_t>(s) * A + i] += g0 * g[static_cast<size_t>(i)];
        }
        break;
    }
    }
}

std::span<const double> Graph::value(NodeId id) const {
    check_id(id);
    return node(id).val;
}

std::span<const int> Graph::shape(NodeId id) const {
    check_id(id);
    return node(id).shape;
}

double Graph::scalar_value(NodeId id) const {
    check_id(id);
    const Node& n = node(id);
    if (n.val.size() != 1)
        throw std::invalid_argument("scalar_value on non-scalar node " + shape_str(n.shape));
    return n.val[0];
}

std::span<const double> Graph::grad(NodeId id) const {
    check_id(id);
    return node(id).grad;
}

double forward_backward(Graph& g, NodeId loss) {
    g.forward();
    g.backward(loss);
    return g.scalar_value(loss);
}

} // namespace splitloc
