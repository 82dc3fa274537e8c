#pragma once
#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include "splitloc/geometry.hpp"
#include "splitloc/rng.hpp"
#include "splitloc/tensor.hpp"

namespace splitloc {

using NodeId = int32_t;

// Tape-based reverse-mode graph over dense f64 tensors. Build once for a
// given batch size, then drive it for many steps: fill the input leaves,
// forward(), backward(loss), read grads off the parameter tensors.
//
// Nodes are appended in topological order by construction, so forward runs
// the tape in order and backward runs it in reverse. Shape errors are
// raised at construction time, not at run time.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) = default;
    Graph& operator=(Graph&&) = default;

    // Leaves. A parameter tensor registered twice gets the same node.
    NodeId param(Tensor& t);
    NodeId input(std::vector<int> shape);
    std::span<double> input_data(NodeId id);

    // Primitives.
    NodeId matmul(NodeId a, NodeId b);
    NodeId linear(NodeId x, NodeId w, NodeId b); // x (B,IN), w (OUT,IN), b (OUT)
    NodeId conv2d(NodeId x, NodeId w, NodeId b, int stride = 1, int pad = 0);
    NodeId relu(NodeId x);
    NodeId tanh_act(NodeId x);
    NodeId sin_elem(NodeId x);
    NodeId cos_elem(NodeId x);
    NodeId dropout(NodeId x, double p, Substream stream);
    NodeId max_pool2d(NodeId x, int k);
    NodeId flatten(NodeId x); // (N, ...) -> (N, prod)
    NodeId concat_cols(std::span<const NodeId> xs); // (B, f_i) -> (B, sum f_i)
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);
    NodeId sum(NodeId a);
    NodeId mean(NodeId a);
    // Elementwise penalty(pred - target).
    NodeId huber_elem(NodeId pred, NodeId target, double delta,
                      HuberKind kind = HuberKind::Huber);

    // Batch-mean losses over local bearings, shape (B, n_ap).
    NodeId geometric_loss_node(NodeId theta_pred, NodeId theta_gt, NodeId gt_xy,
                               std::vector<ApPose> poses, LossWeights w,
                               HuberKind kind = HuberKind::Huber);
    NodeId direct_aoa_loss_node(NodeId theta_pred, NodeId theta_gt, double delta,
                                HuberKind kind = HuberKind::Huber);

    void set_train_mode(bool on) { train_mode_ = on; }
    bool train_mode() const { return train_mode_; }

    void forward();
    // Requires a preceding forward(). Seeds d(loss)=1, sweeps the tape in
    // reverse, then writes gradients into the registered parameter tensors
    // (overwriting, not accumulating, so stale grads cannot leak between
    // steps). Parameters not reachable from the loss end up with zero grad.
    void backward(NodeId loss);

    std::span<const double> value(NodeId id) const;
    std::span<const int> shape(NodeId id) const;
    double scalar_value(NodeId id) const;
    std::span<const double> grad(NodeId id) const; // valid after backward

    // Samples whose location term was dropped for singular geometry,
    // cumulative over forward passes.
    int64_t singular_skips() const { return singular_skips_; }

    size_t node_count() const { return nodes_.size(); }

private:
    enum class Op : uint8_t {
        Param, Input, Matmul, Linear, Conv2d, Relu, Tanh, Sin, Cos, Dropout,
        MaxPool, Flatten, ConcatCols, Add, Sub, Mul, Scale, Sum, Mean,
        HuberElem, GeomLoss, DirectLoss
    };

    struct Node {
        Op op;
        std::vector<int> shape;
        std::vector<double> val;
        std::vector<double> grad;
        bool needs_grad = false;
        NodeId in0 = -1, in1 = -1, in2 = -1;
        std::vector<NodeId> ins; // concat only
        Tensor* ext = nullptr;   // param only
        int stride = 1, pad = 0, k = 0;
        double c = 0.0; // scale factor / dropout p / penalty delta
        HuberKind hkind = HuberKind::Huber;
        Substream rng;
        std::vector<uint8_t> mask;    // dropout keep mask
        std::vector<int32_t> argmax;  // max pool indices
        std::vector<double> scratch;  // conv im2col buffer
        std::vector<double> scratch2; // conv dcols buffer
        std::vector<ApPose> poses;
        LossWeights weights;
    };

    Node& node(NodeId id) { return nodes_[static_cast<size_t>(id)]; }
    const Node& node(NodeId id) const { return nodes_[static_cast<size_t>(id)]; }
    NodeId push(Node n);
    void check_id(NodeId id) const;
    void forward_node(Node& n);
    void backward_node(Node& n);
    void ensure_node_grad(Node& n);

    std::deque<Node> nodes_;
    std::vector<std::pair<Tensor*, NodeId>> param_nodes_;
    bool train_mode_ = true;
    bool forward_done_ = false;
    uint64_t forward_count_ = 0;
    int64_t singular_skips_ = 0;
};

// Convenience for the common drive cycle.
double forward_backward(Graph& g, NodeId loss);

} // namespace splitloc
