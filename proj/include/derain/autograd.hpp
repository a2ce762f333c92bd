#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "derain/losses.hpp"
#include "derain/tensor.hpp"

namespace derain::ag {

struct Node {
    Tensor value;
    Tensor grad; // allocated on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    /// Zero-initialised gradient buffer shaped like value.
    Tensor& grad_buffer();
};

/// Handle to a graph node. Copies share the node.
class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }
    bool has_grad() const { return !node_->grad.empty(); }
    const Tensor& grad() const { return node_->grad; }
    void zero_grad() { node_->grad = Tensor(); }
    /// Scalar value of a one-element node.
    float item() const;

    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& shared() const { return node_; }
    explicit operator bool() const { return static_cast<bool>(node_); }

private:
    std::shared_ptr<Node> node_;
};

/// Disables graph construction on this thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

/// Reverse pass from a one-element root, accumulating into every reachable
/// node that requires gradients.
void backward(const Var& root);

/// Leaf nodes reachable from root that require gradients (parameters).
std::vector<const Node*> collect_leaves(const Var& root);

/// Builds a result node; parents and closure are only kept when some parent
/// requires gradients.
Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward);

Var detach(const Var& x);

// Elementwise and structural ops.
Var relu(const Var& x);
Var leaky_relu(const Var& x, float slope);
Var sigmoid(const Var& x);
Var hard_sigmoid(const Var& x);
Var add(const Var& a, const Var& b);
Var concat_channels(const Var& a, const Var& b);
Var slice_channels(const Var& x, int begin, int count);
Var reflect_pad(const Var& x, int pad);
Var instance_norm(const Var& x, float eps = 1e-5f);
/// (1 - mask) * background + mask * raindrop with a 1-channel mask.
Var compose(const Var& background, const Var& raindrop, const Var& mask);

// Convolutions. Weights: conv [out, in, k, k]; transposed [in, out, k, k].
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad,
                     int output_pad);

// Scalar-valued losses (1x1x1x1 results).
Var mean_abs_diff(const Var& a, const Var& b);
Var mean_abs(const Var& x);
Var adversarial_d_loss(const Var& real_scores, const Var& fake_scores, AdversarialMode mode);
Var adversarial_g_loss(const Var& fake_scores, AdversarialMode mode);
/// sum_i weights[i] * terms[i]; zero-weight terms are dropped from the graph.
Var weighted_sum(std::span<const Var> terms, std::span<const double> weights);

} // namespace derain::ag
