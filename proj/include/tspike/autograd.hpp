#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tspike/tensor.hpp"

namespace tspike {

using ValueId = int32_t;

/// Named trainable tensor plus its gradient accumulator.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string name_, Tensor value_)
        : name(std::move(name_)), grad(Tensor::zeros(value_.shape())) {
        value = std::move(value_);
    }

    void zero_grad() {
        std::fill(grad.vec().begin(), grad.vec().end(), 0.0f);
    }
};

/// Dynamic reverse-mode tape. One forward pass records values and per-op
/// gradient rules; backward() walks the records in reverse exactly once and
/// accumulates into every watched Parameter. BPTT falls out for free: the
/// timestep loop just keeps recording onto the same tape.
class GradTape {
public:
    GradTape() = default;
    GradTape(const GradTape&) = delete;
    GradTape& operator=(const GradTape&) = delete;

    /// Leaf holding a constant; no gradient is propagated into it.
    ValueId constant(Tensor v);

    /// Leaf aliasing a Parameter; backward() accumulates into p.grad.
    /// The parameter must outlive the tape.
    ValueId watch(Parameter& p);

    const Tensor& value(ValueId id) const { return values_[static_cast<size_t>(id)]; }
    bool requires_grad(ValueId id) const { return requires_grad_[static_cast<size_t>(id)]; }

    /// Gradient of the last backward() w.r.t. an intermediate value.
    const Tensor& grad(ValueId id) const;

    /// Record a custom node. `backward` receives the tape and the id of the
    /// node's own output; it reads grad_out(out) and accumulates into the
    /// inputs it captured. The rule is dropped when no input needs gradients.
    ValueId emit(Tensor out, const std::vector<ValueId>& inputs,
                 std::function<void(GradTape&, ValueId)> backward);

    /// Run reverse-mode accumulation from a scalar loss. Consumes the tape:
    /// a second call is a contract error.
    void backward(ValueId loss);

    // -- helpers for backward rules ------------------------------------
    const Tensor& grad_out(ValueId id) const { return grads_[static_cast<size_t>(id)]; }
    void accumulate_grad(ValueId id, const Tensor& g);
    /// Accumulate via callback writing directly into the grad buffer.
    Tensor& grad_buffer(ValueId id);

    size_t num_nodes() const { return nodes_.size(); }
    size_t num_values() const { return values_.size(); }

private:
    struct Node {
        std::function<void(GradTape&, ValueId)> backward;
    };

    ValueId push_value(Tensor v, bool req);

    std::vector<Tensor> values_;
    std::vector<Tensor> grads_;
    std::vector<bool> requires_grad_;
    std::vector<Node> nodes_; // parallel to values_; leaves have no rule
    std::vector<std::pair<ValueId, Parameter*>> watched_;
    bool consumed_ = false;
    bool grads_valid_ = false;
};

namespace ops {

// Shapes are validated on entry; every op records its gradient rule.
ValueId matmul(GradTape& t, ValueId a, ValueId b);
ValueId conv2d(GradTape& t, ValueId input, ValueId kernel, int stride, int padding);
ValueId add(GradTape& t, ValueId a, ValueId b);      // same shape, or scalar on either side
ValueId mul(GradTape& t, ValueId a, ValueId b);      // same shape, or scalar on either side
ValueId scale(GradTape& t, ValueId a, float c);
ValueId relu(GradTape& t, ValueId a);
ValueId exp(GradTape& t, ValueId a);
ValueId log(GradTape& t, ValueId a);
ValueId mean(GradTape& t, ValueId a);                // -> scalar
/// Elementwise product with a constant tensor; gradient sees the constant.
ValueId mul_const(GradTape& t, ValueId a, Tensor c);
/// (N,F)+(F) or (N,C,H,W)+(C) channel bias.
ValueId add_bias(GradTape& t, ValueId x, ValueId bias);
/// 2x2-window, stride-2 average pooling on (N,C,H,W).
ValueId avgpool2(GradTape& t, ValueId x);
/// Mean cross-entropy of softmax(logits) against integer labels; -> scalar.
ValueId softmax_cross_entropy(GradTape& t, ValueId logits, const std::vector<int>& labels);

struct BatchNormArgs {
    ValueId gamma;
    ValueId beta;
    Tensor* running_mean; // updated in train mode, read in eval mode
    Tensor* running_var;
    float momentum = 0.1f;
    float eps = 1e-5f;
    bool train = true;
};

/// Per-channel batch norm over (N,C,H,W) or per-feature over (N,F).
ValueId batch_norm(GradTape& t, ValueId x, const BatchNormArgs& args);

} // namespace ops

} // namespace tspike
