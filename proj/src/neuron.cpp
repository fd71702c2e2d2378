#include "tspike/neuron.hpp"

#include <cmath>

#include "tspike/error.hpp"

namespace tspike {

std::string to_string(NeuronKind kind) {
    switch (kind) {
        case NeuronKind::Binary: return "binary";
        case NeuronKind::Ternary: return "ternary";
        case NeuronKind::TrainableTernary: return "trainable-ternary";
    }
    return "?";
}

NeuronKind neuron_kind_from_string(const std::string& s) {
    if (s == "binary") return NeuronKind::Binary;
    if (s == "ternary") return NeuronKind::Ternary;
    if (s == "trainable-ternary" || s == "trainable_ternary") return NeuronKind::TrainableTernary;
    throw ConfigError("unknown neuron kind '" + s +
                      "' (expected binary, ternary or trainable-ternary)");
}

void LIFConfig::validate() const {
    if (!(tau >= 0.0f && tau < 1.0f)) {
        throw ConfigError("LIF tau must be in [0,1), got " + std::to_string(tau));
    }
    if (!(v_th > 0.0f)) throw ConfigError("LIF v_th must be > 0, got " + std::to_string(v_th));
    if (!(surrogate_width > 0.0f)) {
        throw ConfigError("LIF surrogate width must be > 0, got " + std::to_string(surrogate_width));
    }
}

NeuronLayerState NeuronLayerState::zeros(const std::vector<int64_t>& shape) {
    return NeuronLayerState{Tensor::zeros(shape), Tensor::zeros(shape), Tensor::zeros(shape)};
}

namespace {

void check_step_shapes(const NeuronLayerState& state, const Tensor& input) {
    if (!state.u.same_shape(input)) {
        throw ShapeError("neuron step: state " + shape_str(state.u.shape()) +
                         " does not match input " + shape_str(input.shape()));
    }
    if (!state.base_prev.same_shape(input)) {
        throw ShapeError("neuron step: previous spikes " + shape_str(state.base_prev.shape()) +
                         " do not match input " + shape_str(input.shape()));
    }
}

// u_t[i] = tau * u_prev[i] * (1 - |base_prev[i]|) + input[i]
Tensor integrate(const Tensor& u_prev, const Tensor& base_prev, const Tensor& input, float tau) {
    Tensor u(input.shape());
    const int64_t n = u.numel();
    for (int64_t i = 0; i < n; ++i) {
        u[i] = tau * u_prev[i] * (1.0f - std::fabs(base_prev[i])) + input[i];
    }
    return u;
}

Tensor fire(const Tensor& u, float v_th, bool ternary) {
    Tensor b(u.shape());
    const int64_t n = u.numel();
    for (int64_t i = 0; i < n; ++i) {
        if (u[i] >= v_th) b[i] = 1.0f;
        else if (ternary && u[i] <= -v_th) b[i] = -1.0f;
        else b[i] = 0.0f;
    }
    return b;
}

} // namespace

StepResult binary_step(const NeuronLayerState& state, const Tensor& input_current,
                       const LIFConfig& cfg) {
    cfg.validate();
    check_step_shapes(state, input_current);
    Tensor u = integrate(state.u, state.base_prev, input_current, cfg.tau);
    Tensor b = fire(u, cfg.v_th, /*ternary=*/false);
    StepResult r;
    r.spikes = b;
    r.new_state = NeuronLayerState{std::move(u), b, std::move(b)};
    return r;
}

StepResult ternary_step(const NeuronLayerState& state, const Tensor& input_current,
                        const LIFConfig& cfg) {
    cfg.validate();
    check_step_shapes(state, input_current);
    Tensor u = integrate(state.u, state.base_prev, input_current, cfg.tau);
    Tensor b = fire(u, cfg.v_th, /*ternary=*/true);
    StepResult r;
    r.spikes = b;
    r.new_state = NeuronLayerState{std::move(u), b, std::move(b)};
    return r;
}

StepResult trainable_ternary_step(const NeuronLayerState& state, const Tensor& input_current,
                                  const LIFConfig& cfg, float amplitude) {
    cfg.validate();
    if (!std::isfinite(amplitude)) {
        throw ContractError("trainable_ternary_step: non-finite amplitude");
    }
    check_step_shapes(state, input_current);
    Tensor u = integrate(state.u, state.base_prev, input_current, cfg.tau);
    Tensor b = fire(u, cfg.v_th, /*ternary=*/true);
    Tensor o(b.shape());
    const int64_t n = b.numel();
    for (int64_t i = 0; i < n; ++i) o[i] = amplitude * b[i];
    StepResult r;
    r.spikes = o;
    r.new_state = NeuronLayerState{std::move(u), std::move(o), std::move(b)};
    return r;
}

Tensor surrogate_grad(const Tensor& u, const LIFConfig& cfg) {
    const float w = cfg.surrogate_width;
    const float gain = 1.0f / (2.0f * w);
    const bool ternary = cfg.ternary();
    Tensor g(u.shape());
    const int64_t n = u.numel();
    for (int64_t i = 0; i < n; ++i) {
        float v = 0.0f;
        if (std::fabs(u[i] - cfg.v_th) <= w) v += gain;
        if (ternary && std::fabs(u[i] + cfg.v_th) <= w) v += gain;
        g[i] = v;
    }
    return g;
}

namespace ops {

ValueId spike_base(GradTape& t, ValueId membrane, const LIFConfig& cfg) {
    cfg.validate();
    const Tensor& u = t.value(membrane);
    Tensor b(u.shape());
    const bool ternary = cfg.ternary();
    const int64_t n = u.numel();
    for (int64_t i = 0; i < n; ++i) {
        if (u[i] >= cfg.v_th) b[i] = 1.0f;
        else if (ternary && u[i] <= -cfg.v_th) b[i] = -1.0f;
        else b[i] = 0.0f;
    }
    return t.emit(std::move(b), {membrane}, [membrane, cfg](GradTape& tape, ValueId y) {
        const Tensor& g = tape.grad_out(y);
        const Tensor sg = surrogate_grad(tape.value(membrane), cfg);
        Tensor& du = tape.grad_buffer(membrane);
        const int64_t n = g.numel();
        for (int64_t i = 0; i < n; ++i) du[i] += g[i] * sg[i];
    });
}

ValueId lif_integrate(GradTape& t, ValueId u_prev, const Tensor& base_prev, ValueId input,
                      const LIFConfig& cfg) {
    const Tensor& up = t.value(u_prev);
    const Tensor& in = t.value(input);
    if (!up.same_shape(in) || !base_prev.same_shape(in)) {
        throw ShapeError("lif_integrate: shapes " + shape_str(up.shape()) + ", " +
                         shape_str(base_prev.shape()) + ", " + shape_str(in.shape()) +
                         " do not agree");
    }
    // leak_factor holds tau * (1 - |base_prev|); treated as a constant so the
    // reset path carries no gradient.
    Tensor leak(in.shape());
    const int64_t n = in.numel();
    for (int64_t i = 0; i < n; ++i) leak[i] = cfg.tau * (1.0f - std::fabs(base_prev[i]));
    Tensor u(in.shape());
    for (int64_t i = 0; i < n; ++i) u[i] = leak[i] * up[i] + in[i];
    auto leak_c = std::make_shared<Tensor>(std::move(leak));
    return t.emit(std::move(u), {u_prev, input}, [u_prev, input, leak_c](GradTape& tape, ValueId y) {
        const Tensor& g = tape.grad_out(y);
        const int64_t n = g.numel();
        if (tape.requires_grad(u_prev)) {
            Tensor& dup = tape.grad_buffer(u_prev);
            for (int64_t i = 0; i < n; ++i) dup[i] += g[i] * (*leak_c)[i];
        }
        if (tape.requires_grad(input)) tape.accumulate_grad(input, g);
    });
}

} // namespace ops

} // namespace tspike
