#pragma once

#include <string>

#include "tspike/autograd.hpp"
#include "tspike/tensor.hpp"

namespace tspike {

enum class NeuronKind { Binary, Ternary, TrainableTernary };

std::string to_string(NeuronKind kind);
NeuronKind neuron_kind_from_string(const std::string& s);

/// Leaky integrate-and-fire configuration. `tau` is the post-leak retention
/// factor applied to the previous membrane potential; firing thresholds sit
/// at +v_th (and -v_th for the ternary kinds).
struct LIFConfig {
    float tau = 0.25f;
    float v_th = 1.0f;
    float surrogate_width = 0.5f;
    NeuronKind kind = NeuronKind::Ternary;

    void validate() const;
    bool ternary() const { return kind != NeuronKind::Binary; }
};

/// Per-layer neuron state carried between timesteps. `o_prev` holds the
/// emitted values (amplitude-scaled for the trainable kind); `base_prev`
/// holds the underlying firing pattern in {-1,0,1} ({0,1} for binary),
/// which is what drives the reset.
struct NeuronLayerState {
    Tensor u;
    Tensor o_prev;
    Tensor base_prev;

    static NeuronLayerState zeros(const std::vector<int64_t>& shape);
};

struct StepResult {
    Tensor spikes; // == new_state.o_prev
    NeuronLayerState new_state;
};

/// One timestep of the binary LIF neuron:
///   u_t = tau * u_prev * (1 - o_prev) + input;  spike = 1[u_t >= v_th].
/// A spike at t-1 zeroes the leak term at t (hard reset).
StepResult binary_step(const NeuronLayerState& state, const Tensor& input_current,
                       const LIFConfig& cfg);

/// One timestep of the ternary LIF neuron:
///   u_t = tau * u_prev * (1 - |o_prev|) + input;
///   spike = +1 if u_t >= v_th, -1 if u_t <= -v_th, else 0.
StepResult ternary_step(const NeuronLayerState& state, const Tensor& input_current,
                        const LIFConfig& cfg);

/// Trainable-ternary step: thresholding is identical to ternary_step (the
/// amplitude plays no part in firing), the emitted value is a * base, and
/// the reset uses |base_prev|.
StepResult trainable_ternary_step(const NeuronLayerState& state, const Tensor& input_current,
                                  const LIFConfig& cfg, float amplitude);

/// Rectangular surrogate derivative d spike / d membrane, evaluated
/// elementwise: 1/(2w) inside |u - v_th| <= w, plus the mirrored window at
/// -v_th for ternary kinds, 0 elsewhere.
Tensor surrogate_grad(const Tensor& u, const LIFConfig& cfg);

namespace ops {

/// Tape op: exact threshold firing in the forward pass, rectangular
/// surrogate in the backward pass. Produces the base pattern ({0,1} or
/// {-1,0,1}); trainable-ternary layers multiply by their amplitude
/// parameter afterwards.
ValueId spike_base(GradTape& t, ValueId membrane, const LIFConfig& cfg);

/// Tape op for the membrane update u_t = tau * u_prev * (1 - |base_prev|)
/// + input. The reset factor is detached: no gradient flows through
/// base_prev here.
ValueId lif_integrate(GradTape& t, ValueId u_prev, const Tensor& base_prev, ValueId input,
                      const LIFConfig& cfg);

} // namespace ops

} // namespace tspike
