// Test-only oracles: independent reference implementations the library is
// checked against. Nothing here may call into the code paths under test.
#pragma once

#include <functional>
#include <random>
#include <vector>

#include "tspike/autograd.hpp"
#include "tspike/neuron.hpp"
#include "tspike/tensor.hpp"

namespace oracles {

using tspike::GradTape;
using tspike::LIFConfig;
using tspike::Parameter;
using tspike::Tensor;
using tspike::ValueId;

Tensor random_tensor(std::vector<int64_t> shape, std::mt19937_64& rng, float lo = -1.0f,
                     float hi = 1.0f);

/// Plain nested-loop cross-correlation; summation runs over (c, kh, kw) per
/// output element, independent of the im2col route.
Tensor conv2d_naive(const Tensor& input, const Tensor& kernel, int stride, int padding);

/// Loop-based scalar simulations of the three LIF neurons, written straight
/// from the update equations. `o` is the emitted value, `base` the firing
/// pattern.
struct ScalarTrace {
    std::vector<float> u, o, base;
};
ScalarTrace simulate_binary(const std::vector<float>& inputs, float tau, float v_th);
ScalarTrace simulate_ternary(const std::vector<float>& inputs, float tau, float v_th);
ScalarTrace simulate_trainable(const std::vector<float>& inputs, float tau, float v_th,
                               float amplitude);

/// Smooth stand-in for the spike nonlinearity: a piecewise-linear ramp from
/// 0 to 1 across [v_th - w, v_th + w] (minus the mirrored ramp for ternary
/// kinds), so its derivative is exactly the rectangular surrogate. Used to
/// validate the tape's BPTT plumbing with finite differences.
ValueId smooth_spike(GradTape& t, ValueId u, const LIFConfig& cfg);

/// Central finite differences of a loss closure w.r.t. every entry of every
/// parameter. The closure must rebuild its forward pass from the parameters'
/// current values.
std::vector<Tensor> finite_diff(const std::function<double()>& loss,
                                const std::vector<Parameter*>& params, double eps = 1e-3);

/// max_i |a_i - b_i| / max(1, |b_i|)
double max_rel_err(const Tensor& got, const Tensor& want);

} // namespace oracles
