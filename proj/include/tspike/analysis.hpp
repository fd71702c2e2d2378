#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "tspike/network.hpp"

namespace tspike {

/// Representation capacity of a feature map in bits:
/// C*H*W * log2(alphabet_size). A 32-bit real map is the alphabet-2^32 case.
double capacity_bits(const std::array<int64_t, 3>& shape, int alphabet_size);

/// Shannon entropy of a distribution, in bits, with 0*log(0) = 0. The
/// distribution must be nonnegative and sum to 1 within 1e-6.
double entropy_bits(const std::vector<double>& p);

struct MembraneHistogram {
    int layer_index = -1;
    int timestep = -1;
    double lo = 0, hi = 0; // uniform bin edges: lo + k*(hi-lo)/bins
    std::vector<int64_t> counts;
    double mean = 0, stddev = 0;
    int64_t total = 0;
};

/// One histogram per (neuron layer, timestep) over the recorded membranes.
/// Bins span mean +- 4 std, clipped: out-of-range values land in the end
/// bins, so counts always sum to the number of recorded values. Membranes
/// are the pre-reset potentials unless post_reset is set.
std::vector<MembraneHistogram> membrane_profile(const ForwardRecord& record, int bins = 64,
                                                bool post_reset = false);

struct LayerMoments {
    int layer_index = -1;
    double mean = 0, stddev = 0;
    int64_t count = 0;
};

/// Per-layer membrane mean/std pooled over all timesteps.
std::vector<LayerMoments> membrane_moments(const ForwardRecord& record, bool post_reset = false);

struct SpikeLayerStats {
    int layer_index = -1;
    double rate_pos = 0, rate_neg = 0, rate_zero = 0;
    double entropy = 0; // bits per element over the {-1,0,1} rates
    int64_t count = 0;
};

/// Firing-value rates per neuron layer (both -1 and +1 count as firing for
/// sparsity purposes) and the empirical per-element entropy.
std::vector<SpikeLayerStats> spike_stats(const ForwardRecord& record);

struct CapacityRow {
    int layer_index = -1;
    std::array<int64_t, 3> shape{1, 1, 1}; // flat layers report (F,1,1)
    double bits_binary = 0, bits_ternary = 0, bits_real32 = 0;
    double ratio_ternary_binary = 0, ratio_real_binary = 0;
};

/// Per-neuron-layer representation capacity of the binary, ternary and
/// 32-bit real maps of the same shape.
std::vector<CapacityRow> capacity_report(const Network& net);

} // namespace tspike
