#pragma once

#include <string>
#include <vector>

#include "tspike/network.hpp"

namespace tspike {

/// Per-operation energy constants (joules). Defaults follow the common
/// 45nm accounting: 12.5 pJ per FLOP, 77 fJ per SOP, 3.7 pJ per sign
/// evaluation (energy per spike).
struct CostTable {
    double energy_per_flop = 12.5e-12;
    double energy_per_sop = 77e-15;
    double energy_per_sign = 3.7e-12;

    void validate() const;
};

struct LayerAdditions {
    int layer_index = -1;
    double macs = 0;           // multiply-accumulates per image per timestep
    double ann_additions = 0;  // A: accumulation additions in the ANN counterpart
    bool first_real_valued = false;
    int producer_neuron = -1;  // neuron layer whose spikes feed this layer (-1: input)
};

/// Addition counts per weighted layer. The first weighted layer consumes
/// real-valued inputs under direct encoding, so it is excluded from A and
/// billed as FLOPs (2 per MAC, once per timestep). For a conv layer
/// A = O*H'*W'*C*kh*kw; for a linear layer A = in*out.
std::vector<LayerAdditions> count_ann_additions(const NetworkSpec& spec);

struct EnergyReport {
    double flops = 0, sops = 0, signs = 0; // operation counts per inference
    double mean_sparsity = 0;
    int timesteps = 0;
    std::vector<LayerAdditions> layers;
    double ann_additions_total = 0;
    double joules_flops = 0, joules_sops = 0, joules_signs = 0, joules_total = 0;

    std::string to_text() const;
};

/// Full estimate for one image inference: FLOPs from the first layer, SOPs
/// = sum over spiking weighted layers of s * T * A (s is the firing rate of
/// the producing neuron layer; branches of a residual join add their rates),
/// and one sign evaluation per neuron per timestep (two threshold
/// comparisons, hence doubled, for the ternary kinds).
/// `sparsity_per_layer` is indexed by neuron layer in order of appearance,
/// as produced by evaluate().
EnergyReport estimate(const NetworkSpec& spec, const std::vector<double>& sparsity_per_layer,
                      int timesteps, const CostTable& cost = {});

/// Energy from externally supplied operation counts (the Table-4 path).
EnergyReport estimate_from_counts(double flops, double sops, double signs,
                                  const CostTable& cost = {});

/// Invert SOPs = s * T * A for the ANN addition count A.
double implied_ann_additions(double sops, double sparsity, double timesteps);

} // namespace tspike
