#pragma once

#include <string>
#include <vector>

#include "tspike/training.hpp"

namespace tspike {

/// What fold_amplitudes did and, after verification, how closely the
/// converted network tracks the original.
struct ConversionReport {
    struct FoldEvent {
        int neuron_layer = -1;    // producer of the amplitude-a spikes
        float amplitude = 1.0f;
        int target_layer = -1;    // consumer that absorbed a
        bool into_norm = false;   // true: running stats rescaled instead of weights
    };
    std::vector<FoldEvent> folds;
    std::vector<std::string> warnings;
    bool converted = false;

    // populated by verify_equivalence only
    bool verified = false;
    int64_t probe_size = 0;
    double max_abs_logit_dev = 0.0;
    bool patterns_match = true;
    bool alphabet_ok = true;
    int first_divergence_layer = -1;
    int first_divergence_timestep = -1;

    std::string to_text() const;
};

/// Fold each trainable-ternary layer's learned amplitude into the
/// downstream weighted layer (or into the running statistics of a norm
/// layer that sits between the neuron and the weights), per G = K*(aB)
/// = (aK)*B. Every trainable-ternary neuron becomes a standard ternary
/// neuron. A checkpoint without trainable-ternary layers is returned
/// unchanged with a warning. Residual joins whose branches carry unequal
/// amplitudes raise ConversionError naming both producing layers.
Checkpoint fold_amplitudes(const Checkpoint& ckpt, ConversionReport* report = nullptr);

/// Run both networks on the probe batch and check output invariance:
/// max |logit_orig - logit_conv| <= tol, identical firing patterns
/// layer-by-layer, and a converted spike alphabet inside {-1,0,1}.
/// Throws VerificationError (with first-divergence localization) on
/// failure; returns the filled report on success.
ConversionReport verify_equivalence(const Checkpoint& original, const Checkpoint& converted,
                                    const Tensor& probe, double tol = 1e-5,
                                    ConversionReport base = {});

} // namespace tspike
