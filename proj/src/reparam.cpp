#include "tspike/reparam.hpp"

#include <cmath>
#include <sstream>

#include "tspike/error.hpp"

namespace tspike {

namespace {

struct AmpSource {
    float amplitude = 1.0f;
    int neuron_layer = -1; // -1: input or an absorbing layer upstream
};

// Amplitude carried by the output of layer `j` (-1 = network input), walking
// backward through scale-transparent layers. Conv/Linear/Norm absorb the
// scale, so their outputs carry amplitude 1.
AmpSource resolve_amplitude(const NetworkSpec& spec, const std::vector<float>& amp_of_layer, int j) {
    while (true) {
        if (j < 0) return {};
        const LayerSpec& l = spec.layers[static_cast<size_t>(j)];
        switch (l.kind) {
            case LayerKind::Neuron:
                if (l.neuron.kind == NeuronKind::TrainableTernary) {
                    return {amp_of_layer[static_cast<size_t>(j)], j};
                }
                return {};
            case LayerKind::Conv:
            case LayerKind::Linear:
            case LayerKind::Norm:
                return {};
            case LayerKind::Pool:
            case LayerKind::Flatten:
                --j;
                break;
            case LayerKind::Residual: {
                AmpSource through = resolve_amplitude(spec, amp_of_layer, j - 1);
                AmpSource tapped = resolve_amplitude(spec, amp_of_layer, l.tap);
                if (through.amplitude != tapped.amplitude) {
                    throw ConversionError(
                        "residual join at layer " + std::to_string(j) +
                        " sums branches with unequal amplitudes: layer " +
                        std::to_string(through.neuron_layer) + " (a=" +
                        std::to_string(through.amplitude) + ") vs layer " +
                        std::to_string(tapped.neuron_layer) + " (a=" +
                        std::to_string(tapped.amplitude) + ")");
                }
                return through.neuron_layer >= 0 ? through : tapped;
            }
        }
    }
}

} // namespace

Checkpoint fold_amplitudes(const Checkpoint& ckpt, ConversionReport* report) {
    ConversionReport local;
    ConversionReport& rep = report ? *report : local;

    Checkpoint out = ckpt;
    const NetworkSpec& spec = ckpt.spec;
    const size_t num_layers = spec.layers.size();

    std::vector<float> amp_of_layer(num_layers, 1.0f);
    bool any_trainable = false;
    for (size_t i = 0; i < num_layers; ++i) {
        const LayerSpec& l = spec.layers[i];
        if (l.kind == LayerKind::Neuron && l.neuron.kind == NeuronKind::TrainableTernary) {
            any_trainable = true;
            const Tensor* a = ckpt.find("layer" + std::to_string(i) + ".neuron.amplitude");
            if (!a) {
                throw FormatError("checkpoint is missing the amplitude of layer " +
                                  std::to_string(i));
            }
            amp_of_layer[i] = (*a)[0];
            if (!std::isfinite(amp_of_layer[i])) {
                throw ConversionError("layer " + std::to_string(i) + " has a non-finite amplitude");
            }
        }
    }
    if (!any_trainable) {
        rep.warnings.push_back("checkpoint has no trainable-ternary layers; nothing to fold");
        rep.converted = false;
        return out;
    }

    // Each scale-sensitive layer absorbs the amplitude arriving at its input.
    for (size_t i = 0; i < num_layers; ++i) {
        const LayerSpec& l = spec.layers[i];
        const std::string prefix = "layer" + std::to_string(i) + ".";
        if (l.kind == LayerKind::Conv || l.kind == LayerKind::Linear) {
            const AmpSource src = resolve_amplitude(spec, amp_of_layer, static_cast<int>(i) - 1);
            if (src.neuron_layer < 0 || src.amplitude == 1.0f) continue;
            const std::string key =
                prefix + (l.kind == LayerKind::Conv ? "conv.weight" : "linear.weight");
            Tensor* w = out.find(key);
            if (!w) throw FormatError("checkpoint is missing tensor '" + key + "'");
            for (int64_t j = 0; j < w->numel(); ++j) (*w)[j] *= src.amplitude;
            rep.folds.push_back({src.neuron_layer, src.amplitude, static_cast<int>(i), false});
        } else if (l.kind == LayerKind::Norm) {
            const AmpSource src = resolve_amplitude(spec, amp_of_layer, static_cast<int>(i) - 1);
            if (src.neuron_layer < 0 || src.amplitude == 1.0f) continue;
            Tensor* mean = out.find(prefix + "norm.running_mean");
            Tensor* var = out.find(prefix + "norm.running_var");
            if (!mean || !var) throw FormatError("checkpoint is missing norm statistics of layer " +
                                                 std::to_string(i));
            const float a = src.amplitude;
            for (int64_t j = 0; j < mean->numel(); ++j) (*mean)[j] /= a;
            for (int64_t j = 0; j < var->numel(); ++j) (*var)[j] /= a * a;
            rep.folds.push_back({src.neuron_layer, a, static_cast<int>(i), true});
        }
    }

    // Every trainable-ternary neuron becomes a standard ternary neuron.
    for (size_t i = 0; i < num_layers; ++i) {
        LayerSpec& l = out.spec.layers[i];
        if (l.kind == LayerKind::Neuron && l.neuron.kind == NeuronKind::TrainableTernary) {
            l.neuron.kind = NeuronKind::Ternary;
            const std::string key = "layer" + std::to_string(i) + ".neuron.amplitude";
            for (size_t k = 0; k < out.tensors.size(); ++k) {
                if (out.tensors[k].first == key) {
                    out.tensors.erase(out.tensors.begin() + static_cast<long>(k));
                    break;
                }
            }
        }
    }
    rep.converted = true;
    return out;
}

ConversionReport verify_equivalence(const Checkpoint& original, const Checkpoint& converted,
                                    const Tensor& probe, double tol, ConversionReport base) {
    if (original.spec.layers.size() != converted.spec.layers.size() ||
        original.spec.timesteps != converted.spec.timesteps) {
        throw ContractError("verify_equivalence: checkpoints have different topologies");
    }
    for (size_t i = 0; i < original.spec.layers.size(); ++i) {
        if (original.spec.layers[i].kind != converted.spec.layers[i].kind) {
            throw ContractError("verify_equivalence: layer " + std::to_string(i) +
                                " kinds differ (" + to_string(original.spec.layers[i].kind) +
                                " vs " + to_string(converted.spec.layers[i].kind) + ")");
        }
    }

    Network net_a = restore(original);
    Network net_b = restore(converted);
    GradTape tape_a, tape_b;
    ForwardRecord rec_a, rec_b;
    net_a.forward(tape_a, probe, /*train=*/false, &rec_a);
    net_b.forward(tape_b, probe, /*train=*/false, &rec_b);

    ConversionReport rep = std::move(base);
    rep.verified = true;
    rep.probe_size = probe.dim(0);

    for (int64_t i = 0; i < rec_a.logits.numel(); ++i) {
        rep.max_abs_logit_dev = std::max(
            rep.max_abs_logit_dev,
            static_cast<double>(std::fabs(rec_a.logits[i] - rec_b.logits[i])));
    }

    for (size_t li = 0; li < rec_a.traces.size() && rep.patterns_match; ++li) {
        const auto& ta = rec_a.traces[li];
        const auto& tb = rec_b.traces[li];
        for (size_t t = 0; t < ta.base.size() && rep.patterns_match; ++t) {
            for (int64_t j = 0; j < ta.base[t].numel(); ++j) {
                if (ta.base[t][j] != tb.base[t][j]) {
                    rep.patterns_match = false;
                    rep.first_divergence_layer = ta.layer_index;
                    rep.first_divergence_timestep = static_cast<int>(t);
                    break;
                }
            }
        }
    }

    for (const auto& tr : rec_b.traces) {
        for (const Tensor& o : tr.spikes) {
            for (int64_t j = 0; j < o.numel(); ++j) {
                if (o[j] != 0.0f && o[j] != 1.0f && o[j] != -1.0f) {
                    rep.alphabet_ok = false;
                    break;
                }
            }
        }
    }

    if (rep.max_abs_logit_dev > tol || !rep.patterns_match || !rep.alphabet_ok) {
        std::ostringstream os;
        os << "converted network is not output-invariant:";
        if (rep.max_abs_logit_dev > tol) {
            os << " max logit deviation " << rep.max_abs_logit_dev << " > " << tol << ";";
        }
        if (!rep.patterns_match) {
            os << " firing patterns first diverge at layer " << rep.first_divergence_layer
               << ", timestep " << rep.first_divergence_timestep << ";";
        }
        if (!rep.alphabet_ok) os << " converted spikes leave {-1,0,1};";
        throw VerificationError(os.str());
    }
    return rep;
}

std::string ConversionReport::to_text() const {
    std::ostringstream os;
    os << "conversion report\n";
    if (!converted && folds.empty()) os << "  no amplitudes folded\n";
    for (const FoldEvent& f : folds) {
        os << "  layer " << f.neuron_layer << " amplitude " << f.amplitude << " folded into layer "
           << f.target_layer << (f.into_norm ? " (norm input scale)\n" : " (weights)\n");
    }
    for (const std::string& w : warnings) os << "  warning: " << w << "\n";
    if (verified) {
        os << "verification (probe batch of " << probe_size << ")\n";
        os << "  max |logit_orig - logit_conv| = " << max_abs_logit_dev << "\n";
        os << "  firing patterns: " << (patterns_match ? "identical" : "DIVERGED") << "\n";
        os << "  converted spike alphabet in {-1,0,1}: " << (alphabet_ok ? "yes" : "NO") << "\n";
    }
    return os.str();
}

} // namespace tspike
