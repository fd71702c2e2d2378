#include "tspike/energy.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "tspike/error.hpp"

namespace tspike {

void CostTable::validate() const {
    if (energy_per_flop <= 0 || energy_per_sop <= 0 || energy_per_sign <= 0) {
        throw ConfigError("cost table entries must be strictly positive");
    }
}

namespace {

// Feature shapes per layer boundary, mirroring Network's inference but
// without instantiating parameters.
std::vector<std::vector<int64_t>> walk_shapes(const NetworkSpec& spec) {
    std::vector<std::vector<int64_t>> shapes;
    shapes.push_back({spec.input_shape[0], spec.input_shape[1], spec.input_shape[2]});
    for (const LayerSpec& l : spec.layers) {
        const std::vector<int64_t>& in = shapes.back();
        switch (l.kind) {
            case LayerKind::Conv: {
                const int64_t ph = in[1] + 2 * l.padding, pw = in[2] + 2 * l.padding;
                shapes.push_back({l.out_channels, (ph - l.kernel) / l.stride + 1,
                                  (pw - l.kernel) / l.stride + 1});
                break;
            }
            case LayerKind::Linear:
                shapes.push_back({l.units});
                break;
            case LayerKind::Pool:
                shapes.push_back({in[0], in[1] / 2, in[2] / 2});
                break;
            case LayerKind::Flatten: {
                int64_t n = 1;
                for (int64_t d : in) n *= d;
                shapes.push_back({n});
                break;
            }
            default:
                shapes.push_back(in);
                break;
        }
    }
    return shapes;
}

// Rate multiplier for the spikes feeding layer `j+1`, i.e. flowing out of
// layer j. A residual join passes events from both branches, so their rates
// add. Returns the representative producer index (first found) and the
// summed rate; real-valued paths report producer -1.
struct FeedRate {
    double rate = 0.0;
    int producer = -1;
    bool real_valued = false;
};

FeedRate resolve_feed(const NetworkSpec& spec, const std::vector<double>& rate_of_layer, int j) {
    while (true) {
        if (j < 0) return {1.0, -1, true};
        const LayerSpec& l = spec.layers[static_cast<size_t>(j)];
        switch (l.kind) {
            case LayerKind::Neuron:
                return {rate_of_layer[static_cast<size_t>(j)], j, false};
            case LayerKind::Conv:
            case LayerKind::Linear:
            case LayerKind::Norm:
                return {1.0, j, true};
            case LayerKind::Pool:
            case LayerKind::Flatten:
                --j;
                break;
            case LayerKind::Residual: {
                FeedRate a = resolve_feed(spec, rate_of_layer, j - 1);
                FeedRate b = resolve_feed(spec, rate_of_layer, l.tap);
                if (a.real_valued || b.real_valued) return {1.0, j, true};
                return {a.rate + b.rate, a.producer, false};
            }
        }
    }
}

} // namespace

std::vector<LayerAdditions> count_ann_additions(const NetworkSpec& spec) {
    const auto shapes = walk_shapes(spec);
    std::vector<LayerAdditions> out;
    bool first_seen = false;
    for (size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        if (l.kind != LayerKind::Conv && l.kind != LayerKind::Linear) continue;
        LayerAdditions a;
        a.layer_index = static_cast<int>(i);
        const std::vector<int64_t>& in = shapes[i];
        const std::vector<int64_t>& ov = shapes[i + 1];
        if (l.kind == LayerKind::Conv) {
            a.macs = static_cast<double>(ov[0] * ov[1] * ov[2]) *
                     static_cast<double>(in[0] * l.kernel * l.kernel);
        } else {
            a.macs = static_cast<double>(in[0]) * static_cast<double>(ov[0]);
        }
        if (!first_seen) {
            a.first_real_valued = true;
            a.ann_additions = 0.0;
            first_seen = true;
        } else {
            a.ann_additions = a.macs;
        }
        out.push_back(a);
    }
    return out;
}

EnergyReport estimate(const NetworkSpec& spec, const std::vector<double>& sparsity_per_layer,
                      int timesteps, const CostTable& cost) {
    cost.validate();
    if (timesteps < 1) throw ContractError("estimate: timesteps must be >= 1");
    for (double s : sparsity_per_layer) {
        if (!(s >= 0.0 && s <= 1.0)) {
            throw ContractError("estimate: sparsity " + std::to_string(s) + " outside [0,1]");
        }
    }

    // map the per-neuron-layer sparsities onto spec layer indices
    std::vector<double> rate_of_layer(spec.layers.size(), 0.0);
    size_t next = 0;
    for (size_t i = 0; i < spec.layers.size(); ++i) {
        if (spec.layers[i].kind != LayerKind::Neuron) continue;
        if (next >= sparsity_per_layer.size()) {
            throw ContractError("estimate: got " + std::to_string(sparsity_per_layer.size()) +
                                " sparsities for more neuron layers");
        }
        rate_of_layer[i] = sparsity_per_layer[next++];
    }
    if (next != sparsity_per_layer.size()) {
        throw ContractError("estimate: got " + std::to_string(sparsity_per_layer.size()) +
                            " sparsities for " + std::to_string(next) + " neuron layers");
    }

    EnergyReport rep;
    rep.timesteps = timesteps;
    rep.layers = count_ann_additions(spec);
    const double T = static_cast<double>(timesteps);
    double weighted_rate = 0.0;
    for (LayerAdditions& a : rep.layers) {
        if (a.first_real_valued) {
            rep.flops += 2.0 * a.macs * T;
            continue;
        }
        const FeedRate feed = resolve_feed(spec, rate_of_layer, a.layer_index - 1);
        a.producer_neuron = feed.producer;
        const double rate = feed.real_valued ? 1.0 : feed.rate;
        rep.sops += rate * T * a.ann_additions;
        rep.ann_additions_total += a.ann_additions;
        weighted_rate += rate * a.ann_additions;
    }
    rep.mean_sparsity =
        rep.ann_additions_total > 0 ? weighted_rate / rep.ann_additions_total : 0.0;

    const auto shapes = walk_shapes(spec);
    for (size_t i = 0; i < spec.layers.size(); ++i) {
        if (spec.layers[i].kind != LayerKind::Neuron) continue;
        int64_t count = 1;
        for (int64_t d : shapes[i + 1]) count *= d;
        const double per_step = spec.layers[i].neuron.ternary() ? 2.0 : 1.0;
        rep.signs += per_step * static_cast<double>(count) * T;
    }

    rep.joules_flops = rep.flops * cost.energy_per_flop;
    rep.joules_sops = rep.sops * cost.energy_per_sop;
    rep.joules_signs = rep.signs * cost.energy_per_sign;
    rep.joules_total = rep.joules_flops + rep.joules_sops + rep.joules_signs;
    return rep;
}

EnergyReport estimate_from_counts(double flops, double sops, double signs, const CostTable& cost) {
    cost.validate();
    if (flops < 0 || sops < 0 || signs < 0) {
        throw ContractError("estimate_from_counts: counts must be nonnegative");
    }
    EnergyReport rep;
    rep.flops = flops;
    rep.sops = sops;
    rep.signs = signs;
    rep.joules_flops = flops * cost.energy_per_flop;
    rep.joules_sops = sops * cost.energy_per_sop;
    rep.joules_signs = signs * cost.energy_per_sign;
    rep.joules_total = rep.joules_flops + rep.joules_sops + rep.joules_signs;
    return rep;
}

double implied_ann_additions(double sops, double sparsity, double timesteps) {
    if (!(sparsity > 0.0) || !(timesteps > 0.0)) {
        throw ContractError("implied_ann_additions: sparsity and timesteps must be positive");
    }
    return sops / (sparsity * timesteps);
}

std::string EnergyReport::to_text() const {
    std::ostringstream os;
    char buf[128];
    os << "energy estimate (one image inference)\n";
    auto row = [&](const char* name, double count, double joules) {
        std::snprintf(buf, sizeof buf, "  %-6s %14.4g ops  %10.4f uJ\n", name, count, joules * 1e6);
        os << buf;
    };
    row("flops", flops, joules_flops);
    row("sops", sops, joules_sops);
    row("signs", signs, joules_signs);
    std::snprintf(buf, sizeof buf, "  total  %31.4f uJ\n", joules_total * 1e6);
    os << buf;
    if (timesteps > 0) {
        std::snprintf(buf, sizeof buf, "  timesteps %d, mean sparsity %.4f, ANN additions %.4g\n",
                      timesteps, mean_sparsity, ann_additions_total);
        os << buf;
    }
    return os.str();
}

} // namespace tspike
