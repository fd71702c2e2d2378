#include "tspike/network.hpp"

#include <cmath>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "tspike/error.hpp"

namespace tspike {

using json = nlohmann::ordered_json;

std::string to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv: return "conv";
        case LayerKind::Linear: return "linear";
        case LayerKind::Norm: return "norm";
        case LayerKind::Neuron: return "neuron";
        case LayerKind::Residual: return "residual";
        case LayerKind::Pool: return "pool";
        case LayerKind::Flatten: return "flatten";
    }
    return "?";
}

namespace {

LayerKind layer_kind_from_string(const std::string& s) {
    if (s == "conv") return LayerKind::Conv;
    if (s == "linear") return LayerKind::Linear;
    if (s == "norm") return LayerKind::Norm;
    if (s == "neuron") return LayerKind::Neuron;
    if (s == "residual") return LayerKind::Residual;
    if (s == "pool") return LayerKind::Pool;
    if (s == "flatten") return LayerKind::Flatten;
    throw ConfigError("unknown layer kind '" + s + "'");
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key())) {
            throw ConfigError("unknown key '" + it.key() + "' in " + where);
        }
    }
}

} // namespace

LayerSpec LayerSpec::conv(int out_channels, int kernel, int stride, int padding) {
    LayerSpec s;
    s.kind = LayerKind::Conv;
    s.out_channels = out_channels;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = padding;
    return s;
}

LayerSpec LayerSpec::linear(int units) {
    LayerSpec s;
    s.kind = LayerKind::Linear;
    s.units = units;
    return s;
}

LayerSpec LayerSpec::norm() {
    LayerSpec s;
    s.kind = LayerKind::Norm;
    return s;
}

LayerSpec LayerSpec::lif(const LIFConfig& cfg) {
    LayerSpec s;
    s.kind = LayerKind::Neuron;
    s.neuron = cfg;
    return s;
}

LayerSpec LayerSpec::residual(int tap) {
    LayerSpec s;
    s.kind = LayerKind::Residual;
    s.tap = tap;
    return s;
}

LayerSpec LayerSpec::pool() {
    LayerSpec s;
    s.kind = LayerKind::Pool;
    return s;
}

LayerSpec LayerSpec::flatten() {
    LayerSpec s;
    s.kind = LayerKind::Flatten;
    return s;
}

std::string NetworkSpec::to_json() const {
    json doc;
    doc["input_shape"] = input_shape;
    doc["timesteps"] = timesteps;
    doc["encoder"] = "direct";
    doc["readout"] = "mean-potential";
    doc["layers"] = json::array();
    for (const LayerSpec& l : layers) {
        json jl;
        jl["kind"] = to_string(l.kind);
        switch (l.kind) {
            case LayerKind::Conv:
                jl["out_channels"] = l.out_channels;
                jl["kernel"] = l.kernel;
                jl["stride"] = l.stride;
                jl["padding"] = l.padding;
                break;
            case LayerKind::Linear:
                jl["units"] = l.units;
                break;
            case LayerKind::Neuron:
                jl["neuron"] = to_string(l.neuron.kind);
                jl["tau"] = l.neuron.tau;
                jl["v_th"] = l.neuron.v_th;
                jl["surrogate_width"] = l.neuron.surrogate_width;
                break;
            case LayerKind::Residual:
                jl["tap"] = l.tap;
                break;
            default:
                break;
        }
        doc["layers"].push_back(jl);
    }
    return doc.dump(2);
}

NetworkSpec NetworkSpec::from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("network spec is not valid JSON: ") + e.what());
    }
    check_keys(doc, {"input_shape", "timesteps", "encoder", "readout", "layers"}, "network spec");
    NetworkSpec spec;
    if (doc.contains("input_shape")) {
        auto v = doc["input_shape"].get<std::vector<int64_t>>();
        if (v.size() != 3) throw ConfigError("input_shape must have 3 entries (C,H,W)");
        spec.input_shape = {v[0], v[1], v[2]};
    }
    if (doc.contains("timesteps")) spec.timesteps = doc["timesteps"].get<int>();
    if (spec.timesteps < 1) throw ConfigError("timesteps must be >= 1");
    if (doc.contains("encoder") && doc["encoder"] != "direct") {
        throw ConfigError("unknown encoder '" + doc["encoder"].get<std::string>() + "'");
    }
    if (doc.contains("readout") && doc["readout"] != "mean-potential") {
        throw ConfigError("unknown readout '" + doc["readout"].get<std::string>() + "'");
    }
    if (!doc.contains("layers")) throw ConfigError("network spec has no layers");
    int index = 0;
    for (const json& jl : doc["layers"]) {
        const std::string where = "layer " + std::to_string(index);
        if (!jl.contains("kind")) throw ConfigError(where + " has no kind");
        LayerSpec l;
        l.kind = layer_kind_from_string(jl["kind"].get<std::string>());
        switch (l.kind) {
            case LayerKind::Conv:
                check_keys(jl, {"kind", "out_channels", "kernel", "stride", "padding"}, where);
                l.out_channels = jl.at("out_channels").get<int>();
                l.kernel = jl.at("kernel").get<int>();
                if (jl.contains("stride")) l.stride = jl["stride"].get<int>();
                if (jl.contains("padding")) l.padding = jl["padding"].get<int>();
                break;
            case LayerKind::Linear:
                check_keys(jl, {"kind", "units"}, where);
                l.units = jl.at("units").get<int>();
                break;
            case LayerKind::Neuron:
                check_keys(jl, {"kind", "neuron", "tau", "v_th", "surrogate_width"}, where);
                l.neuron.kind = neuron_kind_from_string(jl.at("neuron").get<std::string>());
                if (jl.contains("tau")) l.neuron.tau = jl["tau"].get<float>();
                if (jl.contains("v_th")) l.neuron.v_th = jl["v_th"].get<float>();
                if (jl.contains("surrogate_width")) {
                    l.neuron.surrogate_width = jl["surrogate_width"].get<float>();
                }
                l.neuron.validate();
                break;
            case LayerKind::Residual:
                check_keys(jl, {"kind", "tap"}, where);
                l.tap = jl.at("tap").get<int>();
                break;
            case LayerKind::Norm:
            case LayerKind::Pool:
            case LayerKind::Flatten:
                check_keys(jl, {"kind"}, where);
                break;
        }
        spec.layers.push_back(l);
        ++index;
    }
    return spec;
}

NetworkSpec build_preset(const std::string& name, NeuronKind kind, int timesteps) {
    LIFConfig lif;
    lif.kind = kind;
    NetworkSpec spec;
    spec.timesteps = timesteps;
    spec.input_shape = {1, 28, 28};
    if (name == "mlp-mnist") {
        spec.layers = {
            LayerSpec::flatten(),
            LayerSpec::linear(256), LayerSpec::lif(lif),
            LayerSpec::linear(256), LayerSpec::lif(lif),
            LayerSpec::linear(10),
        };
    } else if (name == "cnn-mnist") {
        spec.layers = {
            LayerSpec::conv(12, 3, 1, 1), LayerSpec::norm(), LayerSpec::lif(lif),
            LayerSpec::pool(),
            LayerSpec::conv(24, 3, 1, 1), LayerSpec::norm(), LayerSpec::lif(lif),
            LayerSpec::pool(),
            LayerSpec::flatten(),
            LayerSpec::linear(10),
        };
    } else if (name == "resnet-mini") {
        spec.layers = {
            LayerSpec::conv(8, 3, 1, 1),  LayerSpec::norm(), LayerSpec::lif(lif), // 2
            LayerSpec::conv(8, 3, 1, 1),  LayerSpec::norm(), LayerSpec::lif(lif), // 5
            LayerSpec::conv(8, 3, 1, 1),  LayerSpec::norm(), LayerSpec::lif(lif), // 8
            LayerSpec::residual(2),                                               // 9
            LayerSpec::pool(),                                                    // 10
            LayerSpec::conv(16, 3, 1, 1), LayerSpec::norm(), LayerSpec::lif(lif), // 13
            LayerSpec::conv(16, 3, 1, 1), LayerSpec::norm(), LayerSpec::lif(lif), // 16
            LayerSpec::residual(13),                                              // 17
            LayerSpec::pool(),                                                    // 18
            LayerSpec::conv(16, 3, 1, 1), LayerSpec::norm(), LayerSpec::lif(lif), // 21
            LayerSpec::flatten(),
            LayerSpec::linear(10),
        };
    } else {
        throw ConfigError("unknown preset '" + name +
                          "' (available: mlp-mnist, cnn-mnist, resnet-mini)");
    }
    return spec;
}

// ---------------------------------------------------------------------------

void Network::infer_shapes() {
    shapes_.clear();
    shapes_.push_back({spec_.input_shape[0], spec_.input_shape[1], spec_.input_shape[2]});
    for (size_t i = 0; i < spec_.layers.size(); ++i) {
        const LayerSpec& l = spec_.layers[i];
        const std::vector<int64_t>& in = shapes_.back();
        const std::string where = "layer " + std::to_string(i) + " (" + to_string(l.kind) + ")";
        std::vector<int64_t> out;
        switch (l.kind) {
            case LayerKind::Conv: {
                if (in.size() != 3) throw ConfigError(where + ": needs a C,H,W input, got " + shape_str(in));
                if (l.kernel < 1 || l.out_channels < 1) throw ConfigError(where + ": bad kernel/channels");
                const int64_t ph = in[1] + 2 * l.padding, pw = in[2] + 2 * l.padding;
                if (l.kernel > ph || l.kernel > pw) {
                    throw ConfigError(where + ": kernel exceeds padded input " + shape_str(in));
                }
                if ((ph - l.kernel) % l.stride != 0 || (pw - l.kernel) % l.stride != 0) {
                    throw ConfigError(where + ": non-integral output size");
                }
                out = {l.out_channels, (ph - l.kernel) / l.stride + 1, (pw - l.kernel) / l.stride + 1};
                break;
            }
            case LayerKind::Linear: {
                if (in.size() != 1) {
                    throw ConfigError(where + ": needs a flat input, got " + shape_str(in) +
                                      " (insert a flatten layer)");
                }
                if (l.units < 1) throw ConfigError(where + ": bad units");
                out = {l.units};
                break;
            }
            case LayerKind::Norm:
            case LayerKind::Neuron:
                out = in;
                break;
            case LayerKind::Residual: {
                if (l.tap < -1 || l.tap >= static_cast<int>(i)) {
                    throw ConfigError(where + ": tap " + std::to_string(l.tap) +
                                      " must point at an earlier layer");
                }
                const std::vector<int64_t>& tapped = shapes_[static_cast<size_t>(l.tap + 1)];
                if (tapped != in) {
                    throw ConfigError(where + ": shape " + shape_str(in) +
                                      " does not match tapped layer " + std::to_string(l.tap) +
                                      " shape " + shape_str(tapped));
                }
                out = in;
                break;
            }
            case LayerKind::Pool: {
                if (in.size() != 3) throw ConfigError(where + ": needs a C,H,W input, got " + shape_str(in));
                if (in[1] % 2 != 0 || in[2] % 2 != 0) {
                    throw ConfigError(where + ": spatial dims must be even, got " + shape_str(in));
                }
                out = {in[0], in[1] / 2, in[2] / 2};
                break;
            }
            case LayerKind::Flatten: {
                int64_t n = 1;
                for (int64_t d : in) n *= d;
                out = {n};
                break;
            }
        }
        shapes_.push_back(std::move(out));
    }
    if (shapes_.back().size() != 1) {
        throw ConfigError("network must end in a flat classifier layer, got shape " +
                          shape_str(shapes_.back()));
    }
}

void Network::init_params(uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto kaiming = [&rng](std::vector<int64_t> shape, int64_t fan_in) {
        std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
        Tensor t(std::move(shape));
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
        return t;
    };
    sub_.assign(spec_.layers.size(), -1);
    for (size_t i = 0; i < spec_.layers.size(); ++i) {
        const LayerSpec& l = spec_.layers[i];
        const std::vector<int64_t>& in = shapes_[i];
        const std::string prefix = "layer" + std::to_string(i) + ".";
        switch (l.kind) {
            case LayerKind::Conv: {
                sub_[i] = static_cast<int>(conv_.size());
                const int64_t fan_in = in[0] * l.kernel * l.kernel;
                conv_.push_back(ConvState{
                    Parameter(prefix + "conv.weight",
                              kaiming({l.out_channels, in[0], l.kernel, l.kernel}, fan_in)),
                    Parameter(prefix + "conv.bias", Tensor::zeros({l.out_channels}))});
                break;
            }
            case LayerKind::Linear: {
                sub_[i] = static_cast<int>(linear_.size());
                linear_.push_back(LinearState{
                    Parameter(prefix + "linear.weight", kaiming({in[0], l.units}, in[0])),
                    Parameter(prefix + "linear.bias", Tensor::zeros({l.units}))});
                break;
            }
            case LayerKind::Norm: {
                sub_[i] = static_cast<int>(norm_.size());
                const int64_t c = in[0];
                norm_.push_back(NormState{Parameter(prefix + "norm.gamma", Tensor::full({c}, 1.0f)),
                                          Parameter(prefix + "norm.beta", Tensor::zeros({c})),
                                          Tensor::zeros({c}), Tensor::full({c}, 1.0f)});
                break;
            }
            case LayerKind::Neuron: {
                sub_[i] = static_cast<int>(neuron_.size());
                NeuronState ns;
                if (l.neuron.kind == NeuronKind::TrainableTernary) {
                    ns.amplitude = Parameter(prefix + "neuron.amplitude", Tensor::scalar(1.0f));
                }
                neuron_.push_back(std::move(ns));
                break;
            }
            default:
                break;
        }
    }
}

Network::Network(NetworkSpec spec, uint64_t seed) : spec_(std::move(spec)) {
    if (spec_.timesteps < 1) throw ConfigError("timesteps must be >= 1");
    infer_shapes();
    init_params(seed);
}

const std::vector<int64_t>& Network::shape_after(int i) const {
    return shapes_[static_cast<size_t>(i + 1)];
}

int64_t Network::num_classes() const { return shapes_.back()[0]; }

float Network::amplitude_of(int layer_index) const {
    const NeuronState& ns = neuron_[static_cast<size_t>(sub_[static_cast<size_t>(layer_index)])];
    return ns.amplitude ? ns.amplitude->value[0] : 1.0f;
}

std::vector<Parameter*> Network::trainable_parameters() {
    std::vector<Parameter*> out;
    for (size_t i = 0; i < spec_.layers.size(); ++i) {
        switch (spec_.layers[i].kind) {
            case LayerKind::Conv: {
                ConvState& s = conv_[static_cast<size_t>(sub_[i])];
                out.push_back(&s.weight);
                out.push_back(&s.bias);
                break;
            }
            case LayerKind::Linear: {
                LinearState& s = linear_[static_cast<size_t>(sub_[i])];
                out.push_back(&s.weight);
                out.push_back(&s.bias);
                break;
            }
            case LayerKind::Norm: {
                NormState& s = norm_[static_cast<size_t>(sub_[i])];
                out.push_back(&s.gamma);
                out.push_back(&s.beta);
                break;
            }
            case LayerKind::Neuron: {
                NeuronState& s = neuron_[static_cast<size_t>(sub_[i])];
                if (s.amplitude) out.push_back(&*s.amplitude);
                break;
            }
            default:
                break;
        }
    }
    return out;
}

std::vector<Parameter*> Network::amplitude_parameters() {
    std::vector<Parameter*> out;
    for (NeuronState& s : neuron_) {
        if (s.amplitude) out.push_back(&*s.amplitude);
    }
    return out;
}

std::vector<std::pair<std::string, Tensor*>> Network::named_state() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (Parameter* p : trainable_parameters()) out.emplace_back(p->name, &p->value);
    for (size_t i = 0; i < spec_.layers.size(); ++i) {
        if (spec_.layers[i].kind != LayerKind::Norm) continue;
        NormState& s = norm_[static_cast<size_t>(sub_[i])];
        const std::string prefix = "layer" + std::to_string(i) + ".norm.";
        out.emplace_back(prefix + "running_mean", &s.running_mean);
        out.emplace_back(prefix + "running_var", &s.running_var);
    }
    return out;
}

ValueId Network::forward(GradTape& tape, const Tensor& batch, bool train, ForwardRecord* record) {
    if (batch.rank() != 4 || batch.dim(1) != spec_.input_shape[0] ||
        batch.dim(2) != spec_.input_shape[1] || batch.dim(3) != spec_.input_shape[2]) {
        throw ShapeError("batch " + shape_str(batch.shape()) + " does not match network input " +
                         shape_str({spec_.input_shape[0], spec_.input_shape[1],
                                    spec_.input_shape[2]}));
    }
    const int64_t n = batch.dim(0);
    const int T = spec_.timesteps;
    const size_t num_layers = spec_.layers.size();

    // Watch every parameter once; ids are shared across timesteps.
    struct LayerIds {
        ValueId weight = -1, bias = -1, gamma = -1, beta = -1, amplitude = -1;
    };
    std::vector<LayerIds> ids(num_layers);
    for (size_t i = 0; i < num_layers; ++i) {
        switch (spec_.layers[i].kind) {
            case LayerKind::Conv: {
                ConvState& s = conv_[static_cast<size_t>(sub_[i])];
                ids[i].weight = tape.watch(s.weight);
                ids[i].bias = tape.watch(s.bias);
                break;
            }
            case LayerKind::Linear: {
                LinearState& s = linear_[static_cast<size_t>(sub_[i])];
                ids[i].weight = tape.watch(s.weight);
                ids[i].bias = tape.watch(s.bias);
                break;
            }
            case LayerKind::Norm: {
                NormState& s = norm_[static_cast<size_t>(sub_[i])];
                ids[i].gamma = tape.watch(s.gamma);
                ids[i].beta = tape.watch(s.beta);
                break;
            }
            case LayerKind::Neuron: {
                NeuronState& s = neuron_[static_cast<size_t>(sub_[i])];
                if (s.amplitude) ids[i].amplitude = tape.watch(*s.amplitude);
                break;
            }
            default:
                break;
        }
    }

    // Neuron state across timesteps.
    struct TapeNeuronState {
        ValueId u = -1;      // membrane id on the tape, -1 until t=1 has run
        Tensor base_prev;    // detached firing pattern driving the reset
    };
    std::vector<TapeNeuronState> nstate(num_layers);
    std::vector<ForwardRecord::NeuronTrace> traces;
    if (record) {
        for (size_t i = 0; i < num_layers; ++i) {
            if (spec_.layers[i].kind == LayerKind::Neuron) {
                ForwardRecord::NeuronTrace tr;
                tr.layer_index = static_cast<int>(i);
                traces.push_back(std::move(tr));
            }
        }
    }

    // Layers before the first neuron layer see the same input every
    // timestep under direct encoding, so their outputs are computed once.
    size_t prefix_len = num_layers;
    for (size_t i = 0; i < num_layers; ++i) {
        if (spec_.layers[i].kind == LayerKind::Neuron) {
            prefix_len = i;
            break;
        }
    }

    const ValueId input_id = tape.constant(batch);
    std::vector<ValueId> prefix_out(prefix_len + 1, -1);

    auto apply_stateless = [&](size_t i, ValueId x, const std::vector<ValueId>& layer_out) -> ValueId {
        const LayerSpec& l = spec_.layers[i];
        switch (l.kind) {
            case LayerKind::Conv:
                return ops::add_bias(tape, ops::conv2d(tape, x, ids[i].weight, l.stride, l.padding),
                                     ids[i].bias);
            case LayerKind::Linear:
                return ops::add_bias(tape, ops::matmul(tape, x, ids[i].weight), ids[i].bias);
            case LayerKind::Norm: {
                NormState& s = norm_[static_cast<size_t>(sub_[i])];
                ops::BatchNormArgs args;
                args.gamma = ids[i].gamma;
                args.beta = ids[i].beta;
                args.running_mean = &s.running_mean;
                args.running_var = &s.running_var;
                args.train = train;
                return ops::batch_norm(tape, x, args);
            }
            case LayerKind::Residual: {
                const ValueId tapped = l.tap < 0 ? input_id : layer_out[static_cast<size_t>(l.tap)];
                return ops::add(tape, x, tapped);
            }
            case LayerKind::Pool:
                return ops::avgpool2(tape, x);
            case LayerKind::Flatten: {
                const Tensor& v = tape.value(x);
                Tensor flat = v.reshaped({v.dim(0), v.numel() / v.dim(0)});
                // reshape is an identity on the flat data
                return tape.emit(std::move(flat), {x}, [x](GradTape& tp, ValueId y) {
                    const Tensor& g = tp.grad_out(y);
                    Tensor& dx = tp.grad_buffer(x);
                    const int64_t m = g.numel();
                    for (int64_t j = 0; j < m; ++j) dx[j] += g[j];
                });
            }
            case LayerKind::Neuron:
                throw ContractError("apply_stateless on a neuron layer");
        }
        throw ContractError("unreachable");
    };

    ValueId logits_acc = -1;
    for (int t = 0; t < T; ++t) {
        std::vector<ValueId> layer_out(num_layers, -1);
        ValueId x = input_id;
        size_t trace_idx = 0;
        for (size_t i = 0; i < num_layers; ++i) {
            const LayerSpec& l = spec_.layers[i];
            if (l.kind == LayerKind::Neuron) {
                TapeNeuronState& st = nstate[i];
                ValueId u_t;
                if (st.u < 0) {
                    // u^0 = 0 and o^0 = 0, so the first update is just the input
                    u_t = x;
                } else {
                    u_t = ops::lif_integrate(tape, st.u, st.base_prev, x, l.neuron);
                }
                ValueId b_t = ops::spike_base(tape, u_t, l.neuron);
                ValueId o_t = b_t;
                if (ids[i].amplitude >= 0) o_t = ops::mul(tape, b_t, ids[i].amplitude);
                if (record) {
                    ForwardRecord::NeuronTrace& tr = traces[trace_idx];
                    const Tensor& u_v = tape.value(u_t);
                    const Tensor& b_v = tape.value(b_t);
                    Tensor post(u_v.shape());
                    for (int64_t j = 0; j < post.numel(); ++j) {
                        post[j] = u_v[j] * (1.0f - std::fabs(b_v[j]));
                    }
                    tr.membrane_pre.push_back(u_v);
                    tr.membrane_post.push_back(std::move(post));
                    tr.spikes.push_back(tape.value(o_t));
                    tr.base.push_back(b_v);
                }
                st.u = u_t;
                st.base_prev = tape.value(b_t);
                x = o_t;
                ++trace_idx;
            } else if (i < prefix_len) {
                if (t == 0) prefix_out[i] = apply_stateless(i, x, prefix_out);
                x = prefix_out[i];
                layer_out[i] = x;
                continue;
            } else {
                x = apply_stateless(i, x, layer_out);
            }
            layer_out[i] = x;
        }
        logits_acc = (logits_acc < 0) ? x : ops::add(tape, logits_acc, x);
    }
    ValueId logits = ops::scale(tape, logits_acc, 1.0f / static_cast<float>(T));
    if (record) {
        record->traces = std::move(traces);
        record->logits = tape.value(logits);
        record->timesteps = T;
    }
    return logits;
}

} // namespace tspike
