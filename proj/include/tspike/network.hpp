#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tspike/autograd.hpp"
#include "tspike/neuron.hpp"
#include "tspike/tensor.hpp"

namespace tspike {

enum class LayerKind { Conv, Linear, Norm, Neuron, Residual, Pool, Flatten };

std::string to_string(LayerKind kind);

struct LayerSpec {
    LayerKind kind;
    // conv
    int out_channels = 0;
    int kernel = 0;
    int stride = 1;
    int padding = 0;
    // linear
    int units = 0;
    // neuron
    LIFConfig neuron;
    // residual: index of the earlier layer whose output is summed in
    int tap = -1;

    static LayerSpec conv(int out_channels, int kernel, int stride = 1, int padding = 0);
    static LayerSpec linear(int units);
    static LayerSpec norm();
    static LayerSpec lif(const LIFConfig& cfg);
    static LayerSpec residual(int tap);
    static LayerSpec pool();
    static LayerSpec flatten();
};

struct NetworkSpec {
    std::vector<LayerSpec> layers;
    int timesteps = 2;
    std::array<int64_t, 3> input_shape{1, 28, 28}; // C,H,W
    enum class Encoder { Direct } encoder = Encoder::Direct;
    enum class Readout { MeanPotential } readout = Readout::MeanPotential;

    // Structured-text (JSON) form; field names are part of the format
    // contract, see README. Unknown keys are rejected.
    std::string to_json() const;
    static NetworkSpec from_json(const std::string& text);
};

/// Presets: "mlp-mnist", "cnn-mnist", "resnet-mini". Every neuron layer uses
/// `kind`; the final classifier layer never spikes.
NetworkSpec build_preset(const std::string& name, NeuronKind kind, int timesteps);

/// Per-neuron-layer activity captured during a forward pass, for analysis
/// and verification. `membrane_pre` is u^t as computed by the update (the
/// value the threshold sees); `membrane_post` has the hard reset applied.
struct ForwardRecord {
    struct NeuronTrace {
        int layer_index = -1;
        std::vector<Tensor> membrane_pre;  // one per timestep
        std::vector<Tensor> membrane_post;
        std::vector<Tensor> spikes; // emitted values (amplitude-scaled)
        std::vector<Tensor> base;   // firing pattern in {-1,0,1}
    };
    std::vector<NeuronTrace> traces;
    Tensor logits;
    int timesteps = 0;
};

/// A NetworkSpec instantiated with parameters. Owns weights, biases, norm
/// parameters and running statistics, and spike amplitudes.
class Network {
public:
    Network(NetworkSpec spec, uint64_t seed);

    const NetworkSpec& spec() const { return spec_; }
    NetworkSpec& mutable_spec() { return spec_; }

    /// Parameters touched by the optimizer, in a stable order.
    std::vector<Parameter*> trainable_parameters();
    std::vector<Parameter*> amplitude_parameters();

    /// Every tensor a checkpoint must persist (parameters and norm running
    /// statistics), keyed by stable names like "layer0.conv.weight".
    std::vector<std::pair<std::string, Tensor*>> named_state();

    /// Unrolls the network over spec().timesteps with direct encoding and
    /// mean-potential readout; returns the logits id on the tape.
    ValueId forward(GradTape& tape, const Tensor& batch, bool train,
                    ForwardRecord* record = nullptr);

    /// Feature shape (without batch dim) after layer i; index -1 gives the
    /// input shape.
    const std::vector<int64_t>& shape_after(int i) const;
    int64_t num_classes() const;

    /// Scalar amplitude of a trainable-ternary layer; 1.0 otherwise.
    float amplitude_of(int layer_index) const;

private:
    struct ConvState {
        Parameter weight, bias;
    };
    struct LinearState {
        Parameter weight, bias;
    };
    struct NormState {
        Parameter gamma, beta;
        Tensor running_mean, running_var;
    };
    struct NeuronState {
        std::optional<Parameter> amplitude;
    };

    void infer_shapes();
    void init_params(uint64_t seed);

    NetworkSpec spec_;
    std::vector<std::vector<int64_t>> shapes_; // shapes_[i] = shape after layer i-1
    std::vector<ConvState> conv_;
    std::vector<LinearState> linear_;
    std::vector<NormState> norm_;
    std::vector<NeuronState> neuron_;
    std::vector<int> sub_; // layer index -> index into its kind's vector

    friend class NetworkAccess;
};

} // namespace tspike
