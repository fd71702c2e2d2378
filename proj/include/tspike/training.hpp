#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tspike/dataset.hpp"
#include "tspike/network.hpp"

namespace tspike {

enum class OptimizerKind { SgdMomentum, Adam };
enum class LrSchedule { Constant, Cosine };

std::string to_string(OptimizerKind k);
std::string to_string(LrSchedule s);
OptimizerKind optimizer_from_string(const std::string& s);
LrSchedule schedule_from_string(const std::string& s);

struct TrainConfig {
    int epochs = 3;
    int batch_size = 128;
    float learning_rate = 0.1f;
    float weight_decay = 5e-4f;
    float momentum = 0.9f;
    uint64_t seed = 1;
    OptimizerKind optimizer = OptimizerKind::SgdMomentum;
    LrSchedule lr_schedule = LrSchedule::Cosine;
    float grad_clip = 5.0f; // global norm; <= 0 disables
    int max_steps = 0;      // > 0 caps the number of optimizer steps
    bool verbose = false;

    void validate() const;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0;
    double train_acc = 0;
    double val_acc = 0;
    double lr = 0;
};

struct EvalMetrics {
    double top1 = 0;
    double loss = 0;
    std::vector<int> neuron_layers;      // spec indices, order of appearance
    std::vector<double> layer_sparsity;  // nonzero-spike rate per neuron layer
    double overall_sparsity = 0;         // both -1 and +1 count as firing
};

/// All parameter values plus norm running statistics, with the spec and a
/// little training history. Save/load round-trips the tensors bit-exactly
/// through the TSPK container.
struct Checkpoint {
    NetworkSpec spec;
    std::vector<std::pair<std::string, Tensor>> tensors;
    int epoch = 0;
    std::vector<EpochStats> history;

    void save(const std::string& dir) const;
    static Checkpoint load(const std::string& dir);

    const Tensor* find(const std::string& name) const;
    Tensor* find(const std::string& name);
};

Checkpoint snapshot(Network& net, int epoch = 0, std::vector<EpochStats> history = {});

/// Instantiate the checkpoint's network and copy every stored tensor into it.
Network restore(const Checkpoint& ckpt);

/// Surrogate-gradient BPTT training. Returns the checkpoint with the best
/// validation (test-split) accuracy. Aborts with a diagnostic naming the
/// epoch and the first non-finite tensor if the loss diverges.
Checkpoint train(const NetworkSpec& spec, const DatasetHandle& data, const TrainConfig& cfg);

/// Deterministic evaluation: top-1 accuracy, mean loss, and per-layer firing
/// sparsity (fraction of nonzero spikes).
EvalMetrics evaluate(Network& net, const Tensor& images, const std::vector<int>& labels,
                     int batch_size = 256);
EvalMetrics evaluate(const Checkpoint& ckpt, const Tensor& images, const std::vector<int>& labels,
                     int batch_size = 256);

/// Forward pass with recording over (at most) the first `count` images;
/// used by the analysis and conversion paths.
ForwardRecord record_forward(Network& net, const Tensor& images, int64_t count);

} // namespace tspike
