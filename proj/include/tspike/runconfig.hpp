#pragma once

#include <string>

#include "tspike/network.hpp"
#include "tspike/training.hpp"

namespace tspike {

/// One structured text file driving a whole run; every field has a default
/// and can be overridden from the CLI. Unknown keys are rejected.
struct RunConfig {
    std::string preset = "cnn-mnist";
    std::string spec_file;             // overrides `preset` when set
    NeuronKind neuron = NeuronKind::Ternary;
    int timesteps = 2;
    std::string dataset = "mnist";     // mnist | fashion-mnist | cifar10
    std::string data_dir = "data/mnist";
    std::string out_dir = "runs/run";
    TrainConfig train;

    std::string to_json() const;
    static RunConfig from_json(const std::string& text);
    static RunConfig from_file(const std::string& path);

    NetworkSpec network_spec() const;
    DatasetHandle load_dataset() const;
};

} // namespace tspike
