#include "tspike/runconfig.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tspike/error.hpp"

namespace tspike {

using json = nlohmann::ordered_json;

std::string RunConfig::to_json() const {
    json doc;
    doc["preset"] = preset;
    doc["spec_file"] = spec_file;
    doc["neuron"] = to_string(neuron);
    doc["timesteps"] = timesteps;
    doc["dataset"] = dataset;
    doc["data_dir"] = data_dir;
    doc["out_dir"] = out_dir;
    doc["train"] = {{"epochs", train.epochs},
                    {"batch_size", train.batch_size},
                    {"learning_rate", train.learning_rate},
                    {"weight_decay", train.weight_decay},
                    {"momentum", train.momentum},
                    {"seed", train.seed},
                    {"optimizer", to_string(train.optimizer)},
                    {"lr_schedule", to_string(train.lr_schedule)},
                    {"grad_clip", train.grad_clip},
                    {"max_steps", train.max_steps}};
    return doc.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("run config is not valid JSON: ") + e.what());
    }
    static const std::set<std::string> top = {"preset",  "spec_file", "neuron", "timesteps",
                                              "dataset", "data_dir",  "out_dir", "train"};
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        if (!top.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in run config");
    }
    RunConfig c;
    if (doc.contains("preset")) c.preset = doc["preset"].get<std::string>();
    if (doc.contains("spec_file")) c.spec_file = doc["spec_file"].get<std::string>();
    if (doc.contains("neuron")) c.neuron = neuron_kind_from_string(doc["neuron"].get<std::string>());
    if (doc.contains("timesteps")) c.timesteps = doc["timesteps"].get<int>();
    if (doc.contains("dataset")) c.dataset = doc["dataset"].get<std::string>();
    if (doc.contains("data_dir")) c.data_dir = doc["data_dir"].get<std::string>();
    if (doc.contains("out_dir")) c.out_dir = doc["out_dir"].get<std::string>();
    if (doc.contains("train")) {
        const json& tr = doc["train"];
        static const std::set<std::string> keys = {
            "epochs",   "batch_size", "learning_rate", "weight_decay", "momentum",
            "seed",     "optimizer",  "lr_schedule",   "grad_clip",    "max_steps"};
        for (auto it = tr.begin(); it != tr.end(); ++it) {
            if (!keys.count(it.key())) {
                throw ConfigError("unknown key 'train." + it.key() + "' in run config");
            }
        }
        if (tr.contains("epochs")) c.train.epochs = tr["epochs"].get<int>();
        if (tr.contains("batch_size")) c.train.batch_size = tr["batch_size"].get<int>();
        if (tr.contains("learning_rate")) c.train.learning_rate = tr["learning_rate"].get<float>();
        if (tr.contains("weight_decay")) c.train.weight_decay = tr["weight_decay"].get<float>();
        if (tr.contains("momentum")) c.train.momentum = tr["momentum"].get<float>();
        if (tr.contains("seed")) c.train.seed = tr["seed"].get<uint64_t>();
        if (tr.contains("optimizer")) {
            c.train.optimizer = optimizer_from_string(tr["optimizer"].get<std::string>());
        }
        if (tr.contains("lr_schedule")) {
            c.train.lr_schedule = schedule_from_string(tr["lr_schedule"].get<std::string>());
        }
        if (tr.contains("grad_clip")) c.train.grad_clip = tr["grad_clip"].get<float>();
        if (tr.contains("max_steps")) c.train.max_steps = tr["max_steps"].get<int>();
    }
    c.train.validate();
    if (c.timesteps < 1) throw ConfigError("timesteps must be >= 1");
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open run config " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

NetworkSpec RunConfig::network_spec() const {
    if (!spec_file.empty()) {
        std::ifstream in(spec_file);
        if (!in) throw Error("cannot open network spec " + spec_file);
        std::ostringstream ss;
        ss << in.rdbuf();
        NetworkSpec spec = NetworkSpec::from_json(ss.str());
        spec.timesteps = timesteps;
        return spec;
    }
    return build_preset(preset, neuron, timesteps);
}

DatasetHandle RunConfig::load_dataset() const {
    if (dataset == "mnist" || dataset == "fashion-mnist") {
        return load_mnist_dir(data_dir, dataset);
    }
    if (dataset == "cifar10") return load_cifar10_dir(data_dir);
    throw ConfigError("unknown dataset '" + dataset +
                      "' (expected mnist, fashion-mnist or cifar10)");
}

} // namespace tspike
