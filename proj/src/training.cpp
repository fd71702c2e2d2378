#include "tspike/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "tspike/error.hpp"

namespace tspike {

using json = nlohmann::ordered_json;

std::string to_string(OptimizerKind k) {
    return k == OptimizerKind::SgdMomentum ? "sgd-momentum" : "adam";
}

std::string to_string(LrSchedule s) {
    return s == LrSchedule::Constant ? "constant" : "cosine";
}

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "sgd-momentum" || s == "sgd") return OptimizerKind::SgdMomentum;
    if (s == "adam") return OptimizerKind::Adam;
    throw ConfigError("unknown optimizer '" + s + "' (expected sgd-momentum or adam)");
}

LrSchedule schedule_from_string(const std::string& s) {
    if (s == "constant") return LrSchedule::Constant;
    if (s == "cosine") return LrSchedule::Cosine;
    throw ConfigError("unknown lr schedule '" + s + "' (expected constant or cosine)");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (learning_rate < 0.0f) throw ConfigError("learning_rate must be >= 0");
    if (weight_decay < 0.0f) throw ConfigError("weight_decay must be >= 0");
    if (momentum < 0.0f || momentum >= 1.0f) throw ConfigError("momentum must be in [0,1)");
}

namespace {

// SGD-with-momentum / Adam over a fixed parameter list. Amplitudes are
// excluded from weight decay: decaying them drags every spike toward zero
// amplitude.
class Optimizer {
public:
    Optimizer(std::vector<Parameter*> params, std::set<const Parameter*> no_decay,
              const TrainConfig& cfg)
        : params_(std::move(params)), no_decay_(std::move(no_decay)), cfg_(cfg) {
        slot1_.resize(params_.size());
        slot2_.resize(params_.size());
        for (size_t i = 0; i < params_.size(); ++i) {
            slot1_[i] = Tensor::zeros(params_[i]->value.shape());
            if (cfg_.optimizer == OptimizerKind::Adam) {
                slot2_[i] = Tensor::zeros(params_[i]->value.shape());
            }
        }
    }

    void clip_gradients() {
        if (cfg_.grad_clip <= 0.0f) return;
        double sq = 0.0;
        for (Parameter* p : params_) {
            for (int64_t i = 0; i < p->grad.numel(); ++i) {
                sq += static_cast<double>(p->grad[i]) * p->grad[i];
            }
        }
        const double norm = std::sqrt(sq);
        if (norm <= cfg_.grad_clip) return;
        const float s = static_cast<float>(cfg_.grad_clip / norm);
        for (Parameter* p : params_) {
            for (int64_t i = 0; i < p->grad.numel(); ++i) p->grad[i] *= s;
        }
    }

    void step(float lr) {
        ++t_;
        for (size_t i = 0; i < params_.size(); ++i) {
            Parameter& p = *params_[i];
            const float wd = no_decay_.count(&p) ? 0.0f : cfg_.weight_decay;
            if (cfg_.optimizer == OptimizerKind::SgdMomentum) {
                Tensor& vel = slot1_[i];
                for (int64_t j = 0; j < p.value.numel(); ++j) {
                    const float g = p.grad[j] + wd * p.value[j];
                    vel[j] = cfg_.momentum * vel[j] + g;
                    p.value[j] -= lr * vel[j];
                }
            } else {
                constexpr float b1 = 0.9f, b2 = 0.999f, eps = 1e-8f;
                Tensor& m = slot1_[i];
                Tensor& v = slot2_[i];
                const float c1 = 1.0f - std::pow(b1, static_cast<float>(t_));
                const float c2 = 1.0f - std::pow(b2, static_cast<float>(t_));
                for (int64_t j = 0; j < p.value.numel(); ++j) {
                    const float g = p.grad[j] + wd * p.value[j];
                    m[j] = b1 * m[j] + (1.0f - b1) * g;
                    v[j] = b2 * v[j] + (1.0f - b2) * g * g;
                    p.value[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
                }
            }
        }
    }

private:
    std::vector<Parameter*> params_;
    std::set<const Parameter*> no_decay_;
    TrainConfig cfg_;
    std::vector<Tensor> slot1_, slot2_;
    int64_t t_ = 0;
};

Tensor gather_batch(const Tensor& images, const std::vector<int64_t>& order, int64_t begin,
                    int64_t end, std::vector<int>* batch_labels, const std::vector<int>& labels) {
    std::vector<int64_t> shape = images.shape();
    const int64_t per = images.numel() / shape[0];
    shape[0] = end - begin;
    Tensor out(shape);
    for (int64_t i = begin; i < end; ++i) {
        const int64_t src = order[static_cast<size_t>(i)];
        std::copy(images.data() + src * per, images.data() + (src + 1) * per,
                  out.data() + (i - begin) * per);
        if (batch_labels) batch_labels->push_back(labels[static_cast<size_t>(src)]);
    }
    return out;
}

int64_t argmax_row(const float* row, int64_t k) {
    int64_t best = 0;
    for (int64_t j = 1; j < k; ++j) {
        if (row[j] > row[best]) best = j;
    }
    return best;
}

std::string first_non_finite(Network& net) {
    for (auto& [name, tensor] : net.named_state()) {
        if (!tensor->all_finite()) return name;
    }
    return "(activations)";
}

} // namespace

Checkpoint snapshot(Network& net, int epoch, std::vector<EpochStats> history) {
    Checkpoint c;
    c.spec = net.spec();
    c.epoch = epoch;
    c.history = std::move(history);
    for (auto& [name, tensor] : net.named_state()) c.tensors.emplace_back(name, *tensor);
    return c;
}

Network restore(const Checkpoint& ckpt) {
    Network net(ckpt.spec, /*seed=*/0);
    auto state = net.named_state();
    if (state.size() != ckpt.tensors.size()) {
        throw FormatError("checkpoint holds " + std::to_string(ckpt.tensors.size()) +
                          " tensors but the spec needs " + std::to_string(state.size()));
    }
    for (auto& [name, dst] : state) {
        const Tensor* src = ckpt.find(name);
        if (!src) throw FormatError("checkpoint is missing tensor '" + name + "'");
        if (src->shape() != dst->shape()) {
            throw FormatError("checkpoint tensor '" + name + "' has shape " +
                              shape_str(src->shape()) + ", expected " + shape_str(dst->shape()));
        }
        *dst = *src;
    }
    return net;
}

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return &t;
    }
    return nullptr;
}

Tensor* Checkpoint::find(const std::string& name) {
    for (auto& [n, t] : tensors) {
        if (n == name) return &t;
    }
    return nullptr;
}

void Checkpoint::save(const std::string& dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "tensors");
    json manifest;
    manifest["format"] = "tspike-checkpoint";
    manifest["version"] = 1;
    manifest["epoch"] = epoch;
    manifest["spec"] = json::parse(spec.to_json());
    manifest["tensors"] = json::array();
    for (const auto& [name, t] : tensors) manifest["tensors"].push_back(name);
    manifest["history"] = json::array();
    for (const EpochStats& e : history) {
        manifest["history"].push_back({{"epoch", e.epoch},
                                       {"train_loss", e.train_loss},
                                       {"train_acc", e.train_acc},
                                       {"val_acc", e.val_acc},
                                       {"lr", e.lr}});
    }
    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw Error("cannot write checkpoint manifest in " + dir);
    out << manifest.dump(2) << "\n";
    for (const auto& [name, t] : tensors) {
        t.save_file((fs::path(dir) / "tensors" / (name + ".tspk")).string());
    }
}

Checkpoint Checkpoint::load(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) throw Error("cannot open checkpoint manifest in " + dir);
    json manifest;
    try {
        in >> manifest;
    } catch (const json::parse_error& e) {
        throw FormatError(dir + "/manifest.json is not valid JSON: " + e.what());
    }
    if (!manifest.contains("format") || manifest["format"] != "tspike-checkpoint") {
        throw FormatError(dir + ": not a tspike checkpoint manifest");
    }
    Checkpoint c;
    c.epoch = manifest.value("epoch", 0);
    c.spec = NetworkSpec::from_json(manifest.at("spec").dump());
    for (const json& e : manifest.value("history", json::array())) {
        EpochStats s;
        s.epoch = e.value("epoch", 0);
        s.train_loss = e.value("train_loss", 0.0);
        s.train_acc = e.value("train_acc", 0.0);
        s.val_acc = e.value("val_acc", 0.0);
        s.lr = e.value("lr", 0.0);
        c.history.push_back(s);
    }
    for (const json& name : manifest.at("tensors")) {
        const std::string n = name.get<std::string>();
        c.tensors.emplace_back(n, Tensor::load_file((fs::path(dir) / "tensors" / (n + ".tspk")).string()));
    }
    return c;
}

EvalMetrics evaluate(Network& net, const Tensor& images, const std::vector<int>& labels,
                     int batch_size) {
    if (images.dim(0) != static_cast<int64_t>(labels.size())) {
        throw ConfigError("evaluate: " + std::to_string(images.dim(0)) + " images vs " +
                          std::to_string(labels.size()) + " labels");
    }
    const int64_t n = images.dim(0);
    const int64_t per = images.numel() / n;
    EvalMetrics m;
    for (size_t i = 0; i < net.spec().layers.size(); ++i) {
        if (net.spec().layers[i].kind == LayerKind::Neuron) {
            m.neuron_layers.push_back(static_cast<int>(i));
        }
    }
    std::vector<int64_t> fired(m.neuron_layers.size(), 0), total(m.neuron_layers.size(), 0);
    double loss_sum = 0.0;
    int64_t correct = 0;
    for (int64_t begin = 0; begin < n; begin += batch_size) {
        const int64_t end = std::min(n, begin + batch_size);
        std::vector<int64_t> shape = images.shape();
        shape[0] = end - begin;
        Tensor batch(shape);
        std::copy(images.data() + begin * per, images.data() + end * per, batch.data());
        std::vector<int> batch_labels(labels.begin() + begin, labels.begin() + end);

        GradTape tape;
        ForwardRecord rec;
        ValueId logits = net.forward(tape, batch, /*train=*/false, &rec);
        ValueId loss = ops::softmax_cross_entropy(tape, logits, batch_labels);
        loss_sum += static_cast<double>(tape.value(loss)[0]) * static_cast<double>(end - begin);
        const Tensor& lv = tape.value(logits);
        const int64_t k = lv.dim(1);
        for (int64_t i = 0; i < end - begin; ++i) {
            if (argmax_row(lv.data() + i * k, k) == batch_labels[static_cast<size_t>(i)]) ++correct;
        }
        for (size_t li = 0; li < rec.traces.size(); ++li) {
            for (const Tensor& base : rec.traces[li].base) {
                for (int64_t j = 0; j < base.numel(); ++j) {
                    if (base[j] != 0.0f) ++fired[li];
                }
                total[li] += base.numel();
            }
        }
    }
    m.top1 = static_cast<double>(correct) / static_cast<double>(n);
    m.loss = loss_sum / static_cast<double>(n);
    int64_t fired_all = 0, total_all = 0;
    for (size_t i = 0; i < fired.size(); ++i) {
        m.layer_sparsity.push_back(total[i] ? static_cast<double>(fired[i]) / static_cast<double>(total[i])
                                            : 0.0);
        fired_all += fired[i];
        total_all += total[i];
    }
    m.overall_sparsity = total_all ? static_cast<double>(fired_all) / static_cast<double>(total_all) : 0.0;
    return m;
}

EvalMetrics evaluate(const Checkpoint& ckpt, const Tensor& images, const std::vector<int>& labels,
                     int batch_size) {
    Network net = restore(ckpt);
    return evaluate(net, images, labels, batch_size);
}

ForwardRecord record_forward(Network& net, const Tensor& images, int64_t count) {
    count = std::min(count, images.dim(0));
    const int64_t per = images.numel() / images.dim(0);
    std::vector<int64_t> shape = images.shape();
    shape[0] = count;
    Tensor batch(shape);
    std::copy(images.data(), images.data() + count * per, batch.data());
    GradTape tape;
    ForwardRecord rec;
    net.forward(tape, batch, /*train=*/false, &rec);
    return rec;
}

Checkpoint train(const NetworkSpec& spec, const DatasetHandle& data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.train_size() == 0) throw ConfigError("train: dataset has no training samples");

    Network net(spec, cfg.seed);
    std::vector<Parameter*> params = net.trainable_parameters();
    std::set<const Parameter*> no_decay;
    for (Parameter* p : net.amplitude_parameters()) no_decay.insert(p);
    Optimizer opt(params, std::move(no_decay), cfg);

    const int64_t n = data.train_size();
    const int64_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const int64_t planned_steps =
        cfg.max_steps > 0 ? cfg.max_steps : steps_per_epoch * cfg.epochs;

    std::mt19937_64 rng(cfg.seed);
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    std::vector<EpochStats> history;
    Checkpoint best;
    double best_val = -1.0;
    int64_t step = 0;
    bool done = false;

    for (int epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        int64_t correct = 0, seen = 0;
        double lr = cfg.learning_rate;
        for (int64_t begin = 0; begin < n && !done; begin += cfg.batch_size) {
            const int64_t end = std::min(n, begin + cfg.batch_size);
            std::vector<int> batch_labels;
            Tensor batch = gather_batch(data.train_images, order, begin, end, &batch_labels,
                                        data.train_labels);
            for (Parameter* p : params) p->zero_grad();
            GradTape tape;
            ValueId logits = net.forward(tape, batch, /*train=*/true);
            ValueId loss = ops::softmax_cross_entropy(tape, logits, batch_labels);
            const float loss_val = tape.value(loss)[0];
            if (!std::isfinite(loss_val)) {
                throw Error("training diverged: non-finite loss at epoch " +
                            std::to_string(epoch) + ", step " + std::to_string(step) +
                            "; first non-finite tensor: " + first_non_finite(net));
            }
            const Tensor& lv = tape.value(logits);
            for (int64_t i = 0; i < end - begin; ++i) {
                if (argmax_row(lv.data() + i * lv.dim(1), lv.dim(1)) ==
                    batch_labels[static_cast<size_t>(i)]) {
                    ++correct;
                }
            }
            loss_sum += static_cast<double>(loss_val) * static_cast<double>(end - begin);
            seen += end - begin;

            tape.backward(loss);
            opt.clip_gradients();
            lr = cfg.learning_rate;
            if (cfg.lr_schedule == LrSchedule::Cosine) {
                lr *= 0.5f * (1.0f + std::cos(M_PI * static_cast<double>(step) /
                                              static_cast<double>(planned_steps)));
            }
            opt.step(static_cast<float>(lr));
            ++step;
            if (cfg.max_steps > 0 && step >= cfg.max_steps) done = true;
        }
        EvalMetrics val = evaluate(net, data.test_images, data.test_labels);
        EpochStats es;
        es.epoch = epoch;
        es.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
        es.train_acc = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
        es.val_acc = val.top1;
        es.lr = lr;
        history.push_back(es);
        if (cfg.verbose) {
            std::printf("epoch %d  train loss %.4f  train acc %.4f  val acc %.4f\n", epoch,
                        es.train_loss, es.train_acc, es.val_acc);
            std::fflush(stdout);
        }
        if (val.top1 > best_val) {
            best_val = val.top1;
            best = snapshot(net, epoch, history);
        }
    }
    best.history = std::move(history);
    return best;
}

} // namespace tspike
