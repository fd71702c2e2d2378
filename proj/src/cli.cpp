#include "tspike/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "tspike/analysis.hpp"
#include "tspike/dataset.hpp"
#include "tspike/energy.hpp"
#include "tspike/error.hpp"
#include "tspike/network.hpp"
#include "tspike/reparam.hpp"
#include "tspike/runconfig.hpp"
#include "tspike/training.hpp"

namespace tspike {

namespace fs = std::filesystem;

namespace {

Tensor probe_batch(const DatasetHandle* data, const NetworkSpec& spec, int64_t count,
                   uint64_t seed) {
    if (data && data->test_size() > 0) {
        count = std::min<int64_t>(count, data->test_size());
        std::vector<int64_t> shape = data->test_images.shape();
        const int64_t per = data->test_images.numel() / shape[0];
        shape[0] = count;
        Tensor t(shape);
        std::copy(data->test_images.data(), data->test_images.data() + count * per, t.data());
        return t;
    }
    // no dataset: standardized-looking noise with the network's input shape
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> dist(0.0f, 1.0f);
    Tensor t({count, spec.input_shape[0], spec.input_shape[1], spec.input_shape[2]});
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
    return t;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

// ---------------------------------------------------------------- train --

int cmd_train(const RunConfig& cfg) {
    DatasetHandle data = cfg.load_dataset();
    NetworkSpec spec = cfg.network_spec();
    std::printf("training %s / %s neurons / T=%d on %s (%lld train, %lld test)\n",
                cfg.spec_file.empty() ? cfg.preset.c_str() : cfg.spec_file.c_str(),
                to_string(cfg.neuron).c_str(), spec.timesteps, data.name.c_str(),
                static_cast<long long>(data.train_size()),
                static_cast<long long>(data.test_size()));
    Checkpoint ckpt = train(spec, data, cfg.train);

    fs::create_directories(cfg.out_dir);
    ckpt.save((fs::path(cfg.out_dir) / "checkpoint").string());
    write_text(fs::path(cfg.out_dir) / "runconfig.json", cfg.to_json() + "\n");
    std::ostringstream metrics;
    metrics << "epoch\ttrain_loss\ttrain_acc\tval_acc\tlr\n";
    for (const EpochStats& e : ckpt.history) {
        metrics << e.epoch << "\t" << e.train_loss << "\t" << e.train_acc << "\t" << e.val_acc
                << "\t" << e.lr << "\n";
    }
    write_text(fs::path(cfg.out_dir) / "metrics.tsv", metrics.str());

    EvalMetrics m = evaluate(ckpt, data.test_images, data.test_labels);
    std::printf("best checkpoint: epoch %d, test top1 %.4f, loss %.4f, sparsity %.4f\n",
                ckpt.epoch, m.top1, m.loss, m.overall_sparsity);
    std::printf("saved to %s\n", cfg.out_dir.c_str());
    return 0;
}

// ----------------------------------------------------------------- eval --

int cmd_eval(const std::string& ckpt_dir, const std::string& dataset, const std::string& data_dir,
             int batch_size) {
    Checkpoint ckpt = Checkpoint::load(ckpt_dir);
    RunConfig cfg;
    cfg.dataset = dataset;
    cfg.data_dir = data_dir;
    DatasetHandle data = cfg.load_dataset();
    EvalMetrics m = evaluate(ckpt, data.test_images, data.test_labels, batch_size);
    std::printf("test top1 %.4f, loss %.4f\n", m.top1, m.loss);
    std::printf("firing sparsity (nonzero spike rate, -1 and +1 both count):\n");
    for (size_t i = 0; i < m.neuron_layers.size(); ++i) {
        std::printf("  layer %d: %.4f\n", m.neuron_layers[i], m.layer_sparsity[i]);
    }
    std::printf("  overall: %.4f\n", m.overall_sparsity);
    return 0;
}

// -------------------------------------------------------------- convert --

int cmd_convert(const std::string& in_dir, const std::string& out_dir, const std::string& dataset,
                const std::string& data_dir, int64_t probe_count, double tol) {
    Checkpoint original = Checkpoint::load(in_dir);
    ConversionReport rep;
    Checkpoint converted = fold_amplitudes(original, &rep);

    std::optional<DatasetHandle> data;
    if (!data_dir.empty()) {
        RunConfig cfg;
        cfg.dataset = dataset;
        cfg.data_dir = data_dir;
        data = cfg.load_dataset();
    }
    Tensor probe = probe_batch(data ? &*data : nullptr, original.spec, probe_count, /*seed=*/1234);
    rep = verify_equivalence(original, converted, probe, tol, std::move(rep));

    converted.save(out_dir);
    write_text(fs::path(out_dir) / "conversion_report.txt", rep.to_text());
    std::fputs(rep.to_text().c_str(), stdout);
    return 0;
}

// -------------------------------------------------------------- analyze --

int cmd_analyze(const std::string& ckpt_dir, const std::string& dataset,
                const std::string& data_dir, int64_t probe_count, int bins, bool post_reset,
                const std::string& out_dir) {
    Checkpoint ckpt = Checkpoint::load(ckpt_dir);
    Network net = restore(ckpt);
    std::optional<DatasetHandle> data;
    if (!data_dir.empty()) {
        RunConfig cfg;
        cfg.dataset = dataset;
        cfg.data_dir = data_dir;
        data = cfg.load_dataset();
    }
    Tensor probe = probe_batch(data ? &*data : nullptr, ckpt.spec, probe_count, /*seed=*/99);
    ForwardRecord rec = record_forward(net, probe, probe.dim(0));

    const auto hists = membrane_profile(rec, bins, post_reset);
    const auto mom = membrane_moments(rec, post_reset);
    const auto stats = spike_stats(rec);
    const auto cap = capacity_report(net);

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ostringstream hs;
        hs << "layer\ttimestep\tbin\tlo\thi\tcount\n";
        for (const MembraneHistogram& h : hists) {
            const double width = (h.hi - h.lo) / static_cast<double>(h.counts.size());
            for (size_t b = 0; b < h.counts.size(); ++b) {
                hs << h.layer_index << "\t" << h.timestep << "\t" << b << "\t"
                   << h.lo + width * static_cast<double>(b) << "\t"
                   << h.lo + width * static_cast<double>(b + 1) << "\t" << h.counts[b] << "\n";
            }
        }
        write_text(fs::path(out_dir) / "membrane_hist.tsv", hs.str());

        std::ostringstream ms;
        ms << "layer\tmean\tstddev\tcount\n";
        for (const LayerMoments& m : mom) {
            ms << m.layer_index << "\t" << m.mean << "\t" << m.stddev << "\t" << m.count << "\n";
        }
        write_text(fs::path(out_dir) / "membrane_moments.tsv", ms.str());

        std::ostringstream ss;
        ss << "layer\trate_pos\trate_neg\trate_zero\tentropy_bits\tcount\n";
        for (const SpikeLayerStats& s : stats) {
            ss << s.layer_index << "\t" << s.rate_pos << "\t" << s.rate_neg << "\t" << s.rate_zero
               << "\t" << s.entropy << "\t" << s.count << "\n";
        }
        write_text(fs::path(out_dir) / "spike_stats.tsv", ss.str());

        std::ostringstream cs;
        cs << "layer\tC\tH\tW\tbits_binary\tbits_ternary\tbits_real32\tratio_ternary\tratio_real\n";
        for (const CapacityRow& r : cap) {
            cs << r.layer_index << "\t" << r.shape[0] << "\t" << r.shape[1] << "\t" << r.shape[2]
               << "\t" << r.bits_binary << "\t" << r.bits_ternary << "\t" << r.bits_real32 << "\t"
               << r.ratio_ternary_binary << "\t" << r.ratio_real_binary << "\n";
        }
        write_text(fs::path(out_dir) / "capacity.tsv", cs.str());
        std::printf("tables written to %s\n", out_dir.c_str());
    }

    std::printf("membranes (%s-reset), %lld probe images:\n", post_reset ? "post" : "pre",
                static_cast<long long>(probe.dim(0)));
    for (const LayerMoments& m : mom) {
        std::printf("  layer %d: mean %+.4f  std %.4f\n", m.layer_index, m.mean, m.stddev);
    }
    std::printf("spikes:\n");
    for (const SpikeLayerStats& s : stats) {
        std::printf("  layer %d: +1 %.4f  -1 %.4f  0 %.4f  entropy %.4f bits\n", s.layer_index,
                    s.rate_pos, s.rate_neg, s.rate_zero, s.entropy);
    }
    return 0;
}

// --------------------------------------------------------------- energy --

struct CountsFile {
    double flops = -1, sops = -1, signs = -1;
    double sparsity = 0, timesteps = 0; // optional, enable implied-A
};

CountsFile parse_counts_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open counts file " + path);
    CountsFile c;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::string key, eq;
        double value;
        std::istringstream ls(line);
        if (!(ls >> key)) continue; // blank
        if (!(ls >> eq >> value) || eq != "=") {
            throw FormatError(path + ":" + std::to_string(lineno) +
                              ": expected 'key = value', got '" + line + "'");
        }
        if (key == "flops") c.flops = value;
        else if (key == "sops") c.sops = value;
        else if (key == "signs") c.signs = value;
        else if (key == "sparsity") c.sparsity = value;
        else if (key == "timesteps") c.timesteps = value;
        else {
            throw FormatError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
    }
    if (c.flops < 0 || c.sops < 0 || c.signs < 0) {
        throw FormatError(path + ": counts file needs flops, sops and signs");
    }
    return c;
}

int cmd_energy(const std::string& counts_path, const std::string& ckpt_dir,
               const std::string& dataset, const std::string& data_dir, int64_t probe_count) {
    CostTable cost;
    if (!counts_path.empty()) {
        CountsFile c = parse_counts_file(counts_path);
        EnergyReport rep = estimate_from_counts(c.flops, c.sops, c.signs, cost);
        std::fputs(rep.to_text().c_str(), stdout);
        if (c.sparsity > 0 && c.timesteps > 0) {
            std::printf("  implied ANN additions A = sops/(s*T) = %.4g\n",
                        implied_ann_additions(c.sops, c.sparsity, c.timesteps));
        }
        return 0;
    }
    if (ckpt_dir.empty()) throw ConfigError("energy: need either --counts or --ckpt");
    Checkpoint ckpt = Checkpoint::load(ckpt_dir);
    RunConfig cfg;
    cfg.dataset = dataset;
    cfg.data_dir = data_dir;
    DatasetHandle data = cfg.load_dataset();
    const int64_t count = std::min<int64_t>(probe_count, data.test_size());
    std::vector<int64_t> shape = data.test_images.shape();
    const int64_t per = data.test_images.numel() / shape[0];
    shape[0] = count;
    Tensor probe(shape);
    std::copy(data.test_images.data(), data.test_images.data() + count * per, probe.data());
    std::vector<int> labels(data.test_labels.begin(), data.test_labels.begin() + count);

    Network net = restore(ckpt);
    EvalMetrics m = evaluate(net, probe, labels);
    EnergyReport rep = estimate(ckpt.spec, m.layer_sparsity, ckpt.spec.timesteps, cost);
    std::printf("sparsity measured on %lld test images (top1 %.4f)\n",
                static_cast<long long>(count), m.top1);
    std::fputs(rep.to_text().c_str(), stdout);
    return 0;
}

// ------------------------------------------------------------- selftest --

// Independent loop-based scalar simulator of the ternary LIF equations;
// the oracle the vectorized implementation is checked against.
void scalar_ternary_trace(const std::vector<float>& inputs, float tau, float v_th,
                          std::vector<float>& u_trace, std::vector<float>& o_trace) {
    float u = 0.0f, o = 0.0f;
    for (float in : inputs) {
        u = tau * u * (1.0f - std::fabs(o)) + in;
        o = u >= v_th ? 1.0f : (u <= -v_th ? -1.0f : 0.0f);
        u_trace.push_back(u);
        o_trace.push_back(o);
    }
}

int cmd_selftest() {
    int failures = 0;
    auto check = [&failures](bool ok, const std::string& name, const std::string& detail = "") {
        if (ok) {
            std::printf("ok   %s\n", name.c_str());
        } else {
            ++failures;
            std::printf("FAIL %s%s\n", name.c_str(),
                        detail.empty() ? "" : ("  (" + detail + ")").c_str());
        }
    };

    // 1. vectorized ternary neuron vs the scalar brute-force simulator
    {
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<float> dist(-2.0f, 2.0f);
        LIFConfig cfg;
        cfg.kind = NeuronKind::Ternary;
        bool exact = true;
        for (int trial = 0; trial < 1000 && exact; ++trial) {
            std::vector<float> inputs(10);
            for (float& v : inputs) v = dist(rng);
            std::vector<float> u_ref, o_ref;
            scalar_ternary_trace(inputs, cfg.tau, cfg.v_th, u_ref, o_ref);
            NeuronLayerState state = NeuronLayerState::zeros({1});
            for (size_t t = 0; t < inputs.size(); ++t) {
                StepResult r = ternary_step(state, Tensor({1}, {inputs[t]}), cfg);
                if (r.new_state.u[0] != u_ref[t] || r.spikes[0] != o_ref[t]) exact = false;
                state = r.new_state;
            }
        }
        check(exact, "ternary neuron matches scalar simulator (1000 traces)");
    }

    // 2. surrogate gradient spot values
    {
        LIFConfig cfg;
        cfg.kind = NeuronKind::Ternary;
        Tensor u({3}, {1.0f, 0.0f, -1.0f});
        Tensor g = surrogate_grad(u, cfg);
        check(g[0] == 1.0f && g[1] == 0.0f && g[2] == 1.0f, "surrogate gradient window values");
    }

    // 3. finite-difference gradient spot check on matmul
    {
        std::mt19937_64 rng(11);
        std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
        Tensor a({2, 3}), b({3, 2});
        for (int64_t i = 0; i < a.numel(); ++i) a[i] = dist(rng);
        for (int64_t i = 0; i < b.numel(); ++i) b[i] = dist(rng);
        auto loss_at = [&](const Tensor& av) {
            GradTape t;
            ValueId ai = t.constant(av), bi = t.constant(b);
            return static_cast<double>(t.value(ops::mean(t, ops::matmul(t, ai, bi)))[0]);
        };
        Parameter pa("a", a), pb("b", b);
        GradTape t;
        ValueId loss = ops::mean(t, ops::matmul(t, t.watch(pa), t.watch(pb)));
        t.backward(loss);
        bool ok = true;
        const double eps = 1e-3;
        for (int64_t i = 0; i < a.numel() && ok; ++i) {
            Tensor ap = a, am = a;
            ap[i] += static_cast<float>(eps);
            am[i] -= static_cast<float>(eps);
            const double fd = (loss_at(ap) - loss_at(am)) / (2 * eps);
            if (std::fabs(fd - pa.grad[i]) > 1e-3 * std::max(1.0, std::fabs(fd))) ok = false;
        }
        check(ok, "matmul gradient matches finite differences");
    }

    // 4. amplitude gradient is exactly the base pattern
    {
        Parameter amp("a", Tensor::scalar(0.7f));
        Tensor u({4}, {1.5f, -2.0f, 0.3f, 1.0f});
        LIFConfig cfg;
        cfg.kind = NeuronKind::TrainableTernary;
        GradTape t;
        ValueId ui = t.constant(u);
        ValueId b = ops::spike_base(t, ui, cfg);
        ValueId o = ops::mul(t, b, t.watch(amp));
        t.backward(ops::mean(t, o));
        const Tensor& bv = t.value(b);
        float expected = 0.0f;
        for (int64_t i = 0; i < bv.numel(); ++i) {
            expected += bv[i] * (1.0f / static_cast<float>(bv.numel()));
        }
        check(amp.grad[0] == expected, "d o / d a equals the base pattern");
    }

    // 5. Table-4 style energy arithmetic
    {
        EnergyReport bin = estimate_from_counts(3.54e6, 71.20e6, 0.11e6);
        EnergyReport ter = estimate_from_counts(3.54e6, 79.21e6, 0.23e6);
        const double rel_b = std::fabs(bin.joules_total - 50.14e-6) / 50.14e-6;
        const double rel_t = std::fabs(ter.joules_total - 51.20e-6) / 51.20e-6;
        const double overhead = (ter.joules_total - bin.joules_total) / bin.joules_total;
        const double a_b = implied_ann_additions(71.20e6, 0.1642, 2);
        const double a_t = implied_ann_additions(79.21e6, 0.1827, 2);
        check(rel_b < 0.005 && rel_t < 0.005, "energy totals 50.14uJ / 51.20uJ");
        check(std::fabs(overhead - 0.0211) < 0.001, "ternary overhead 2.11%");
        check(std::fabs(a_b - a_t) / a_b < 0.001, "implied ANN additions agree across rows");
    }

    // 6. IDX loader on a synthetic fixture, including the truncation offset
    {
        const fs::path tmp = fs::temp_directory_path() / "tspike_selftest_idx";
        {
            std::ofstream out(tmp, std::ios::binary);
            const unsigned char header[16] = {0, 0, 8, 3, 0, 0, 0, 4, 0, 0, 0, 2, 0, 0, 0, 2};
            out.write(reinterpret_cast<const char*>(header), 16);
            for (int i = 0; i < 16; ++i) out.put(static_cast<char>(i * 16));
        }
        Tensor t = load_idx(tmp.string());
        bool ok = t.shape() == std::vector<int64_t>{4, 1, 2, 2} && t[1] == 16.0f / 255.0f;
        fs::resize_file(tmp, 18);
        bool threw = false;
        try {
            load_idx(tmp.string());
        } catch (const FormatError& e) {
            threw = std::string(e.what()).find("offset 18") != std::string::npos;
        }
        fs::remove(tmp);
        check(ok && threw, "IDX decode and truncation offset");
    }

    // 7. amplitude folding is exact on a hand-built chain (w=2, a=0.5)
    {
        LIFConfig lif;
        lif.kind = NeuronKind::TrainableTernary;
        NetworkSpec spec;
        spec.timesteps = 1;
        spec.input_shape = {1, 1, 1};
        spec.layers = {LayerSpec::flatten(), LayerSpec::lif(lif), LayerSpec::linear(1)};
        Network net(spec, 0);
        Checkpoint ckpt = snapshot(net);
        (*ckpt.find("layer1.neuron.amplitude"))[0] = 0.5f;
        (*ckpt.find("layer2.linear.weight"))[0] = 2.0f;
        (*ckpt.find("layer2.linear.bias"))[0] = 0.0f;
        Checkpoint conv = fold_amplitudes(ckpt);
        Tensor probe({1, 1, 1, 1}, {1.5f});
        ConversionReport rep = verify_equivalence(ckpt, conv, probe, 0.0);
        check(rep.max_abs_logit_dev == 0.0 && (*conv.find("layer2.linear.weight"))[0] == 1.0f,
              "hand-built amplitude fold is exact");
    }

    std::printf(failures == 0 ? "selftest passed\n" : "selftest FAILED (%d)\n", failures);
    return failures == 0 ? 0 : 1;
}

} // namespace

int cli_dispatch(int argc, const char* const* argv) {
    CLI::App app{"ternary-spike spiking neural network toolkit"};
    app.require_subcommand(1);

    // ---- train
    auto* train_cmd = app.add_subcommand("train", "train a network with surrogate-gradient BPTT");
    std::string config_path, preset = "cnn-mnist", neuron = "ternary", dataset = "mnist";
    std::string data_dir = "data/mnist", out_dir = "runs/run", spec_file;
    int timesteps = 2, epochs = -1, batch_size = -1, max_steps = -1;
    double lr = -1, weight_decay = -1, momentum_v = -1, grad_clip = -1;
    int64_t seed = -1;
    std::string optimizer, schedule;
    bool verbose = false;
    train_cmd->add_option("--config", config_path, "run config JSON (flags override it)");
    train_cmd->add_option("--preset", preset, "mlp-mnist, cnn-mnist or resnet-mini");
    train_cmd->add_option("--spec", spec_file, "explicit network spec JSON file");
    train_cmd->add_option("--neuron", neuron, "binary, ternary or trainable-ternary");
    train_cmd->add_option("-T,--timesteps", timesteps, "simulation timesteps");
    train_cmd->add_option("--dataset", dataset, "mnist, fashion-mnist or cifar10");
    train_cmd->add_option("--data", data_dir, "dataset directory");
    train_cmd->add_option("--out", out_dir, "output directory");
    train_cmd->add_option("--epochs", epochs);
    train_cmd->add_option("--batch-size", batch_size);
    train_cmd->add_option("--lr", lr);
    train_cmd->add_option("--weight-decay", weight_decay);
    train_cmd->add_option("--momentum", momentum_v);
    train_cmd->add_option("--optimizer", optimizer, "sgd-momentum or adam");
    train_cmd->add_option("--schedule", schedule, "constant or cosine");
    train_cmd->add_option("--seed", seed);
    train_cmd->add_option("--grad-clip", grad_clip);
    train_cmd->add_option("--max-steps", max_steps, "stop after this many optimizer steps");
    train_cmd->add_flag("--verbose", verbose, "per-epoch progress lines");

    // ---- eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string ckpt_dir;
    int eval_batch = 256;
    eval_cmd->add_option("--ckpt", ckpt_dir, "checkpoint directory")->required();
    eval_cmd->add_option("--dataset", dataset);
    eval_cmd->add_option("--data", data_dir);
    eval_cmd->add_option("--batch-size", eval_batch);

    // ---- convert
    auto* conv_cmd = app.add_subcommand(
        "convert", "fold trainable spike amplitudes into weights and verify output invariance");
    std::string conv_in, conv_out;
    std::string conv_data;
    int64_t probe_count = 256;
    double tol = 1e-5;
    conv_cmd->add_option("--in", conv_in, "trained checkpoint directory")->required();
    conv_cmd->add_option("--out", conv_out, "converted checkpoint directory")->required();
    conv_cmd->add_option("--dataset", dataset);
    conv_cmd->add_option("--data", conv_data, "dataset directory for the probe batch");
    conv_cmd->add_option("--probe", probe_count, "probe batch size");
    conv_cmd->add_option("--tol", tol, "max allowed logit deviation");

    // ---- analyze
    auto* ana_cmd = app.add_subcommand(
        "analyze", "membrane distributions, spike statistics and capacity tables");
    std::string ana_ckpt, ana_out;
    int bins = 64;
    bool post_reset = false;
    ana_cmd->add_option("--ckpt", ana_ckpt, "checkpoint directory")->required();
    ana_cmd->add_option("--dataset", dataset);
    ana_cmd->add_option("--data", data_dir);
    ana_cmd->add_option("--probe", probe_count, "probe batch size");
    ana_cmd->add_option("--bins", bins, "histogram bins");
    ana_cmd->add_flag("--post-reset", post_reset, "profile post-reset membranes");
    ana_cmd->add_option("--out", ana_out, "directory for TSV tables");

    // ---- energy
    auto* en_cmd = app.add_subcommand(
        "energy", "hardware energy estimate from a checkpoint or a manual counts file");
    std::string counts_path, en_ckpt;
    en_cmd->add_option("--counts", counts_path, "counts file (flops/sops/signs = ...)");
    en_cmd->add_option("--ckpt", en_ckpt, "checkpoint directory (measures sparsity live)");
    en_cmd->add_option("--dataset", dataset);
    en_cmd->add_option("--data", data_dir);
    en_cmd->add_option("--probe", probe_count, "images used to measure sparsity");

    // ---- selftest
    app.add_subcommand("selftest", "hermetic oracle checks (no dataset needed)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "%s\n\n%s", e.what(), app.help().c_str());
        return 2;
    }

    try {
        if (app.got_subcommand("selftest")) return cmd_selftest();
        if (app.got_subcommand(train_cmd)) {
            RunConfig cfg;
            if (!config_path.empty()) cfg = RunConfig::from_file(config_path);
            if (train_cmd->count("--preset")) cfg.preset = preset;
            if (train_cmd->count("--spec")) cfg.spec_file = spec_file;
            if (train_cmd->count("--neuron")) cfg.neuron = neuron_kind_from_string(neuron);
            if (train_cmd->count("--timesteps")) cfg.timesteps = timesteps;
            if (train_cmd->count("--dataset")) cfg.dataset = dataset;
            if (train_cmd->count("--data")) cfg.data_dir = data_dir;
            if (train_cmd->count("--out")) cfg.out_dir = out_dir;
            if (epochs >= 0) cfg.train.epochs = epochs;
            if (batch_size >= 0) cfg.train.batch_size = batch_size;
            if (lr >= 0) cfg.train.learning_rate = static_cast<float>(lr);
            if (weight_decay >= 0) cfg.train.weight_decay = static_cast<float>(weight_decay);
            if (momentum_v >= 0) cfg.train.momentum = static_cast<float>(momentum_v);
            if (!optimizer.empty()) cfg.train.optimizer = optimizer_from_string(optimizer);
            if (!schedule.empty()) cfg.train.lr_schedule = schedule_from_string(schedule);
            if (seed >= 0) cfg.train.seed = static_cast<uint64_t>(seed);
            if (grad_clip >= 0) cfg.train.grad_clip = static_cast<float>(grad_clip);
            if (max_steps >= 0) cfg.train.max_steps = max_steps;
            cfg.train.verbose = verbose;
            cfg.train.validate();
            return cmd_train(cfg);
        }
        if (app.got_subcommand(eval_cmd)) return cmd_eval(ckpt_dir, dataset, data_dir, eval_batch);
        if (app.got_subcommand(conv_cmd)) {
            return cmd_convert(conv_in, conv_out, dataset, conv_data, probe_count, tol);
        }
        if (app.got_subcommand(ana_cmd)) {
            return cmd_analyze(ana_ckpt, dataset, data_dir, probe_count, bins, post_reset, ana_out);
        }
        if (app.got_subcommand(en_cmd)) {
            return cmd_energy(counts_path, en_ckpt, dataset, data_dir, probe_count);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

} // namespace tspike
