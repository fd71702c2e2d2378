#include "tspike/analysis.hpp"

#include <cmath>

#include "tspike/error.hpp"

namespace tspike {

double capacity_bits(const std::array<int64_t, 3>& shape, int alphabet_size) {
    if (shape[0] < 1 || shape[1] < 1 || shape[2] < 1) {
        throw ContractError("capacity_bits: dimensions must be positive");
    }
    if (alphabet_size < 2) throw ContractError("capacity_bits: alphabet size must be >= 2");
    return static_cast<double>(shape[0] * shape[1] * shape[2]) *
           std::log2(static_cast<double>(alphabet_size));
}

double entropy_bits(const std::vector<double>& p) {
    double sum = 0.0;
    for (double v : p) {
        if (v < 0.0) throw ContractError("entropy_bits: negative probability");
        sum += v;
    }
    if (std::fabs(sum - 1.0) > 1e-6) {
        throw ContractError("entropy_bits: probabilities sum to " + std::to_string(sum));
    }
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) h -= v * std::log2(v);
    }
    return h;
}

namespace {

const std::vector<Tensor>& membranes_of(const ForwardRecord::NeuronTrace& tr, bool post_reset) {
    return post_reset ? tr.membrane_post : tr.membrane_pre;
}

void moments(const Tensor& t, double& sum, double& sq, int64_t& count) {
    for (int64_t i = 0; i < t.numel(); ++i) {
        sum += t[i];
        sq += static_cast<double>(t[i]) * t[i];
    }
    count += t.numel();
}

} // namespace

std::vector<MembraneHistogram> membrane_profile(const ForwardRecord& record, int bins,
                                                bool post_reset) {
    if (record.traces.empty()) throw ContractError("membrane_profile: record has no neuron traces");
    if (bins < 1) throw ContractError("membrane_profile: bins must be >= 1");
    std::vector<MembraneHistogram> out;
    for (const auto& tr : record.traces) {
        const auto& membranes = membranes_of(tr, post_reset);
        if (membranes.empty()) throw ContractError("membrane_profile: record holds no membranes");
        for (size_t t = 0; t < membranes.size(); ++t) {
            const Tensor& u = membranes[t];
            MembraneHistogram h;
            h.layer_index = tr.layer_index;
            h.timestep = static_cast<int>(t);
            h.counts.assign(static_cast<size_t>(bins), 0);
            double sum = 0, sq = 0;
            int64_t count = 0;
            moments(u, sum, sq, count);
            h.total = count;
            h.mean = sum / static_cast<double>(count);
            const double var = std::max(0.0, sq / static_cast<double>(count) - h.mean * h.mean);
            h.stddev = std::sqrt(var);
            // degenerate distributions get a unit-wide window around the mean
            const double half = h.stddev > 0 ? 4.0 * h.stddev : 0.5;
            h.lo = h.mean - half;
            h.hi = h.mean + half;
            const double scale = static_cast<double>(bins) / (h.hi - h.lo);
            for (int64_t i = 0; i < u.numel(); ++i) {
                int64_t k = static_cast<int64_t>((static_cast<double>(u[i]) - h.lo) * scale);
                k = std::max<int64_t>(0, std::min<int64_t>(bins - 1, k));
                ++h.counts[static_cast<size_t>(k)];
            }
            out.push_back(std::move(h));
        }
    }
    return out;
}

std::vector<LayerMoments> membrane_moments(const ForwardRecord& record, bool post_reset) {
    if (record.traces.empty()) throw ContractError("membrane_moments: record has no neuron traces");
    std::vector<LayerMoments> out;
    for (const auto& tr : record.traces) {
        LayerMoments m;
        m.layer_index = tr.layer_index;
        double sum = 0, sq = 0;
        int64_t count = 0;
        for (const Tensor& u : membranes_of(tr, post_reset)) moments(u, sum, sq, count);
        if (count == 0) throw ContractError("membrane_moments: record holds no membranes");
        m.count = count;
        m.mean = sum / static_cast<double>(count);
        m.stddev = std::sqrt(std::max(0.0, sq / static_cast<double>(count) - m.mean * m.mean));
        out.push_back(m);
    }
    return out;
}

std::vector<SpikeLayerStats> spike_stats(const ForwardRecord& record) {
    if (record.traces.empty()) throw ContractError("spike_stats: record has no neuron traces");
    std::vector<SpikeLayerStats> out;
    for (const auto& tr : record.traces) {
        SpikeLayerStats s;
        s.layer_index = tr.layer_index;
        int64_t pos = 0, neg = 0, zero = 0;
        for (const Tensor& base : tr.base) {
            for (int64_t i = 0; i < base.numel(); ++i) {
                if (base[i] > 0.0f) ++pos;
                else if (base[i] < 0.0f) ++neg;
                else ++zero;
            }
        }
        s.count = pos + neg + zero;
        if (s.count == 0) throw ContractError("spike_stats: record holds no spikes");
        s.rate_pos = static_cast<double>(pos) / static_cast<double>(s.count);
        s.rate_neg = static_cast<double>(neg) / static_cast<double>(s.count);
        s.rate_zero = static_cast<double>(zero) / static_cast<double>(s.count);
        s.entropy = entropy_bits({s.rate_pos, s.rate_neg, s.rate_zero});
        out.push_back(s);
    }
    return out;
}

std::vector<CapacityRow> capacity_report(const Network& net) {
    std::vector<CapacityRow> out;
    for (size_t i = 0; i < net.spec().layers.size(); ++i) {
        if (net.spec().layers[i].kind != LayerKind::Neuron) continue;
        CapacityRow row;
        row.layer_index = static_cast<int>(i);
        const std::vector<int64_t>& s = net.shape_after(static_cast<int>(i));
        row.shape = s.size() == 3 ? std::array<int64_t, 3>{s[0], s[1], s[2]}
                                  : std::array<int64_t, 3>{s[0], 1, 1};
        row.bits_binary = capacity_bits(row.shape, 2);
        row.bits_ternary = capacity_bits(row.shape, 3);
        row.bits_real32 = 32.0 * row.bits_binary;
        row.ratio_ternary_binary = row.bits_ternary / row.bits_binary;
        row.ratio_real_binary = row.bits_real32 / row.bits_binary;
        out.push_back(row);
    }
    return out;
}

} // namespace tspike
