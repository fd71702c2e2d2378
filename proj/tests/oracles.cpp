#include "oracles.hpp"

#include <algorithm>
#include <cmath>

namespace oracles {

Tensor random_tensor(std::vector<int64_t> shape, std::mt19937_64& rng, float lo, float hi) {
    std::uniform_real_distribution<float> dist(lo, hi);
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
    return t;
}

Tensor conv2d_naive(const Tensor& input, const Tensor& kernel, int stride, int padding) {
    const int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int64_t o = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
    const int64_t oh = (h + 2 * padding - kh) / stride + 1;
    const int64_t ow = (w + 2 * padding - kw) / stride + 1;
    Tensor out({n, o, oh, ow});
    for (int64_t s = 0; s < n; ++s)
        for (int64_t f = 0; f < o; ++f)
            for (int64_t oy = 0; oy < oh; ++oy)
                for (int64_t ox = 0; ox < ow; ++ox) {
                    float acc = 0.0f;
                    for (int64_t ch = 0; ch < c; ++ch)
                        for (int64_t ky = 0; ky < kh; ++ky)
                            for (int64_t kx = 0; kx < kw; ++kx) {
                                const int64_t iy = oy * stride + ky - padding;
                                const int64_t ix = ox * stride + kx - padding;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                                acc += input.at({s, ch, iy, ix}) * kernel.at({f, ch, ky, kx});
                            }
                    out[((s * o + f) * oh + oy) * ow + ox] = acc;
                }
    return out;
}

ScalarTrace simulate_binary(const std::vector<float>& inputs, float tau, float v_th) {
    ScalarTrace tr;
    float u = 0.0f, o = 0.0f;
    for (float in : inputs) {
        u = tau * u * (1.0f - o) + in;
        o = u >= v_th ? 1.0f : 0.0f;
        tr.u.push_back(u);
        tr.o.push_back(o);
        tr.base.push_back(o);
    }
    return tr;
}

ScalarTrace simulate_ternary(const std::vector<float>& inputs, float tau, float v_th) {
    ScalarTrace tr;
    float u = 0.0f, o = 0.0f;
    for (float in : inputs) {
        u = tau * u * (1.0f - std::fabs(o)) + in;
        o = u >= v_th ? 1.0f : (u <= -v_th ? -1.0f : 0.0f);
        tr.u.push_back(u);
        tr.o.push_back(o);
        tr.base.push_back(o);
    }
    return tr;
}

ScalarTrace simulate_trainable(const std::vector<float>& inputs, float tau, float v_th,
                               float amplitude) {
    ScalarTrace tr;
    float u = 0.0f, b = 0.0f;
    for (float in : inputs) {
        u = tau * u * (1.0f - std::fabs(b)) + in;
        b = u >= v_th ? 1.0f : (u <= -v_th ? -1.0f : 0.0f);
        tr.u.push_back(u);
        tr.base.push_back(b);
        tr.o.push_back(amplitude * b);
    }
    return tr;
}

ValueId smooth_spike(GradTape& t, ValueId u, const LIFConfig& cfg) {
    const Tensor& uv = t.value(u);
    const float w = cfg.surrogate_width;
    const bool ternary = cfg.ternary();
    auto ramp = [w, vth = cfg.v_th](float x) {
        return std::clamp((x - (vth - w)) / (2.0f * w), 0.0f, 1.0f);
    };
    Tensor out(uv.shape());
    for (int64_t i = 0; i < uv.numel(); ++i) {
        out[i] = ramp(uv[i]) - (ternary ? ramp(-uv[i]) : 0.0f);
    }
    return t.emit(std::move(out), {u}, [u, w, ternary, cfg](GradTape& tape, ValueId y) {
        const Tensor& g = tape.grad_out(y);
        const Tensor& uv = tape.value(u);
        Tensor& du = tape.grad_buffer(u);
        const float gain = 1.0f / (2.0f * w);
        for (int64_t i = 0; i < g.numel(); ++i) {
            float d = 0.0f;
            if (std::fabs(uv[i] - cfg.v_th) < w) d += gain;
            if (ternary && std::fabs(uv[i] + cfg.v_th) < w) d += gain;
            du[i] += g[i] * d;
        }
    });
}

std::vector<Tensor> finite_diff(const std::function<double()>& loss,
                                const std::vector<Parameter*>& params, double eps) {
    std::vector<Tensor> grads;
    for (Parameter* p : params) {
        Tensor g(p->value.shape());
        for (int64_t i = 0; i < p->value.numel(); ++i) {
            const float saved = p->value[i];
            p->value[i] = saved + static_cast<float>(eps);
            const double up = loss();
            p->value[i] = saved - static_cast<float>(eps);
            const double down = loss();
            p->value[i] = saved;
            g[i] = static_cast<float>((up - down) / (2.0 * eps));
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

double max_rel_err(const Tensor& got, const Tensor& want) {
    double worst = 0.0;
    for (int64_t i = 0; i < got.numel(); ++i) {
        const double denom = std::max(1.0, std::fabs(static_cast<double>(want[i])));
        worst = std::max(worst, std::fabs(static_cast<double>(got[i]) - want[i]) / denom);
    }
    return worst;
}

} // namespace oracles
