#include "tspike/autograd.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>

#include "tspike/error.hpp"

namespace tspike {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

ValueId GradTape::push_value(Tensor v, bool req) {
    values_.push_back(std::move(v));
    requires_grad_.push_back(req);
    nodes_.emplace_back();
    grads_.emplace_back();
    return static_cast<ValueId>(values_.size() - 1);
}

ValueId GradTape::constant(Tensor v) {
    return push_value(std::move(v), false);
}

ValueId GradTape::watch(Parameter& p) {
    ValueId id = push_value(p.value, true);
    watched_.emplace_back(id, &p);
    return id;
}

ValueId GradTape::emit(Tensor out, const std::vector<ValueId>& inputs,
                       std::function<void(GradTape&, ValueId)> backward) {
    bool req = false;
    for (ValueId in : inputs) req = req || requires_grad(in);
    ValueId id = push_value(std::move(out), req);
    if (req) nodes_.back().backward = std::move(backward);
    return id;
}

const Tensor& GradTape::grad(ValueId id) const {
    if (!grads_valid_) throw ContractError("grad() before backward()");
    const Tensor& g = grads_[static_cast<size_t>(id)];
    if (g.empty()) throw ContractError("no gradient reached value " + std::to_string(id));
    return g;
}

Tensor& GradTape::grad_buffer(ValueId id) {
    Tensor& g = grads_[static_cast<size_t>(id)];
    if (g.empty()) g = Tensor::zeros(values_[static_cast<size_t>(id)].shape());
    return g;
}

void GradTape::accumulate_grad(ValueId id, const Tensor& g) {
    Tensor& buf = grad_buffer(id);
    float* dst = buf.data();
    const float* src = g.data();
    const int64_t n = buf.numel();
    for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
}

void GradTape::backward(ValueId loss) {
    if (consumed_) throw ContractError("backward() called twice on one tape");
    if (value(loss).numel() != 1) {
        throw ContractError("backward() requires a scalar loss, got shape " +
                            shape_str(value(loss).shape()));
    }
    consumed_ = true;
    grad_buffer(loss)[0] = 1.0f;
    for (ValueId id = loss; id >= 0; --id) {
        auto& node = nodes_[static_cast<size_t>(id)];
        if (node.backward && !grads_[static_cast<size_t>(id)].empty()) {
            node.backward(*this, id);
        }
        node.backward = nullptr; // release cached buffers as we go
    }
    for (auto& [id, param] : watched_) {
        const Tensor& g = grads_[static_cast<size_t>(id)];
        if (g.empty()) continue; // parameter disconnected from the loss
        float* dst = param->grad.data();
        const float* src = g.data();
        const int64_t n = param->grad.numel();
        for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
    }
    grads_valid_ = true;
}

namespace ops {
namespace {

bool is_scalar(const Tensor& t) { return t.numel() == 1; }

void check_elementwise(const char* op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b) && !is_scalar(a) && !is_scalar(b)) {
        throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " are incompatible (only identical shapes or "
                         "a scalar operand broadcast)");
    }
}

} // namespace

ValueId matmul(GradTape& t, ValueId a, ValueId b) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    if (av.rank() != 2 || bv.rank() != 2) {
        throw ShapeError("matmul requires rank-2 tensors, got " + shape_str(av.shape()) +
                         " and " + shape_str(bv.shape()));
    }
    const int64_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    if (bv.dim(0) != k) {
        throw ShapeError("matmul: inner dimensions disagree: " + shape_str(av.shape()) +
                         " vs " + shape_str(bv.shape()));
    }
    Tensor out({m, n});
    {
        CMapRM A(av.data(), m, k), B(bv.data(), k, n);
        MapRM C(out.data(), m, n);
        C.noalias() = A * B;
    }
    return t.emit(std::move(out), {a, b}, [a, b, m, k, n](GradTape& tape, ValueId y) {
        CMapRM G(tape.grad_out(y).data(), m, n);
        if (tape.requires_grad(a)) {
            CMapRM B(tape.value(b).data(), k, n);
            MapRM dA(tape.grad_buffer(a).data(), m, k);
            dA.noalias() += G * B.transpose();
        }
        if (tape.requires_grad(b)) {
            CMapRM A(tape.value(a).data(), m, k);
            MapRM dB(tape.grad_buffer(b).data(), k, n);
            dB.noalias() += A.transpose() * G;
        }
    });
}

namespace {

struct ConvDims {
    int64_t n, c, h, w;       // input
    int64_t o, kh, kw;        // kernel
    int64_t oh, ow;           // output spatial
    int stride, padding;
    int64_t patch() const { return c * kh * kw; }
    int64_t osp() const { return oh * ow; }
};

ConvDims conv_dims(const Tensor& in, const Tensor& k, int stride, int padding) {
    if (in.rank() != 4 || k.rank() != 4) {
        throw ShapeError("conv2d requires rank-4 input and kernel, got " +
                         shape_str(in.shape()) + " and " + shape_str(k.shape()));
    }
    if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
    if (padding < 0) throw ConfigError("conv2d: padding must be >= 0");
    ConvDims d{in.dim(0), in.dim(1), in.dim(2), in.dim(3),
               k.dim(0),  k.dim(2),  k.dim(3),  0, 0, stride, padding};
    if (k.dim(1) != d.c) {
        throw ShapeError("conv2d: kernel channels " + shape_str(k.shape()) +
                         " do not match input " + shape_str(in.shape()));
    }
    const int64_t ph = d.h + 2 * padding, pw = d.w + 2 * padding;
    if (d.kh > ph || d.kw > pw) {
        throw ConfigError("conv2d: kernel " + shape_str(k.shape()) +
                          " larger than padded input " + shape_str(in.shape()));
    }
    if ((ph - d.kh) % stride != 0 || (pw - d.kw) % stride != 0) {
        throw ConfigError("conv2d: non-integral output size for input " +
                          shape_str(in.shape()) + ", kernel " + shape_str(k.shape()) +
                          ", stride " + std::to_string(stride) + ", padding " +
                          std::to_string(padding));
    }
    d.oh = (ph - d.kh) / stride + 1;
    d.ow = (pw - d.kw) / stride + 1;
    return d;
}

// Gather the (c*kh*kw) x (oh*ow) patch matrix for one sample.
void im2col(const float* in, const ConvDims& d, float* cols) {
    const int64_t osp = d.osp();
    for (int64_t c = 0; c < d.c; ++c) {
        const float* plane = in + c * d.h * d.w;
        for (int64_t ki = 0; ki < d.kh; ++ki) {
            for (int64_t kj = 0; kj < d.kw; ++kj) {
                float* row = cols + ((c * d.kh + ki) * d.kw + kj) * osp;
                for (int64_t oy = 0; oy < d.oh; ++oy) {
                    const int64_t iy = oy * d.stride + ki - d.padding;
                    float* row_o = row + oy * d.ow;
                    if (iy < 0 || iy >= d.h) {
                        std::fill(row_o, row_o + d.ow, 0.0f);
                        continue;
                    }
                    const float* src = plane + iy * d.w;
                    for (int64_t ox = 0; ox < d.ow; ++ox) {
                        const int64_t ix = ox * d.stride + kj - d.padding;
                        row_o[ox] = (ix >= 0 && ix < d.w) ? src[ix] : 0.0f;
                    }
                }
            }
        }
    }
}

// Scatter-add the patch-matrix gradient back onto one input sample.
void col2im(const float* cols, const ConvDims& d, float* din) {
    const int64_t osp = d.osp();
    for (int64_t c = 0; c < d.c; ++c) {
        float* plane = din + c * d.h * d.w;
        for (int64_t ki = 0; ki < d.kh; ++ki) {
            for (int64_t kj = 0; kj < d.kw; ++kj) {
                const float* row = cols + ((c * d.kh + ki) * d.kw + kj) * osp;
                for (int64_t oy = 0; oy < d.oh; ++oy) {
                    const int64_t iy = oy * d.stride + ki - d.padding;
                    if (iy < 0 || iy >= d.h) continue;
                    float* dst = plane + iy * d.w;
                    const float* row_o = row + oy * d.ow;
                    for (int64_t ox = 0; ox < d.ow; ++ox) {
                        const int64_t ix = ox * d.stride + kj - d.padding;
                        if (ix >= 0 && ix < d.w) dst[ix] += row_o[ox];
                    }
                }
            }
        }
    }
}

} // namespace

ValueId conv2d(GradTape& t, ValueId input, ValueId kernel, int stride, int padding) {
    const Tensor& in = t.value(input);
    const Tensor& kv = t.value(kernel);
    const ConvDims d = conv_dims(in, kv, stride, padding);
    const int64_t patch = d.patch(), osp = d.osp();

    // Patches are cached for the backward GEMMs and freed after backward().
    auto cols = std::make_shared<std::vector<float>>(
        static_cast<size_t>(d.n * patch * osp));
    Tensor out({d.n, d.o, d.oh, d.ow});
    {
        CMapRM K(kv.data(), d.o, patch);
        for (int64_t s = 0; s < d.n; ++s) {
            float* cs = cols->data() + s * patch * osp;
            im2col(in.data() + s * d.c * d.h * d.w, d, cs);
            CMapRM C(cs, patch, osp);
            MapRM O(out.data() + s * d.o * osp, d.o, osp);
            O.noalias() = K * C;
        }
    }
    return t.emit(std::move(out), {input, kernel},
                  [input, kernel, d, patch, osp, cols](GradTape& tape, ValueId y) {
        const Tensor& gout = tape.grad_out(y);
        if (tape.requires_grad(kernel)) {
            MapRM dK(tape.grad_buffer(kernel).data(), d.o, patch);
            for (int64_t s = 0; s < d.n; ++s) {
                CMapRM G(gout.data() + s * d.o * osp, d.o, osp);
                CMapRM C(cols->data() + s * patch * osp, patch, osp);
                dK.noalias() += G * C.transpose();
            }
        }
        if (tape.requires_grad(input)) {
            CMapRM K(tape.value(kernel).data(), d.o, patch);
            Tensor& din = tape.grad_buffer(input);
            std::vector<float> dcols(static_cast<size_t>(patch * osp));
            for (int64_t s = 0; s < d.n; ++s) {
                CMapRM G(gout.data() + s * d.o * osp, d.o, osp);
                MapRM DC(dcols.data(), patch, osp);
                DC.noalias() = K.transpose() * G;
                col2im(dcols.data(), d, din.data() + s * d.c * d.h * d.w);
            }
        }
    });
}

ValueId add(GradTape& t, ValueId a, ValueId b) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    check_elementwise("add", av, bv);
    const bool a_scalar = is_scalar(av) && !is_scalar(bv);
    const bool b_scalar = is_scalar(bv) && !is_scalar(av);
    Tensor out(a_scalar ? bv.shape() : av.shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) {
        out[i] = av[a_scalar ? 0 : i] + bv[b_scalar ? 0 : i];
    }
    return t.emit(std::move(out), {a, b}, [a, b, a_scalar, b_scalar](GradTape& tape, ValueId y) {
        const Tensor& g = tape.grad_out(y);
        const int64_t n = g.numel();
        if (tape.requires_grad(a)) {
            Tensor& da = tape.grad_buffer(a);
            if (a_scalar) {
                float s = 0.0f;
                for (int64_t i = 0; i < n; ++i) s += g[i];
                da[0] += s;
            } else {
                for (int64_t i = 0; i < n; ++i) da[i] += g[i];
            }
        }
        if (tape.requires_grad(b)) {
            Tensor& db = tape.grad_buffer(b);
            if (b_scalar) {
                float s = 0.0f;
                for (int64_t i = 0; i < n; ++i) s += g[i];
                db[0] += s;
            } else {
                for (int64_t i = 0; i < n; ++i) db[i] += g[i];
            }
        }
    });
}

ValueId mul(GradTape& t, ValueId a, ValueId b) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    check_elementwise("mul", av, bv);
    const bool a_scalar = is_scalar(av) && !is_scalar(bv);
    const bool b_scalar = is_scalar(bv) && !is_scalar(av);
    Tensor out(a_scalar ? bv.shape() : av.shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) {
        out[i] = av[a_scalar ? 0 : i] * bv[b_scalar ? 0 : i];
    }
    return t.emit(std::move(out), {a, b}, [a, b, a_scalar, b_scalar](GradTape& tape, ValueId y) {
        const Tensor& g = tape.grad_out(y);
        const Tensor& av = tape.value(a);
        const Tensor& bv = tape.value(b);
        const int64_t n = g.numel();
        if (tape.requires_grad(a)) {
            Tensor& da = tape.grad_buffer(a);
            if (a_scalar) {
                float s = 0.0f;
                for (int64_t i = 0; i < n; ++i) s += g[i] * bv[i];
                da[0] += s;
            } else {
                for (int64_t i = 0; i < n; ++i) da[i] += g[i] * bv[b_scalar ? 0 : i];
            }
        }
        if (tape.requires_grad(b)) {
            Tensor& db = tape.grad_buffer(b);
            if (b_scalar) {
                float s = 0.0f;
                for (int64_t i = 0; i < n; ++i) s += g[i] * av[i];
                db[0] += s;
            } else {
                for (int64_t i = 0; i < n; ++i) db[i] += g[i] * av[a_scalar ? 0 : i];
            }
        }
    });
}

ValueId scale(GradTape& t, ValueId a, float c) {
    const Tensor& av = t.value(a);
    Tensor out(av.shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = av[i] * c;
    return t.emit(std::move(out), {a}, [a, c](GradTape& tape, ValueId y) {
        const Tensor& g = tape.grad_out(y);
        Tensor& da = tape.grad_buffer(a);
        const int64_t n = g.numel();
        for (int64_t i = 0; i < n; ++i) da[i] += g[i] * c;
    });
}

ValueId mul_const(GradTape& t, ValueId a, Tensor c) {
    const Tensor& av = t.value(a);
    if (!av.same_shape(c)) {
        throw ShapeError("mul_const: shapes " + shape_str(av.shape()) + " and " +
                         shape_str(c.shape()) + " are incompatible");
    }
    Tensor out(av.shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = av[i] * c[i];
    auto cc = std::make_shared<Tensor>(std::move(c));
    return t.emit(std::move(out), {a}, [a, cc](GradTape& tape, ValueId y) {
        const Tensor& g = tape.grad_out(y);
        Tensor& da = tape.grad_buffer(a);
        const int64_t n = g.numel();
        for (int64_t i = 0; i < n; ++i) da[i] += g[i] * (*cc)[i];
    });
}

ValueId relu(GradTape& t, ValueId a) {
    const Tensor& av = t.value(a);
    Tensor out(av.shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = av[i] > 0.0f ? av[i] : 0.0f;
    return t.emit(std::move(out), {a}, [a](GradTape& tape, ValueId y) {
        const Tensor& g = tape.grad_out(y);
        const Tensor& av = tape.value(a);
        Tensor& da = tape.grad_buffer(a);
        const int64_t n = g.numel();
        for (int64_t i = 0; i < n; ++i) da[i] += av[i] > 0.0f ? g[i] : 0.0f;
    });
}

ValueId exp(GradTape& t, ValueId a) {
    const Tensor& av = t.value(a);
    Tensor out(av.shape());
    const int64_t n = out.numel();
    // clamp keeps the output finite for any finite input
    for (int64_t i = 0; i < n; ++i) out[i] = std::exp(std::min(av[i], 88.0f));
    return t.emit(std::move(out), {a}, [a](GradTape& tape, ValueId y) {
        const Tensor& g = tape.grad_out(y);
        const Tensor& yv = tape.value(y);
        Tensor& da = tape.grad_buffer(a);
        const int64_t n = g.numel();
        for (int64_t i = 0; i < n; ++i) da[i] += g[i] * yv[i];
    });
}

ValueId log(GradTape& t, ValueId a) {
    const Tensor& av = t.value(a);
    Tensor out(av.shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = std::log(std::max(av[i], 1e-30f));
    return t.emit(std::move(out), {a}, [a](GradTape& tape, ValueId y) {
        const Tensor& g = tape.grad_out(y);
        const Tensor& av = tape.value(a);
        Tensor& da = tape.grad_buffer(a);
        const int64_t n = g.numel();
        for (int64_t i = 0; i < n; ++i) da[i] += g[i] / std::max(av[i], 1e-30f);
    });
}

ValueId mean(GradTape& t, ValueId a) {
    const Tensor& av = t.value(a);
    const int64_t n = av.numel();
    if (n == 0) throw ContractError("mean of empty tensor");
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += av[i];
    Tensor out = Tensor::scalar(static_cast<float>(acc / static_cast<double>(n)));
    return t.emit(std::move(out), {a}, [a, n](GradTape& tape, ValueId y) {
        const float g = tape.grad_out(y)[0] / static_cast<float>(n);
        Tensor& da = tape.grad_buffer(a);
        for (int64_t i = 0; i < n; ++i) da[i] += g;
    });
}

ValueId add_bias(GradTape& t, ValueId x, ValueId bias) {
    const Tensor& xv = t.value(x);
    const Tensor& bv = t.value(bias);
    if (bv.rank() != 1) throw ShapeError("add_bias: bias must be rank-1, got " + shape_str(bv.shape()));
    Tensor out(xv.shape());
    int64_t channels, inner, outer;
    if (xv.rank() == 2) { // (N,F) + (F)
        outer = xv.dim(0); channels = xv.dim(1); inner = 1;
    } else if (xv.rank() == 4) { // (N,C,H,W) + (C)
        outer = xv.dim(0); channels = xv.dim(1); inner = xv.dim(2) * xv.dim(3);
    } else {
        throw ShapeError("add_bias: input must be rank-2 or rank-4, got " + shape_str(xv.shape()));
    }
    if (bv.dim(0) != channels) {
        throw ShapeError("add_bias: bias " + shape_str(bv.shape()) + " does not match input " +
                         shape_str(xv.shape()));
    }
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t c = 0; c < channels; ++c) {
            const float b = bv[c];
            const int64_t base = (o * channels + c) * inner;
            for (int64_t i = 0; i < inner; ++i) out[base + i] = xv[base + i] + b;
        }
    return t.emit(std::move(out), {x, bias},
                  [x, bias, outer, channels, inner](GradTape& tape, ValueId y) {
        const Tensor& g = tape.grad_out(y);
        if (tape.requires_grad(x)) tape.accumulate_grad(x, g);
        if (tape.requires_grad(bias)) {
            Tensor& db = tape.grad_buffer(bias);
            for (int64_t o = 0; o < outer; ++o)
                for (int64_t c = 0; c < channels; ++c) {
                    const int64_t base = (o * channels + c) * inner;
                    float s = 0.0f;
                    for (int64_t i = 0; i < inner; ++i) s += g[base + i];
                    db[c] += s;
                }
        }
    });
}

ValueId avgpool2(GradTape& t, ValueId x) {
    const Tensor& xv = t.value(x);
    if (xv.rank() != 4) throw ShapeError("avgpool2: input must be rank-4, got " + shape_str(xv.shape()));
    const int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    if (h % 2 != 0 || w % 2 != 0) {
        throw ConfigError("avgpool2: spatial dims must be even, got " + shape_str(xv.shape()));
    }
    const int64_t oh = h / 2, ow = w / 2;
    Tensor out({n, c, oh, ow});
    for (int64_t nc = 0; nc < n * c; ++nc) {
        const float* src = xv.data() + nc * h * w;
        float* dst = out.data() + nc * oh * ow;
        for (int64_t oy = 0; oy < oh; ++oy)
            for (int64_t ox = 0; ox < ow; ++ox) {
                const float* p = src + (2 * oy) * w + 2 * ox;
                dst[oy * ow + ox] = 0.25f * (p[0] + p[1] + p[w] + p[w + 1]);
            }
    }
    return t.emit(std::move(out), {x}, [x, n, c, h, w, oh, ow](GradTape& tape, ValueId y) {
        const Tensor& g = tape.grad_out(y);
        Tensor& dx = tape.grad_buffer(x);
        for (int64_t nc = 0; nc < n * c; ++nc) {
            const float* gs = g.data() + nc * oh * ow;
            float* dst = dx.data() + nc * h * w;
            for (int64_t oy = 0; oy < oh; ++oy)
                for (int64_t ox = 0; ox < ow; ++ox) {
                    const float gv = 0.25f * gs[oy * ow + ox];
                    float* p = dst + (2 * oy) * w + 2 * ox;
                    p[0] += gv; p[1] += gv; p[w] += gv; p[w + 1] += gv;
                }
        }
    });
}

ValueId softmax_cross_entropy(GradTape& t, ValueId logits, const std::vector<int>& labels) {
    const Tensor& z = t.value(logits);
    if (z.rank() != 2) {
        throw ShapeError("softmax_cross_entropy: logits must be rank-2, got " + shape_str(z.shape()));
    }
    const int64_t n = z.dim(0), k = z.dim(1);
    if (static_cast<int64_t>(labels.size()) != n) {
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(n) + " rows");
    }
    for (int y : labels) {
        if (y < 0 || y >= k) {
            throw ContractError("softmax_cross_entropy: label " + std::to_string(y) +
                                " outside [0, " + std::to_string(k) + ")");
        }
    }
    // probs are cached for the backward rule
    auto probs = std::make_shared<Tensor>(Tensor::zeros({n, k}));
    double loss_acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const float* row = z.data() + i * k;
        float m = row[0];
        for (int64_t j = 1; j < k; ++j) m = std::max(m, row[j]);
        double denom = 0.0;
        for (int64_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j] - m));
        const double log_denom = std::log(denom);
        float* prow = probs->data() + i * k;
        for (int64_t j = 0; j < k; ++j) {
            prow[j] = static_cast<float>(std::exp(static_cast<double>(row[j] - m)) / denom);
        }
        loss_acc += log_denom - static_cast<double>(row[labels[static_cast<size_t>(i)]] - m);
    }
    Tensor out = Tensor::scalar(static_cast<float>(loss_acc / static_cast<double>(n)));
    auto labels_copy = std::make_shared<std::vector<int>>(labels);
    return t.emit(std::move(out), {logits},
                  [logits, probs, labels_copy, n, k](GradTape& tape, ValueId y) {
        const float g = tape.grad_out(y)[0] / static_cast<float>(n);
        Tensor& dz = tape.grad_buffer(logits);
        for (int64_t i = 0; i < n; ++i) {
            const float* prow = probs->data() + i * k;
            float* drow = dz.data() + i * k;
            const int label = (*labels_copy)[static_cast<size_t>(i)];
            for (int64_t j = 0; j < k; ++j) {
                drow[j] += g * (prow[j] - (j == label ? 1.0f : 0.0f));
            }
        }
    });
}

ValueId batch_norm(GradTape& t, ValueId x, const BatchNormArgs& args) {
    const Tensor& xv = t.value(x);
    const Tensor& gv = t.value(args.gamma);
    int64_t outer, channels, inner;
    if (xv.rank() == 2) {
        outer = xv.dim(0); channels = xv.dim(1); inner = 1;
    } else if (xv.rank() == 4) {
        outer = xv.dim(0); channels = xv.dim(1); inner = xv.dim(2) * xv.dim(3);
    } else {
        throw ShapeError("batch_norm: input must be rank-2 or rank-4, got " + shape_str(xv.shape()));
    }
    if (gv.numel() != channels) {
        throw ShapeError("batch_norm: gamma " + shape_str(gv.shape()) + " does not match input " +
                         shape_str(xv.shape()));
    }
    const int64_t m = outer * inner; // elements per channel
    if (args.train && m < 2) {
        throw ContractError("batch_norm: training mode needs >= 2 values per channel");
    }

    std::vector<float> mean_c(static_cast<size_t>(channels));
    std::vector<float> inv_std_c(static_cast<size_t>(channels));
    if (args.train) {
        for (int64_t c = 0; c < channels; ++c) {
            double s = 0.0;
            for (int64_t o = 0; o < outer; ++o) {
                const float* p = xv.data() + (o * channels + c) * inner;
                for (int64_t i = 0; i < inner; ++i) s += p[i];
            }
            const double mu = s / static_cast<double>(m);
            double sq = 0.0;
            for (int64_t o = 0; o < outer; ++o) {
                const float* p = xv.data() + (o * channels + c) * inner;
                for (int64_t i = 0; i < inner; ++i) {
                    const double dv = p[i] - mu;
                    sq += dv * dv;
                }
            }
            const double var = sq / static_cast<double>(m);
            mean_c[static_cast<size_t>(c)] = static_cast<float>(mu);
            inv_std_c[static_cast<size_t>(c)] =
                static_cast<float>(1.0 / std::sqrt(var + static_cast<double>(args.eps)));
            const double unbiased = sq / static_cast<double>(m - 1);
            float& rm = (*args.running_mean)[c];
            float& rv = (*args.running_var)[c];
            rm = (1.0f - args.momentum) * rm + args.momentum * static_cast<float>(mu);
            rv = (1.0f - args.momentum) * rv + args.momentum * static_cast<float>(unbiased);
        }
    } else {
        for (int64_t c = 0; c < channels; ++c) {
            mean_c[static_cast<size_t>(c)] = (*args.running_mean)[c];
            inv_std_c[static_cast<size_t>(c)] = 1.0f / std::sqrt((*args.running_var)[c] + args.eps);
        }
    }

    const Tensor& beta_v = t.value(args.beta);
    Tensor out(xv.shape());
    auto xhat = std::make_shared<Tensor>(Tensor::zeros(xv.shape()));
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t c = 0; c < channels; ++c) {
            const int64_t base = (o * channels + c) * inner;
            const float mu = mean_c[static_cast<size_t>(c)];
            const float is = inv_std_c[static_cast<size_t>(c)];
            const float ga = gv[c], be = beta_v[c];
            for (int64_t i = 0; i < inner; ++i) {
                const float xh = (xv[base + i] - mu) * is;
                (*xhat)[base + i] = xh;
                out[base + i] = ga * xh + be;
            }
        }

    auto inv_std = std::make_shared<std::vector<float>>(std::move(inv_std_c));
    const bool train = args.train;
    ValueId gamma = args.gamma, beta = args.beta;
    return t.emit(std::move(out), {x, gamma, beta},
                  [x, gamma, beta, xhat, inv_std, outer, channels, inner, m, train](
                      GradTape& tape, ValueId y) {
        const Tensor& g = tape.grad_out(y);
        // per-channel reductions used by every branch
        std::vector<float> sum_dy(static_cast<size_t>(channels), 0.0f);
        std::vector<float> sum_dy_xhat(static_cast<size_t>(channels), 0.0f);
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t c = 0; c < channels; ++c) {
                const int64_t base = (o * channels + c) * inner;
                float s = 0.0f, sx = 0.0f;
                for (int64_t i = 0; i < inner; ++i) {
                    s += g[base + i];
                    sx += g[base + i] * (*xhat)[base + i];
                }
                sum_dy[static_cast<size_t>(c)] += s;
                sum_dy_xhat[static_cast<size_t>(c)] += sx;
            }
        if (tape.requires_grad(gamma)) {
            Tensor& dg = tape.grad_buffer(gamma);
            for (int64_t c = 0; c < channels; ++c) dg[c] += sum_dy_xhat[static_cast<size_t>(c)];
        }
        if (tape.requires_grad(beta)) {
            Tensor& db = tape.grad_buffer(beta);
            for (int64_t c = 0; c < channels; ++c) db[c] += sum_dy[static_cast<size_t>(c)];
        }
        if (tape.requires_grad(x)) {
            const Tensor& gv = tape.value(gamma);
            Tensor& dx = tape.grad_buffer(x);
            const float inv_m = 1.0f / static_cast<float>(m);
            for (int64_t o = 0; o < outer; ++o)
                for (int64_t c = 0; c < channels; ++c) {
                    const int64_t base = (o * channels + c) * inner;
                    const float k = gv[c] * (*inv_std)[static_cast<size_t>(c)];
                    if (train) {
                        const float sd = sum_dy[static_cast<size_t>(c)];
                        const float sdx = sum_dy_xhat[static_cast<size_t>(c)];
                        for (int64_t i = 0; i < inner; ++i) {
                            dx[base + i] += k * (g[base + i] - inv_m * (sd + (*xhat)[base + i] * sdx));
                        }
                    } else {
                        for (int64_t i = 0; i < inner; ++i) dx[base + i] += k * g[base + i];
                    }
                }
        }
    });
}

} // namespace ops
} // namespace tspike
