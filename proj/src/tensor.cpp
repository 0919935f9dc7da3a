#include "ggan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace ggan {

std::int64_t numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << "]";
    return os.str();
}

void check_finite(const std::vector<float>& v, const std::string& what) {
    for (float x : v) {
        if (!std::isfinite(x)) {
            throw NumericsError("non-finite value produced by " + what);
        }
    }
}

void TensorData::zero_grad() {
    grad.assign(data.size(), 0.0f);
}

void TensorData::accumulate_grad(const std::vector<float>& g) {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
    for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

float TensorData::scalar() const {
    if (data.size() != 1) {
        throw ShapeError("scalar() on tensor of shape " + shape_str(shape));
    }
    return data[0];
}

Tensor make_tensor(Shape shape, std::vector<float> data) {
    auto t = std::make_shared<TensorData>();
    if (numel(shape) != static_cast<std::int64_t>(data.size())) {
        throw ShapeError("tensor data size " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    }
    check_finite(data, "tensor construction");
    t->shape = std::move(shape);
    t->data = std::move(data);
    return t;
}

Tensor make_param(Shape shape, std::vector<float> data) {
    Tensor t = make_tensor(std::move(shape), std::move(data));
    t->requires_grad = true;
    return t;
}

Tensor zeros(const Shape& shape) {
    return make_tensor(shape, std::vector<float>(numel(shape), 0.0f));
}

Tensor full(const Shape& shape, float value) {
    return make_tensor(shape, std::vector<float>(numel(shape), value));
}

Tensor scalar_tensor(float value) {
    return make_tensor({1}, {value});
}

Graph::Graph(std::uint64_t seed) : rng_(static_cast<std::mt19937::result_type>(seed)) {}

Tensor Graph::emit(OpRecord rec, Shape out_shape, std::vector<float> out_data) {
    check_finite(out_data, rec.kind);
    Tensor out = std::make_shared<TensorData>();
    out->shape = std::move(out_shape);
    out->data = std::move(out_data);
    out->node = static_cast<int>(records_.size());
    rec.output = out;
    records_.push_back(std::move(rec));
    return out;
}

namespace {

bool is_scalar_shape(const Shape& s) { return numel(s) == 1; }

void require_same_or_scalar(const Shape& a, const Shape& b, const char* op) {
    if (a == b || is_scalar_shape(b)) return;
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) +
                     " vs " + shape_str(b));
}

// Normalizes C×T or B×C×T to (B, C, T).
struct Dims3 {
    int B, C, T;
    bool was2d;
};

Dims3 as3d(const Shape& s, const char* op) {
    if (s.size() == 2) return {1, s[0], s[1], true};
    if (s.size() == 3) return {s[0], s[1], s[2], false};
    throw ShapeError(std::string(op) + ": expected C×T or B×C×T, got " + shape_str(s));
}

Shape like3d(const Dims3& d, int C, int T) {
    if (d.was2d) return {C, T};
    return {d.B, C, T};
}

int conv_out_len(int T, int K, int stride, int padding) {
    return (T + 2 * padding - K) / stride + 1;
}

// y[b][co][t] += sum_{ci,k} x[b][ci][t*s+k-p] * w[co][ci][k]
void conv_fwd(const float* x, const float* w, const float* bias,
              int B, int Ci, int T, int Co, int K, int stride, int padding,
              float* y, int To) {
    for (int b = 0; b < B; ++b) {
        for (int co = 0; co < Co; ++co) {
            for (int t = 0; t < To; ++t) {
                double acc = bias ? bias[co] : 0.0;
                int base = t * stride - padding;
                for (int ci = 0; ci < Ci; ++ci) {
                    const float* xr = x + (static_cast<std::size_t>(b) * Ci + ci) * T;
                    const float* wr = w + (static_cast<std::size_t>(co) * Ci + ci) * K;
                    for (int k = 0; k < K; ++k) {
                        int src = base + k;
                        if (src >= 0 && src < T)
                            acc += static_cast<double>(xr[src]) * wr[k];
                    }
                }
                y[(static_cast<std::size_t>(b) * Co + co) * To + t] = static_cast<float>(acc);
            }
        }
    }
}

// dx[b][ci][t*s+k-p] += g[b][co][t] * w[co][ci][k]
void conv_input_grad(const float* g, const float* w,
                     int B, int Ci, int T, int Co, int K, int stride, int padding,
                     int To, float* dx) {
    for (int b = 0; b < B; ++b) {
        for (int co = 0; co < Co; ++co) {
            const float* gr = g + (static_cast<std::size_t>(b) * Co + co) * To;
            for (int t = 0; t < To; ++t) {
                int base = t * stride - padding;
                float gv = gr[t];
                for (int ci = 0; ci < Ci; ++ci) {
                    float* dxr = dx + (static_cast<std::size_t>(b) * Ci + ci) * T;
                    const float* wr = w + (static_cast<std::size_t>(co) * Ci + ci) * K;
                    for (int k = 0; k < K; ++k) {
                        int src = base + k;
                        if (src >= 0 && src < T) dxr[src] += gv * wr[k];
                    }
                }
            }
        }
    }
}

// dw[co][ci][k] += sum_{b,t} g[b][co][t] * x[b][ci][t*s+k-p]
void conv_weight_grad(const float* g, const float* x,
                      int B, int Ci, int T, int Co, int K, int stride, int padding,
                      int To, float* dw) {
    for (int b = 0; b < B; ++b) {
        for (int co = 0; co < Co; ++co) {
            const float* gr = g + (static_cast<std::size_t>(b) * Co + co) * To;
            for (int t = 0; t < To; ++t) {
                int base = t * stride - padding;
                float gv = gr[t];
                for (int ci = 0; ci < Ci; ++ci) {
                    const float* xr = x + (static_cast<std::size_t>(b) * Ci + ci) * T;
                    float* dwr = dw + (static_cast<std::size_t>(co) * Ci + ci) * K;
                    for (int k = 0; k < K; ++k) {
                        int src = base + k;
                        if (src >= 0 && src < T) dwr[k] += gv * xr[src];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor Graph::add(const Tensor& a, const Tensor& b) {
    require_same_or_scalar(a->shape, b->shape, "add");
    bool bs = b->shape != a->shape;
    std::vector<float> out(a->data.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = a->data[i] + (bs ? b->data[0] : b->data[i]);
    OpRecord rec;
    rec.kind = "add";
    rec.inputs = {a, b};
    rec.vjp = [bs](const std::vector<float>& g, std::vector<std::vector<float>*>& gin) {
        if (gin[0]) for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
        if (gin[1]) {
            if (bs) {
                float s = 0;
                for (float v : g) s += v;
                (*gin[1])[0] += s;
            } else {
                for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] += g[i];
            }
        }
    };
    rec.sym_vjp = [bs](Graph& gr, const Tensor& g) -> std::vector<Tensor> {
        Tensor gb = bs ? gr.sum_all(g) : g;
        return {g, gb};
    };
    return emit(std::move(rec), a->shape, std::move(out));
}

Tensor Graph::sub(const Tensor& a, const Tensor& b) {
    require_same_or_scalar(a->shape, b->shape, "sub");
    bool bs = b->shape != a->shape;
    std::vector<float> out(a->data.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = a->data[i] - (bs ? b->data[0] : b->data[i]);
    OpRecord rec;
    rec.kind = "sub";
    rec.inputs = {a, b};
    rec.vjp = [bs](const std::vector<float>& g, std::vector<std::vector<float>*>& gin) {
        if (gin[0]) for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
        if (gin[1]) {
            if (bs) {
                float s = 0;
                for (float v : g) s += v;
                (*gin[1])[0] -= s;
            } else {
                for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] -= g[i];
            }
        }
    };
    rec.sym_vjp = [bs](Graph& gr, const Tensor& g) -> std::vector<Tensor> {
        Tensor gb = gr.scale(bs ? gr.sum_all(g) : g, -1.0f);
        return {g, gb};
    };
    return emit(std::move(rec), a->shape, std::move(out));
}

Tensor Graph::mul(const Tensor& a, const Tensor& b) {
    require_same_or_scalar(a->shape, b->shape, "mul");
    bool bs = b->shape != a->shape;
    std::vector<float> out(a->data.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = a->data[i] * (bs ? b->data[0] : b->data[i]);
    OpRecord rec;
    rec.kind = "mul";
    rec.inputs = {a, b};
    rec.vjp = [a, b, bs](const std::vector<float>& g, std::vector<std::vector<float>*>& gin) {
        if (gin[0]) {
            for (std::size_t i = 0; i < g.size(); ++i)
                (*gin[0])[i] += g[i] * (bs ? b->data[0] : b->data[i]);
        }
        if (gin[1]) {
            if (bs) {
                float s = 0;
                for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * a->data[i];
                (*gin[1])[0] += s;
            } else {
                for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] += g[i] * a->data[i];
            }
        }
    };
    rec.sym_vjp = [a, b, bs](Graph& gr, const Tensor& g) -> std::vector<Tensor> {
        Tensor ga = gr.mul(g, b);
        Tensor gb = bs ? gr.sum_all(gr.mul(g, a)) : gr.mul(g, a);
        return {ga, gb};
    };
    return emit(std::move(rec), a->shape, std::move(out));
}

Tensor Graph::scale(const Tensor& a, float s) {
    std::vector<float> out(a->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] * s;
    OpRecord rec;
    rec.kind = "scale";
    rec.inputs = {a};
    rec.vjp = [s](const std::vector<float>& g, std::vector<std::vector<float>*>& gin) {
        if (gin[0]) for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * s;
    };
    rec.sym_vjp = [s](Graph& gr, const Tensor& g) -> std::vector<Tensor> {
        return {gr.scale(g, s)};
    };
    return emit(std::move(rec), a->shape, std::move(out));
}

Tensor Graph::add_scalar(const Tensor& a, float s) {
    std::vector<float> out(a->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] + s;
    OpRecord rec;
    rec.kind = "add_scalar";
    rec.inputs = {a};
    rec.vjp = [](const std::vector<float>& g, std::vector<std::vector<float>*>& gin) {
        if (gin[0]) for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
    };
    rec.sym_vjp = [](Graph&, const Tensor& g) -> std::vector<Tensor> { return {g}; };
    return emit(std::move(rec), a->shape, std::move(out));
}

Tensor Graph::matmul(const Tensor& a, const Tensor& b) {
    if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0]) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(a->shape) +
                         " and " + shape_str(b->shape));
    }
    int M = a->shape[0], K = a->shape[1], N = b->shape[1];
    std::vector<float> out(static_cast<std::size_t>(M) * N, 0.0f);
    for (int i = 0; i < M; ++i) {
        for (int j = 0; j < N; ++j) {
            double acc = 0.0;
            const float* ar = a->data.data() + static_cast<std::size_t>(i) * K;
            for (int k = 0; k < K; ++k)
                acc += static_cast<double>(ar[k]) * b->data[static_cast<std::size_t>(k) * N + j];
            out[static_cast<std::size_t>(i) * N + j] = static_cast<float>(acc);
        }
    }
    OpRecord rec;
    rec.kind = "matmul";
    rec.inputs = {a, b};
    rec.vjp = [a, b, M, K, N](const std::vector<float>& g,
                              std::vector<std::vector<float>*>& gin) {
        if (gin[0]) {  // dA = g · B^T
            for (int i = 0; i < M; ++i)
                for (int k = 0; k < K; ++k) {
                    float acc = 0;
                    for (int j = 0; j < N; ++j)
                        acc += g[static_cast<std::size_t>(i) * N + j] *
                               b->data[static_cast<std::size_t>(k) * N + j];
                    (*gin[0])[static_cast<std::size_t>(i) * K + k] += acc;
                }
        }
        if (gin[1]) {  // dB = A^T · g
            for (int k = 0; k < K; ++k)
                for (int j = 0; j < N; ++j) {
                    float acc = 0;
                    for (int i = 0; i < M; ++i)
                        acc += a->data[static_cast<std::size_t>(i) * K + k] *
                               g[static_cast<std::size_t>(i) * N + j];
                    (*gin[1])[static_cast<std::size_t>(k) * N + j] += acc;
                }
        }
    };
    rec.sym_vjp = [b](Graph& gr, const Tensor& g) -> std::vector<Tensor> {
        return {gr.matmul(g, gr.transpose(b)), nullptr};
    };
    return emit(std::move(rec), {M, N}, std::move(out));
}

Tensor Graph::transpose(const Tensor& a) {
    if (a->shape.size() != 2) throw ShapeError("transpose: expected 2-D tensor");
    int M = a->shape[0], N = a->shape[1];
    std::vector<float> out(a->data.size());
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < N; ++j)
            out[static_cast<std::size_t>(j) * M + i] = a->data[static_cast<std::size_t>(i) * N + j];
    OpRecord rec;
    rec.kind = "transpose";
    rec.inputs = {a};
    rec.vjp = [M, N](const std::vector<float>& g, std::vector<std::vector<float>*>& gin) {
        if (gin[0]) {
            for (int i = 0; i < M; ++i)
                for (int j = 0; j < N; ++j)
                    (*gin[0])[static_cast<std::size_t>(i) * N + j] +=
                        g[static_cast<std::size_t>(j) * M + i];
        }
    };
    rec.sym_vjp = [](Graph& gr, const Tensor& g) -> std::vector<Tensor> {
        return {gr.transpose(g)};
    };
    return emit(std::move(rec), {N, M}, std::move(out));
}

Tensor Graph::add_bias(const Tensor& x, const Tensor& b) {
    if (b->shape.size() != 1) throw ShapeError("add_bias: bias must be 1-D");
    int C = b->shape[0];
    std::vector<float> out(x->data.size());
    std::size_t inner, nrep;
    if (x->shape.size() == 2 && x->shape[1] == C) {
        inner = 1;
        nrep = x->shape[0];
        for (std::size_t r = 0; r < nrep; ++r)
            for (int c = 0; c < C; ++c)
                out[r * C + c] = x->data[r * C + c] + b->data[c];
    } else {
        Dims3 d = as3d(x->shape, "add_bias");
        if (d.C != C)
            throw ShapeError("add_bias: channel mismatch " + shape_str(x->shape) +
                             " vs " + shape_str(b->shape));
        inner = static_cast<std::size_t>(d.T);
        nrep = static_cast<std::size_t>(d.B);
        for (std::size_t bb = 0; bb < nrep; ++bb)
            for (int c = 0; c < C; ++c)
                for (std::size_t t = 0; t < inner; ++t) {
                    std::size_t idx = (bb * C + c) * inner + t;
                    out[idx] = x->data[idx] + b->data[c];
                }
    }
    OpRecord rec;
    rec.kind = "add_bias";
    rec.inputs = {x, b};
    rec.vjp = [C, inner, nrep](const std::vector<float>& g,
                               std::vector<std::vector<float>*>& gin) {
        if (gin[0]) for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
        if (gin[1]) {
            for (std::size_t bb = 0; bb < nrep; ++bb)
                for (int c = 0; c < C; ++c)
                    for (std::size_t t = 0; t < inner; ++t)
                        (*gin[1])[c] += g[(bb * C + c) * inner + t];
        }
    };
    rec.sym_vjp = [](Graph&, const Tensor& g) -> std::vector<Tensor> {
        return {g, nullptr};
    };
    return emit(std::move(rec), x->shape, std::move(out));
}

Tensor Graph::conv1d(const Tensor& x, const Tensor& w, const Tensor& b,
                     int stride, int padding) {
    Dims3 d = as3d(x->shape, "conv1d");
    if (w->shape.size() != 3 || w->shape[1] != d.C) {
        throw ShapeError("conv1d: weight " + shape_str(w->shape) +
                         " incompatible with input " + shape_str(x->shape));
    }
    int Co = w->shape[0], K = w->shape[2];
    if (stride < 1) throw ShapeError("conv1d: stride must be positive");
    if (padding < 0) throw ShapeError("conv1d: padding must be non-negative");
    if (d.T + 2 * padding < K) {
        throw ShapeError("conv1d: input length " + std::to_string(d.T) +
                         " too short for kernel " + std::to_string(K));
    }
    int To = conv_out_len(d.T, K, stride, padding);
    if (To < 1) throw ShapeError("conv1d: empty output");
    if (b && b->shape != Shape{Co}) throw ShapeError("conv1d: bad bias shape");
    std::vector<float> out(static_cast<std::size_t>(d.B) * Co * To);
    conv_fwd(x->data.data(), w->data.data(), b ? b->data.data() : nullptr,
             d.B, d.C, d.T, Co, K, stride, padding, out.data(), To);
    OpRecord rec;
    rec.kind = "conv1d";
    rec.inputs = b ? std::vector<Tensor>{x, w, b} : std::vector<Tensor>{x, w};
    rec.vjp = [x, w, d, Co, K, stride, padding, To](
                  const std::vector<float>& g, std::vector<std::vector<float>*>& gin) {
        if (gin[0])
            conv_input_grad(g.data(), w->data.data(), d.B, d.C, d.T, Co, K,
                            stride, padding, To, gin[0]->data());
        if (gin[1])
            conv_weight_grad(g.data(), x->data.data(), d.B, d.C, d.T, Co, K,
                             stride, padding, To, gin[1]->data());
        if (gin.size() > 2 && gin[2]) {
            for (int bb = 0; bb < d.B; ++bb)
                for (int co = 0; co < Co; ++co)
                    for (int t = 0; t < To; ++t)
                        (*gin[2])[co] += g[(static_cast<std::size_t>(bb) * Co + co) * To + t];
        }
    };
    int Tin = d.T;
    std::size_t n_in = rec.inputs.size();
    rec.sym_vjp = [w, stride, padding, Tin, n_in](Graph& gr,
                                                  const Tensor& g) -> std::vector<Tensor> {
        std::vector<Tensor> res(n_in, nullptr);
        res[0] = gr.conv1d_adjoint_(g, w, stride, padding, Tin);
        return res;
    };
    return emit(std::move(rec), like3d(d, Co, To), std::move(out));
}

// Adjoint of conv1d with respect to its input: maps g [B×Co×To] back to
// [B×Ci×Tin]. Recorded so the gradient penalty can differentiate through it.
Tensor Graph::conv1d_adjoint_(const Tensor& g, const Tensor& w, int stride,
                              int padding, int Tin) {
    Dims3 d = as3d(g->shape, "conv1d_adjoint");
    int Co = w->shape[0], Ci = w->shape[1], K = w->shape[2];
    if (d.C != Co) throw ShapeError("conv1d_adjoint: channel mismatch");
    std::vector<float> out(static_cast<std::size_t>(d.B) * Ci * Tin, 0.0f);
    conv_input_grad(g->data.data(), w->data.data(), d.B, Ci, Tin, Co, K,
                    stride, padding, d.T, out.data());
    OpRecord rec;
    rec.kind = "conv1d_adjoint";
    rec.inputs = {g, w};
    int To = d.T;
    rec.vjp = [g, w, d, Ci, Co, K, stride, padding, Tin, To](
                  const std::vector<float>& u, std::vector<std::vector<float>*>& gin) {
        // The adjoint is linear in both g and w.
        if (gin[0])
            conv_fwd(u.data(), w->data.data(), nullptr, d.B, Ci, Tin, Co, K,
                     stride, padding, gin[0]->data(), To);
        if (gin[1])
            conv_weight_grad(g->data.data(), u.data(), d.B, Ci, Tin, Co, K,
                             stride, padding, To, gin[1]->data());
    };
    return emit(std::move(rec), like3d(d, Ci, Tin), std::move(out));
}

Tensor Graph::conv1d_transposed(const Tensor& x, const Tensor& w, const Tensor& b,
                                int stride) {
    Dims3 d = as3d(x->shape, "conv1d_transposed");
    if (w->shape.size() != 3 || w->shape[0] != d.C) {
        throw ShapeError("conv1d_transposed: weight " + shape_str(w->shape) +
                         " incompatible with input " + shape_str(x->shape));
    }
    if (d.T < 1) throw ShapeError("conv1d_transposed: empty input");
    int Ci = d.C, Co = w->shape[1], K = w->shape[2];
    int To = (d.T - 1) * stride + K;
    if (b && b->shape != Shape{Co}) throw ShapeError("conv1d_transposed: bad bias shape");
    std::vector<float> out(static_cast<std::size_t>(d.B) * Co * To, 0.0f);
    for (int bb = 0; bb < d.B; ++bb)
        for (int ci = 0; ci < Ci; ++ci)
            for (int t = 0; t < d.T; ++t) {
                float xv = x->data[(static_cast<std::size_t>(bb) * Ci + ci) * d.T + t];
                for (int co = 0; co < Co; ++co) {
                    const float* wr = w->data.data() + (static_cast<std::size_t>(ci) * Co + co) * K;
                    float* orow = out.data() + (static_cast<std::size_t>(bb) * Co + co) * To;
                    for (int k = 0; k < K; ++k) orow[t * stride + k] += xv * wr[k];
                }
            }
    if (b) {
        for (int bb = 0; bb < d.B; ++bb)
            for (int co = 0; co < Co; ++co)
                for (int t = 0; t < To; ++t)
                    out[(static_cast<std::size_t>(bb) * Co + co) * To + t] += b->data[co];
    }
    OpRecord rec;
    rec.kind = "conv1d_transposed";
    rec.inputs = b ? std::vector<Tensor>{x, w, b} : std::vector<Tensor>{x, w};
    rec.vjp = [x, w, d, Ci, Co, K, stride, To](const std::vector<float>& g,
                                               std::vector<std::vector<float>*>& gin) {
        if (gin[0]) {
            // dx[b][ci][t] = sum_{co,k} g[b][co][t*s+k] * w[ci][co][k]
            for (int bb = 0; bb < d.B; ++bb)
                for (int ci = 0; ci < Ci; ++ci)
                    for (int t = 0; t < d.T; ++t) {
                        float acc = 0;
                        for (int co = 0; co < Co; ++co) {
                            const float* wr = w->data.data() +
                                (static_cast<std::size_t>(ci) * Co + co) * K;
                            const float* gr = g.data() +
                                (static_cast<std::size_t>(bb) * Co + co) * To;
                            for (int k = 0; k < K; ++k) acc += gr[t * stride + k] * wr[k];
                        }
                        (*gin[0])[(static_cast<std::size_t>(bb) * Ci + ci) * d.T + t] += acc;
                    }
        }
        if (gin[1]) {
            for (int bb = 0; bb < d.B; ++bb)
                for (int ci = 0; ci < Ci; ++ci)
                    for (int t = 0; t < d.T; ++t) {
                        float xv = x->data[(static_cast<std::size_t>(bb) * Ci + ci) * d.T + t];
                        for (int co = 0; co < Co; ++co) {
                            const float* gr = g.data() +
                                (static_cast<std::size_t>(bb) * Co + co) * To;
                            float* dwr = gin[1]->data() +
                                (static_cast<std::size_t>(ci) * Co + co) * K;
                            for (int k = 0; k < K; ++k) dwr[k] += xv * gr[t * stride + k];
                        }
                    }
        }
        if (gin.size() > 2 && gin[2]) {
            for (int bb = 0; bb < d.B; ++bb)
                for (int co = 0; co < Co; ++co)
                    for (int t = 0; t < To; ++t)
                        (*gin[2])[co] += g[(static_cast<std::size_t>(bb) * Co + co) * To + t];
        }
    };
    return emit(std::move(rec), like3d(d, Co, To), std::move(out));
}

Tensor Graph::maxpool1d(const Tensor& x, int window) {
    Dims3 d = as3d(x->shape, "maxpool1d");
    if (window < 1 || d.T < window) {
        throw ShapeError("maxpool1d: window " + std::to_string(window) +
                         " invalid for length " + std::to_string(d.T));
    }
    int To = d.T / window;
    std::vector<float> out(static_cast<std::size_t>(d.B) * d.C * To);
    auto argmax = std::make_shared<std::vector<int>>(out.size());
    for (int bb = 0; bb < d.B; ++bb)
        for (int c = 0; c < d.C; ++c) {
            const float* xr = x->data.data() + (static_cast<std::size_t>(bb) * d.C + c) * d.T;
            for (int t = 0; t < To; ++t) {
                int best = t * window;
                float bv = xr[best];
                for (int k = 1; k < window; ++k) {
                    // ties keep the lowest index
                    if (xr[t * window + k] > bv) {
                        best = t * window + k;
                        bv = xr[best];
                    }
                }
                std::size_t oi = (static_cast<std::size_t>(bb) * d.C + c) * To + t;
                out[oi] = bv;
                (*argmax)[oi] = best;
            }
        }
    OpRecord rec;
    rec.kind = "maxpool1d";
    rec.inputs = {x};
    int T = d.T;
    Dims3 dd = d;
    rec.vjp = [argmax, dd, To, T](const std::vector<float>& g,
                                  std::vector<std::vector<float>*>& gin) {
        if (gin[0]) {
            for (int bb = 0; bb < dd.B; ++bb)
                for (int c = 0; c < dd.C; ++c)
                    for (int t = 0; t < To; ++t) {
                        std::size_t oi = (static_cast<std::size_t>(bb) * dd.C + c) * To + t;
                        (*gin[0])[(static_cast<std::size_t>(bb) * dd.C + c) * T +
                                  (*argmax)[oi]] += g[oi];
                    }
        }
    };
    Shape in_shape = x->shape;
    rec.sym_vjp = [argmax, in_shape](Graph& gr, const Tensor& g) -> std::vector<Tensor> {
        return {gr.maxpool_scatter_(g, argmax, in_shape)};
    };
    return emit(std::move(rec), like3d(d, d.C, To), std::move(out));
}

// Scatter of pooled gradients back to the argmax positions; the argmax
// indices are held fixed (second derivative of max is zero a.e.).
Tensor Graph::maxpool_scatter_(const Tensor& g,
                               const std::shared_ptr<std::vector<int>>& argmax,
                               const Shape& in_shape) {
    Dims3 d = as3d(in_shape, "maxpool_scatter");
    Dims3 dg = as3d(g->shape, "maxpool_scatter");
    int To = dg.T, T = d.T;
    std::vector<float> out(numel(in_shape), 0.0f);
    for (int bb = 0; bb < d.B; ++bb)
        for (int c = 0; c < d.C; ++c)
            for (int t = 0; t < To; ++t) {
                std::size_t oi = (static_cast<std::size_t>(bb) * d.C + c) * To + t;
                out[(static_cast<std::size_t>(bb) * d.C + c) * T + (*argmax)[oi]] +=
                    g->data[oi];
            }
    OpRecord rec;
    rec.kind = "maxpool_scatter";
    rec.inputs = {g};
    Dims3 dd = d;
    rec.vjp = [argmax, dd, To, T](const std::vector<float>& u,
                                  std::vector<std::vector<float>*>& gin) {
        if (gin[0]) {
            for (int bb = 0; bb < dd.B; ++bb)
                for (int c = 0; c < dd.C; ++c)
                    for (int t = 0; t < To; ++t) {
                        std::size_t oi = (static_cast<std::size_t>(bb) * dd.C + c) * To + t;
                        (*gin[0])[oi] +=
                            u[(static_cast<std::size_t>(bb) * dd.C + c) * T + (*argmax)[oi]];
                    }
        }
    };
    return emit(std::move(rec), in_shape, std::move(out));
}

Tensor Graph::relu(const Tensor& x) {
    return leaky_relu(x, 0.0f);
}

Tensor Graph::leaky_relu(const Tensor& x, float slope) {
    std::vector<float> out(x->data.size());
    auto mask = std::make_shared<std::vector<float>>(x->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        bool pos = x->data[i] > 0.0f;
        (*mask)[i] = pos ? 1.0f : slope;
        out[i] = x->data[i] * (*mask)[i];
    }
    OpRecord rec;
    rec.kind = slope == 0.0f ? "relu" : "leaky_relu";
    rec.inputs = {x};
    rec.vjp = [mask](const std::vector<float>& g, std::vector<std::vector<float>*>& gin) {
        if (gin[0]) for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * (*mask)[i];
    };
    Shape sh = x->shape;
    rec.sym_vjp = [mask, sh](Graph& gr, const Tensor& g) -> std::vector<Tensor> {
        return {gr.mul(g, make_tensor(sh, *mask))};
    };
    return emit(std::move(rec), x->shape, std::move(out));
}

Tensor Graph::log(const Tensor& x) {
    std::vector<float> out(x->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(x->data[i] > 0.0f))
            throw NumericsError("log: input must be strictly positive, got " +
                                std::to_string(x->data[i]));
        out[i] = std::log(x->data[i]);
    }
    OpRecord rec;
    rec.kind = "log";
    rec.inputs = {x};
    Tensor xin = x;
    rec.vjp = [xin](const std::vector<float>& g, std::vector<std::vector<float>*>& gin) {
        if (gin[0])
            for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] / xin->data[i];
    };
    return emit(std::move(rec), x->shape, std::move(out));
}

Tensor Graph::sigmoid(const Tensor& x) {
    std::vector<float> out(x->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        float v = x->data[i];
        out[i] = v >= 0 ? 1.0f / (1.0f + std::exp(-v))
                        : std::exp(v) / (1.0f + std::exp(v));
    }
    OpRecord rec;
    rec.kind = "sigmoid";
    rec.inputs = {x};
    rec.vjp = [](const std::vector<float>&, std::vector<std::vector<float>*>&) {};
    Tensor result = emit(std::move(rec), x->shape, std::move(out));
    OpRecord& r = records_[result->node];
    std::weak_ptr<TensorData> wy = result;
    r.vjp = [wy](const std::vector<float>& g, std::vector<std::vector<float>*>& gin) {
        auto yt = wy.lock();
        if (gin[0] && yt) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                float yv = yt->data[i];
                (*gin[0])[i] += g[i] * yv * (1.0f - yv);
            }
        }
    };
    Shape sh = x->shape;
    r.sym_vjp = [wy, sh](Graph& gr, const Tensor& g) -> std::vector<Tensor> {
        Tensor y = wy.lock();
        Tensor one_minus = gr.sub(full(sh, 1.0f), y);
        return {gr.mul(gr.mul(g, y), one_minus)};
    };
    return result;
}

Tensor Graph::log_softmax(const Tensor& x) {
    if (x->shape.size() != 2) throw ShapeError("log_softmax: expected B×C");
    int B = x->shape[0], C = x->shape[1];
    std::vector<float> out(x->data.size());
    for (int b = 0; b < B; ++b) {
        const float* row = x->data.data() + static_cast<std::size_t>(b) * C;
        float m = row[0];
        for (int c = 1; c < C; ++c) m = std::max(m, row[c]);
        double lse = 0.0;
        for (int c = 0; c < C; ++c) lse += std::exp(static_cast<double>(row[c] - m));
        float logz = m + static_cast<float>(std::log(lse));
        for (int c = 0; c < C; ++c)
            out[static_cast<std::size_t>(b) * C + c] = row[c] - logz;
    }
    OpRecord rec;
    rec.kind = "log_softmax";
    rec.inputs = {x};
    Tensor result = emit(std::move(rec), x->shape, std::move(out));
    std::weak_ptr<TensorData> wy = result;
    records_[result->node].vjp = [wy, B, C](const std::vector<float>& g,
                                            std::vector<std::vector<float>*>& gin) {
        auto yt = wy.lock();
        if (gin[0] && yt) {
            for (int b = 0; b < B; ++b) {
                float gsum = 0;
                for (int c = 0; c < C; ++c) gsum += g[static_cast<std::size_t>(b) * C + c];
                for (int c = 0; c < C; ++c) {
                    std::size_t i = static_cast<std::size_t>(b) * C + c;
                    (*gin[0])[i] += g[i] - std::exp(yt->data[i]) * gsum;
                }
            }
        }
    };
    return result;
}

Tensor Graph::sqrt(const Tensor& x) {
    std::vector<float> out(x->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (x->data[i] < 0.0f) throw NumericsError("sqrt of negative value");
        out[i] = std::sqrt(x->data[i]);
    }
    OpRecord rec;
    rec.kind = "sqrt";
    rec.inputs = {x};
    Tensor result = emit(std::move(rec), x->shape, std::move(out));
    std::weak_ptr<TensorData> wy = result;
    records_[result->node].vjp = [wy](const std::vector<float>& g,
                                      std::vector<std::vector<float>*>& gin) {
        auto yt = wy.lock();
        if (gin[0] && yt) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                float denom = std::max(yt->data[i], 1e-12f);
                (*gin[0])[i] += g[i] * 0.5f / denom;
            }
        }
    };
    return result;
}

Tensor Graph::dropout(const Tensor& x, float p, bool training) {
    if (p < 0.0f || p >= 1.0f) {
        throw std::invalid_argument("dropout: p must be in [0,1), got " + std::to_string(p));
    }
    if (!training || p == 0.0f) return x;  // eval mode is the identity
    float keep = 1.0f - p;
    auto mask = std::make_shared<std::vector<float>>(x->data.size());
    std::uniform_real_distribution<float> uni(0.0f, 1.0f);
    std::vector<float> out(x->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        (*mask)[i] = uni(rng_) < p ? 0.0f : 1.0f / keep;
        out[i] = x->data[i] * (*mask)[i];
    }
    OpRecord rec;
    rec.kind = "dropout";
    rec.inputs = {x};
    rec.vjp = [mask](const std::vector<float>& g, std::vector<std::vector<float>*>& gin) {
        if (gin[0]) for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * (*mask)[i];
    };
    Shape sh = x->shape;
    rec.sym_vjp = [mask, sh](Graph& gr, const Tensor& g) -> std::vector<Tensor> {
        return {gr.mul(g, make_tensor(sh, *mask))};
    };
    return emit(std::move(rec), x->shape, std::move(out));
}

Tensor Graph::batchnorm(const Tensor& x, const Tensor& gain, const Tensor& shift,
                        BatchNormState& state, bool training, float eps) {
    if (x->shape.size() != 2) throw ShapeError("batchnorm: expected B×F input");
    int B = x->shape[0], F = x->shape[1];
    if (gain->shape != Shape{F} || shift->shape != Shape{F})
        throw ShapeError("batchnorm: gain/shift must have shape [F]");
    if (!state.initialized) {
        state.running_mean.assign(F, 0.0f);
        state.running_var.assign(F, 1.0f);
        state.initialized = true;
    }
    std::vector<float> mean(F), var(F);
    if (training) {
        if (B < 2) throw std::invalid_argument("batchnorm: training requires batch >= 2");
        for (int f = 0; f < F; ++f) {
            double m = 0;
            for (int b = 0; b < B; ++b) m += x->data[static_cast<std::size_t>(b) * F + f];
            m /= B;
            double v = 0;
            for (int b = 0; b < B; ++b) {
                double d = x->data[static_cast<std::size_t>(b) * F + f] - m;
                v += d * d;
            }
            v /= B;
            mean[f] = static_cast<float>(m);
            var[f] = static_cast<float>(v);
            state.running_mean[f] = (1.0f - state.momentum) * state.running_mean[f] +
                                    state.momentum * mean[f];
            state.running_var[f] = (1.0f - state.momentum) * state.running_var[f] +
                                   state.momentum * var[f];
        }
    } else {
        mean = state.running_mean;
        var = state.running_var;
    }
    auto xhat = std::make_shared<std::vector<float>>(x->data.size());
    auto inv_std = std::make_shared<std::vector<float>>(F);
    std::vector<float> out(x->data.size());
    for (int f = 0; f < F; ++f) (*inv_std)[f] = 1.0f / std::sqrt(var[f] + eps);
    for (int b = 0; b < B; ++b)
        for (int f = 0; f < F; ++f) {
            std::size_t i = static_cast<std::size_t>(b) * F + f;
            (*xhat)[i] = (x->data[i] - mean[f]) * (*inv_std)[f];
            out[i] = gain->data[f] * (*xhat)[i] + shift->data[f];
        }
    OpRecord rec;
    rec.kind = "batchnorm";
    rec.inputs = {x, gain, shift};
    rec.vjp = [gain, xhat, inv_std, B, F, training](
                  const std::vector<float>& g, std::vector<std::vector<float>*>& gin) {
        if (gin[1]) {
            for (int b = 0; b < B; ++b)
                for (int f = 0; f < F; ++f)
                    (*gin[1])[f] += g[static_cast<std::size_t>(b) * F + f] *
                                    (*xhat)[static_cast<std::size_t>(b) * F + f];
        }
        if (gin[2]) {
            for (int b = 0; b < B; ++b)
                for (int f = 0; f < F; ++f)
                    (*gin[2])[f] += g[static_cast<std::size_t>(b) * F + f];
        }
        if (gin[0]) {
            if (!training) {
                for (int b = 0; b < B; ++b)
                    for (int f = 0; f < F; ++f) {
                        std::size_t i = static_cast<std::size_t>(b) * F + f;
                        (*gin[0])[i] += g[i] * gain->data[f] * (*inv_std)[f];
                    }
            } else {
                // standard batchnorm backward with batch statistics
                for (int f = 0; f < F; ++f) {
                    double sum_g = 0, sum_gx = 0;
                    for (int b = 0; b < B; ++b) {
                        std::size_t i = static_cast<std::size_t>(b) * F + f;
                        double gh = static_cast<double>(g[i]) * gain->data[f];
                        sum_g += gh;
                        sum_gx += gh * (*xhat)[i];
                    }
                    for (int b = 0; b < B; ++b) {
                        std::size_t i = static_cast<std::size_t>(b) * F + f;
                        double gh = static_cast<double>(g[i]) * gain->data[f];
                        double dx = (gh - sum_g / B - (*xhat)[i] * sum_gx / B) * (*inv_std)[f];
                        (*gin[0])[i] += static_cast<float>(dx);
                    }
                }
            }
        }
    };
    return emit(std::move(rec), x->shape, std::move(out));
}

Tensor Graph::nll_loss(const Tensor& log_probs, const std::vector<int>& labels) {
    if (log_probs->shape.size() != 2) throw ShapeError("nll_loss: expected B×C");
    int B = log_probs->shape[0], C = log_probs->shape[1];
    if (static_cast<int>(labels.size()) != B)
        throw ShapeError("nll_loss: label count != batch size");
    double acc = 0;
    for (int b = 0; b < B; ++b) {
        if (labels[b] < 0 || labels[b] >= C) {
            throw std::out_of_range("nll_loss: label " + std::to_string(labels[b]) +
                                    " outside [0," + std::to_string(C) + ")");
        }
        acc -= log_probs->data[static_cast<std::size_t>(b) * C + labels[b]];
    }
    OpRecord rec;
    rec.kind = "nll_loss";
    rec.inputs = {log_probs};
    auto lab = std::make_shared<std::vector<int>>(labels);
    rec.vjp = [lab, B, C](const std::vector<float>& g, std::vector<std::vector<float>*>& gin) {
        if (gin[0]) {
            for (int b = 0; b < B; ++b)
                (*gin[0])[static_cast<std::size_t>(b) * C + (*lab)[b]] -= g[0] / B;
        }
    };
    return emit(std::move(rec), {1}, {static_cast<float>(acc / B)});
}

Tensor Graph::reshape(const Tensor& x, Shape shape) {
    if (numel(shape) != numel(x->shape)) {
        throw ShapeError("reshape: cannot view " + shape_str(x->shape) + " as " +
                         shape_str(shape));
    }
    OpRecord rec;
    rec.kind = "reshape";
    rec.inputs = {x};
    rec.vjp = [](const std::vector<float>& g, std::vector<std::vector<float>*>& gin) {
        if (gin[0]) for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
    };
    Shape in_shape = x->shape;
    rec.sym_vjp = [in_shape](Graph& gr, const Tensor& g) -> std::vector<Tensor> {
        return {gr.reshape(g, in_shape)};
    };
    return emit(std::move(rec), std::move(shape), x->data);
}

Tensor Graph::concat_channels(const Tensor& a, const Tensor& b) {
    Dims3 da = as3d(a->shape, "concat_channels");
    Dims3 db = as3d(b->shape, "concat_channels");
    if (da.B != db.B || da.T != db.T || da.was2d != db.was2d) {
        throw ShapeError("concat_channels: incompatible shapes " + shape_str(a->shape) +
                         " and " + shape_str(b->shape));
    }
    int C = da.C + db.C;
    std::vector<float> out(static_cast<std::size_t>(da.B) * C * da.T);
    for (int bb = 0; bb < da.B; ++bb) {
        std::memcpy(out.data() + static_cast<std::size_t>(bb) * C * da.T,
                    a->data.data() + static_cast<std::size_t>(bb) * da.C * da.T,
                    sizeof(float) * da.C * da.T);
        std::memcpy(out.data() + static_cast<std::size_t>(bb) * C * da.T +
                        static_cast<std::size_t>(da.C) * da.T,
                    b->data.data() + static_cast<std::size_t>(bb) * db.C * db.T,
                    sizeof(float) * db.C * db.T);
    }
    OpRecord rec;
    rec.kind = "concat_channels";
    rec.inputs = {a, b};
    rec.vjp = [da, db, C](const std::vector<float>& g, std::vector<std::vector<float>*>& gin) {
        for (int bb = 0; bb < da.B; ++bb) {
            if (gin[0]) {
                for (std::size_t i = 0; i < static_cast<std::size_t>(da.C) * da.T; ++i)
                    (*gin[0])[static_cast<std::size_t>(bb) * da.C * da.T + i] +=
                        g[static_cast<std::size_t>(bb) * C * da.T + i];
            }
            if (gin[1]) {
                for (std::size_t i = 0; i < static_cast<std::size_t>(db.C) * db.T; ++i)
                    (*gin[1])[static_cast<std::size_t>(bb) * db.C * db.T + i] +=
                        g[static_cast<std::size_t>(bb) * C * da.T +
                          static_cast<std::size_t>(da.C) * da.T + i];
            }
        }
    };
    return emit(std::move(rec), like3d(da, C, da.T), std::move(out));
}

Tensor Graph::crop_time(const Tensor& x, int offset, int length) {
    Dims3 d = as3d(x->shape, "crop_time");
    if (offset < 0 || offset + length > d.T) {
        throw ShapeError("crop_time: window [" + std::to_string(offset) + "," +
                         std::to_string(offset + length) + ") outside length " +
                         std::to_string(d.T));
    }
    std::vector<float> out(static_cast<std::size_t>(d.B) * d.C * length);
    for (int bb = 0; bb < d.B; ++bb)
        for (int c = 0; c < d.C; ++c)
            for (int t = 0; t < length; ++t)
                out[(static_cast<std::size_t>(bb) * d.C + c) * length + t] =
                    x->data[(static_cast<std::size_t>(bb) * d.C + c) * d.T + offset + t];
    OpRecord rec;
    rec.kind = "crop_time";
    rec.inputs = {x};
    Dims3 dd = d;
    rec.vjp = [dd, offset, length](const std::vector<float>& g,
                                   std::vector<std::vector<float>*>& gin) {
        if (gin[0]) {
            for (int bb = 0; bb < dd.B; ++bb)
                for (int c = 0; c < dd.C; ++c)
                    for (int t = 0; t < length; ++t)
                        (*gin[0])[(static_cast<std::size_t>(bb) * dd.C + c) * dd.T +
                                  offset + t] +=
                            g[(static_cast<std::size_t>(bb) * dd.C + c) * length + t];
        }
    };
    return emit(std::move(rec), like3d(d, d.C, length), std::move(out));
}

Tensor Graph::pad_time_reflect(const Tensor& x, int left, int right) {
    Dims3 d = as3d(x->shape, "pad_time_reflect");
    if (left < 0 || right < 0 || left >= d.T || right >= d.T) {
        throw ShapeError("pad_time_reflect: pad (" + std::to_string(left) + "," +
                         std::to_string(right) + ") too large for length " +
                         std::to_string(d.T));
    }
    int To = d.T + left + right;
    auto src_index = [d, left](int t) {
        int s = t - left;
        if (s < 0) s = -s;                       // reflect at the left edge
        if (s >= d.T) s = 2 * (d.T - 1) - s;     // reflect at the right edge
        return s;
    };
    std::vector<float> out(static_cast<std::size_t>(d.B) * d.C * To);
    for (int bb = 0; bb < d.B; ++bb)
        for (int c = 0; c < d.C; ++c)
            for (int t = 0; t < To; ++t)
                out[(static_cast<std::size_t>(bb) * d.C + c) * To + t] =
                    x->data[(static_cast<std::size_t>(bb) * d.C + c) * d.T + src_index(t)];
    OpRecord rec;
    rec.kind = "pad_time_reflect";
    rec.inputs = {x};
    Dims3 dd = d;
    rec.vjp = [dd, To, src_index](const std::vector<float>& g,
                                  std::vector<std::vector<float>*>& gin) {
        if (gin[0]) {
            for (int bb = 0; bb < dd.B; ++bb)
                for (int c = 0; c < dd.C; ++c)
                    for (int t = 0; t < To; ++t)
                        (*gin[0])[(static_cast<std::size_t>(bb) * dd.C + c) * dd.T +
                                  src_index(t)] +=
                            g[(static_cast<std::size_t>(bb) * dd.C + c) * To + t];
        }
    };
    return emit(std::move(rec), like3d(d, d.C, To), std::move(out));
}

Tensor Graph::sum_all(const Tensor& x) {
    double acc = 0;
    for (float v : x->data) acc += v;
    OpRecord rec;
    rec.kind = "sum_all";
    rec.inputs = {x};
    std::size_t n = x->data.size();
    rec.vjp = [n](const std::vector<float>& g, std::vector<std::vector<float>*>& gin) {
        if (gin[0]) for (std::size_t i = 0; i < n; ++i) (*gin[0])[i] += g[0];
    };
    Shape in_shape = x->shape;
    rec.sym_vjp = [in_shape](Graph& gr, const Tensor& g) -> std::vector<Tensor> {
        return {gr.mul(full(in_shape, 1.0f), g)};
    };
    return emit(std::move(rec), {1}, {static_cast<float>(acc)});
}

Tensor Graph::mean_all(const Tensor& x) {
    double acc = 0;
    for (float v : x->data) acc += v;
    std::size_t n = x->data.size();
    OpRecord rec;
    rec.kind = "mean_all";
    rec.inputs = {x};
    rec.vjp = [n](const std::vector<float>& g, std::vector<std::vector<float>*>& gin) {
        if (gin[0]) {
            float gv = g[0] / static_cast<float>(n);
            for (std::size_t i = 0; i < n; ++i) (*gin[0])[i] += gv;
        }
    };
    Shape in_shape = x->shape;
    rec.sym_vjp = [in_shape, n](Graph& gr, const Tensor& g) -> std::vector<Tensor> {
        return {gr.scale(gr.mul(full(in_shape, 1.0f), g), 1.0f / static_cast<float>(n))};
    };
    return emit(std::move(rec), {1}, {static_cast<float>(acc / n)});
}

Tensor Graph::sum_rows(const Tensor& x) {
    if (x->shape.size() != 2) throw ShapeError("sum_rows: expected B×N");
    int B = x->shape[0], N = x->shape[1];
    std::vector<float> out(B);
    for (int b = 0; b < B; ++b) {
        double acc = 0;
        for (int j = 0; j < N; ++j) acc += x->data[static_cast<std::size_t>(b) * N + j];
        out[b] = static_cast<float>(acc);
    }
    OpRecord rec;
    rec.kind = "sum_rows";
    rec.inputs = {x};
    rec.vjp = [B, N](const std::vector<float>& g, std::vector<std::vector<float>*>& gin) {
        if (gin[0]) {
            for (int b = 0; b < B; ++b)
                for (int j = 0; j < N; ++j)
                    (*gin[0])[static_cast<std::size_t>(b) * N + j] += g[b];
        }
    };
    return emit(std::move(rec), {B}, std::move(out));
}

void Graph::backward(const Tensor& loss) {
    if (numel(loss->shape) != 1) {
        throw ShapeError("backward: loss must be scalar, got " + shape_str(loss->shape));
    }
    if (loss->node < 0) throw std::invalid_argument("backward: loss is not on the graph");
    check_finite(loss->data, "loss");
    std::unordered_map<TensorData*, std::vector<float>> flow;
    std::unordered_map<TensorData*, Tensor> leaves;
    flow[loss.get()] = {1.0f};
    for (int i = loss->node; i >= 0; --i) {
        const OpRecord& rec = records_[i];
        Tensor out = rec.output.lock();
        if (!out) continue;
        auto it = flow.find(out.get());
        if (it == flow.end()) continue;
        std::vector<std::vector<float>*> gin(rec.inputs.size(), nullptr);
        for (std::size_t j = 0; j < rec.inputs.size(); ++j) {
            const Tensor& in = rec.inputs[j];
            if (in->node >= 0 || in->requires_grad) {
                auto& buf = flow[in.get()];
                if (buf.size() != in->data.size()) buf.assign(in->data.size(), 0.0f);
                gin[j] = &buf;
                if (in->node < 0) leaves[in.get()] = in;
            }
        }
        rec.vjp(it->second, gin);
    }
    for (auto& [ptr, t] : leaves) {
        check_finite(flow[ptr], "gradient of leaf");
        t->accumulate_grad(flow[ptr]);
    }
}

Tensor Graph::input_gradient(const Tensor& out, const Tensor& wrt) {
    if (numel(out->shape) != 1) {
        throw ShapeError("input_gradient: output must be scalar");
    }
    if (out->node < 0) throw std::invalid_argument("input_gradient: output not on graph");
    std::unordered_map<TensorData*, Tensor> grads;
    grads[out.get()] = full(out->shape, 1.0f);
    int top = out->node;
    for (int i = top; i >= 0; --i) {
        // copy: sym_vjp calls emit records and may reallocate records_
        OpRecord rec = records_[i];
        Tensor o = rec.output.lock();
        if (!o) continue;
        auto it = grads.find(o.get());
        if (it == grads.end()) continue;
        if (!rec.sym_vjp) {
            throw std::runtime_error(
                "input_gradient: op '" + rec.kind +
                "' does not support differentiable input-gradients");
        }
        std::vector<Tensor> gin = rec.sym_vjp(*this, it->second);
        for (std::size_t j = 0; j < gin.size() && j < rec.inputs.size(); ++j) {
            if (!gin[j]) continue;
            TensorData* key = rec.inputs[j].get();
            auto g = grads.find(key);
            if (g == grads.end()) {
                grads[key] = gin[j];
            } else {
                grads[key] = add(g->second, gin[j]);
            }
        }
    }
    auto it = grads.find(wrt.get());
    if (it == grads.end()) {
        throw std::invalid_argument("input_gradient: target does not influence the output");
    }
    return it->second;
}

}  // namespace ggan
