#include "ggan/nn.hpp"

#include <algorithm>
#include <cmath>

namespace ggan {

namespace {

// Views a weight tensor as rows×cols (first dim × rest).
void weight_dims(const Tensor& w, int& rows, int& cols) {
    if (w->shape.empty()) throw ShapeError("spectral_normalize: weight must have rank >= 1");
    rows = w->shape[0];
    cols = 1;
    for (std::size_t i = 1; i < w->shape.size(); ++i) cols *= w->shape[i];
    if (rows <= 0 || cols <= 0) throw ShapeError("spectral_normalize: empty weight");
}

double l2_norm(const std::vector<float>& v) {
    double acc = 0;
    for (float x : v) acc += static_cast<double>(x) * x;
    return std::sqrt(acc);
}

}  // namespace

float spectral_sigma(const Tensor& w, SpectralNormState& state, bool update_u) {
    int rows, cols;
    weight_dims(w, rows, cols);
    const auto& W = w->data;

    if (state.u.size() != static_cast<std::size_t>(rows)) {
        state.u.assign(rows, 0.0f);
        state.u[0] = 1.0f;
    }
    std::vector<float> u = state.u;
    std::vector<float> v(cols, 0.0f);

    auto iterate = [&]() {
        // v = W^T u / ||.||
        std::fill(v.begin(), v.end(), 0.0f);
        for (int r = 0; r < rows; ++r) {
            float ur = u[r];
            const float* row = W.data() + static_cast<std::size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) v[c] += row[c] * ur;
        }
        double nv = l2_norm(v);
        if (nv < state.eps) nv = state.eps;
        for (auto& x : v) x = static_cast<float>(x / nv);
        // u = W v / ||.||
        std::fill(u.begin(), u.end(), 0.0f);
        for (int r = 0; r < rows; ++r) {
            const float* row = W.data() + static_cast<std::size_t>(r) * cols;
            double acc = 0;
            for (int c = 0; c < cols; ++c) acc += static_cast<double>(row[c]) * v[c];
            u[r] = static_cast<float>(acc);
        }
        double nu = l2_norm(u);
        if (nu < state.eps) nu = state.eps;
        for (auto& x : u) x = static_cast<float>(x / nu);
    };

    int iters = std::max(1, state.power_iterations);
    for (int i = 0; i < iters; ++i) iterate();

    // sigma = u^T W v
    double sigma = 0;
    for (int r = 0; r < rows; ++r) {
        const float* row = W.data() + static_cast<std::size_t>(r) * cols;
        double acc = 0;
        for (int c = 0; c < cols; ++c) acc += static_cast<double>(row[c]) * v[c];
        sigma += acc * u[r];
    }
    if (update_u) state.u = u;
    return static_cast<float>(std::max(sigma, static_cast<double>(state.eps)));
}

Tensor spectral_normalize(Graph& g, const Tensor& w, SpectralNormState& state,
                          bool update_u) {
    float sigma = spectral_sigma(w, state, update_u);
    return g.scale(w, 1.0f / sigma);
}

void adam_step(const std::vector<Tensor>& params, AdamState& state, float lr) {
    if (state.m.size() != params.size()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i]->data.size(), 0.0f);
            state.v[i].assign(params[i]->data.size(), 0.0f);
        }
    }
    for (auto& p : params)
        if (!p->grad.empty()) check_finite(p->grad, "adam_step gradient");

    state.t += 1;
    double bc1 = 1.0 - std::pow(static_cast<double>(state.beta1), static_cast<double>(state.t));
    double bc2 = 1.0 - std::pow(static_cast<double>(state.beta2), static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i];
        if (p.grad.empty()) continue;
        if (state.m[i].size() != p.data.size())
            throw ShapeError("adam_step: state/parameter size mismatch");
        for (std::size_t j = 0; j < p.data.size(); ++j) {
            float gj = p.grad[j];
            state.m[i][j] = state.beta1 * state.m[i][j] + (1.0f - state.beta1) * gj;
            state.v[i][j] = state.beta2 * state.v[i][j] + (1.0f - state.beta2) * gj * gj;
            double mhat = state.m[i][j] / bc1;
            double vhat = state.v[i][j] / bc2;
            p.data[j] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + state.eps));
        }
    }
}

void sgd_step(const std::vector<Tensor>& params, float lr) {
    for (auto& p : params)
        if (!p->grad.empty()) check_finite(p->grad, "sgd_step gradient");
    for (auto& p : params) {
        if (p->grad.empty()) continue;
        for (std::size_t j = 0; j < p->data.size(); ++j) p->data[j] -= lr * p->grad[j];
    }
}

float PlateauScheduler::update(float metric) {
    if (!has_best) {
        has_best = true;
        best = metric;
        return lr;
    }
    float improvement = best > 0.0f ? (best - metric) / best : 0.0f;
    if (improvement < threshold) lr *= factor;
    best = std::min(best, metric);
    return lr;
}

bool EarlyStopper::update(float metric, const std::string& checkpoint_ref) {
    int epoch = epochs_seen++;
    if (metric < best) {
        best = metric;
        best_index = epoch;
        best_ref = checkpoint_ref;
        epochs_since_best = 0;
    } else {
        epochs_since_best += 1;
    }
    return epochs_since_best >= patience;
}

Tensor uniform_param(std::mt19937& rng, Shape shape, float bound) {
    std::uniform_real_distribution<float> d(-bound, bound);
    std::vector<float> v(static_cast<std::size_t>(numel(shape)));
    for (auto& x : v) x = d(rng);
    return make_param(std::move(shape), std::move(v));
}

Tensor conv_weight_init(std::mt19937& rng, int Co, int Ci, int K) {
    float bound = 1.0f / std::sqrt(static_cast<float>(Ci * K));
    return uniform_param(rng, {Co, Ci, K}, bound);
}

Tensor convt_weight_init(std::mt19937& rng, int Ci, int Co, int K) {
    float bound = 1.0f / std::sqrt(static_cast<float>(Ci * K));
    return uniform_param(rng, {Ci, Co, K}, bound);
}

Tensor linear_weight_init(std::mt19937& rng, int Out, int In) {
    float bound = 1.0f / std::sqrt(static_cast<float>(In));
    return uniform_param(rng, {Out, In}, bound);
}

void zero_grads(const std::vector<Tensor>& params) {
    for (auto& p : params) p->zero_grad();
}

std::int64_t param_count(const std::vector<Tensor>& params) {
    std::int64_t n = 0;
    for (auto& p : params) n += numel(p->shape);
    return n;
}

}  // namespace ggan
