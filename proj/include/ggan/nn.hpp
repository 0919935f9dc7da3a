#pragma once

#include <limits>
#include <string>
#include <vector>

#include "ggan/tensor.hpp"

namespace ggan {

/// Persistent left singular-vector estimate for spectral normalization.
struct SpectralNormState {
    std::vector<float> u;  // unit norm
    int power_iterations = 1;
    float eps = 1e-12f;
};

/// Ŵ = W / σ̂ with σ̂ from power iteration. The estimate is treated as a
/// detached scale: gradients flow through W only. When `update_u` is set the
/// persisted u is advanced by `power_iterations` steps first.
Tensor spectral_normalize(Graph& g, const Tensor& w, SpectralNormState& state,
                          bool update_u = true);

/// Current power-iteration estimate of the top singular value (also advances
/// u when update_u is set).
float spectral_sigma(const Tensor& w, SpectralNormState& state, bool update_u);

struct AdamState {
    std::vector<std::vector<float>> m, v;
    long t = 0;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

/// Standard Adam with bias correction; consumes and clears nothing — callers
/// zero grads themselves. Throws NumericsError on non-finite grads.
void adam_step(const std::vector<Tensor>& params, AdamState& state, float lr);

void sgd_step(const std::vector<Tensor>& params, float lr);

/// Halves the lr when the relative dev-metric improvement drops below the
/// threshold.
struct PlateauScheduler {
    float lr = 0.0f;
    float factor = 0.5f;
    float threshold = 1e-3f;
    bool has_best = false;
    float best = 0.0f;

    /// Feed the latest dev metric; returns the (possibly halved) lr.
    float update(float metric);
};

struct EarlyStopper {
    int patience = 10;
    float best = std::numeric_limits<float>::infinity();
    int best_index = -1;
    std::string best_ref;
    int epochs_since_best = 0;
    int epochs_seen = 0;

    /// Returns true when training should stop. Ties keep the first minimum.
    bool update(float metric, const std::string& checkpoint_ref);
};

// ---- layers -------------------------------------------------------------

struct Conv1dLayer {
    Tensor w;  // Cout×Cin×K
    Tensor b;  // Cout
    int stride = 1;
    int padding = 0;
    Tensor forward(Graph& g, const Tensor& x) const { return g.conv1d(x, w, b, stride, padding); }
};

struct ConvT1dLayer {
    Tensor w;  // Cin×Cout×K
    Tensor b;  // Cout
    int stride = 2;
    Tensor forward(Graph& g, const Tensor& x) const { return g.conv1d_transposed(x, w, b, stride); }
};

struct LinearLayer {
    Tensor w;  // Out×In
    Tensor b;  // Out
    Tensor forward(Graph& g, const Tensor& x) const {
        return g.add_bias(g.matmul(x, g.transpose(w)), b);
    }
};

/// Fully-connected layer whose weight is spectrally normalized each forward.
struct SpectralLinearLayer {
    Tensor w;
    Tensor b;
    SpectralNormState sn;
    Tensor forward(Graph& g, const Tensor& x, bool update_u) {
        Tensor wn = spectral_normalize(g, w, sn, update_u);
        return g.add_bias(g.matmul(x, g.transpose(wn)), b);
    }
};

// ---- init helpers -------------------------------------------------------

Tensor uniform_param(std::mt19937& rng, Shape shape, float bound);
Tensor conv_weight_init(std::mt19937& rng, int Co, int Ci, int K);
Tensor convt_weight_init(std::mt19937& rng, int Ci, int Co, int K);
Tensor linear_weight_init(std::mt19937& rng, int Out, int In);

void zero_grads(const std::vector<Tensor>& params);
std::int64_t param_count(const std::vector<Tensor>& params);

}  // namespace ggan
