#pragma once

#include <cmath>
#include <memory>
#include <random>

#include "ggan/corpus.hpp"
#include "ggan/models.hpp"
#include "ggan/nn.hpp"

namespace ggan::testfix {

/// Nearest-mean classifier expressed as a real one-hidden-layer model: the
/// hidden layer carries (x, -x) through the ReLU so the output layer can
/// reconstruct 2 mu_c . x - |mu_c|^2 exactly. `sign` -1 flips every decision.
inline AcousticModel nearest_mean_am(const CorpusModel& model, int F, int C, float sign) {
    AcousticModelSpec spec;
    spec.F = F;
    spec.C = C;
    spec.hidden_layers = 1;
    spec.hidden_units = 2 * F;
    spec.context_radius = 0;
    spec.dropout = 0.0f;
    std::mt19937 rng(0);
    AcousticModel am(spec, rng);

    auto& h = am.hidden[0];
    std::fill(h.w->data.begin(), h.w->data.end(), 0.0f);
    std::fill(h.b->data.begin(), h.b->data.end(), 0.0f);
    for (int f = 0; f < F; ++f) {
        h.w->data[static_cast<std::size_t>(f) * F + f] = 1.0f;
        h.w->data[static_cast<std::size_t>(F + f) * F + f] = -1.0f;
    }
    // eval-mode batchnorm with fresh running stats scales by 1/sqrt(1+eps)
    float s = std::sqrt(1.0f + 1e-5f);
    auto& o = am.output;
    for (int c = 0; c < C; ++c) {
        double norm2 = 0;
        for (int f = 0; f < F; ++f) {
            float mu = model.senone_means[static_cast<std::size_t>(c) * F + f];
            o.w->data[static_cast<std::size_t>(c) * (2 * F) + f] = sign * 2.0f * mu;
            o.w->data[static_cast<std::size_t>(c) * (2 * F) + F + f] = sign * -2.0f * mu;
            norm2 += static_cast<double>(mu) * mu;
        }
        o.b->data[c] = sign * static_cast<float>(-norm2) / s;
    }
    return am;
}

/// x -> alpha * x through the real five-conv generator: each hidden stage
/// carries (x, -x) and the next stage recovers x as (a - b) / 1.2 after the
/// leaky ReLU. alpha 1 gives an identity map up to float rounding.
inline std::unique_ptr<FcGenerator> scaling_generator(int F, float alpha) {
    GeneratorSpec spec;
    spec.kind = GeneratorSpec::Kind::FullyConvolutional;
    spec.F = F;
    std::mt19937 rng(0);
    auto gen = std::make_unique<FcGenerator>(spec, rng);
    int H = 2 * F;
    for (auto& l : gen->layers) {
        std::fill(l.w->data.begin(), l.w->data.end(), 0.0f);
        std::fill(l.b->data.begin(), l.b->data.end(), 0.0f);
    }
    auto& L = gen->layers;
    int K = 5, mid = 2;
    auto w_at = [&](Conv1dLayer& l, int co, int ci, int Cin) -> float& {
        return l.w->data[(static_cast<std::size_t>(co) * Cin + ci) * K + mid];
    };
    for (int f = 0; f < F; ++f) {
        w_at(L[0], f, f, F) = 1.0f;
        w_at(L[0], F + f, f, F) = -1.0f;
    }
    for (int layer = 1; layer <= 3; ++layer)
        for (int f = 0; f < F; ++f) {
            w_at(L[layer], f, f, H) = 1.0f / 1.2f;
            w_at(L[layer], f, F + f, H) = -1.0f / 1.2f;
            w_at(L[layer], F + f, f, H) = -1.0f / 1.2f;
            w_at(L[layer], F + f, F + f, H) = 1.0f / 1.2f;
        }
    for (int f = 0; f < F; ++f) {
        w_at(L[4], f, f, H) = alpha / 1.2f;
        w_at(L[4], f, F + f, H) = -alpha / 1.2f;
    }
    return gen;
}

}  // namespace ggan::testfix
