#include "ggan/losses.hpp"

#include <random>
#include <stdexcept>
#include <string>

namespace ggan {

const char* loss_family_name(LossFamily f) {
    switch (f) {
        case LossFamily::SnGan: return "sn-gan";
        case LossFamily::NsGan: return "ns-gan";
        case LossFamily::WganGp: return "wgan-gp";
    }
    return "?";
}

LossFamily parse_loss_family(const std::string& name) {
    if (name == "sn-gan") return LossFamily::SnGan;
    if (name == "ns-gan") return LossFamily::NsGan;
    if (name == "wgan-gp") return LossFamily::WganGp;
    throw std::invalid_argument("unknown loss family: " + name);
}

namespace {

void require_scores(const Tensor& t, const char* what, bool log_domain) {
    if (!t) throw std::invalid_argument(std::string(what) + " is null");
    if (log_domain)
        for (float v : t->data)
            if (v <= 0.0f)
                throw std::domain_error(std::string(what) +
                                        " must be strictly positive for the log-domain loss");
}

}  // namespace

Tensor generator_loss(Graph& g, const LossConfig& cfg, const Tensor& d_fake,
                      const Tensor& am_log_probs, const std::vector<int>& labels) {
    if (cfg.lambda < 0.0f) throw std::invalid_argument("generator_loss: lambda must be >= 0");
    bool ns = cfg.family == LossFamily::NsGan;
    require_scores(d_fake, "d_fake", ns);
    Tensor adv = ns ? g.scale(g.mean_all(g.log(d_fake)), -1.0f)
                    : g.scale(g.mean_all(d_fake), -1.0f);
    if (cfg.lambda == 0.0f) return adv;
    if (!am_log_probs)
        throw std::invalid_argument("generator_loss: guidance enabled but no log-probs given");
    Tensor nll = g.nll_loss(am_log_probs, labels);
    return g.add(adv, g.scale(nll, cfg.lambda));
}

Tensor discriminator_loss(Graph& g, const LossConfig& cfg, const Tensor& d_real,
                          const Tensor& d_fake) {
    bool ns = cfg.family == LossFamily::NsGan;
    require_scores(d_real, "d_real", ns);
    require_scores(d_fake, "d_fake", false);
    if (ns) {
        for (float v : d_fake->data)
            if (v >= 1.0f)
                throw std::domain_error("d_fake must be strictly below 1 for the log-domain loss");
        Tensor real_term = g.scale(g.mean_all(g.log(d_real)), -1.0f);
        Tensor fake_term = g.scale(
            g.mean_all(g.log(g.add_scalar(g.scale(d_fake, -1.0f), 1.0f))), -1.0f);
        return g.add(real_term, fake_term);
    }
    return g.sub(g.mean_all(d_fake), g.mean_all(d_real));
}

Tensor gradient_penalty(Graph& g, const DiscForward& disc, const Tensor& x_clean,
                        const Tensor& x_fake) {
    if (!x_clean || !x_fake || x_clean->shape != x_fake->shape)
        throw ShapeError("gradient_penalty: clean and fake batches must share a shape");
    if (x_clean->shape.size() != 3)
        throw ShapeError("gradient_penalty: expected B×F×W batches, got " +
                         shape_str(x_clean->shape));
    int B = x_clean->shape[0];
    std::int64_t per = numel(x_clean->shape) / B;
    std::uniform_real_distribution<float> unif(0.0f, 1.0f);
    std::vector<float> mix(x_clean->data.size());
    for (int b = 0; b < B; ++b) {
        float alpha = unif(g.rng());
        for (std::int64_t i = 0; i < per; ++i) {
            std::size_t idx = static_cast<std::size_t>(b) * per + i;
            mix[idx] = alpha * x_clean->data[idx] + (1.0f - alpha) * x_fake->data[idx];
        }
    }
    Tensor x_interp = make_tensor(x_clean->shape, std::move(mix));
    Tensor scores = disc(g, x_interp);
    Tensor grad = g.input_gradient(g.sum_all(scores), x_interp);
    Tensor flat = g.reshape(grad, {B, static_cast<int>(per)});
    Tensor norms = g.sqrt(g.sum_rows(g.mul(flat, flat)));
    Tensor excess = g.add_scalar(norms, -1.0f);
    return g.mean_all(g.mul(excess, excess));
}

Tensor total_discriminator_loss(Graph& g, const LossConfig& cfg, const Tensor& d_real,
                                const Tensor& d_fake, const Tensor& penalty) {
    Tensor base = discriminator_loss(g, cfg, d_real, d_fake);
    if (cfg.family != LossFamily::WganGp) {
        if (penalty)
            throw std::invalid_argument(
                "total_discriminator_loss: penalty given for a non-WGAN-GP family");
        return base;
    }
    if (!penalty || cfg.lambda_gp == 0.0f) return base;
    return g.add(base, g.scale(penalty, cfg.lambda_gp));
}

}  // namespace ggan
