#pragma once

#include <functional>
#include <vector>

#include "ggan/tensor.hpp"

namespace ggan {

enum class LossFamily { SnGan, NsGan, WganGp };

const char* loss_family_name(LossFamily f);
LossFamily parse_loss_family(const std::string& name);

struct LossConfig {
    LossFamily family = LossFamily::SnGan;
    float lambda = 0.0f;     // guidance weight; 0 disables guidance exactly
    float lambda_gp = 0.0f;  // gradient-penalty weight, WganGp only
};

/// One training batch. Clean and noisy halves are unpaired; labels align to
/// the noisy frames.
struct GanBatch {
    Tensor x_clean;              // B×F×W
    Tensor x_noisy;              // B×F×W
    std::vector<int> y_noisy;    // B·W senone labels for the noisy frames
};

/// L_G: adversarial term plus lambda times the frozen acoustic model's NLL on
/// the enhanced frames. `am_log_probs` may be null when lambda is 0.
Tensor generator_loss(Graph& g, const LossConfig& cfg, const Tensor& d_fake,
                      const Tensor& am_log_probs, const std::vector<int>& labels);

/// L_D without any penalty term.
Tensor discriminator_loss(Graph& g, const LossConfig& cfg, const Tensor& d_real,
                          const Tensor& d_fake);

using DiscForward = std::function<Tensor(Graph&, const Tensor&)>;

/// mean((||∇_x D(x_interp)||_2 - 1)^2) with one alpha ~ U(0,1) per sample,
/// x_interp = alpha*x_clean + (1-alpha)*x_fake. Both inputs are treated as
/// constants; the result stays differentiable w.r.t. the discriminator
/// parameters used inside `disc`.
Tensor gradient_penalty(Graph& g, const DiscForward& disc, const Tensor& x_clean,
                        const Tensor& x_fake);

/// Adds lambda_gp times the penalty for the WganGp family; other families
/// reject a penalty argument.
Tensor total_discriminator_loss(Graph& g, const LossConfig& cfg, const Tensor& d_real,
                                const Tensor& d_fake, const Tensor& penalty = nullptr);

}  // namespace ggan
