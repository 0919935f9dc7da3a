#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ggan/checkpoint.hpp"
#include "ggan/corpus.hpp"
#include "ggan/losses.hpp"
#include "ggan/models.hpp"

namespace ggan {

struct AmTrainConfig {
    int batch_size = 32;
    float lr = 0.05f;
    int max_epochs = 30;
    float plateau_threshold = 1e-3f;
    int patience = 10;
    std::uint64_t seed = 1;
};

struct GanTrainConfig {
    LossFamily family = LossFamily::SnGan;
    float lambda = 1.0f;
    float lambda_gp = 10.0f;
    float lr_g = 1e-3f;
    float lr_d = 1e-3f;
    int batch_size = 8;
    int max_epochs = 30;
    int patience = 10;
    std::uint64_t seed = 1;
    int eval_every = 1;   // epochs between dev evaluations
    int chunk_w = 32;     // discriminator window
    int chunk_hop = 16;
};

struct GridSpec {
    std::vector<int> batch_sizes;
    std::vector<float> lrs_g;
    std::vector<float> lrs_d;
    std::vector<float> lambdas;  // phase 2 sweep around the phase-1 winner
    int short_epochs = 3;
};

/// One CSV row of a training log. AM runs leave l_d and lr_d at zero.
struct EpochLog {
    int epoch = 0;
    double l_g = 0.0;
    double l_d = 0.0;
    double dev_seer = 0.0;
    float lr_g = 0.0f;
    float lr_d = 0.0f;
    double wall_clock_s = 0.0;
};

struct AmTrainResult {
    Checkpoint best;
    std::vector<EpochLog> log;
    int best_epoch = 0;
    double best_dev_seer = 0.0;
};

struct GanTrainResult {
    Checkpoint best_generator;
    std::vector<EpochLog> log;
    int best_epoch = 0;
    double best_dev_seer = 0.0;
    double baseline_dev_seer = 0.0;  // frozen model without any generator
    long long g_steps = 0;
    long long d_steps = 0;
    /// Generator state at every evaluated epoch, for correlation studies.
    std::vector<std::pair<int, Checkpoint>> snapshots;
    std::uint64_t am_hash_before = 0;
    std::uint64_t am_hash_after = 0;
};

AmTrainResult train_acoustic_model(const std::vector<FeatureUtterance>& train,
                                   const std::vector<FeatureUtterance>& dev,
                                   const AmTrainConfig& cfg, const AcousticModelSpec& spec);

/// Continues training an existing model (used by fine-tuning). max_epochs 0
/// returns the input model untouched.
AmTrainResult train_am_from(AcousticModel& am, const std::vector<FeatureUtterance>& train,
                            const std::vector<FeatureUtterance>& dev, const AmTrainConfig& cfg);

GanTrainResult train_gan(const std::vector<FeatureUtterance>& clean,
                         const std::vector<FeatureUtterance>& noisy,
                         const std::vector<FeatureUtterance>& dev, AcousticModel& frozen_am,
                         const GanTrainConfig& cfg, const GeneratorSpec& gen_spec,
                         const DiscriminatorSpec& disc_spec);

/// Enhances the noisy corpus with the frozen generator, then continues AM
/// training on the result.
AmTrainResult fine_tune(AcousticModel& am, const Generator& gen,
                        const std::vector<FeatureUtterance>& noisy_train,
                        const std::vector<FeatureUtterance>& dev, const AmTrainConfig& cfg);

/// Original corpus plus one perturbed copy per requested kind.
std::vector<FeatureUtterance> mtr_augment(const std::vector<FeatureUtterance>& corpus,
                                          const PerturbSpec& spec,
                                          const std::vector<PerturbKind>& kinds);

AmTrainResult train_mtr_baseline(const std::vector<FeatureUtterance>& noisy_train,
                                 const PerturbSpec& perturb,
                                 const std::vector<PerturbKind>& kinds,
                                 const std::vector<FeatureUtterance>& dev,
                                 const AmTrainConfig& cfg, const AcousticModelSpec& spec);

struct GridTrial {
    GanTrainConfig config;
    double objective = 0.0;
    bool diverged = false;
    int phase = 1;
};

struct GridResult {
    GanTrainConfig best;
    double best_objective = 0.0;
    std::vector<GridTrial> trials;
};

/// Phase 1 sweeps batch×lr_G×lr_D at the base λ; phase 2 sweeps λ at the
/// phase-1 winner. Ties keep the lexicographically first configuration
/// (batch, lr_G, lr_D, λ in ascending order). The objective is injectable so
/// searches can be driven by short training runs or precomputed tables.
GridResult grid_search(const GridSpec& grid, const GanTrainConfig& base,
                       const std::function<double(const GanTrainConfig&)>& objective);

void write_train_log_csv(const std::string& path, const std::vector<EpochLog>& log,
                         std::uint64_t config_hash);

}  // namespace ggan
