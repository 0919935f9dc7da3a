#include "ggan/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "ggan/metrics.hpp"
#include "ggan/nn.hpp"

namespace ggan {

namespace {

std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Spliced frames of a whole corpus, one row per frame.
struct FrameDataset {
    std::vector<float> rows;  // N × dim, row-major
    std::vector<int> labels;
    int dim = 0;
    std::size_t size() const { return labels.size(); }
};

FrameDataset splice_corpus(const std::vector<FeatureUtterance>& corpus, int radius) {
    FrameDataset ds;
    for (const auto& utt : corpus) {
        Tensor frames = make_tensor({utt.F, utt.T},
                                    std::vector<float>(utt.frames.begin(), utt.frames.end()));
        Tensor ctx = context_window(frames, radius);
        int dim = ctx->shape[0];
        if (ds.dim == 0) ds.dim = dim;
        if (ds.dim != dim)
            throw std::invalid_argument("train: corpus utterances disagree on F");
        for (int t = 0; t < utt.T; ++t) {
            for (int d = 0; d < dim; ++d)
                ds.rows.push_back(ctx->data[static_cast<std::size_t>(d) * utt.T + t]);
            ds.labels.push_back(utt.senone_labels[t]);
        }
    }
    return ds;
}

void require_finite(double v, const char* what) {
    if (!std::isfinite(v))
        throw NumericsError(std::string("training diverged: non-finite ") + what);
}

struct ChunkPool {
    std::vector<std::vector<float>> frames;  // F×W each
    std::vector<std::vector<int>> labels;
    int F = 0, W = 0;
};

ChunkPool build_pool(const std::vector<FeatureUtterance>& corpus, int W, int hop) {
    ChunkPool pool;
    pool.W = W;
    for (const auto& utt : corpus) {
        pool.F = utt.F;
        for (auto& c : chunk(utt, W, hop)) {
            pool.frames.push_back(c.frames->data);
            pool.labels.push_back(std::move(c.labels));
        }
    }
    if (pool.frames.empty())
        throw std::invalid_argument("train_gan: corpus yields no chunks at this window");
    return pool;
}

Tensor batch_tensor(const ChunkPool& pool, const std::vector<int>& idx) {
    std::vector<float> data;
    data.reserve(idx.size() * pool.frames[0].size());
    for (int i : idx)
        data.insert(data.end(), pool.frames[i].begin(), pool.frames[i].end());
    return make_tensor({static_cast<int>(idx.size()), pool.F, pool.W}, std::move(data));
}

/// Stacks per-chunk generator outputs (F×W each) into a B×F×W batch while
/// keeping the result differentiable.
Tensor stack_chunks(Graph& g, const std::vector<Tensor>& xs, int F, int W) {
    Tensor acc = g.reshape(xs[0], {1, F, W});
    for (std::size_t i = 1; i < xs.size(); ++i)
        acc = g.concat_channels(acc, g.reshape(xs[i], {1, F, W}));
    return g.reshape(acc, {static_cast<int>(xs.size()), F, W});
}

/// Differentiable context splice of the interior frames of one F×W chunk:
/// offsets -r..r cropped and concatenated, then transposed to one row per
/// frame. Edge frames (no full context inside the chunk) are skipped.
Tensor splice_interior(Graph& g, const Tensor& x, int r, int W) {
    if (W <= 2 * r)
        throw std::invalid_argument("train_gan: chunk window too small for the context radius");
    int inner = W - 2 * r;
    Tensor acc = g.crop_time(x, 0, inner);
    for (int j = 1; j <= 2 * r; ++j)
        acc = g.concat_channels(acc, g.crop_time(x, j, inner));
    return g.transpose(acc);  // inner × (2r+1)F
}

}  // namespace

AmTrainResult train_am_from(AcousticModel& am, const std::vector<FeatureUtterance>& train,
                            const std::vector<FeatureUtterance>& dev,
                            const AmTrainConfig& cfg) {
    if (cfg.batch_size < 2) throw std::invalid_argument("train: batch size must be >= 2");
    if (cfg.max_epochs < 0 || cfg.lr <= 0)
        throw std::invalid_argument("train: invalid epoch count or learning rate");
    auto t0 = std::chrono::steady_clock::now();
    AmTrainResult res;
    if (cfg.max_epochs == 0) {
        res.best = checkpoint_from_am(am, {cfg.seed, 0, seer(am, nullptr, dev), 0});
        res.best_dev_seer = res.best.meta.dev_seer;
        return res;
    }

    FrameDataset ds = splice_corpus(train, am.spec().context_radius);
    std::mt19937 rng(static_cast<std::uint32_t>(mix(cfg.seed)));
    auto params = am.params();

    PlateauScheduler sched;
    sched.lr = cfg.lr;
    sched.threshold = cfg.plateau_threshold;
    EarlyStopper stopper;
    stopper.patience = cfg.patience;
    double best_seer = std::numeric_limits<double>::infinity();

    double seer0 = seer(am, nullptr, dev);
    res.log.push_back({0, 0.0, 0.0, seer0, cfg.lr, 0.0f, seconds_since(t0)});
    best_seer = seer0;
    res.best = checkpoint_from_am(am, {cfg.seed, 0, seer0, 0});
    res.best_epoch = 0;

    std::vector<int> order(ds.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0;
        long batches = 0;
        for (std::size_t s = 0; s + 2 <= order.size(); s += cfg.batch_size) {
            std::size_t b = std::min(static_cast<std::size_t>(cfg.batch_size),
                                     order.size() - s);
            if (b < 2) break;
            std::vector<float> x(b * ds.dim);
            std::vector<int> y(b);
            for (std::size_t i = 0; i < b; ++i) {
                int row = order[s + i];
                std::copy_n(ds.rows.begin() + static_cast<std::ptrdiff_t>(row) * ds.dim,
                            ds.dim, x.begin() + static_cast<std::ptrdiff_t>(i) * ds.dim);
                y[i] = ds.labels[row];
            }
            Graph g(mix(cfg.seed ^ mix(static_cast<std::uint64_t>(epoch) * 1000003u + s)));
            Tensor lp = am.forward(g, make_tensor({static_cast<int>(b), ds.dim}, std::move(x)),
                                   true);
            Tensor loss = g.nll_loss(lp, y);
            require_finite(loss->data[0], "training loss");
            g.backward(loss);
            sgd_step(params, sched.lr);
            zero_grads(params);
            loss_sum += loss->data[0];
            ++batches;
        }
        double mean_loss = batches ? loss_sum / batches : 0.0;
        require_finite(mean_loss, "epoch loss");

        double dev_seer = seer(am, nullptr, dev);
        float lr_used = sched.lr;
        sched.update(static_cast<float>(dev_seer));
        res.log.push_back({epoch, mean_loss, 0.0, dev_seer, lr_used, 0.0f, seconds_since(t0)});
        if (dev_seer < best_seer) {
            best_seer = dev_seer;
            res.best = checkpoint_from_am(am, {cfg.seed, epoch, dev_seer, 0});
            res.best_epoch = epoch;
        }
        if (stopper.update(static_cast<float>(dev_seer), std::to_string(epoch))) break;
    }
    res.best_dev_seer = best_seer;
    return res;
}

AmTrainResult train_acoustic_model(const std::vector<FeatureUtterance>& train,
                                   const std::vector<FeatureUtterance>& dev,
                                   const AmTrainConfig& cfg, const AcousticModelSpec& spec) {
    std::mt19937 rng(static_cast<std::uint32_t>(mix(cfg.seed ^ 0xA11)));
    AcousticModel am(spec, rng);
    return train_am_from(am, train, dev, cfg);
}

GanTrainResult train_gan(const std::vector<FeatureUtterance>& clean,
                         const std::vector<FeatureUtterance>& noisy,
                         const std::vector<FeatureUtterance>& dev, AcousticModel& frozen_am,
                         const GanTrainConfig& cfg, const GeneratorSpec& gen_spec,
                         const DiscriminatorSpec& disc_spec) {
    if (cfg.batch_size < 1 || cfg.lr_g <= 0 || cfg.lr_d <= 0)
        throw std::invalid_argument("train_gan: invalid batch size or learning rates");
    if (cfg.eval_every < 1) throw std::invalid_argument("train_gan: eval_every must be >= 1");
    auto t0 = std::chrono::steady_clock::now();

    GanTrainResult res;
    res.am_hash_before = param_hash(frozen_am.named_params(), frozen_am.named_buffers());

    ChunkPool real_pool = build_pool(clean, cfg.chunk_w, cfg.chunk_hop);
    ChunkPool noisy_pool = build_pool(noisy, cfg.chunk_w, cfg.chunk_hop);
    int F = noisy_pool.F, W = noisy_pool.W;
    int r = frozen_am.spec().context_radius;

    std::mt19937 model_rng(static_cast<std::uint32_t>(mix(cfg.seed ^ 0xBEEF)));
    auto gen = build_generator(gen_spec, model_rng);
    auto disc = build_discriminator(disc_spec, model_rng);
    auto g_params = gen->params();
    auto d_params = disc->params();
    AdamState g_opt, d_opt;
    LossConfig loss_cfg{cfg.family, cfg.lambda, cfg.lambda_gp};

    std::mt19937 sample_rng(static_cast<std::uint32_t>(mix(cfg.seed ^ 0x5A17)));
    std::uniform_int_distribution<int> real_d(0, static_cast<int>(real_pool.frames.size()) - 1);
    std::uniform_int_distribution<int> noisy_d(0,
                                               static_cast<int>(noisy_pool.frames.size()) - 1);
    long steps_per_epoch = std::max<long>(
        1, static_cast<long>(noisy_pool.frames.size()) / cfg.batch_size);

    EarlyStopper stopper;
    stopper.patience = cfg.patience;
    double best_seer = std::numeric_limits<double>::infinity();

    res.baseline_dev_seer = seer(frozen_am, nullptr, dev);
    double seer0 = seer(frozen_am, gen.get(), dev);
    res.log.push_back({0, 0.0, 0.0, seer0, cfg.lr_g, cfg.lr_d, seconds_since(t0)});
    best_seer = seer0;
    res.best_generator = checkpoint_from_generator(*gen, {cfg.seed, 0, seer0, 0});
    res.best_epoch = 0;
    res.snapshots.emplace_back(0, res.best_generator);
    double last_eval = seer0;

    auto make_fakes = [&](Graph& g, const std::vector<int>& idx,
                          std::vector<Tensor>* per_chunk) -> Tensor {
        std::vector<Tensor> xs;
        for (int i : idx) {
            Tensor x = make_tensor({F, W}, std::vector<float>(noisy_pool.frames[i]));
            xs.push_back(gen->forward(g, x));
        }
        if (per_chunk) *per_chunk = xs;
        return stack_chunks(g, xs, F, W);
    };

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        double lg_sum = 0, ld_sum = 0;
        for (long step = 0; step < steps_per_epoch; ++step) {
            std::vector<int> real_idx(cfg.batch_size), noisy_idx(cfg.batch_size);
            for (auto& i : real_idx) i = real_d(sample_rng);
            for (auto& i : noisy_idx) i = noisy_d(sample_rng);

            // discriminator update
            {
                Graph g(mix(cfg.seed + static_cast<std::uint64_t>(epoch) * 7919u +
                            static_cast<std::uint64_t>(step) * 2u));
                Tensor real = batch_tensor(real_pool, real_idx);
                Tensor fake = make_fakes(g, noisy_idx, nullptr);
                Tensor d_real = disc->forward(g, real, true, true);
                Tensor d_fake = disc->forward(g, fake, true, false);
                Tensor penalty;
                if (cfg.family == LossFamily::WganGp && cfg.lambda_gp > 0) {
                    DiscForward df = [&](Graph& gg, const Tensor& x) {
                        return disc->forward(gg, x, false, false);
                    };
                    // the penalty anchors on constant copies of both batches
                    Tensor fake_const = make_tensor(fake->shape,
                                                    std::vector<float>(fake->data));
                    penalty = gradient_penalty(g, df, real, fake_const);
                }
                Tensor ld = total_discriminator_loss(g, loss_cfg, d_real, d_fake, penalty);
                require_finite(ld->data[0], "discriminator loss");
                if (cfg.family == LossFamily::SnGan && std::abs(ld->data[0]) > 1.0f + 1e-6f)
                    throw std::runtime_error("train_gan: sigmoid-head loss bound violated");
                g.backward(ld);
                adam_step(d_params, d_opt, cfg.lr_d);
                zero_grads(d_params);
                zero_grads(g_params);
                ld_sum += ld->data[0];
                ++res.d_steps;
            }

            // generator update
            {
                Graph g(mix(cfg.seed + static_cast<std::uint64_t>(epoch) * 7919u +
                            static_cast<std::uint64_t>(step) * 2u + 1u));
                std::vector<Tensor> fakes;
                Tensor fake = make_fakes(g, noisy_idx, &fakes);
                Tensor d_fake = disc->forward(g, fake, true, false);
                Tensor log_probs;
                std::vector<int> labels;
                if (cfg.lambda > 0) {
                    Tensor rows;
                    for (std::size_t i = 0; i < fakes.size(); ++i) {
                        Tensor spl = splice_interior(g, fakes[i], r, W);
                        rows = rows ? g.concat_channels(rows, spl) : spl;
                        const auto& y = noisy_pool.labels[noisy_idx[i]];
                        labels.insert(labels.end(), y.begin() + r, y.end() - r);
                    }
                    int inner = W - 2 * r;
                    rows = g.reshape(rows, {static_cast<int>(fakes.size()) * inner,
                                            (2 * r + 1) * F});
                    log_probs = frozen_am.forward(g, rows, false);
                }
                Tensor lg = generator_loss(g, loss_cfg, d_fake, log_probs, labels);
                require_finite(lg->data[0], "generator loss");
                g.backward(lg);
                adam_step(g_params, g_opt, cfg.lr_g);
                zero_grads(g_params);
                zero_grads(d_params);
                lg_sum += lg->data[0];
                ++res.g_steps;
            }
        }

        bool evaluated = epoch % cfg.eval_every == 0 || epoch == cfg.max_epochs;
        if (evaluated) last_eval = seer(frozen_am, gen.get(), dev);
        res.log.push_back({epoch, lg_sum / steps_per_epoch, ld_sum / steps_per_epoch,
                           last_eval, cfg.lr_g, cfg.lr_d, seconds_since(t0)});
        if (evaluated) {
            res.snapshots.emplace_back(
                epoch, checkpoint_from_generator(*gen, {cfg.seed, epoch, last_eval, 0}));
            if (last_eval < best_seer) {
                best_seer = last_eval;
                res.best_generator = res.snapshots.back().second;
                res.best_epoch = epoch;
            }
            if (stopper.update(static_cast<float>(last_eval), std::to_string(epoch))) break;
        }
    }

    res.best_dev_seer = best_seer;
    res.am_hash_after = param_hash(frozen_am.named_params(), frozen_am.named_buffers());
    if (res.am_hash_after != res.am_hash_before)
        throw std::runtime_error("train_gan: frozen acoustic model was modified");
    if (res.g_steps != res.d_steps)
        throw std::runtime_error("train_gan: generator/discriminator step counts diverged");
    return res;
}

AmTrainResult fine_tune(AcousticModel& am, const Generator& gen,
                        const std::vector<FeatureUtterance>& noisy_train,
                        const std::vector<FeatureUtterance>& dev, const AmTrainConfig& cfg) {
    auto enhance_corpus = [&gen](const std::vector<FeatureUtterance>& corpus) {
        std::vector<FeatureUtterance> out;
        out.reserve(corpus.size());
        for (const auto& utt : corpus) {
            Graph g(0);
            Tensor frames = make_tensor(
                {utt.F, utt.T}, std::vector<float>(utt.frames.begin(), utt.frames.end()));
            FeatureUtterance e = utt;
            e.frames = enhance(gen, g, frames)->data;
            out.push_back(std::move(e));
        }
        return out;
    };
    // dev goes through the generator too: the deployed pipeline is
    // generator -> model, so the dev metric must score that pipeline
    return train_am_from(am, enhance_corpus(noisy_train), enhance_corpus(dev), cfg);
}

std::vector<FeatureUtterance> mtr_augment(const std::vector<FeatureUtterance>& corpus,
                                          const PerturbSpec& spec,
                                          const std::vector<PerturbKind>& kinds) {
    std::vector<FeatureUtterance> out = corpus;
    for (PerturbKind kind : kinds)
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            FeatureUtterance p = mtr_perturb(corpus[i], spec, kind, static_cast<int>(i));
            p.utt_id += kind == PerturbKind::Speed ? "+s"
                        : kind == PerturbKind::Volume ? "+v"
                                                      : "+sv";
            out.push_back(std::move(p));
        }
    return out;
}

AmTrainResult train_mtr_baseline(const std::vector<FeatureUtterance>& noisy_train,
                                 const PerturbSpec& perturb,
                                 const std::vector<PerturbKind>& kinds,
                                 const std::vector<FeatureUtterance>& dev,
                                 const AmTrainConfig& cfg, const AcousticModelSpec& spec) {
    return train_acoustic_model(mtr_augment(noisy_train, perturb, kinds), dev, cfg, spec);
}

GridResult grid_search(const GridSpec& grid, const GanTrainConfig& base,
                       const std::function<double(const GanTrainConfig&)>& objective) {
    auto batches = grid.batch_sizes.empty() ? std::vector<int>{base.batch_size}
                                            : grid.batch_sizes;
    auto lgs = grid.lrs_g.empty() ? std::vector<float>{base.lr_g} : grid.lrs_g;
    auto lds = grid.lrs_d.empty() ? std::vector<float>{base.lr_d} : grid.lrs_d;
    auto lambdas = grid.lambdas.empty() ? std::vector<float>{base.lambda} : grid.lambdas;
    std::sort(batches.begin(), batches.end());
    std::sort(lgs.begin(), lgs.end());
    std::sort(lds.begin(), lds.end());
    std::sort(lambdas.begin(), lambdas.end());

    GridResult res;
    bool have_best = false;
    auto run = [&](GanTrainConfig cfg, int phase) {
        cfg.max_epochs = grid.short_epochs;
        GridTrial trial;
        trial.config = cfg;
        trial.phase = phase;
        try {
            trial.objective = objective(cfg);
            if (!std::isfinite(trial.objective)) trial.diverged = true;
        } catch (const NumericsError&) {
            trial.diverged = true;
        }
        if (!trial.diverged &&
            (!have_best || trial.objective < res.best_objective)) {
            res.best = cfg;
            res.best_objective = trial.objective;
            have_best = true;
        }
        res.trials.push_back(trial);
    };

    for (int b : batches)
        for (float lg : lgs)
            for (float ld : lds) {
                GanTrainConfig cfg = base;
                cfg.batch_size = b;
                cfg.lr_g = lg;
                cfg.lr_d = ld;
                run(cfg, 1);
            }
    if (!have_best)
        throw std::runtime_error("grid_search: every phase-1 trial diverged");

    GanTrainConfig center = res.best;
    for (float lam : lambdas) {
        if (lam == center.lambda) continue;  // already measured in phase 1
        GanTrainConfig cfg = center;
        cfg.lambda = lam;
        run(cfg, 2);
    }
    return res;
}

void write_train_log_csv(const std::string& path, const std::vector<EpochLog>& log,
                         std::uint64_t config_hash) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_train_log_csv: cannot open " + path);
    f << "# config_hash " << config_hash << "\n";
    f << "epoch,L_G,L_D,dev_seer,lr_G,lr_D,wall_clock_s\n";
    f.precision(17);
    for (const auto& e : log)
        f << e.epoch << "," << e.l_g << "," << e.l_d << "," << e.dev_seer << "," << e.lr_g
          << "," << e.lr_d << "," << e.wall_clock_s << "\n";
}

}  // namespace ggan
