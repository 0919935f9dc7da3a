#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "ggan/checkpoint.hpp"
#include "ggan/config.hpp"
#include "ggan/metrics.hpp"
#include "ggan/train.hpp"

namespace fs = std::filesystem;
using namespace ggan;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitIo = 4;

int worker_threads() {
    const char* env = std::getenv("GGAN_THREADS");
    if (!env) return 1;
    int n = std::atoi(env);
    return n <= 0 ? 1 : n;
}

void echo_config(const ExperimentConfig& cfg) {
    std::cout << "# resolved config (hash " << config_hash(cfg) << ")\n"
              << serialize_config(cfg);
}

void write_resolved(const ExperimentConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    save_config_file(cfg.out_dir + "/config.ini", cfg);
}

std::string data_dir(const ExperimentConfig& cfg, const std::string& split) {
    return cfg.out_dir + "/data/" + split;
}

struct Splits {
    std::vector<FeatureUtterance> train, dev, test;
};

Splits split_corpus(const ExperimentConfig& cfg, const std::vector<FeatureUtterance>& corpus) {
    int n = static_cast<int>(corpus.size());
    int held = cfg.n_dev_utterances + cfg.n_test_utterances;
    if (held >= n)
        throw ConfigError("gen-data: dev+test utterances exceed the corpus size");
    Splits s;
    s.train.assign(corpus.begin(), corpus.begin() + (n - held));
    s.test.assign(corpus.begin() + (n - held), corpus.begin() + (n - cfg.n_dev_utterances));
    s.dev.assign(corpus.end() - cfg.n_dev_utterances, corpus.end());
    return s;
}

CorpusManifest sub_manifest(const ExperimentConfig& cfg, std::size_t n) {
    CorpusManifest m = cfg.corpus;
    m.n_utterances = static_cast<int>(n);
    return m;
}

std::vector<int> sen2tok_for(const ExperimentConfig& cfg) {
    return senone_to_token(derive_corpus_model(cfg.corpus), cfg.corpus.C);
}

void save_with_hash(const ExperimentConfig& cfg, Checkpoint ckpt, const std::string& path) {
    ckpt.meta.config_hash = config_hash(cfg);
    save_checkpoint(path, ckpt);
}

int cmd_gen_data(const ExperimentConfig& cfg) {
    echo_config(cfg);
    write_resolved(cfg);
    auto corpus = synth_corpus(cfg.corpus);
    Splits clean = split_corpus(cfg, corpus);

    auto corrupt_all = [&](const std::vector<FeatureUtterance>& utts) {
        std::vector<FeatureUtterance> out;
        out.reserve(utts.size());
        for (auto& u : utts) out.push_back(corrupt(u, cfg.corruption, cfg.corpus.seed));
        return out;
    };
    save_corpus(data_dir(cfg, "clean_train"), sub_manifest(cfg, clean.train.size()), clean.train);
    save_corpus(data_dir(cfg, "clean_dev"), sub_manifest(cfg, clean.dev.size()), clean.dev);
    save_corpus(data_dir(cfg, "clean_test"), sub_manifest(cfg, clean.test.size()), clean.test);
    save_corpus(data_dir(cfg, "noisy_train"), sub_manifest(cfg, clean.train.size()),
                corrupt_all(clean.train));
    save_corpus(data_dir(cfg, "noisy_dev"), sub_manifest(cfg, clean.dev.size()),
                corrupt_all(clean.dev));
    save_corpus(data_dir(cfg, "noisy_test"), sub_manifest(cfg, clean.test.size()),
                corrupt_all(clean.test));

    auto parts = partition_by_hours(clean.train, cfg.hours, cfg.corpus.frames_per_hour,
                                    cfg.corpus.seed);
    std::ofstream pf(cfg.out_dir + "/data/partitions.csv");
    std::uint64_t h = config_hash(cfg);
    pf << "# config_hash " << h << "\n";
    pf << "hours,n_utterances,utt_indices\n";
    for (std::size_t i = 0; i < parts.size(); ++i) {
        pf << cfg.hours[i] << "," << parts[i].size() << ",";
        for (std::size_t k = 0; k < parts[i].size(); ++k)
            pf << (k ? " " : "") << parts[i][k];
        pf << "\n";
    }
    std::cout << "wrote " << corpus.size() << " utterances under " << cfg.out_dir << "/data\n";
    return kExitOk;
}

int cmd_train_am(const ExperimentConfig& cfg, std::string train_dir, std::string dev_dir) {
    echo_config(cfg);
    write_resolved(cfg);
    if (train_dir.empty()) train_dir = data_dir(cfg, "clean_train");
    if (dev_dir.empty()) dev_dir = data_dir(cfg, "clean_dev");
    auto res = train_acoustic_model(load_corpus_dir(train_dir), load_corpus_dir(dev_dir),
                                    cfg.am_train, cfg.am_model);
    save_with_hash(cfg, res.best, cfg.out_dir + "/am.ckpt");
    write_train_log_csv(cfg.out_dir + "/am_log.csv", res.log, config_hash(cfg));
    std::cout << "best epoch " << res.best_epoch << " dev_seer " << res.best_dev_seer << "\n";
    return kExitOk;
}

int cmd_train_gan(const ExperimentConfig& cfg, const std::string& am_path) {
    echo_config(cfg);
    write_resolved(cfg);
    auto am = am_from_checkpoint(load_checkpoint(am_path));
    auto res = train_gan(load_corpus_dir(data_dir(cfg, "clean_train")),
                         load_corpus_dir(data_dir(cfg, "noisy_train")),
                         load_corpus_dir(data_dir(cfg, "noisy_dev")), *am, cfg.gan,
                         cfg.generator, cfg.discriminator);
    save_with_hash(cfg, res.best_generator, cfg.out_dir + "/generator.ckpt");
    write_train_log_csv(cfg.out_dir + "/gan_log.csv", res.log, config_hash(cfg));
    fs::create_directories(cfg.out_dir + "/snapshots");
    for (auto& [epoch, snap] : res.snapshots) {
        char name[32];
        std::snprintf(name, sizeof(name), "/snapshots/snap_%04d.ckpt", epoch);
        save_with_hash(cfg, snap, cfg.out_dir + name);
    }
    std::cout << "baseline dev_seer " << res.baseline_dev_seer << " best dev_seer "
              << res.best_dev_seer << " (epoch " << res.best_epoch << ", " << res.g_steps
              << " steps)\n";
    return kExitOk;
}

int cmd_finetune(const ExperimentConfig& cfg, const std::string& am_path,
                 const std::string& gen_path) {
    echo_config(cfg);
    write_resolved(cfg);
    auto am = am_from_checkpoint(load_checkpoint(am_path));
    auto gen = generator_from_checkpoint(load_checkpoint(gen_path));
    auto res = fine_tune(*am, *gen, load_corpus_dir(data_dir(cfg, "noisy_train")),
                         load_corpus_dir(data_dir(cfg, "noisy_dev")), cfg.am_train);
    save_with_hash(cfg, res.best, cfg.out_dir + "/am_ft.ckpt");
    write_train_log_csv(cfg.out_dir + "/ft_log.csv", res.log, config_hash(cfg));
    std::cout << "best epoch " << res.best_epoch << " dev_seer " << res.best_dev_seer << "\n";
    return kExitOk;
}

int cmd_train_mtr(const ExperimentConfig& cfg) {
    echo_config(cfg);
    write_resolved(cfg);
    auto res = train_mtr_baseline(load_corpus_dir(data_dir(cfg, "noisy_train")), cfg.perturb,
                                  cfg.mtr_sets, load_corpus_dir(data_dir(cfg, "noisy_dev")),
                                  cfg.am_train, cfg.am_model);
    save_with_hash(cfg, res.best, cfg.out_dir + "/am_mtr.ckpt");
    write_train_log_csv(cfg.out_dir + "/mtr_log.csv", res.log, config_hash(cfg));
    std::cout << "best epoch " << res.best_epoch << " dev_seer " << res.best_dev_seer << "\n";
    return kExitOk;
}

int cmd_grid(const ExperimentConfig& cfg, const std::string& am_path) {
    echo_config(cfg);
    write_resolved(cfg);
    auto clean = load_corpus_dir(data_dir(cfg, "clean_train"));
    auto noisy = load_corpus_dir(data_dir(cfg, "noisy_train"));
    auto dev = load_corpus_dir(data_dir(cfg, "noisy_dev"));
    auto am = am_from_checkpoint(load_checkpoint(am_path));
    auto objective = [&](const GanTrainConfig& c) {
        return train_gan(clean, noisy, dev, *am, c, cfg.generator, cfg.discriminator)
            .best_dev_seer;
    };
    auto res = grid_search(cfg.grid, cfg.gan, objective);

    std::ofstream f(cfg.out_dir + "/grid_results.csv");
    f << "# config_hash " << config_hash(cfg) << "\n";
    f << "phase,batch_size,lr_g,lr_d,lambda,objective,diverged\n";
    f.precision(9);
    for (auto& t : res.trials)
        f << t.phase << "," << t.config.batch_size << "," << t.config.lr_g << ","
          << t.config.lr_d << "," << t.config.lambda << "," << t.objective << ","
          << (t.diverged ? 1 : 0) << "\n";

    ExperimentConfig best_cfg = cfg;
    best_cfg.gan = res.best;
    save_config_file(cfg.out_dir + "/grid_best.ini", best_cfg);
    std::cout << "best: batch " << res.best.batch_size << " lr_g " << res.best.lr_g << " lr_d "
              << res.best.lr_d << " lambda " << res.best.lambda << " objective "
              << res.best_objective << "\n";
    return kExitOk;
}

int cmd_evaluate(const ExperimentConfig& cfg, const std::string& am_path,
                 const std::string& gen_path, std::string corpus_dir) {
    echo_config(cfg);
    write_resolved(cfg);
    if (corpus_dir.empty()) corpus_dir = data_dir(cfg, "noisy_test");
    auto am = am_from_checkpoint(load_checkpoint(am_path));
    std::unique_ptr<Generator> gen;
    if (!gen_path.empty()) gen = generator_from_checkpoint(load_checkpoint(gen_path));
    auto rep = evaluate(*am, gen.get(), load_corpus_dir(corpus_dir), sen2tok_for(cfg));
    std::uint64_t h = config_hash(cfg);
    write_report_json(cfg.out_dir + "/report.json", rep);
    write_report_csv(cfg.out_dir + "/report.csv", rep, &h);
    long long total = rep.counts.substitutions + rep.counts.deletions + rep.counts.insertions;
    std::cout << "seer " << rep.seer << " ter " << rep.token_error_rate << " (S "
              << rep.counts.substitutions << " + D " << rep.counts.deletions << " + I "
              << rep.counts.insertions << " = " << total << " over N " << rep.counts.ref_length
              << ")\n";
    return kExitOk;
}

int cmd_export_features(const ExperimentConfig& cfg, const std::string& gen_path,
                        std::vector<std::string> utt_ids, int first_k) {
    echo_config(cfg);
    write_resolved(cfg);
    auto clean = load_corpus_dir(data_dir(cfg, "clean_test"));
    auto noisy = load_corpus_dir(data_dir(cfg, "noisy_test"));
    auto gen = generator_from_checkpoint(load_checkpoint(gen_path));
    if (utt_ids.empty())
        for (int i = 0; i < first_k && i < static_cast<int>(clean.size()); ++i)
            utt_ids.push_back(clean[i].utt_id);

    std::uint64_t h = config_hash(cfg);
    for (const auto& id : utt_ids) {
        auto ci = std::find_if(clean.begin(), clean.end(),
                               [&](auto& u) { return u.utt_id == id; });
        auto ni = std::find_if(noisy.begin(), noisy.end(),
                               [&](auto& u) { return u.utt_id == id; });
        if (ci == clean.end() || ni == noisy.end())
            throw std::runtime_error("export-features: unknown utterance " + id);
        Graph g(0);
        Tensor x = make_tensor({ni->F, ni->T},
                               std::vector<float>(ni->frames.begin(), ni->frames.end()));
        Tensor y = enhance(*gen, g, x);

        std::ofstream f(cfg.out_dir + "/features_" + id + ".csv");
        f << "# config_hash " << h << "\n";
        int F = ci->F;
        for (int kind = 0; kind < 3; ++kind)
            for (int d = 0; d < F; ++d)
                f << (kind || d ? "," : "")
                  << (kind == 0 ? "clean_f" : kind == 1 ? "noisy_f" : "generated_f") << d;
        f << "\n";
        for (int t = 0; t < ci->T; ++t) {
            for (int d = 0; d < F; ++d)
                f << (d ? "," : "") << ci->frames[static_cast<std::size_t>(d) * ci->T + t];
            for (int d = 0; d < F; ++d)
                f << "," << ni->frames[static_cast<std::size_t>(d) * ni->T + t];
            for (int d = 0; d < F; ++d)
                f << "," << y->data[static_cast<std::size_t>(d) * ni->T + t];
            f << "\n";
        }
    }
    std::cout << "exported " << utt_ids.size() << " utterances\n";
    return kExitOk;
}

int cmd_scaling_study(const ExperimentConfig& cfg, const std::string& am_path) {
    echo_config(cfg);
    write_resolved(cfg);
    auto clean = load_corpus_dir(data_dir(cfg, "clean_train"));
    auto noisy = load_corpus_dir(data_dir(cfg, "noisy_train"));
    auto dev = load_corpus_dir(data_dir(cfg, "noisy_dev"));
    auto parts = partition_by_hours(clean, cfg.hours, cfg.corpus.frames_per_hour,
                                    cfg.corpus.seed);
    auto sen2tok = sen2tok_for(cfg);

    struct Trial {
        double hours;
        std::uint64_t seed;
        const std::vector<int>* part;
        double seer = 0, ter = 0;
    };
    std::vector<Trial> trials;
    for (std::size_t i = 0; i < parts.size(); ++i)
        for (std::uint64_t s : cfg.seeds) trials.push_back({cfg.hours[i], s, &parts[i]});

    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        // each worker needs its own frozen model since eval forwards touch
        // lazily initialized batchnorm state
        auto am = am_from_checkpoint(load_checkpoint(am_path));
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= trials.size()) break;
            Trial& t = trials[i];
            std::vector<FeatureUtterance> c_sub, n_sub;
            for (int idx : *t.part) {
                c_sub.push_back(clean[idx]);
                n_sub.push_back(noisy[idx]);
            }
            GanTrainConfig gc = cfg.gan;
            gc.seed = t.seed;
            auto res = train_gan(c_sub, n_sub, dev, *am, gc, cfg.generator, cfg.discriminator);
            auto gen = generator_from_checkpoint(res.best_generator);
            auto rep = evaluate(*am, gen.get(), dev, sen2tok);
            t.seer = rep.seer;
            t.ter = rep.token_error_rate;
        }
    };
    int n_workers = std::min<int>(worker_threads(), static_cast<int>(trials.size()));
    if (n_workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < n_workers; ++i) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }

    std::ofstream f(cfg.out_dir + "/scaling.csv");
    f << "# config_hash " << config_hash(cfg) << "\n";
    f << "hours,seed,dev_seer,dev_ter\n";
    f.precision(17);
    for (auto& t : trials) f << t.hours << "," << t.seed << "," << t.seer << "," << t.ter << "\n";
    std::cout << "ran " << trials.size() << " trials over " << parts.size() << " sizes\n";
    return kExitOk;
}

int cmd_correlate(const ExperimentConfig& cfg, const std::string& am_path,
                  std::string snap_dir, std::string corpus_dir) {
    echo_config(cfg);
    write_resolved(cfg);
    if (snap_dir.empty()) snap_dir = cfg.out_dir + "/snapshots";
    if (corpus_dir.empty()) corpus_dir = data_dir(cfg, "noisy_dev");
    std::vector<std::string> files;
    for (auto& e : fs::directory_iterator(snap_dir))
        if (e.path().extension() == ".ckpt") files.push_back(e.path().string());
    std::sort(files.begin(), files.end());  // snapshot names order by epoch

    std::vector<std::unique_ptr<Generator>> gens;
    std::vector<const Generator*> ptrs;
    for (auto& p : files) {
        gens.push_back(generator_from_checkpoint(load_checkpoint(p)));
        ptrs.push_back(gens.back().get());
    }
    auto am = am_from_checkpoint(load_checkpoint(am_path));
    auto res = correlation_study(*am, ptrs, load_corpus_dir(corpus_dir), sen2tok_for(cfg));
    std::uint64_t h = config_hash(cfg);
    write_correlation_csv(cfg.out_dir + "/correlation.csv", res, &h);
    std::cout << "r " << res.r << " over " << res.rows.size() << " checkpoints\n";
    return kExitOk;
}

int cmd_cross_model(const ExperimentConfig& cfg, const std::string& am_path,
                    const std::string& gen_path, std::string corpus_dir) {
    echo_config(cfg);
    write_resolved(cfg);
    if (corpus_dir.empty()) corpus_dir = data_dir(cfg, "noisy_dev");
    auto am = am_from_checkpoint(load_checkpoint(am_path));
    auto gen = generator_from_checkpoint(load_checkpoint(gen_path));
    auto corpus = load_corpus_dir(corpus_dir);
    double baseline = seer(*am, nullptr, corpus);
    double with_gen = seer(*am, gen.get(), corpus);

    std::ofstream f(cfg.out_dir + "/cross_model.csv");
    f << "# config_hash " << config_hash(cfg) << "\n";
    f << "baseline_seer,generator_seer,delta\n";
    f.precision(17);
    f << baseline << "," << with_gen << "," << (with_gen - baseline) << "\n";
    std::cout << "baseline " << baseline << " with generator " << with_gen << " delta "
              << (with_gen - baseline) << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Guided-GAN experiment harness"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_override;
    std::uint64_t seed_override = 0;
    bool have_seed = false;
    app.add_option("--config", config_path, "experiment config file");
    app.add_option("--out", out_override, "output directory override");
    auto* seed_opt = app.add_option("--seed", seed_override, "seed override for all stages");

    std::string am_path, gen_path, corpus_dir, train_dir, dev_dir, snap_dir;
    std::vector<std::string> utt_ids;
    int first_k = 3;

    auto* gen_data = app.add_subcommand("gen-data", "synthesize corpora and splits");
    auto* train_am = app.add_subcommand("train-am", "train the acoustic model");
    train_am->add_option("--train-dir", train_dir, "training corpus directory");
    train_am->add_option("--dev-dir", dev_dir, "dev corpus directory");
    auto* train_gan_c = app.add_subcommand("train-gan", "adversarially train the enhancer");
    auto* finetune = app.add_subcommand("finetune", "fine-tune the model on enhanced features");
    auto* train_mtr = app.add_subcommand("train-mtr", "train the multi-style baseline");
    auto* grid = app.add_subcommand("grid", "two-phase hyperparameter search");
    auto* evaluate_c = app.add_subcommand("evaluate", "score a model on a corpus");
    auto* scaling = app.add_subcommand("scaling-study", "train across partition sizes");
    auto* correlate = app.add_subcommand("correlate", "frame vs sequence error correlation");
    auto* cross = app.add_subcommand("cross-model", "evaluate a generator on a foreign model");
    auto* export_f = app.add_subcommand("export-features", "dump clean/noisy/generated frames");

    for (auto* cmd : {train_gan_c, grid, evaluate_c, scaling, correlate, cross})
        cmd->add_option("--am", am_path, "acoustic model checkpoint");
    finetune->add_option("--am", am_path, "acoustic model checkpoint");
    for (auto* cmd : {finetune, evaluate_c, cross, export_f})
        cmd->add_option("--generator", gen_path, "generator checkpoint");
    for (auto* cmd : {evaluate_c, correlate, cross})
        cmd->add_option("--corpus", corpus_dir, "corpus directory");
    correlate->add_option("--checkpoint-dir", snap_dir, "generator snapshot directory");
    export_f->add_option("--utts", utt_ids, "utterance ids to export");
    export_f->add_option("--first", first_k, "export the first K test utterances");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        ExperimentConfig cfg =
            config_path.empty() ? ExperimentConfig{} : load_config_file(config_path);
        if (!out_override.empty()) cfg.out_dir = out_override;
        if (seed_opt->count()) {
            have_seed = true;
            cfg.corpus.seed = seed_override;
            cfg.am_train.seed = seed_override;
            cfg.gan.seed = seed_override;
        }
        (void)have_seed;
        if (am_path.empty()) am_path = cfg.out_dir + "/am.ckpt";
        if (gen_path.empty() && (finetune->parsed() || export_f->parsed() || cross->parsed()))
            gen_path = cfg.out_dir + "/generator.ckpt";

        if (gen_data->parsed()) return cmd_gen_data(cfg);
        if (train_am->parsed()) return cmd_train_am(cfg, train_dir, dev_dir);
        if (train_gan_c->parsed()) return cmd_train_gan(cfg, am_path);
        if (finetune->parsed()) return cmd_finetune(cfg, am_path, gen_path);
        if (train_mtr->parsed()) return cmd_train_mtr(cfg);
        if (grid->parsed()) return cmd_grid(cfg, am_path);
        if (evaluate_c->parsed()) return cmd_evaluate(cfg, am_path, gen_path, corpus_dir);
        if (scaling->parsed()) return cmd_scaling_study(cfg, am_path);
        if (correlate->parsed()) return cmd_correlate(cfg, am_path, snap_dir, corpus_dir);
        if (cross->parsed()) return cmd_cross_model(cfg, am_path, gen_path, corpus_dir);
        if (export_f->parsed()) return cmd_export_features(cfg, gen_path, utt_ids, first_k);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericsError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return kExitDiverged;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitOk;
}
