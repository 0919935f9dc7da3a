#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ggan/corpus.hpp"
#include "ggan/models.hpp"
#include "ggan/train.hpp"

namespace ggan {

/// Everything a run needs, grouped into the config-file sections.
struct ExperimentConfig {
    CorpusManifest corpus;
    CorruptionSpec corruption;
    PerturbSpec perturb;
    AcousticModelSpec am_model;
    AmTrainConfig am_train;
    GanTrainConfig gan;
    GeneratorSpec generator;
    DiscriminatorSpec discriminator;
    GridSpec grid;

    // [run]
    std::string out_dir = "out";
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::vector<double> hours = {0.01, 0.02, 0.04};  // scaling-study partitions
    int n_dev_utterances = 4;
    int n_test_utterances = 4;
    std::vector<PerturbKind> mtr_sets = {PerturbKind::Speed, PerturbKind::Volume};
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Canonical text form: [section] headers, one "key = value" per line.
/// parse(serialize(c)) reproduces every field exactly.
std::string serialize_config(const ExperimentConfig& cfg);
ExperimentConfig parse_config(const std::string& text);

ExperimentConfig load_config_file(const std::string& path);
void save_config_file(const std::string& path, const ExperimentConfig& cfg);

/// FNV-1a of the canonical serialization; stamped into checkpoints and CSVs.
std::uint64_t config_hash(const ExperimentConfig& cfg);

}  // namespace ggan
