#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ggan/tensor.hpp"

namespace ggan {

struct FeatureUtterance {
    std::string utt_id;
    int F = 0;
    int T = 0;
    std::vector<float> frames;       // F×T row-major (feature rows, time columns)
    std::vector<int> senone_labels;  // length T, values in [0, C)
    std::vector<int> tokens;         // run-length-collapsed segment tokens
};

struct CorpusManifest {
    std::uint64_t seed = 1;
    int n_utterances = 10;
    int F = 16;
    int C = 48;  // senones
    int V = 12;  // token vocabulary
    std::int64_t frames_per_hour = 360000;
    float sigma_emit = 0.1f;
    int min_tokens = 4;  // tokens per utterance
    int max_tokens = 8;
};

/// Deterministic functions of the manifest seed: per-senone emission means and
/// the fixed senone sequence (2-4 long) spelled by each token. Senones are
/// partitioned across tokens so decoding is unambiguous.
struct CorpusModel {
    std::vector<float> senone_means;           // C×F
    std::vector<std::vector<int>> token_senones;  // V entries
};

CorpusModel derive_corpus_model(const CorpusManifest& m);

std::vector<FeatureUtterance> synth_corpus(const CorpusManifest& m);

struct CorruptionSpec {
    int smooth_window = 3;    // centered moving average along time
    int quant_levels = 16;    // 0 disables quantization
    float noise_sigma = 0.1f;
    float gain_min = 0.8f;    // per-utterance gain drawn uniformly
    float gain_max = 1.2f;
};

/// gain * quantize(moving_average(frames)) + noise; labels and tokens are
/// never touched. Deterministic in (spec, seed, utt_id).
FeatureUtterance corrupt(const FeatureUtterance& utt, const CorruptionSpec& spec,
                         std::uint64_t seed);

struct PerturbSpec {
    std::vector<float> speed_factors = {0.9f, 1.1f};
    std::vector<float> volume_factors = {0.8f, 1.2f};
};

enum class PerturbKind { Speed, Volume, Both };

/// Speed: linear resample to round(T/factor) frames with nearest-index label
/// resampling. Volume: scale frames. Factors assigned by utterance index
/// parity so each factor covers about half the corpus.
FeatureUtterance mtr_perturb(const FeatureUtterance& utt, const PerturbSpec& spec,
                             PerturbKind kind, int utt_index);

/// (2r+1)F × T splice; column t concatenates frames t-r..t+r with edge clamp.
Tensor context_window(const Tensor& frames, int radius);

struct Chunk {
    Tensor frames;  // F×W
    std::vector<int> labels;
    int start = 0;
};

/// Fixed windows at stride `hop`; the final partial window is dropped. T < W
/// yields an empty list.
std::vector<Chunk> chunk(const FeatureUtterance& utt, int W, int hop);

/// Nested prefixes of a seeded shuffle; entry i lists the utterance indices
/// whose frames reach hours[i] * frames_per_hour (the crossing utterance is
/// included, so counts land within one utterance of the budget).
std::vector<std::vector<int>> partition_by_hours(const std::vector<FeatureUtterance>& corpus,
                                                 const std::vector<double>& hours,
                                                 std::int64_t frames_per_hour,
                                                 std::uint64_t seed);

// ---- serialization ------------------------------------------------------

void save_corpus(const std::string& dir, const CorpusManifest& m,
                 const std::vector<FeatureUtterance>& utts);
CorpusManifest load_manifest(const std::string& path);
std::vector<FeatureUtterance> load_corpus(const std::string& dir, const CorpusManifest& m);

/// Reads a directory written by save_corpus via its utts.txt id index, so
/// split directories with arbitrary utterance ids load in saved order.
std::vector<FeatureUtterance> load_corpus_dir(const std::string& dir);

void save_utterance(const std::string& path, const FeatureUtterance& utt, int C);
FeatureUtterance load_utterance(const std::string& path);

/// frames as CSV (one row per feature dimension) for plotting.
void export_frames_csv(const std::string& path, const std::vector<const FeatureUtterance*>& utts);

}  // namespace ggan
