#pragma once

#include <string>
#include <vector>

#include "ggan/corpus.hpp"
#include "ggan/models.hpp"

namespace ggan {

struct ErrorCounts {
    long long insertions = 0;
    long long deletions = 0;
    long long substitutions = 0;
    long long ref_length = 0;
};

struct UtteranceEval {
    std::string utt_id;
    double seer = 0.0;
    ErrorCounts counts;
};

struct EvalReport {
    double seer = 0.0;
    double token_error_rate = 0.0;
    ErrorCounts counts;
    std::vector<UtteranceEval> per_utterance;
};

/// senone -> owning token, from the disjoint per-token senone blocks.
std::vector<int> senone_to_token(const CorpusModel& model, int C);

/// Fraction of frames whose argmax senone under the model differs from the
/// label. The generator, when given, enhances frames before context splicing.
double seer(AcousticModel& am, const Generator* gen,
            const std::vector<FeatureUtterance>& corpus);

/// Run-length decode: collapse a per-frame token stream, drop runs shorter
/// than min_run, then merge any now-adjacent duplicates.
std::vector<int> tokens_from_senones(const std::vector<int>& senones,
                                     const std::vector<int>& sen2tok, int min_run = 2);

std::vector<int> decode_tokens(AcousticModel& am, const Generator* gen,
                               const FeatureUtterance& utt,
                               const std::vector<int>& sen2tok, int min_run = 2);

/// Unit-cost alignment; backtrace prefers substitution, then deletion, then
/// insertion so the decomposition is reproducible.
ErrorCounts levenshtein(const std::vector<int>& ref, const std::vector<int>& hyp);

double error_rate(const ErrorCounts& c);

double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

/// Mean over time of the cosine similarity between matching columns.
double feature_correlation(const Tensor& a, const Tensor& b);

EvalReport evaluate(AcousticModel& am, const Generator* gen,
                    const std::vector<FeatureUtterance>& corpus,
                    const std::vector<int>& sen2tok, int min_run = 2);

struct CorrelationRow {
    double seer = 0.0;
    double token_error_rate = 0.0;
};

struct CorrelationResult {
    std::vector<CorrelationRow> rows;
    double r = 0.0;
};

/// Evaluates each generator snapshot (null entries mean "no generator") on the
/// same model and corpus and correlates frame-level with sequence-level error.
CorrelationResult correlation_study(AcousticModel& am,
                                    const std::vector<const Generator*>& generators,
                                    const std::vector<FeatureUtterance>& corpus,
                                    const std::vector<int>& sen2tok, int min_run = 2);

/// CSV writers prepend a "# config_hash" comment line when a hash is given.
void write_report_json(const std::string& path, const EvalReport& report);
void write_report_csv(const std::string& path, const EvalReport& report,
                      const std::uint64_t* config_hash = nullptr);
void write_correlation_csv(const std::string& path, const CorrelationResult& result,
                           const std::uint64_t* config_hash = nullptr);

}  // namespace ggan
