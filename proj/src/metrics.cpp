#include "ggan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace ggan {

namespace {

void check_compat(const AcousticModel& am, const FeatureUtterance& utt) {
    if (utt.F != am.spec().F)
        throw ShapeError("evaluate: utterance feature dimension does not match the model");
    for (int lab : utt.senone_labels)
        if (lab < 0 || lab >= am.spec().C)
            throw std::invalid_argument("evaluate: senone label outside the model's range");
}

/// Per-frame argmax senones for one utterance, in eval mode.
std::vector<int> predict_senones(AcousticModel& am, const Generator* gen,
                                 const FeatureUtterance& utt) {
    check_compat(am, utt);
    Graph g(0);
    Tensor frames = make_tensor({utt.F, utt.T},
                                std::vector<float>(utt.frames.begin(), utt.frames.end()));
    if (gen) frames = enhance(*gen, g, frames);
    Tensor ctx = context_window(frames, am.spec().context_radius);
    Tensor log_probs = am.forward(g, g.transpose(ctx), false);  // T×C
    int C = am.spec().C;
    std::vector<int> pred(utt.T);
    for (int t = 0; t < utt.T; ++t) {
        const float* row = log_probs->data.data() + static_cast<std::size_t>(t) * C;
        pred[t] = static_cast<int>(std::max_element(row, row + C) - row);
    }
    return pred;
}

}  // namespace

std::vector<int> senone_to_token(const CorpusModel& model, int C) {
    std::vector<int> map(C, -1);
    for (std::size_t v = 0; v < model.token_senones.size(); ++v)
        for (int s : model.token_senones[v]) {
            if (s < 0 || s >= C) throw std::invalid_argument("senone_to_token: senone out of range");
            map[s] = static_cast<int>(v);
        }
    // senones a token never spells still belong to its contiguous block
    int V = static_cast<int>(model.token_senones.size());
    for (int s = 0; s < C; ++s)
        if (map[s] < 0) map[s] = static_cast<int>(static_cast<std::int64_t>(s) * V / C);
    return map;
}

double seer(AcousticModel& am, const Generator* gen,
            const std::vector<FeatureUtterance>& corpus) {
    long long wrong = 0, total = 0;
    for (const auto& utt : corpus) {
        auto pred = predict_senones(am, gen, utt);
        for (int t = 0; t < utt.T; ++t)
            if (pred[t] != utt.senone_labels[t]) ++wrong;
        total += utt.T;
    }
    if (total == 0) throw std::invalid_argument("seer: empty corpus");
    return static_cast<double>(wrong) / static_cast<double>(total);
}

std::vector<int> tokens_from_senones(const std::vector<int>& senones,
                                     const std::vector<int>& sen2tok, int min_run) {
    if (min_run < 1) throw std::invalid_argument("tokens_from_senones: min_run must be >= 1");
    std::vector<std::pair<int, int>> runs;  // (token, length)
    for (int s : senones) {
        int tok = sen2tok.at(static_cast<std::size_t>(s));
        if (!runs.empty() && runs.back().first == tok)
            ++runs.back().second;
        else
            runs.emplace_back(tok, 1);
    }
    std::vector<int> out;
    for (auto& [tok, len] : runs) {
        if (len < min_run) continue;
        if (out.empty() || out.back() != tok) out.push_back(tok);
    }
    return out;
}

std::vector<int> decode_tokens(AcousticModel& am, const Generator* gen,
                               const FeatureUtterance& utt,
                               const std::vector<int>& sen2tok, int min_run) {
    if (utt.T == 0) return {};
    return tokens_from_senones(predict_senones(am, gen, utt), sen2tok, min_run);
}

ErrorCounts levenshtein(const std::vector<int>& ref, const std::vector<int>& hyp) {
    std::size_t n = ref.size(), m = hyp.size();
    std::vector<int> dp((n + 1) * (m + 1));
    auto at = [&](std::size_t i, std::size_t j) -> int& { return dp[i * (m + 1) + j]; };
    for (std::size_t i = 0; i <= n; ++i) at(i, 0) = static_cast<int>(i);
    for (std::size_t j = 0; j <= m; ++j) at(0, j) = static_cast<int>(j);
    for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t j = 1; j <= m; ++j) {
            int sub = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
            int del = at(i - 1, j) + 1;
            int ins = at(i, j - 1) + 1;
            at(i, j) = std::min({sub, del, ins});
        }

    ErrorCounts c;
    c.ref_length = static_cast<long long>(n);
    std::size_t i = n, j = m;
    while (i > 0 || j > 0) {
        if (i > 0 && j > 0 &&
            at(i, j) == at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
            if (ref[i - 1] != hyp[j - 1]) ++c.substitutions;
            --i;
            --j;
        } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
            ++c.deletions;
            --i;
        } else {
            ++c.insertions;
            --j;
        }
    }
    return c;
}

double error_rate(const ErrorCounts& c) {
    if (c.ref_length <= 0) throw std::invalid_argument("error_rate: empty reference");
    return static_cast<double>(c.substitutions + c.deletions + c.insertions) /
           static_cast<double>(c.ref_length);
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("pearson: length mismatch");
    std::size_t n = xs.size();
    if (n < 3) throw std::invalid_argument("pearson: need at least 3 points");
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0)
        throw std::invalid_argument("pearson: degenerate variance");
    return sxy / std::sqrt(sxx * syy);
}

double feature_correlation(const Tensor& a, const Tensor& b) {
    if (!a || !b || a->shape.size() != 2 || a->shape != b->shape)
        throw ShapeError("feature_correlation: expected matching F×T matrices");
    int F = a->shape[0], T = a->shape[1];
    if (T == 0) throw std::invalid_argument("feature_correlation: no frames");
    double acc = 0;
    for (int t = 0; t < T; ++t) {
        double dot = 0, na = 0, nb = 0;
        for (int f = 0; f < F; ++f) {
            double x = a->data[static_cast<std::size_t>(f) * T + t];
            double y = b->data[static_cast<std::size_t>(f) * T + t];
            dot += x * y;
            na += x * x;
            nb += y * y;
        }
        if (na < 1e-24 && nb < 1e-24)
            acc += 1.0;
        else if (na < 1e-24 || nb < 1e-24)
            acc += 0.0;
        else
            acc += dot / std::sqrt(na * nb);
    }
    return acc / T;
}

EvalReport evaluate(AcousticModel& am, const Generator* gen,
                    const std::vector<FeatureUtterance>& corpus,
                    const std::vector<int>& sen2tok, int min_run) {
    EvalReport rep;
    long long wrong = 0, frames = 0;
    for (const auto& utt : corpus) {
        auto pred = predict_senones(am, gen, utt);
        UtteranceEval ue;
        ue.utt_id = utt.utt_id;
        long long w = 0;
        for (int t = 0; t < utt.T; ++t)
            if (pred[t] != utt.senone_labels[t]) ++w;
        ue.seer = utt.T > 0 ? static_cast<double>(w) / utt.T : 0.0;
        ue.counts = levenshtein(utt.tokens, tokens_from_senones(pred, sen2tok, min_run));
        rep.counts.insertions += ue.counts.insertions;
        rep.counts.deletions += ue.counts.deletions;
        rep.counts.substitutions += ue.counts.substitutions;
        rep.counts.ref_length += ue.counts.ref_length;
        wrong += w;
        frames += utt.T;
        rep.per_utterance.push_back(std::move(ue));
    }
    if (frames == 0) throw std::invalid_argument("evaluate: empty corpus");
    rep.seer = static_cast<double>(wrong) / static_cast<double>(frames);
    rep.token_error_rate = error_rate(rep.counts);
    return rep;
}

CorrelationResult correlation_study(AcousticModel& am,
                                    const std::vector<const Generator*>& generators,
                                    const std::vector<FeatureUtterance>& corpus,
                                    const std::vector<int>& sen2tok, int min_run) {
    if (generators.size() < 3)
        throw std::invalid_argument("correlation_study: need at least 3 checkpoints");
    CorrelationResult res;
    std::vector<double> xs, ys;
    for (const Generator* gen : generators) {
        EvalReport rep = evaluate(am, gen, corpus, sen2tok, min_run);
        res.rows.push_back({rep.seer, rep.token_error_rate});
        xs.push_back(rep.seer);
        ys.push_back(rep.token_error_rate);
    }
    res.r = pearson(xs, ys);
    return res;
}

void write_report_json(const std::string& path, const EvalReport& rep) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_report_json: cannot open " + path);
    f << "{\n"
      << "  \"seer\": " << rep.seer << ",\n"
      << "  \"token_error_rate\": " << rep.token_error_rate << ",\n"
      << "  \"insertions\": " << rep.counts.insertions << ",\n"
      << "  \"deletions\": " << rep.counts.deletions << ",\n"
      << "  \"substitutions\": " << rep.counts.substitutions << ",\n"
      << "  \"ref_length\": " << rep.counts.ref_length << ",\n"
      << "  \"utterances\": [\n";
    for (std::size_t i = 0; i < rep.per_utterance.size(); ++i) {
        const auto& u = rep.per_utterance[i];
        f << "    {\"utt_id\": \"" << u.utt_id << "\", \"seer\": " << u.seer
          << ", \"insertions\": " << u.counts.insertions
          << ", \"deletions\": " << u.counts.deletions
          << ", \"substitutions\": " << u.counts.substitutions
          << ", \"ref_length\": " << u.counts.ref_length << "}"
          << (i + 1 < rep.per_utterance.size() ? "," : "") << "\n";
    }
    f << "  ]\n}\n";
}

void write_report_csv(const std::string& path, const EvalReport& rep,
                      const std::uint64_t* config_hash) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_report_csv: cannot open " + path);
    if (config_hash) f << "# config_hash " << *config_hash << "\n";
    f << "utt_id,seer,insertions,deletions,substitutions,ref_length\n";
    for (const auto& u : rep.per_utterance)
        f << u.utt_id << "," << u.seer << "," << u.counts.insertions << ","
          << u.counts.deletions << "," << u.counts.substitutions << ","
          << u.counts.ref_length << "\n";
    f << "TOTAL," << rep.seer << "," << rep.counts.insertions << ","
      << rep.counts.deletions << "," << rep.counts.substitutions << ","
      << rep.counts.ref_length << "\n";
}

void write_correlation_csv(const std::string& path, const CorrelationResult& res,
                           const std::uint64_t* config_hash) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_correlation_csv: cannot open " + path);
    if (config_hash) f << "# config_hash " << *config_hash << "\n";
    f << "seer,token_error_rate\n";
    for (const auto& row : res.rows) f << row.seer << "," << row.token_error_rate << "\n";
}

}  // namespace ggan
