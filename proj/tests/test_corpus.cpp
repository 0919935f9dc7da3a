#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "ggan/corpus.hpp"

using namespace ggan;

namespace {

CorpusManifest small_manifest() {
    CorpusManifest m;
    m.seed = 7;
    m.n_utterances = 20;
    m.F = 8;
    m.C = 24;
    m.V = 6;
    return m;
}

FeatureUtterance ramp_utterance(int F, int T) {
    FeatureUtterance u;
    u.utt_id = "ramp";
    u.F = F;
    u.T = T;
    u.frames.resize(static_cast<std::size_t>(F) * T);
    for (int f = 0; f < F; ++f)
        for (int t = 0; t < T; ++t)
            u.frames[static_cast<std::size_t>(f) * T + t] = static_cast<float>(f * 100 + t);
    u.senone_labels.resize(T);
    for (int t = 0; t < T; ++t) u.senone_labels[t] = t % 5;
    u.tokens = {1, 2, 3};
    return u;
}

}  // namespace

TEST_CASE("synthesis is deterministic in the manifest") {
    auto m = small_manifest();
    auto a = synth_corpus(m);
    auto b = synth_corpus(m);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].utt_id == b[i].utt_id);
        CHECK(a[i].T == b[i].T);
        CHECK(a[i].frames == b[i].frames);
        CHECK(a[i].senone_labels == b[i].senone_labels);
        CHECK(a[i].tokens == b[i].tokens);
    }

    m.seed = 8;
    auto c = synth_corpus(m);
    CHECK(c[0].frames != a[0].frames);
}

TEST_CASE("zero emission noise reproduces the senone means exactly") {
    auto m = small_manifest();
    m.sigma_emit = 0.0f;
    auto model = derive_corpus_model(m);
    auto corpus = synth_corpus(m);
    for (auto& utt : corpus)
        for (int t = 0; t < utt.T; ++t) {
            int s = utt.senone_labels[t];
            for (int f = 0; f < utt.F; ++f)
                CHECK(utt.frames[static_cast<std::size_t>(f) * utt.T + t] ==
                      model.senone_means[static_cast<std::size_t>(s) * m.F + f]);
        }
}

TEST_CASE("noisy frames average back to the class means") {
    auto m = small_manifest();
    m.n_utterances = 200;
    m.sigma_emit = 0.25f;
    auto model = derive_corpus_model(m);
    auto corpus = synth_corpus(m);

    std::vector<double> sums(static_cast<std::size_t>(m.C) * m.F, 0.0);
    std::vector<int> counts(m.C, 0);
    for (auto& utt : corpus)
        for (int t = 0; t < utt.T; ++t) {
            int s = utt.senone_labels[t];
            ++counts[s];
            for (int f = 0; f < m.F; ++f)
                sums[static_cast<std::size_t>(s) * m.F + f] +=
                    utt.frames[static_cast<std::size_t>(f) * utt.T + t];
        }
    int seen = 0;
    for (int s = 0; s < m.C; ++s) {
        if (counts[s] < 100) continue;
        ++seen;
        double tol = 3.0 * m.sigma_emit / std::sqrt(static_cast<double>(counts[s]));
        for (int f = 0; f < m.F; ++f) {
            double mean = sums[static_cast<std::size_t>(s) * m.F + f] / counts[s];
            CHECK(std::abs(mean - model.senone_means[static_cast<std::size_t>(s) * m.F + f]) <
                  tol * 1.5);
        }
    }
    CHECK(seen >= m.V);  // every token spells 2-4 senones, so coverage is partial
}

TEST_CASE("utterance structure matches the token model") {
    auto m = small_manifest();
    auto model = derive_corpus_model(m);
    auto corpus = synth_corpus(m);
    REQUIRE(static_cast<int>(corpus.size()) == m.n_utterances);

    // token sequences expand to the recorded per-frame labels with segment
    // lengths in [3, 8], and tokens never repeat back to back
    for (auto& utt : corpus) {
        REQUIRE(static_cast<int>(utt.tokens.size()) >= m.min_tokens);
        REQUIRE(static_cast<int>(utt.tokens.size()) <= m.max_tokens);
        for (std::size_t i = 1; i < utt.tokens.size(); ++i)
            CHECK(utt.tokens[i] != utt.tokens[i - 1]);

        std::size_t t = 0;
        for (int tok : utt.tokens)
            for (int s : model.token_senones[tok]) {
                int run = 0;
                while (t < utt.senone_labels.size() && utt.senone_labels[t] == s &&
                       run < 8) {
                    ++t;
                    ++run;
                    // stop at segment end: a following frame of the same senone
                    // only continues this run while run < 3 is impossible to
                    // distinguish, so rely on minimum length then greedy match
                }
                CHECK(run >= 3);
            }
    }

    // senone blocks are disjoint across tokens
    std::set<int> used;
    for (int v = 0; v < m.V; ++v) {
        auto& seq = model.token_senones[v];
        REQUIRE(seq.size() >= 2);
        REQUIRE(seq.size() <= 4);
        int lo = v * m.C / m.V, hi = (v + 1) * m.C / m.V;
        for (int s : seq) {
            CHECK(s >= lo);
            CHECK(s < hi);
            used.insert(s * 1000 + v);
        }
    }
}

TEST_CASE("corruption identity settings return the input bit for bit") {
    auto u = ramp_utterance(3, 17);
    CorruptionSpec spec;
    spec.smooth_window = 1;
    spec.quant_levels = 0;
    spec.noise_sigma = 0.0f;
    spec.gain_min = spec.gain_max = 1.0f;
    auto v = corrupt(u, spec, 99);
    CHECK(v.frames == u.frames);
    CHECK(v.senone_labels == u.senone_labels);
    CHECK(v.tokens == u.tokens);
}

TEST_CASE("moving average and edge handling") {
    FeatureUtterance u;
    u.utt_id = "ma";
    u.F = 1;
    u.T = 3;
    u.frames = {0.0f, 3.0f, 0.0f};
    u.senone_labels = {0, 0, 0};
    u.tokens = {0};
    CorruptionSpec spec;
    spec.smooth_window = 3;
    spec.quant_levels = 0;
    spec.noise_sigma = 0.0f;
    spec.gain_min = spec.gain_max = 1.0f;
    auto v = corrupt(u, spec, 1);
    // edges average the two in-range values, the center all three
    CHECK(v.frames[0] == doctest::Approx(1.5).epsilon(1e-6));
    CHECK(v.frames[1] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(v.frames[2] == doctest::Approx(1.5).epsilon(1e-6));
}

TEST_CASE("quantization snaps to k levels over the utterance range") {
    FeatureUtterance u;
    u.utt_id = "q";
    u.F = 1;
    u.T = 5;
    u.frames = {0.0f, 0.1f, 0.45f, 0.8f, 1.0f};
    u.senone_labels = {0, 0, 0, 0, 0};
    u.tokens = {0};
    CorruptionSpec spec;
    spec.smooth_window = 1;
    spec.quant_levels = 3;  // levels 0, 0.5, 1
    spec.noise_sigma = 0.0f;
    spec.gain_min = spec.gain_max = 1.0f;
    auto v = corrupt(u, spec, 1);
    CHECK(v.frames[0] == doctest::Approx(0.0));
    CHECK(v.frames[1] == doctest::Approx(0.0));
    CHECK(v.frames[2] == doctest::Approx(0.5));
    CHECK(v.frames[3] == doctest::Approx(1.0));
    CHECK(v.frames[4] == doctest::Approx(1.0));

    std::set<float> levels;
    CorruptionSpec wide = spec;
    wide.quant_levels = 4;
    auto w = corrupt(ramp_utterance(2, 40), wide, 5);
    for (float x : w.frames) levels.insert(x);
    CHECK(levels.size() <= 4u * 1);  // same range per utterance, so at most k values
}

TEST_CASE("corruption is deterministic and seed sensitive") {
    auto u = ramp_utterance(4, 30);
    CorruptionSpec spec;  // defaults: smoothing, quantization, noise, gain all on
    auto a = corrupt(u, spec, 11);
    auto b = corrupt(u, spec, 11);
    auto c = corrupt(u, spec, 12);
    CHECK(a.frames == b.frames);
    CHECK(a.frames != c.frames);
    CHECK(a.frames != u.frames);
    CHECK(a.senone_labels == u.senone_labels);
    CHECK(a.tokens == u.tokens);
}

TEST_CASE("speed perturbation changes length as round(T / factor)") {
    auto u = ramp_utterance(2, 100);
    PerturbSpec spec;
    spec.speed_factors = {1.1f};
    auto fast = mtr_perturb(u, spec, PerturbKind::Speed, 0);
    CHECK(fast.T == 91);
    CHECK(static_cast<int>(fast.senone_labels.size()) == 91);
    spec.speed_factors = {0.9f};
    auto slow = mtr_perturb(u, spec, PerturbKind::Speed, 0);
    CHECK(slow.T == 111);

    // endpoints are preserved by the resampler
    for (int f = 0; f < 2; ++f) {
        CHECK(fast.frames[static_cast<std::size_t>(f) * 91] ==
              doctest::Approx(u.frames[static_cast<std::size_t>(f) * 100]));
        CHECK(fast.frames[static_cast<std::size_t>(f) * 91 + 90] ==
              doctest::Approx(u.frames[static_cast<std::size_t>(f) * 100 + 99]));
    }

    spec.speed_factors = {1.0f};
    auto same = mtr_perturb(u, spec, PerturbKind::Speed, 0);
    CHECK(same.T == 100);
    for (std::size_t i = 0; i < u.frames.size(); ++i)
        CHECK(same.frames[i] == doctest::Approx(u.frames[i]).epsilon(1e-6));
    CHECK(same.senone_labels == u.senone_labels);
}

TEST_CASE("volume perturbation scales frames exactly and leaves labels alone") {
    auto u = ramp_utterance(3, 20);
    PerturbSpec spec;
    spec.volume_factors = {1.25f};
    auto v = mtr_perturb(u, spec, PerturbKind::Volume, 0);
    CHECK(v.T == u.T);
    CHECK(v.senone_labels == u.senone_labels);
    CHECK(v.tokens == u.tokens);
    for (std::size_t i = 0; i < u.frames.size(); ++i)
        CHECK(v.frames[i] == u.frames[i] * 1.25f);
}

TEST_CASE("perturbation factors alternate by utterance index") {
    auto u = ramp_utterance(1, 50);
    PerturbSpec spec;  // defaults 0.9/1.1 and 0.8/1.2
    CHECK(mtr_perturb(u, spec, PerturbKind::Speed, 0).T == 56);
    CHECK(mtr_perturb(u, spec, PerturbKind::Speed, 1).T == 45);
    CHECK(mtr_perturb(u, spec, PerturbKind::Speed, 2).T == 56);
    auto both = mtr_perturb(u, spec, PerturbKind::Both, 1);
    CHECK(both.T == 45);
    CHECK(both.frames[0] == doctest::Approx(u.frames[0] * 1.2f));

    FeatureUtterance tiny = ramp_utterance(1, 2);
    spec.speed_factors = {2.0f};
    CHECK_THROWS_AS(mtr_perturb(tiny, spec, PerturbKind::Speed, 0),
                    std::invalid_argument);
}

TEST_CASE("context window clamps at the edges") {
    auto x = make_tensor({2, 1}, {3.0f, 4.0f});
    auto w = context_window(x, 2);
    REQUIRE(w->shape == std::vector<int>{10, 1});
    for (int j = 0; j < 5; ++j) {
        CHECK(w->data[static_cast<std::size_t>(j) * 2 + 0] == 3.0f);
        CHECK(w->data[static_cast<std::size_t>(j) * 2 + 1] == 4.0f);
    }

    // interior columns splice the true neighbours; the centre slot is the frame itself
    int F = 3, T = 9, r = 2;
    std::vector<float> data(static_cast<std::size_t>(F) * T);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(i);
    auto frames = make_tensor({F, T}, data);
    auto ctx = context_window(frames, r);
    REQUIRE(ctx->shape == std::vector<int>{(2 * r + 1) * F, T});
    for (int t = 0; t < T; ++t)
        for (int j = -r; j <= r; ++j)
            for (int f = 0; f < F; ++f) {
                int src = std::clamp(t + j, 0, T - 1);
                CHECK(ctx->data[static_cast<std::size_t>((j + r) * F + f) * T + t] ==
                      data[static_cast<std::size_t>(f) * T + src]);
            }
}

TEST_CASE("chunking window count and contents") {
    auto u = ramp_utterance(2, 10);
    auto one = chunk(u, 10, 10);
    REQUIRE(one.size() == 1u);
    CHECK(one[0].start == 0);
    CHECK(one[0].frames->shape == std::vector<int>{2, 10});
    for (int f = 0; f < 2; ++f)
        for (int t = 0; t < 10; ++t)
            CHECK(one[0].frames->data[static_cast<std::size_t>(f) * 10 + t] ==
                  u.frames[static_cast<std::size_t>(f) * 10 + t]);

    auto u2 = ramp_utterance(2, 20);
    auto two = chunk(u2, 10, 10);
    REQUIRE(two.size() == 2u);
    CHECK(two[1].start == 10);
    CHECK(two[1].labels == std::vector<int>(u2.senone_labels.begin() + 10,
                                            u2.senone_labels.end()));

    for (int T : {7, 16, 33, 64})
        for (int W : {4, 8})
            for (int hop : {2, 4, 8}) {
                auto v = chunk(ramp_utterance(1, T), W, hop);
                int expect = T >= W ? (T - W) / hop + 1 : 0;
                CHECK(static_cast<int>(v.size()) == expect);
            }

    CHECK(chunk(ramp_utterance(1, 5), 8, 4).empty());
}

TEST_CASE("hour partitions nest and land within one utterance of the budget") {
    auto m = small_manifest();
    m.n_utterances = 60;
    auto corpus = synth_corpus(m);
    std::int64_t total = 0;
    int max_T = 0;
    for (auto& u : corpus) {
        total += u.T;
        max_T = std::max(max_T, u.T);
    }

    std::int64_t fph = 200;  // shrink the hour so the toy corpus covers several
    std::vector<double> hours = {0.5, 1.0, 2.0};
    auto parts = partition_by_hours(corpus, hours, fph, 3);
    REQUIRE(parts.size() == 3u);
    for (std::size_t i = 0; i < parts.size(); ++i) {
        std::int64_t budget = static_cast<std::int64_t>(hours[i] * fph);
        std::int64_t got = 0;
        for (int idx : parts[i]) got += corpus[idx].T;
        CHECK(got >= budget);
        CHECK(got < budget + max_T);
    }
    // prefix nesting
    for (std::size_t i = 1; i < parts.size(); ++i) {
        REQUIRE(parts[i - 1].size() <= parts[i].size());
        for (std::size_t k = 0; k < parts[i - 1].size(); ++k)
            CHECK(parts[i - 1][k] == parts[i][k]);
    }

    auto again = partition_by_hours(corpus, hours, fph, 3);
    CHECK(again == parts);
    auto other = partition_by_hours(corpus, hours, fph, 4);
    CHECK(other[2] != parts[2]);

    CHECK_THROWS_AS(
        partition_by_hours(corpus, {static_cast<double>(total) / fph + 1.0}, fph, 3),
        std::invalid_argument);
}

TEST_CASE("corpus serialization round trips bit for bit") {
    auto m = small_manifest();
    m.n_utterances = 5;
    auto corpus = synth_corpus(m);
    std::string dir = "corpus_io_test";
    save_corpus(dir, m, corpus);

    auto m2 = load_manifest(dir + "/manifest.txt");
    CHECK(m2.seed == m.seed);
    CHECK(m2.n_utterances == m.n_utterances);
    CHECK(m2.F == m.F);
    CHECK(m2.C == m.C);
    CHECK(m2.V == m.V);
    CHECK(m2.sigma_emit == m.sigma_emit);

    auto loaded = load_corpus(dir, m2);
    REQUIRE(loaded.size() == corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        CHECK(loaded[i].utt_id == corpus[i].utt_id);
        CHECK(loaded[i].F == corpus[i].F);
        CHECK(loaded[i].T == corpus[i].T);
        CHECK(loaded[i].frames == corpus[i].frames);
        CHECK(loaded[i].senone_labels == corpus[i].senone_labels);
        CHECK(loaded[i].tokens == corpus[i].tokens);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("csv export writes one row per feature dimension") {
    auto u = ramp_utterance(2, 3);
    export_frames_csv("frames_test.csv", {&u});
    std::ifstream f("frames_test.csv");
    std::string line;
    std::getline(f, line);  // header
    std::getline(f, line);
    CHECK(line == "ramp,0,0,1,2");
    std::getline(f, line);
    CHECK(line == "ramp,1,100,101,102");
    f.close();
    std::filesystem::remove("frames_test.csv");
}
