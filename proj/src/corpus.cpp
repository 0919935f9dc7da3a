#include "ggan/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace ggan {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::mt19937 make_rng(std::uint64_t seed, std::uint64_t stream) {
    return std::mt19937(static_cast<std::uint32_t>(splitmix64(seed ^ splitmix64(stream))));
}

void validate(const CorpusManifest& m) {
    if (m.V < 2 || m.C < m.V) throw std::invalid_argument("corpus manifest: need C >= V >= 2");
    if (m.F < 1 || m.n_utterances < 1 || m.sigma_emit < 0.0f)
        throw std::invalid_argument("corpus manifest: invalid parameters");
    if (m.min_tokens < 1 || m.max_tokens < m.min_tokens)
        throw std::invalid_argument("corpus manifest: invalid token count range");
}

}  // namespace

CorpusModel derive_corpus_model(const CorpusManifest& m) {
    validate(m);
    CorpusModel model;
    std::mt19937 rng = make_rng(m.seed, 0);
    std::uniform_real_distribution<float> mean_d(-1.0f, 1.0f);
    model.senone_means.resize(static_cast<std::size_t>(m.C) * m.F);
    for (auto& v : model.senone_means) v = mean_d(rng);

    model.token_senones.resize(m.V);
    std::uniform_int_distribution<int> len_d(2, 4);
    for (int v = 0; v < m.V; ++v) {
        int lo = static_cast<int>(static_cast<std::int64_t>(v) * m.C / m.V);
        int hi = static_cast<int>(static_cast<std::int64_t>(v + 1) * m.C / m.V);
        std::uniform_int_distribution<int> pick(lo, hi - 1);
        int len = len_d(rng);
        auto& seq = model.token_senones[v];
        for (int i = 0; i < len; ++i) {
            int s = pick(rng);
            // avoid adjacent duplicates whenever the block allows it
            while (hi - lo > 1 && !seq.empty() && s == seq.back()) s = pick(rng);
            seq.push_back(s);
        }
    }
    return model;
}

std::vector<FeatureUtterance> synth_corpus(const CorpusManifest& m) {
    CorpusModel model = derive_corpus_model(m);
    std::vector<FeatureUtterance> corpus;
    corpus.reserve(m.n_utterances);
    for (int u = 0; u < m.n_utterances; ++u) {
        std::mt19937 rng = make_rng(m.seed, 1000u + static_cast<std::uint64_t>(u));
        FeatureUtterance utt;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "utt-%06d", u);
        utt.utt_id = buf;
        utt.F = m.F;

        std::uniform_int_distribution<int> ntok_d(m.min_tokens, m.max_tokens);
        std::uniform_int_distribution<int> tok_d(0, m.V - 1);
        int n_tok = ntok_d(rng);
        for (int i = 0; i < n_tok; ++i) {
            int t = tok_d(rng);
            // immediate token repeats would merge when decoding collapses
            // duplicates, so they are excluded at generation time
            while (!utt.tokens.empty() && t == utt.tokens.back()) t = tok_d(rng);
            utt.tokens.push_back(t);
        }

        std::uniform_int_distribution<int> seg_d(3, 8);
        std::normal_distribution<float> noise_d(0.0f, m.sigma_emit > 0 ? m.sigma_emit : 1.0f);
        std::vector<std::vector<float>> cols;  // time-major staging
        for (int tok : utt.tokens)
            for (int s : model.token_senones[tok]) {
                int seg = seg_d(rng);
                for (int k = 0; k < seg; ++k) {
                    std::vector<float> col(m.F);
                    for (int f = 0; f < m.F; ++f) {
                        float v = model.senone_means[static_cast<std::size_t>(s) * m.F + f];
                        if (m.sigma_emit > 0) v += noise_d(rng);
                        col[f] = v;
                    }
                    cols.push_back(std::move(col));
                    utt.senone_labels.push_back(s);
                }
            }
        utt.T = static_cast<int>(cols.size());
        utt.frames.resize(static_cast<std::size_t>(m.F) * utt.T);
        for (int t = 0; t < utt.T; ++t)
            for (int f = 0; f < m.F; ++f)
                utt.frames[static_cast<std::size_t>(f) * utt.T + t] = cols[t][f];
        corpus.push_back(std::move(utt));
    }
    return corpus;
}

FeatureUtterance corrupt(const FeatureUtterance& utt, const CorruptionSpec& spec,
                         std::uint64_t seed) {
    if (spec.smooth_window < 1) throw std::invalid_argument("corrupt: smoothing window must be >= 1");
    if (spec.quant_levels == 1) throw std::invalid_argument("corrupt: quantization needs >= 2 levels");
    if (spec.gain_max < spec.gain_min) throw std::invalid_argument("corrupt: bad gain range");
    FeatureUtterance out = utt;
    std::mt19937 rng = make_rng(seed, fnv1a(utt.utt_id));
    float gain = spec.gain_min;
    if (spec.gain_max > spec.gain_min) {
        std::uniform_real_distribution<float> gd(spec.gain_min, spec.gain_max);
        gain = gd(rng);
    }

    int F = utt.F, T = utt.T;
    std::vector<float> work(out.frames.size());
    int half = spec.smooth_window / 2;
    for (int f = 0; f < F; ++f)
        for (int t = 0; t < T; ++t) {
            if (spec.smooth_window == 1) {
                work[static_cast<std::size_t>(f) * T + t] =
                    utt.frames[static_cast<std::size_t>(f) * T + t];
                continue;
            }
            double acc = 0;
            int cnt = 0;
            for (int k = t - half; k <= t + (spec.smooth_window - 1 - half); ++k)
                if (k >= 0 && k < T) {
                    acc += utt.frames[static_cast<std::size_t>(f) * T + k];
                    ++cnt;
                }
            work[static_cast<std::size_t>(f) * T + t] = static_cast<float>(acc / cnt);
        }

    if (spec.quant_levels >= 2) {
        float lo = work[0], hi = work[0];
        for (float v : work) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi > lo) {
            float step = (hi - lo) / (spec.quant_levels - 1);
            for (auto& v : work)
                v = lo + std::round((v - lo) / step) * step;
        }
    }

    std::normal_distribution<float> nd(0.0f, spec.noise_sigma > 0 ? spec.noise_sigma : 1.0f);
    for (auto& v : work) {
        v *= gain;
        if (spec.noise_sigma > 0) v += nd(rng);
    }
    out.frames = std::move(work);
    return out;
}

FeatureUtterance mtr_perturb(const FeatureUtterance& utt, const PerturbSpec& spec,
                             PerturbKind kind, int utt_index) {
    FeatureUtterance out = utt;
    if (kind == PerturbKind::Speed || kind == PerturbKind::Both) {
        if (spec.speed_factors.empty()) throw std::invalid_argument("mtr_perturb: no speed factors");
        float factor = spec.speed_factors[static_cast<std::size_t>(utt_index) %
                                          spec.speed_factors.size()];
        if (factor <= 0.0f) throw std::invalid_argument("mtr_perturb: factor must be positive");
        int T = out.T;
        int T2 = static_cast<int>(std::lround(static_cast<double>(T) / factor));
        if (T2 < 2) throw std::invalid_argument("mtr_perturb: resampled utterance too short");
        std::vector<float> frames(static_cast<std::size_t>(out.F) * T2);
        std::vector<int> labels(T2);
        for (int t2 = 0; t2 < T2; ++t2) {
            double p = T2 > 1 ? static_cast<double>(t2) * (T - 1) / (T2 - 1) : 0.0;
            int i0 = static_cast<int>(p);
            int i1 = std::min(i0 + 1, T - 1);
            double w1 = p - i0;
            for (int f = 0; f < out.F; ++f)
                frames[static_cast<std::size_t>(f) * T2 + t2] = static_cast<float>(
                    (1.0 - w1) * out.frames[static_cast<std::size_t>(f) * T + i0] +
                    w1 * out.frames[static_cast<std::size_t>(f) * T + i1]);
            labels[t2] = out.senone_labels[static_cast<std::size_t>(std::lround(p))];
        }
        out.frames = std::move(frames);
        out.senone_labels = std::move(labels);
        out.T = T2;
    }
    if (kind == PerturbKind::Volume || kind == PerturbKind::Both) {
        if (spec.volume_factors.empty())
            throw std::invalid_argument("mtr_perturb: no volume factors");
        float factor = spec.volume_factors[static_cast<std::size_t>(utt_index) %
                                           spec.volume_factors.size()];
        if (factor <= 0.0f) throw std::invalid_argument("mtr_perturb: factor must be positive");
        for (auto& v : out.frames) v *= factor;
    }
    return out;
}

Tensor context_window(const Tensor& frames, int radius) {
    if (!frames || frames->shape.size() != 2)
        throw ShapeError("context_window: expected an F×T matrix");
    int F = frames->shape[0], T = frames->shape[1];
    int S = 2 * radius + 1;
    std::vector<float> out(static_cast<std::size_t>(S) * F * T);
    for (int j = 0; j < S; ++j)
        for (int f = 0; f < F; ++f)
            for (int t = 0; t < T; ++t) {
                int src = std::clamp(t + j - radius, 0, T - 1);
                out[(static_cast<std::size_t>(j) * F + f) * T + t] =
                    frames->data[static_cast<std::size_t>(f) * T + src];
            }
    return make_tensor({S * F, T}, std::move(out));
}

std::vector<Chunk> chunk(const FeatureUtterance& utt, int W, int hop) {
    if (W < 1 || hop < 1) throw std::invalid_argument("chunk: W and hop must be positive");
    std::vector<Chunk> out;
    for (int s = 0; s + W <= utt.T; s += hop) {
        Chunk c;
        c.start = s;
        std::vector<float> data(static_cast<std::size_t>(utt.F) * W);
        for (int f = 0; f < utt.F; ++f)
            for (int t = 0; t < W; ++t)
                data[static_cast<std::size_t>(f) * W + t] =
                    utt.frames[static_cast<std::size_t>(f) * utt.T + s + t];
        c.frames = make_tensor({utt.F, W}, std::move(data));
        c.labels.assign(utt.senone_labels.begin() + s, utt.senone_labels.begin() + s + W);
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<std::vector<int>> partition_by_hours(const std::vector<FeatureUtterance>& corpus,
                                                 const std::vector<double>& hours,
                                                 std::int64_t frames_per_hour,
                                                 std::uint64_t seed) {
    std::vector<int> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::mt19937 rng = make_rng(seed, 42);
    std::shuffle(order.begin(), order.end(), rng);

    std::int64_t total = 0;
    for (auto& u : corpus) total += u.T;

    std::vector<std::vector<int>> out;
    for (double h : hours) {
        std::int64_t budget = static_cast<std::int64_t>(h * frames_per_hour);
        if (budget > total)
            throw std::invalid_argument("partition_by_hours: request exceeds corpus size");
        std::vector<int> part;
        std::int64_t cum = 0;
        for (int idx : order) {
            if (cum >= budget) break;
            part.push_back(idx);
            cum += corpus[idx].T;
        }
        out.push_back(std::move(part));
    }
    return out;
}

// ---- serialization ------------------------------------------------------

namespace {

template <typename T>
void write_pod(std::ofstream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T read_pod(std::ifstream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

}  // namespace

void save_utterance(const std::string& path, const FeatureUtterance& utt, int C) {
    if (C > 65535) throw std::invalid_argument("save_utterance: senone count exceeds uint16");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_utterance: cannot open " + path);
    write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(utt.utt_id.size()));
    f.write(utt.utt_id.data(), static_cast<std::streamsize>(utt.utt_id.size()));
    write_pod<std::int32_t>(f, utt.F);
    write_pod<std::int32_t>(f, utt.T);
    write_pod<std::int32_t>(f, C);
    f.write(reinterpret_cast<const char*>(utt.frames.data()),
            static_cast<std::streamsize>(utt.frames.size() * sizeof(float)));
    for (int lab : utt.senone_labels) write_pod<std::uint16_t>(f, static_cast<std::uint16_t>(lab));
    write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(utt.tokens.size()));
    for (int tok : utt.tokens) write_pod<std::uint16_t>(f, static_cast<std::uint16_t>(tok));
    if (!f) throw std::runtime_error("save_utterance: write failed for " + path);
}

FeatureUtterance load_utterance(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_utterance: cannot open " + path);
    FeatureUtterance utt;
    auto idlen = read_pod<std::uint32_t>(f);
    utt.utt_id.resize(idlen);
    f.read(utt.utt_id.data(), idlen);
    utt.F = read_pod<std::int32_t>(f);
    utt.T = read_pod<std::int32_t>(f);
    read_pod<std::int32_t>(f);  // C, not stored on the struct
    if (!f || utt.F < 1 || utt.T < 1)
        throw std::runtime_error("load_utterance: corrupt header in " + path);
    utt.frames.resize(static_cast<std::size_t>(utt.F) * utt.T);
    f.read(reinterpret_cast<char*>(utt.frames.data()),
           static_cast<std::streamsize>(utt.frames.size() * sizeof(float)));
    utt.senone_labels.resize(utt.T);
    for (auto& lab : utt.senone_labels) lab = read_pod<std::uint16_t>(f);
    auto ntok = read_pod<std::uint32_t>(f);
    utt.tokens.resize(ntok);
    for (auto& tok : utt.tokens) tok = read_pod<std::uint16_t>(f);
    if (!f) throw std::runtime_error("load_utterance: truncated file " + path);
    return utt;
}

void save_corpus(const std::string& dir, const CorpusManifest& m,
                 const std::vector<FeatureUtterance>& utts) {
    std::filesystem::create_directories(dir);
    std::ofstream mf(dir + "/manifest.txt");
    if (!mf) throw std::runtime_error("save_corpus: cannot write manifest in " + dir);
    mf << "seed=" << m.seed << "\n"
       << "n_utterances=" << m.n_utterances << "\n"
       << "F=" << m.F << "\n"
       << "C=" << m.C << "\n"
       << "V=" << m.V << "\n"
       << "frames_per_hour=" << m.frames_per_hour << "\n"
       << "sigma_emit=" << m.sigma_emit << "\n"
       << "min_tokens=" << m.min_tokens << "\n"
       << "max_tokens=" << m.max_tokens << "\n";
    std::ofstream idx(dir + "/utts.txt");
    for (auto& utt : utts) {
        idx << utt.utt_id << "\n";
        save_utterance(dir + "/" + utt.utt_id + ".bin", utt, m.C);
    }
}

std::vector<FeatureUtterance> load_corpus_dir(const std::string& dir) {
    std::ifstream idx(dir + "/utts.txt");
    if (!idx) throw std::runtime_error("load_corpus_dir: cannot open " + dir + "/utts.txt");
    std::vector<FeatureUtterance> utts;
    std::string id;
    while (std::getline(idx, id))
        if (!id.empty()) utts.push_back(load_utterance(dir + "/" + id + ".bin"));
    return utts;
}

CorpusManifest load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_manifest: cannot open " + path);
    CorpusManifest m;
    std::string line;
    while (std::getline(f, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        if (key == "seed") m.seed = std::stoull(val);
        else if (key == "n_utterances") m.n_utterances = std::stoi(val);
        else if (key == "F") m.F = std::stoi(val);
        else if (key == "C") m.C = std::stoi(val);
        else if (key == "V") m.V = std::stoi(val);
        else if (key == "frames_per_hour") m.frames_per_hour = std::stoll(val);
        else if (key == "sigma_emit") m.sigma_emit = std::stof(val);
        else if (key == "min_tokens") m.min_tokens = std::stoi(val);
        else if (key == "max_tokens") m.max_tokens = std::stoi(val);
        else throw std::runtime_error("load_manifest: unknown key " + key);
    }
    return m;
}

std::vector<FeatureUtterance> load_corpus(const std::string& dir, const CorpusManifest& m) {
    std::vector<FeatureUtterance> utts;
    utts.reserve(m.n_utterances);
    for (int u = 0; u < m.n_utterances; ++u) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "utt-%06d", u);
        utts.push_back(load_utterance(dir + "/" + buf + ".bin"));
    }
    return utts;
}

void export_frames_csv(const std::string& path,
                       const std::vector<const FeatureUtterance*>& utts) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("export_frames_csv: cannot open " + path);
    f << "utt_id,feature,values...\n";
    for (auto* utt : utts)
        for (int d = 0; d < utt->F; ++d) {
            f << utt->utt_id << "," << d;
            for (int t = 0; t < utt->T; ++t)
                f << "," << utt->frames[static_cast<std::size_t>(d) * utt->T + t];
            f << "\n";
        }
}

}  // namespace ggan
