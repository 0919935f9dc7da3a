#include "ggan/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "ggan/checkpoint.hpp"

namespace ggan {

namespace {

std::string fmt(float v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    return buf;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

template <typename T, typename F>
std::string join(const std::vector<T>& v, F&& f) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += " ";
        out += f(v[i]);
    }
    return out;
}

const char* kind_name(PerturbKind k) {
    switch (k) {
        case PerturbKind::Speed: return "s";
        case PerturbKind::Volume: return "v";
        case PerturbKind::Both: return "sv";
    }
    return "s";
}

PerturbKind parse_kind(const std::string& s) {
    if (s == "s") return PerturbKind::Speed;
    if (s == "v") return PerturbKind::Volume;
    if (s == "sv") return PerturbKind::Both;
    throw ConfigError("config: unknown perturbation set '" + s + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& s, T (*conv)(const std::string&)) {
    std::istringstream in(s);
    std::vector<T> out;
    std::string w;
    while (in >> w) out.push_back(conv(w));
    return out;
}

int to_int(const std::string& s) { return std::stoi(s); }
float to_float(const std::string& s) { return std::stof(s); }
double to_double(const std::string& s) { return std::stod(s); }
std::uint64_t to_u64(const std::string& s) { return std::stoull(s); }

std::string trim(const std::string& s) {
    auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

std::string serialize_config(const ExperimentConfig& c) {
    std::ostringstream o;
    o << "[corpus]\n"
      << "seed = " << c.corpus.seed << "\n"
      << "n_utterances = " << c.corpus.n_utterances << "\n"
      << "F = " << c.corpus.F << "\n"
      << "C = " << c.corpus.C << "\n"
      << "V = " << c.corpus.V << "\n"
      << "frames_per_hour = " << c.corpus.frames_per_hour << "\n"
      << "sigma_emit = " << fmt(c.corpus.sigma_emit) << "\n"
      << "min_tokens = " << c.corpus.min_tokens << "\n"
      << "max_tokens = " << c.corpus.max_tokens << "\n";
    o << "[corruption]\n"
      << "smooth_window = " << c.corruption.smooth_window << "\n"
      << "quant_levels = " << c.corruption.quant_levels << "\n"
      << "noise_sigma = " << fmt(c.corruption.noise_sigma) << "\n"
      << "gain_min = " << fmt(c.corruption.gain_min) << "\n"
      << "gain_max = " << fmt(c.corruption.gain_max) << "\n";
    o << "[perturb]\n"
      << "speed_factors = " << join(c.perturb.speed_factors, [](float v) { return fmt(v); })
      << "\n"
      << "volume_factors = " << join(c.perturb.volume_factors, [](float v) { return fmt(v); })
      << "\n";
    o << "[am]\n"
      << "F = " << c.am_model.F << "\n"
      << "C = " << c.am_model.C << "\n"
      << "hidden_layers = " << c.am_model.hidden_layers << "\n"
      << "hidden_units = " << c.am_model.hidden_units << "\n"
      << "context_radius = " << c.am_model.context_radius << "\n"
      << "dropout = " << fmt(c.am_model.dropout) << "\n";
    o << "[am-train]\n"
      << "batch_size = " << c.am_train.batch_size << "\n"
      << "lr = " << fmt(c.am_train.lr) << "\n"
      << "max_epochs = " << c.am_train.max_epochs << "\n"
      << "plateau_threshold = " << fmt(c.am_train.plateau_threshold) << "\n"
      << "patience = " << c.am_train.patience << "\n"
      << "seed = " << c.am_train.seed << "\n";
    o << "[gan]\n"
      << "family = " << loss_family_name(c.gan.family) << "\n"
      << "lambda = " << fmt(c.gan.lambda) << "\n"
      << "lambda_gp = " << fmt(c.gan.lambda_gp) << "\n"
      << "lr_g = " << fmt(c.gan.lr_g) << "\n"
      << "lr_d = " << fmt(c.gan.lr_d) << "\n"
      << "batch_size = " << c.gan.batch_size << "\n"
      << "max_epochs = " << c.gan.max_epochs << "\n"
      << "patience = " << c.gan.patience << "\n"
      << "seed = " << c.gan.seed << "\n"
      << "eval_every = " << c.gan.eval_every << "\n"
      << "chunk_w = " << c.gan.chunk_w << "\n"
      << "chunk_hop = " << c.gan.chunk_hop << "\n";
    o << "[generator]\n"
      << "kind = "
      << (c.generator.kind == GeneratorSpec::Kind::FullyConvolutional ? "fc" : "ed") << "\n"
      << "F = " << c.generator.F << "\n"
      << "channels = " << join(c.generator.channels, [](int v) { return std::to_string(v); })
      << "\n";
    o << "[discriminator]\n"
      << "kind = " << (c.discriminator.kind == DiscriminatorSpec::Kind::Large ? "large"
                                                                              : "compact")
      << "\n"
      << "F = " << c.discriminator.F << "\n"
      << "W = " << c.discriminator.W << "\n"
      << "channels = "
      << join(c.discriminator.channels, [](int v) { return std::to_string(v); }) << "\n";
    o << "[grid]\n"
      << "batch_sizes = " << join(c.grid.batch_sizes, [](int v) { return std::to_string(v); })
      << "\n"
      << "lrs_g = " << join(c.grid.lrs_g, [](float v) { return fmt(v); }) << "\n"
      << "lrs_d = " << join(c.grid.lrs_d, [](float v) { return fmt(v); }) << "\n"
      << "lambdas = " << join(c.grid.lambdas, [](float v) { return fmt(v); }) << "\n"
      << "short_epochs = " << c.grid.short_epochs << "\n";
    o << "[run]\n"
      << "out_dir = " << c.out_dir << "\n"
      << "seeds = " << join(c.seeds, [](std::uint64_t v) { return std::to_string(v); }) << "\n"
      << "hours = " << join(c.hours, [](double v) { return fmt(v); }) << "\n"
      << "n_dev_utterances = " << c.n_dev_utterances << "\n"
      << "n_test_utterances = " << c.n_test_utterances << "\n"
      << "mtr_sets = "
      << join(c.mtr_sets, [](PerturbKind k) { return std::string(kind_name(k)); }) << "\n";
    return o.str();
}

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig c;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": malformed section header");
            section = line.substr(1, line.size() - 2);
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        try {
            if (section == "corpus") {
                if (key == "seed") c.corpus.seed = to_u64(val);
                else if (key == "n_utterances") c.corpus.n_utterances = to_int(val);
                else if (key == "F") c.corpus.F = to_int(val);
                else if (key == "C") c.corpus.C = to_int(val);
                else if (key == "V") c.corpus.V = to_int(val);
                else if (key == "frames_per_hour") c.corpus.frames_per_hour = std::stoll(val);
                else if (key == "sigma_emit") c.corpus.sigma_emit = to_float(val);
                else if (key == "min_tokens") c.corpus.min_tokens = to_int(val);
                else if (key == "max_tokens") c.corpus.max_tokens = to_int(val);
                else throw ConfigError("");
            } else if (section == "corruption") {
                if (key == "smooth_window") c.corruption.smooth_window = to_int(val);
                else if (key == "quant_levels") c.corruption.quant_levels = to_int(val);
                else if (key == "noise_sigma") c.corruption.noise_sigma = to_float(val);
                else if (key == "gain_min") c.corruption.gain_min = to_float(val);
                else if (key == "gain_max") c.corruption.gain_max = to_float(val);
                else throw ConfigError("");
            } else if (section == "perturb") {
                if (key == "speed_factors")
                    c.perturb.speed_factors = parse_list<float>(val, to_float);
                else if (key == "volume_factors")
                    c.perturb.volume_factors = parse_list<float>(val, to_float);
                else throw ConfigError("");
            } else if (section == "am") {
                if (key == "F") c.am_model.F = to_int(val);
                else if (key == "C") c.am_model.C = to_int(val);
                else if (key == "hidden_layers") c.am_model.hidden_layers = to_int(val);
                else if (key == "hidden_units") c.am_model.hidden_units = to_int(val);
                else if (key == "context_radius") c.am_model.context_radius = to_int(val);
                else if (key == "dropout") c.am_model.dropout = to_float(val);
                else throw ConfigError("");
            } else if (section == "am-train") {
                if (key == "batch_size") c.am_train.batch_size = to_int(val);
                else if (key == "lr") c.am_train.lr = to_float(val);
                else if (key == "max_epochs") c.am_train.max_epochs = to_int(val);
                else if (key == "plateau_threshold") c.am_train.plateau_threshold = to_float(val);
                else if (key == "patience") c.am_train.patience = to_int(val);
                else if (key == "seed") c.am_train.seed = to_u64(val);
                else throw ConfigError("");
            } else if (section == "gan") {
                if (key == "family") c.gan.family = parse_loss_family(val);
                else if (key == "lambda") c.gan.lambda = to_float(val);
                else if (key == "lambda_gp") c.gan.lambda_gp = to_float(val);
                else if (key == "lr_g") c.gan.lr_g = to_float(val);
                else if (key == "lr_d") c.gan.lr_d = to_float(val);
                else if (key == "batch_size") c.gan.batch_size = to_int(val);
                else if (key == "max_epochs") c.gan.max_epochs = to_int(val);
                else if (key == "patience") c.gan.patience = to_int(val);
                else if (key == "seed") c.gan.seed = to_u64(val);
                else if (key == "eval_every") c.gan.eval_every = to_int(val);
                else if (key == "chunk_w") c.gan.chunk_w = to_int(val);
                else if (key == "chunk_hop") c.gan.chunk_hop = to_int(val);
                else throw ConfigError("");
            } else if (section == "generator") {
                if (key == "kind")
                    c.generator.kind = val == "fc" ? GeneratorSpec::Kind::FullyConvolutional
                                      : val == "ed" ? GeneratorSpec::Kind::EncoderDecoder
                                                    : throw ConfigError("config: unknown generator kind '" + val + "'");
                else if (key == "F") c.generator.F = to_int(val);
                else if (key == "channels") c.generator.channels = parse_list<int>(val, to_int);
                else throw ConfigError("");
            } else if (section == "discriminator") {
                if (key == "kind")
                    c.discriminator.kind =
                        val == "large" ? DiscriminatorSpec::Kind::Large
                        : val == "compact"
                            ? DiscriminatorSpec::Kind::Compact
                            : throw ConfigError("config: unknown discriminator kind '" + val + "'");
                else if (key == "F") c.discriminator.F = to_int(val);
                else if (key == "W") c.discriminator.W = to_int(val);
                else if (key == "channels")
                    c.discriminator.channels = parse_list<int>(val, to_int);
                else throw ConfigError("");
            } else if (section == "grid") {
                if (key == "batch_sizes") c.grid.batch_sizes = parse_list<int>(val, to_int);
                else if (key == "lrs_g") c.grid.lrs_g = parse_list<float>(val, to_float);
                else if (key == "lrs_d") c.grid.lrs_d = parse_list<float>(val, to_float);
                else if (key == "lambdas") c.grid.lambdas = parse_list<float>(val, to_float);
                else if (key == "short_epochs") c.grid.short_epochs = to_int(val);
                else throw ConfigError("");
            } else if (section == "run") {
                if (key == "out_dir") c.out_dir = val;
                else if (key == "seeds") c.seeds = parse_list<std::uint64_t>(val, to_u64);
                else if (key == "hours") c.hours = parse_list<double>(val, to_double);
                else if (key == "n_dev_utterances") c.n_dev_utterances = to_int(val);
                else if (key == "n_test_utterances") c.n_test_utterances = to_int(val);
                else if (key == "mtr_sets") {
                    c.mtr_sets.clear();
                    std::istringstream ks(val);
                    std::string w;
                    while (ks >> w) c.mtr_sets.push_back(parse_kind(w));
                } else throw ConfigError("");
            } else {
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": unknown section [" + section + "]");
            }
        } catch (const ConfigError& e) {
            if (e.what()[0] != '\0') throw;
            throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" +
                              key + "' in section [" + section + "]");
        } catch (const std::exception&) {
            throw ConfigError("config line " + std::to_string(lineno) + ": bad value '" + val +
                              "' for key '" + key + "'");
        }
    }
    return c;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

void save_config_file(const std::string& path, const ExperimentConfig& cfg) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write config file " + path);
    f << serialize_config(cfg);
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
    std::string s = serialize_config(cfg);
    return fnv1a_bytes(s.data(), s.size());
}

}  // namespace ggan
