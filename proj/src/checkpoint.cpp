#include "ggan/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

namespace ggan {

namespace {

std::string format_float(float v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    return buf;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::map<std::string, std::string> parse_arch(const std::vector<std::string>& lines) {
    std::map<std::string, std::string> kv;
    for (const auto& line : lines) {
        auto sp = line.find(' ');
        if (sp == std::string::npos)
            kv[line] = "";
        else
            kv[line.substr(0, sp)] = line.substr(sp + 1);
    }
    return kv;
}

std::vector<int> parse_ints(const std::string& s) {
    std::istringstream in(s);
    std::vector<int> out;
    int v;
    while (in >> v) out.push_back(v);
    return out;
}

std::string join_ints(const std::vector<int>& v) {
    std::ostringstream out;
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << v[i];
    return out.str();
}

const std::string& arch_get(const std::map<std::string, std::string>& kv,
                            const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end())
        throw std::runtime_error("checkpoint: missing architecture field " + key);
    return it->second;
}

void collect(Checkpoint& ckpt, const NamedParams& params, const NamedBuffers& buffers) {
    for (const auto& [name, t] : params)
        ckpt.tensors.push_back({name, t->shape, t->data});
    for (const auto& [name, vec] : buffers)
        ckpt.tensors.push_back({name, {static_cast<int>(vec->size())}, *vec});
}

const NamedTensor& find_tensor(const Checkpoint& ckpt, const std::string& name) {
    for (const auto& t : ckpt.tensors)
        if (t.name == name) return t;
    throw std::runtime_error("checkpoint: missing tensor " + name);
}

void restore(const Checkpoint& ckpt, const NamedParams& params, const NamedBuffers& buffers) {
    for (const auto& [name, t] : params) {
        const NamedTensor& src = find_tensor(ckpt, name);
        if (src.shape != t->shape)
            throw std::runtime_error("checkpoint: shape mismatch for tensor " + name);
        t->data = src.data;
    }
    for (const auto& [name, vec] : buffers) {
        const NamedTensor& src = find_tensor(ckpt, name);
        *vec = src.data;
    }
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
    f << "GGAN\n"
      << "version " << ckpt.version << "\n"
      << "arch " << ckpt.arch.size() << "\n";
    for (const auto& line : ckpt.arch) f << line << "\n";
    f << "seed " << ckpt.meta.seed << "\n"
      << "epoch " << ckpt.meta.epoch << "\n"
      << "dev_seer " << format_double(ckpt.meta.dev_seer) << "\n"
      << "config_hash " << ckpt.meta.config_hash << "\n"
      << "tensors " << ckpt.tensors.size() << "\n";
    for (const auto& t : ckpt.tensors) {
        f << t.name << " " << t.shape.size();
        for (int d : t.shape) f << " " << d;
        f << "\n";
    }
    f << "payload\n";
    for (const auto& t : ckpt.tensors)
        f.write(reinterpret_cast<const char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
    std::string word;
    auto expect = [&](const std::string& key) {
        if (!(f >> word) || word != key)
            throw std::runtime_error("load_checkpoint: malformed file " + path +
                                     " (expected " + key + ")");
    };
    expect("GGAN");
    expect("version");
    Checkpoint ckpt;
    f >> ckpt.version;
    if (ckpt.version != kCheckpointVersion)
        throw std::runtime_error("load_checkpoint: unsupported format version " +
                                 std::to_string(ckpt.version));
    expect("arch");
    std::size_t n_arch;
    f >> n_arch;
    f.ignore();  // trailing newline
    ckpt.arch.resize(n_arch);
    for (auto& line : ckpt.arch) std::getline(f, line);
    expect("seed");
    f >> ckpt.meta.seed;
    expect("epoch");
    f >> ckpt.meta.epoch;
    expect("dev_seer");
    f >> ckpt.meta.dev_seer;
    expect("config_hash");
    f >> ckpt.meta.config_hash;
    expect("tensors");
    std::size_t n_tensors;
    f >> n_tensors;
    ckpt.tensors.resize(n_tensors);
    for (auto& t : ckpt.tensors) {
        std::size_t ndim;
        f >> t.name >> ndim;
        t.shape.resize(ndim);
        std::size_t total = 1;
        for (auto& d : t.shape) {
            f >> d;
            if (d < 0) throw std::runtime_error("load_checkpoint: negative dimension");
            total *= static_cast<std::size_t>(d);
        }
        t.data.resize(total);
    }
    expect("payload");
    f.ignore();
    for (auto& t : ckpt.tensors)
        f.read(reinterpret_cast<char*>(t.data.data()),
               static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!f) throw std::runtime_error("load_checkpoint: truncated file " + path);
    return ckpt;
}

std::uint64_t fnv1a_bytes(const void* data, std::size_t n, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t param_hash(const NamedParams& params, const NamedBuffers& buffers) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [name, t] : params) {
        h = fnv1a_bytes(name.data(), name.size(), h);
        h = fnv1a_bytes(t->data.data(), t->data.size() * sizeof(float), h);
    }
    for (const auto& [name, vec] : buffers) {
        h = fnv1a_bytes(name.data(), name.size(), h);
        h = fnv1a_bytes(vec->data(), vec->size() * sizeof(float), h);
    }
    return h;
}

// ---- model adapters -----------------------------------------------------

Checkpoint checkpoint_from_am(AcousticModel& am, const CheckpointMeta& meta) {
    Checkpoint ckpt;
    ckpt.meta = meta;
    const auto& s = am.spec();
    ckpt.arch = {"type acoustic-model",
                 "F " + std::to_string(s.F),
                 "C " + std::to_string(s.C),
                 "hidden_layers " + std::to_string(s.hidden_layers),
                 "hidden_units " + std::to_string(s.hidden_units),
                 "context_radius " + std::to_string(s.context_radius),
                 "dropout " + format_float(s.dropout)};
    collect(ckpt, am.named_params(), am.named_buffers());
    return ckpt;
}

std::unique_ptr<AcousticModel> am_from_checkpoint(const Checkpoint& ckpt) {
    auto kv = parse_arch(ckpt.arch);
    if (arch_get(kv, "type") != "acoustic-model")
        throw std::runtime_error("checkpoint: not an acoustic model");
    AcousticModelSpec spec;
    spec.F = std::stoi(arch_get(kv, "F"));
    spec.C = std::stoi(arch_get(kv, "C"));
    spec.hidden_layers = std::stoi(arch_get(kv, "hidden_layers"));
    spec.hidden_units = std::stoi(arch_get(kv, "hidden_units"));
    spec.context_radius = std::stoi(arch_get(kv, "context_radius"));
    spec.dropout = std::stof(arch_get(kv, "dropout"));
    std::mt19937 rng(0);
    auto am = std::make_unique<AcousticModel>(spec, rng);
    restore(ckpt, am->named_params(), am->named_buffers());
    for (auto& st : am->bn_state) st.initialized = !st.running_mean.empty();
    return am;
}

Checkpoint checkpoint_from_generator(const Generator& gen, const CheckpointMeta& meta) {
    Checkpoint ckpt;
    ckpt.meta = meta;
    const auto& s = gen.spec();
    ckpt.arch = {"type generator",
                 std::string("kind ") +
                     (s.kind == GeneratorSpec::Kind::FullyConvolutional ? "fc" : "ed"),
                 "F " + std::to_string(s.F),
                 "channels " + join_ints(s.channels)};
    collect(ckpt, gen.named_params(), {});
    return ckpt;
}

std::unique_ptr<Generator> generator_from_checkpoint(const Checkpoint& ckpt) {
    auto kv = parse_arch(ckpt.arch);
    if (arch_get(kv, "type") != "generator")
        throw std::runtime_error("checkpoint: not a generator");
    GeneratorSpec spec;
    spec.kind = arch_get(kv, "kind") == "fc" ? GeneratorSpec::Kind::FullyConvolutional
                                             : GeneratorSpec::Kind::EncoderDecoder;
    spec.F = std::stoi(arch_get(kv, "F"));
    spec.channels = parse_ints(arch_get(kv, "channels"));
    std::mt19937 rng(0);
    auto gen = build_generator(spec, rng);
    restore(ckpt, gen->named_params(), {});
    return gen;
}

Checkpoint checkpoint_from_discriminator(Discriminator& disc, const CheckpointMeta& meta) {
    Checkpoint ckpt;
    ckpt.meta = meta;
    const auto& s = disc.spec();
    ckpt.arch = {"type discriminator",
                 std::string("kind ") +
                     (s.kind == DiscriminatorSpec::Kind::Large ? "large" : "compact"),
                 "F " + std::to_string(s.F),
                 "W " + std::to_string(s.W),
                 "channels " + join_ints(s.channels)};
    collect(ckpt, disc.named_params(), disc.named_buffers());
    return ckpt;
}

std::unique_ptr<Discriminator> discriminator_from_checkpoint(const Checkpoint& ckpt) {
    auto kv = parse_arch(ckpt.arch);
    if (arch_get(kv, "type") != "discriminator")
        throw std::runtime_error("checkpoint: not a discriminator");
    DiscriminatorSpec spec;
    spec.kind = arch_get(kv, "kind") == "large" ? DiscriminatorSpec::Kind::Large
                                                : DiscriminatorSpec::Kind::Compact;
    spec.F = std::stoi(arch_get(kv, "F"));
    spec.W = std::stoi(arch_get(kv, "W"));
    spec.channels = parse_ints(arch_get(kv, "channels"));
    std::mt19937 rng(0);
    auto disc = build_discriminator(spec, rng);
    restore(ckpt, disc->named_params(), disc->named_buffers());
    return disc;
}

}  // namespace ggan
