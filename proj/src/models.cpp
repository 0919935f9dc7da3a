#include "ggan/models.hpp"

#include <algorithm>
#include <stdexcept>

namespace ggan {

namespace {

std::vector<Tensor> strip_names(const NamedParams& np) {
    std::vector<Tensor> out;
    out.reserve(np.size());
    for (auto& [name, t] : np) out.push_back(t);
    return out;
}

Conv1dLayer make_conv(std::mt19937& rng, int Ci, int Co, int K, int stride, int padding) {
    Conv1dLayer l;
    l.w = conv_weight_init(rng, Co, Ci, K);
    l.b = make_param({Co}, std::vector<float>(Co, 0.0f));
    l.stride = stride;
    l.padding = padding;
    return l;
}

ConvT1dLayer make_convt(std::mt19937& rng, int Ci, int Co, int K, int stride) {
    ConvT1dLayer l;
    l.w = convt_weight_init(rng, Ci, Co, K);
    l.b = make_param({Co}, std::vector<float>(Co, 0.0f));
    l.stride = stride;
    return l;
}

LinearLayer make_linear(std::mt19937& rng, int In, int Out) {
    LinearLayer l;
    l.w = linear_weight_init(rng, Out, In);
    l.b = make_param({Out}, std::vector<float>(Out, 0.0f));
    return l;
}

int time_extent(const Tensor& t) { return t->shape.back(); }

}  // namespace

std::vector<Tensor> Generator::params() const { return strip_names(named_params()); }
std::vector<Tensor> Discriminator::params() const { return strip_names(named_params()); }

// ---- FcGenerator --------------------------------------------------------

FcGenerator::FcGenerator(GeneratorSpec spec, std::mt19937& rng) : spec_(std::move(spec)) {
    if (spec_.F < 1) throw std::invalid_argument("FcGenerator: F must be >= 1");
    if (spec_.channels.empty()) spec_.channels.assign(4, 2 * spec_.F);
    if (spec_.channels.size() != 4)
        throw std::invalid_argument("FcGenerator: expected 4 hidden widths");
    std::vector<int> in = {spec_.F, spec_.channels[0], spec_.channels[1], spec_.channels[2],
                           spec_.channels[3]};
    std::vector<int> out = {spec_.channels[0], spec_.channels[1], spec_.channels[2],
                            spec_.channels[3], spec_.F};
    for (int i = 0; i < 5; ++i) layers.push_back(make_conv(rng, in[i], out[i], 5, 1, 2));
}

Tensor FcGenerator::forward(Graph& g, const Tensor& x) const {
    Tensor h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = layers[i].forward(g, h);
        if (i + 1 < layers.size()) h = g.leaky_relu(h, 0.2f);
    }
    return h;
}

NamedParams FcGenerator::named_params() const {
    NamedParams np;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        np.emplace_back("conv" + std::to_string(i) + ".w", layers[i].w);
        np.emplace_back("conv" + std::to_string(i) + ".b", layers[i].b);
    }
    return np;
}

// ---- EdGenerator --------------------------------------------------------

EdGenerator::EdGenerator(GeneratorSpec spec, std::mt19937& rng) : spec_(std::move(spec)) {
    if (spec_.F < 1) throw std::invalid_argument("EdGenerator: F must be >= 1");
    if (spec_.channels.empty()) spec_.channels = {24, 32, 40, 48, 64};
    if (spec_.channels.size() != 5)
        throw std::invalid_argument("EdGenerator: expected 5 encoder widths");
    const auto& ec = spec_.channels;
    const int enc_k[5] = {7, 7, 5, 5, 3};
    int ci = spec_.F;
    for (int i = 0; i < 5; ++i) {
        encoder.push_back(make_conv(rng, ci, ec[i], enc_k[i], 2, (enc_k[i] - 1) / 2));
        ci = ec[i];
    }
    const int dec_k[5] = {4, 5, 6, 6, 6};
    std::vector<int> dec_out = {ec[3], ec[2], ec[1], ec[0], spec_.F};
    int di = ec[4];
    for (int i = 0; i < 5; ++i) {
        decoder.push_back(make_convt(rng, di, dec_out[i], dec_k[i], 2));
        // next decoder layer sees the upsampled channels spliced with the
        // matching encoder output
        if (i < 4) di = dec_out[i] + ec[3 - i];
    }
}

Tensor EdGenerator::forward(Graph& g, const Tensor& x) const {
    int T = time_extent(x);
    if (T < 2) throw ShapeError("EdGenerator: need at least 2 frames, got " + std::to_string(T));
    int Tpad = ((T + 31) / 32) * 32;
    Tensor h = x;
    // reflect padding is bounded by the current length, so extend in steps
    while (time_extent(h) < Tpad) {
        int cur = time_extent(h);
        h = g.pad_time_reflect(h, 0, std::min(Tpad - cur, cur - 1));
    }
    if (time_extent(h) != Tpad)
        throw std::logic_error("EdGenerator: padded length is not a multiple of 32");

    std::vector<Tensor> enc_out;
    for (auto& layer : encoder) {
        h = g.relu(layer.forward(g, h));
        enc_out.push_back(h);
    }
    Tensor d = enc_out[4];
    for (int i = 0; i < 5; ++i) {
        Tensor y = decoder[i].forward(g, d);
        int target = i < 4 ? time_extent(enc_out[3 - i]) : Tpad;
        int off = (time_extent(y) - target) / 2;
        y = g.crop_time(y, off, target);
        if (i < 4) {
            y = g.relu(y);
            d = g.concat_channels(y, enc_out[3 - i]);
        } else {
            d = y;  // linear output layer
        }
    }
    if (Tpad != T) d = g.crop_time(d, 0, T);
    return d;
}

NamedParams EdGenerator::named_params() const {
    NamedParams np;
    for (std::size_t i = 0; i < encoder.size(); ++i) {
        np.emplace_back("enc" + std::to_string(i) + ".w", encoder[i].w);
        np.emplace_back("enc" + std::to_string(i) + ".b", encoder[i].b);
    }
    for (std::size_t i = 0; i < decoder.size(); ++i) {
        np.emplace_back("dec" + std::to_string(i) + ".w", decoder[i].w);
        np.emplace_back("dec" + std::to_string(i) + ".b", decoder[i].b);
    }
    return np;
}

std::unique_ptr<Generator> build_generator(const GeneratorSpec& spec, std::mt19937& rng) {
    if (spec.kind == GeneratorSpec::Kind::FullyConvolutional)
        return std::make_unique<FcGenerator>(spec, rng);
    return std::make_unique<EdGenerator>(spec, rng);
}

Tensor enhance(const Generator& gen, Graph& g, const Tensor& frames) {
    return gen.forward(g, frames);
}

// ---- discriminators -----------------------------------------------------

namespace {

Tensor disc_head(Graph& g, const Tensor& h, SpectralLinearLayer& head, bool update_sn) {
    int B = h->shape.size() == 3 ? h->shape[0] : 1;
    int flat = static_cast<int>(numel(h->shape)) / B;
    Tensor scores = head.forward(g, g.reshape(h, {B, flat}), update_sn);
    return g.reshape(g.sigmoid(scores), {B});
}

void check_window(int W, int min_w, const char* who) {
    if (W < min_w || W % 16 != 0)
        throw std::invalid_argument(std::string(who) + ": window length " + std::to_string(W) +
                                    " must be a multiple of 16 and >= " + std::to_string(min_w));
}

}  // namespace

LargeDiscriminator::LargeDiscriminator(DiscriminatorSpec spec, std::mt19937& rng)
    : spec_(std::move(spec)) {
    if (spec_.channels.empty()) spec_.channels = {16, 32, 32, 64, 64, 128, 128, 256};
    if (spec_.channels.size() != 8)
        throw std::invalid_argument("LargeDiscriminator: expected 8 conv widths");
    // kernel-41 layer zero-pads by 20 per side, so W itself only needs to
    // survive the four maxpools
    check_window(spec_.W, 16, "LargeDiscriminator");
    int ci = spec_.F;
    for (int i = 0; i < 8; ++i) {
        int k = i == 0 ? 41 : 13;
        convs.push_back(make_conv(rng, ci, spec_.channels[i], k, 1, (k - 1) / 2));
        ci = spec_.channels[i];
    }
    int flat = spec_.channels[7] * (spec_.W / 16);
    head.w = linear_weight_init(rng, 1, flat);
    head.b = make_param({1}, {0.0f});
}

Tensor LargeDiscriminator::forward(Graph& g, const Tensor& x, bool training, bool update_sn) {
    Tensor h = x;
    for (int i = 0; i < 8; ++i) {
        h = g.leaky_relu(convs[i].forward(g, h), 0.2f);
        if (i < 2) h = g.dropout(h, 0.3f, training);
        if (i % 2 == 1) h = g.maxpool1d(h, 2);
    }
    return disc_head(g, h, head, update_sn);
}

CompactDiscriminator::CompactDiscriminator(DiscriminatorSpec spec, std::mt19937& rng)
    : spec_(std::move(spec)) {
    if (spec_.channels.empty()) spec_.channels = {32, 64, 96, 128};
    if (spec_.channels.size() != 4)
        throw std::invalid_argument("CompactDiscriminator: expected 4 conv widths");
    check_window(spec_.W, 16, "CompactDiscriminator");
    int ci = spec_.F;
    for (int i = 0; i < 4; ++i) {
        convs.push_back(make_conv(rng, ci, spec_.channels[i], 5, 1, 2));
        ci = spec_.channels[i];
    }
    int flat = spec_.channels[3] * (spec_.W / 16);
    head.w = linear_weight_init(rng, 1, flat);
    head.b = make_param({1}, {0.0f});
}

Tensor CompactDiscriminator::forward(Graph& g, const Tensor& x, bool training, bool update_sn) {
    Tensor h = x;
    for (int i = 0; i < 4; ++i) {
        h = g.leaky_relu(convs[i].forward(g, h), 0.2f);
        if (i < 3) h = g.dropout(h, 0.25f, training);
        h = g.maxpool1d(h, 2);
    }
    return disc_head(g, h, head, update_sn);
}

namespace {

NamedParams disc_named_params(const std::vector<Conv1dLayer>& convs,
                              const SpectralLinearLayer& head) {
    NamedParams np;
    for (std::size_t i = 0; i < convs.size(); ++i) {
        np.emplace_back("conv" + std::to_string(i) + ".w", convs[i].w);
        np.emplace_back("conv" + std::to_string(i) + ".b", convs[i].b);
    }
    np.emplace_back("head.w", head.w);
    np.emplace_back("head.b", head.b);
    return np;
}

}  // namespace

NamedParams LargeDiscriminator::named_params() const { return disc_named_params(convs, head); }
NamedParams CompactDiscriminator::named_params() const { return disc_named_params(convs, head); }

NamedBuffers LargeDiscriminator::named_buffers() { return {{"head.sn_u", &head.sn.u}}; }
NamedBuffers CompactDiscriminator::named_buffers() { return {{"head.sn_u", &head.sn.u}}; }

std::unique_ptr<Discriminator> build_discriminator(const DiscriminatorSpec& spec,
                                                   std::mt19937& rng) {
    if (spec.kind == DiscriminatorSpec::Kind::Large)
        return std::make_unique<LargeDiscriminator>(spec, rng);
    return std::make_unique<CompactDiscriminator>(spec, rng);
}

// ---- acoustic model -----------------------------------------------------

AcousticModel::AcousticModel(AcousticModelSpec spec, std::mt19937& rng) : spec_(std::move(spec)) {
    if (spec_.C < 2) throw std::invalid_argument("AcousticModel: need at least 2 senones");
    if (spec_.hidden_layers < 1 || spec_.hidden_units < 1)
        throw std::invalid_argument("AcousticModel: invalid hidden configuration");
    int in = input_dim();
    for (int i = 0; i < spec_.hidden_layers; ++i) {
        hidden.push_back(make_linear(rng, in, spec_.hidden_units));
        bn_gain.push_back(make_param({spec_.hidden_units},
                                     std::vector<float>(spec_.hidden_units, 1.0f)));
        bn_shift.push_back(make_param({spec_.hidden_units},
                                      std::vector<float>(spec_.hidden_units, 0.0f)));
        bn_state.emplace_back();
        in = spec_.hidden_units;
    }
    output = make_linear(rng, in, spec_.C);
}

Tensor AcousticModel::forward(Graph& g, const Tensor& x, bool training) {
    Tensor h = x;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        h = g.relu(hidden[i].forward(g, h));
        h = g.batchnorm(h, bn_gain[i], bn_shift[i], bn_state[i], training);
        h = g.dropout(h, spec_.dropout, training);
    }
    return g.log_softmax(output.forward(g, h));
}

NamedParams AcousticModel::named_params() const {
    NamedParams np;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        std::string p = "fc" + std::to_string(i);
        np.emplace_back(p + ".w", hidden[i].w);
        np.emplace_back(p + ".b", hidden[i].b);
        np.emplace_back(p + ".bn_gain", bn_gain[i]);
        np.emplace_back(p + ".bn_shift", bn_shift[i]);
    }
    np.emplace_back("out.w", output.w);
    np.emplace_back("out.b", output.b);
    return np;
}

NamedBuffers AcousticModel::named_buffers() {
    NamedBuffers nb;
    for (std::size_t i = 0; i < bn_state.size(); ++i) {
        std::string p = "fc" + std::to_string(i);
        nb.emplace_back(p + ".bn_mean", &bn_state[i].running_mean);
        nb.emplace_back(p + ".bn_var", &bn_state[i].running_var);
    }
    return nb;
}

std::vector<Tensor> AcousticModel::params() const { return strip_names(named_params()); }

}  // namespace ggan
