#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ggan/nn.hpp"
#include "ggan/tensor.hpp"

namespace ggan {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;
// Non-trainable persistent state (batchnorm statistics, spectral-norm u).
using NamedBuffers = std::vector<std::pair<std::string, std::vector<float>*>>;

// ---- generators ---------------------------------------------------------

struct GeneratorSpec {
    enum class Kind { FullyConvolutional, EncoderDecoder };
    Kind kind = Kind::FullyConvolutional;
    int F = 16;
    // FullyConvolutional: the 4 hidden widths (empty -> 2F each).
    // EncoderDecoder: the 5 encoder widths (empty -> {24, 32, 40, 48, 64}).
    std::vector<int> channels;
};

/// Deterministic dimension-preserving map F×T -> F×T (no stochastic layers).
class Generator {
public:
    virtual ~Generator() = default;
    virtual Tensor forward(Graph& g, const Tensor& x) const = 0;
    virtual NamedParams named_params() const = 0;
    virtual const GeneratorSpec& spec() const = 0;
    std::vector<Tensor> params() const;
};

/// 5 conv layers, kernel 5, stride 1, padding 2; leaky-ReLU 0.2 on layers
/// 1-4, linear final layer.
class FcGenerator : public Generator {
public:
    FcGenerator(GeneratorSpec spec, std::mt19937& rng);
    Tensor forward(Graph& g, const Tensor& x) const override;
    NamedParams named_params() const override;
    const GeneratorSpec& spec() const override { return spec_; }
    std::vector<Conv1dLayer> layers;

private:
    GeneratorSpec spec_;
};

/// Strided conv encoder (kernels 7,7,5,5,3) with a transposed-conv decoder
/// (kernels 4,5,6,6,6) and channel-splice skip connections. Input is
/// reflect-padded in time to a multiple of 32 and cropped back afterwards.
class EdGenerator : public Generator {
public:
    EdGenerator(GeneratorSpec spec, std::mt19937& rng);
    Tensor forward(Graph& g, const Tensor& x) const override;
    NamedParams named_params() const override;
    const GeneratorSpec& spec() const override { return spec_; }
    std::vector<Conv1dLayer> encoder;
    std::vector<ConvT1dLayer> decoder;

private:
    GeneratorSpec spec_;
};

std::unique_ptr<Generator> build_generator(const GeneratorSpec& spec, std::mt19937& rng);

/// Runs the generator on one utterance (F×T) in eval mode.
Tensor enhance(const Generator& gen, Graph& g, const Tensor& frames);

// ---- discriminators -----------------------------------------------------

struct DiscriminatorSpec {
    enum class Kind { Large, Compact };
    Kind kind = Kind::Compact;
    int F = 16;
    int W = 32;  // window length in frames; must be a multiple of 16
    // Large: 8 conv widths (empty -> {16, 32, 32, 64, 64, 128, 128, 256}).
    // Compact: 4 conv widths (empty -> {32, 64, 96, 128}).
    std::vector<int> channels;
};

/// Maps a B×F×W window batch to per-sample scores in (0,1).
class Discriminator {
public:
    virtual ~Discriminator() = default;
    /// `training` enables dropout; `update_sn` advances the power iteration.
    virtual Tensor forward(Graph& g, const Tensor& x, bool training,
                           bool update_sn = true) = 0;
    virtual NamedParams named_params() const = 0;
    virtual NamedBuffers named_buffers() = 0;
    virtual const DiscriminatorSpec& spec() const = 0;
    std::vector<Tensor> params() const;
};

/// 8 conv layers: kernel 41 then seven of kernel 13, length-preserving
/// padding, leaky-ReLU 0.2, dropout 0.3 on the first two layers, maxpool 2
/// after layers 2, 4, 6, 8; spectrally normalized linear head + sigmoid.
class LargeDiscriminator : public Discriminator {
public:
    LargeDiscriminator(DiscriminatorSpec spec, std::mt19937& rng);
    Tensor forward(Graph& g, const Tensor& x, bool training, bool update_sn) override;
    NamedParams named_params() const override;
    NamedBuffers named_buffers() override;
    const DiscriminatorSpec& spec() const override { return spec_; }
    std::vector<Conv1dLayer> convs;
    SpectralLinearLayer head;

private:
    DiscriminatorSpec spec_;
};

/// 4 conv layers (kernel 5, padding 2), maxpool 2 after each, leaky-ReLU
/// 0.2, dropout 0.25 on the first three layers; spectrally normalized linear
/// head + sigmoid.
class CompactDiscriminator : public Discriminator {
public:
    CompactDiscriminator(DiscriminatorSpec spec, std::mt19937& rng);
    Tensor forward(Graph& g, const Tensor& x, bool training, bool update_sn) override;
    NamedParams named_params() const override;
    NamedBuffers named_buffers() override;
    const DiscriminatorSpec& spec() const override { return spec_; }
    std::vector<Conv1dLayer> convs;
    SpectralLinearLayer head;

private:
    DiscriminatorSpec spec_;
};

std::unique_ptr<Discriminator> build_discriminator(const DiscriminatorSpec& spec,
                                                   std::mt19937& rng);

// ---- acoustic model -----------------------------------------------------

struct AcousticModelSpec {
    int F = 16;
    int C = 48;  // senone count
    int hidden_layers = 5;
    int hidden_units = 64;
    int context_radius = 5;  // 11-frame splice
    float dropout = 0.1f;
};

/// MLP over 11-frame context splices: per hidden layer linear -> ReLU ->
/// batchnorm -> dropout; log_softmax output over C senones.
class AcousticModel {
public:
    AcousticModel(AcousticModelSpec spec, std::mt19937& rng);
    /// x is B×(11·F) spliced frames; returns B×C log-probabilities.
    Tensor forward(Graph& g, const Tensor& x, bool training);
    NamedParams named_params() const;
    NamedBuffers named_buffers();
    std::vector<Tensor> params() const;
    const AcousticModelSpec& spec() const { return spec_; }
    int input_dim() const { return (2 * spec_.context_radius + 1) * spec_.F; }

    std::vector<LinearLayer> hidden;
    std::vector<Tensor> bn_gain, bn_shift;
    std::vector<BatchNormState> bn_state;
    LinearLayer output;

private:
    AcousticModelSpec spec_;
};

}  // namespace ggan
