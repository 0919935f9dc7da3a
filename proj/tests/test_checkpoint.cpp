#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>

#include "ggan/checkpoint.hpp"
#include "ggan/nn.hpp"

using namespace ggan;

namespace {

bool params_equal(const NamedParams& a, const NamedParams& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].first != b[i].first) return false;
        if (a[i].second->shape != b[i].second->shape) return false;
        if (a[i].second->data != b[i].second->data) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("acoustic model checkpoint round trips bit for bit") {
    AcousticModelSpec spec;
    spec.F = 5;
    spec.C = 9;
    spec.hidden_layers = 2;
    spec.hidden_units = 11;
    spec.context_radius = 1;
    spec.dropout = 0.15f;
    std::mt19937 rng(4);
    AcousticModel am(spec, rng);

    // populate batchnorm running stats with a real training forward
    Graph g(1);
    std::vector<float> x(4 * am.input_dim());
    std::uniform_real_distribution<float> d(-1, 1);
    for (auto& v : x) v = d(rng);
    am.forward(g, make_tensor({4, am.input_dim()}, x), true);

    CheckpointMeta meta{77, 12, 0.123456789012345, 0xabcdefULL};
    auto ckpt = checkpoint_from_am(am, meta);
    save_checkpoint("am_test.ckpt", ckpt);
    auto loaded = load_checkpoint("am_test.ckpt");
    CHECK(loaded.meta.seed == meta.seed);
    CHECK(loaded.meta.epoch == meta.epoch);
    CHECK(loaded.meta.dev_seer == meta.dev_seer);
    CHECK(loaded.meta.config_hash == meta.config_hash);

    auto am2 = am_from_checkpoint(loaded);
    CHECK(params_equal(am.named_params(), am2->named_params()));
    CHECK(am2->spec().dropout == spec.dropout);
    CHECK(am2->spec().context_radius == spec.context_radius);
    REQUIRE(am2->bn_state.size() == 2u);
    CHECK(am2->bn_state[0].initialized);
    CHECK(am2->bn_state[0].running_mean == am.bn_state[0].running_mean);
    CHECK(am2->bn_state[1].running_var == am.bn_state[1].running_var);
    CHECK(param_hash(am.named_params(), am.named_buffers()) ==
          param_hash(am2->named_params(), am2->named_buffers()));
    std::filesystem::remove("am_test.ckpt");
}

TEST_CASE("generator checkpoints reproduce the forward pass") {
    for (auto kind : {GeneratorSpec::Kind::FullyConvolutional,
                      GeneratorSpec::Kind::EncoderDecoder}) {
        GeneratorSpec spec;
        spec.kind = kind;
        spec.F = 6;
        if (kind == GeneratorSpec::Kind::EncoderDecoder) spec.channels = {6, 8, 8, 10, 12};
        std::mt19937 rng(9);
        auto gen = build_generator(spec, rng);
        auto ckpt = checkpoint_from_generator(*gen, {});
        save_checkpoint("gen_test.ckpt", ckpt);
        auto gen2 = generator_from_checkpoint(load_checkpoint("gen_test.ckpt"));
        CHECK(params_equal(gen->named_params(), gen2->named_params()));

        std::vector<float> x(6 * 40);
        std::uniform_real_distribution<float> d(-1, 1);
        for (auto& v : x) v = d(rng);
        Graph ga(0), gb(0);
        auto ya = gen->forward(ga, make_tensor({6, 40}, x));
        auto yb = gen2->forward(gb, make_tensor({6, 40}, x));
        CHECK(ya->data == yb->data);
        std::filesystem::remove("gen_test.ckpt");
    }
}

TEST_CASE("discriminator checkpoint keeps the spectral norm state") {
    DiscriminatorSpec spec;
    spec.kind = DiscriminatorSpec::Kind::Compact;
    spec.F = 6;
    spec.W = 16;
    spec.channels = {4, 4, 6, 8};
    std::mt19937 rng(2);
    auto disc = build_discriminator(spec, rng);

    std::vector<float> x(2 * 6 * 16);
    std::uniform_real_distribution<float> d(-1, 1);
    for (auto& v : x) v = d(rng);
    Graph g0(3);
    disc->forward(g0, make_tensor({2, 6, 16}, x), false, true);  // advance u

    auto ckpt = checkpoint_from_discriminator(*disc, {});
    save_checkpoint("disc_test.ckpt", ckpt);
    auto disc2 = discriminator_from_checkpoint(load_checkpoint("disc_test.ckpt"));
    CHECK(params_equal(disc->named_params(), disc2->named_params()));

    Graph ga(0), gb(0);
    auto ya = disc->forward(ga, make_tensor({2, 6, 16}, x), false, false);
    auto yb = disc2->forward(gb, make_tensor({2, 6, 16}, x), false, false);
    CHECK(ya->data == yb->data);
    std::filesystem::remove("disc_test.ckpt");
}

TEST_CASE("version and integrity guards") {
    GeneratorSpec spec;
    spec.F = 4;
    std::mt19937 rng(1);
    auto gen = build_generator(spec, rng);
    auto ckpt = checkpoint_from_generator(*gen, {});

    ckpt.version = 2;
    save_checkpoint("bad_test.ckpt", ckpt);
    CHECK_THROWS_WITH_AS(load_checkpoint("bad_test.ckpt"),
                         "load_checkpoint: unsupported format version 2", std::runtime_error);
    ckpt.version = kCheckpointVersion;

    auto missing = ckpt;
    missing.tensors.erase(missing.tensors.begin());
    CHECK_THROWS_AS(generator_from_checkpoint(missing), std::runtime_error);

    auto wrong_shape = ckpt;
    wrong_shape.tensors[0].shape[0] += 1;
    wrong_shape.tensors[0].data.resize(wrong_shape.tensors[0].data.size() * 2);
    CHECK_THROWS_AS(generator_from_checkpoint(wrong_shape), std::runtime_error);

    CHECK_THROWS_AS(am_from_checkpoint(ckpt), std::runtime_error);  // wrong type
    CHECK_THROWS_AS(load_checkpoint("no_such_file.ckpt"), std::runtime_error);
    std::filesystem::remove("bad_test.ckpt");
}

TEST_CASE("parameter hash is sensitive to every weight") {
    AcousticModelSpec spec;
    spec.F = 3;
    spec.C = 4;
    spec.hidden_layers = 1;
    spec.hidden_units = 5;
    spec.context_radius = 0;
    std::mt19937 rng(8);
    AcousticModel am(spec, rng);
    auto h0 = param_hash(am.named_params(), am.named_buffers());
    CHECK(h0 == param_hash(am.named_params(), am.named_buffers()));
    am.output.b->data[2] += 1e-7f;
    CHECK(h0 != param_hash(am.named_params(), am.named_buffers()));
}
