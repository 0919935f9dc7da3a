#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ggan/models.hpp"

namespace ggan {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
    std::uint64_t seed = 0;
    int epoch = 0;
    double dev_seer = 0.0;
    std::uint64_t config_hash = 0;
};

struct NamedTensor {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

/// In-memory image of the on-disk format: "GGAN" magic, version, architecture
/// descriptor lines, metadata, then named little-endian float32 tensors.
struct Checkpoint {
    int version = kCheckpointVersion;
    std::vector<std::string> arch;
    CheckpointMeta meta;
    std::vector<NamedTensor> tensors;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// FNV-1a over every parameter and buffer byte, in declaration order. Used to
/// prove the guidance model is untouched by adversarial training.
std::uint64_t param_hash(const NamedParams& params, const NamedBuffers& buffers);

std::uint64_t fnv1a_bytes(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL);

// ---- model adapters -----------------------------------------------------

Checkpoint checkpoint_from_am(AcousticModel& am, const CheckpointMeta& meta);
std::unique_ptr<AcousticModel> am_from_checkpoint(const Checkpoint& ckpt);

Checkpoint checkpoint_from_generator(const Generator& gen, const CheckpointMeta& meta);
std::unique_ptr<Generator> generator_from_checkpoint(const Checkpoint& ckpt);

Checkpoint checkpoint_from_discriminator(Discriminator& disc, const CheckpointMeta& meta);
std::unique_ptr<Discriminator> discriminator_from_checkpoint(const Checkpoint& ckpt);

}  // namespace ggan
