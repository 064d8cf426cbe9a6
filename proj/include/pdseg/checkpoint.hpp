#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pdseg/nn/tensor.hpp"
#include "pdseg/nn/unet.hpp"
#include "pdseg/noise_schedule.hpp"

namespace pdseg {

/// Model container shared by the denoiser and the pre-segmentation net.
///
/// Layout, all integers little-endian:
///   "PDSEG1"
///   u32 len, kind bytes                 ("denoiser" or "preseg")
///   u32 n, n x i32 architecture ints    (in, out, base, depth, step_dim)
///   u32 T; if T > 0: u32 len, schedule kind bytes, T x f64 betas
///   u32 tensor count, then per tensor:
///     u32 len, name bytes, u32 rank, rank x u32 dims, prod(dims) x f32
struct Checkpoint {
    std::string kind;
    nn::UNetConfig config;
    std::optional<NoiseSchedule> schedule;
    std::vector<nn::Param<float>> params;
};

inline constexpr char kCheckpointMagic[] = "PDSEG1";

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes, const std::string& source_name);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint tensors into a network built from the same config,
/// checking names and shapes.
void load_params(const Checkpoint& ckpt, nn::UNet<float>& net);

}  // namespace pdseg
