#pragma once

#include <filesystem>

#include "b0cast/nn/unet.hpp"

namespace b0cast::nn {

// Checkpoint container: one line of JSON (magic "B0NN1", config, channel
// schedule, normalization constants, seed, epoch, ordered layer table with
// shapes) followed by raw little-endian f32 payloads, weights then bias per
// layer in builder order. Adam moments are not persisted; loading resets
// the optimizer state.
void save_checkpoint(const UNetParams& params, const std::filesystem::path& path);
UNetParams load_checkpoint(const std::filesystem::path& path);

} // namespace b0cast::nn
