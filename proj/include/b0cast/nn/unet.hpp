#pragma once

#include <cstdint>
#include <vector>

#include "b0cast/nn/ops.hpp"

namespace b0cast::nn {

struct UNetConfig {
    int levels = 4;       // 3 pools across 4 levels
    int kernel = 5;       // isotropic, stride 1, same-size padding
    int base_channels = 8;
    int in_channels = 3;  // b0_init, anat_init, anat_new
    int out_channels = 1; // b0_new
    float leaky_slope = 0.01f;

    void validate() const;
    // doubling schedule; entry l is the channel width of level l+1
    std::vector<int> channel_schedule() const;
    int spatial_divisor() const { return 1 << (levels - 1); }

    bool operator==(const UNetConfig&) const = default;
};

// All layer weights/biases plus the Adam state; layer order is fixed by the
// builder and recorded in checkpoints.
struct UNetParams {
    UNetConfig config;
    std::uint64_t seed = 0;
    int epoch = 0;
    std::vector<ConvParam<float>> layers;
    // Adam state per layer (weights and biases), step counter shared
    std::vector<std::vector<float>> m_w, v_w, m_b, v_b;
    long adam_step_count = 0;

    void reset_adam();
    void check_finite(const char* where) const;
};

// Deterministic construction: uniform +-1/sqrt(fan_in) init from the seed.
UNetParams build_unet(const UNetConfig& config, std::uint64_t seed);

// Activation cache produced by the forward pass and consumed by backward.
struct UNetCache {
    std::vector<Tensor5> conv_in;   // per layer, input tensor
    std::vector<Tensor5> conv_pre;  // per layer, pre-activation output
    std::vector<std::vector<std::uint32_t>> pool_argmax;
    std::vector<std::array<int, 5>> pool_in_shape;
    std::vector<std::array<int, 5>> upsample_in_shape;
};

Tensor5 unet_forward(const UNetParams& params, const Tensor5& input, UNetCache* cache = nullptr);

// Gradients of every layer given dL/d(output); same layer order as params.
struct UNetGrads {
    std::vector<std::vector<float>> weight;
    std::vector<std::vector<float>> bias;

    void add_scaled(const UNetGrads& other, float scale);
};

UNetGrads unet_backward(const UNetParams& params, const UNetCache& cache,
                        const Tensor5& grad_output);

UNetGrads zero_grads(const UNetParams& params);

} // namespace b0cast::nn
