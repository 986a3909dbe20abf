#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "b0cast/nn/tensor.hpp"

namespace b0cast::nn {

enum class LayerKind { Conv, TConv };

// One (transposed) convolution layer. All convolutions are stride 1 with
// same-size padding pad = (kernel-1)/2.
// Weight layout: Conv  -> [out_ch][in_ch][kz][ky][kx]
//                TConv -> [in_ch][out_ch][kz][ky][kx]
template <typename T>
struct ConvParam {
    LayerKind kind = LayerKind::Conv;
    std::string name;
    int in_ch = 0;
    int out_ch = 0;
    int kernel = 5;
    std::vector<T> weight;
    std::vector<T> bias;

    std::size_t weight_count() const {
        return static_cast<std::size_t>(in_ch) * out_ch * kernel * kernel * kernel;
    }
    int pad() const { return (kernel - 1) / 2; }
};

template <typename T>
struct ConvGrads {
    TensorT<T> input;
    std::vector<T> weight;
    std::vector<T> bias;
};

template <typename T>
TensorT<T> conv3d_forward(const TensorT<T>& in, const ConvParam<T>& p);
template <typename T>
ConvGrads<T> conv3d_backward(const TensorT<T>& in, const ConvParam<T>& p,
                             const TensorT<T>& grad_out, bool need_grad_input = true);

template <typename T>
TensorT<T> tconv3d_forward(const TensorT<T>& in, const ConvParam<T>& p);
template <typename T>
ConvGrads<T> tconv3d_backward(const TensorT<T>& in, const ConvParam<T>& p,
                              const TensorT<T>& grad_out, bool need_grad_input = true);

template <typename T>
TensorT<T> leaky_relu_forward(const TensorT<T>& in, T slope);
template <typename T>
TensorT<T> leaky_relu_backward(const TensorT<T>& in, const TensorT<T>& grad_out, T slope);

template <typename T>
struct PoolResult {
    TensorT<T> out;
    std::vector<std::uint32_t> argmax; // input linear index per output element
};

// 2x2x2 max pooling, stride 2. Ties go to the first window element in
// ascending input linear index order.
template <typename T>
PoolResult<T> maxpool3d_forward(const TensorT<T>& in);
template <typename T>
TensorT<T> maxpool3d_backward(const std::vector<std::uint32_t>& argmax,
                              const TensorT<T>& grad_out, const std::array<int, 5>& in_shape);

// Trilinear 2x upsampling, align_corners = false (edge-clamped).
template <typename T>
TensorT<T> upsample_trilinear2x_forward(const TensorT<T>& in);
template <typename T>
TensorT<T> upsample_trilinear2x_backward(const TensorT<T>& grad_out,
                                         const std::array<int, 5>& in_shape);

template <typename T>
TensorT<T> concat_forward(const TensorT<T>& a, const TensorT<T>& b);
template <typename T>
std::pair<TensorT<T>, TensorT<T>> concat_backward(const TensorT<T>& grad_out, int channels_a,
                                                  int channels_b);

// Mean squared error over every element (optionally restricted to a spatial
// mask shared by all batch entries / channels). Gradient is 2*(pred-t)/N.
template <typename T>
double mse_forward(const TensorT<T>& pred, const TensorT<T>& target,
                   const std::vector<std::uint8_t>* mask = nullptr);
template <typename T>
TensorT<T> mse_backward(const TensorT<T>& pred, const TensorT<T>& target,
                        const std::vector<std::uint8_t>* mask = nullptr);

} // namespace b0cast::nn
