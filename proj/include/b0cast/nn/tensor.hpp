#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "b0cast/errors.hpp"

namespace b0cast::nn {

// Dense (batch, channels, nx, ny, nz) tensor, x-fastest within a channel:
// offset = x + nx*(y + ny*(z + nz*(c + C*b))). Scalar type is templated so
// the same ops run in f32 for training and f64 for gradient checking.
template <typename T>
struct TensorT {
    std::array<int, 5> shape{0, 0, 0, 0, 0}; // b, c, nx, ny, nz
    std::vector<T> data;

    TensorT() = default;
    TensorT(int b, int c, int nx, int ny, int nz, T fill = T(0))
        : shape{b, c, nx, ny, nz},
          data(static_cast<std::size_t>(b) * c * nx * ny * nz, fill) {}

    int batch() const { return shape[0]; }
    int channels() const { return shape[1]; }
    int nx() const { return shape[2]; }
    int ny() const { return shape[3]; }
    int nz() const { return shape[4]; }

    std::size_t spatial_size() const {
        return static_cast<std::size_t>(shape[2]) * shape[3] * shape[4];
    }
    std::size_t size() const { return data.size(); }

    std::size_t offset(int b, int c, int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(shape[2]) *
                   (static_cast<std::size_t>(y) +
                    static_cast<std::size_t>(shape[3]) *
                        (static_cast<std::size_t>(z) +
                         static_cast<std::size_t>(shape[4]) *
                             (static_cast<std::size_t>(c) +
                              static_cast<std::size_t>(shape[1]) * static_cast<std::size_t>(b))));
    }

    T& at(int b, int c, int x, int y, int z) { return data[offset(b, c, x, y, z)]; }
    const T& at(int b, int c, int x, int y, int z) const { return data[offset(b, c, x, y, z)]; }

    T* channel_ptr(int b, int c) { return data.data() + offset(b, c, 0, 0, 0); }
    const T* channel_ptr(int b, int c) const { return data.data() + offset(b, c, 0, 0, 0); }

    std::string shape_str() const {
        return "(" + std::to_string(shape[0]) + "," + std::to_string(shape[1]) + "," +
               std::to_string(shape[2]) + "," + std::to_string(shape[3]) + "," +
               std::to_string(shape[4]) + ")";
    }
};

using Tensor5 = TensorT<float>;

template <typename T>
void require_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* where) {
    if (a.shape != b.shape)
        throw ShapeError(std::string(where) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
}

} // namespace b0cast::nn
