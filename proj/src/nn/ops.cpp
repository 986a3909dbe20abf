#include "b0cast/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <cblas.h>

namespace b0cast::nn {

namespace {

inline void gemm_rowmajor(int M, int N, int K, const float* A, int lda, bool transB,
                          const float* B, int ldb, float* C, int ldc, float beta) {
    cblas_sgemm(CblasRowMajor, CblasNoTrans, transB ? CblasTrans : CblasNoTrans, M, N, K, 1.0f, A,
                lda, B, ldb, beta, C, ldc);
}

inline void gemm_rowmajor(int M, int N, int K, const double* A, int lda, bool transB,
                          const double* B, int ldb, double* C, int ldc, double beta) {
    cblas_dgemm(CblasRowMajor, CblasNoTrans, transB ? CblasTrans : CblasNoTrans, M, N, K, 1.0, A,
                lda, B, ldb, beta, C, ldc);
}

// Pack one z-slice of a (C,nx,ny,nz) channel block into a column matrix of
// shape [C*k^3 rows x ny*nx cols]; out-of-range taps are zero.
template <typename T>
void im2col_slice(const T* in, int C, int nx, int ny, int nz, int k, int pad, int z, T* col) {
    const std::size_t plane = static_cast<std::size_t>(nx) * ny;
    const std::size_t chan = plane * nz;
    std::size_t row = 0;
    for (int c = 0; c < C; ++c) {
        const T* inc = in + static_cast<std::size_t>(c) * chan;
        for (int dz = 0; dz < k; ++dz) {
            const int zz = z + dz - pad;
            for (int dy = 0; dy < k; ++dy) {
                for (int dx = 0; dx < k; ++dx, ++row) {
                    T* dst = col + row * plane;
                    if (zz < 0 || zz >= nz) {
                        std::memset(dst, 0, sizeof(T) * plane);
                        continue;
                    }
                    const int sx = dx - pad;
                    const int x0 = sx < 0 ? -sx : 0;   // first valid output x
                    const int x1 = sx > 0 ? nx - sx : nx; // one past last valid
                    for (int y = 0; y < ny; ++y) {
                        const int yy = y + dy - pad;
                        T* d = dst + static_cast<std::size_t>(y) * nx;
                        if (yy < 0 || yy >= ny) {
                            std::memset(d, 0, sizeof(T) * nx);
                            continue;
                        }
                        const T* s = inc + (static_cast<std::size_t>(zz) * ny + yy) * nx;
                        if (x0 > 0) std::memset(d, 0, sizeof(T) * x0);
                        std::memcpy(d + x0, s + x0 + sx, sizeof(T) * (x1 - x0));
                        if (x1 < nx) std::memset(d + x1, 0, sizeof(T) * (nx - x1));
                    }
                }
            }
        }
    }
}

// w'[i][o][t'] = w[o][i][k^3-1-t']  (swap channel roles, flip taps)
template <typename T>
std::vector<T> flip_transpose_weights(const std::vector<T>& w, int dim0, int dim1, int k) {
    const int taps = k * k * k;
    std::vector<T> out(w.size());
    for (int a = 0; a < dim0; ++a)
        for (int b = 0; b < dim1; ++b)
            for (int t = 0; t < taps; ++t)
                out[(static_cast<std::size_t>(b) * dim0 + a) * taps + (taps - 1 - t)] =
                    w[(static_cast<std::size_t>(a) * dim1 + b) * taps + t];
    return out;
}

template <typename T>
void check_conv_args(const TensorT<T>& in, const ConvParam<T>& p, int expect_in_ch) {
    if (p.kernel % 2 == 0)
        throw ShapeError("layer '" + p.name + "': kernel must be odd for same-size padding");
    if (in.channels() != expect_in_ch)
        throw ShapeError("layer '" + p.name + "': expected " + std::to_string(expect_in_ch) +
                         " input channels, got " + std::to_string(in.channels()) + " for input " +
                         in.shape_str());
    if (p.weight.size() != p.weight_count())
        throw ShapeError("layer '" + p.name + "': weight buffer size mismatch");
    if (static_cast<int>(p.bias.size()) != p.out_ch)
        throw ShapeError("layer '" + p.name + "': bias buffer size mismatch");
}

// Shared engine: correlation with weights laid out [rows=M][in_ch][k^3].
template <typename T>
TensorT<T> conv_engine_forward(const TensorT<T>& in, const T* weight, const T* bias, int out_ch,
                               int k, int pad) {
    const int B = in.batch(), C = in.channels();
    const int nx = in.nx(), ny = in.ny(), nz = in.nz();
    const std::size_t plane = static_cast<std::size_t>(nx) * ny;
    const std::size_t chan = plane * nz;
    TensorT<T> out(B, out_ch, nx, ny, nz);
    const int K = C * k * k * k;
    std::vector<T> col(static_cast<std::size_t>(K) * plane);
    for (int b = 0; b < B; ++b) {
        const T* in_b = in.channel_ptr(b, 0);
        T* out_b = out.channel_ptr(b, 0);
        for (int z = 0; z < nz; ++z) {
            im2col_slice(in_b, C, nx, ny, nz, k, pad, z, col.data());
            // rows of the result are written straight into each channel's z-plane
            gemm_rowmajor(out_ch, static_cast<int>(plane), K, weight, K, false, col.data(),
                          static_cast<int>(plane), out_b + z * plane, static_cast<int>(chan),
                          T(0));
        }
        if (bias)
            for (int o = 0; o < out_ch; ++o) {
                T* dst = out.channel_ptr(b, o);
                const T bo = bias[o];
                for (std::size_t i = 0; i < chan; ++i) dst[i] += bo;
            }
    }
    return out;
}

// grad_w[o][i][t] = sum_x gout[o,x] * in[i, x+t-pad]
template <typename T>
void conv_engine_grad_weight(const TensorT<T>& in, const TensorT<T>& gout, int k, int pad,
                             T* grad_w) {
    const int B = in.batch(), C = in.channels(), O = gout.channels();
    const int nx = in.nx(), ny = in.ny(), nz = in.nz();
    const std::size_t plane = static_cast<std::size_t>(nx) * ny;
    const std::size_t chan = plane * nz;
    const int K = C * k * k * k;
    std::vector<T> col(static_cast<std::size_t>(K) * plane);
    std::memset(grad_w, 0, sizeof(T) * static_cast<std::size_t>(O) * K);
    for (int b = 0; b < B; ++b) {
        const T* in_b = in.channel_ptr(b, 0);
        const T* gout_b = gout.channel_ptr(b, 0);
        for (int z = 0; z < nz; ++z) {
            im2col_slice(in_b, C, nx, ny, nz, k, pad, z, col.data());
            // [O x plane] * [plane x K] accumulated into [O x K]
            gemm_rowmajor(O, K, static_cast<int>(plane), gout_b + z * plane,
                          static_cast<int>(chan), true, col.data(), static_cast<int>(plane),
                          grad_w, K, T(1));
        }
    }
}

template <typename T>
std::vector<T> sum_over_channels(const TensorT<T>& gout) {
    std::vector<T> gb(gout.channels(), T(0));
    for (int b = 0; b < gout.batch(); ++b)
        for (int o = 0; o < gout.channels(); ++o) {
            const T* src = gout.channel_ptr(b, o);
            T acc = T(0);
            for (std::size_t i = 0; i < gout.spatial_size(); ++i) acc += src[i];
            gb[o] += acc;
        }
    return gb;
}

} // namespace

template <typename T>
TensorT<T> conv3d_forward(const TensorT<T>& in, const ConvParam<T>& p) {
    check_conv_args(in, p, p.in_ch);
    if (p.kind != LayerKind::Conv) throw ShapeError("conv3d_forward: layer is not Conv");
    return conv_engine_forward(in, p.weight.data(), p.bias.data(), p.out_ch, p.kernel, p.pad());
}

template <typename T>
ConvGrads<T> conv3d_backward(const TensorT<T>& in, const ConvParam<T>& p,
                             const TensorT<T>& grad_out, bool need_grad_input) {
    check_conv_args(in, p, p.in_ch);
    if (grad_out.channels() != p.out_ch)
        throw ShapeError("layer '" + p.name + "': grad_out channel mismatch");
    ConvGrads<T> g;
    g.weight.resize(p.weight_count());
    conv_engine_grad_weight(in, grad_out, p.kernel, p.pad(), g.weight.data());
    g.bias = sum_over_channels(grad_out);
    if (need_grad_input) {
        const auto w_ft = flip_transpose_weights(p.weight, p.out_ch, p.in_ch, p.kernel);
        g.input = conv_engine_forward(grad_out, w_ft.data(), static_cast<const T*>(nullptr),
                                      p.in_ch, p.kernel, p.pad());
    }
    return g;
}

template <typename T>
TensorT<T> tconv3d_forward(const TensorT<T>& in, const ConvParam<T>& p) {
    check_conv_args(in, p, p.in_ch);
    if (p.kind != LayerKind::TConv) throw ShapeError("tconv3d_forward: layer is not TConv");
    // stride-1 transposed convolution with same-size padding equals a
    // correlation with channel-swapped, tap-flipped weights
    const auto w_ft = flip_transpose_weights(p.weight, p.in_ch, p.out_ch, p.kernel);
    return conv_engine_forward(in, w_ft.data(), p.bias.data(), p.out_ch, p.kernel, p.pad());
}

template <typename T>
ConvGrads<T> tconv3d_backward(const TensorT<T>& in, const ConvParam<T>& p,
                              const TensorT<T>& grad_out, bool need_grad_input) {
    check_conv_args(in, p, p.in_ch);
    if (grad_out.channels() != p.out_ch)
        throw ShapeError("layer '" + p.name + "': grad_out channel mismatch");
    ConvGrads<T> g;
    // G[o][i][u] from the conv rule, then grad_w[i][o][t] = G[o][i][k^3-1-t]
    std::vector<T> G(p.weight_count());
    conv_engine_grad_weight(in, grad_out, p.kernel, p.pad(), G.data());
    g.weight = flip_transpose_weights(G, p.out_ch, p.in_ch, p.kernel);
    g.bias = sum_over_channels(grad_out);
    if (need_grad_input)
        // grad_in[i,x] = sum_{o,t} w[i,o,t] * gout[o, x+t-pad]: the stored
        // weights already have the right [i][o][t] layout for the engine
        g.input = conv_engine_forward(grad_out, p.weight.data(), static_cast<const T*>(nullptr),
                                      p.in_ch, p.kernel, p.pad());
    return g;
}

template <typename T>
TensorT<T> leaky_relu_forward(const TensorT<T>& in, T slope) {
    TensorT<T> out = in;
    for (auto& v : out.data)
        if (v < T(0)) v *= slope;
    return out;
}

template <typename T>
TensorT<T> leaky_relu_backward(const TensorT<T>& in, const TensorT<T>& grad_out, T slope) {
    require_same_shape(in, grad_out, "leaky_relu_backward");
    TensorT<T> g = grad_out;
    for (std::size_t i = 0; i < g.data.size(); ++i)
        if (!(in.data[i] > T(0))) g.data[i] *= slope;
    return g;
}

template <typename T>
PoolResult<T> maxpool3d_forward(const TensorT<T>& in) {
    const int B = in.batch(), C = in.channels();
    const int nx = in.nx(), ny = in.ny(), nz = in.nz();
    if (nx % 2 || ny % 2 || nz % 2)
        throw ShapeError("maxpool3d: spatial dims must be even, got " + in.shape_str());
    PoolResult<T> res;
    res.out = TensorT<T>(B, C, nx / 2, ny / 2, nz / 2);
    res.argmax.resize(res.out.size());
    std::size_t oi = 0;
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int z = 0; z < nz / 2; ++z)
                for (int y = 0; y < ny / 2; ++y)
                    for (int x = 0; x < nx / 2; ++x, ++oi) {
                        T best{};
                        std::uint32_t best_idx = 0;
                        bool first = true;
                        // ascending linear index order; strict > keeps the first tie
                        for (int dz = 0; dz < 2; ++dz)
                            for (int dy = 0; dy < 2; ++dy)
                                for (int dx = 0; dx < 2; ++dx) {
                                    const std::size_t idx =
                                        in.offset(b, c, 2 * x + dx, 2 * y + dy, 2 * z + dz);
                                    const T v = in.data[idx];
                                    if (first || v > best) {
                                        best = v;
                                        best_idx = static_cast<std::uint32_t>(idx);
                                        first = false;
                                    }
                                }
                        res.out.data[oi] = best;
                        res.argmax[oi] = best_idx;
                    }
    return res;
}

template <typename T>
TensorT<T> maxpool3d_backward(const std::vector<std::uint32_t>& argmax,
                              const TensorT<T>& grad_out, const std::array<int, 5>& in_shape) {
    TensorT<T> g(in_shape[0], in_shape[1], in_shape[2], in_shape[3], in_shape[4]);
    if (argmax.size() != grad_out.size())
        throw ShapeError("maxpool3d_backward: argmax/grad size mismatch");
    for (std::size_t i = 0; i < argmax.size(); ++i) g.data[argmax[i]] += grad_out.data[i];
    return g;
}

namespace {

struct AxisWeights {
    std::vector<int> i0, i1;
    std::vector<double> f; // weight of i1
};

// align_corners=false: src = dst/2 - 0.25, edge-clamped
AxisWeights upsample_axis(int n_in) {
    AxisWeights a;
    const int n_out = 2 * n_in;
    a.i0.resize(n_out);
    a.i1.resize(n_out);
    a.f.resize(n_out);
    for (int d = 0; d < n_out; ++d) {
        const double src = 0.5 * d - 0.25;
        double fl = std::floor(src);
        double f = src - fl;
        int i0 = static_cast<int>(fl);
        int i1 = i0 + 1;
        i0 = std::clamp(i0, 0, n_in - 1);
        i1 = std::clamp(i1, 0, n_in - 1);
        a.i0[d] = i0;
        a.i1[d] = i1;
        a.f[d] = f;
    }
    return a;
}

} // namespace

template <typename T>
TensorT<T> upsample_trilinear2x_forward(const TensorT<T>& in) {
    const int B = in.batch(), C = in.channels();
    const int nx = in.nx(), ny = in.ny(), nz = in.nz();
    TensorT<T> out(B, C, 2 * nx, 2 * ny, 2 * nz);
    const AxisWeights ax = upsample_axis(nx), ay = upsample_axis(ny), az = upsample_axis(nz);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int z = 0; z < 2 * nz; ++z)
                for (int y = 0; y < 2 * ny; ++y)
                    for (int x = 0; x < 2 * nx; ++x) {
                        const double fx = ax.f[x], fy = ay.f[y], fz = az.f[z];
                        double acc = 0.0;
                        const int xs[2] = {ax.i0[x], ax.i1[x]};
                        const int ys[2] = {ay.i0[y], ay.i1[y]};
                        const int zs[2] = {az.i0[z], az.i1[z]};
                        const double wx[2] = {1.0 - fx, fx};
                        const double wy[2] = {1.0 - fy, fy};
                        const double wz[2] = {1.0 - fz, fz};
                        for (int cz = 0; cz < 2; ++cz)
                            for (int cy = 0; cy < 2; ++cy)
                                for (int cx = 0; cx < 2; ++cx)
                                    acc += wz[cz] * wy[cy] * wx[cx] *
                                           static_cast<double>(in.at(b, c, xs[cx], ys[cy], zs[cz]));
                        out.at(b, c, x, y, z) = static_cast<T>(acc);
                    }
    return out;
}

template <typename T>
TensorT<T> upsample_trilinear2x_backward(const TensorT<T>& grad_out,
                                         const std::array<int, 5>& in_shape) {
    TensorT<T> g(in_shape[0], in_shape[1], in_shape[2], in_shape[3], in_shape[4]);
    const int nx = in_shape[2], ny = in_shape[3], nz = in_shape[4];
    if (grad_out.nx() != 2 * nx || grad_out.ny() != 2 * ny || grad_out.nz() != 2 * nz)
        throw ShapeError("upsample_trilinear2x_backward: shape mismatch");
    const AxisWeights ax = upsample_axis(nx), ay = upsample_axis(ny), az = upsample_axis(nz);
    for (int b = 0; b < in_shape[0]; ++b)
        for (int c = 0; c < in_shape[1]; ++c)
            for (int z = 0; z < 2 * nz; ++z)
                for (int y = 0; y < 2 * ny; ++y)
                    for (int x = 0; x < 2 * nx; ++x) {
                        const double go = grad_out.at(b, c, x, y, z);
                        const int xs[2] = {ax.i0[x], ax.i1[x]};
                        const int ys[2] = {ay.i0[y], ay.i1[y]};
                        const int zs[2] = {az.i0[z], az.i1[z]};
                        const double wx[2] = {1.0 - ax.f[x], ax.f[x]};
                        const double wy[2] = {1.0 - ay.f[y], ay.f[y]};
                        const double wz[2] = {1.0 - az.f[z], az.f[z]};
                        for (int cz = 0; cz < 2; ++cz)
                            for (int cy = 0; cy < 2; ++cy)
                                for (int cx = 0; cx < 2; ++cx)
                                    g.at(b, c, xs[cx], ys[cy], zs[cz]) +=
                                        static_cast<T>(wz[cz] * wy[cy] * wx[cx] * go);
                    }
    return g;
}

template <typename T>
TensorT<T> concat_forward(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.batch() != b.batch() || a.nx() != b.nx() || a.ny() != b.ny() || a.nz() != b.nz())
        throw ShapeError("concat: incompatible shapes " + a.shape_str() + " vs " + b.shape_str());
    TensorT<T> out(a.batch(), a.channels() + b.channels(), a.nx(), a.ny(), a.nz());
    const std::size_t chan = a.spatial_size();
    for (int bi = 0; bi < a.batch(); ++bi) {
        for (int c = 0; c < a.channels(); ++c)
            std::memcpy(out.channel_ptr(bi, c), a.channel_ptr(bi, c), sizeof(T) * chan);
        for (int c = 0; c < b.channels(); ++c)
            std::memcpy(out.channel_ptr(bi, a.channels() + c), b.channel_ptr(bi, c),
                        sizeof(T) * chan);
    }
    return out;
}

template <typename T>
std::pair<TensorT<T>, TensorT<T>> concat_backward(const TensorT<T>& grad_out, int channels_a,
                                                  int channels_b) {
    if (grad_out.channels() != channels_a + channels_b)
        throw ShapeError("concat_backward: channel split mismatch");
    TensorT<T> ga(grad_out.batch(), channels_a, grad_out.nx(), grad_out.ny(), grad_out.nz());
    TensorT<T> gb(grad_out.batch(), channels_b, grad_out.nx(), grad_out.ny(), grad_out.nz());
    const std::size_t chan = grad_out.spatial_size();
    for (int bi = 0; bi < grad_out.batch(); ++bi) {
        for (int c = 0; c < channels_a; ++c)
            std::memcpy(ga.channel_ptr(bi, c), grad_out.channel_ptr(bi, c), sizeof(T) * chan);
        for (int c = 0; c < channels_b; ++c)
            std::memcpy(gb.channel_ptr(bi, c), grad_out.channel_ptr(bi, channels_a + c),
                        sizeof(T) * chan);
    }
    return {std::move(ga), std::move(gb)};
}

namespace {

template <typename T>
std::size_t mse_count(const TensorT<T>& pred, const std::vector<std::uint8_t>* mask) {
    if (!mask) return pred.size();
    if (mask->size() != pred.spatial_size())
        throw ShapeError("mse: mask size does not match spatial size");
    std::size_t m = 0;
    for (auto v : *mask) m += (v != 0);
    if (m == 0) throw ShapeError("mse: empty mask");
    return m * static_cast<std::size_t>(pred.batch()) * pred.channels();
}

} // namespace

template <typename T>
double mse_forward(const TensorT<T>& pred, const TensorT<T>& target,
                   const std::vector<std::uint8_t>* mask) {
    require_same_shape(pred, target, "mse");
    const std::size_t n = mse_count(pred, mask);
    const std::size_t chan = pred.spatial_size();
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (mask && !(*mask)[i % chan]) continue;
        const double d = static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(n);
}

template <typename T>
TensorT<T> mse_backward(const TensorT<T>& pred, const TensorT<T>& target,
                        const std::vector<std::uint8_t>* mask) {
    require_same_shape(pred, target, "mse");
    const std::size_t n = mse_count(pred, mask);
    const std::size_t chan = pred.spatial_size();
    TensorT<T> g(pred.batch(), pred.channels(), pred.nx(), pred.ny(), pred.nz());
    const T scale = static_cast<T>(2.0 / static_cast<double>(n));
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (mask && !(*mask)[i % chan]) continue;
        g.data[i] = scale * (pred.data[i] - target.data[i]);
    }
    return g;
}

// explicit instantiations: f32 for training, f64 for gradient checking
#define B0CAST_INSTANTIATE_OPS(T)                                                                  \
    template TensorT<T> conv3d_forward<T>(const TensorT<T>&, const ConvParam<T>&);                 \
    template ConvGrads<T> conv3d_backward<T>(const TensorT<T>&, const ConvParam<T>&,               \
                                             const TensorT<T>&, bool);                             \
    template TensorT<T> tconv3d_forward<T>(const TensorT<T>&, const ConvParam<T>&);                \
    template ConvGrads<T> tconv3d_backward<T>(const TensorT<T>&, const ConvParam<T>&,              \
                                              const TensorT<T>&, bool);                            \
    template TensorT<T> leaky_relu_forward<T>(const TensorT<T>&, T);                               \
    template TensorT<T> leaky_relu_backward<T>(const TensorT<T>&, const TensorT<T>&, T);           \
    template PoolResult<T> maxpool3d_forward<T>(const TensorT<T>&);                                \
    template TensorT<T> maxpool3d_backward<T>(const std::vector<std::uint32_t>&,                   \
                                              const TensorT<T>&, const std::array<int, 5>&);       \
    template TensorT<T> upsample_trilinear2x_forward<T>(const TensorT<T>&);                        \
    template TensorT<T> upsample_trilinear2x_backward<T>(const TensorT<T>&,                        \
                                                         const std::array<int, 5>&);               \
    template TensorT<T> concat_forward<T>(const TensorT<T>&, const TensorT<T>&);                   \
    template std::pair<TensorT<T>, TensorT<T>> concat_backward<T>(const TensorT<T>&, int, int);    \
    template double mse_forward<T>(const TensorT<T>&, const TensorT<T>&,                           \
                                   const std::vector<std::uint8_t>*);                              \
    template TensorT<T> mse_backward<T>(const TensorT<T>&, const TensorT<T>&,                      \
                                        const std::vector<std::uint8_t>*);

B0CAST_INSTANTIATE_OPS(float)
B0CAST_INSTANTIATE_OPS(double)

#undef B0CAST_INSTANTIATE_OPS

} // namespace b0cast::nn
