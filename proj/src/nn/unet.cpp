#include "b0cast/nn/unet.hpp"

#include <cmath>

#include "b0cast/rng.hpp"

namespace b0cast::nn {

void UNetConfig::validate() const {
    if (levels < 2) throw ConfigError("UNetConfig: levels must be >= 2");
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("UNetConfig: kernel must be odd");
    if (base_channels < 1) throw ConfigError("UNetConfig: base_channels must be positive");
    if (in_channels < 1 || out_channels < 1)
        throw ConfigError("UNetConfig: channel counts must be positive");
    if (!(leaky_slope >= 0.0f)) throw ConfigError("UNetConfig: leaky_slope must be >= 0");
}

std::vector<int> UNetConfig::channel_schedule() const {
    std::vector<int> cs(levels);
    for (int l = 0; l < levels; ++l) cs[l] = base_channels << l;
    return cs;
}

void UNetParams::reset_adam() {
    m_w.assign(layers.size(), {});
    v_w.assign(layers.size(), {});
    m_b.assign(layers.size(), {});
    v_b.assign(layers.size(), {});
    for (std::size_t i = 0; i < layers.size(); ++i) {
        m_w[i].assign(layers[i].weight.size(), 0.0f);
        v_w[i].assign(layers[i].weight.size(), 0.0f);
        m_b[i].assign(layers[i].bias.size(), 0.0f);
        v_b[i].assign(layers[i].bias.size(), 0.0f);
    }
    adam_step_count = 0;
}

void UNetParams::check_finite(const char* where) const {
    for (const auto& l : layers) {
        for (float v : l.weight)
            if (!std::isfinite(v)) throw NumericalError(std::string(where) + ": non-finite weight in " + l.name);
        for (float v : l.bias)
            if (!std::isfinite(v)) throw NumericalError(std::string(where) + ": non-finite bias in " + l.name);
    }
}

namespace {

ConvParam<float> make_layer(LayerKind kind, const std::string& name, int in_ch, int out_ch,
                            int kernel, Rng& rng) {
    ConvParam<float> p;
    p.kind = kind;
    p.name = name;
    p.in_ch = in_ch;
    p.out_ch = out_ch;
    p.kernel = kernel;
    const std::size_t nw = p.weight_count();
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch) * kernel * kernel * kernel);
    p.weight.resize(nw);
    for (auto& w : p.weight) w = static_cast<float>(rng.uniform(-bound, bound));
    p.bias.resize(out_ch);
    for (auto& b : p.bias) b = static_cast<float>(rng.uniform(-bound, bound));
    return p;
}

} // namespace

UNetParams build_unet(const UNetConfig& config, std::uint64_t seed) {
    config.validate();
    UNetParams params;
    params.config = config;
    params.seed = seed;
    Rng rng(seed);
    const auto cs = config.channel_schedule();
    const int L = config.levels;
    const int k = config.kernel;

    // encoder levels 1..L-1 (two convs each, pooled after)
    for (int i = 1; i <= L - 1; ++i) {
        const int cin = i == 1 ? config.in_channels : cs[i - 2];
        const std::string tag = "enc" + std::to_string(i);
        params.layers.push_back(make_layer(LayerKind::Conv, tag + "_conv1", cin, cs[i - 1], k, rng));
        params.layers.push_back(
            make_layer(LayerKind::Conv, tag + "_conv2", cs[i - 1], cs[i - 1], k, rng));
    }
    // bottom (level L): two convs + one tconv
    params.layers.push_back(make_layer(LayerKind::Conv, "bottom_conv1", cs[L - 2], cs[L - 1], k, rng));
    params.layers.push_back(make_layer(LayerKind::Conv, "bottom_conv2", cs[L - 1], cs[L - 1], k, rng));
    params.layers.push_back(
        make_layer(LayerKind::TConv, "bottom_tconv", cs[L - 1], cs[L - 2], k, rng));
    // decoder levels L-1..1: concat -> tconv -> tconv (-> upsample between levels)
    for (int i = L - 1; i >= 1; --i) {
        const std::string tag = "dec" + std::to_string(i);
        const int cout2 = i > 1 ? cs[i - 2] : cs[0];
        params.layers.push_back(
            make_layer(LayerKind::TConv, tag + "_tconv1", 2 * cs[i - 1], cs[i - 1], k, rng));
        params.layers.push_back(
            make_layer(LayerKind::TConv, tag + "_tconv2", cs[i - 1], cout2, k, rng));
    }
    // 1x1x1 projection head
    params.layers.push_back(make_layer(LayerKind::Conv, "head", cs[0], config.out_channels, 1, rng));

    params.reset_adam();
    return params;
}

namespace {

struct LayerWalk {
    const UNetParams& params;
    UNetCache* cache;
    int idx = 0;

    Tensor5 conv_act(const Tensor5& x) {
        const auto& layer = params.layers[static_cast<std::size_t>(idx)];
        Tensor5 pre = layer.kind == LayerKind::Conv ? conv3d_forward(x, layer)
                                                    : tconv3d_forward(x, layer);
        Tensor5 post = leaky_relu_forward(pre, params.config.leaky_slope);
        if (cache) {
            cache->conv_in.push_back(x);
            cache->conv_pre.push_back(std::move(pre));
        }
        ++idx;
        return post;
    }

    Tensor5 conv_linear(const Tensor5& x) { // head: no activation
        const auto& layer = params.layers[static_cast<std::size_t>(idx)];
        Tensor5 pre = conv3d_forward(x, layer);
        if (cache) {
            cache->conv_in.push_back(x);
            cache->conv_pre.push_back(pre);
        }
        ++idx;
        return pre;
    }
};

} // namespace

Tensor5 unet_forward(const UNetParams& params, const Tensor5& input, UNetCache* cache) {
    const auto& cfg = params.config;
    cfg.validate();
    if (input.channels() != cfg.in_channels)
        throw ShapeError("unet_forward: expected " + std::to_string(cfg.in_channels) +
                         " input channels, got " + input.shape_str());
    const int div = cfg.spatial_divisor();
    if (input.nx() % div || input.ny() % div || input.nz() % div)
        throw ShapeError("unet_forward: spatial dims of " + input.shape_str() +
                         " must be divisible by " + std::to_string(div));

    LayerWalk walk{params, cache};
    const int L = cfg.levels;

    std::vector<Tensor5> skips;
    Tensor5 x = input;
    for (int i = 1; i <= L - 1; ++i) {
        x = walk.conv_act(x);
        x = walk.conv_act(x);
        skips.push_back(x);
        PoolResult<float> pooled = maxpool3d_forward(x);
        if (cache) {
            cache->pool_argmax.push_back(std::move(pooled.argmax));
            cache->pool_in_shape.push_back(x.shape);
        }
        x = std::move(pooled.out);
    }

    x = walk.conv_act(x); // bottom_conv1
    x = walk.conv_act(x); // bottom_conv2
    x = walk.conv_act(x); // bottom_tconv

    for (int i = L - 1; i >= 1; --i) {
        if (cache) cache->upsample_in_shape.push_back(x.shape);
        x = upsample_trilinear2x_forward(x);
        x = concat_forward(skips[static_cast<std::size_t>(i - 1)], x);
        x = walk.conv_act(x);
        x = walk.conv_act(x);
    }

    return walk.conv_linear(x); // head
}

UNetGrads zero_grads(const UNetParams& params) {
    UNetGrads g;
    g.weight.resize(params.layers.size());
    g.bias.resize(params.layers.size());
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        g.weight[i].assign(params.layers[i].weight.size(), 0.0f);
        g.bias[i].assign(params.layers[i].bias.size(), 0.0f);
    }
    return g;
}

void UNetGrads::add_scaled(const UNetGrads& other, float scale) {
    for (std::size_t i = 0; i < weight.size(); ++i) {
        for (std::size_t j = 0; j < weight[i].size(); ++j) weight[i][j] += scale * other.weight[i][j];
        for (std::size_t j = 0; j < bias[i].size(); ++j) bias[i][j] += scale * other.bias[i][j];
    }
}

UNetGrads unet_backward(const UNetParams& params, const UNetCache& cache,
                        const Tensor5& grad_output) {
    const auto& cfg = params.config;
    const int L = cfg.levels;
    UNetGrads grads = zero_grads(params);

    int idx = static_cast<int>(params.layers.size()) - 1;
    auto conv_grad = [&](const Tensor5& gpost, bool through_act, bool need_input) -> Tensor5 {
        const auto& layer = params.layers[static_cast<std::size_t>(idx)];
        const Tensor5& pre = cache.conv_pre[static_cast<std::size_t>(idx)];
        const Tensor5& in = cache.conv_in[static_cast<std::size_t>(idx)];
        Tensor5 gpre =
            through_act ? leaky_relu_backward(pre, gpost, params.config.leaky_slope) : gpost;
        ConvGrads<float> g = layer.kind == LayerKind::Conv
                                 ? conv3d_backward(in, layer, gpre, need_input)
                                 : tconv3d_backward(in, layer, gpre, need_input);
        grads.weight[static_cast<std::size_t>(idx)] = std::move(g.weight);
        grads.bias[static_cast<std::size_t>(idx)] = std::move(g.bias);
        --idx;
        return std::move(g.input);
    };

    // head (linear)
    Tensor5 gx = conv_grad(grad_output, false, true);

    // decoder levels 1..L-1 in reverse of the forward walk
    std::vector<Tensor5> skip_grads(static_cast<std::size_t>(L - 1));
    const auto cs = cfg.channel_schedule();
    for (int i = 1; i <= L - 1; ++i) {
        gx = conv_grad(gx, true, true); // dec{i}_tconv2
        gx = conv_grad(gx, true, true); // dec{i}_tconv1
        auto [gskip, gup] = concat_backward(gx, cs[static_cast<std::size_t>(i - 1)],
                                            cs[static_cast<std::size_t>(i - 1)]);
        skip_grads[static_cast<std::size_t>(i - 1)] = std::move(gskip);
        const auto& ushape =
            cache.upsample_in_shape[static_cast<std::size_t>(L - 1 - i)];
        gx = upsample_trilinear2x_backward(gup, ushape);
    }

    // bottom
    gx = conv_grad(gx, true, true); // bottom_tconv
    gx = conv_grad(gx, true, true); // bottom_conv2
    gx = conv_grad(gx, true, true); // bottom_conv1

    // encoder levels L-1..1
    for (int i = L - 1; i >= 1; --i) {
        const auto& pshape = cache.pool_in_shape[static_cast<std::size_t>(i - 1)];
        gx = maxpool3d_backward(cache.pool_argmax[static_cast<std::size_t>(i - 1)], gx, pshape);
        // the pooled tensor is also the skip: merge both gradient paths
        const Tensor5& gskip = skip_grads[static_cast<std::size_t>(i - 1)];
        for (std::size_t j = 0; j < gx.data.size(); ++j) gx.data[j] += gskip.data[j];
        gx = conv_grad(gx, true, true);          // enc{i}_conv2
        gx = conv_grad(gx, true, i > 1);         // enc{i}_conv1 (input grad unused at i=1)
    }

    return grads;
}

} // namespace b0cast::nn
