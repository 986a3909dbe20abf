#pragma once

#include <cmath>
#include <vector>

#include "b0cast/errors.hpp"

namespace b0cast::nn {

struct AdamHyper {
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-7; // loss-coupled L2 (classic Adam)
};

// One Adam update. t is the 1-based step count after this update.
template <typename T>
void adam_step(std::vector<T>& w, const std::vector<T>& grad, std::vector<T>& m,
               std::vector<T>& v, long t, const AdamHyper& h) {
    if (w.size() != grad.size() || w.size() != m.size() || w.size() != v.size())
        throw ShapeError("adam_step: buffer size mismatch");
    const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double g = static_cast<double>(grad[i]) + h.weight_decay * static_cast<double>(w[i]);
        const double mi = h.beta1 * static_cast<double>(m[i]) + (1.0 - h.beta1) * g;
        const double vi = h.beta2 * static_cast<double>(v[i]) + (1.0 - h.beta2) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double mhat = mi / bc1;
        const double vhat = vi / bc2;
        w[i] = static_cast<T>(static_cast<double>(w[i]) - h.lr * mhat / (std::sqrt(vhat) + h.eps));
    }
}

} // namespace b0cast::nn
