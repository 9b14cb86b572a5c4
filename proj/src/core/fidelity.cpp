// SPDX-License-Identifier: Apache-2.0
#include "fidelity.hpp"

#include <functional>
#include <stdexcept>
#include <string>

namespace dcdp {

namespace {

void validate(const FidelityConfig& cfg) {
    if (cfg.tau < 0) throw std::invalid_argument("FidelityConfig: tau must be nonnegative");
    if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("FidelityConfig: learning_rate must be positive");
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
        throw std::invalid_argument("FidelityConfig: momentum must be in [0, 1)");
}

// Shared momentum-GD loop; loss/grad evaluate the composed objective.
Vec momentum_descent(Vec x, const FidelityConfig& cfg,
                     const std::function<double(const Vec&)>& loss,
                     const std::function<Vec(const Vec&)>& grad,
                     std::vector<double>* loss_trace) {
    validate(cfg);
    double l = loss(x);
    if (loss_trace) loss_trace->push_back(l);
    Vec velocity = Vec::Zero(x.size());
    for (int step = 0; step < cfg.tau; ++step) {
        velocity = cfg.momentum * velocity - cfg.learning_rate * grad(x);
        x += velocity;
        l = loss(x);
        if (!std::isfinite(l) || !x.allFinite())
            throw std::runtime_error("data_fidelity: diverged (non-finite state) at inner step " +
                                     std::to_string(step + 1));
        if (loss_trace) loss_trace->push_back(l);
        if (cfg.stop_loss && l <= *cfg.stop_loss) break;
    }
    return x;
}

} // namespace

double fidelity_loss(const LinearOperator& op, const Vec& x, const Vec& y) {
    if (x.size() != op.in_shape().size() || y.size() != op.out_shape().size())
        throw std::invalid_argument("fidelity_loss: shape mismatch");
    return 0.5 * (op.apply(x) - y).squaredNorm();
}

Vec data_fidelity(const LinearOperator& op, const Vec& y, const Vec& v_init,
                  const FidelityConfig& cfg, std::vector<double>* loss_trace) {
    if (v_init.size() != op.in_shape().size())
        throw std::invalid_argument("data_fidelity: v_init does not match operator input shape");
    if (y.size() != op.out_shape().size())
        throw std::invalid_argument("data_fidelity: y does not match operator output shape");
    return momentum_descent(
        v_init, cfg,
        [&](const Vec& x) { return 0.5 * (op.apply(x) - y).squaredNorm(); },
        [&](const Vec& x) { return op.adjoint(op.apply(x) - y); },
        loss_trace);
}

Vec data_fidelity_latent(const LinearOperator& op, const Vec& y, const Vec& vhat_init,
                         const LinearCodec& codec, const FidelityConfig& cfg,
                         std::vector<double>* loss_trace) {
    if (vhat_init.size() != codec.latent_dim())
        throw std::invalid_argument("data_fidelity_latent: vhat_init does not match latent dim");
    if (codec.pixel_dim() != op.in_shape().size())
        throw std::invalid_argument("data_fidelity_latent: codec/operator shape mismatch");
    if (y.size() != op.out_shape().size())
        throw std::invalid_argument("data_fidelity_latent: y does not match operator output shape");
    return momentum_descent(
        vhat_init, cfg,
        [&](const Vec& z) { return 0.5 * (op.apply(codec.decode(z)) - y).squaredNorm(); },
        [&](const Vec& z) {
            return Vec(codec.decode_matrix().transpose() * op.adjoint(op.apply(codec.decode(z)) - y));
        },
        loss_trace);
}

} // namespace dcdp
