// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "latent.hpp"
#include "operators.hpp"

#include <optional>
#include <vector>

namespace dcdp {

struct FidelityConfig {
    int tau = 100;          // gradient steps per outer iteration
    double learning_rate = 0.1;
    double momentum = 0.9;  // in [0, 1)
    // Optional loss floor: stop early once the loss drops to this value.
    // Useful with noisy measurements to avoid fitting the noise.
    std::optional<double> stop_loss;
};

// 0.5 * |A(x) - y|^2
double fidelity_loss(const LinearOperator& op, const Vec& x, const Vec& y);

// Runs exactly tau momentum-GD updates on the fidelity loss starting from
// v_init (velocity starts at zero). Appends the per-step loss to loss_trace
// when provided (initial loss first, then one entry per step).
Vec data_fidelity(const LinearOperator& op, const Vec& y, const Vec& v_init,
                  const FidelityConfig& cfg, std::vector<double>* loss_trace = nullptr);

// Same objective composed with the decoder: 0.5 * |A(D(z)) - y|^2,
// gradient D^T A^T (A D z - y), optimized over the latent vector.
Vec data_fidelity_latent(const LinearOperator& op, const Vec& y, const Vec& vhat_init,
                         const LinearCodec& codec, const FidelityConfig& cfg,
                         std::vector<double>* loss_trace = nullptr);

} // namespace dcdp
