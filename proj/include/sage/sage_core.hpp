#pragma once

#include <vector>

#include "sage/errors.hpp"

namespace sage {

// EMA of per-parameter sensitivity; the memory the schedule carries
// between steps. ema starts at zero.
struct SensitivityState {
    std::vector<double> ema;
    double beta0 = 0.7;
    double epsilon = 1e-8;
    long step = 0;
};

SensitivityState make_sensitivity_state(std::size_t n, double beta0,
                                        double epsilon = 1e-8);

enum class ModulationVariant {
    sage,         // (U+eps) / (ema+eps)
    v1_prod,      // (ema+eps) * (U+eps)
    v2_inv,       // (ema+eps) / (U+eps)
    v3_ema_only,  // ema+eps
    v4_inv_ema,   // 1 / (ema+eps)
    v5_var_only,  // U+eps
    identity      // all ones (baseline-equivalence plumbing)
};

// I_j = |theta_j * g_j|.
std::vector<double> sensitivity(const std::vector<double>& params,
                                const std::vector<double>& grads);

// ema <- beta0*ema + (1-beta0)*I; step += 1.
void update_ema(SensitivityState& state, const std::vector<double>& I);

// U_j = |I_j - ema_j|, against the already-updated ema.
std::vector<double> local_temporal_variation(const std::vector<double>& I,
                                             const std::vector<double>& ema);

// Per-parameter learning-rate multiplier.
std::vector<double> modulation(const std::vector<double>& U,
                               const std::vector<double>& ema, double epsilon,
                               ModulationVariant variant);

}  // namespace sage
