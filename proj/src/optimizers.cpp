#include "sage/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace sage {

void validate_optimizer_config(const OptimizerConfig& c) {
    if (c.sage_enabled && !(c.beta0 > 0.0 && c.beta0 < 1.0))
        throw ConfigError("beta0 must lie in (0, 1)");
    if (!(c.beta1 >= 0.0 && c.beta1 < 1.0))
        throw ConfigError("beta1 must lie in [0, 1)");
    if (!(c.beta2 >= 0.0 && c.beta2 < 1.0))
        throw ConfigError("beta2 must lie in [0, 1)");
    if (c.epsilon_opt <= 0.0) throw ConfigError("epsilon_opt must be > 0");
    if (c.epsilon_sage <= 0.0) throw ConfigError("epsilon_sage must be > 0");
    if (!(c.momentum >= 0.0 && c.momentum < 1.0))
        throw ConfigError("momentum must lie in [0, 1)");
    if (c.weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (c.grad_clip_norm && *c.grad_clip_norm <= 0.0)
        throw ConfigError("grad_clip_norm must be > 0");
}

OptimizerState make_optimizer(const OptimizerConfig& c, std::size_t n_params) {
    validate_optimizer_config(c);
    if (n_params == 0) throw ConfigError("param_count must be > 0");
    OptimizerState s;
    s.m.assign(n_params, 0.0);
    s.v.assign(n_params, 0.0);
    s.sens = make_sensitivity_state(
        n_params, c.sage_enabled ? c.beta0 : 0.5, c.epsilon_sage);
    return s;
}

namespace {

void clip_gradient(std::vector<double>& g, double max_norm) {
    double sq = 0.0;
    for (double x : g) sq += x * x;
    double norm = std::sqrt(sq);
    if (norm > max_norm) {
        double scale = max_norm / norm;
        for (double& x : g) x *= scale;
    }
}

void check_finite_params(const std::vector<double>& params, long step) {
    double worst = -1.0;
    std::size_t worst_idx = 0;
    bool bad = false;
    for (std::size_t j = 0; j < params.size(); ++j) {
        if (!std::isfinite(params[j])) {
            bad = true;
            double mag = std::isnan(params[j])
                             ? std::numeric_limits<double>::infinity()
                             : std::fabs(params[j]);
            if (mag > worst || !std::isfinite(worst)) {
                worst = mag;
                worst_idx = j;
            }
        }
    }
    if (bad)
        throw DivergenceError("non-finite parameter at step " +
                                  std::to_string(step) + ", index " +
                                  std::to_string(worst_idx),
                              step, worst_idx);
}

}  // namespace

void optimizer_step(const OptimizerConfig& c, OptimizerState& state,
                    std::vector<double>& params, std::vector<double> grads,
                    double lr) {
    if (params.size() != state.m.size() || grads.size() != state.m.size())
        throw ConfigError("optimizer_step: array length mismatch");
    state.t += 1;
    long t = state.t;

    if (c.grad_clip_norm) clip_gradient(grads, *c.grad_clip_norm);

    // Sensitivity is measured on the clipped loss gradient, before any
    // weight-decay term enters.
    std::vector<double> I, U, mod;
    if (c.sage_enabled) {
        I = sensitivity(params, grads);
        update_ema(state.sens, I);
    }

    if (c.weight_decay > 0.0 && !c.decoupled_decay)
        for (std::size_t j = 0; j < grads.size(); ++j)
            grads[j] += c.weight_decay * params[j];

    std::size_t n = params.size();
    switch (c.base) {
        case BaseOptimizer::sgd:
        case BaseOptimizer::sgd_momentum: {
            // Algorithm-1 ordering: U against the updated ema, no bias
            // correction on the sensitivity EMA.
            if (c.sage_enabled) {
                U = local_temporal_variation(I, state.sens.ema);
                mod = modulation(U, state.sens.ema, c.epsilon_sage, c.variant);
            }
            const double* step_src = grads.data();
            if (c.base == BaseOptimizer::sgd_momentum) {
                for (std::size_t j = 0; j < n; ++j)
                    state.m[j] = c.momentum * state.m[j] + grads[j];
                step_src = state.m.data();
            }
            if (c.sage_enabled) {
                for (std::size_t j = 0; j < n; ++j)
                    params[j] -= lr * mod[j] * step_src[j];
            } else {
                for (std::size_t j = 0; j < n; ++j)
                    params[j] -= lr * step_src[j];
            }
            break;
        }
        case BaseOptimizer::adam:
        case BaseOptimizer::adamax: {
            double c1 = c.bias_correction_form == BiasCorrectionForm::power_t
                            ? 1.0 - std::pow(c.beta1, t)
                            : 1.0 - c.beta1;
            double c2 = c.bias_correction_form == BiasCorrectionForm::power_t
                            ? 1.0 - std::pow(c.beta2, t)
                            : 1.0 - c.beta2;
            for (std::size_t j = 0; j < n; ++j)
                state.m[j] = c.beta1 * state.m[j] + (1.0 - c.beta1) * grads[j];
            if (c.base == BaseOptimizer::adam) {
                for (std::size_t j = 0; j < n; ++j)
                    state.v[j] = c.beta2 * state.v[j] +
                                 (1.0 - c.beta2) * grads[j] * grads[j];
            } else {
                // infinity-norm accumulator; no bias correction on u
                for (std::size_t j = 0; j < n; ++j)
                    state.v[j] =
                        std::max(c.beta2 * state.v[j], std::fabs(grads[j]));
            }
            if (c.sage_enabled) {
                double c0 =
                    c.bias_correction_form == BiasCorrectionForm::power_t
                        ? 1.0 - std::pow(c.beta0, t)
                        : 1.0 - c.beta0;
                std::vector<double> ema_hat(n);
                for (std::size_t j = 0; j < n; ++j)
                    ema_hat[j] = state.sens.ema[j] / c0;
                U = local_temporal_variation(I, ema_hat);
                mod = modulation(U, ema_hat, c.epsilon_sage, c.variant);
            }
            bool verbatim = c.sage_enabled &&
                            c.adam_sage_update_form == AdamSageForm::verbatim;
            for (std::size_t j = 0; j < n; ++j) {
                double m_hat = state.m[j] / c1;
                double denom = c.base == BaseOptimizer::adam
                                   ? std::sqrt(state.v[j] / c2) + c.epsilon_opt
                                   : state.v[j] + c.epsilon_opt;
                double step_val = m_hat / denom;
                if (c.sage_enabled) step_val *= mod[j];
                if (verbatim) step_val *= grads[j];
                params[j] -= lr * step_val;
            }
            break;
        }
    }

    if (c.weight_decay > 0.0 && c.decoupled_decay)
        for (std::size_t j = 0; j < n; ++j)
            params[j] -= lr * c.weight_decay * params[j];

    if (c.sage_enabled) {
        state.last_sensitivity = std::move(I);
        state.last_variation = std::move(U);
        state.last_modulation = std::move(mod);
    }

    check_finite_params(params, t);
}

}  // namespace sage
