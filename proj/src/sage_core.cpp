#include "sage/sage_core.hpp"

#include <cmath>
#include <string>

namespace sage {

SensitivityState make_sensitivity_state(std::size_t n, double beta0,
                                        double epsilon) {
    if (!(beta0 > 0.0 && beta0 < 1.0))
        throw ConfigError("beta0 must lie in (0, 1)");
    if (epsilon <= 0.0) throw ConfigError("epsilon must be > 0");
    SensitivityState s;
    s.ema.assign(n, 0.0);
    s.beta0 = beta0;
    s.epsilon = epsilon;
    return s;
}

std::vector<double> sensitivity(const std::vector<double>& params,
                                const std::vector<double>& grads) {
    if (params.size() != grads.size())
        throw ConfigError("sensitivity: params/grads length mismatch");
    std::vector<double> I(params.size());
    for (std::size_t j = 0; j < I.size(); ++j)
        I[j] = std::fabs(params[j] * grads[j]);
    return I;
}

void update_ema(SensitivityState& state, const std::vector<double>& I) {
    if (state.ema.size() != I.size())
        throw ConfigError("update_ema: length mismatch");
    for (double x : I)
        if (x < 0.0)
            throw ConfigError("update_ema: sensitivity must be non-negative");
    double b = state.beta0;
    for (std::size_t j = 0; j < I.size(); ++j)
        state.ema[j] = b * state.ema[j] + (1.0 - b) * I[j];
    state.step += 1;
}

std::vector<double> local_temporal_variation(const std::vector<double>& I,
                                             const std::vector<double>& ema) {
    if (I.size() != ema.size())
        throw ConfigError("local_temporal_variation: length mismatch");
    std::vector<double> U(I.size());
    for (std::size_t j = 0; j < I.size(); ++j)
        U[j] = std::fabs(I[j] - ema[j]);
    return U;
}

std::vector<double> modulation(const std::vector<double>& U,
                               const std::vector<double>& ema, double epsilon,
                               ModulationVariant variant) {
    if (U.size() != ema.size())
        throw ConfigError("modulation: length mismatch");
    if (epsilon <= 0.0) throw ConfigError("modulation: epsilon must be > 0");
    std::vector<double> r(U.size());
    switch (variant) {
        case ModulationVariant::sage:
            for (std::size_t j = 0; j < r.size(); ++j)
                r[j] = (U[j] + epsilon) / (ema[j] + epsilon);
            break;
        case ModulationVariant::v1_prod:
            for (std::size_t j = 0; j < r.size(); ++j)
                r[j] = (ema[j] + epsilon) * (U[j] + epsilon);
            break;
        case ModulationVariant::v2_inv:
            for (std::size_t j = 0; j < r.size(); ++j)
                r[j] = (ema[j] + epsilon) / (U[j] + epsilon);
            break;
        case ModulationVariant::v3_ema_only:
            for (std::size_t j = 0; j < r.size(); ++j) r[j] = ema[j] + epsilon;
            break;
        case ModulationVariant::v4_inv_ema:
            for (std::size_t j = 0; j < r.size(); ++j)
                r[j] = 1.0 / (ema[j] + epsilon);
            break;
        case ModulationVariant::v5_var_only:
            for (std::size_t j = 0; j < r.size(); ++j) r[j] = U[j] + epsilon;
            break;
        case ModulationVariant::identity:
            for (std::size_t j = 0; j < r.size(); ++j) r[j] = 1.0;
            break;
    }
    return r;
}

}  // namespace sage
