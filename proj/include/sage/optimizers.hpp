#pragma once

#include <optional>
#include <vector>

#include "sage/sage_core.hpp"

namespace sage {

enum class BaseOptimizer { sgd, sgd_momentum, adam, adamax };

// How the sensitivity-modulated Adam step is assembled. `corrected`
// drops the trailing elementwise-gradient factor so that an identity
// modulation reduces exactly to Adam; `verbatim` keeps it.
enum class AdamSageForm { corrected, verbatim };

// power_t divides EMAs by (1 - beta^t); one_minus_beta divides by the
// constant (1 - beta).
enum class BiasCorrectionForm { power_t, one_minus_beta };

struct OptimizerConfig {
    BaseOptimizer base = BaseOptimizer::sgd;
    bool sage_enabled = false;
    ModulationVariant variant = ModulationVariant::sage;
    double beta0 = 0.7;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon_opt = 1e-8;
    double epsilon_sage = 1e-8;
    double momentum = 0.9;
    double weight_decay = 0.0;
    bool decoupled_decay = true;
    std::optional<double> grad_clip_norm;
    AdamSageForm adam_sage_update_form = AdamSageForm::corrected;
    BiasCorrectionForm bias_correction_form = BiasCorrectionForm::power_t;
};

void validate_optimizer_config(const OptimizerConfig& c);

struct OptimizerState {
    std::vector<double> m;  // first moment
    std::vector<double> v;  // second moment, or infinity-norm accumulator
    SensitivityState sens;
    long t = 0;

    // Diagnostics from the most recent step (empty before the first
    // step, or when sage is disabled).
    std::vector<double> last_modulation;
    std::vector<double> last_sensitivity;
    std::vector<double> last_variation;
};

OptimizerState make_optimizer(const OptimizerConfig& c, std::size_t n_params);

// One update. `grads` is taken by value: clipping and coupled weight
// decay modify the working copy. Throws DivergenceError when any
// parameter leaves the finite range.
void optimizer_step(const OptimizerConfig& c, OptimizerState& state,
                    std::vector<double>& params, std::vector<double> grads,
                    double lr);

}  // namespace sage
