#pragma once

#include "sage/errors.hpp"

namespace sage {

enum class ScheduleKind { constant, linear_warmup_decay, inverse_sqrt };

struct ScheduleSpec {
    ScheduleKind kind = ScheduleKind::constant;
    double peak_lr = 1e-3;
    long warmup_steps = 0;
    long total_steps = 1;  // required for linear decay
};

void validate_schedule(const ScheduleSpec& s);

// Base learning rate at step t (1-indexed).
double base_lr(const ScheduleSpec& s, long t);

}  // namespace sage
