#include "sage/schedules.hpp"

#include <cmath>

namespace sage {

void validate_schedule(const ScheduleSpec& s) {
    if (s.peak_lr <= 0.0) throw ConfigError("peak_lr must be > 0");
    if (s.warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
    if (s.kind == ScheduleKind::linear_warmup_decay) {
        if (s.total_steps < 1)
            throw ConfigError("linear decay requires total_steps >= 1");
        if (s.warmup_steps > s.total_steps)
            throw ConfigError("warmup_steps must be <= total_steps");
    }
    if (s.kind == ScheduleKind::inverse_sqrt && s.warmup_steps < 1)
        throw ConfigError("inverse_sqrt requires warmup_steps >= 1");
}

double base_lr(const ScheduleSpec& s, long t) {
    if (t < 1) throw ConfigError("step index must be >= 1");
    switch (s.kind) {
        case ScheduleKind::constant:
            return s.peak_lr;
        case ScheduleKind::linear_warmup_decay: {
            if (t > s.total_steps)
                throw ConfigError("step index exceeds total_steps");
            if (t <= s.warmup_steps)
                return s.peak_lr * static_cast<double>(t) /
                       static_cast<double>(s.warmup_steps);
            return s.peak_lr * static_cast<double>(s.total_steps - t) /
                   static_cast<double>(s.total_steps - s.warmup_steps);
        }
        case ScheduleKind::inverse_sqrt: {
            if (t <= s.warmup_steps)
                return s.peak_lr * static_cast<double>(t) /
                       static_cast<double>(s.warmup_steps);
            return s.peak_lr * std::sqrt(static_cast<double>(s.warmup_steps) /
                                         static_cast<double>(t));
        }
    }
    throw ConfigError("unknown schedule kind");
}

}  // namespace sage
