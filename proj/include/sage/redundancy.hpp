#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "sage/nn.hpp"

namespace sage {

enum class SnapshotSource { full_dataset, minibatch };

struct SensitivitySnapshot {
    std::vector<double> values;
    SnapshotSource source = SnapshotSource::minibatch;
    long step = 0;
};

// |theta ⊙ g| with g the gradient of the mean loss over the whole
// dataset (a single full-batch gradient).
SensitivitySnapshot full_data_sensitivity(const NetworkSpec& spec,
                                          const std::vector<double>& params,
                                          const Batch& dataset);

struct PruneMask {
    std::vector<std::uint8_t> keep;  // 1 = kept
    double ratio = 0.0;
};

// Zero the floor(ratio * n_prunable) lowest-sensitivity non-excluded
// entries; ties go to the lower flat index. `excluded` is a per-index
// flag (same length as params) or empty for none.
std::pair<std::vector<double>, PruneMask> prune_by_sensitivity(
    const std::vector<double>& params, const SensitivitySnapshot& snapshot,
    double ratio, const std::vector<std::uint8_t>& excluded = {});

// Per-index exclusion flag covering every bias entry of the layout.
std::vector<std::uint8_t> bias_exclusion_mask(const NetworkSpec& spec);

// |intersection of bottom sets| / floor(fraction * n).
double redundancy_overlap(const std::vector<SensitivitySnapshot>& snapshots,
                          double bottom_fraction);

struct Block {
    std::string name;
    std::size_t begin = 0;
    std::size_t end = 0;  // half-open
};

struct BlockPartition {
    std::vector<Block> blocks;
};

// One block per weight matrix and per bias vector, in layout order.
BlockPartition layer_partition(const NetworkSpec& spec);

enum class BlockMode { abs_of_sum, sum_of_abs };

std::vector<std::pair<std::string, double>> block_sensitivity(
    const std::vector<double>& params, const std::vector<double>& grads,
    const BlockPartition& partition, BlockMode mode = BlockMode::abs_of_sum);

// Per-step mean/variance trace of the local temporal variation,
// optionally over a fixed index subset.
class VariationTrace {
public:
    VariationTrace() = default;
    explicit VariationTrace(std::vector<std::size_t> subset)
        : subset_(std::move(subset)) {}

    void record(long step, const std::vector<double>& U);

    const std::vector<long>& steps() const { return steps_; }
    const std::vector<double>& means() const { return means_; }
    const std::vector<double>& variances() const { return variances_; }

private:
    std::vector<std::size_t> subset_;
    std::vector<long> steps_;
    std::vector<double> means_;
    std::vector<double> variances_;
};

struct SensitivityStats {
    double mean = 0.0;
    double variance = 0.0;  // population variance
    double q01 = 0.0, q05 = 0.0, q25 = 0.0, q50 = 0.0;
    double q75 = 0.0, q95 = 0.0, q99 = 0.0;
    // 50 bins over [q01, q99]; counts cover in-range entries only.
    std::array<std::size_t, 50> histogram{};
    double hist_lo = 0.0, hist_hi = 0.0;
};

SensitivityStats sensitivity_stats(const SensitivitySnapshot& snapshot);

}  // namespace sage
