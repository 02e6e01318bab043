#include "sage/redundancy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sage/sage_core.hpp"

namespace sage {

SensitivitySnapshot full_data_sensitivity(const NetworkSpec& spec,
                                          const std::vector<double>& params,
                                          const Batch& dataset) {
    if (dataset.n_samples == 0) throw ConfigError("empty dataset");
    LossGrad lg = loss_and_grad(spec, params, dataset);
    SensitivitySnapshot snap;
    snap.values = sensitivity(params, lg.grad);
    snap.source = SnapshotSource::full_dataset;
    return snap;
}

namespace {

// Indices of the k lowest-sensitivity entries among the candidates,
// ties broken by lower flat index.
std::vector<std::size_t> bottom_k(const std::vector<double>& values,
                                  const std::vector<std::size_t>& candidates,
                                  std::size_t k) {
    std::vector<std::size_t> order = candidates;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) {
                  if (values[a] != values[b]) return values[a] < values[b];
                  return a < b;
              });
    order.resize(std::min(k, order.size()));
    return order;
}

}  // namespace

std::vector<std::uint8_t> bias_exclusion_mask(const NetworkSpec& spec) {
    std::vector<std::uint8_t> excl(parameter_count(spec), 0);
    for (std::size_t l = 0; l + 1 < spec.layer_dims.size(); ++l) {
        std::size_t b0 = bias_offset(spec, l);
        std::size_t fan_out = static_cast<std::size_t>(spec.layer_dims[l + 1]);
        for (std::size_t i = 0; i < fan_out; ++i) excl[b0 + i] = 1;
    }
    return excl;
}

std::pair<std::vector<double>, PruneMask> prune_by_sensitivity(
    const std::vector<double>& params, const SensitivitySnapshot& snapshot,
    double ratio, const std::vector<std::uint8_t>& excluded) {
    if (snapshot.values.size() != params.size())
        throw ConfigError("snapshot length does not match params");
    if (!(ratio >= 0.0 && ratio < 1.0))
        throw ConfigError("prune ratio must lie in [0, 1)");
    if (!excluded.empty() && excluded.size() != params.size())
        throw ConfigError("exclusion mask length does not match params");

    std::vector<std::size_t> candidates;
    for (std::size_t j = 0; j < params.size(); ++j)
        if (excluded.empty() || !excluded[j]) candidates.push_back(j);

    std::size_t k = static_cast<std::size_t>(
        std::floor(ratio * static_cast<double>(candidates.size())));
    std::vector<std::size_t> drop = bottom_k(snapshot.values, candidates, k);

    PruneMask mask;
    mask.keep.assign(params.size(), 1);
    mask.ratio = ratio;
    std::vector<double> pruned = params;
    for (std::size_t j : drop) {
        pruned[j] = 0.0;
        mask.keep[j] = 0;
    }
    return {std::move(pruned), std::move(mask)};
}

double redundancy_overlap(const std::vector<SensitivitySnapshot>& snapshots,
                          double bottom_fraction) {
    if (snapshots.size() < 2)
        throw ConfigError("overlap needs at least 2 snapshots");
    if (!(bottom_fraction > 0.0 && bottom_fraction < 1.0))
        throw ConfigError("bottom_fraction must lie in (0, 1)");
    std::size_t n = snapshots.front().values.size();
    for (const auto& s : snapshots)
        if (s.values.size() != n)
            throw ConfigError("snapshot lengths differ");
    std::size_t k = static_cast<std::size_t>(
        std::floor(bottom_fraction * static_cast<double>(n)));
    if (k == 0) throw ConfigError("bottom set is empty at this fraction");

    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);

    std::vector<std::uint8_t> in_all(n, 1);
    for (const auto& s : snapshots) {
        std::vector<std::size_t> bottom = bottom_k(s.values, all, k);
        std::vector<std::uint8_t> member(n, 0);
        for (std::size_t j : bottom) member[j] = 1;
        for (std::size_t j = 0; j < n; ++j) in_all[j] &= member[j];
    }
    std::size_t inter = 0;
    for (std::uint8_t b : in_all) inter += b;
    return static_cast<double>(inter) / static_cast<double>(k);
}

BlockPartition layer_partition(const NetworkSpec& spec) {
    BlockPartition p;
    for (std::size_t l = 0; l + 1 < spec.layer_dims.size(); ++l) {
        std::size_t w0 = weight_offset(spec, l);
        std::size_t b0 = bias_offset(spec, l);
        std::size_t fan_out = static_cast<std::size_t>(spec.layer_dims[l + 1]);
        p.blocks.push_back(
            {"layer" + std::to_string(l) + ".weight", w0, b0});
        p.blocks.push_back(
            {"layer" + std::to_string(l) + ".bias", b0, b0 + fan_out});
    }
    return p;
}

std::vector<std::pair<std::string, double>> block_sensitivity(
    const std::vector<double>& params, const std::vector<double>& grads,
    const BlockPartition& partition, BlockMode mode) {
    if (params.size() != grads.size())
        throw ConfigError("block_sensitivity: length mismatch");
    std::vector<std::pair<std::string, double>> out;
    for (const Block& blk : partition.blocks) {
        if (blk.end > params.size() || blk.begin > blk.end)
            throw ConfigError("block range out of bounds");
        double acc = 0.0;
        if (mode == BlockMode::abs_of_sum) {
            for (std::size_t j = blk.begin; j < blk.end; ++j)
                acc += params[j] * grads[j];
            acc = std::fabs(acc);
        } else {
            for (std::size_t j = blk.begin; j < blk.end; ++j)
                acc += std::fabs(params[j] * grads[j]);
        }
        out.emplace_back(blk.name, acc);
    }
    return out;
}

void VariationTrace::record(long step, const std::vector<double>& U) {
    double mean = 0.0, var = 0.0;
    std::size_t n = subset_.empty() ? U.size() : subset_.size();
    if (n == 0) return;
    auto value = [&](std::size_t i) {
        return subset_.empty() ? U[i] : U[subset_[i]];
    };
    for (std::size_t i = 0; i < n; ++i) mean += value(i);
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        double e = value(i) - mean;
        var += e * e;
    }
    var /= static_cast<double>(n);
    steps_.push_back(step);
    means_.push_back(mean);
    variances_.push_back(var);
}

namespace {

// Linear-interpolation quantile on a sorted copy.
double quantile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0.0;
    double pos = q * static_cast<double>(sorted.size() - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

SensitivityStats sensitivity_stats(const SensitivitySnapshot& snapshot) {
    const std::vector<double>& v = snapshot.values;
    if (v.empty()) throw ConfigError("sensitivity_stats: empty snapshot");
    SensitivityStats st;
    for (double x : v) st.mean += x;
    st.mean /= static_cast<double>(v.size());
    for (double x : v) {
        double e = x - st.mean;
        st.variance += e * e;
    }
    st.variance /= static_cast<double>(v.size());

    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    st.q01 = quantile(sorted, 0.01);
    st.q05 = quantile(sorted, 0.05);
    st.q25 = quantile(sorted, 0.25);
    st.q50 = quantile(sorted, 0.50);
    st.q75 = quantile(sorted, 0.75);
    st.q95 = quantile(sorted, 0.95);
    st.q99 = quantile(sorted, 0.99);

    st.hist_lo = st.q01;
    st.hist_hi = st.q99;
    double width = st.hist_hi - st.hist_lo;
    if (width > 0.0) {
        for (double x : v) {
            if (x < st.hist_lo || x > st.hist_hi) continue;
            std::size_t bin = static_cast<std::size_t>(
                (x - st.hist_lo) / width * 50.0);
            if (bin >= 50) bin = 49;
            st.histogram[bin] += 1;
        }
    } else {
        // degenerate range: everything in range lands in bin 0
        for (double x : v)
            if (x == st.hist_lo) st.histogram[0] += 1;
    }
    return st;
}

}  // namespace sage
