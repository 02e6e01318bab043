#include <cmath>

#include <doctest.h>

#include "sage/redundancy.hpp"
#include "sage/rng.hpp"
#include "sage/sage_core.hpp"

using namespace sage;

namespace {

SensitivitySnapshot snap(std::vector<double> v) {
    SensitivitySnapshot s;
    s.values = std::move(v);
    return s;
}

}  // namespace

TEST_CASE("full-data sensitivity equals the mean-gradient oracle") {
    NetworkSpec spec;
    spec.layer_dims = {2, 4, 2};
    spec.activation = Activation::tanh;
    auto params = init_network(spec, 21);

    Batch dataset;
    dataset.n_samples = 2;
    dataset.input_dim = 2;
    dataset.inputs = {0.5, -0.3, -0.9, 0.7};
    dataset.labels = {0, 1};

    SensitivitySnapshot s = full_data_sensitivity(spec, params, dataset);

    // oracle: average the per-sample gradients, then |theta . g|
    std::vector<double> gsum(params.size(), 0.0);
    for (std::size_t i = 0; i < 2; ++i) {
        Batch one;
        one.n_samples = 1;
        one.input_dim = 2;
        one.inputs = {dataset.inputs[i * 2], dataset.inputs[i * 2 + 1]};
        one.labels = {dataset.labels[i]};
        LossGrad lg = loss_and_grad(spec, params, one);
        for (std::size_t j = 0; j < gsum.size(); ++j)
            gsum[j] += lg.grad[j] / 2.0;
    }
    auto oracle = sensitivity(params, gsum);
    for (std::size_t j = 0; j < oracle.size(); ++j)
        CHECK(s.values[j] == doctest::Approx(oracle[j]).epsilon(1e-12));
}

TEST_CASE("one-sample dataset reduces to minibatch sensitivity") {
    NetworkSpec spec;
    spec.layer_dims = {2, 3, 2};
    auto params = init_network(spec, 4);
    Batch one;
    one.n_samples = 1;
    one.input_dim = 2;
    one.inputs = {0.2, 0.8};
    one.labels = {1};
    SensitivitySnapshot s = full_data_sensitivity(spec, params, one);
    LossGrad lg = loss_and_grad(spec, params, one);
    auto direct = sensitivity(params, lg.grad);
    CHECK(s.values == direct);
    // a zero parameter always has zero sensitivity
    std::vector<double> zeroed = params;
    zeroed[3] = 0.0;
    SensitivitySnapshot z = full_data_sensitivity(spec, zeroed, one);
    CHECK(z.values[3] == 0.0);
}

TEST_CASE("pruning zeroes the lowest-sensitivity entries") {
    std::vector<double> params = {10.0, 20.0, 30.0, 40.0};
    auto [pruned, mask] =
        prune_by_sensitivity(params, snap({1.0, 3.0, 0.0, 5.0}), 0.5);
    CHECK(pruned == std::vector<double>{0.0, 20.0, 0.0, 40.0});
    CHECK(mask.keep == std::vector<std::uint8_t>{0, 1, 0, 1});
}

TEST_CASE("ratio 0 leaves params unchanged") {
    std::vector<double> params = {1.0, 2.0};
    auto [pruned, mask] = prune_by_sensitivity(params, snap({1.0, 2.0}), 0.0);
    CHECK(pruned == params);
    CHECK(mask.keep == std::vector<std::uint8_t>{1, 1});
}

TEST_CASE("all-equal sensitivities prune the lowest indices first") {
    std::vector<double> params = {1.0, 1.0, 1.0, 1.0};
    auto [pruned, mask] =
        prune_by_sensitivity(params, snap({2.0, 2.0, 2.0, 2.0}), 0.5);
    CHECK(mask.keep == std::vector<std::uint8_t>{0, 0, 1, 1});
}

TEST_CASE("ratio >= 1 is rejected") {
    std::vector<double> params = {1.0};
    CHECK_THROWS_AS(prune_by_sensitivity(params, snap({1.0}), 1.0),
                    ConfigError);
}

TEST_CASE("exclusions protect biases") {
    NetworkSpec spec;
    spec.layer_dims = {1, 2, 1};
    // layout: W0 (2), b0 (2), W1 (2), b1 (1) -> 7 params
    auto excl = bias_exclusion_mask(spec);
    CHECK(excl == std::vector<std::uint8_t>{0, 0, 1, 1, 0, 0, 1});
    std::vector<double> params(7, 1.0);
    auto [pruned, mask] = prune_by_sensitivity(
        params, snap({0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0}), 0.5, excl);
    // 4 prunable weights; floor(0.5*4)=2 lowest-index weights go
    CHECK(mask.keep == std::vector<std::uint8_t>{0, 0, 1, 1, 1, 1, 1});
}

TEST_CASE("prune masks are nested across ratios") {
    Rng rng(41);
    std::vector<double> params(60);
    std::vector<double> sens(60);
    for (double& x : params) x = rng.uniform(-1, 1);
    for (double& x : sens) x = rng.uniform(0, 1);
    std::vector<double> ratios = {0.0, 0.1, 0.2, 0.3, 0.4, 0.6};
    std::vector<std::vector<std::uint8_t>> masks;
    for (double r : ratios)
        masks.push_back(prune_by_sensitivity(params, snap(sens), r).second.keep);
    for (std::size_t i = 1; i < masks.size(); ++i)
        for (std::size_t j = 0; j < 60; ++j)
            if (masks[i][j]) CHECK(masks[i - 1][j]);
}

TEST_CASE("overlap: identical snapshots give 1.0") {
    auto s = snap({0.1, 0.5, 0.2, 0.9, 0.3, 0.8, 0.7, 0.6, 0.4, 1.0});
    CHECK(redundancy_overlap({s, s, s}, 0.3) == 1.0);
}

TEST_CASE("overlap: hand-constructed 2/3 case") {
    // bottom-3 sets at fraction 0.3 of 10: {1,2,3} and {2,3,4}
    std::vector<double> a(10, 1.0), b(10, 1.0);
    a[1] = a[2] = a[3] = 0.0;
    b[2] = b[3] = b[4] = 0.0;
    double ov = redundancy_overlap({snap(a), snap(b)}, 0.3);
    CHECK(ov == doctest::Approx(2.0 / 3.0));
    // permutation invariance
    CHECK(redundancy_overlap({snap(b), snap(a)}, 0.3) == doctest::Approx(ov));
}

TEST_CASE("overlap input validation") {
    auto s = snap({1.0, 2.0, 3.0});
    CHECK_THROWS_AS(redundancy_overlap({s}, 0.3), ConfigError);
    CHECK_THROWS_AS(redundancy_overlap({s, snap({1.0})}, 0.3), ConfigError);
}

TEST_CASE("block sensitivity: singleton blocks reduce to per-parameter scores") {
    std::vector<double> params = {2.0, -1.5};
    std::vector<double> grads = {0.5, 2.0};
    BlockPartition p;
    p.blocks = {{"a", 0, 1}, {"b", 1, 2}};
    auto scores = block_sensitivity(params, grads, p, BlockMode::abs_of_sum);
    auto direct = sensitivity(params, grads);
    CHECK(scores[0].second == doctest::Approx(direct[0]));
    CHECK(scores[1].second == doctest::Approx(direct[1]));
}

TEST_CASE("block sensitivity modes diverge under cancellation") {
    std::vector<double> params = {1.0, -1.0};
    std::vector<double> grads = {1.0, 1.0};
    BlockPartition p;
    p.blocks = {{"blk", 0, 2}};
    CHECK(block_sensitivity(params, grads, p, BlockMode::abs_of_sum)[0]
              .second == doctest::Approx(0.0));
    CHECK(block_sensitivity(params, grads, p, BlockMode::sum_of_abs)[0]
              .second == doctest::Approx(2.0));
}

TEST_CASE("abs_of_sum <= sum_of_abs for every block") {
    Rng rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> params(20), grads(20);
        for (double& x : params) x = rng.uniform(-2, 2);
        for (double& x : grads) x = rng.uniform(-2, 2);
        BlockPartition p;
        p.blocks = {{"a", 0, 7}, {"b", 7, 15}, {"c", 15, 20}};
        auto lo = block_sensitivity(params, grads, p, BlockMode::abs_of_sum);
        auto hi = block_sensitivity(params, grads, p, BlockMode::sum_of_abs);
        for (std::size_t i = 0; i < lo.size(); ++i)
            CHECK(lo[i].second <= hi[i].second + 1e-15);
    }
}

TEST_CASE("zero gradients give zero block score") {
    std::vector<double> params = {1.0, 2.0, 3.0};
    std::vector<double> grads = {0.0, 0.0, 0.0};
    BlockPartition p;
    p.blocks = {{"all", 0, 3}};
    CHECK(block_sensitivity(params, grads, p)[0].second == 0.0);
}

TEST_CASE("layer partition covers the layout disjointly") {
    NetworkSpec spec;
    spec.layer_dims = {3, 5, 2};
    BlockPartition p = layer_partition(spec);
    CHECK(p.blocks.size() == 4);
    std::size_t expect = 0;
    for (const Block& b : p.blocks) {
        CHECK(b.begin == expect);
        expect = b.end;
    }
    CHECK(expect == parameter_count(spec));
}

TEST_CASE("variation trace statistics") {
    VariationTrace tr;
    tr.record(1, {0.0, 0.0});
    CHECK(tr.means()[0] == 0.0);
    CHECK(tr.variances()[0] == 0.0);
    tr.record(2, {1.0, 3.0});
    CHECK(tr.means()[1] == doctest::Approx(2.0));
    CHECK(tr.variances()[1] == doctest::Approx(1.0));  // population

    VariationTrace sub({0, 1, 2});
    std::vector<double> u = {1.0, 2.0, 3.0};
    sub.record(1, u);
    VariationTrace full;
    full.record(1, u);
    CHECK(sub.means()[0] == full.means()[0]);
    CHECK(sub.variances()[0] == full.variances()[0]);
}

TEST_CASE("sensitivity stats: hand values and histogram totals") {
    auto st = sensitivity_stats(snap({0.0, 1.0, 2.0, 3.0}));
    CHECK(st.mean == doctest::Approx(1.5));
    CHECK(st.variance == doctest::Approx(1.25));

    auto flat = sensitivity_stats(snap(std::vector<double>(10, 2.0)));
    CHECK(flat.variance == 0.0);

    Rng rng(43);
    std::vector<double> v(500);
    for (double& x : v) x = rng.uniform(0.0, 1.0);
    auto big = sensitivity_stats(snap(v));
    std::size_t in_range = 0;
    for (double x : v)
        if (x >= big.hist_lo && x <= big.hist_hi) ++in_range;
    std::size_t total = 0;
    for (std::size_t c : big.histogram) total += c;
    CHECK(total == in_range);
}
