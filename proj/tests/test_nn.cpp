#include <cmath>
#include <cstdio>
#include <filesystem>

#include <doctest.h>

#include "sage/nn.hpp"
#include "sage/rng.hpp"

using namespace sage;

namespace {

NetworkSpec tiny_mse() {
    NetworkSpec s;
    s.layer_dims = {1, 1};
    s.loss = Loss::mse;
    return s;
}

Batch one_sample_mse(double x, double y) {
    Batch b;
    b.n_samples = 1;
    b.input_dim = 1;
    b.inputs = {x};
    b.target_dim = 1;
    b.targets = {y};
    return b;
}

Batch random_ce_batch(Rng& rng, int in_dim, int out_dim, std::size_t n) {
    Batch b;
    b.n_samples = n;
    b.input_dim = static_cast<std::size_t>(in_dim);
    for (std::size_t i = 0; i < n * b.input_dim; ++i)
        b.inputs.push_back(rng.uniform(-1.0, 1.0));
    for (std::size_t i = 0; i < n; ++i)
        b.labels.push_back(static_cast<int>(rng.next_u64() % out_dim));
    return b;
}

}  // namespace

TEST_CASE("parameter count follows the flattening formula") {
    NetworkSpec s;
    s.layer_dims = {2, 3, 2};
    CHECK(parameter_count(s) == 17);

    NetworkSpec big;
    big.layer_dims = {4, 100, 100, 100, 3};
    CHECK(parameter_count(big) ==
          4 * 100 + 100 + 2 * (100 * 100 + 100) + 100 * 3 + 3);
}

TEST_CASE("init is deterministic given the seed") {
    NetworkSpec s;
    s.layer_dims = {2, 3, 2};
    auto a = init_network(s, 42);
    auto b = init_network(s, 42);
    CHECK(a.size() == 17);
    CHECK(a == b);
    auto c = init_network(s, 43);
    CHECK(a != c);
}

TEST_CASE("init rejects a degenerate spec") {
    NetworkSpec s;
    s.layer_dims = {3};
    CHECK_THROWS_AS(init_network(s, 0), ConfigError);
    s.layer_dims = {3, 0};
    CHECK_THROWS_AS(init_network(s, 0), ConfigError);
}

TEST_CASE("biases start at zero") {
    NetworkSpec s;
    s.layer_dims = {2, 3, 2};
    auto p = init_network(s, 7);
    for (std::size_t l = 0; l < 2; ++l) {
        std::size_t b0 = bias_offset(s, l);
        std::size_t fan_out = static_cast<std::size_t>(s.layer_dims[l + 1]);
        for (std::size_t i = 0; i < fan_out; ++i) CHECK(p[b0 + i] == 0.0);
    }
}

TEST_CASE("hand-differentiated quadratic: loss 4, grad [4, 4]") {
    NetworkSpec s = tiny_mse();
    std::vector<double> params = {2.0, 0.0};  // w=2, b=0
    LossGrad lg = loss_and_grad(s, params, one_sample_mse(1.0, 0.0));
    CHECK(lg.loss == doctest::Approx(4.0));
    CHECK(lg.grad[0] == doctest::Approx(4.0));
    CHECK(lg.grad[1] == doctest::Approx(4.0));
}

TEST_CASE("duplicating the batch leaves the mean loss and grad unchanged") {
    Rng rng(5);
    NetworkSpec s;
    s.layer_dims = {3, 4, 2};
    s.activation = Activation::tanh;
    auto params = init_network(s, 11);
    Batch b = random_ce_batch(rng, 3, 2, 4);
    Batch doubled = b;
    doubled.n_samples = 8;
    doubled.inputs.insert(doubled.inputs.end(), b.inputs.begin(),
                          b.inputs.end());
    doubled.labels.insert(doubled.labels.end(), b.labels.begin(),
                          b.labels.end());
    LossGrad a = loss_and_grad(s, params, b);
    LossGrad c = loss_and_grad(s, params, doubled);
    CHECK(a.loss == doctest::Approx(c.loss).epsilon(1e-12));
    for (std::size_t j = 0; j < a.grad.size(); ++j)
        CHECK(a.grad[j] == doctest::Approx(c.grad[j]).epsilon(1e-12));
}

TEST_CASE("zero weights, zero target mse has zero loss and grad") {
    NetworkSpec s = tiny_mse();
    std::vector<double> params = {0.0, 0.0};
    LossGrad lg = loss_and_grad(s, params, one_sample_mse(1.0, 0.0));
    CHECK(lg.loss == 0.0);
    CHECK(lg.grad[0] == 0.0);
    CHECK(lg.grad[1] == 0.0);
}

TEST_CASE("finite differences reproduce the quadratic gradient") {
    NetworkSpec s = tiny_mse();
    std::vector<double> params = {2.0, 0.0};
    auto fd = finite_difference_grad(s, params, one_sample_mse(1.0, 0.0));
    CHECK(fd[0] == doctest::Approx(4.0).epsilon(1e-6));
    CHECK(fd[1] == doctest::Approx(4.0).epsilon(1e-6));
}

TEST_CASE("constant loss region has a zero finite-difference gradient") {
    NetworkSpec s;
    s.layer_dims = {2, 3, 1};
    s.activation = Activation::relu;
    s.loss = Loss::mse;
    std::vector<double> params(parameter_count(s), 0.0);
    Batch b;
    b.n_samples = 2;
    b.input_dim = 2;
    b.inputs = {1.0, -1.0, 0.5, 0.25};
    b.target_dim = 1;
    b.targets = {0.0, 0.0};
    auto fd = finite_difference_grad(s, params, b);
    LossGrad lg = loss_and_grad(s, params, b);
    for (std::size_t j = 0; j < fd.size(); ++j) {
        // biases and last-layer weights see a flat loss only where the
        // relu is inactive; the whole net is zero so loss is exactly 0
        CHECK(std::fabs(lg.grad[j] - fd[j]) < 1e-6);
    }
}

TEST_CASE("analytic gradient matches central differences on random nets") {
    Rng rng(2024);
    for (int trial = 0; trial < 20; ++trial) {
        NetworkSpec s;
        int in = 2 + static_cast<int>(rng.next_u64() % 4);
        int h1 = 2 + static_cast<int>(rng.next_u64() % 7);
        int h2 = 2 + static_cast<int>(rng.next_u64() % 7);
        int out = 2 + static_cast<int>(rng.next_u64() % 2);
        s.layer_dims = {in, h1, h2, out};
        s.activation = (trial % 2) ? Activation::tanh : Activation::relu;
        s.loss = (trial % 3) ? Loss::softmax_cross_entropy : Loss::mse;
        auto params = init_network(s, rng.next_u64());
        // Jitter the zero-initialised biases.  Without this, a sample that
        // silences an entire relu layer leaves the next layer's
        // pre-activations sitting exactly on the kink, where central
        // differences and the one-sided analytic derivative disagree.
        for (double& p : params) p += rng.uniform(-0.1, 0.1);
        Batch b;
        b.n_samples = 3;
        b.input_dim = static_cast<std::size_t>(in);
        for (std::size_t i = 0; i < b.n_samples * b.input_dim; ++i)
            b.inputs.push_back(rng.uniform(-1.0, 1.0));
        if (s.loss == Loss::softmax_cross_entropy) {
            for (std::size_t i = 0; i < b.n_samples; ++i)
                b.labels.push_back(static_cast<int>(rng.next_u64() % out));
        } else {
            b.target_dim = static_cast<std::size_t>(out);
            for (std::size_t i = 0; i < b.n_samples * b.target_dim; ++i)
                b.targets.push_back(rng.uniform(-1.0, 1.0));
        }
        LossGrad lg = loss_and_grad(s, params, b);
        auto fd = finite_difference_grad(s, params, b, 1e-6);
        for (std::size_t j = 0; j < fd.size(); ++j) {
            double rel = std::fabs(lg.grad[j] - fd[j]) /
                         std::max(1.0, std::fabs(fd[j]));
            CHECK(rel < 1e-5);
        }
    }
}

TEST_CASE("loss is invariant to batch sample order") {
    Rng rng(8);
    NetworkSpec s;
    s.layer_dims = {3, 5, 2};
    auto params = init_network(s, 3);
    Batch b = random_ce_batch(rng, 3, 2, 5);
    Batch rev;
    rev.n_samples = b.n_samples;
    rev.input_dim = b.input_dim;
    for (std::size_t i = b.n_samples; i-- > 0;) {
        for (std::size_t d = 0; d < b.input_dim; ++d)
            rev.inputs.push_back(b.inputs[i * b.input_dim + d]);
        rev.labels.push_back(b.labels[i]);
    }
    CHECK(loss_only(s, params, b) ==
          doctest::Approx(loss_only(s, params, rev)).epsilon(1e-13));
}

TEST_CASE("predict: zero-weight softmax net breaks ties toward class 0") {
    NetworkSpec s;
    s.layer_dims = {2, 3};
    std::vector<double> params(parameter_count(s), 0.0);
    auto labels = predict_labels(s, params, {0.4, -0.2}, 1);
    CHECK(labels[0] == 0);
}

TEST_CASE("predict: affine evaluation 2*3+1 = 7") {
    NetworkSpec s = tiny_mse();
    std::vector<double> params = {2.0, 1.0};
    auto out = forward(s, params, {3.0}, 1);
    CHECK(out[0] == doctest::Approx(7.0));
}

TEST_CASE("predict returns one label per input") {
    NetworkSpec s;
    s.layer_dims = {2, 4, 3};
    auto params = init_network(s, 9);
    std::vector<double> inputs(2 * 7);
    Rng rng(1);
    for (double& x : inputs) x = rng.uniform(-1.0, 1.0);
    CHECK(predict_labels(s, params, inputs, 7).size() == 7);
}

TEST_CASE("predict rejects a dimension mismatch") {
    NetworkSpec s;
    s.layer_dims = {2, 3};
    auto params = init_network(s, 0);
    CHECK_THROWS_AS(forward(s, params, {1.0, 2.0, 3.0}, 1), ConfigError);
}

TEST_CASE("checkpoint round trip reproduces predictions") {
    NetworkSpec s;
    s.layer_dims = {2, 5, 3};
    s.activation = Activation::tanh;
    auto params = init_network(s, 77);
    auto path = std::filesystem::temp_directory_path() / "sage_test_ckpt.bin";
    save_checkpoint(path.string(), s, 77, params);
    Checkpoint ck = load_checkpoint(path.string());
    CHECK(ck.spec.layer_dims == s.layer_dims);
    CHECK(ck.seed == 77);
    CHECK(ck.params == params);
    std::vector<double> x = {0.3, -0.8};
    CHECK(predict_labels(s, params, x, 1) ==
          predict_labels(ck.spec, ck.params, x, 1));
    std::filesystem::remove(path);
}
