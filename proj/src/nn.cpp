#include "sage/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "sage/rng.hpp"

namespace sage {

void validate_spec(const NetworkSpec& spec) {
    if (spec.layer_dims.size() < 2)
        throw ConfigError("network needs at least input and output layers");
    for (int d : spec.layer_dims)
        if (d < 1) throw ConfigError("layer dimension must be >= 1");
}

std::size_t parameter_count(const NetworkSpec& spec) {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < spec.layer_dims.size(); ++l) {
        std::size_t fan_in = static_cast<std::size_t>(spec.layer_dims[l]);
        std::size_t fan_out = static_cast<std::size_t>(spec.layer_dims[l + 1]);
        n += fan_in * fan_out + fan_out;
    }
    return n;
}

std::size_t weight_offset(const NetworkSpec& spec, std::size_t layer) {
    std::size_t off = 0;
    for (std::size_t l = 0; l < layer; ++l) {
        std::size_t fan_in = static_cast<std::size_t>(spec.layer_dims[l]);
        std::size_t fan_out = static_cast<std::size_t>(spec.layer_dims[l + 1]);
        off += fan_in * fan_out + fan_out;
    }
    return off;
}

std::size_t bias_offset(const NetworkSpec& spec, std::size_t layer) {
    std::size_t fan_in = static_cast<std::size_t>(spec.layer_dims[layer]);
    std::size_t fan_out = static_cast<std::size_t>(spec.layer_dims[layer + 1]);
    return weight_offset(spec, layer) + fan_in * fan_out;
}

std::vector<double> init_network(const NetworkSpec& spec, std::uint64_t seed) {
    validate_spec(spec);
    std::vector<double> params(parameter_count(spec), 0.0);
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < spec.layer_dims.size(); ++l) {
        double fan_in = spec.layer_dims[l];
        double fan_out = spec.layer_dims[l + 1];
        double bound = spec.activation == Activation::relu
                           ? std::sqrt(6.0 / fan_in)
                           : std::sqrt(6.0 / (fan_in + fan_out));
        std::size_t w0 = weight_offset(spec, l);
        std::size_t nw = static_cast<std::size_t>(fan_in) *
                         static_cast<std::size_t>(fan_out);
        for (std::size_t i = 0; i < nw; ++i)
            params[w0 + i] = rng.uniform(-bound, bound);
        // biases stay zero
    }
    return params;
}

namespace {

void check_batch(const NetworkSpec& spec, const std::vector<double>& params,
                 const Batch& batch) {
    if (params.size() != parameter_count(spec))
        throw ConfigError("parameter vector length does not match spec");
    if (batch.n_samples < 1) throw ConfigError("empty batch");
    if (batch.input_dim != static_cast<std::size_t>(spec.layer_dims.front()))
        throw ConfigError("batch input_dim does not match network input");
    if (spec.loss == Loss::softmax_cross_entropy) {
        if (batch.labels.size() != batch.n_samples)
            throw ConfigError("labels length does not match n_samples");
    } else {
        std::size_t out = static_cast<std::size_t>(spec.layer_dims.back());
        if (batch.target_dim != out ||
            batch.targets.size() != batch.n_samples * out)
            throw ConfigError("targets shape does not match network output");
    }
}

void check_finite(const std::vector<double>& v, int layer) {
    for (double x : v)
        if (!std::isfinite(x))
            throw NumericError(
                "non-finite activation in layer " + std::to_string(layer),
                layer);
}

// Forward pass storing pre- and post-activation values for backprop.
struct ForwardCache {
    // acts[0] is the input; acts[l+1] the post-activation output of
    // layer l. Row-major n_samples x dim.
    std::vector<std::vector<double>> acts;
};

ForwardCache run_forward(const NetworkSpec& spec,
                         const std::vector<double>& params,
                         const std::vector<double>& inputs, std::size_t n) {
    std::size_t n_layers = spec.layer_dims.size() - 1;
    ForwardCache cache;
    cache.acts.resize(n_layers + 1);
    cache.acts[0] = inputs;
    for (std::size_t l = 0; l < n_layers; ++l) {
        std::size_t fan_in = static_cast<std::size_t>(spec.layer_dims[l]);
        std::size_t fan_out = static_cast<std::size_t>(spec.layer_dims[l + 1]);
        const double* W = params.data() + weight_offset(spec, l);
        const double* b = params.data() + bias_offset(spec, l);
        const std::vector<double>& in = cache.acts[l];
        std::vector<double>& out = cache.acts[l + 1];
        out.assign(n * fan_out, 0.0);
        for (std::size_t s = 0; s < n; ++s) {
            const double* x = in.data() + s * fan_in;
            double* z = out.data() + s * fan_out;
            for (std::size_t o = 0; o < fan_out; ++o) {
                double acc = b[o];
                const double* w = W + o * fan_in;
                for (std::size_t i = 0; i < fan_in; ++i) acc += w[i] * x[i];
                z[o] = acc;
            }
        }
        bool last = (l + 1 == n_layers);
        if (!last) {
            if (spec.activation == Activation::relu) {
                for (double& x : out) x = x > 0.0 ? x : 0.0;
            } else {
                for (double& x : out) x = std::tanh(x);
            }
        }
        check_finite(out, static_cast<int>(l));
    }
    return cache;
}

}  // namespace

std::vector<double> forward(const NetworkSpec& spec,
                            const std::vector<double>& params,
                            const std::vector<double>& inputs, std::size_t n) {
    validate_spec(spec);
    if (params.size() != parameter_count(spec))
        throw ConfigError("parameter vector length does not match spec");
    if (inputs.size() != n * static_cast<std::size_t>(spec.layer_dims.front()))
        throw ConfigError("input size does not match network input dim");
    ForwardCache cache = run_forward(spec, params, inputs, n);
    return cache.acts.back();
}

std::vector<int> predict_labels(const NetworkSpec& spec,
                                const std::vector<double>& params,
                                const std::vector<double>& inputs,
                                std::size_t n) {
    std::vector<double> out = forward(spec, params, inputs, n);
    std::size_t k = static_cast<std::size_t>(spec.layer_dims.back());
    std::vector<int> labels(n);
    for (std::size_t s = 0; s < n; ++s) {
        const double* z = out.data() + s * k;
        std::size_t best = 0;
        for (std::size_t c = 1; c < k; ++c)
            if (z[c] > z[best]) best = c;  // ties keep the lowest index
        labels[s] = static_cast<int>(best);
    }
    return labels;
}

LossGrad loss_and_grad(const NetworkSpec& spec,
                       const std::vector<double>& params, const Batch& batch) {
    validate_spec(spec);
    check_batch(spec, params, batch);

    std::size_t n = batch.n_samples;
    std::size_t n_layers = spec.layer_dims.size() - 1;
    std::size_t out_dim = static_cast<std::size_t>(spec.layer_dims.back());

    ForwardCache cache = run_forward(spec, params, batch.inputs, n);
    const std::vector<double>& logits = cache.acts.back();

    LossGrad result;
    result.grad.assign(params.size(), 0.0);

    // dL/d(output), mean loss over the batch.
    std::vector<double> delta(n * out_dim, 0.0);
    double loss = 0.0;
    if (spec.loss == Loss::softmax_cross_entropy) {
        for (std::size_t s = 0; s < n; ++s) {
            const double* z = logits.data() + s * out_dim;
            double zmax = z[0];
            for (std::size_t c = 1; c < out_dim; ++c)
                zmax = std::max(zmax, z[c]);
            double sum = 0.0;
            for (std::size_t c = 0; c < out_dim; ++c)
                sum += std::exp(z[c] - zmax);
            double log_sum = std::log(sum) + zmax;
            int y = batch.labels[s];
            if (y < 0 || static_cast<std::size_t>(y) >= out_dim)
                throw ConfigError("label out of range");
            loss += log_sum - z[y];
            double* d = delta.data() + s * out_dim;
            for (std::size_t c = 0; c < out_dim; ++c) {
                double p = std::exp(z[c] - log_sum);
                d[c] = (p - (static_cast<std::size_t>(y) == c ? 1.0 : 0.0)) /
                       static_cast<double>(n);
            }
        }
    } else {
        for (std::size_t s = 0; s < n; ++s) {
            const double* z = logits.data() + s * out_dim;
            const double* y = batch.targets.data() + s * out_dim;
            double* d = delta.data() + s * out_dim;
            for (std::size_t c = 0; c < out_dim; ++c) {
                double e = z[c] - y[c];
                loss += e * e;
                d[c] = 2.0 * e / static_cast<double>(n);
            }
        }
    }
    result.loss = loss / static_cast<double>(n);

    // Backprop through layers, last to first.
    for (std::size_t li = n_layers; li-- > 0;) {
        std::size_t fan_in = static_cast<std::size_t>(spec.layer_dims[li]);
        std::size_t fan_out = static_cast<std::size_t>(spec.layer_dims[li + 1]);
        const double* W = params.data() + weight_offset(spec, li);
        double* gW = result.grad.data() + weight_offset(spec, li);
        double* gb = result.grad.data() + bias_offset(spec, li);
        const std::vector<double>& in = cache.acts[li];

        std::vector<double> prev_delta;
        if (li > 0) prev_delta.assign(n * fan_in, 0.0);
        for (std::size_t s = 0; s < n; ++s) {
            const double* d = delta.data() + s * fan_out;
            const double* x = in.data() + s * fan_in;
            for (std::size_t o = 0; o < fan_out; ++o) {
                double dv = d[o];
                gb[o] += dv;
                double* gw = gW + o * fan_in;
                for (std::size_t i = 0; i < fan_in; ++i) gw[i] += dv * x[i];
            }
            if (li > 0) {
                double* pd = prev_delta.data() + s * fan_in;
                for (std::size_t o = 0; o < fan_out; ++o) {
                    double dv = d[o];
                    const double* w = W + o * fan_in;
                    for (std::size_t i = 0; i < fan_in; ++i)
                        pd[i] += dv * w[i];
                }
                // chain through the previous layer's activation
            }
        }
        if (li > 0) {
            const std::vector<double>& a = cache.acts[li];
            if (spec.activation == Activation::relu) {
                for (std::size_t i = 0; i < prev_delta.size(); ++i)
                    if (a[i] <= 0.0) prev_delta[i] = 0.0;
            } else {
                for (std::size_t i = 0; i < prev_delta.size(); ++i)
                    prev_delta[i] *= 1.0 - a[i] * a[i];
            }
            delta = std::move(prev_delta);
        }
    }
    return result;
}

double loss_only(const NetworkSpec& spec, const std::vector<double>& params,
                 const Batch& batch) {
    check_batch(spec, params, batch);
    std::size_t n = batch.n_samples;
    std::size_t out_dim = static_cast<std::size_t>(spec.layer_dims.back());
    ForwardCache cache = run_forward(spec, params, batch.inputs, n);
    const std::vector<double>& logits = cache.acts.back();
    double loss = 0.0;
    if (spec.loss == Loss::softmax_cross_entropy) {
        for (std::size_t s = 0; s < n; ++s) {
            const double* z = logits.data() + s * out_dim;
            double zmax = z[0];
            for (std::size_t c = 1; c < out_dim; ++c)
                zmax = std::max(zmax, z[c]);
            double sum = 0.0;
            for (std::size_t c = 0; c < out_dim; ++c)
                sum += std::exp(z[c] - zmax);
            loss += std::log(sum) + zmax - z[batch.labels[s]];
        }
    } else {
        for (std::size_t s = 0; s < n; ++s) {
            const double* z = logits.data() + s * out_dim;
            const double* y = batch.targets.data() + s * out_dim;
            for (std::size_t c = 0; c < out_dim; ++c) {
                double e = z[c] - y[c];
                loss += e * e;
            }
        }
    }
    return loss / static_cast<double>(n);
}

std::vector<double> finite_difference_grad(const NetworkSpec& spec,
                                           const std::vector<double>& params,
                                           const Batch& batch, double h) {
    if (h <= 0.0) throw ConfigError("finite difference step must be > 0");
    std::vector<double> p = params;
    std::vector<double> g(params.size());
    for (std::size_t j = 0; j < p.size(); ++j) {
        double orig = p[j];
        p[j] = orig + h;
        double lp = loss_only(spec, p, batch);
        p[j] = orig - h;
        double lm = loss_only(spec, p, batch);
        p[j] = orig;
        g[j] = (lp - lm) / (2.0 * h);
    }
    return g;
}

namespace {
constexpr char kCheckpointMagic[8] = {'S', 'A', 'G', 'E', 'C', 'K', 'P', '1'};
}

void save_checkpoint(const std::string& path, const NetworkSpec& spec,
                     std::uint64_t seed, const std::vector<double>& params) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IngestionError("cannot open checkpoint for writing: " + path);
    f.write(kCheckpointMagic, 8);
    std::uint32_t version = 1;  // flattening-order version tag
    std::uint32_t act = static_cast<std::uint32_t>(spec.activation);
    std::uint32_t loss = static_cast<std::uint32_t>(spec.loss);
    std::uint32_t n_dims = static_cast<std::uint32_t>(spec.layer_dims.size());
    f.write(reinterpret_cast<const char*>(&version), 4);
    f.write(reinterpret_cast<const char*>(&act), 4);
    f.write(reinterpret_cast<const char*>(&loss), 4);
    f.write(reinterpret_cast<const char*>(&n_dims), 4);
    for (int d : spec.layer_dims) {
        std::int32_t v = d;
        f.write(reinterpret_cast<const char*>(&v), 4);
    }
    f.write(reinterpret_cast<const char*>(&seed), 8);
    std::uint64_t count = params.size();
    f.write(reinterpret_cast<const char*>(&count), 8);
    f.write(reinterpret_cast<const char*>(params.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!f) throw IngestionError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IngestionError("cannot open checkpoint: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw IngestionError("bad checkpoint magic: " + path);
    std::uint32_t version, act, loss, n_dims;
    f.read(reinterpret_cast<char*>(&version), 4);
    f.read(reinterpret_cast<char*>(&act), 4);
    f.read(reinterpret_cast<char*>(&loss), 4);
    f.read(reinterpret_cast<char*>(&n_dims), 4);
    if (!f || version != 1)
        throw IngestionError("unsupported checkpoint version: " + path);
    Checkpoint ck;
    ck.spec.activation = static_cast<Activation>(act);
    ck.spec.loss = static_cast<Loss>(loss);
    ck.spec.layer_dims.resize(n_dims);
    for (std::uint32_t i = 0; i < n_dims; ++i) {
        std::int32_t v;
        f.read(reinterpret_cast<char*>(&v), 4);
        ck.spec.layer_dims[i] = v;
    }
    f.read(reinterpret_cast<char*>(&ck.seed), 8);
    std::uint64_t count;
    f.read(reinterpret_cast<char*>(&count), 8);
    if (!f) throw IngestionError("truncated checkpoint header: " + path);
    if (count != parameter_count(ck.spec))
        throw IngestionError("checkpoint length does not match spec: " + path);
    ck.params.resize(count);
    f.read(reinterpret_cast<char*>(ck.params.data()),
           static_cast<std::streamsize>(count * sizeof(double)));
    if (!f) throw IngestionError("truncated checkpoint data: " + path);
    return ck;
}

}  // namespace sage
