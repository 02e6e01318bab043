#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sage/harness.hpp"
#include "sage/rng.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed_override;
    bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "experiment config JSON")
        ->required();
    cmd->add_option("--out", opts.out_dir, "output directory override");
    cmd->add_option("--seed", opts.seed_override, "seed override");
    cmd->add_flag("--quiet", opts.quiet, "suppress progress output");
}

sage::ExperimentConfig load(const CommonOpts& opts) {
    sage::ExperimentConfig cfg = sage::parse_config_file(opts.config_path);
    if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
    if (opts.seed_override) cfg.seed = *opts.seed_override;
    return cfg;
}

void say(const CommonOpts& opts, const std::string& msg) {
    if (!opts.quiet) std::cout << msg << "\n";
}

int cmd_train(const CommonOpts& opts) {
    sage::ExperimentConfig cfg = load(opts);
    sage::RunResult res = sage::run_training_with_outputs(cfg);
    say(opts, "final val_acc " + std::to_string(res.final_val_acc) +
                  ", best " + std::to_string(res.best_val_acc));
    say(opts, "outputs in " + cfg.output_dir);
    return 0;
}

int cmd_prune_curve(const CommonOpts& opts) {
    sage::ExperimentConfig cfg = load(opts);
    std::vector<double> ratios = cfg.analyses.pruning_ratios;
    if (ratios.empty()) ratios = {0.0, 0.1, 0.2, 0.3, 0.4};
    sage::RunResult res = sage::run_training(cfg);
    auto rows = sage::pruning_curve(cfg, res.params, res.data, ratios);
    fs::create_directories(cfg.output_dir);
    sage::write_prune_curve_csv(
        (fs::path(cfg.output_dir) / "prune_curve.csv").string(), rows);
    for (const auto& r : rows)
        say(opts, "ratio " + std::to_string(r.ratio) + " val_acc " +
                      std::to_string(r.val_acc) + " delta " +
                      std::to_string(r.delta));
    return 0;
}

int cmd_overlap(const CommonOpts& opts) {
    sage::ExperimentConfig cfg = load(opts);
    std::vector<double> lrs = cfg.overlap_learning_rates;
    if (lrs.empty())
        throw sage::ConfigError(
            "overlap requires an 'overlap.learning_rates' config section");
    sage::OverlapResult res = sage::overlap_sweep(cfg, lrs);
    fs::create_directories(cfg.output_dir);
    sage::write_overlap_csv(
        (fs::path(cfg.output_dir) / "overlap.csv").string(), res);
    for (const auto& row : res.by_subset_size)
        say(opts, "subset size " + std::to_string(row.subset_size) +
                      " mean overlap " + std::to_string(row.mean_overlap));
    return 0;
}

int cmd_grid(const CommonOpts& opts) {
    sage::ExperimentConfig cfg = load(opts);
    if (cfg.grid_learning_rates.empty())
        throw sage::ConfigError(
            "grid requires a 'grid.learning_rates' config section");
    auto cells =
        sage::grid_search(cfg, cfg.grid_learning_rates, cfg.grid_beta0s);
    fs::create_directories(cfg.output_dir);
    sage::write_grid_csv((fs::path(cfg.output_dir) / "grid.csv").string(),
                         cells);
    for (const auto& c : cells)
        say(opts, "lr " + std::to_string(c.learning_rate) + " beta0 " +
                      std::to_string(c.beta0) + " val_acc " +
                      std::to_string(c.val_acc));
    return 0;
}

int cmd_boundary(const CommonOpts& opts) {
    sage::ExperimentConfig cfg = load(opts);
    fs::path dir(cfg.output_dir);
    fs::create_directories(dir);
    std::vector<double> params;
    sage::DatasetSplit data;
    fs::path ckpt = dir / "checkpoint.bin";
    if (fs::exists(ckpt)) {
        sage::Checkpoint ck = sage::load_checkpoint(ckpt.string());
        params = std::move(ck.params);
        data = sage::generate(cfg.dataset);
        say(opts, "loaded " + ckpt.string());
    } else {
        sage::RunResult res = sage::run_training_with_outputs(cfg);
        params = std::move(res.params);
        data = std::move(res.data);
    }
    sage::BoundaryGrid grid =
        sage::decision_boundary_grid(cfg.network, params);
    sage::write_boundary_csv((dir / "boundary.csv").string(), grid);
    sage::write_boundary_svg((dir / "boundary.svg").string(), grid,
                             data.train);
    say(opts, "boundary written to " + cfg.output_dir);
    return 0;
}

// Analytic-vs-finite-difference check on a batch of random small nets.
int cmd_gradcheck(const CommonOpts& opts) {
    sage::ExperimentConfig cfg = load(opts);
    sage::Rng rng(sage::mix_seed(cfg.seed, 99));
    double worst = 0.0;
    const int n_nets = 20;
    for (int trial = 0; trial < n_nets; ++trial) {
        sage::NetworkSpec spec;
        int in = 2 + static_cast<int>(rng.next_u64() % 4);
        int hid = 2 + static_cast<int>(rng.next_u64() % 7);
        int out = 2 + static_cast<int>(rng.next_u64() % 2);
        spec.layer_dims = {in, hid, out};
        spec.activation = (rng.next_u64() & 1) ? sage::Activation::tanh
                                               : sage::Activation::relu;
        spec.loss = (rng.next_u64() & 1) ? sage::Loss::mse
                                         : sage::Loss::softmax_cross_entropy;
        std::vector<double> params =
            sage::init_network(spec, rng.next_u64());
        // Jitter the zero biases so no relu pre-activation lands exactly
        // on the kink, where central differences disagree with the
        // one-sided analytic derivative.
        for (double& p : params) p += rng.uniform(-0.1, 0.1);
        sage::Batch b;
        b.n_samples = 4;
        b.input_dim = static_cast<std::size_t>(in);
        for (std::size_t i = 0; i < b.n_samples * b.input_dim; ++i)
            b.inputs.push_back(rng.uniform(-1.0, 1.0));
        if (spec.loss == sage::Loss::softmax_cross_entropy) {
            for (std::size_t i = 0; i < b.n_samples; ++i)
                b.labels.push_back(static_cast<int>(rng.next_u64() % out));
        } else {
            b.target_dim = static_cast<std::size_t>(out);
            for (std::size_t i = 0; i < b.n_samples * b.target_dim; ++i)
                b.targets.push_back(rng.uniform(-1.0, 1.0));
        }
        sage::LossGrad lg = sage::loss_and_grad(spec, params, b);
        std::vector<double> fd =
            sage::finite_difference_grad(spec, params, b, 1e-6);
        for (std::size_t j = 0; j < fd.size(); ++j) {
            double rel = std::fabs(lg.grad[j] - fd[j]) /
                         std::max(1.0, std::fabs(fd[j]));
            worst = std::max(worst, rel);
        }
    }
    bool ok = worst < 1e-5;
    std::cout << "gradcheck: " << n_nets << " networks, max relative error "
              << worst << " -> " << (ok ? "PASS" : "FAIL") << "\n";
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sensitivity-guided adaptive learning-rate toolkit"};
    app.require_subcommand(1);

    CommonOpts opts;
    auto* train = app.add_subcommand("train", "run a training experiment");
    auto* prune = app.add_subcommand("prune-curve",
                                     "train then sweep pruning ratios");
    auto* overlap = app.add_subcommand(
        "overlap", "redundant-set overlap across learning rates");
    auto* grid = app.add_subcommand("grid", "learning-rate/beta0 grid search");
    auto* boundary =
        app.add_subcommand("boundary", "export a decision-boundary grid");
    auto* gradcheck =
        app.add_subcommand("gradcheck", "run the gradient oracle suite");
    for (CLI::App* cmd : {train, prune, overlap, grid, boundary, gradcheck})
        add_common(cmd, opts);

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(opts);
        if (prune->parsed()) return cmd_prune_curve(opts);
        if (overlap->parsed()) return cmd_overlap(opts);
        if (grid->parsed()) return cmd_grid(opts);
        if (boundary->parsed()) return cmd_boundary(opts);
        if (gradcheck->parsed()) return cmd_gradcheck(opts);
    } catch (const sage::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const sage::DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return 3;
    } catch (const sage::IngestionError& e) {
        std::cerr << "ingestion error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
