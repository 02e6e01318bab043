#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sage/datasets.hpp"
#include "sage/nn.hpp"
#include "sage/optimizers.hpp"
#include "sage/redundancy.hpp"
#include "sage/schedules.hpp"

namespace sage {

struct AnalysisFlags {
    bool variation_trace = false;
    bool final_snapshot = false;
    bool boundary_grid = false;
    std::vector<double> pruning_ratios;
};

struct ExperimentConfig {
    DatasetSpec dataset;
    NetworkSpec network;
    OptimizerConfig optimizer;
    ScheduleSpec schedule;
    int batch_size = 64;
    long total_steps = 1000;
    long eval_every = 100;
    std::uint64_t seed = 0;
    AnalysisFlags analyses;
    std::string output_dir = "out";

    // When set, network init uses this seed instead of one derived
    // from `seed`; the overlap sweep shares init across runs this way.
    std::optional<std::uint64_t> init_seed;

    // Optional sweep axes, read from the config file's "overlap" and
    // "grid" sections.
    std::vector<double> overlap_learning_rates;
    std::vector<double> grid_learning_rates;
    std::vector<double> grid_beta0s;
};

// Parses the JSON config document; unknown keys are rejected.
ExperimentConfig parse_config_text(const std::string& json_text);
ExperimentConfig parse_config_file(const std::string& path);
void validate_config(const ExperimentConfig& cfg);

struct MetricsRecord {
    long step = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
    double base_lr_value = 0.0;
    double mod_mean = 0.0, mod_var = 0.0;
    double sens_mean = 0.0, sens_var = 0.0;
    double u_mean = 0.0;
};

struct RunResult {
    std::vector<double> params;
    std::vector<MetricsRecord> metrics;
    VariationTrace trace;
    std::optional<SensitivitySnapshot> final_snapshot;
    DatasetSplit data;
    double final_val_acc = 0.0;
    double best_val_acc = 0.0;
};

// Trains per the config. Throws DivergenceError on a non-finite
// update; callers that want partial logs catch it around this call.
RunResult run_training(const ExperimentConfig& cfg);

// Like run_training but flushes metrics.csv/summary.json/checkpoint
// to cfg.output_dir, including partial logs on divergence (rethrown).
RunResult run_training_with_outputs(const ExperimentConfig& cfg);

double accuracy(const NetworkSpec& spec, const std::vector<double>& params,
                const Batch& batch);

struct BoundaryGrid {
    double x_min = -2.5, x_max = 2.5, y_min = -2.5, y_max = 2.5;
    int resolution = 200;
    std::vector<int> labels;  // row-major, rows over y
};

BoundaryGrid decision_boundary_grid(const NetworkSpec& spec,
                                    const std::vector<double>& params,
                                    double x_min = -2.5, double x_max = 2.5,
                                    double y_min = -2.5, double y_max = 2.5,
                                    int resolution = 200);

void write_boundary_csv(const std::string& path, const BoundaryGrid& grid);
void write_boundary_svg(const std::string& path, const BoundaryGrid& grid,
                        const Batch& train_points);

struct PruneCurveRow {
    double ratio = 0.0;
    double val_acc = 0.0;
    double delta = 0.0;  // val_acc - unpruned val_acc
};

// One-shot pruning sweep on an already-trained model; biases excluded.
std::vector<PruneCurveRow> pruning_curve(const ExperimentConfig& cfg,
                                         const std::vector<double>& params,
                                         const DatasetSplit& data,
                                         std::vector<double> ratios);

void write_prune_curve_csv(const std::string& path,
                           const std::vector<PruneCurveRow>& rows);

struct OverlapRow {
    std::size_t subset_size = 0;
    double mean_overlap = 0.0;  // averaged over all subsets of that size
};

struct OverlapResult {
    std::vector<double> learning_rates;
    std::vector<OverlapRow> by_subset_size;  // sizes 2..K
    double bottom_fraction = 0.3;
};

OverlapResult overlap_sweep(const ExperimentConfig& cfg,
                            const std::vector<double>& learning_rates);

void write_overlap_csv(const std::string& path, const OverlapResult& result);

struct GridCell {
    double learning_rate = 0.0;
    double beta0 = 0.0;
    double val_acc = 0.0;  // NaN when the run diverged
};

// Cross product in (learning_rate-major, beta0-minor) order; a
// diverged cell records NaN and the sweep continues.
std::vector<GridCell> grid_search(const ExperimentConfig& cfg,
                                  const std::vector<double>& learning_rates,
                                  const std::vector<double>& beta0s);

void write_grid_csv(const std::string& path,
                    const std::vector<GridCell>& cells);

void write_metrics_csv(const std::string& path,
                       const std::vector<MetricsRecord>& metrics);

}  // namespace sage
