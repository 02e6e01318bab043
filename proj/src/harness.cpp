#include "sage/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sage/rng.hpp"

namespace sage {

using nlohmann::json;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void reject_unknown_keys(const json& obj, const std::string& section,
                         const std::set<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("unknown config key '" + it.key() + "' in " +
                              section);
}

DatasetSpec parse_dataset(const json& j) {
    reject_unknown_keys(j, "dataset",
                        {"kind", "n_per_class", "n_classes", "noise_std",
                         "cycles", "seed", "path", "label_column",
                         "train_fraction"});
    DatasetSpec d;
    std::string kind = j.value("kind", "spiral");
    if (kind == "spiral")
        d.kind = DatasetKind::spiral;
    else if (kind == "blobs")
        d.kind = DatasetKind::blobs;
    else if (kind == "csv")
        d.kind = DatasetKind::csv;
    else
        throw ConfigError("unknown dataset kind '" + kind + "'");
    d.n_per_class = j.value("n_per_class", d.n_per_class);
    d.n_classes = j.value("n_classes", d.n_classes);
    d.noise_std = j.value("noise_std", d.noise_std);
    d.cycles = j.value("cycles", d.cycles);
    d.seed = j.value("seed", d.seed);
    d.path = j.value("path", d.path);
    d.label_column = j.value("label_column", d.label_column);
    d.train_fraction = j.value("train_fraction", d.train_fraction);
    return d;
}

NetworkSpec parse_network(const json& j) {
    reject_unknown_keys(j, "network", {"layer_dims", "activation", "loss"});
    NetworkSpec n;
    if (!j.contains("layer_dims"))
        throw ConfigError("network.layer_dims is required");
    n.layer_dims = j.at("layer_dims").get<std::vector<int>>();
    std::string act = j.value("activation", "relu");
    if (act == "relu")
        n.activation = Activation::relu;
    else if (act == "tanh")
        n.activation = Activation::tanh;
    else
        throw ConfigError("unknown activation '" + act + "'");
    std::string loss = j.value("loss", "softmax_cross_entropy");
    if (loss == "softmax_cross_entropy")
        n.loss = Loss::softmax_cross_entropy;
    else if (loss == "mse")
        n.loss = Loss::mse;
    else
        throw ConfigError("unknown loss '" + loss + "'");
    return n;
}

OptimizerConfig parse_optimizer(const json& j) {
    reject_unknown_keys(
        j, "optimizer",
        {"base", "sage", "variant", "beta0", "beta1", "beta2", "epsilon_opt",
         "epsilon_sage", "momentum", "weight_decay", "decoupled_decay",
         "grad_clip_norm", "adam_sage_update_form", "bias_correction_form"});
    OptimizerConfig c;
    std::string base = j.value("base", "sgd");
    if (base == "sgd")
        c.base = BaseOptimizer::sgd;
    else if (base == "sgd_momentum")
        c.base = BaseOptimizer::sgd_momentum;
    else if (base == "adam")
        c.base = BaseOptimizer::adam;
    else if (base == "adamax")
        c.base = BaseOptimizer::adamax;
    else
        throw ConfigError("unknown optimizer base '" + base + "'");
    c.sage_enabled = j.value("sage", false);
    std::string variant = j.value("variant", "sage");
    if (variant == "sage")
        c.variant = ModulationVariant::sage;
    else if (variant == "v1_prod")
        c.variant = ModulationVariant::v1_prod;
    else if (variant == "v2_inv")
        c.variant = ModulationVariant::v2_inv;
    else if (variant == "v3_ema_only")
        c.variant = ModulationVariant::v3_ema_only;
    else if (variant == "v4_inv_ema")
        c.variant = ModulationVariant::v4_inv_ema;
    else if (variant == "v5_var_only")
        c.variant = ModulationVariant::v5_var_only;
    else if (variant == "identity")
        c.variant = ModulationVariant::identity;
    else
        throw ConfigError("unknown modulation variant '" + variant + "'");
    c.beta0 = j.value("beta0", c.beta0);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon_opt = j.value("epsilon_opt", c.epsilon_opt);
    c.epsilon_sage = j.value("epsilon_sage", c.epsilon_sage);
    c.momentum = j.value("momentum", c.momentum);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.decoupled_decay = j.value("decoupled_decay", c.decoupled_decay);
    if (j.contains("grad_clip_norm") && !j.at("grad_clip_norm").is_null())
        c.grad_clip_norm = j.at("grad_clip_norm").get<double>();
    std::string form = j.value("adam_sage_update_form", "corrected");
    if (form == "corrected")
        c.adam_sage_update_form = AdamSageForm::corrected;
    else if (form == "verbatim")
        c.adam_sage_update_form = AdamSageForm::verbatim;
    else
        throw ConfigError("unknown adam_sage_update_form '" + form + "'");
    std::string bc = j.value("bias_correction_form", "power_t");
    if (bc == "power_t")
        c.bias_correction_form = BiasCorrectionForm::power_t;
    else if (bc == "one_minus_beta")
        c.bias_correction_form = BiasCorrectionForm::one_minus_beta;
    else
        throw ConfigError("unknown bias_correction_form '" + bc + "'");
    return c;
}

ScheduleSpec parse_schedule(const json& j) {
    reject_unknown_keys(j, "schedule",
                        {"kind", "peak_lr", "warmup_steps", "total_steps"});
    ScheduleSpec s;
    std::string kind = j.value("kind", "constant");
    if (kind == "constant")
        s.kind = ScheduleKind::constant;
    else if (kind == "linear_warmup_decay")
        s.kind = ScheduleKind::linear_warmup_decay;
    else if (kind == "inverse_sqrt")
        s.kind = ScheduleKind::inverse_sqrt;
    else
        throw ConfigError("unknown schedule kind '" + kind + "'");
    s.peak_lr = j.value("peak_lr", s.peak_lr);
    s.warmup_steps = j.value("warmup_steps", s.warmup_steps);
    s.total_steps = j.value("total_steps", s.total_steps);
    return s;
}

AnalysisFlags parse_analyses(const json& j) {
    reject_unknown_keys(j, "analyses",
                        {"variation_trace", "final_snapshot", "boundary_grid",
                         "pruning_ratios"});
    AnalysisFlags a;
    a.variation_trace = j.value("variation_trace", false);
    a.final_snapshot = j.value("final_snapshot", false);
    a.boundary_grid = j.value("boundary_grid", false);
    if (j.contains("pruning_ratios"))
        a.pruning_ratios = j.at("pruning_ratios").get<std::vector<double>>();
    return a;
}

json config_to_json(const ExperimentConfig& cfg);

}  // namespace

ExperimentConfig parse_config_text(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    reject_unknown_keys(j, "config root",
                        {"dataset", "network", "optimizer", "schedule",
                         "batch_size", "total_steps", "eval_every", "seed",
                         "analyses", "output_dir", "init_seed", "overlap",
                         "grid"});
    ExperimentConfig cfg;
    try {
        if (j.contains("dataset")) cfg.dataset = parse_dataset(j["dataset"]);
        if (!j.contains("network"))
            throw ConfigError("config needs a network section");
        cfg.network = parse_network(j["network"]);
        if (j.contains("optimizer"))
            cfg.optimizer = parse_optimizer(j["optimizer"]);
        if (j.contains("schedule"))
            cfg.schedule = parse_schedule(j["schedule"]);
        cfg.batch_size = j.value("batch_size", cfg.batch_size);
        cfg.total_steps = j.value("total_steps", cfg.total_steps);
        cfg.eval_every = j.value("eval_every", cfg.eval_every);
        cfg.seed = j.value("seed", cfg.seed);
        if (j.contains("analyses")) cfg.analyses = parse_analyses(j["analyses"]);
        cfg.output_dir = j.value("output_dir", cfg.output_dir);
        if (j.contains("init_seed"))
            cfg.init_seed = j.at("init_seed").get<std::uint64_t>();
        if (j.contains("overlap")) {
            reject_unknown_keys(j["overlap"], "overlap", {"learning_rates"});
            cfg.overlap_learning_rates =
                j["overlap"].value("learning_rates", std::vector<double>{});
        }
        if (j.contains("grid")) {
            reject_unknown_keys(j["grid"], "grid",
                                {"learning_rates", "beta0s"});
            cfg.grid_learning_rates =
                j["grid"].value("learning_rates", std::vector<double>{});
            cfg.grid_beta0s = j["grid"].value("beta0s", std::vector<double>{});
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config type error: ") + e.what());
    }
    validate_config(cfg);
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

void validate_config(const ExperimentConfig& cfg) {
    validate_spec(cfg.network);
    validate_optimizer_config(cfg.optimizer);
    // Schedule total_steps must cover the run.
    ScheduleSpec sched = cfg.schedule;
    if (sched.kind == ScheduleKind::linear_warmup_decay &&
        sched.total_steps < cfg.total_steps)
        throw ConfigError("schedule.total_steps must cover total_steps");
    validate_schedule(sched);
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (cfg.total_steps < 0) throw ConfigError("total_steps must be >= 0");
    if (cfg.eval_every < 1) throw ConfigError("eval_every must be >= 1");
    for (double r : cfg.analyses.pruning_ratios)
        if (!(r >= 0.0 && r < 1.0))
            throw ConfigError("pruning ratios must lie in [0, 1)");
}

namespace {

// csv datasets go through the same stratified split + train-statistics
// standardization as generated ones.
DatasetSplit split_csv(const DatasetSpec& spec) {
    Batch all = load_csv(spec.path, spec.label_column.empty()
                                        ? std::string("label")
                                        : spec.label_column);
    int n_classes = 0;
    for (int y : all.labels) n_classes = std::max(n_classes, y + 1);
    Rng rng(mix_seed(spec.seed, 1));
    std::vector<std::size_t> train_order, val_order;
    for (int k = 0; k < n_classes; ++k) {
        std::vector<std::size_t> cls;
        for (std::size_t i = 0; i < all.n_samples; ++i)
            if (all.labels[i] == k) cls.push_back(i);
        rng.shuffle(cls);
        std::size_t n_train = static_cast<std::size_t>(
            std::lround(spec.train_fraction * static_cast<double>(cls.size())));
        n_train = std::min(std::max<std::size_t>(n_train, 1), cls.size() - 1);
        if (cls.size() == 1) n_train = 1;
        for (std::size_t i = 0; i < cls.size(); ++i)
            (i < n_train ? train_order : val_order).push_back(cls[i]);
    }
    rng.shuffle(train_order);
    rng.shuffle(val_order);

    auto take = [&](const std::vector<std::size_t>& order) {
        Batch b;
        b.n_samples = order.size();
        b.input_dim = all.input_dim;
        for (std::size_t idx : order) {
            for (std::size_t d = 0; d < all.input_dim; ++d)
                b.inputs.push_back(all.inputs[idx * all.input_dim + d]);
            b.labels.push_back(all.labels[idx]);
        }
        return b;
    };
    DatasetSplit out;
    out.train = take(train_order);
    out.validation = take(val_order);

    std::size_t dim = all.input_dim;
    out.feature_mean.assign(dim, 0.0);
    out.feature_std.assign(dim, 0.0);
    for (std::size_t s = 0; s < out.train.n_samples; ++s)
        for (std::size_t d = 0; d < dim; ++d)
            out.feature_mean[d] += out.train.inputs[s * dim + d];
    for (std::size_t d = 0; d < dim; ++d)
        out.feature_mean[d] /= static_cast<double>(out.train.n_samples);
    for (std::size_t s = 0; s < out.train.n_samples; ++s)
        for (std::size_t d = 0; d < dim; ++d) {
            double e = out.train.inputs[s * dim + d] - out.feature_mean[d];
            out.feature_std[d] += e * e;
        }
    for (std::size_t d = 0; d < dim; ++d) {
        out.feature_std[d] = std::sqrt(out.feature_std[d] /
                                       static_cast<double>(out.train.n_samples));
        if (out.feature_std[d] == 0.0) out.feature_std[d] = 1.0;
    }
    auto standardize = [&](Batch& b) {
        for (std::size_t s = 0; s < b.n_samples; ++s)
            for (std::size_t d = 0; d < dim; ++d)
                b.inputs[s * dim + d] =
                    (b.inputs[s * dim + d] - out.feature_mean[d]) /
                    out.feature_std[d];
    };
    standardize(out.train);
    standardize(out.validation);
    return out;
}

Batch subset_batch(const Batch& src, const std::size_t* idx, std::size_t n) {
    Batch b;
    b.n_samples = n;
    b.input_dim = src.input_dim;
    b.target_dim = src.target_dim;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t s = idx[i];
        for (std::size_t d = 0; d < src.input_dim; ++d)
            b.inputs.push_back(src.inputs[s * src.input_dim + d]);
        if (!src.labels.empty()) b.labels.push_back(src.labels[s]);
        if (!src.targets.empty())
            for (std::size_t d = 0; d < src.target_dim; ++d)
                b.targets.push_back(src.targets[s * src.target_dim + d]);
    }
    return b;
}

double vec_mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double m = 0.0;
    for (double x : v) m += x;
    return m / static_cast<double>(v.size());
}

double vec_pop_var(const std::vector<double>& v, double mean) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) {
        double e = x - mean;
        s += e * e;
    }
    return s / static_cast<double>(v.size());
}

}  // namespace

double accuracy(const NetworkSpec& spec, const std::vector<double>& params,
                const Batch& batch) {
    if (batch.labels.empty()) return 0.0;
    std::vector<int> pred =
        predict_labels(spec, params, batch.inputs, batch.n_samples);
    std::size_t hit = 0;
    for (std::size_t s = 0; s < batch.n_samples; ++s)
        if (pred[s] == batch.labels[s]) ++hit;
    return static_cast<double>(hit) / static_cast<double>(batch.n_samples);
}

namespace {

// Fills `res` in place so partial metrics survive a divergence abort.
void run_training_impl(const ExperimentConfig& cfg, RunResult& res) {
    validate_config(cfg);
    res.data = cfg.dataset.kind == DatasetKind::csv ? split_csv(cfg.dataset)
                                                    : generate(cfg.dataset);
    if (res.data.train.input_dim !=
        static_cast<std::size_t>(cfg.network.layer_dims.front()))
        throw ConfigError("network input dim does not match dataset");

    if (cfg.network.loss == Loss::mse) {
        // Labelled data trained under mse regresses onto one-hot targets.
        std::size_t out = static_cast<std::size_t>(cfg.network.layer_dims.back());
        for (Batch* b : {&res.data.train, &res.data.validation}) {
            if (!b->labels.empty() && b->targets.empty()) {
                b->target_dim = out;
                b->targets.assign(b->n_samples * out, 0.0);
                for (std::size_t s = 0; s < b->n_samples; ++s) {
                    int y = b->labels[s];
                    if (y < 0 || static_cast<std::size_t>(y) >= out)
                        throw ConfigError("label out of range for mse targets");
                    b->targets[s * out + static_cast<std::size_t>(y)] = 1.0;
                }
            }
        }
    }

    std::uint64_t init_seed =
        cfg.init_seed ? *cfg.init_seed : mix_seed(cfg.seed, 10);
    res.params = init_network(cfg.network, init_seed);
    OptimizerState opt = make_optimizer(cfg.optimizer, res.params.size());

    Rng batch_rng(mix_seed(cfg.seed, 11));
    std::vector<std::size_t> order(res.data.train.n_samples);
    std::iota(order.begin(), order.end(), 0);
    batch_rng.shuffle(order);
    std::size_t cursor = 0;

    auto record_metrics = [&](long step) {
        MetricsRecord r;
        r.step = step;
        try {
            r.train_loss = loss_only(cfg.network, res.params, res.data.train);
            r.val_loss =
                loss_only(cfg.network, res.params, res.data.validation);
            r.val_acc = accuracy(cfg.network, res.params, res.data.validation);
        } catch (const NumericError& e) {
            throw DivergenceError(std::string("eval overflow: ") + e.what(),
                                  step, 0);
        }
        r.base_lr_value = step >= 1 ? base_lr(cfg.schedule, step) : 0.0;
        if (!opt.last_modulation.empty()) {
            r.mod_mean = vec_mean(opt.last_modulation);
            r.mod_var = vec_pop_var(opt.last_modulation, r.mod_mean);
            r.sens_mean = vec_mean(opt.last_sensitivity);
            r.sens_var = vec_pop_var(opt.last_sensitivity, r.sens_mean);
            r.u_mean = vec_mean(opt.last_variation);
        }
        res.metrics.push_back(r);
        res.final_val_acc = r.val_acc;
        res.best_val_acc = std::max(res.best_val_acc, r.val_acc);
    };

    record_metrics(0);
    for (long t = 1; t <= cfg.total_steps; ++t) {
        // epoch-shuffled sampling without replacement; the last batch
        // of an epoch may be short
        std::size_t remaining = order.size() - cursor;
        if (remaining == 0) {
            batch_rng.shuffle(order);
            cursor = 0;
            remaining = order.size();
        }
        std::size_t bs = std::min<std::size_t>(
            static_cast<std::size_t>(cfg.batch_size), remaining);
        Batch mb = subset_batch(res.data.train, order.data() + cursor, bs);
        cursor += bs;

        LossGrad lg;
        try {
            lg = loss_and_grad(cfg.network, res.params, mb);
        } catch (const NumericError& e) {
            // an overflowing forward pass is a divergence of the run
            throw DivergenceError(std::string("forward overflow: ") +
                                      e.what(),
                                  t, 0);
        }
        double lr = base_lr(cfg.schedule, t);
        optimizer_step(cfg.optimizer, opt, res.params, lg.grad, lr);

        if (cfg.analyses.variation_trace && !opt.last_variation.empty())
            res.trace.record(t, opt.last_variation);

        if (t % cfg.eval_every == 0 || t == cfg.total_steps) record_metrics(t);
    }
    if (cfg.analyses.final_snapshot)
        res.final_snapshot =
            full_data_sensitivity(cfg.network, res.params, res.data.train);
}

}  // namespace

RunResult run_training(const ExperimentConfig& cfg) {
    RunResult res;
    run_training_impl(cfg, res);
    return res;
}

namespace {

json config_to_json(const ExperimentConfig& cfg) {
    json j;
    const char* kinds[] = {"spiral", "blobs", "csv"};
    j["dataset"] = {{"kind", kinds[static_cast<int>(cfg.dataset.kind)]},
                    {"n_per_class", cfg.dataset.n_per_class},
                    {"n_classes", cfg.dataset.n_classes},
                    {"noise_std", cfg.dataset.noise_std},
                    {"cycles", cfg.dataset.cycles},
                    {"seed", cfg.dataset.seed},
                    {"train_fraction", cfg.dataset.train_fraction}};
    if (!cfg.dataset.path.empty()) j["dataset"]["path"] = cfg.dataset.path;
    j["network"] = {
        {"layer_dims", cfg.network.layer_dims},
        {"activation",
         cfg.network.activation == Activation::relu ? "relu" : "tanh"},
        {"loss", cfg.network.loss == Loss::softmax_cross_entropy
                     ? "softmax_cross_entropy"
                     : "mse"}};
    const char* bases[] = {"sgd", "sgd_momentum", "adam", "adamax"};
    const char* variants[] = {"sage",        "v1_prod",     "v2_inv",
                              "v3_ema_only", "v4_inv_ema",  "v5_var_only",
                              "identity"};
    j["optimizer"] = {
        {"base", bases[static_cast<int>(cfg.optimizer.base)]},
        {"sage", cfg.optimizer.sage_enabled},
        {"variant", variants[static_cast<int>(cfg.optimizer.variant)]},
        {"beta0", cfg.optimizer.beta0},
        {"beta1", cfg.optimizer.beta1},
        {"beta2", cfg.optimizer.beta2},
        {"epsilon_opt", cfg.optimizer.epsilon_opt},
        {"epsilon_sage", cfg.optimizer.epsilon_sage},
        {"momentum", cfg.optimizer.momentum},
        {"weight_decay", cfg.optimizer.weight_decay},
        {"decoupled_decay", cfg.optimizer.decoupled_decay},
        {"adam_sage_update_form",
         cfg.optimizer.adam_sage_update_form == AdamSageForm::corrected
             ? "corrected"
             : "verbatim"},
        {"bias_correction_form",
         cfg.optimizer.bias_correction_form == BiasCorrectionForm::power_t
             ? "power_t"
             : "one_minus_beta"}};
    if (cfg.optimizer.grad_clip_norm)
        j["optimizer"]["grad_clip_norm"] = *cfg.optimizer.grad_clip_norm;
    const char* scheds[] = {"constant", "linear_warmup_decay", "inverse_sqrt"};
    j["schedule"] = {{"kind", scheds[static_cast<int>(cfg.schedule.kind)]},
                     {"peak_lr", cfg.schedule.peak_lr},
                     {"warmup_steps", cfg.schedule.warmup_steps},
                     {"total_steps", cfg.schedule.total_steps}};
    j["batch_size"] = cfg.batch_size;
    j["total_steps"] = cfg.total_steps;
    j["eval_every"] = cfg.eval_every;
    j["seed"] = cfg.seed;
    j["output_dir"] = cfg.output_dir;
    j["analyses"] = {{"variation_trace", cfg.analyses.variation_trace},
                     {"final_snapshot", cfg.analyses.final_snapshot},
                     {"boundary_grid", cfg.analyses.boundary_grid},
                     {"pruning_ratios", cfg.analyses.pruning_ratios}};
    if (cfg.init_seed) j["init_seed"] = *cfg.init_seed;
    return j;
}

void write_summary(const ExperimentConfig& cfg, const RunResult& res,
                   const std::filesystem::path& dir, bool diverged) {
    json s;
    s["config"] = config_to_json(cfg);
    s["final_val_acc"] = res.final_val_acc;
    s["best_val_acc"] = res.best_val_acc;
    s["records"] = res.metrics.size();
    s["diverged"] = diverged;
    s["variance_convention"] = "population";
    std::ofstream f(dir / "summary.json");
    f << s.dump(2) << "\n";
}

}  // namespace

void write_metrics_csv(const std::string& path,
                       const std::vector<MetricsRecord>& metrics) {
    std::ofstream f(path);
    if (!f) throw IngestionError("cannot open metrics file: " + path);
    f << "step,train_loss,val_loss,val_acc,base_lr,mod_mean,mod_var,"
         "sens_mean,sens_var,u_mean\n";
    for (const MetricsRecord& r : metrics)
        f << r.step << "," << fmt(r.train_loss) << "," << fmt(r.val_loss)
          << "," << fmt(r.val_acc) << "," << fmt(r.base_lr_value) << ","
          << fmt(r.mod_mean) << "," << fmt(r.mod_var) << ","
          << fmt(r.sens_mean) << "," << fmt(r.sens_var) << ","
          << fmt(r.u_mean) << "\n";
}

RunResult run_training_with_outputs(const ExperimentConfig& cfg) {
    std::filesystem::path dir(cfg.output_dir);
    std::filesystem::create_directories(dir);
    RunResult res;
    try {
        run_training_impl(cfg, res);
    } catch (const DivergenceError&) {
        write_metrics_csv((dir / "metrics.csv").string(), res.metrics);
        write_summary(cfg, res, dir, true);
        throw;
    }
    write_metrics_csv((dir / "metrics.csv").string(), res.metrics);
    write_summary(cfg, res, dir, false);
    save_checkpoint((dir / "checkpoint.bin").string(), cfg.network,
                    cfg.seed, res.params);
    if (cfg.analyses.variation_trace) {
        std::ofstream f(dir / "variation_trace.csv");
        f << "step,u_mean,u_var\n";
        for (std::size_t i = 0; i < res.trace.steps().size(); ++i)
            f << res.trace.steps()[i] << "," << fmt(res.trace.means()[i])
              << "," << fmt(res.trace.variances()[i]) << "\n";
    }
    if (res.final_snapshot) {
        std::ofstream f(dir / "sensitivity.csv");
        f << "index,sensitivity\n";
        for (std::size_t j = 0; j < res.final_snapshot->values.size(); ++j)
            f << j << "," << fmt(res.final_snapshot->values[j]) << "\n";
        SensitivityStats st = sensitivity_stats(*res.final_snapshot);
        json sj = {{"mean", st.mean},
                   {"variance", st.variance},
                   {"variance_convention", "population"},
                   {"q01", st.q01},
                   {"q05", st.q05},
                   {"q25", st.q25},
                   {"q50", st.q50},
                   {"q75", st.q75},
                   {"q95", st.q95},
                   {"q99", st.q99}};
        std::ofstream fj(dir / "sensitivity_stats.json");
        fj << sj.dump(2) << "\n";
    }
    if (cfg.analyses.boundary_grid &&
        cfg.network.layer_dims.front() == 2) {
        BoundaryGrid grid = decision_boundary_grid(cfg.network, res.params);
        write_boundary_csv((dir / "boundary.csv").string(), grid);
        write_boundary_svg((dir / "boundary.svg").string(), grid,
                           res.data.train);
    }
    if (!cfg.analyses.pruning_ratios.empty()) {
        std::vector<PruneCurveRow> rows = pruning_curve(
            cfg, res.params, res.data, cfg.analyses.pruning_ratios);
        write_prune_curve_csv((dir / "prune_curve.csv").string(), rows);
    }
    return res;
}

BoundaryGrid decision_boundary_grid(const NetworkSpec& spec,
                                    const std::vector<double>& params,
                                    double x_min, double x_max, double y_min,
                                    double y_max, int resolution) {
    if (spec.layer_dims.front() != 2)
        throw ConfigError("boundary grid requires a 2-input network");
    if (resolution < 2) throw ConfigError("resolution must be >= 2");
    BoundaryGrid g;
    g.x_min = x_min;
    g.x_max = x_max;
    g.y_min = y_min;
    g.y_max = y_max;
    g.resolution = resolution;
    std::vector<double> points;
    points.reserve(static_cast<std::size_t>(resolution) * resolution * 2);
    for (int iy = 0; iy < resolution; ++iy) {
        double y = y_min + (y_max - y_min) * iy / (resolution - 1);
        for (int ix = 0; ix < resolution; ++ix) {
            double x = x_min + (x_max - x_min) * ix / (resolution - 1);
            points.push_back(x);
            points.push_back(y);
        }
    }
    g.labels = predict_labels(spec, params, points,
                              static_cast<std::size_t>(resolution) *
                                  resolution);
    return g;
}

void write_boundary_csv(const std::string& path, const BoundaryGrid& g) {
    std::ofstream f(path);
    if (!f) throw IngestionError("cannot open boundary file: " + path);
    f << "x,y,label\n";
    int r = g.resolution;
    for (int iy = 0; iy < r; ++iy) {
        double y = g.y_min + (g.y_max - g.y_min) * iy / (r - 1);
        for (int ix = 0; ix < r; ++ix) {
            double x = g.x_min + (g.x_max - g.x_min) * ix / (r - 1);
            f << fmt(x) << "," << fmt(y) << ","
              << g.labels[static_cast<std::size_t>(iy) * r + ix] << "\n";
        }
    }
}

void write_boundary_svg(const std::string& path, const BoundaryGrid& g,
                        const Batch& train_points) {
    static const char* fills[] = {"#7fb2e5", "#f2a884", "#8fd18f",
                                  "#d9a7de", "#e5e07f", "#a0a0a0"};
    static const char* strokes[] = {"#1f5fa5", "#c55419", "#1f7a1f",
                                    "#8d2f96", "#8a841a", "#404040"};
    constexpr int n_colors = 6;
    std::ofstream f(path);
    if (!f) throw IngestionError("cannot open svg file: " + path);
    const int size = 600;
    int r = g.resolution;
    double cell_w = static_cast<double>(size) / r;
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size
      << "\" height=\"" << size << "\" viewBox=\"0 0 " << size << " " << size
      << "\">\n";
    for (int iy = 0; iy < r; ++iy)
        for (int ix = 0; ix < r; ++ix) {
            int label = g.labels[static_cast<std::size_t>(iy) * r + ix];
            // svg y axis points down; flip so y_max is at the top
            double px = ix * cell_w;
            double py = (r - 1 - iy) * cell_w;
            f << "<rect x=\"" << px << "\" y=\"" << py << "\" width=\""
              << cell_w + 0.5 << "\" height=\"" << cell_w + 0.5
              << "\" fill=\"" << fills[label % n_colors] << "\"/>\n";
        }
    auto to_px = [&](double v, double lo, double hi) {
        return (v - lo) / (hi - lo) * size;
    };
    for (std::size_t s = 0; s < train_points.n_samples; ++s) {
        double x = train_points.inputs[s * 2];
        double y = train_points.inputs[s * 2 + 1];
        if (x < g.x_min || x > g.x_max || y < g.y_min || y > g.y_max) continue;
        int label = train_points.labels[s];
        f << "<circle cx=\"" << to_px(x, g.x_min, g.x_max) << "\" cy=\""
          << size - to_px(y, g.y_min, g.y_max) << "\" r=\"2.5\" fill=\""
          << strokes[label % n_colors] << "\"/>\n";
    }
    f << "</svg>\n";
}

std::vector<PruneCurveRow> pruning_curve(const ExperimentConfig& cfg,
                                         const std::vector<double>& params,
                                         const DatasetSplit& data,
                                         std::vector<double> ratios) {
    std::sort(ratios.begin(), ratios.end());
    SensitivitySnapshot snap =
        full_data_sensitivity(cfg.network, params, data.train);
    std::vector<std::uint8_t> excl = bias_exclusion_mask(cfg.network);
    double base_acc = accuracy(cfg.network, params, data.validation);
    std::vector<PruneCurveRow> rows;
    for (double r : ratios) {
        auto [pruned, mask] = prune_by_sensitivity(params, snap, r, excl);
        PruneCurveRow row;
        row.ratio = r;
        row.val_acc = accuracy(cfg.network, pruned, data.validation);
        row.delta = row.val_acc - base_acc;
        rows.push_back(row);
    }
    return rows;
}

void write_prune_curve_csv(const std::string& path,
                           const std::vector<PruneCurveRow>& rows) {
    std::ofstream f(path);
    if (!f) throw IngestionError("cannot open prune curve file: " + path);
    f << "ratio,val_acc,delta\n";
    for (const auto& r : rows)
        f << fmt(r.ratio) << "," << fmt(r.val_acc) << "," << fmt(r.delta)
          << "\n";
}

namespace {

// Mean overlap over all subsets of the given size.
double mean_overlap_at_size(const std::vector<SensitivitySnapshot>& snaps,
                            std::size_t size, double fraction) {
    std::size_t k = snaps.size();
    std::vector<std::size_t> pick(size);
    double total = 0.0;
    std::size_t count = 0;
    // iterate combinations
    std::function<void(std::size_t, std::size_t)> rec =
        [&](std::size_t start, std::size_t depth) {
            if (depth == size) {
                std::vector<SensitivitySnapshot> sel;
                for (std::size_t i : pick) sel.push_back(snaps[i]);
                total += redundancy_overlap(sel, fraction);
                ++count;
                return;
            }
            for (std::size_t i = start; i < k; ++i) {
                pick[depth] = i;
                rec(i + 1, depth + 1);
            }
        };
    rec(0, 0);
    return count ? total / static_cast<double>(count) : 0.0;
}

}  // namespace

OverlapResult overlap_sweep(const ExperimentConfig& cfg,
                            const std::vector<double>& learning_rates) {
    if (learning_rates.size() < 2)
        throw ConfigError("overlap sweep needs at least 2 learning rates");
    OverlapResult res;
    res.learning_rates = learning_rates;
    std::vector<SensitivitySnapshot> snaps;
    std::uint64_t shared_init = cfg.init_seed ? *cfg.init_seed
                                              : mix_seed(cfg.seed, 10);
    for (std::size_t i = 0; i < learning_rates.size(); ++i) {
        ExperimentConfig run = cfg;
        run.schedule.peak_lr = learning_rates[i];
        run.init_seed = shared_init;       // shared init
        run.seed = cfg.seed + 1 + i;       // distinct batching
        run.analyses = {};
        run.analyses.final_snapshot = true;
        RunResult r = run_training(run);
        snaps.push_back(std::move(*r.final_snapshot));
    }
    for (std::size_t size = 2; size <= snaps.size(); ++size)
        res.by_subset_size.push_back(
            {size, mean_overlap_at_size(snaps, size, res.bottom_fraction)});
    return res;
}

void write_overlap_csv(const std::string& path, const OverlapResult& res) {
    std::ofstream f(path);
    if (!f) throw IngestionError("cannot open overlap file: " + path);
    f << "subset_size,mean_overlap,bottom_fraction,metric\n";
    for (const auto& row : res.by_subset_size)
        f << row.subset_size << "," << fmt(row.mean_overlap) << ","
          << fmt(res.bottom_fraction) << ",intersection_over_set_size\n";
}

std::vector<GridCell> grid_search(const ExperimentConfig& cfg,
                                  const std::vector<double>& learning_rates,
                                  const std::vector<double>& beta0s) {
    if (learning_rates.empty()) throw ConfigError("grid needs learning rates");
    std::vector<double> b0s = beta0s.empty()
                                  ? std::vector<double>{cfg.optimizer.beta0}
                                  : beta0s;
    std::vector<GridCell> cells;
    for (double lr : learning_rates)
        for (double b0 : b0s) {
            ExperimentConfig run = cfg;
            run.schedule.peak_lr = lr;
            run.optimizer.beta0 = b0;
            run.analyses = {};
            GridCell cell{lr, b0, std::nan("")};
            try {
                RunResult r = run_training(run);
                cell.val_acc = r.final_val_acc;
            } catch (const DivergenceError&) {
                // diverged cell stays NaN; the sweep continues
            }
            cells.push_back(cell);
        }
    return cells;
}

void write_grid_csv(const std::string& path,
                    const std::vector<GridCell>& cells) {
    std::ofstream f(path);
    if (!f) throw IngestionError("cannot open grid file: " + path);
    f << "learning_rate,beta0,val_acc\n";
    for (const auto& c : cells)
        f << fmt(c.learning_rate) << "," << fmt(c.beta0) << ","
          << fmt(c.val_acc) << "\n";
}

}  // namespace sage
