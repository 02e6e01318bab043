#include "sage/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "sage/rng.hpp"

namespace sage {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

void validate_dataset_spec(const DatasetSpec& spec) {
    if (spec.kind == DatasetKind::csv) {
        if (spec.path.empty()) throw ConfigError("csv dataset needs a path");
        return;
    }
    if (spec.n_per_class < 1) throw ConfigError("n_per_class must be >= 1");
    if (spec.n_classes < 2) throw ConfigError("n_classes must be >= 2");
    if (spec.noise_std < 0.0) throw ConfigError("noise_std must be >= 0");
    if (spec.kind == DatasetKind::spiral && spec.cycles <= 0.0)
        throw ConfigError("cycles must be > 0");
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
        throw ConfigError("train_fraction must lie in (0, 1)");
}

struct RawPoints {
    std::vector<double> xy;  // row-major n x 2
    std::vector<int> labels;
};

RawPoints make_spiral(const DatasetSpec& spec, Rng& rng) {
    RawPoints pts;
    for (int k = 0; k < spec.n_classes; ++k) {
        for (int i = 0; i < spec.n_per_class; ++i) {
            double u = rng.next_open_closed();
            double r = u;
            double phi = kTwoPi * (spec.cycles * u +
                                   static_cast<double>(k) / spec.n_classes);
            double x = r * std::cos(phi) + spec.noise_std * rng.gaussian();
            double y = r * std::sin(phi) + spec.noise_std * rng.gaussian();
            pts.xy.push_back(x);
            pts.xy.push_back(y);
            pts.labels.push_back(k);
        }
    }
    return pts;
}

RawPoints make_blobs(const DatasetSpec& spec, Rng& rng) {
    // Class centers equally spaced on a circle of radius 4.
    RawPoints pts;
    for (int k = 0; k < spec.n_classes; ++k) {
        double angle = kTwoPi * k / spec.n_classes;
        double cx = 4.0 * std::cos(angle);
        double cy = 4.0 * std::sin(angle);
        for (int i = 0; i < spec.n_per_class; ++i) {
            pts.xy.push_back(cx + spec.noise_std * rng.gaussian());
            pts.xy.push_back(cy + spec.noise_std * rng.gaussian());
            pts.labels.push_back(k);
        }
    }
    return pts;
}

Batch make_batch(const std::vector<double>& xy, const std::vector<int>& labels,
                 const std::vector<std::size_t>& order, std::size_t dim) {
    Batch b;
    b.n_samples = order.size();
    b.input_dim = dim;
    b.inputs.reserve(order.size() * dim);
    b.labels.reserve(order.size());
    for (std::size_t idx : order) {
        for (std::size_t d = 0; d < dim; ++d)
            b.inputs.push_back(xy[idx * dim + d]);
        b.labels.push_back(labels[idx]);
    }
    return b;
}

}  // namespace

DatasetSplit generate(const DatasetSpec& spec) {
    validate_dataset_spec(spec);
    if (spec.kind == DatasetKind::csv) {
        // csv has no generation-side split statistics of its own; a
        // stratified split still applies.
        throw ConfigError("generate() does not handle csv; use load_csv");
    }
    Rng rng(mix_seed(spec.seed, 0));
    RawPoints pts = spec.kind == DatasetKind::spiral ? make_spiral(spec, rng)
                                                     : make_blobs(spec, rng);
    std::size_t n_total = pts.labels.size();

    // Stratified split: identical train count per class keeps the
    // class balance exact.
    std::size_t n_train_per_class = static_cast<std::size_t>(
        std::lround(spec.train_fraction * spec.n_per_class));
    n_train_per_class = std::min<std::size_t>(
        std::max<std::size_t>(n_train_per_class, 1),
        static_cast<std::size_t>(spec.n_per_class) - 1);

    Rng split_rng(mix_seed(spec.seed, 1));
    std::vector<std::size_t> train_order, val_order;
    for (int k = 0; k < spec.n_classes; ++k) {
        std::vector<std::size_t> cls(spec.n_per_class);
        std::iota(cls.begin(), cls.end(),
                  static_cast<std::size_t>(k) * spec.n_per_class);
        split_rng.shuffle(cls);
        for (std::size_t i = 0; i < cls.size(); ++i)
            (i < n_train_per_class ? train_order : val_order).push_back(cls[i]);
    }
    split_rng.shuffle(train_order);
    split_rng.shuffle(val_order);

    DatasetSplit out;
    out.train = make_batch(pts.xy, pts.labels, train_order, 2);
    out.validation = make_batch(pts.xy, pts.labels, val_order, 2);

    // Standardize with train statistics only (no validation leakage).
    std::size_t dim = 2;
    out.feature_mean.assign(dim, 0.0);
    out.feature_std.assign(dim, 0.0);
    std::size_t n_train = out.train.n_samples;
    for (std::size_t s = 0; s < n_train; ++s)
        for (std::size_t d = 0; d < dim; ++d)
            out.feature_mean[d] += out.train.inputs[s * dim + d];
    for (std::size_t d = 0; d < dim; ++d)
        out.feature_mean[d] /= static_cast<double>(n_train);
    for (std::size_t s = 0; s < n_train; ++s)
        for (std::size_t d = 0; d < dim; ++d) {
            double e = out.train.inputs[s * dim + d] - out.feature_mean[d];
            out.feature_std[d] += e * e;
        }
    for (std::size_t d = 0; d < dim; ++d) {
        out.feature_std[d] =
            std::sqrt(out.feature_std[d] / static_cast<double>(n_train));
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
    (void)n_total;
    return out;
}

Batch load_csv(const std::string& path, const std::string& label_column) {
    std::ifstream f(path);
    if (!f) throw IngestionError("cannot open csv: " + path);
    std::string line;
    if (!std::getline(f, line))
        throw IngestionError("empty csv: " + path, 1);
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<std::string> columns;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) columns.push_back(cell);
    }
    std::size_t label_idx = columns.size();
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == label_column) label_idx = i;
    if (label_idx == columns.size()) {
        std::string avail;
        for (const auto& c : columns) avail += (avail.empty() ? "" : ", ") + c;
        throw IngestionError("label column '" + label_column +
                             "' not found; available: " + avail, 1);
    }

    Batch b;
    b.input_dim = columns.size() - 1;
    std::vector<double> raw_labels;
    std::size_t line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t col = 0;
        while (std::getline(ss, cell, ',')) {
            char* end = nullptr;
            double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0')
                throw IngestionError("non-numeric cell '" + cell +
                                     "' at line " + std::to_string(line_no),
                                     line_no);
            if (col == label_idx)
                raw_labels.push_back(v);
            else
                b.inputs.push_back(v);
            ++col;
        }
        if (col != columns.size())
            throw IngestionError("row width mismatch at line " +
                                 std::to_string(line_no), line_no);
        ++b.n_samples;
    }
    if (b.n_samples == 0) throw IngestionError("csv has no data rows", 1);

    // Dense integer coding: distinct label values in sorted order.
    std::vector<double> distinct = raw_labels;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()),
                   distinct.end());
    std::map<double, int> code;
    for (std::size_t i = 0; i < distinct.size(); ++i)
        code[distinct[i]] = static_cast<int>(i);
    b.labels.reserve(raw_labels.size());
    for (double v : raw_labels) b.labels.push_back(code[v]);
    return b;
}

void save_csv(const std::string& path, const Batch& batch) {
    std::ofstream f(path);
    if (!f) throw IngestionError("cannot open csv for writing: " + path);
    for (std::size_t d = 0; d < batch.input_dim; ++d) f << "x" << d << ",";
    f << "label\n";
    char buf[40];
    for (std::size_t s = 0; s < batch.n_samples; ++s) {
        for (std::size_t d = 0; d < batch.input_dim; ++d) {
            std::snprintf(buf, sizeof buf, "%.17g",
                          batch.inputs[s * batch.input_dim + d]);
            f << buf << ",";
        }
        f << batch.labels[s] << "\n";
    }
    if (!f) throw IngestionError("csv write failed: " + path);
}

}  // namespace sage
