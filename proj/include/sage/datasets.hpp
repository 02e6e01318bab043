#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "sage/nn.hpp"

namespace sage {

enum class DatasetKind { spiral, blobs, csv };

struct DatasetSpec {
    DatasetKind kind = DatasetKind::spiral;
    int n_per_class = 500;
    int n_classes = 3;
    double noise_std = 0.1;
    double cycles = 1.75;  // spiral arm turns
    std::uint64_t seed = 0;
    std::string path;          // csv only
    std::string label_column;  // csv only
    double train_fraction = 0.8;
};

struct DatasetSplit {
    Batch train;
    Batch validation;
    // Train-split standardization statistics, applied to both splits.
    std::vector<double> feature_mean;
    std::vector<double> feature_std;
};

// Deterministic generation: the same spec always yields the same
// split. Features are standardized with train-split statistics.
DatasetSplit generate(const DatasetSpec& spec);

// Rectangular numeric CSV with a header row; the label column becomes
// dense integer classes (distinct values mapped in sorted order).
Batch load_csv(const std::string& path, const std::string& label_column);

void save_csv(const std::string& path, const Batch& batch);

}  // namespace sage
