#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace hflight {

// Dense feature matrix plus integer class labels in [0, num_classes).
struct LabeledDataset {
    std::size_t num_samples = 0;
    std::size_t num_features = 0;
    std::size_t num_classes = 0;
    std::vector<double> features;  // row major, num_samples x num_features
    std::vector<std::uint32_t> labels;

    const double* row(std::size_t i) const { return features.data() + i * num_features; }
    void check() const;  // throws on inconsistent shape or out-of-range label
};

// Per-worker index lists into a shared base dataset.
using FederatedSubsets = std::map<std::string, std::vector<std::size_t>>;

struct DirichletSplitConfig {
    double alpha_samples = 3.0;  // concentration over worker sample counts
    double alpha_labels = 1.0;   // concentration over per-worker label mixes
    std::uint64_t seed = 0;
};

// Dual Dirichlet non-IID split: worker sample counts follow
// Dirichlet(alpha_samples), per-worker label mixes follow
// Dirichlet(alpha_labels). Sampling is without replacement from per-class
// pools; every worker receives at least one sample. Deterministic per seed.
FederatedSubsets federated_split(const LabeledDataset& data,
                                 const std::vector<std::string>& workers,
                                 const DirichletSplitConfig& cfg);

// Gaussian blobs, one cluster per class, centers spread on a scaled
// hypercube pattern. Labels come out exactly balanced.
LabeledDataset synth_blobs(std::size_t classes, std::size_t dims, std::size_t per_class,
                           double spread, std::uint64_t seed);

// IDX container ingestion (the FashionMNIST/MNIST file pair). Pixels are
// scaled to [0, 1].
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path);

// CSV with a header row; the label column is named "label", all other
// columns are numeric features.
LabeledDataset load_csv(const std::string& path);

// View of a dataset restricted to an index list (copying rows).
LabeledDataset take(const LabeledDataset& data, const std::vector<std::size_t>& indices);

// JSON export/import of split assignments for reproducibility.
std::string subsets_to_json(const FederatedSubsets& subsets);
FederatedSubsets subsets_from_json(const std::string& text);

}  // namespace hflight
