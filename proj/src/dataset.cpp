#include "hflight/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hflight/errors.hpp"
#include "hflight/hashing.hpp"

namespace hflight {

void LabeledDataset::check() const {
    if (num_samples == 0) throw DimensionError("dataset has no samples");
    if (features.size() != num_samples * num_features)
        throw DimensionError("feature matrix size does not match num_samples x num_features");
    if (labels.size() != num_samples)
        throw DimensionError("label count does not match sample count");
    for (auto l : labels)
        if (l >= num_classes) throw DimensionError("label out of range");
}

namespace {

std::vector<double> dirichlet(std::mt19937_64& rng, double alpha, std::size_t n) {
    std::gamma_distribution<double> gamma(alpha, 1.0);
    std::vector<double> draws(n);
    double total = 0.0;
    for (auto& d : draws) {
        d = gamma(rng);
        // a zero gamma draw (possible for tiny alpha) would break
        // normalization; clamp to the smallest useful mass
        if (d <= 0.0 || !std::isfinite(d)) d = 1e-300;
        total += d;
    }
    for (auto& d : draws) d /= total;
    return draws;
}

// Integer counts proportional to shares, summing to total (largest
// remainder rounding).
std::vector<std::size_t> apportion(const std::vector<double>& shares, std::size_t total) {
    std::size_t n = shares.size();
    std::vector<std::size_t> counts(n);
    std::vector<std::pair<double, std::size_t>> remainders(n);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double exact = shares[i] * static_cast<double>(total);
        counts[i] = static_cast<std::size_t>(exact);
        remainders[i] = {exact - static_cast<double>(counts[i]), i};
        assigned += counts[i];
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t k = 0; assigned < total; ++k, ++assigned) counts[remainders[k % n].second]++;
    return counts;
}

}  // namespace

FederatedSubsets federated_split(const LabeledDataset& data,
                                 const std::vector<std::string>& workers,
                                 const DirichletSplitConfig& cfg) {
    data.check();
    if (workers.empty()) throw ConfigError("federated_split: no workers");
    if (cfg.alpha_samples <= 0.0 || cfg.alpha_labels <= 0.0)
        throw ConfigError("federated_split: alphas must be positive");
    if (data.num_samples < workers.size())
        throw ConfigError("federated_split: fewer samples than workers");

    std::mt19937_64 rng(splitmix64(cfg.seed));
    const std::size_t n_workers = workers.size();
    const std::size_t n_classes = data.num_classes;

    // Worker sample counts ~ Dirichlet(alpha_samples).
    auto count_shares = dirichlet(rng, cfg.alpha_samples, n_workers);
    auto counts = apportion(count_shares, data.num_samples);

    // Every worker keeps at least one sample; steal from the largest.
    for (std::size_t i = 0; i < n_workers; ++i) {
        while (counts[i] == 0) {
            std::size_t largest = std::max_element(counts.begin(), counts.end()) - counts.begin();
            if (counts[largest] <= 1) throw ConfigError("federated_split: split infeasible");
            counts[largest]--;
            counts[i]++;
        }
    }

    // Shuffled per-class index pools to draw from without replacement.
    std::vector<std::vector<std::size_t>> pools(n_classes);
    for (std::size_t i = 0; i < data.num_samples; ++i) pools[data.labels[i]].push_back(i);
    for (auto& pool : pools) std::shuffle(pool.begin(), pool.end(), rng);

    FederatedSubsets subsets;
    for (std::size_t w = 0; w < n_workers; ++w) {
        auto label_mix = dirichlet(rng, cfg.alpha_labels, n_classes);
        std::vector<std::size_t> want = apportion(label_mix, counts[w]);

        std::vector<std::size_t> indices;
        indices.reserve(counts[w]);
        std::size_t missing = 0;
        for (std::size_t c = 0; c < n_classes; ++c) {
            std::size_t take_n = std::min(want[c], pools[c].size());
            for (std::size_t k = 0; k < take_n; ++k) {
                indices.push_back(pools[c].back());
                pools[c].pop_back();
            }
            missing += want[c] - take_n;
        }
        // Exhausted class pools: redistribute the remaining mass over
        // whatever classes still have samples, proportional to pool size
        // (realized by always drawing from the largest remaining pool).
        while (missing > 0) {
            std::size_t best = n_classes;
            for (std::size_t c = 0; c < n_classes; ++c)
                if (!pools[c].empty() && (best == n_classes || pools[c].size() > pools[best].size()))
                    best = c;
            if (best == n_classes) break;
            indices.push_back(pools[best].back());
            pools[best].pop_back();
            --missing;
        }
        std::sort(indices.begin(), indices.end());
        subsets.emplace(workers[w], std::move(indices));
    }

    for (const auto& w : workers)
        if (subsets.at(w).empty()) throw ConfigError("federated_split: split infeasible");
    return subsets;
}

LabeledDataset synth_blobs(std::size_t classes, std::size_t dims, std::size_t per_class,
                           double spread, std::uint64_t seed) {
    if (classes < 2) throw ConfigError("synth_blobs: need at least 2 classes");
    if (per_class < 1) throw ConfigError("synth_blobs: need at least 1 sample per class");
    if (dims < 1) throw ConfigError("synth_blobs: need at least 1 dimension");

    LabeledDataset out;
    out.num_samples = classes * per_class;
    out.num_features = dims;
    out.num_classes = classes;
    out.features.resize(out.num_samples * dims);
    out.labels.resize(out.num_samples);

    std::mt19937_64 rng(splitmix64(seed ^ 0x626c6f62ULL));
    std::normal_distribution<double> noise(0.0, spread);

    // Class centers: vertices of a +-1 hypercube pattern, scaled by 2 so
    // neighboring centers sit 4 apart per differing coordinate.
    std::vector<double> centers(classes * dims);
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t d = 0; d < dims; ++d)
            centers[c * dims + d] = (((c >> (d % 63)) & 1) ? 2.0 : -2.0);

    std::size_t i = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t k = 0; k < per_class; ++k, ++i) {
            out.labels[i] = static_cast<std::uint32_t>(c);
            for (std::size_t d = 0; d < dims; ++d)
                out.features[i * dims + d] = centers[c * dims + d] + noise(rng);
        }
    }
    return out;
}

namespace {

std::uint32_t read_be_u32(std::ifstream& in, const std::string& path) {
    unsigned char buf[4];
    if (!in.read(reinterpret_cast<char*>(buf), 4))
        throw ParseError("truncated IDX file '" + path + "'");
    return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
           (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

}  // namespace

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream images(images_path, std::ios::binary);
    if (!images) throw ParseError("cannot open IDX images file '" + images_path + "'");
    std::ifstream labels(labels_path, std::ios::binary);
    if (!labels) throw ParseError("cannot open IDX labels file '" + labels_path + "'");

    std::uint32_t image_magic = read_be_u32(images, images_path);
    if (image_magic != 0x00000803u)
        throw ParseError("bad IDX magic in '" + images_path + "' (expected 0x00000803)");
    std::uint32_t label_magic = read_be_u32(labels, labels_path);
    if (label_magic != 0x00000801u)
        throw ParseError("bad IDX magic in '" + labels_path + "' (expected 0x00000801)");

    std::uint32_t n_images = read_be_u32(images, images_path);
    std::uint32_t rows = read_be_u32(images, images_path);
    std::uint32_t cols = read_be_u32(images, images_path);
    std::uint32_t n_labels = read_be_u32(labels, labels_path);
    if (n_images != n_labels)
        throw ParseError("IDX count mismatch: " + std::to_string(n_images) + " images vs " +
                         std::to_string(n_labels) + " labels");
    if (n_images == 0) throw ParseError("IDX files contain no samples");

    LabeledDataset out;
    out.num_samples = n_images;
    out.num_features = static_cast<std::size_t>(rows) * cols;
    out.features.resize(out.num_samples * out.num_features);
    out.labels.resize(out.num_samples);

    std::vector<unsigned char> pixel_row(out.num_features);
    for (std::uint32_t i = 0; i < n_images; ++i) {
        if (!images.read(reinterpret_cast<char*>(pixel_row.data()), pixel_row.size()))
            throw ParseError("truncated IDX file '" + images_path + "'");
        for (std::size_t j = 0; j < out.num_features; ++j)
            out.features[i * out.num_features + j] = pixel_row[j] / 255.0;
        unsigned char label;
        if (!labels.read(reinterpret_cast<char*>(&label), 1))
            throw ParseError("truncated IDX file '" + labels_path + "'");
        out.labels[i] = label;
    }
    std::uint32_t max_label = *std::max_element(out.labels.begin(), out.labels.end());
    out.num_classes = max_label + 1;
    out.check();
    return out;
}

LabeledDataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open CSV file '" + path + "'");

    std::string header;
    if (!std::getline(in, header)) throw ParseError("CSV file '" + path + "' is empty");
    std::vector<std::string> columns;
    {
        std::stringstream ss(header);
        std::string col;
        while (std::getline(ss, col, ',')) columns.push_back(col);
    }
    auto label_it = std::find(columns.begin(), columns.end(), "label");
    if (label_it == columns.end())
        throw SchemaError("CSV file '" + path + "' has no 'label' column");
    std::size_t label_col = label_it - columns.begin();

    LabeledDataset out;
    out.num_features = columns.size() - 1;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t col = 0;
        std::vector<double> row;
        std::uint32_t label = 0;
        while (std::getline(ss, cell, ',')) {
            try {
                if (col == label_col)
                    label = static_cast<std::uint32_t>(std::stoul(cell));
                else
                    row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ParseError("CSV '" + path + "' line " + std::to_string(line_no) +
                                 ": bad numeric value '" + cell + "'");
            }
            ++col;
        }
        if (col != columns.size())
            throw ParseError("CSV '" + path + "' line " + std::to_string(line_no) +
                             ": expected " + std::to_string(columns.size()) + " cells");
        out.features.insert(out.features.end(), row.begin(), row.end());
        out.labels.push_back(label);
        out.num_samples++;
    }
    if (out.num_samples == 0) throw ParseError("CSV file '" + path + "' has no data rows");
    out.num_classes = *std::max_element(out.labels.begin(), out.labels.end()) + 1;
    out.check();
    return out;
}

LabeledDataset take(const LabeledDataset& data, const std::vector<std::size_t>& indices) {
    LabeledDataset out;
    out.num_samples = indices.size();
    out.num_features = data.num_features;
    out.num_classes = data.num_classes;
    out.features.reserve(indices.size() * data.num_features);
    out.labels.reserve(indices.size());
    for (auto i : indices) {
        if (i >= data.num_samples) throw DimensionError("subset index out of range");
        out.features.insert(out.features.end(), data.row(i), data.row(i) + data.num_features);
        out.labels.push_back(data.labels[i]);
    }
    return out;
}

std::string subsets_to_json(const FederatedSubsets& subsets) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [worker, indices] : subsets) j[worker] = indices;
    return j.dump();
}

FederatedSubsets subsets_from_json(const std::string& text) {
    FederatedSubsets out;
    auto j = nlohmann::json::parse(text);
    for (auto it = j.begin(); it != j.end(); ++it)
        out.emplace(it.key(), it.value().get<std::vector<std::size_t>>());
    return out;
}

}  // namespace hflight
