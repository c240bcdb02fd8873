#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hflight/dataset.hpp"
#include "hflight/params.hpp"

namespace hflight {

enum class Architecture { TinyNet, Linear, SmallMLP };

// Built-in model descriptions. TinyNet is a 1-in/1-out linear regressor
// (2 parameters, 8 bytes). Linear is a d->c softmax classifier. SmallMLP
// stacks tanh hidden layers in front of a softmax output.
struct ModelSpec {
    Architecture arch = Architecture::TinyNet;
    std::size_t input_dim = 1;
    std::size_t output_dim = 1;
    std::vector<std::size_t> hidden;  // SmallMLP only

    static ModelSpec tinynet();
    static ModelSpec linear(std::size_t input_dim, std::size_t classes);
    static ModelSpec small_mlp(std::size_t input_dim, std::vector<std::size_t> hidden,
                               std::size_t classes);

    std::size_t param_count() const;
    std::size_t byte_size() const { return 4 * param_count(); }  // float32 wire format
    std::vector<LayerView> layout() const;
    bool classification() const { return arch != Architecture::TinyNet; }

    std::string name() const;
};

struct TrainConfig {
    double learning_rate = 0.01;
    std::size_t epochs = 1;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;

    void check() const;
};

struct LossReport {
    double loss = 0.0;
    double accuracy = 0.0;
    std::size_t num_samples = 0;
};

// Hook applied to (loss, gradient) after every forward/backward pass,
// before the SGD step. Receives the current local parameters and the
// round's global parameters. This is where proximal-style penalties enter.
using LossAdjuster = std::function<void(double& loss, ParamVector& gradient,
                                        const ParamVector& local, const ParamVector& global)>;

// Deterministic parameter initialization for a model (seeded uniform).
ParamVector init_params(const ModelSpec& model, std::uint64_t seed);

// Mean loss and gradient over a batch. Classification models use softmax
// cross-entropy; TinyNet uses mean squared error against the label value.
std::pair<double, ParamVector> forward_loss(const ModelSpec& model, const ParamVector& params,
                                            const LabeledDataset& batch);

// Plain SGD: epochs x ceil(n/batch) steps of w <- w - lr * g with a seeded
// shuffle per epoch. One LossReport per epoch (full-data evaluation after
// the epoch). Throws DivergenceError with the step index if loss leaves
// the finite range.
std::pair<ParamVector, std::vector<LossReport>> local_train(
    const ModelSpec& model, const ParamVector& start, const LabeledDataset& data,
    const TrainConfig& cfg, const LossAdjuster& adjust = nullptr,
    const ParamVector* global = nullptr);

LossReport evaluate(const ModelSpec& model, const ParamVector& params, const LabeledDataset& data);

}  // namespace hflight
