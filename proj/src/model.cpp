#include "hflight/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "hflight/errors.hpp"
#include "hflight/hashing.hpp"

namespace hflight {

ModelSpec ModelSpec::tinynet() { return ModelSpec{Architecture::TinyNet, 1, 1, {}}; }

ModelSpec ModelSpec::linear(std::size_t input_dim, std::size_t classes) {
    return ModelSpec{Architecture::Linear, input_dim, classes, {}};
}

ModelSpec ModelSpec::small_mlp(std::size_t input_dim, std::vector<std::size_t> hidden,
                               std::size_t classes) {
    return ModelSpec{Architecture::SmallMLP, input_dim, classes, std::move(hidden)};
}

std::size_t ModelSpec::param_count() const {
    std::size_t total = 0;
    std::size_t prev = input_dim;
    for (auto h : hidden) {
        total += prev * h + h;
        prev = h;
    }
    total += prev * output_dim + output_dim;
    return total;
}

std::vector<LayerView> ModelSpec::layout() const {
    std::vector<LayerView> layers;
    std::size_t offset = 0;
    std::size_t prev = input_dim;
    std::size_t idx = 0;
    auto add = [&](const std::string& name, std::size_t len) {
        layers.push_back({name, offset, len});
        offset += len;
    };
    for (auto h : hidden) {
        add("layer" + std::to_string(idx) + ".weight", prev * h);
        add("layer" + std::to_string(idx) + ".bias", h);
        prev = h;
        ++idx;
    }
    add("out.weight", prev * output_dim);
    add("out.bias", output_dim);
    return layers;
}

std::string ModelSpec::name() const {
    switch (arch) {
        case Architecture::TinyNet: return "tinynet";
        case Architecture::Linear: return "linear";
        case Architecture::SmallMLP: return "smallmlp";
    }
    return "tinynet";
}

void TrainConfig::check() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw ConfigError("learning_rate must be finite and >= 0");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

ParamVector init_params(const ModelSpec& model, std::uint64_t seed) {
    auto layout = model.layout();
    std::size_t total = model.param_count();
    std::mt19937_64 rng(splitmix64(seed ^ 0x696e6974ULL));
    std::uniform_real_distribution<double> dist(-0.1, 0.1);
    std::vector<double> values(total);
    for (auto& v : values) v = dist(rng);
    return ParamVector(std::move(values), std::move(layout));
}

namespace {

struct LayerDims {
    std::size_t in, out, w_off, b_off;
};

std::vector<LayerDims> layer_dims(const ModelSpec& model) {
    std::vector<LayerDims> dims;
    std::size_t offset = 0;
    std::size_t prev = model.input_dim;
    for (auto h : model.hidden) {
        dims.push_back({prev, h, offset, offset + prev * h});
        offset += prev * h + h;
        prev = h;
    }
    dims.push_back({prev, model.output_dim, offset, offset + prev * model.output_dim});
    return dims;
}

void check_shapes(const ModelSpec& model, const ParamVector& params, const LabeledDataset& data) {
    if (params.size() != model.param_count())
        throw DimensionError("parameter count does not match model");
    if (data.num_features != model.input_dim)
        throw DimensionError("dataset feature dim " + std::to_string(data.num_features) +
                             " does not match model input dim " + std::to_string(model.input_dim));
    if (model.classification() && data.num_classes > model.output_dim)
        throw DimensionError("dataset has more classes than model outputs");
}

// Forward + backward for one sample; accumulates gradient. Returns the
// sample loss; writes the predicted class (argmax) for classification or
// the raw prediction for TinyNet.
double sample_grad(const ModelSpec& model, const std::vector<LayerDims>& dims,
                   const ParamVector& params, const double* x, std::uint32_t label,
                   std::vector<double>& grad, double* prediction) {
    const auto& w = params.values();

    if (model.arch == Architecture::TinyNet) {
        // y_hat = a*x + b, loss = (y_hat - y)^2
        double y = static_cast<double>(label);
        double y_hat = w[0] * x[0] + w[1];
        double err = y_hat - y;
        grad[0] += 2.0 * err * x[0];
        grad[1] += 2.0 * err;
        *prediction = y_hat;
        return err * err;
    }

    // Dense layers with tanh activations, softmax cross-entropy on top.
    std::vector<std::vector<double>> activations;  // post-activation per layer input
    activations.emplace_back(x, x + model.input_dim);
    std::vector<std::vector<double>> pre;  // pre-activation per layer
    for (std::size_t li = 0; li < dims.size(); ++li) {
        const auto& d = dims[li];
        const auto& input = activations.back();
        std::vector<double> z(d.out);
        for (std::size_t o = 0; o < d.out; ++o) {
            double acc = w[d.b_off + o];
            const double* row = w.data() + d.w_off + o * d.in;
            for (std::size_t i = 0; i < d.in; ++i) acc += row[i] * input[i];
            z[o] = acc;
        }
        pre.push_back(z);
        if (li + 1 < dims.size())
            for (auto& v : z) v = std::tanh(v);
        activations.push_back(std::move(z));
    }

    // Softmax CE on the logits.
    const auto& logits = activations.back();
    double max_logit = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (double v : logits) denom += std::exp(v - max_logit);
    double log_denom = std::log(denom) + max_logit;
    double loss = log_denom - logits[label];
    *prediction = static_cast<double>(
        std::max_element(logits.begin(), logits.end()) - logits.begin());

    // Backward pass: delta = softmax - onehot at the top.
    std::vector<double> delta(logits.size());
    for (std::size_t o = 0; o < logits.size(); ++o)
        delta[o] = std::exp(logits[o] - log_denom) - (o == label ? 1.0 : 0.0);

    for (std::size_t li = dims.size(); li-- > 0;) {
        const auto& d = dims[li];
        const auto& input = activations[li];
        for (std::size_t o = 0; o < d.out; ++o) {
            grad[d.b_off + o] += delta[o];
            double* grow = grad.data() + d.w_off + o * d.in;
            for (std::size_t i = 0; i < d.in; ++i) grow[i] += delta[o] * input[i];
        }
        if (li == 0) break;
        const auto& z_prev = pre[li - 1];
        std::vector<double> next(d.in, 0.0);
        for (std::size_t i = 0; i < d.in; ++i) {
            double acc = 0.0;
            for (std::size_t o = 0; o < d.out; ++o) acc += w[d.w_off + o * d.in + i] * delta[o];
            double t = std::tanh(z_prev[i]);
            next[i] = acc * (1.0 - t * t);
        }
        delta = std::move(next);
    }
    return loss;
}

}  // namespace

std::pair<double, ParamVector> forward_loss(const ModelSpec& model, const ParamVector& params,
                                            const LabeledDataset& batch) {
    batch.check();
    check_shapes(model, params, batch);
    auto dims = layer_dims(model);

    std::vector<double> grad(params.size(), 0.0);
    double total_loss = 0.0;
    double pred;
    for (std::size_t i = 0; i < batch.num_samples; ++i)
        total_loss += sample_grad(model, dims, params, batch.row(i), batch.labels[i], grad, &pred);

    double inv_n = 1.0 / static_cast<double>(batch.num_samples);
    for (auto& g : grad) g *= inv_n;
    double loss = total_loss * inv_n;
    if (!std::isfinite(loss)) throw DivergenceError("non-finite loss in forward pass", 0);
    return {loss, ParamVector(std::move(grad), params.layout())};
}

std::pair<ParamVector, std::vector<LossReport>> local_train(
    const ModelSpec& model, const ParamVector& start, const LabeledDataset& data,
    const TrainConfig& cfg, const LossAdjuster& adjust, const ParamVector* global) {
    cfg.check();
    data.check();
    check_shapes(model, start, data);

    ParamVector w = start;
    std::vector<LossReport> history;
    history.reserve(cfg.epochs);

    std::mt19937_64 rng(splitmix64(cfg.seed));
    std::vector<std::size_t> order(data.num_samples);
    std::iota(order.begin(), order.end(), 0);

    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size, ++step) {
            std::size_t end = std::min(begin + cfg.batch_size, order.size());
            LabeledDataset batch = take(
                data, std::vector<std::size_t>(order.begin() + begin, order.begin() + end));
            auto [loss, grad] = forward_loss(model, w, batch);
            if (adjust) adjust(loss, grad, w, global ? *global : start);
            if (!std::isfinite(loss))
                throw DivergenceError("training diverged at step " + std::to_string(step), step);
            for (std::size_t i = 0; i < w.size(); ++i)
                w[i] = w[i] - cfg.learning_rate * grad[i];
        }
        history.push_back(evaluate(model, w, data));
    }
    return {std::move(w), std::move(history)};
}

LossReport evaluate(const ModelSpec& model, const ParamVector& params, const LabeledDataset& data) {
    data.check();
    check_shapes(model, params, data);
    auto dims = layer_dims(model);

    std::vector<double> scratch(params.size(), 0.0);
    double total_loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.num_samples; ++i) {
        double pred;
        total_loss +=
            sample_grad(model, dims, params, data.row(i), data.labels[i], scratch, &pred);
        if (model.classification()) {
            if (static_cast<std::uint32_t>(pred) == data.labels[i]) ++correct;
        } else {
            // regression: counted correct when the prediction rounds to the target
            if (std::abs(pred - static_cast<double>(data.labels[i])) < 0.5) ++correct;
        }
    }
    LossReport report;
    report.num_samples = data.num_samples;
    report.loss = total_loss / static_cast<double>(data.num_samples);
    report.accuracy = static_cast<double>(correct) / static_cast<double>(data.num_samples);
    return report;
}

}  // namespace hflight
