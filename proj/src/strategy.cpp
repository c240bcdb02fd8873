#include "hflight/strategy.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "hflight/errors.hpp"
#include "hflight/hashing.hpp"

namespace hflight {

std::int64_t NodeState::get_int(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ContractError("node state is missing key '" + key + "'");
    if (const auto* v = std::get_if<std::int64_t>(&it->second)) return *v;
    throw ContractError("node state key '" + key + "' is not an integer");
}

double NodeState::get_double(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ContractError("node state is missing key '" + key + "'");
    if (const auto* v = std::get_if<double>(&it->second)) return *v;
    if (const auto* v = std::get_if<std::int64_t>(&it->second)) return static_cast<double>(*v);
    throw ContractError("node state key '" + key + "' is not numeric");
}

std::string NodeState::get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ContractError("node state is missing key '" + key + "'");
    if (const auto* v = std::get_if<std::string>(&it->second)) return *v;
    throw ContractError("node state key '" + key + "' is not a string");
}

void AsyncConfig::check() const {
    if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("async beta must lie in (0,1)");
}

void Strategy::check() const {
    if (!coord || !aggr || !worker || !trainer)
        throw ConfigError("strategy '" + name + "' is missing a sub-strategy");
    if (async_config) async_config->check();
}

std::set<std::string> CoordinatorStrategy::select_workers(const Topology& topo,
                                                          std::uint64_t round,
                                                          std::uint64_t seed) const {
    return hflight::select_workers(topo, round, seed, participation());
}

std::set<std::string> select_workers(const Topology& topo, std::uint64_t round, std::uint64_t seed,
                                     double participation) {
    if (!(participation > 0.0 && participation <= 1.0))
        throw ConfigError("participation must lie in (0,1]");
    auto workers = topo.worker_ids();
    std::sort(workers.begin(), workers.end());
    std::size_t want = static_cast<std::size_t>(
        std::ceil(participation * static_cast<double>(workers.size())));
    want = std::max<std::size_t>(1, std::min(want, workers.size()));

    if (want < workers.size()) {
        std::mt19937_64 rng(mix_seed(seed, "select_workers", round));
        // partial Fisher-Yates: the first `want` entries are the sample
        for (std::size_t i = 0; i < want; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, workers.size() - 1);
            std::swap(workers[i], workers[pick(rng)]);
        }
        workers.resize(want);
    }
    return {workers.begin(), workers.end()};
}

ParamVector fedsgd_aggregate(const std::vector<ParamVector>& children_params) {
    if (children_params.empty()) throw ContractError("fedsgd_aggregate: no children");
    const ParamVector& first = children_params.front();
    std::vector<double> acc(first.size(), 0.0);
    for (const auto& child : children_params) {
        first.check_compatible(child);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += child[i];
    }
    double inv = 1.0 / static_cast<double>(children_params.size());
    for (auto& v : acc) v *= inv;
    return ParamVector(std::move(acc), first.layout());
}

ParamVector fedavg_aggregate(NodeState& state,
                             const std::map<std::string, NodeState>& children_states,
                             const std::map<std::string, ParamVector>& children_params) {
    if (children_params.empty()) throw ContractError("fedavg_aggregate: no children");

    std::int64_t total = 0;
    for (const auto& [node, child_state] : children_states) {
        if (!child_state.contains(NodeState::kNumDataSamples))
            throw ContractError("fedavg_aggregate: child '" + node +
                                "' did not report num_data_samples");
        std::int64_t n = child_state.get_int(NodeState::kNumDataSamples);
        if (n <= 0)
            throw ContractError("fedavg_aggregate: child '" + node +
                                "' reported non-positive num_data_samples");
        total += n;
    }

    const ParamVector& first = children_params.begin()->second;
    std::vector<double> acc(first.size(), 0.0);
    for (const auto& [node, child] : children_params) {
        first.check_compatible(child);
        auto it = children_states.find(node);
        if (it == children_states.end())
            throw ContractError("fedavg_aggregate: no state for child '" + node + "'");
        double weight = static_cast<double>(it->second.get_int(NodeState::kNumDataSamples)) /
                        static_cast<double>(total);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += weight * child[i];
    }
    state.set_int(NodeState::kNumDataSamples, total);
    return ParamVector(std::move(acc), first.layout());
}

void fedprox_adjust(double& loss, ParamVector& gradient, const ParamVector& local,
                    const ParamVector& global, double mu) {
    if (mu < 0.0) throw ConfigError("fedprox mu must be >= 0");
    if (mu == 0.0) return;  // bitwise-identical to the unpenalized path
    local.check_compatible(global);
    gradient.check_compatible(local);
    double sq = 0.0;
    for (std::size_t i = 0; i < local.size(); ++i) {
        double d = local[i] - global[i];
        sq += d * d;
        gradient[i] += mu * d;
    }
    loss += 0.5 * mu * sq;
}

ParamVector fedasync_update(const ParamVector& global, const ParamVector& incoming, double beta) {
    if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("fedasync beta must lie in (0,1)");
    global.check_compatible(incoming);
    std::vector<double> out(global.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = beta * global[i] + (1.0 - beta) * incoming[i];
    return ParamVector(std::move(out), global.layout());
}

namespace {

class FixedParticipationCoordinator : public CoordinatorStrategy {
public:
    explicit FixedParticipationCoordinator(double participation) : participation_(participation) {}
    double participation() const override { return participation_; }

private:
    double participation_;
};

class FedSgdAggregator : public AggregatorStrategy {
public:
    ParamVector aggregate_params(NodeState& state,
                                 const std::map<std::string, NodeState>& children_states,
                                 const std::map<std::string, ParamVector>& children_params)
        const override {
        (void)state;
        (void)children_states;
        std::vector<ParamVector> params;
        params.reserve(children_params.size());
        for (const auto& [node, p] : children_params) params.push_back(p);
        return fedsgd_aggregate(params);
    }
};

class FedAvgAggregator : public AggregatorStrategy {
public:
    ParamVector aggregate_params(NodeState& state,
                                 const std::map<std::string, NodeState>& children_states,
                                 const std::map<std::string, ParamVector>& children_params)
        const override {
        return fedavg_aggregate(state, children_states, children_params);
    }
};

class FedAvgWorker : public WorkerStrategy {
public:
    void before_training(NodeState& state, const LabeledDataset& data) const override {
        state.set_int(NodeState::kNumDataSamples, static_cast<std::int64_t>(data.num_samples));
    }
};

class FedProxTrainer : public TrainerStrategy {
public:
    explicit FedProxTrainer(double mu) : mu_(mu) {}
    void modify_loss(double& loss, ParamVector& gradient, const ParamVector& local,
                     const ParamVector& global) const override {
        fedprox_adjust(loss, gradient, local, global, mu_);
    }

private:
    double mu_;
};

Strategy base_strategy(const std::string& name, const StrategyParams& p) {
    Strategy s;
    s.name = name;
    s.coord = std::make_shared<FixedParticipationCoordinator>(p.participation);
    s.worker = std::make_shared<WorkerStrategy>();
    s.trainer = std::make_shared<TrainerStrategy>();
    return s;
}

}  // namespace

Strategy make_fedsgd(const StrategyParams& p) {
    Strategy s = base_strategy("fedsgd", p);
    s.aggr = std::make_shared<FedSgdAggregator>();
    s.check();
    return s;
}

Strategy make_fedavg(const StrategyParams& p) {
    Strategy s = base_strategy("fedavg", p);
    s.aggr = std::make_shared<FedAvgAggregator>();
    s.worker = std::make_shared<FedAvgWorker>();
    s.check();
    return s;
}

Strategy make_fedprox(const StrategyParams& p) {
    Strategy s = make_fedavg(p);
    s.name = "fedprox";
    s.trainer = std::make_shared<FedProxTrainer>(p.mu);
    s.check();
    return s;
}

Strategy make_fedasync(const StrategyParams& p) {
    Strategy s = base_strategy("fedasync", p);
    s.aggr = std::make_shared<FedSgdAggregator>();  // unused by the async engine
    s.async_config = AsyncConfig{p.beta};
    s.check();
    return s;
}

Strategy make_strategy(const std::string& name, const StrategyParams& p) {
    if (name == "fedsgd") return make_fedsgd(p);
    if (name == "fedavg") return make_fedavg(p);
    if (name == "fedprox") return make_fedprox(p);
    if (name == "fedasync") return make_fedasync(p);
    throw ConfigError("unknown strategy '" + name + "'");
}

}  // namespace hflight
