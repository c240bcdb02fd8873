#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "hflight/dataset.hpp"
#include "hflight/model.hpp"
#include "hflight/params.hpp"
#include "hflight/topology.hpp"

namespace hflight {

// Per-node key/value state carried across callbacks within a round and
// propagated upward inside JobResults.
class NodeState {
public:
    using Value = std::variant<std::int64_t, double, std::string>;

    void set_int(const std::string& key, std::int64_t v) { values_[key] = v; }
    void set_double(const std::string& key, double v) { values_[key] = v; }
    void set_string(const std::string& key, std::string v) { values_[key] = std::move(v); }

    bool contains(const std::string& key) const { return values_.count(key) != 0; }
    std::int64_t get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::string get_string(const std::string& key) const;

    const std::map<std::string, Value>& values() const { return values_; }

    // Number of training samples a node (or its subtree) contributed.
    // Missing or non-positive values are strategy-contract errors where
    // a weighted aggregate needs them.
    static constexpr const char* kNumDataSamples = "num_data_samples";

private:
    std::map<std::string, Value> values_;
};

struct JobResult;  // runtime.hpp

// Sub-strategy interfaces. Defaults are provided for each; built-in
// algorithms override only what they need.

class CoordinatorStrategy {
public:
    virtual ~CoordinatorStrategy() = default;
    // Participation fraction in (0, 1]; 1 selects every worker.
    virtual double participation() const { return 1.0; }
    virtual std::set<std::string> select_workers(const Topology& topo, std::uint64_t round,
                                                 std::uint64_t seed) const;
};

class AggregatorStrategy {
public:
    virtual ~AggregatorStrategy() = default;
    virtual ParamVector aggregate_params(NodeState& state,
                                         const std::map<std::string, NodeState>& children_states,
                                         const std::map<std::string, ParamVector>& children_params)
        const = 0;
};

class WorkerStrategy {
public:
    virtual ~WorkerStrategy() = default;
    virtual void before_training(NodeState& state, const LabeledDataset& data) const {
        (void)state;
        (void)data;
    }
    virtual void after_training(NodeState& state, const JobResult& result) const {
        (void)state;
        (void)result;
    }
};

class TrainerStrategy {
public:
    virtual ~TrainerStrategy() = default;
    // Adjust (loss, gradient) before each SGD step; default is identity.
    virtual void modify_loss(double& loss, ParamVector& gradient, const ParamVector& local,
                             const ParamVector& global) const {
        (void)loss;
        (void)gradient;
        (void)local;
        (void)global;
    }
};

struct AsyncConfig {
    double beta = 0.5;  // Eq-style step size in (0,1)
    void check() const;
};

// Bundle of the four sub-strategies. All four are always present.
struct Strategy {
    std::string name;
    std::shared_ptr<const CoordinatorStrategy> coord;
    std::shared_ptr<const AggregatorStrategy> aggr;
    std::shared_ptr<const WorkerStrategy> worker;
    std::shared_ptr<const TrainerStrategy> trainer;
    std::optional<AsyncConfig> async_config;  // present for async strategies

    void check() const;  // all four components present
};

// ---- aggregation primitives ------------------------------------------------

// Coordinate-wise unweighted mean.
ParamVector fedsgd_aggregate(const std::vector<ParamVector>& children_params);

// Sample-count-weighted mean; writes the summed count into `state` so the
// weight propagates up the tree. Children missing num_data_samples raise
// ContractError.
ParamVector fedavg_aggregate(NodeState& state,
                             const std::map<std::string, NodeState>& children_states,
                             const std::map<std::string, ParamVector>& children_params);

// Proximal penalty: loss += (mu/2)*||w - w_global||^2 and the matching
// gradient term mu*(w - w_global).
void fedprox_adjust(double& loss, ParamVector& gradient, const ParamVector& local,
                    const ParamVector& global, double mu);

// Convex combination beta*global + (1-beta)*incoming.
ParamVector fedasync_update(const ParamVector& global, const ParamVector& incoming, double beta);

// Uniform sample without replacement of ceil(participation * |workers|)
// workers, deterministic in (seed, round).
std::set<std::string> select_workers(const Topology& topo, std::uint64_t round, std::uint64_t seed,
                                     double participation);

// ---- built-in strategies ----------------------------------------------------

struct StrategyParams {
    double mu = 0.01;          // fedprox proximal coefficient
    double beta = 0.5;         // fedasync step size
    double participation = 1.0;
};

Strategy make_fedsgd(const StrategyParams& p = {});
Strategy make_fedavg(const StrategyParams& p = {});
Strategy make_fedprox(const StrategyParams& p = {});
Strategy make_fedasync(const StrategyParams& p = {});

// Lookup by name: fedsgd | fedavg | fedprox | fedasync.
Strategy make_strategy(const std::string& name, const StrategyParams& p = {});

}  // namespace hflight
