#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hflight/runtime.hpp"

namespace hflight {

struct NodeTiming {
    std::int64_t start_ns = 0;
    std::int64_t end_ns = 0;
};

// One global round (sync) or one aggregation event (async).
struct RoundRecord {
    std::uint64_t round = 0;             // strictly increasing
    std::vector<std::string> selected;   // sorted worker ids
    LossReport global;                   // coordinator-side evaluation
    bool evaluated = false;              // false when the eval stride skipped this event
    std::map<std::string, NodeTiming> node_timings;
    std::uint64_t payload_bytes = 0;     // data-plane traffic attributed to this round
    std::uint64_t header_bytes = 0;
};

// Injected per-(worker, round) training durations for controlled timing
// experiments. Disabled when base_seconds == 0. Durations are
// base * multiplier[worker] * lognormal(sigma) jitter, seeded.
struct DurationModel {
    double base_seconds = 0.0;
    double jitter_sigma = 0.0;
    std::map<std::string, double> multipliers;
    std::uint64_t seed = 0;

    bool enabled() const { return base_seconds > 0.0; }
    std::int64_t duration_ns(const std::string& worker, std::uint64_t round) const;
};

struct EngineOptions {
    std::uint64_t rounds = 1;       // sync: global rounds; async: rounds per worker
    std::uint64_t seed = 0;
    TrainConfig train;              // per-worker seed is derived per round
    DurationModel durations;
    std::uint64_t eval_stride = 1;  // async: evaluate every k-th aggregation event
};

struct RunOutput {
    std::vector<RoundRecord> rounds;
    ParamVector final_params;
};

// Synchronous hierarchical FL. Per round: the coordinator selects workers,
// derives the spanning subtree, submits jobs top-down (aggregators receive
// their children's handles), aggregates its direct children and evaluates
// the global model. Rounds are atomic: the first failing job aborts.
RunOutput run_sync_hfl(const std::shared_ptr<const RunContext>& ctx, Launcher& launcher,
                       const EngineOptions& opts);

// Asynchronous two-tier FL. Each worker completion triggers a partial
// update of the global model (convex combination with the strategy's
// beta) and an immediate resubmission until every worker did R rounds.
// One RoundRecord per aggregation event.
RunOutput run_async_fl(const std::shared_ptr<const RunContext>& ctx, Launcher& launcher,
                       const EngineOptions& opts);

// Context assembly helper: wires the evaluation view (union of the worker
// subsets) and the proxy store.
std::shared_ptr<RunContext> make_run_context(Topology topology, ModelSpec model,
                                             Strategy strategy, LabeledDataset dataset,
                                             FederatedSubsets subsets,
                                             std::shared_ptr<ProxyStore> store);

}  // namespace hflight
