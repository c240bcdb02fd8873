#pragma once

// Internal phase-execution layer shared by the thread and process
// launchers. A job is executed as one or two phases:
//   Train / Evaluate        -> one phase
//   Aggregate               -> Relay (re-publish the broadcast for the
//                              children) then Combine (aggregate the
//                              children's results)
// Both launcher modes funnel through the same functions so results are
// bit-identical regardless of where a phase runs.

#include <nlohmann/json.hpp>

#include "hflight/runtime.hpp"

namespace hflight::exec {

enum class Phase { Train, Relay, Combine, Evaluate };

struct ChildInput {
    std::string node_id;
    NodeState state;
    ProxyRef ref;
};

// Fully-resolved inputs of one phase (control data only).
struct PhaseInputs {
    Phase phase = Phase::Train;
    std::string node_id;
    std::uint64_t round = 1;
    ProxyRef input_ref;              // unused for Combine
    TrainConfig train_cfg;           // Train only
    std::int64_t sleep_ns = 0;       // Train only
    std::vector<ChildInput> children;  // Combine only, in topology child order
};

struct PhaseOutput {
    std::optional<ProxyRef> relay_ref;  // Relay
    std::optional<JobResult> result;    // Train / Combine / Evaluate
};

// Runs one phase against the context's store/dataset. Throws on failure.
PhaseOutput run_phase(const RunContext& ctx, const PhaseInputs& in);

// Wire codec for shipping phases to worker processes.
nlohmann::json phase_to_json(const PhaseInputs& in);
PhaseInputs phase_from_json(const nlohmann::json& j);
nlohmann::json result_to_json(const JobResult& r);
JobResult result_from_json(const nlohmann::json& j);

std::int64_t steady_now_ns();

}  // namespace hflight::exec
