#include "runtime_exec.hpp"

#include <chrono>
#include <thread>

#include "hflight/errors.hpp"
#include "hflight/serde.hpp"

namespace hflight::exec {

using nlohmann::json;

std::int64_t steady_now_ns() {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

namespace {

JobResult run_train(const RunContext& ctx, const PhaseInputs& in) {
    JobResult out;
    out.node_id = in.node_id;
    out.node_kind = NodeKind::Worker;
    out.start_ns = steady_now_ns();

    ParamVector global = ctx.store->resolve(in.input_ref, in.node_id, in.round);

    auto subset_it = ctx.subsets.find(in.node_id);
    if (subset_it == ctx.subsets.end())
        throw ConfigError("worker '" + in.node_id + "' has no data subset");
    LabeledDataset data = take(ctx.dataset, subset_it->second);

    NodeState state;
    ctx.strategy.worker->before_training(state, data);

    const TrainerStrategy& trainer = *ctx.strategy.trainer;
    LossAdjuster adjust = [&trainer](double& loss, ParamVector& grad, const ParamVector& local,
                                     const ParamVector& global_params) {
        trainer.modify_loss(loss, grad, local, global_params);
    };
    auto [end_params, history] =
        local_train(ctx.model, global, data, in.train_cfg, adjust, &global);

    if (in.sleep_ns > 0)
        std::this_thread::sleep_for(std::chrono::nanoseconds(in.sleep_ns));

    out.params = ctx.store->put(end_params, in.node_id);
    out.metrics = std::move(history);
    ctx.strategy.worker->after_training(state, out);
    out.state = std::move(state);
    out.end_ns = steady_now_ns();
    return out;
}

ProxyRef run_relay(const RunContext& ctx, const PhaseInputs& in) {
    ParamVector params = ctx.store->resolve(in.input_ref, in.node_id, in.round);
    return ctx.store->put(params, in.node_id);
}

JobResult run_combine(const RunContext& ctx, const PhaseInputs& in) {
    JobResult out;
    out.node_id = in.node_id;
    out.node_kind = NodeKind::Aggregator;
    out.start_ns = steady_now_ns();

    std::map<std::string, NodeState> states;
    std::map<std::string, ParamVector> params;
    for (const auto& child : in.children) {
        params.emplace(child.node_id, ctx.store->resolve(child.ref, in.node_id, in.round));
        states.emplace(child.node_id, child.state);
    }
    NodeState own;
    ParamVector aggregated = ctx.strategy.aggr->aggregate_params(own, states, params);

    out.params = ctx.store->put(aggregated, in.node_id);
    out.state = std::move(own);
    out.end_ns = steady_now_ns();
    return out;
}

JobResult run_evaluate(const RunContext& ctx, const PhaseInputs& in) {
    JobResult out;
    out.node_id = in.node_id;
    out.node_kind = ctx.topology.node(in.node_id).kind;
    out.start_ns = steady_now_ns();

    ParamVector params = ctx.store->resolve(in.input_ref, in.node_id, in.round);
    out.metrics.push_back(evaluate(ctx.model, params, ctx.eval_data));
    out.params = in.input_ref;
    out.end_ns = steady_now_ns();
    return out;
}

}  // namespace

PhaseOutput run_phase(const RunContext& ctx, const PhaseInputs& in) {
    PhaseOutput out;
    switch (in.phase) {
        case Phase::Train: out.result = run_train(ctx, in); break;
        case Phase::Relay: out.relay_ref = run_relay(ctx, in); break;
        case Phase::Combine: out.result = run_combine(ctx, in); break;
        case Phase::Evaluate: out.result = run_evaluate(ctx, in); break;
    }
    return out;
}

json phase_to_json(const PhaseInputs& in) {
    json j;
    switch (in.phase) {
        case Phase::Train: j["phase"] = "train"; break;
        case Phase::Relay: j["phase"] = "relay"; break;
        case Phase::Combine: j["phase"] = "combine"; break;
        case Phase::Evaluate: j["phase"] = "evaluate"; break;
    }
    j["node"] = in.node_id;
    j["round"] = in.round;
    if (in.phase != Phase::Combine) j["ref"] = to_json(in.input_ref);
    if (in.phase == Phase::Train) {
        j["cfg"] = to_json(in.train_cfg);
        j["sleep_ns"] = in.sleep_ns;
    }
    if (in.phase == Phase::Combine) {
        json children = json::array();
        for (const auto& c : in.children)
            children.push_back(json{
                {"node", c.node_id}, {"state", to_json(c.state)}, {"ref", to_json(c.ref)}});
        j["children"] = std::move(children);
    }
    return j;
}

PhaseInputs phase_from_json(const json& j) {
    PhaseInputs in;
    const std::string phase = j.at("phase").get<std::string>();
    if (phase == "train")
        in.phase = Phase::Train;
    else if (phase == "relay")
        in.phase = Phase::Relay;
    else if (phase == "combine")
        in.phase = Phase::Combine;
    else if (phase == "evaluate")
        in.phase = Phase::Evaluate;
    else
        throw RuntimeFault("unknown phase '" + phase + "'");
    in.node_id = j.at("node").get<std::string>();
    in.round = j.at("round").get<std::uint64_t>();
    if (in.phase != Phase::Combine) in.input_ref = proxy_ref_from_json(j.at("ref"));
    if (in.phase == Phase::Train) {
        in.train_cfg = train_config_from_json(j.at("cfg"));
        in.sleep_ns = j.at("sleep_ns").get<std::int64_t>();
    }
    if (in.phase == Phase::Combine) {
        for (const auto& c : j.at("children")) {
            ChildInput child;
            child.node_id = c.at("node").get<std::string>();
            child.state = node_state_from_json(c.at("state"));
            child.ref = proxy_ref_from_json(c.at("ref"));
            in.children.push_back(std::move(child));
        }
    }
    return in;
}

json result_to_json(const JobResult& r) {
    json metrics = json::array();
    for (const auto& m : r.metrics) metrics.push_back(to_json(m));
    return json{{"node", r.node_id},
                {"kind", to_string(r.node_kind)},
                {"ref", to_json(r.params)},
                {"state", to_json(r.state)},
                {"metrics", std::move(metrics)},
                {"start_ns", r.start_ns},
                {"end_ns", r.end_ns}};
}

JobResult result_from_json(const json& j) {
    JobResult r;
    r.node_id = j.at("node").get<std::string>();
    r.node_kind = node_kind_from_string(j.at("kind").get<std::string>());
    r.params = proxy_ref_from_json(j.at("ref"));
    r.state = node_state_from_json(j.at("state"));
    for (const auto& m : j.at("metrics")) r.metrics.push_back(loss_report_from_json(m));
    r.start_ns = j.at("start_ns").get<std::int64_t>();
    r.end_ns = j.at("end_ns").get<std::int64_t>();
    return r;
}

}  // namespace hflight::exec
