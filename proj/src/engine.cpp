#include "hflight/engine.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "hflight/errors.hpp"
#include "hflight/hashing.hpp"

namespace hflight {

std::int64_t DurationModel::duration_ns(const std::string& worker, std::uint64_t round) const {
    if (!enabled()) return 0;
    double mult = 1.0;
    if (auto it = multipliers.find(worker); it != multipliers.end()) mult = it->second;
    double seconds = base_seconds * mult;
    if (jitter_sigma > 0.0) {
        std::mt19937_64 rng(mix_seed(seed, worker, round));
        std::normal_distribution<double> normal(0.0, jitter_sigma);
        seconds *= std::exp(normal(rng));
    }
    return static_cast<std::int64_t>(seconds * 1e9);
}

std::shared_ptr<RunContext> make_run_context(Topology topology, ModelSpec model,
                                             Strategy strategy, LabeledDataset dataset,
                                             FederatedSubsets subsets,
                                             std::shared_ptr<ProxyStore> store) {
    strategy.check();
    auto ctx = std::make_shared<RunContext>();
    ctx->topology = std::move(topology);
    ctx->model = std::move(model);
    ctx->strategy = std::move(strategy);
    ctx->dataset = std::move(dataset);
    ctx->subsets = std::move(subsets);
    ctx->store = std::move(store);

    // Global evaluation view: union of the worker subsets, ascending.
    std::vector<std::size_t> eval_indices;
    for (const auto& [worker, indices] : ctx->subsets)
        eval_indices.insert(eval_indices.end(), indices.begin(), indices.end());
    std::sort(eval_indices.begin(), eval_indices.end());
    eval_indices.erase(std::unique(eval_indices.begin(), eval_indices.end()), eval_indices.end());
    ctx->eval_data = take(ctx->dataset, eval_indices);
    return ctx;
}

namespace {

void check_engine_preconditions(const RunContext& ctx, const Launcher& launcher,
                                const EngineOptions& opts) {
    if (opts.rounds < 1) throw ConfigError("engine needs at least one round");
    auto violations = validate(ctx.topology);
    if (!violations.empty())
        throw ConfigError("engine given an illegal topology: " + violations.front().message);
    // Blocked aggregators occupy slots in the general launcher contract, so
    // a full root-to-leaf path must fit.
    std::size_t needed = static_cast<std::size_t>(ctx.topology.height()) + 1;
    if (launcher.slots() < needed)
        throw ConfigError("launcher has " + std::to_string(launcher.slots()) +
                          " slots but the topology height needs at least " +
                          std::to_string(needed));
}

TrainConfig worker_train_cfg(const EngineOptions& opts, const std::string& worker,
                             std::uint64_t round) {
    TrainConfig cfg = opts.train;
    cfg.seed = mix_seed(opts.seed, worker, round);
    return cfg;
}

LossReport wait_for_eval(Launcher& launcher, const std::string& node, const ProxyRef& ref,
                         std::uint64_t round, NodeTiming* timing) {
    Job eval;
    eval.kind = JobKind::Evaluate;
    eval.node_id = node;
    eval.round = round;
    eval.input_ref = ref;
    CompletionHandle handle = eval.handle;
    launcher.submit(std::move(eval));
    const JobResult& res = handle.get();
    if (timing) {
        timing->start_ns = res.start_ns;
        timing->end_ns = res.end_ns;
    }
    return res.metrics.at(0);
}

}  // namespace

RunOutput run_sync_hfl(const std::shared_ptr<const RunContext>& ctx, Launcher& launcher,
                       const EngineOptions& opts) {
    const RunContext& c = *ctx;
    check_engine_preconditions(c, launcher, opts);
    const std::string& root = c.topology.root();

    RunOutput out;
    ParamVector global = quantize(init_params(c.model, opts.seed));
    ProxyRef global_ref = c.store->put(global, root);

    for (std::uint64_t round = 1; round <= opts.rounds; ++round) {
        std::uint64_t payload_before = c.store->ledger().payload_total();
        std::uint64_t total_before = c.store->ledger().total_bytes();

        auto selected = c.strategy.coord->select_workers(c.topology, round, opts.seed);
        Topology sub = selected_subtree(c.topology, selected);

        // Jobs are created for every node of the subtree, then submitted
        // top-down in BFS order; aggregate jobs receive the handles of
        // their children and a relay gate their children draw the
        // broadcast from.
        std::map<std::string, CompletionHandle> handles;
        std::map<std::string, RelayGate> relays;
        auto order = sub.bfs_order();
        for (const auto& id : order) {
            if (id == root) continue;
            handles.emplace(id, CompletionHandle());
            if (sub.node(id).kind == NodeKind::Aggregator) relays.emplace(id, RelayGate());
        }

        for (const auto& id : order) {
            if (id == root) continue;
            const NodeSpec& spec = sub.node(id);
            Job job;
            job.node_id = id;
            job.round = round;
            job.handle = handles.at(id);
            const std::string& parent = sub.parent(id);
            if (parent == root)
                job.input_ref = global_ref;
            else
                job.parent_relay = relays.at(parent);
            if (spec.kind == NodeKind::Worker) {
                job.kind = JobKind::Train;
                job.train_cfg = worker_train_cfg(opts, id, round);
                job.sleep_ns = opts.durations.duration_ns(id, round);
            } else {
                job.kind = JobKind::Aggregate;
                job.own_relay = relays.at(id);
                for (const auto& child : spec.children)
                    job.child_handles.push_back(handles.at(child));
            }
            launcher.submit(std::move(job));
        }

        RoundRecord record;
        record.round = round;
        record.selected.assign(selected.begin(), selected.end());

        // The coordinator is the global aggregator for its direct children.
        const auto& root_children = sub.node(root).children;
        for (const auto& child : root_children) handles.at(child).get();  // throws on job error

        NodeTiming coord_timing;
        coord_timing.start_ns = exec::steady_now_ns();
        std::map<std::string, NodeState> states;
        std::map<std::string, ParamVector> params;
        for (const auto& child : root_children) {
            const JobResult& res = handles.at(child).get();
            params.emplace(child, c.store->resolve(res.params, root, round));
            states.emplace(child, res.state);
        }
        NodeState coord_state;
        global = c.strategy.aggr->aggregate_params(coord_state, states, params);
        coord_timing.end_ns = exec::steady_now_ns();

        ProxyRef next_ref = c.store->put(global, root);
        NodeTiming eval_timing;
        record.global = wait_for_eval(launcher, root, next_ref, round, &eval_timing);
        record.evaluated = true;

        for (const auto& [id, handle] : handles) {
            const JobResult& res = handle.get();
            record.node_timings[id] = {res.start_ns, res.end_ns};
        }
        coord_timing.end_ns = eval_timing.end_ns;  // root span covers aggregate + eval
        record.node_timings[root] = coord_timing;

        record.payload_bytes = c.store->ledger().payload_total() - payload_before;
        record.header_bytes =
            (c.store->ledger().total_bytes() - total_before) - record.payload_bytes;
        out.rounds.push_back(std::move(record));

        c.store->purge_except({next_ref.key});
        global_ref = next_ref;
    }

    out.final_params = global;
    return out;
}

RunOutput run_async_fl(const std::shared_ptr<const RunContext>& ctx, Launcher& launcher,
                       const EngineOptions& opts) {
    const RunContext& c = *ctx;
    check_engine_preconditions(c, launcher, opts);
    if (!c.strategy.async_config)
        throw ConfigError("async engine needs a strategy with an async config (fedasync)");
    c.strategy.async_config->check();
    const double beta = c.strategy.async_config->beta;

    const std::string& root = c.topology.root();
    for (const auto& child : c.topology.node(root).children)
        if (c.topology.node(child).kind != NodeKind::Worker)
            throw ConfigError("async requires a two-tier topology (aggregator '" + child +
                              "' found under the coordinator)");

    const auto workers = c.topology.node(root).children;  // child order
    RunOutput out;
    ParamVector global = quantize(init_params(c.model, opts.seed));

    // Live proxy refs: a global snapshot may still be pulled by an
    // in-flight training job long after a newer snapshot replaced it.
    std::map<std::string, std::size_t> ref_consumers;
    ProxyRef global_ref = c.store->put(global, root);
    ref_consumers[global_ref.key] = 0;

    std::map<std::uint64_t, std::pair<std::string, std::string>> in_flight;  // handle -> (worker, key)
    std::map<std::string, std::uint64_t> rounds_done;
    std::map<std::string, std::uint64_t> staleness;  // t_{k'} per worker
    CompletionQueue completed;

    auto submit_train = [&](const std::string& worker, std::uint64_t worker_round) {
        Job job;
        job.kind = JobKind::Train;
        job.node_id = worker;
        job.round = worker_round;
        job.input_ref = global_ref;
        job.train_cfg = worker_train_cfg(opts, worker, worker_round);
        job.sleep_ns = opts.durations.duration_ns(worker, worker_round);
        CompletionHandle handle = job.handle;
        ref_consumers[global_ref.key]++;
        in_flight[handle.id()] = {worker, global_ref.key};
        launcher.submit(std::move(job));
        completed.add(handle);
    };

    for (const auto& worker : workers) {
        rounds_done[worker] = 0;
        staleness[worker] = 0;
        submit_train(worker, 1);
    }

    const std::uint64_t total_events =
        static_cast<std::uint64_t>(workers.size()) * opts.rounds;
    LossReport last_report;
    for (std::uint64_t event = 1; event <= total_events; ++event) {
        std::uint64_t payload_before = c.store->ledger().payload_total();
        std::uint64_t total_before = c.store->ledger().total_bytes();

        CompletionHandle handle = completed.next();
        const JobResult& res = handle.get();  // surfaces worker errors
        auto flight = in_flight.at(handle.id());
        in_flight.erase(handle.id());
        const std::string& worker = flight.first;

        ParamVector incoming = c.store->resolve(res.params, root, event);
        global = fedasync_update(global, incoming, beta);
        staleness[worker] = event;
        rounds_done[worker]++;

        // Old snapshots with no remaining consumer can go; the incoming
        // worker result was consumed just now.
        ref_consumers[flight.second]--;
        ProxyRef next_ref = c.store->put(global, root);
        ref_consumers[next_ref.key] = 0;
        std::vector<std::string> keep;
        keep.push_back(next_ref.key);
        for (const auto& [key, consumers] : ref_consumers)
            if (consumers > 0) keep.push_back(key);
        global_ref = next_ref;

        RoundRecord record;
        record.round = event;
        record.selected = {worker};
        record.node_timings[worker] = {res.start_ns, res.end_ns};
        if (rounds_done[worker] < opts.rounds) submit_train(worker, rounds_done[worker] + 1);

        if (opts.eval_stride > 0 && (event % opts.eval_stride == 0 || event == total_events)) {
            NodeTiming eval_timing;
            record.global = wait_for_eval(launcher, root, global_ref, event, &eval_timing);
            record.evaluated = true;
            record.node_timings[root] = eval_timing;
            last_report = record.global;
        } else {
            record.global = last_report;
        }

        record.payload_bytes = c.store->ledger().payload_total() - payload_before;
        record.header_bytes =
            (c.store->ledger().total_bytes() - total_before) - record.payload_bytes;
        out.rounds.push_back(std::move(record));

        c.store->purge_except(keep);
        for (auto it = ref_consumers.begin(); it != ref_consumers.end();) {
            if (it->second == 0 && it->first != global_ref.key)
                it = ref_consumers.erase(it);
            else
                ++it;
        }
    }

    out.final_params = global;
    return out;
}

}  // namespace hflight
