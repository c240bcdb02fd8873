#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "hflight/dataplane.hpp"
#include "hflight/dataset.hpp"
#include "hflight/model.hpp"
#include "hflight/strategy.hpp"
#include "hflight/topology.hpp"

namespace hflight {

enum class JobKind { Train, Aggregate, Evaluate };
enum class LauncherMode { Threads, Processes };

// Everything a job needs to execute that is not carried in the job's small
// control payload: the topology, model, data, strategy and the proxy store.
// Immutable once a launcher has started (process launchers hand it to
// forked workers).
struct RunContext {
    Topology topology;
    ModelSpec model;
    Strategy strategy;
    LabeledDataset dataset;
    FederatedSubsets subsets;
    LabeledDataset eval_data;  // view the coordinator evaluates against
    std::shared_ptr<ProxyStore> store;
};

// Uniform result record returned by workers and aggregators alike.
struct JobResult {
    std::string node_id;
    NodeKind node_kind = NodeKind::Worker;
    ProxyRef params;
    NodeState state;
    std::vector<LossReport> metrics;
    std::int64_t start_ns = 0;  // CLOCK_MONOTONIC, comparable across local processes
    std::int64_t end_ns = 0;
};

namespace detail {
struct HandleState;
struct GateState;
}  // namespace detail

// Write-once future for a JobResult. Resolution is observable from any
// thread; callbacks fire exactly once (immediately when already settled).
class CompletionHandle {
public:
    CompletionHandle();

    std::uint64_t id() const;
    bool settled() const;
    bool failed() const;

    // Blocks until settled; rethrows the job's error.
    const JobResult& get() const;
    void wait() const;

    // `fn` runs when the handle settles (success or failure).
    void on_settled(std::function<void()> fn) const;

    void resolve(JobResult result) const;
    void fail(std::exception_ptr error) const;

private:
    std::shared_ptr<detail::HandleState> state_;
};

// Write-once future for the downward relay of an aggregate job: resolves
// with the ProxyRef the aggregator re-published for its children.
class RelayGate {
public:
    RelayGate();

    bool settled() const;
    bool failed() const;
    const ProxyRef& ref() const;
    std::exception_ptr error() const;
    void on_settled(std::function<void()> fn) const;

    void resolve(ProxyRef ref) const;
    void fail(std::exception_ptr error) const;

private:
    std::shared_ptr<detail::GateState> state_;
};

// As-completed iteration over a set of handles.
class CompletionQueue {
public:
    void add(CompletionHandle h);
    // Next handle to settle, FIFO in completion order. Blocks.
    CompletionHandle next();
    std::size_t pending() const;

private:
    mutable std::mutex mutex_;
    std::condition_variable_any cv_;
    std::deque<CompletionHandle> ready_;
    std::size_t outstanding_ = 0;
};

// Control-plane job record. The payload carries references and scalars
// only; launchers enforce a 4 KB cap on its serialized size.
struct Job {
    JobKind kind = JobKind::Train;
    std::string node_id;
    std::uint64_t round = 1;

    // Input parameters: an explicit ref when the producer is the
    // submitter, otherwise the parent aggregator's relay gate.
    std::optional<ProxyRef> input_ref;
    std::optional<RelayGate> parent_relay;

    // Aggregate only: gate resolved with the re-published broadcast ref,
    // and the children whose results feed the aggregation.
    RelayGate own_relay;
    std::vector<CompletionHandle> child_handles;

    TrainConfig train_cfg;       // Train only
    std::int64_t sleep_ns = 0;   // synthetic training duration (simulation)

    // Pre-created so callers can wire dependencies before submission.
    CompletionHandle handle;
};

class Launcher {
public:
    virtual ~Launcher() = default;
    virtual void start(std::shared_ptr<const RunContext> ctx) = 0;
    virtual CompletionHandle submit(Job job) = 0;
    virtual void shutdown() = 0;
    virtual std::size_t slots() const = 0;
    virtual std::string mode() const = 0;
};

// Thread- or process-pool launcher with `slots` execution slots and FIFO
// dispatch of ready jobs. Aggregate jobs never hold a slot while waiting:
// the relay phase runs as soon as the parent broadcast is available and
// the combine phase is dispatched by the children's completion callbacks.
std::unique_ptr<Launcher> make_local_launcher(LauncherMode mode, std::size_t slots);

// Seam for FaaS-style remote execution. Not configured in this build:
// start/submit raise RuntimeFault("remote launcher not configured").
std::unique_ptr<Launcher> make_remote_launcher();

// Serialized control payload of a job (also used for the size cap).
std::string job_control_payload(const Job& job);

std::string to_string(LauncherMode mode);
LauncherMode launcher_mode_from_string(const std::string& s);

}  // namespace hflight
