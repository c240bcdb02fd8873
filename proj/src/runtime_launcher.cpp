#include <poll.h>
#include <signal.h>
#include <sys/eventfd.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/uio.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <atomic>
#include <cstring>
#include <map>
#include <thread>

#include "hflight/errors.hpp"
#include "hflight/runtime.hpp"
#include "runtime_exec.hpp"

namespace hflight {

using exec::Phase;
using exec::PhaseInputs;
using exec::PhaseOutput;
using nlohmann::json;

std::string to_string(LauncherMode mode) {
    return mode == LauncherMode::Threads ? "threads" : "processes";
}

LauncherMode launcher_mode_from_string(const std::string& s) {
    if (s == "threads") return LauncherMode::Threads;
    if (s == "processes") return LauncherMode::Processes;
    throw ConfigError("unknown launcher mode '" + s + "'");
}

std::string job_control_payload(const Job& job) {
    json j;
    switch (job.kind) {
        case JobKind::Train: j["kind"] = "train"; break;
        case JobKind::Aggregate: j["kind"] = "aggregate"; break;
        case JobKind::Evaluate: j["kind"] = "evaluate"; break;
    }
    j["node"] = job.node_id;
    j["round"] = job.round;
    if (job.input_ref) {
        j["ref"] = json{{"key", job.input_ref->key},
                        {"payload", job.input_ref->payload_bytes},
                        {"header", job.input_ref->header_bytes},
                        {"producer", job.input_ref->producer}};
    }
    j["relay_dep"] = job.parent_relay.has_value();
    if (!job.child_handles.empty()) {
        json ids = json::array();
        for (const auto& h : job.child_handles) ids.push_back(h.id());
        j["children"] = std::move(ids);
    }
    if (job.kind == JobKind::Train) {
        j["lr"] = job.train_cfg.learning_rate;
        j["epochs"] = job.train_cfg.epochs;
        j["batch"] = job.train_cfg.batch_size;
        j["seed"] = job.train_cfg.seed;
        j["sleep_ns"] = job.sleep_ns;
    }
    return j.dump();
}

namespace {

constexpr std::size_t kControlPayloadCap = 4096;

struct JobRec {
    Job job;
    std::atomic<int> combine_gate{0};
    std::atomic<bool> finished{false};
};
using JobRecPtr = std::shared_ptr<JobRec>;

struct Task {
    JobRecPtr rec;
    Phase phase = Phase::Train;
};

std::exception_ptr wrap_error(const std::string& node_id, std::exception_ptr cause) {
    try {
        std::rethrow_exception(cause);
    } catch (const std::exception& e) {
        return std::make_exception_ptr(
            RuntimeFault("node '" + node_id + "': " + e.what()));
    } catch (...) {
        return std::make_exception_ptr(RuntimeFault("node '" + node_id + "': unknown error"));
    }
}

class LocalLauncherBase : public Launcher {
public:
    explicit LocalLauncherBase(std::size_t slots) : slots_(slots) {
        if (slots_ < 1) throw ConfigError("launcher needs at least one slot");
    }

    void start(std::shared_ptr<const RunContext> ctx) override {
        {
            std::lock_guard lock(mutex_);
            if (started_) throw RuntimeFault("launcher already started");
            if (!ctx || !ctx->store) throw ConfigError("launcher context needs a proxy store");
            ctx_ = std::move(ctx);
            started_ = true;
        }
        backend_start();
    }

    CompletionHandle submit(Job job) override {
        {
            std::lock_guard lock(mutex_);
            if (!started_) throw RuntimeFault("launcher not started");
            if (closed_) throw RuntimeFault("queue closed: launcher is stopped");
        }
        if (job_control_payload(job).size() >= kControlPayloadCap)
            throw RuntimeFault("job control payload for node '" + job.node_id +
                               "' exceeds the 4 KB cap");
        if (!job.input_ref && !job.parent_relay)
            throw ConfigError("job for node '" + job.node_id + "' has no parameter source");
        if (job.kind == JobKind::Aggregate && job.child_handles.empty())
            throw ConfigError("aggregate job for node '" + job.node_id + "' has no children");
        if (job.kind != JobKind::Aggregate && !job.child_handles.empty())
            throw ConfigError("only aggregate jobs carry child handles");

        auto rec = std::make_shared<JobRec>();
        rec->job = std::move(job);
        CompletionHandle handle = rec->job.handle;
        {
            std::lock_guard lock(mutex_);
            live_.emplace(handle.id(), rec);
        }

        if (rec->job.kind == JobKind::Aggregate) {
            // relay phase + every child must settle before the combine runs
            rec->combine_gate.store(1 + static_cast<int>(rec->job.child_handles.size()));
            for (const auto& child : rec->job.child_handles)
                child.on_settled([this, rec] { combine_dep_done(rec); });
        }

        if (rec->job.parent_relay) {
            RelayGate gate = *rec->job.parent_relay;
            gate.on_settled([this, rec, gate] {
                if (gate.failed())
                    fail_job(rec, wrap_error(rec->job.node_id, gate.error()));
                else
                    enqueue(rec, first_phase(*rec));
            });
        } else {
            enqueue(rec, first_phase(*rec));
        }
        return handle;
    }

    void shutdown() override {
        {
            std::lock_guard lock(mutex_);
            if (closed_ || !started_) {
                closed_ = true;
                return;
            }
            closed_ = true;
        }
        backend_shutdown();
        std::map<std::uint64_t, JobRecPtr> leftover;
        {
            std::lock_guard lock(mutex_);
            leftover.swap(live_);
        }
        for (auto& [id, rec] : leftover)
            fail_job(rec, std::make_exception_ptr(
                              RuntimeFault("queue closed: launcher stopped before job ran")));
    }

    std::size_t slots() const override { return slots_; }

protected:
    virtual void backend_start() = 0;
    virtual void backend_dispatch(Task task) = 0;
    virtual void backend_shutdown() = 0;

    static Phase first_phase(const JobRec& rec) {
        switch (rec.job.kind) {
            case JobKind::Train: return Phase::Train;
            case JobKind::Evaluate: return Phase::Evaluate;
            case JobKind::Aggregate: return Phase::Relay;
        }
        return Phase::Train;
    }

    PhaseInputs make_inputs(const JobRec& rec, Phase phase) const {
        PhaseInputs in;
        in.phase = phase;
        in.node_id = rec.job.node_id;
        in.round = rec.job.round;
        if (phase != Phase::Combine)
            in.input_ref = rec.job.input_ref ? *rec.job.input_ref : rec.job.parent_relay->ref();
        if (phase == Phase::Train) {
            in.train_cfg = rec.job.train_cfg;
            in.sleep_ns = rec.job.sleep_ns;
        }
        if (phase == Phase::Combine) {
            for (const auto& child : rec.job.child_handles) {
                const JobResult& r = child.get();
                in.children.push_back({r.node_id, r.state, r.params});
            }
        }
        return in;
    }

    void enqueue(const JobRecPtr& rec, Phase phase) {
        bool is_closed;
        {
            std::lock_guard lock(mutex_);
            is_closed = closed_;
        }
        if (is_closed) {
            fail_job(rec, std::make_exception_ptr(RuntimeFault("queue closed")));
            return;
        }
        backend_dispatch({rec, phase});
    }

    void combine_dep_done(const JobRecPtr& rec) {
        if (rec->combine_gate.fetch_sub(1) != 1) return;
        // all children settled and the relay ran; surface any child error
        for (const auto& child : rec->job.child_handles) {
            if (child.failed()) {
                std::exception_ptr cause;
                try {
                    child.get();
                } catch (...) {
                    cause = std::current_exception();
                }
                fail_job(rec, wrap_error(rec->job.node_id, cause));
                return;
            }
        }
        enqueue(rec, Phase::Combine);
    }

    void phase_ok(const JobRecPtr& rec, Phase phase, PhaseOutput out) {
        if (phase == Phase::Relay) {
            rec->job.own_relay.resolve(std::move(*out.relay_ref));
            combine_dep_done(rec);
            return;
        }
        if (rec->finished.exchange(true)) return;
        untrack(rec);
        rec->job.handle.resolve(std::move(*out.result));
    }

    void phase_err(const JobRecPtr& rec, std::exception_ptr error) {
        fail_job(rec, wrap_error(rec->job.node_id, error));
    }

    void fail_job(const JobRecPtr& rec, std::exception_ptr error) {
        if (rec->finished.exchange(true)) return;
        untrack(rec);
        if (rec->job.kind == JobKind::Aggregate && !rec->job.own_relay.settled())
            rec->job.own_relay.fail(error);
        rec->job.handle.fail(error);
    }

    void untrack(const JobRecPtr& rec) {
        std::lock_guard lock(mutex_);
        live_.erase(rec->job.handle.id());
    }

    std::size_t slots_;
    std::shared_ptr<const RunContext> ctx_;
    mutable std::mutex mutex_;
    bool started_ = false;
    bool closed_ = false;
    std::map<std::uint64_t, JobRecPtr> live_;
};

// ---------------------------------------------------------------------------
// Thread pool backend.

class ThreadLauncher final : public LocalLauncherBase {
public:
    explicit ThreadLauncher(std::size_t slots) : LocalLauncherBase(slots) {}
    ~ThreadLauncher() override { shutdown(); }

    std::string mode() const override { return "threads"; }

private:
    void backend_start() override {
        threads_.reserve(slots_);
        for (std::size_t i = 0; i < slots_; ++i)
            threads_.emplace_back([this] { worker_loop(); });
    }

    void backend_dispatch(Task task) override {
        {
            std::lock_guard lock(queue_mutex_);
            queue_.push_back(std::move(task));
        }
        queue_cv_.notify_one();
    }

    void backend_shutdown() override {
        {
            std::lock_guard lock(queue_mutex_);
            stop_ = true;
        }
        queue_cv_.notify_all();
        for (auto& t : threads_)
            if (t.joinable()) t.join();
        threads_.clear();
        std::deque<Task> leftover;
        {
            std::lock_guard lock(queue_mutex_);
            leftover.swap(queue_);
        }
        for (auto& t : leftover)
            fail_job(t.rec, std::make_exception_ptr(RuntimeFault("queue closed")));
    }

    void worker_loop() {
        for (;;) {
            Task task;
            {
                std::unique_lock lock(queue_mutex_);
                queue_cv_.wait(lock, [&] { return stop_ || !queue_.empty(); });
                if (queue_.empty()) return;  // stop requested and drained
                task = std::move(queue_.front());
                queue_.pop_front();
            }
            try {
                PhaseOutput out = exec::run_phase(*ctx_, make_inputs(*task.rec, task.phase));
                phase_ok(task.rec, task.phase, std::move(out));
            } catch (...) {
                phase_err(task.rec, std::current_exception());
            }
        }
    }

    std::vector<std::thread> threads_;
    std::mutex queue_mutex_;
    std::condition_variable queue_cv_;
    std::deque<Task> queue_;
    bool stop_ = false;
};

// ---------------------------------------------------------------------------
// Fork-based process pool backend. Worker processes are forked at start()
// with the run context already built; the parent ships phase descriptors
// (small JSON frames) over per-worker socketpairs and merges results and
// ledger entries back. Parameter payloads travel through the shared-file
// proxy store, never through these pipes.

void write_frame(int fd, const std::string& payload) {
    std::uint32_t len = static_cast<std::uint32_t>(payload.size());
    unsigned char hdr[4] = {static_cast<unsigned char>(len & 0xff),
                            static_cast<unsigned char>((len >> 8) & 0xff),
                            static_cast<unsigned char>((len >> 16) & 0xff),
                            static_cast<unsigned char>((len >> 24) & 0xff)};
    struct iovec iov[2];
    iov[0].iov_base = hdr;
    iov[0].iov_len = 4;
    iov[1].iov_base = const_cast<char*>(payload.data());
    iov[1].iov_len = payload.size();
    std::size_t total = 4 + payload.size();
    std::size_t sent = 0;
    while (sent < total) {
        ssize_t n = ::writev(fd, iov, 2);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw RuntimeFault(std::string("pipe write failed: ") + std::strerror(errno));
        }
        sent += static_cast<std::size_t>(n);
        // adjust iov for partial writes
        std::size_t skip = sent;
        iov[0].iov_base = hdr;
        iov[0].iov_len = 4;
        iov[1].iov_base = const_cast<char*>(payload.data());
        iov[1].iov_len = payload.size();
        for (auto& v : iov) {
            std::size_t chunk = std::min(skip, v.iov_len);
            v.iov_base = static_cast<char*>(v.iov_base) + chunk;
            v.iov_len -= chunk;
            skip -= chunk;
        }
    }
}

bool read_exact(int fd, void* buf, std::size_t len) {
    char* p = static_cast<char*>(buf);
    std::size_t got = 0;
    while (got < len) {
        ssize_t n = ::read(fd, p + got, len - got);
        if (n == 0) return false;  // EOF
        if (n < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        got += static_cast<std::size_t>(n);
    }
    return true;
}

bool read_frame(int fd, std::string& out) {
    unsigned char hdr[4];
    if (!read_exact(fd, hdr, 4)) return false;
    std::uint32_t len = hdr[0] | (hdr[1] << 8) | (hdr[2] << 16) | (std::uint32_t(hdr[3]) << 24);
    out.resize(len);
    return len == 0 || read_exact(fd, out.data(), len);
}

class ProcessLauncher final : public LocalLauncherBase {
public:
    explicit ProcessLauncher(std::size_t slots) : LocalLauncherBase(slots) {}
    ~ProcessLauncher() override { shutdown(); }

    std::string mode() const override { return "processes"; }

private:
    struct WorkerProc {
        pid_t pid = -1;
        int fd = -1;
        bool busy = false;
        bool dead = false;
        std::optional<Task> current;
    };

    void backend_start() override {
        ::signal(SIGPIPE, SIG_IGN);
        event_fd_ = ::eventfd(0, EFD_NONBLOCK);
        if (event_fd_ < 0) throw RuntimeFault("eventfd failed");

        std::vector<std::array<int, 2>> pairs(slots_);
        for (std::size_t i = 0; i < slots_; ++i) {
            int fds[2];
            if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0)
                throw RuntimeFault("socketpair failed");
            pairs[i] = {fds[0], fds[1]};
        }
        for (std::size_t i = 0; i < slots_; ++i) {
            pid_t pid = ::fork();
            if (pid < 0) throw RuntimeFault("fork failed");
            if (pid == 0) {
                // worker process: keep only our channel
                ::close(event_fd_);
                for (std::size_t k = 0; k < slots_; ++k) {
                    if (k != i) {
                        ::close(pairs[k][0]);
                        ::close(pairs[k][1]);
                    }
                }
                ::close(pairs[i][0]);
                worker_process_loop(pairs[i][1]);
                ::_exit(0);
            }
            workers_.push_back({pid, pairs[i][0]});
            ::close(pairs[i][1]);
        }
        loop_thread_ = std::thread([this] { event_loop(); });
    }

    void backend_dispatch(Task task) override {
        {
            std::lock_guard lock(ready_mutex_);
            ready_.push_back(std::move(task));
        }
        notify_loop();
    }

    void backend_shutdown() override {
        stop_.store(true);
        notify_loop();
        if (loop_thread_.joinable()) loop_thread_.join();

        for (auto& w : workers_) {
            if (w.fd >= 0) {
                try {
                    write_frame(w.fd, "{\"quit\":true}");
                } catch (...) {
                }
                ::close(w.fd);
                w.fd = -1;
            }
        }
        for (auto& w : workers_) {
            if (w.pid <= 0) continue;
            int status = 0;
            for (int attempt = 0; attempt < 200; ++attempt) {
                pid_t r = ::waitpid(w.pid, &status, WNOHANG);
                if (r == w.pid || r < 0) {
                    w.pid = -1;
                    break;
                }
                ::usleep(5000);
            }
            if (w.pid > 0) {
                ::kill(w.pid, SIGKILL);
                ::waitpid(w.pid, &status, 0);
                w.pid = -1;
            }
        }
        std::deque<Task> leftover;
        {
            std::lock_guard lock(ready_mutex_);
            leftover.swap(ready_);
        }
        for (auto& t : leftover)
            fail_job(t.rec, std::make_exception_ptr(RuntimeFault("queue closed")));
        if (event_fd_ >= 0) {
            ::close(event_fd_);
            event_fd_ = -1;
        }
    }

    void notify_loop() {
        if (event_fd_ >= 0) {
            std::uint64_t one = 1;
            [[maybe_unused]] ssize_t n = ::write(event_fd_, &one, sizeof(one));
        }
    }

    void event_loop() {
        while (!stop_.load()) {
            std::vector<pollfd> fds;
            fds.push_back({event_fd_, POLLIN, 0});
            std::vector<std::size_t> index;
            for (std::size_t i = 0; i < workers_.size(); ++i) {
                if (!workers_[i].dead && workers_[i].fd >= 0) {
                    fds.push_back({workers_[i].fd, POLLIN, 0});
                    index.push_back(i);
                }
            }
            int rc = ::poll(fds.data(), fds.size(), 200);
            if (rc < 0 && errno != EINTR) break;
            if (fds[0].revents & POLLIN) {
                std::uint64_t drain;
                while (::read(event_fd_, &drain, sizeof(drain)) > 0) {
                }
            }
            for (std::size_t k = 1; k < fds.size(); ++k) {
                WorkerProc& w = workers_[index[k - 1]];
                if (fds[k].revents & POLLIN) {
                    std::string payload;
                    if (read_frame(w.fd, payload)) {
                        handle_reply(w, payload);
                    } else {
                        worker_died(w);
                    }
                } else if (fds[k].revents & (POLLHUP | POLLERR)) {
                    worker_died(w);
                }
            }
            assign_work();
        }
    }

    void handle_reply(WorkerProc& w, const std::string& payload) {
        Task task = std::move(*w.current);
        w.current.reset();
        w.busy = false;
        try {
            json reply = json::parse(payload);
            if (reply.contains("ledger")) {
                std::vector<TransferRecord> records;
                for (const auto& r : reply["ledger"])
                    records.push_back(transfer_record_from_json(r));
                ctx_->store->merge_ledger(records);
            }
            if (reply.at("ok").get<bool>()) {
                PhaseOutput out;
                if (reply.contains("relay")) out.relay_ref = proxy_ref_from_json(reply["relay"]);
                if (reply.contains("result")) out.result = exec::result_from_json(reply["result"]);
                phase_ok(task.rec, task.phase, std::move(out));
            } else {
                phase_err(task.rec, std::make_exception_ptr(
                                        RuntimeFault(reply.at("error").get<std::string>())));
            }
        } catch (...) {
            phase_err(task.rec, std::current_exception());
        }
    }

    void worker_died(WorkerProc& w) {
        w.dead = true;
        if (w.fd >= 0) {
            ::close(w.fd);
            w.fd = -1;
        }
        if (w.current) {
            Task task = std::move(*w.current);
            w.current.reset();
            w.busy = false;
            phase_err(task.rec,
                      std::make_exception_ptr(RuntimeFault("worker process died mid-job")));
        }
    }

    void assign_work() {
        for (;;) {
            Task task;
            WorkerProc* target = nullptr;
            for (auto& w : workers_)
                if (!w.dead && !w.busy) {
                    target = &w;
                    break;
                }
            if (!target) return;
            {
                std::lock_guard lock(ready_mutex_);
                if (ready_.empty()) return;
                task = std::move(ready_.front());
                ready_.pop_front();
            }
            std::string payload;
            try {
                payload = exec::phase_to_json(make_inputs(*task.rec, task.phase)).dump();
            } catch (...) {
                phase_err(task.rec, std::current_exception());
                continue;
            }
            try {
                write_frame(target->fd, payload);
                target->busy = true;
                target->current = std::move(task);
            } catch (...) {
                worker_died(*target);
                phase_err(task.rec, std::current_exception());
            }
        }
    }

    void worker_process_loop(int fd) {
        // Ledger entries generated by phases here ship back with each reply.
        auto buffer = std::make_shared<std::vector<TransferRecord>>();
        ctx_->store->set_ledger_sink(
            [buffer](TransferRecord rec) { buffer->push_back(std::move(rec)); });

        std::string payload;
        while (read_frame(fd, payload)) {
            json reply;
            try {
                json msg = json::parse(payload);
                if (msg.contains("quit")) break;
                PhaseInputs in = exec::phase_from_json(msg);
                buffer->clear();
                PhaseOutput out = exec::run_phase(*ctx_, in);
                reply["ok"] = true;
                json ledger = json::array();
                for (const auto& r : *buffer) ledger.push_back(to_json(r));
                reply["ledger"] = std::move(ledger);
                if (out.relay_ref) reply["relay"] = to_json(*out.relay_ref);
                if (out.result) reply["result"] = exec::result_to_json(*out.result);
            } catch (const std::exception& e) {
                reply = json{{"ok", false}, {"error", e.what()}};
            }
            try {
                write_frame(fd, reply.dump());
            } catch (...) {
                break;
            }
        }
    }

    std::vector<WorkerProc> workers_;
    std::thread loop_thread_;
    std::mutex ready_mutex_;
    std::deque<Task> ready_;
    std::atomic<bool> stop_{false};
    int event_fd_ = -1;
};

class RemoteLauncher final : public Launcher {
public:
    void start(std::shared_ptr<const RunContext>) override {
        throw RuntimeFault("remote launcher not configured: this build has no FaaS credentials");
    }
    CompletionHandle submit(Job) override {
        throw RuntimeFault("remote launcher not configured: this build has no FaaS credentials");
    }
    void shutdown() override {}
    std::size_t slots() const override { return 0; }
    std::string mode() const override { return "remote"; }
};

}  // namespace

std::unique_ptr<Launcher> make_local_launcher(LauncherMode mode, std::size_t slots) {
    if (mode == LauncherMode::Threads) return std::make_unique<ThreadLauncher>(slots);
    return std::make_unique<ProcessLauncher>(slots);
}

std::unique_ptr<Launcher> make_remote_launcher() { return std::make_unique<RemoteLauncher>(); }

}  // namespace hflight
