#include <atomic>
#include <condition_variable>
#include <mutex>

#include "hflight/errors.hpp"
#include "hflight/runtime.hpp"

namespace hflight {

namespace detail {

std::atomic<std::uint64_t> next_handle_id{1};

struct HandleState {
    std::uint64_t id = next_handle_id.fetch_add(1);
    mutable std::mutex mutex;
    std::condition_variable cv;
    std::optional<JobResult> result;
    std::exception_ptr error;
    bool settled = false;
    std::vector<std::function<void()>> callbacks;
};

struct GateState {
    mutable std::mutex mutex;
    std::optional<ProxyRef> ref;
    std::exception_ptr error;
    bool settled = false;
    std::vector<std::function<void()>> callbacks;
};

namespace {

template <typename State, typename Fill>
void settle(State& s, Fill&& fill) {
    std::vector<std::function<void()>> callbacks;
    {
        std::lock_guard lock(s.mutex);
        if (s.settled) throw RuntimeFault("future settled twice");
        fill();
        s.settled = true;
        callbacks.swap(s.callbacks);
    }
    if constexpr (requires { s.cv; }) s.cv.notify_all();
    for (auto& cb : callbacks) cb();
}

template <typename State>
void register_callback(State& s, std::function<void()> fn) {
    bool fire_now = false;
    {
        std::lock_guard lock(s.mutex);
        if (s.settled)
            fire_now = true;
        else
            s.callbacks.push_back(fn);
    }
    if (fire_now) fn();
}

}  // namespace

}  // namespace detail

CompletionHandle::CompletionHandle() : state_(std::make_shared<detail::HandleState>()) {}

std::uint64_t CompletionHandle::id() const { return state_->id; }

bool CompletionHandle::settled() const {
    std::lock_guard lock(state_->mutex);
    return state_->settled;
}

bool CompletionHandle::failed() const {
    std::lock_guard lock(state_->mutex);
    return state_->settled && state_->error != nullptr;
}

void CompletionHandle::wait() const {
    std::unique_lock lock(state_->mutex);
    state_->cv.wait(lock, [&] { return state_->settled; });
}

const JobResult& CompletionHandle::get() const {
    std::unique_lock lock(state_->mutex);
    state_->cv.wait(lock, [&] { return state_->settled; });
    if (state_->error) std::rethrow_exception(state_->error);
    return *state_->result;
}

void CompletionHandle::on_settled(std::function<void()> fn) const {
    detail::register_callback(*state_, std::move(fn));
}

void CompletionHandle::resolve(JobResult result) const {
    detail::settle(*state_, [&] { state_->result = std::move(result); });
}

void CompletionHandle::fail(std::exception_ptr error) const {
    detail::settle(*state_, [&] { state_->error = error; });
}

RelayGate::RelayGate() : state_(std::make_shared<detail::GateState>()) {}

bool RelayGate::settled() const {
    std::lock_guard lock(state_->mutex);
    return state_->settled;
}

bool RelayGate::failed() const {
    std::lock_guard lock(state_->mutex);
    return state_->settled && state_->error != nullptr;
}

const ProxyRef& RelayGate::ref() const {
    std::lock_guard lock(state_->mutex);
    if (!state_->settled || state_->error)
        throw RuntimeFault("relay gate has no ref");
    return *state_->ref;
}

std::exception_ptr RelayGate::error() const {
    std::lock_guard lock(state_->mutex);
    return state_->error;
}

void RelayGate::on_settled(std::function<void()> fn) const {
    detail::register_callback(*state_, std::move(fn));
}

void RelayGate::resolve(ProxyRef ref) const {
    detail::settle(*state_, [&] { state_->ref = std::move(ref); });
}

void RelayGate::fail(std::exception_ptr error) const {
    detail::settle(*state_, [&] { state_->error = error; });
}

void CompletionQueue::add(CompletionHandle h) {
    {
        std::lock_guard lock(mutex_);
        ++outstanding_;
    }
    h.on_settled([this, h] {
        {
            std::lock_guard lock(mutex_);
            ready_.push_back(h);
        }
        cv_.notify_all();
    });
}

CompletionHandle CompletionQueue::next() {
    std::unique_lock lock(mutex_);
    if (outstanding_ == 0 && ready_.empty())
        throw RuntimeFault("completion queue is empty");
    cv_.wait(lock, [&] { return !ready_.empty(); });
    CompletionHandle h = ready_.front();
    ready_.pop_front();
    --outstanding_;
    return h;
}

std::size_t CompletionQueue::pending() const {
    std::lock_guard lock(mutex_);
    return outstanding_;
}

}  // namespace hflight
