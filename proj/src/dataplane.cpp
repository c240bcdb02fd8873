#include "hflight/dataplane.hpp"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "hflight/errors.hpp"

namespace hflight {

void TransferLedger::append(TransferRecord rec) {
    std::lock_guard lock(mutex_);
    records_.push_back(std::move(rec));
}

std::vector<TransferRecord> TransferLedger::snapshot() const {
    std::lock_guard lock(mutex_);
    return records_;
}

std::size_t TransferLedger::size() const {
    std::lock_guard lock(mutex_);
    return records_.size();
}

std::uint64_t TransferLedger::total_bytes(
    std::optional<std::uint64_t> round,
    std::optional<std::pair<std::string, std::string>> edge) const {
    std::lock_guard lock(mutex_);
    std::uint64_t total = 0;
    for (const auto& r : records_) {
        if (round && r.round != *round) continue;
        if (edge && (r.from != edge->first || r.to != edge->second)) continue;
        total += r.total_bytes();
    }
    return total;
}

std::uint64_t TransferLedger::payload_total(std::optional<std::uint64_t> round) const {
    std::lock_guard lock(mutex_);
    std::uint64_t total = 0;
    for (const auto& r : records_)
        if (!round || r.round == *round) total += r.payload_bytes;
    return total;
}

std::string TransferLedger::to_csv() const {
    auto records = snapshot();
    std::stable_sort(records.begin(), records.end(),
                     [](const TransferRecord& a, const TransferRecord& b) {
                         if (a.round != b.round) return a.round < b.round;
                         if (a.from != b.from) return a.from < b.from;
                         return a.to < b.to;
                     });
    std::ostringstream out;
    out << "from,to,bytes,round,timestamp\n";
    for (const auto& r : records)
        out << r.from << "," << r.to << "," << r.total_bytes() << "," << r.round << ","
            << r.timestamp_ns << "\n";
    return out.str();
}

namespace {

class MemoryConnector : public Connector {
public:
    void put(const std::string& key, const std::vector<std::uint8_t>& bytes) override {
        std::lock_guard lock(mutex_);
        store_[key] = bytes;
    }
    std::vector<std::uint8_t> get(const std::string& key) const override {
        std::lock_guard lock(mutex_);
        auto it = store_.find(key);
        if (it == store_.end()) throw DataPlaneError("unknown proxy key '" + key + "'");
        return it->second;
    }
    void erase(const std::string& key) override {
        std::lock_guard lock(mutex_);
        store_.erase(key);
    }
    std::string tag() const override { return "in-memory"; }

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::vector<std::uint8_t>> store_;
};

class SharedFileConnector : public Connector {
public:
    explicit SharedFileConnector(std::string dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }
    void put(const std::string& key, const std::vector<std::uint8_t>& bytes) override {
        auto path = dir_ / key;
        auto tmp = dir_ / (key + ".tmp." + std::to_string(::getpid()));
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw DataPlaneError("cannot write proxy object '" + tmp.string() + "'");
            out.write(reinterpret_cast<const char*>(bytes.data()),
                      static_cast<std::streamsize>(bytes.size()));
        }
        std::filesystem::rename(tmp, path);  // atomic publish
    }
    std::vector<std::uint8_t> get(const std::string& key) const override {
        auto path = dir_ / key;
        std::ifstream in(path, std::ios::binary);
        if (!in) throw DataPlaneError("unknown proxy key '" + key + "'");
        std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
        return bytes;
    }
    void erase(const std::string& key) override {
        std::error_code ec;
        std::filesystem::remove(dir_ / key, ec);
    }
    std::string tag() const override { return "shared-file"; }

private:
    std::filesystem::path dir_;
};

std::int64_t now_ns() {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

}  // namespace

std::unique_ptr<Connector> make_memory_connector() { return std::make_unique<MemoryConnector>(); }

std::unique_ptr<Connector> make_shared_file_connector(const std::string& dir) {
    return std::make_unique<SharedFileConnector>(dir);
}

ProxyStore::ProxyStore(std::unique_ptr<Connector> connector, Topology topology)
    : connector_(std::move(connector)), topology_(std::move(topology)) {}

ProxyRef ProxyStore::put(const ParamVector& params, const std::string& producer) {
    std::string key;
    {
        std::lock_guard lock(mutex_);
        if (!open_) throw DataPlaneError("proxy store is closed");
        key = "obj-" + std::to_string(::getpid()) + "-" + std::to_string(next_key_++);
        keys_.push_back(key);
    }
    auto bytes = serialize(params);
    connector_->put(key, bytes);
    ProxyRef ref;
    ref.key = key;
    ref.payload_bytes = payload_bytes(params);
    ref.header_bytes = header_bytes(params);
    ref.producer = producer;
    return ref;
}

ParamVector ProxyStore::resolve(const ProxyRef& ref, const std::string& consumer,
                                std::uint64_t round) {
    {
        std::lock_guard lock(mutex_);
        if (!open_) throw DataPlaneError("proxy store is closed");
    }
    if (consumer != ref.producer && !topology_.is_edge(ref.producer, consumer))
        throw DataPlaneError("illegal transfer " + ref.producer + " -> " + consumer +
                             ": nodes are not adjacent in the topology");
    auto bytes = connector_->get(ref.key);
    ParamVector params = deserialize(bytes);

    if (consumer != ref.producer) {  // self-edges cost nothing
        TransferRecord rec;
        rec.from = ref.producer;
        rec.to = consumer;
        rec.payload_bytes = ref.payload_bytes;
        rec.header_bytes = ref.header_bytes;
        rec.round = round;
        rec.timestamp_ns = now_ns();
        if (sink_)
            sink_(std::move(rec));
        else
            ledger_.append(std::move(rec));
    }
    return params;
}

void ProxyStore::purge_except(const std::vector<std::string>& keep) {
    std::lock_guard lock(mutex_);
    std::vector<std::string> kept;
    for (const auto& key : keys_) {
        if (std::find(keep.begin(), keep.end(), key) != keep.end())
            kept.push_back(key);
        else
            connector_->erase(key);
    }
    keys_ = std::move(kept);
}

void ProxyStore::close() {
    std::lock_guard lock(mutex_);
    open_ = false;
}

void ProxyStore::merge_ledger(const std::vector<TransferRecord>& records) {
    for (const auto& r : records) ledger_.append(r);
}

void ProxyStore::set_ledger_sink(std::function<void(TransferRecord)> sink) {
    sink_ = std::move(sink);
}

}  // namespace hflight
