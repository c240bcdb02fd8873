#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "hflight/params.hpp"
#include "hflight/topology.hpp"

namespace hflight {

// Small reference standing in for a stored parameter payload.
struct ProxyRef {
    std::string key;
    std::uint64_t payload_bytes = 0;
    std::uint64_t header_bytes = 0;
    std::string producer;

    std::uint64_t byte_size() const { return payload_bytes + header_bytes; }
};

struct TransferRecord {
    std::string from;
    std::string to;
    std::uint64_t payload_bytes = 0;
    std::uint64_t header_bytes = 0;
    std::uint64_t round = 0;
    std::int64_t timestamp_ns = 0;  // wall clock at resolve time

    std::uint64_t total_bytes() const { return payload_bytes + header_bytes; }
};

// Append-only transfer log. Iteration takes a snapshot; totals are exact
// integer sums.
class TransferLedger {
public:
    void append(TransferRecord rec);
    std::vector<TransferRecord> snapshot() const;
    std::size_t size() const;

    // Sum of payload+header bytes over matching entries.
    std::uint64_t total_bytes(std::optional<std::uint64_t> round = std::nullopt,
                              std::optional<std::pair<std::string, std::string>> edge =
                                  std::nullopt) const;
    // Payload-only sum (what the closed-form cost model counts).
    std::uint64_t payload_total(std::optional<std::uint64_t> round = std::nullopt) const;

    // CSV export: from,to,bytes,round,timestamp. Entries are ordered by
    // (round, from, to) so exports are stable.
    std::string to_csv() const;

private:
    mutable std::mutex mutex_;
    std::vector<TransferRecord> records_;
};

// Raw byte storage behind the proxy store.
class Connector {
public:
    virtual ~Connector() = default;
    virtual void put(const std::string& key, const std::vector<std::uint8_t>& bytes) = 0;
    virtual std::vector<std::uint8_t> get(const std::string& key) const = 0;
    virtual void erase(const std::string& key) = 0;
    virtual std::string tag() const = 0;
};

std::unique_ptr<Connector> make_memory_connector();
// One file per key under `dir` (created if needed). Lets forked worker
// processes share a store with the parent.
std::unique_ptr<Connector> make_shared_file_connector(const std::string& dir);

// Pass-by-reference parameter store with transfer accounting. A resolve
// by anyone other than the producer must cross a topology edge and is
// charged to the ledger; producer-side resolves are free.
class ProxyStore {
public:
    ProxyStore(std::unique_ptr<Connector> connector, Topology topology);

    ProxyRef put(const ParamVector& params, const std::string& producer);
    ParamVector resolve(const ProxyRef& ref, const std::string& consumer, std::uint64_t round);

    // Drop all stored objects except the listed keys.
    void purge_except(const std::vector<std::string>& keep);
    // Drop one stored object.
    void purge_key(const std::string& key);
    void close();

    TransferLedger& ledger() { return ledger_; }
    const TransferLedger& ledger() const { return ledger_; }
    const Topology& topology() const { return topology_; }

    // Entries recorded by jobs running out-of-process arrive via the
    // result channel and are merged here.
    void merge_ledger(const std::vector<TransferRecord>& records);

    // Redirect new ledger entries into `sink` instead of the local ledger
    // (set inside forked workers, where entries ship back with results).
    void set_ledger_sink(std::function<void(TransferRecord)> sink);

private:
    std::unique_ptr<Connector> connector_;
    Topology topology_;
    TransferLedger ledger_;
    std::function<void(TransferRecord)> sink_;
    mutable std::mutex mutex_;
    std::vector<std::string> keys_;
    std::uint64_t next_key_ = 0;
    bool open_ = true;
};

}  // namespace hflight
