#include "hflight/serde.hpp"

#include "hflight/errors.hpp"

namespace hflight {

using nlohmann::json;

json to_json(const ProxyRef& ref) {
    return json{{"key", ref.key},
                {"payload", ref.payload_bytes},
                {"header", ref.header_bytes},
                {"producer", ref.producer}};
}

ProxyRef proxy_ref_from_json(const json& j) {
    ProxyRef ref;
    ref.key = j.at("key").get<std::string>();
    ref.payload_bytes = j.at("payload").get<std::uint64_t>();
    ref.header_bytes = j.at("header").get<std::uint64_t>();
    ref.producer = j.at("producer").get<std::string>();
    return ref;
}

json to_json(const LossReport& r) {
    return json{{"loss", r.loss}, {"accuracy", r.accuracy}, {"num_samples", r.num_samples}};
}

LossReport loss_report_from_json(const json& j) {
    LossReport r;
    r.loss = j.at("loss").get<double>();
    r.accuracy = j.at("accuracy").get<double>();
    r.num_samples = j.at("num_samples").get<std::size_t>();
    return r;
}

json to_json(const NodeState& s) {
    json out = json::object();
    for (const auto& [key, value] : s.values()) {
        if (const auto* i = std::get_if<std::int64_t>(&value))
            out[key] = json{{"t", "i"}, {"v", *i}};
        else if (const auto* d = std::get_if<double>(&value))
            out[key] = json{{"t", "d"}, {"v", *d}};
        else
            out[key] = json{{"t", "s"}, {"v", std::get<std::string>(value)}};
    }
    return out;
}

NodeState node_state_from_json(const json& j) {
    NodeState s;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string type = it.value().at("t").get<std::string>();
        if (type == "i")
            s.set_int(it.key(), it.value().at("v").get<std::int64_t>());
        else if (type == "d")
            s.set_double(it.key(), it.value().at("v").get<double>());
        else
            s.set_string(it.key(), it.value().at("v").get<std::string>());
    }
    return s;
}

json to_json(const TransferRecord& r) {
    return json{{"from", r.from},       {"to", r.to},
                {"payload", r.payload_bytes}, {"header", r.header_bytes},
                {"round", r.round},     {"ts", r.timestamp_ns}};
}

TransferRecord transfer_record_from_json(const json& j) {
    TransferRecord r;
    r.from = j.at("from").get<std::string>();
    r.to = j.at("to").get<std::string>();
    r.payload_bytes = j.at("payload").get<std::uint64_t>();
    r.header_bytes = j.at("header").get<std::uint64_t>();
    r.round = j.at("round").get<std::uint64_t>();
    r.timestamp_ns = j.at("ts").get<std::int64_t>();
    return r;
}

json to_json(const TrainConfig& c) {
    return json{{"lr", c.learning_rate},
                {"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    c.learning_rate = j.at("lr").get<double>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

}  // namespace hflight
