#include "hflight/topology.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <deque>
#include <fstream>
#include <sstream>

#include "hflight/errors.hpp"

namespace hflight {

std::string to_string(NodeKind k) {
    switch (k) {
        case NodeKind::Coordinator: return "coordinator";
        case NodeKind::Aggregator: return "aggregator";
        case NodeKind::Worker: return "worker";
    }
    return "worker";
}

NodeKind node_kind_from_string(const std::string& s) {
    if (s == "coordinator") return NodeKind::Coordinator;
    if (s == "aggregator") return NodeKind::Aggregator;
    if (s == "worker") return NodeKind::Worker;
    throw SchemaError("unknown node kind '" + s + "'");
}

Topology::Topology(std::map<std::string, NodeSpec> nodes, std::string root)
    : nodes_(std::move(nodes)), root_(std::move(root)) {
    index_parents();
}

void Topology::index_parents() {
    parent_.clear();
    for (const auto& [id, spec] : nodes_)
        for (const auto& child : spec.children)
            if (parent_.find(child) == parent_.end()) parent_[child] = id;
}

const NodeSpec& Topology::node(const std::string& id) const {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw Error("unknown node id '" + id + "'");
    return it->second;
}

const std::string& Topology::parent(const std::string& id) const {
    static const std::string kNone;
    auto it = parent_.find(id);
    return it == parent_.end() ? kNone : it->second;
}

bool Topology::is_edge(const std::string& from, const std::string& to) const {
    auto it = parent_.find(to);
    if (it != parent_.end() && it->second == from) return true;
    it = parent_.find(from);
    return it != parent_.end() && it->second == to;
}

std::vector<std::string> Topology::bfs_order() const {
    std::vector<std::string> order;
    if (nodes_.empty()) return order;
    std::deque<std::string> queue{root_};
    while (!queue.empty()) {
        std::string id = queue.front();
        queue.pop_front();
        auto it = nodes_.find(id);
        if (it == nodes_.end()) continue;
        order.push_back(id);
        for (const auto& c : it->second.children) queue.push_back(c);
    }
    return order;
}

std::vector<std::string> Topology::worker_ids() const {
    std::vector<std::string> ids;
    for (const auto& id : bfs_order())
        if (node(id).kind == NodeKind::Worker) ids.push_back(id);
    return ids;
}

std::uint64_t Topology::depth(const std::string& id) const {
    std::uint64_t d = 0;
    std::string cur = id;
    while (cur != root_) {
        auto it = parent_.find(cur);
        if (it == parent_.end()) break;
        cur = it->second;
        ++d;
    }
    return d;
}

std::uint64_t Topology::height() const {
    std::uint64_t h = 0;
    for (const auto& [id, spec] : nodes_)
        if (spec.children.empty()) h = std::max(h, depth(id));
    return h;
}

std::vector<Violation> validate(const Topology& t) {
    std::vector<Violation> out;
    const auto& nodes = t.nodes();
    if (nodes.empty()) {
        out.push_back({"", 1, "topology has no nodes"});
        return out;
    }

    // Rule 1: rooted directed tree. Check child references, parent
    // uniqueness, reachability from the root.
    std::map<std::string, int> parent_count;
    for (const auto& [id, spec] : nodes) {
        for (const auto& child : spec.children) {
            if (!t.contains(child)) {
                out.push_back({id, 1, "child '" + child + "' is not a node"});
                continue;
            }
            parent_count[child]++;
        }
    }
    for (const auto& [id, count] : parent_count)
        if (count > 1)
            out.push_back({id, 1, "node has " + std::to_string(count) + " parents"});
    if (!t.root().empty() && parent_count.count(t.root()))
        out.push_back({t.root(), 1, "root has a parent (cycle through the root)"});

    std::set<std::string> reached;
    if (t.contains(t.root())) {
        std::deque<std::string> queue{t.root()};
        reached.insert(t.root());
        while (!queue.empty()) {
            std::string id = queue.front();
            queue.pop_front();
            for (const auto& c : t.node(id).children)
                if (t.contains(c) && reached.insert(c).second) queue.push_back(c);
        }
    }
    for (const auto& [id, spec] : nodes)
        if (!reached.count(id))
            out.push_back({id, 1, "node is not reachable from the root"});

    // Rule 2: exactly one coordinator, and it is the root.
    std::vector<std::string> coordinators;
    for (const auto& [id, spec] : nodes)
        if (spec.kind == NodeKind::Coordinator) coordinators.push_back(id);
    if (coordinators.empty()) {
        out.push_back({"", 2, "topology has no coordinator"});
    } else {
        for (const auto& id : coordinators)
            if (id != t.root())
                out.push_back({id, 2, "coordinator is not the root"});
        if (coordinators.size() > 1)
            out.push_back({"", 2, std::to_string(coordinators.size()) + " coordinators present"});
    }
    if (t.contains(t.root()) && t.node(t.root()).kind != NodeKind::Coordinator)
        out.push_back({t.root(), 2, "root is a " + to_string(t.node(t.root()).kind) +
                                        ", not a coordinator"});

    // Rule 3: at least one worker; worker <=> leaf.
    bool any_worker = false;
    for (const auto& [id, spec] : nodes) {
        bool leaf = spec.children.empty();
        if (spec.kind == NodeKind::Worker) {
            any_worker = true;
            if (!leaf) out.push_back({id, 3, "worker has children"});
        } else if (leaf && spec.kind == NodeKind::Aggregator) {
            // surfaced under rule 4 below
        } else if (leaf && spec.kind == NodeKind::Coordinator) {
            // a childless coordinator is covered by the no-worker rule
        }
    }
    if (!any_worker) out.push_back({"", 3, "topology has no worker"});

    // Rule 4: aggregators are interior nodes.
    for (const auto& [id, spec] : nodes) {
        if (spec.kind != NodeKind::Aggregator) continue;
        if (id == t.root()) out.push_back({id, 4, "aggregator is the root"});
        if (spec.children.empty()) out.push_back({id, 4, "aggregator is a leaf"});
    }

    std::sort(out.begin(), out.end(), [](const Violation& a, const Violation& b) {
        if (a.node_id != b.node_id) return a.node_id < b.node_id;
        return a.rule < b.rule;
    });
    return out;
}

namespace {

const char* kKindKey = "kind";
const char* kChildrenKey = "children";
const char* kComputeKey = "globus_compute_endpoint";
const char* kStoreKey = "proxystore_endpoint";

std::optional<std::string> read_endpoint(const YAML::Node& node, const char* key) {
    if (!node[key] || node[key].IsNull()) return std::nullopt;
    return node[key].as<std::string>();
}

}  // namespace

Topology from_yaml(const std::string& text) {
    YAML::Node doc;
    try {
        doc = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ParseError(std::string("YAML parse failure: ") + e.what());
    }
    if (!doc.IsMap()) throw SchemaError("topology document must be a mapping of node ids");

    std::map<std::string, NodeSpec> nodes;
    std::vector<std::string> insertion_order;
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        std::string id;
        try {
            id = it->first.as<std::string>();
        } catch (const YAML::Exception&) {
            throw SchemaError("node id must be a scalar string");
        }
        if (id.empty()) throw SchemaError("node id must be nonempty");
        if (nodes.count(id)) throw SchemaError("duplicate node id '" + id + "'");

        const YAML::Node& body = it->second;
        if (!body.IsMap()) throw SchemaError("node '" + id + "' must be a mapping");
        for (auto kv = body.begin(); kv != body.end(); ++kv) {
            std::string key = kv->first.as<std::string>();
            if (key != kKindKey && key != kChildrenKey && key != kComputeKey && key != kStoreKey)
                throw SchemaError("node '" + id + "' has unknown key '" + key + "'");
        }
        if (!body[kKindKey]) throw SchemaError("node '" + id + "' is missing 'kind'");
        if (!body[kChildrenKey]) throw SchemaError("node '" + id + "' is missing 'children'");

        NodeSpec spec;
        spec.id = id;
        spec.kind = node_kind_from_string(body[kKindKey].as<std::string>());
        const YAML::Node& children = body[kChildrenKey];
        if (!children.IsSequence() && !children.IsNull())
            throw SchemaError("node '" + id + "': 'children' must be a sequence");
        if (children.IsSequence())
            for (const auto& c : children) spec.children.push_back(c.as<std::string>());
        spec.compute_endpoint = read_endpoint(body, kComputeKey);
        spec.store_endpoint = read_endpoint(body, kStoreKey);
        nodes.emplace(id, std::move(spec));
        insertion_order.push_back(id);
    }
    if (nodes.empty()) throw SchemaError("topology document is empty");

    // Root: the unique node no other node lists as a child. Ambiguity is a
    // legality problem, so fall back to the first parentless node (document
    // order) and let validate() report the rest.
    std::set<std::string> referenced;
    for (const auto& [id, spec] : nodes)
        for (const auto& c : spec.children) referenced.insert(c);
    std::string root;
    for (const auto& id : insertion_order)
        if (!referenced.count(id)) {
            root = id;
            break;
        }
    if (root.empty()) root = insertion_order.front();

    Topology topo(std::move(nodes), root);
    auto violations = validate(topo);
    if (!violations.empty()) {
        std::ostringstream msg;
        msg << "topology is illegal:";
        for (const auto& v : violations) msg << " [rule " << v.rule << "] " << v.message << ";";
        throw LegalityError(msg.str());
    }
    return topo;
}

Topology from_yaml_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open topology file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_yaml(buf.str());
}

std::string to_yaml(const Topology& t) {
    std::ostringstream out;
    for (const auto& id : t.bfs_order()) {
        const NodeSpec& spec = t.node(id);
        out << id << ":\n";
        out << "  kind: " << to_string(spec.kind) << "\n";
        out << "  children: [";
        for (std::size_t i = 0; i < spec.children.size(); ++i) {
            if (i) out << ", ";
            out << spec.children[i];
        }
        out << "]\n";
        out << "  globus_compute_endpoint: "
            << (spec.compute_endpoint ? *spec.compute_endpoint : "null") << "\n";
        out << "  proxystore_endpoint: " << (spec.store_endpoint ? *spec.store_endpoint : "null")
            << "\n";
    }
    return out.str();
}

std::pair<Topology, CommCostParams> balanced_tree(std::uint64_t branching, std::uint64_t height,
                                                  std::uint64_t model_bytes) {
    if (branching < 1) throw ConfigError("balanced_tree: branching must be >= 1");
    if (height < 1) throw ConfigError("balanced_tree: height must be >= 1");

    constexpr std::uint64_t kNodeCap = 1u << 24;
    std::uint64_t node_count = 1;
    std::uint64_t level_size = 1;
    for (std::uint64_t level = 1; level <= height; ++level) {
        if (level_size > kNodeCap / branching)
            throw ConfigError("balanced_tree: node count exceeds platform limits");
        level_size *= branching;
        node_count += level_size;
        if (node_count > kNodeCap)
            throw ConfigError("balanced_tree: node count exceeds platform limits");
    }

    std::map<std::string, NodeSpec> nodes;
    // Ids are assigned level by level so traversal order is deterministic.
    std::vector<std::string> current{"coordinator"};
    NodeSpec root;
    root.id = "coordinator";
    root.kind = NodeKind::Coordinator;
    nodes.emplace(root.id, root);

    for (std::uint64_t level = 1; level <= height; ++level) {
        bool leaf_level = (level == height);
        std::vector<std::string> next;
        next.reserve(current.size() * branching);
        std::uint64_t index = 0;
        for (const auto& parent_id : current) {
            for (std::uint64_t c = 0; c < branching; ++c, ++index) {
                NodeSpec spec;
                spec.kind = leaf_level ? NodeKind::Worker : NodeKind::Aggregator;
                spec.id = (leaf_level ? "worker_" : "agg_" + std::to_string(level) + "_") +
                          std::to_string(index);
                nodes[parent_id].children.push_back(spec.id);
                next.push_back(spec.id);
                nodes.emplace(spec.id, std::move(spec));
            }
        }
        current = std::move(next);
    }

    CommCostParams params;
    params.edges = node_count - 1;
    params.leaves = level_size;
    params.height = height;
    params.branching = branching;
    params.model_bytes = model_bytes;
    return {Topology(std::move(nodes), "coordinator"), params};
}

Topology selected_subtree(const Topology& t, const std::set<std::string>& workers) {
    if (workers.empty()) throw ConfigError("selected_subtree: worker selection is empty");
    for (const auto& w : workers) {
        if (!t.contains(w) || t.node(w).kind != NodeKind::Worker)
            throw ConfigError("selected_subtree: '" + w + "' is not a worker of the topology");
    }

    std::set<std::string> keep(workers.begin(), workers.end());
    keep.insert(t.root());
    for (const auto& w : workers) {
        std::string cur = t.parent(w);
        while (!cur.empty() && keep.insert(cur).second) cur = t.parent(cur);
    }

    std::map<std::string, NodeSpec> nodes;
    for (const auto& id : keep) {
        NodeSpec spec = t.node(id);
        std::vector<std::string> kept_children;
        for (const auto& c : spec.children)
            if (keep.count(c)) kept_children.push_back(c);
        spec.children = std::move(kept_children);
        nodes.emplace(id, std::move(spec));
    }
    return Topology(std::move(nodes), t.root());
}

}  // namespace hflight
