#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace hflight {

enum class NodeKind { Coordinator, Aggregator, Worker };

std::string to_string(NodeKind k);
NodeKind node_kind_from_string(const std::string& s);

struct NodeSpec {
    std::string id;
    NodeKind kind = NodeKind::Worker;
    std::vector<std::string> children;  // order preserved, used for traversal
    std::optional<std::string> compute_endpoint;
    std::optional<std::string> store_endpoint;
};

// Legality rule identifiers, in the order the rules are stated:
//   1 rooted directed tree (connected, acyclic, single parent per node)
//   2 exactly one coordinator and it is the root
//   3 at least one worker; every worker is a leaf and every leaf is a worker
//   4 an aggregator is neither root nor leaf
struct Violation {
    std::string node_id;  // empty when no single node is at fault
    int rule = 0;
    std::string message;

    bool operator==(const Violation&) const = default;
};

// Closed-form quantities of a balanced tree, the inputs of the
// communication-cost model.
struct CommCostParams {
    std::uint64_t edges = 0;        // E
    std::uint64_t leaves = 0;       // l
    std::uint64_t height = 0;       // h
    std::uint64_t branching = 0;    // b (0 when the tree is irregular)
    std::uint64_t model_bytes = 0;  // M
};

class Topology {
public:
    Topology() = default;
    Topology(std::map<std::string, NodeSpec> nodes, std::string root);

    const std::map<std::string, NodeSpec>& nodes() const { return nodes_; }
    const std::string& root() const { return root_; }
    const NodeSpec& node(const std::string& id) const;
    bool contains(const std::string& id) const { return nodes_.count(id) != 0; }
    std::size_t size() const { return nodes_.size(); }

    // Parent of a node, empty for the root.
    const std::string& parent(const std::string& id) const;
    bool is_edge(const std::string& from, const std::string& to) const;

    // Worker ids in breadth-first order from the root.
    std::vector<std::string> worker_ids() const;
    // All ids in breadth-first order from the root.
    std::vector<std::string> bfs_order() const;
    std::uint64_t edge_count() const { return nodes_.empty() ? 0 : nodes_.size() - 1; }
    // Maximum root-to-leaf depth.
    std::uint64_t height() const;
    std::uint64_t depth(const std::string& id) const;

private:
    void index_parents();

    std::map<std::string, NodeSpec> nodes_;
    std::string root_;
    std::map<std::string, std::string> parent_;
};

// Reports every broken legality rule, sorted by (node id, rule number).
// An empty result means the topology is legal.
std::vector<Violation> validate(const Topology& t);

// Parses the YAML topology schema:
//   <id>:
//     kind: coordinator|aggregator|worker
//     children: [ <id>, ... ]
//     globus_compute_endpoint: <string or null>
//     proxystore_endpoint: <string or null>
// Unknown keys are rejected. The result always passes validate().
Topology from_yaml(const std::string& text);
Topology from_yaml_file(const std::string& path);
std::string to_yaml(const Topology& t);

// Balanced tree: coordinator root, aggregator interior, b^h worker leaves.
// b == 1 degenerates to a chain.
std::pair<Topology, CommCostParams> balanced_tree(std::uint64_t branching, std::uint64_t height,
                                                  std::uint64_t model_bytes);

// Minimal legal subtree spanning the root and the given workers, keeping
// exactly the aggregators on the root-to-worker paths.
Topology selected_subtree(const Topology& t, const std::set<std::string>& workers);

}  // namespace hflight
