#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace kppo {

enum class NodeId : std::uint32_t {};

constexpr std::size_t index_of(NodeId id) noexcept { return static_cast<std::size_t>(id); }

enum class NodeKind { topic, note };

struct Node {
    NodeId id{};
    NodeKind kind = NodeKind::topic;
    std::string text;  // topic title or note text
    int depth = 0;
    NodeId parent{};   // equals id for the root
    std::vector<NodeId> children;
};

// Exact non-negative ratio; denominator always >= 1.
struct Rational {
    std::int64_t num = 0;
    std::int64_t den = 1;

    static Rational make(std::int64_t num, std::int64_t den);
    double to_double() const noexcept { return static_cast<double>(num) / static_cast<double>(den); }
    bool exceeds(double limit) const noexcept;
    friend bool operator==(const Rational&, const Rational&) = default;
};

// Rooted topic/note hierarchy. Node 0 is a synthetic root topic. Nodes are
// stored in insertion order; a parent is always inserted before its children.
// Among a topic's children, notes precede subtopics.
class KnowledgeTree {
public:
    KnowledgeTree();

    NodeId root() const noexcept { return NodeId{0}; }
    std::size_t size() const noexcept { return nodes_.size(); }
    const Node& node(NodeId id) const;
    const std::vector<Node>& nodes() const noexcept { return nodes_; }

    NodeId add_topic(NodeId parent, std::string title);
    NodeId add_note(NodeId parent, std::string text);

    std::size_t out_degree(NodeId id) const { return node(id).children.size(); }
    bool is_topic(NodeId id) const { return node(id).kind == NodeKind::topic; }
    bool empty() const noexcept { return nodes_.size() == 1; }

    std::vector<NodeId> preorder() const;
    std::size_t note_count() const;
    std::size_t topic_count() const;

    // Titles from the first real topic down to `id`, joined with " > ".
    // The root itself is reported as "(root)".
    std::string path(NodeId id) const;

    // Copy of the tree without the subtrees for which `drop` returns true.
    // The root is never dropped. Ids are reassigned in pre-order.
    KnowledgeTree without(const std::function<bool(const Node&)>& drop) const;

private:
    std::vector<Node> nodes_;
};

bool structurally_equal(const KnowledgeTree& a, const KnowledgeTree& b);

struct PromptDocument {
    std::vector<std::string> preamble;
    KnowledgeTree tree;
    std::vector<std::string> epilogue;
};

bool structurally_equal(const PromptDocument& a, const PromptDocument& b);

// Markdown-outline grammar: `^#{1,6} ` lines are topics, `^- ` lines are notes,
// other text before the first element is preamble and after the last is
// epilogue. Never throws.
PromptDocument parse_prompt(std::string_view text);

// Canonical rendering. Throws StructureError when a topic is deeper than 6.
std::string render_prompt(const PromptDocument& doc);

inline constexpr int max_heading_level = 6;

Rational branching_factor(const KnowledgeTree& tree, NodeId v);
Rational balance_ratio(const KnowledgeTree& tree, NodeId v);

struct LocalViolation {
    NodeId node{};
    std::size_t out_degree = 0;
    std::size_t limit = 0;
};

struct GlobalViolation {
    NodeId node{};
    Rational beta;
    Rational branching;
    double limit = 0.0;
};

struct ViolationReport {
    std::vector<LocalViolation> local;
    std::vector<GlobalViolation> global;

    bool empty() const noexcept { return local.empty() && global.empty(); }
};

// Pre-order scan of topic nodes: local iff outdeg > max_children, global iff
// beta > max_balance. Linear in tree size.
ViolationReport detect_violations(const KnowledgeTree& tree, std::size_t max_children, double max_balance);

} // namespace kppo
