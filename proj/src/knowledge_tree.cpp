#include "kppo/knowledge_tree.hpp"

#include "kppo/error.hpp"

#include <numeric>

namespace kppo {

Rational Rational::make(std::int64_t num, std::int64_t den) {
    if (den <= 0) throw DomainError("rational with non-positive denominator");
    if (num == 0) return {0, 1};
    auto g = std::gcd(num, den);
    return {num / g, den / g};
}

bool Rational::exceeds(double limit) const noexcept {
    return static_cast<long double>(num) > static_cast<long double>(limit) * static_cast<long double>(den);
}

KnowledgeTree::KnowledgeTree() {
    Node root;
    root.id = NodeId{0};
    root.kind = NodeKind::topic;
    root.text = "(root)";
    root.depth = 0;
    root.parent = NodeId{0};
    nodes_.push_back(std::move(root));
}

const Node& KnowledgeTree::node(NodeId id) const {
    if (index_of(id) >= nodes_.size()) throw DomainError("unknown node id " + std::to_string(index_of(id)));
    return nodes_[index_of(id)];
}

NodeId KnowledgeTree::add_topic(NodeId parent, std::string title) {
    const auto& p = node(parent);
    if (p.kind != NodeKind::topic) throw DomainError("cannot attach a topic under a note");
    Node n;
    n.id = NodeId{static_cast<std::uint32_t>(nodes_.size())};
    n.kind = NodeKind::topic;
    n.text = std::move(title);
    n.depth = p.depth + 1;
    n.parent = parent;
    nodes_[index_of(parent)].children.push_back(n.id);
    nodes_.push_back(std::move(n));
    return nodes_.back().id;
}

NodeId KnowledgeTree::add_note(NodeId parent, std::string text) {
    const auto& p = node(parent);
    if (p.kind != NodeKind::topic) throw DomainError("cannot attach a note under a note");
    Node n;
    n.id = NodeId{static_cast<std::uint32_t>(nodes_.size())};
    n.kind = NodeKind::note;
    n.text = std::move(text);
    n.depth = p.depth + 1;
    n.parent = parent;
    auto& siblings = nodes_[index_of(parent)].children;
    auto pos = siblings.begin();
    while (pos != siblings.end() && nodes_[index_of(*pos)].kind == NodeKind::note) ++pos;
    siblings.insert(pos, n.id);
    nodes_.push_back(std::move(n));
    return nodes_.back().id;
}

std::vector<NodeId> KnowledgeTree::preorder() const {
    std::vector<NodeId> order;
    order.reserve(nodes_.size());
    std::vector<NodeId> stack{root()};
    while (!stack.empty()) {
        auto id = stack.back();
        stack.pop_back();
        order.push_back(id);
        const auto& ch = nodes_[index_of(id)].children;
        for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
    }
    return order;
}

std::size_t KnowledgeTree::note_count() const {
    std::size_t n = 0;
    for (const auto& node : nodes_) n += node.kind == NodeKind::note;
    return n;
}

std::size_t KnowledgeTree::topic_count() const { return nodes_.size() - note_count(); }

std::string KnowledgeTree::path(NodeId id) const {
    if (id == root()) return "(root)";
    std::vector<const std::string*> parts;
    for (auto cur = id; cur != root(); cur = node(cur).parent) parts.push_back(&node(cur).text);
    std::string out;
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
        if (!out.empty()) out += " > ";
        out += **it;
    }
    return out;
}

KnowledgeTree KnowledgeTree::without(const std::function<bool(const Node&)>& drop) const {
    KnowledgeTree out;
    // (source id, destination parent id)
    std::vector<std::pair<NodeId, NodeId>> stack;
    const auto& root_children = nodes_[0].children;
    for (auto it = root_children.rbegin(); it != root_children.rend(); ++it) stack.emplace_back(*it, out.root());
    while (!stack.empty()) {
        auto [src, dst_parent] = stack.back();
        stack.pop_back();
        const auto& n = nodes_[index_of(src)];
        if (drop(n)) continue;
        if (n.kind == NodeKind::note) {
            out.add_note(dst_parent, n.text);
            continue;
        }
        auto dst = out.add_topic(dst_parent, n.text);
        for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) stack.emplace_back(*it, dst);
    }
    return out;
}

namespace {

bool subtree_equal(const KnowledgeTree& a, NodeId x, const KnowledgeTree& b, NodeId y) {
    const auto& nx = a.node(x);
    const auto& ny = b.node(y);
    if (nx.kind != ny.kind || nx.depth != ny.depth || nx.children.size() != ny.children.size()) return false;
    if (x != a.root() && nx.text != ny.text) return false;
    for (std::size_t i = 0; i < nx.children.size(); ++i) {
        if (!subtree_equal(a, nx.children[i], b, ny.children[i])) return false;
    }
    return true;
}

struct SubtreeTotals {
    std::int64_t topics = 0;
    std::int64_t out_degree_sum = 0;
};

std::vector<SubtreeTotals> accumulate_topics(const KnowledgeTree& tree) {
    const auto& nodes = tree.nodes();
    std::vector<SubtreeTotals> totals(nodes.size());
    // Parents precede children in storage order, so a reverse sweep is a post-order fold.
    for (std::size_t i = nodes.size(); i-- > 0;) {
        const auto& n = nodes[i];
        if (n.kind == NodeKind::topic) {
            totals[i].topics += 1;
            totals[i].out_degree_sum += static_cast<std::int64_t>(n.children.size());
        }
        if (i != 0) {
            auto p = index_of(n.parent);
            totals[p].topics += totals[i].topics;
            totals[p].out_degree_sum += totals[i].out_degree_sum;
        }
    }
    return totals;
}

Rational beta_from(std::size_t out_degree, const SubtreeTotals& t) {
    if (t.out_degree_sum == 0) return {0, 1};
    return Rational::make(static_cast<std::int64_t>(out_degree) * t.topics, t.out_degree_sum);
}

void require_topic(const KnowledgeTree& tree, NodeId v) {
    if (!tree.is_topic(v)) throw DomainError("node " + std::to_string(index_of(v)) + " is a note, not a topic");
}

} // namespace

bool structurally_equal(const KnowledgeTree& a, const KnowledgeTree& b) {
    return subtree_equal(a, a.root(), b, b.root());
}

bool structurally_equal(const PromptDocument& a, const PromptDocument& b) {
    return a.preamble == b.preamble && a.epilogue == b.epilogue && structurally_equal(a.tree, b.tree);
}

Rational branching_factor(const KnowledgeTree& tree, NodeId v) {
    require_topic(tree, v);
    std::int64_t topics = 0;
    std::int64_t sum = 0;
    std::vector<NodeId> stack{v};
    while (!stack.empty()) {
        auto id = stack.back();
        stack.pop_back();
        const auto& n = tree.node(id);
        if (n.kind != NodeKind::topic) continue;
        ++topics;
        sum += static_cast<std::int64_t>(n.children.size());
        for (auto c : n.children) stack.push_back(c);
    }
    return Rational::make(sum, topics);
}

Rational balance_ratio(const KnowledgeTree& tree, NodeId v) {
    auto bf = branching_factor(tree, v);
    if (bf.num == 0) return {0, 1};
    return Rational::make(static_cast<std::int64_t>(tree.out_degree(v)) * bf.den, bf.num);
}

ViolationReport detect_violations(const KnowledgeTree& tree, std::size_t max_children, double max_balance) {
    if (max_children < 1) throw ConfigError("max children must be >= 1");
    if (!(max_balance > 0.0)) throw ConfigError("max balance factor must be > 0");
    ViolationReport report;
    auto totals = accumulate_topics(tree);
    for (auto id : tree.preorder()) {
        const auto& n = tree.node(id);
        if (n.kind != NodeKind::topic) continue;
        const auto& t = totals[index_of(id)];
        if (n.children.size() > max_children) report.local.push_back({id, n.children.size(), max_children});
        auto beta = beta_from(n.children.size(), t);
        if (beta.exceeds(max_balance)) {
            report.global.push_back({id, beta, Rational::make(t.out_degree_sum, t.topics), max_balance});
        }
    }
    return report;
}

} // namespace kppo
