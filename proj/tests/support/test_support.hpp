#pragma once

#include "kppo/knowledge_tree.hpp"

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace kppo::testing {

class TempDir {
public:
    TempDir() {
        std::string tpl = (std::filesystem::temp_directory_path() / "kppo-test-XXXXXX").string();
        if (!mkdtemp(tpl.data())) throw std::runtime_error("mkdtemp failed");
        path_ = tpl;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string random_words(std::mt19937_64& rng, int min_words, int max_words) {
    static const std::vector<std::string> words{"alpha", "beta",  "gamma", "delta",  "renal", "ulna",
                                                "tax",   "bond",  "lease", "clause", "dose",  "valve",
                                                "index", "rate",  "yield", "ratio",  "42",    "x-ray"};
    std::uniform_int_distribution<int> count(min_words, max_words);
    std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
    std::string out;
    for (int i = count(rng); i > 0; --i) {
        if (!out.empty()) out += ' ';
        out += words[pick(rng)];
    }
    return out;
}

// Random tree with up to `max_nodes` nodes (root included); topics never
// deeper than `max_depth`.
inline KnowledgeTree random_tree(std::mt19937_64& rng, std::size_t max_nodes, int max_depth = 6) {
    KnowledgeTree t;
    std::uniform_int_distribution<std::size_t> size_dist(1, max_nodes);
    const auto n = size_dist(rng);
    std::vector<NodeId> topics{t.root()};
    std::bernoulli_distribution is_note(0.55);
    for (std::size_t i = 1; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> parent_dist(0, topics.size() - 1);
        auto parent = topics[parent_dist(rng)];
        const int depth = t.node(parent).depth;
        if (is_note(rng) || depth >= max_depth) {
            t.add_note(parent, random_words(rng, 1, 6));
        } else {
            topics.push_back(t.add_topic(parent, random_words(rng, 1, 3)));
        }
    }
    return t;
}

inline PromptDocument random_document(std::mt19937_64& rng, std::size_t max_nodes = 40) {
    PromptDocument d;
    std::uniform_int_distribution<int> blocks(0, 3);
    std::bernoulli_distribution two_lines(0.3);
    auto block = [&] {
        auto b = random_words(rng, 1, 8);
        if (two_lines(rng)) b += "\n" + random_words(rng, 1, 5);
        return b;
    };
    for (int i = blocks(rng); i > 0; --i) d.preamble.push_back(block());
    d.tree = random_tree(rng, max_nodes);
    if (!d.tree.empty()) {
        for (int i = blocks(rng); i > 0; --i) d.epilogue.push_back(block());
    }
    return d;
}

// Independent structural comparison: same kinds, texts and child order from
// the root down (ids and the root's own text are ignored).
inline bool same_subtree(const KnowledgeTree& a, NodeId x, const KnowledgeTree& b, NodeId y) {
    const auto& nx = a.nodes()[index_of(x)];
    const auto& ny = b.nodes()[index_of(y)];
    if (nx.kind != ny.kind) return false;
    if (x != a.root() && nx.text != ny.text) return false;
    if (nx.children.size() != ny.children.size()) return false;
    for (std::size_t i = 0; i < nx.children.size(); ++i) {
        if (!same_subtree(a, nx.children[i], b, ny.children[i])) return false;
    }
    return true;
}

inline bool same_document(const PromptDocument& a, const PromptDocument& b) {
    return a.preamble == b.preamble && a.epilogue == b.epilogue && same_subtree(a.tree, a.tree.root(), b.tree, b.tree.root());
}

// From-scratch structural metrics: subtree membership by walking parents.
struct BruteMetrics {
    std::size_t outdeg = 0;
    std::int64_t sum_outdeg = 0;
    std::int64_t topics = 0;
};

inline BruteMetrics brute_metrics(const KnowledgeTree& t, NodeId v) {
    BruteMetrics m;
    const auto& nodes = t.nodes();
    for (const auto& u : nodes) {
        if (u.kind != NodeKind::topic) continue;
        // Is u inside the subtree of v?
        NodeId cur = u.id;
        bool inside = false;
        for (;;) {
            if (cur == v) {
                inside = true;
                break;
            }
            if (cur == t.root()) break;
            cur = nodes[index_of(cur)].parent;
        }
        if (!inside) continue;
        std::int64_t deg = 0;
        for (const auto& w : nodes) {
            if (w.id != t.root() && w.parent == u.id) ++deg;
        }
        m.sum_outdeg += deg;
        ++m.topics;
        if (u.id == v) m.outdeg = static_cast<std::size_t>(deg);
    }
    return m;
}

} // namespace kppo::testing
