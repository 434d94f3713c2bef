#include "kppo/error.hpp"
#include "kppo/knowledge_tree.hpp"

#include "oracles.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace kppo;
using kppo::testing::brute_metrics;

namespace {

KnowledgeTree three_by_two() {
    KnowledgeTree t;
    for (int i = 0; i < 3; ++i) {
        auto c = t.add_topic(t.root(), "t" + std::to_string(i));
        t.add_note(c, "a");
        t.add_note(c, "b");
    }
    return t;
}

KnowledgeTree star(int children, bool topics) {
    KnowledgeTree t;
    for (int i = 0; i < children; ++i) {
        if (topics) {
            t.add_topic(t.root(), "leaf " + std::to_string(i));
        } else {
            t.add_note(t.root(), "note " + std::to_string(i));
        }
    }
    return t;
}

} // namespace

TEST(KnowledgeTree, RootOnly) {
    KnowledgeTree t;
    EXPECT_TRUE(t.empty());
    EXPECT_EQ(t.size(), 1u);
    EXPECT_EQ(t.node(t.root()).depth, 0);
    EXPECT_EQ(t.path(t.root()), "(root)");
    EXPECT_TRUE(detect_violations(t, 1, 0.5).empty());
}

TEST(KnowledgeTree, NotesPrecedeSubtopics) {
    KnowledgeTree t;
    auto a = t.add_topic(t.root(), "A");
    auto b = t.add_topic(a, "B");
    auto n = t.add_note(a, "fact");
    ASSERT_EQ(t.node(a).children.size(), 2u);
    EXPECT_EQ(t.node(a).children[0], n);
    EXPECT_EQ(t.node(a).children[1], b);
    EXPECT_EQ(t.node(b).depth, 2);
    EXPECT_EQ(t.path(b), "A > B");
}

TEST(KnowledgeTree, NotesAreLeaves) {
    KnowledgeTree t;
    auto n = t.add_note(t.root(), "fact");
    EXPECT_THROW(t.add_note(n, "x"), DomainError);
    EXPECT_THROW(t.add_topic(n, "x"), DomainError);
    EXPECT_THROW(branching_factor(t, n), DomainError);
    EXPECT_THROW(balance_ratio(t, n), DomainError);
}

TEST(KnowledgeTree, LeafTopicHasZeroBranchingAndBalance) {
    KnowledgeTree t;
    auto leaf = t.add_topic(t.root(), "leaf");
    EXPECT_EQ(branching_factor(t, leaf), Rational::make(0, 1));
    EXPECT_EQ(balance_ratio(t, leaf), Rational::make(0, 1));
}

TEST(KnowledgeTree, ThreeTopicsWithTwoNotesEach) {
    auto t = three_by_two();
    EXPECT_EQ(branching_factor(t, t.root()), Rational::make(9, 4));
    EXPECT_DOUBLE_EQ(branching_factor(t, t.root()).to_double(), 2.25);
    EXPECT_EQ(balance_ratio(t, t.root()), Rational::make(4, 3));
}

TEST(KnowledgeTree, Chain) {
    KnowledgeTree t;
    auto t0 = t.add_topic(t.root(), "t0");
    auto t1 = t.add_topic(t0, "t1");
    t.add_topic(t1, "t2");
    EXPECT_EQ(branching_factor(t, t0), Rational::make(2, 3));
    EXPECT_EQ(balance_ratio(t, t0), Rational::make(3, 2));
}

TEST(KnowledgeTree, StarOfTopicLeaves) {
    auto t = star(10, true);
    EXPECT_EQ(branching_factor(t, t.root()), Rational::make(10, 11));
    EXPECT_EQ(balance_ratio(t, t.root()), Rational::make(11, 1));
    auto r = detect_violations(t, 16, 8.0);
    EXPECT_TRUE(r.local.empty());
    ASSERT_EQ(r.global.size(), 1u);
    EXPECT_EQ(r.global[0].node, t.root());
    EXPECT_EQ(r.global[0].beta, Rational::make(11, 1));
    EXPECT_EQ(r.global[0].branching, Rational::make(10, 11));
}

TEST(KnowledgeTree, SeventeenChildrenBreaksDegreeLimit) {
    auto t = star(17, false);
    auto r = detect_violations(t, 16, 8.0);
    ASSERT_EQ(r.local.size(), 1u);
    EXPECT_EQ(r.local[0].node, t.root());
    EXPECT_EQ(r.local[0].out_degree, 17u);
    EXPECT_EQ(r.local[0].limit, 16u);
    // A star of notes has bf = 17 and beta = 1.
    EXPECT_TRUE(r.global.empty());
    EXPECT_TRUE(detect_violations(star(16, false), 16, 8.0).empty());
}

TEST(KnowledgeTree, RejectsBadLimits) {
    KnowledgeTree t;
    EXPECT_THROW(detect_violations(t, 0, 8.0), ConfigError);
    EXPECT_THROW(detect_violations(t, 16, 0.0), ConfigError);
}

TEST(KnowledgeTree, RationalExceedsIsExact) {
    EXPECT_FALSE(Rational::make(8, 1).exceeds(8.0));
    EXPECT_TRUE(Rational::make(81, 10).exceeds(8.0));
    EXPECT_TRUE(Rational::make(4, 3).exceeds(1.3333333));
    EXPECT_EQ(Rational::make(6, 4), Rational::make(3, 2));
}

TEST(KnowledgeTree, WithoutDropsSubtrees) {
    auto t = three_by_two();
    auto pruned = t.without([](const Node& n) { return n.text == "t1"; });
    EXPECT_EQ(pruned.topic_count(), 3u);
    EXPECT_EQ(pruned.note_count(), 4u);
    for (std::size_t i = 0; i < pruned.size(); ++i) EXPECT_EQ(index_of(pruned.nodes()[i].id), i);
    auto root_kept = t.without([](const Node&) { return true; });
    EXPECT_TRUE(root_kept.empty());
}

TEST(KnowledgeTree, PreorderVisitsEveryNodeOnce) {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 100; ++i) {
        auto t = kppo::testing::random_tree(rng, 120);
        auto order = t.preorder();
        ASSERT_EQ(order.size(), t.size());
        std::vector<int> seen(t.size());
        for (auto id : order) ++seen[index_of(id)];
        for (int s : seen) EXPECT_EQ(s, 1);
        EXPECT_EQ(order.front(), t.root());
    }
}

// detect_violations against a from-scratch recomputation per node.
TEST(KnowledgeTree, ViolationsMatchBruteForce) {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<std::size_t> c_dist(1, 8);
    std::uniform_real_distribution<double> f_dist(0.25, 6.0);
    for (int trial = 0; trial < 1000; ++trial) {
        auto t = kppo::testing::random_tree(rng, 200);
        const auto c = c_dist(rng);
        const double f = trial % 5 == 0 ? 1.0 : f_dist(rng);
        auto report = detect_violations(t, c, f);

        auto want = kppo::testing::oracle_violations(t, c, f);
        const auto& want_local = want.local;
        const auto& want_global = want.global;
        ASSERT_EQ(report.local.size(), want_local.size()) << "trial " << trial;
        ASSERT_EQ(report.global.size(), want_global.size()) << "trial " << trial;
        for (std::size_t i = 0; i < want_local.size(); ++i) EXPECT_EQ(report.local[i].node, want_local[i]);
        for (std::size_t i = 0; i < want_global.size(); ++i) {
            EXPECT_EQ(report.global[i].node, want_global[i]);
            auto m = brute_metrics(t, want_global[i]);
            EXPECT_EQ(report.global[i].branching, Rational::make(m.sum_outdeg, m.topics));
        }
    }
}

TEST(KnowledgeTree, AddingTopicLeafMatchesRecomputation) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        auto t = kppo::testing::random_tree(rng, 60, 5);
        std::vector<NodeId> topics;
        for (const auto& n : t.nodes()) {
            if (n.kind == NodeKind::topic) topics.push_back(n.id);
        }
        auto v = topics[rng() % topics.size()];
        const auto before = t.out_degree(v);
        t.add_topic(v, "new leaf");
        EXPECT_EQ(t.out_degree(v), before + 1);
        auto m = brute_metrics(t, v);
        EXPECT_EQ(branching_factor(t, v), Rational::make(m.sum_outdeg, m.topics));
        EXPECT_EQ(balance_ratio(t, v), Rational::make(static_cast<std::int64_t>(m.outdeg) * m.topics, m.sum_outdeg));
    }
}
