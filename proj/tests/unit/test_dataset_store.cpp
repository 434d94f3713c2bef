#include "kppo/dataset_store.hpp"
#include "kppo/error.hpp"
#include "kppo/util.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace kppo;
using kppo::testing::TempDir;

namespace {

std::string line(const std::string& id, const std::string& gold = "A", const std::string& split = "") {
    std::string s = R"({"id": ")" + id + R"(", "question": "What is )" + id +
                    R"(?", "options": [{"label": "A", "text": "one"}, {"label": "B", "text": "two"}, {"label": "C", "text": "three"}, {"label": "D", "text": "four"}], "gold": ")" +
                    gold + "\"";
    if (!split.empty()) s += R"(, "split": ")" + split + "\"";
    return s + "}";
}

Dataset numbered(std::size_t n) {
    Dataset d;
    for (std::size_t i = 0; i < n; ++i) {
        Instance inst;
        inst.id = "i" + std::to_string(i);
        inst.question = "q";
        inst.options = {{"A", "a"}, {"B", "b"}};
        inst.gold = "A";
        d.instances.push_back(inst);
    }
    return d;
}

std::set<std::string> ids(const std::vector<Instance>& v) {
    std::set<std::string> out;
    for (const auto& i : v) out.insert(i.id);
    return out;
}

} // namespace

TEST(DatasetStore, OneValidLine) {
    TempDir dir;
    write_file_atomic(dir / "d.jsonl", line("x1", "C", "train") + "\n");
    auto d = load_jsonl(dir / "d.jsonl");
    ASSERT_EQ(d.instances.size(), 1u);
    const auto& inst = d.instances[0];
    EXPECT_EQ(inst.id, "x1");
    EXPECT_EQ(inst.question, "What is x1?");
    ASSERT_EQ(inst.options.size(), 4u);
    EXPECT_EQ(inst.options[2], (AnswerOption{"C", "three"}));
    EXPECT_EQ(inst.gold, "C");
    EXPECT_EQ(inst.split, Split::train);
    EXPECT_EQ(instance_from_json(instance_to_json(inst)), inst);
}

TEST(DatasetStore, EmptyFileGivesEmptyDataset) {
    TempDir dir;
    write_file_atomic(dir / "d.jsonl", "");
    EXPECT_TRUE(load_jsonl(dir / "d.jsonl").instances.empty());
}

TEST(DatasetStore, MissingFile) {
    TempDir dir;
    EXPECT_THROW(load_jsonl(dir / "nope.jsonl"), SchemaError);
}

TEST(DatasetStore, ReportsEveryBadLine) {
    TempDir dir;
    write_file_atomic(dir / "d.jsonl", line("a") + "\n" + line("b", "E") + "\n{not json\n" + line("a") + "\n");
    try {
        load_jsonl(dir / "d.jsonl");
        FAIL() << "expected SchemaError";
    } catch (const SchemaError& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("line 2"), std::string::npos);
        EXPECT_NE(msg.find("gold 'E'"), std::string::npos);
        EXPECT_NE(msg.find("line 3"), std::string::npos);
        EXPECT_NE(msg.find("line 4"), std::string::npos);
        EXPECT_NE(msg.find("duplicate id 'a'"), std::string::npos);
        EXPECT_EQ(msg.find("line 1:"), std::string::npos);
    }
}

TEST(DatasetStore, MissingFieldsAndBadSplit) {
    TempDir dir;
    write_file_atomic(dir / "d.jsonl", R"({"id": "a", "question": "q", "gold": "A"})" "\n" + line("b", "A", "holdout") + "\n");
    try {
        load_jsonl(dir / "d.jsonl");
        FAIL() << "expected SchemaError";
    } catch (const SchemaError& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("line 1"), std::string::npos);
        EXPECT_NE(msg.find("line 2"), std::string::npos);
    }
}

TEST(DatasetStore, TaskFileResolvesDataRelativeToItself) {
    TempDir dir;
    std::filesystem::create_directories(dir / "sub");
    write_file_atomic(dir / "sub" / "data.jsonl", line("a") + "\n" + line("b") + "\n");
    write_file_atomic(dir / "sub" / "task.json",
                      R"({"name": "demo", "instruction_template": "Q: {question}\n{options}", "answer_marker": "Answer:", "data": "data.jsonl"})");
    auto d = load_task(dir / "sub" / "task.json");
    EXPECT_EQ(d.name, "demo");
    EXPECT_EQ(d.instances.size(), 2u);
    EXPECT_EQ(d.instruction.answer_marker, "Answer:");

    write_file_atomic(dir / "bad.json", R"({"name": "demo", "instruction_template": "no placeholders", "answer_marker": "A:", "data": "x"})");
    EXPECT_THROW(load_task(dir / "bad.json"), ConfigError);
}

TEST(DatasetStore, PaperSizedSplitCoversEverything) {
    auto d = numbered(300);
    auto s = split(d, 17, {150, 50, 100});
    EXPECT_EQ(s.train.size(), 150u);
    EXPECT_EQ(s.val.size(), 50u);
    EXPECT_EQ(s.test.size(), 100u);
    std::set<std::string> all;
    for (auto* part : {&s.train, &s.val, &s.test}) {
        for (const auto& i : *part) EXPECT_TRUE(all.insert(i.id).second);
    }
    EXPECT_EQ(all.size(), 300u);
}

TEST(DatasetStore, SplitIsDeterministic) {
    auto d = numbered(80);
    auto a = split(d, 5, {30, 20, 10});
    auto b = split(d, 5, {30, 20, 10});
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.val, b.val);
    EXPECT_EQ(a.test, b.test);
    auto c = split(d, 6, {30, 20, 10});
    EXPECT_NE(a.train, c.train);
}

TEST(DatasetStore, SplitsAreDisjointAcrossSeeds) {
    auto d = numbered(120);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto s = split(d, seed, {50, 30, 40});
        auto tr = ids(s.train), va = ids(s.val), te = ids(s.test);
        for (const auto& id : tr) {
            ASSERT_FALSE(va.count(id)) << seed;
            ASSERT_FALSE(te.count(id)) << seed;
        }
        for (const auto& id : va) ASSERT_FALSE(te.count(id)) << seed;
    }
}

TEST(DatasetStore, SplitErrorsAndValAsTest) {
    auto d = numbered(10);
    EXPECT_THROW(split(d, 1, {5, 5, 1}), ConfigError);
    auto s = split(d, 1, {6, 4, 0}, true);
    EXPECT_EQ(s.test, s.val);
}

TEST(DatasetStore, SplitByField) {
    auto d = numbered(4);
    d.instances[0].split = Split::train;
    d.instances[1].split = Split::val;
    d.instances[2].split = Split::test;
    d.instances[3].split = Split::train;
    auto s = split_by_field(d);
    EXPECT_EQ(s.train.size(), 2u);
    EXPECT_EQ(s.val.size(), 1u);
    EXPECT_EQ(s.test.size(), 1u);
    d.instances[2].split = Split::unspecified;
    EXPECT_THROW(split_by_field(d), ConfigError);
}

TEST(DatasetStore, PermutationIsAPermutation) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto p = seeded_permutation(57, seed);
        std::set<std::size_t> s(p.begin(), p.end());
        EXPECT_EQ(s.size(), 57u);
        EXPECT_EQ(*s.rbegin(), 56u);
    }
    EXPECT_TRUE(seeded_permutation(0, 1).empty());
}
