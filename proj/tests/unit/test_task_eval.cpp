#include "kppo/error.hpp"
#include "kppo/task_eval.hpp"

#include "scripted.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace kppo;
using namespace kppo::testing;

namespace {

Instance four_options() {
    Instance inst;
    inst.id = "x1";
    inst.question = "Which bone is medial?";
    inst.options = {{"A", "radius"}, {"B", "ulna"}, {"C", "femur"}, {"D", "tibia"}};
    inst.gold = "B";
    return inst;
}

const std::vector<std::string> abcd{"A", "B", "C", "D"};

} // namespace

TEST(TaskEval, EmptyDocumentMessages) {
    auto msgs = build_messages(PromptDocument{}, four_options(), default_task_instruction());
    ASSERT_EQ(msgs.size(), 2u);
    EXPECT_EQ(msgs[0].role, "system");
    EXPECT_EQ(msgs[0].content, "");
    EXPECT_EQ(msgs[1].role, "user");
    EXPECT_NE(msgs[1].content.find("Which bone is medial?"), std::string::npos);
}

TEST(TaskEval, AnatomyMessages) {
    auto doc = parse_prompt("You are an expert.\n# Anatomy\n- The ulna is medial.\n");
    auto msgs = build_messages(doc, four_options(), default_task_instruction());
    EXPECT_NE(msgs[0].content.find("# Anatomy"), std::string::npos);
    const auto& user = msgs[1].content;
    auto a = user.find("A. radius");
    auto b = user.find("B. ulna");
    auto c = user.find("C. femur");
    auto d = user.find("D. tibia");
    ASSERT_NE(a, std::string::npos);
    EXPECT_LT(a, b);
    EXPECT_LT(b, c);
    EXPECT_LT(c, d);
    EXPECT_NE(user.find("Final Answer: <label>"), std::string::npos);
    EXPECT_EQ(msgs, build_messages(doc, four_options(), default_task_instruction()));
}

TEST(TaskEval, InstructionPlaceholders) {
    TaskInstruction missing{"Question: {question}", "Final Answer:"};
    EXPECT_THROW(build_messages("", four_options(), missing), ConfigError);
    TaskInstruction twice{"{question} {question} {options}", "Final Answer:"};
    EXPECT_THROW(twice.validate(), ConfigError);
    EXPECT_NO_THROW(default_task_instruction().validate());
}

TEST(TaskEval, ValidateInstance) {
    auto inst = four_options();
    EXPECT_NO_THROW(validate_instance(inst));
    inst.gold = "E";
    EXPECT_THROW(validate_instance(inst), SchemaError);
    inst = four_options();
    inst.options[1].label = "A";
    EXPECT_THROW(validate_instance(inst), SchemaError);
}

TEST(TaskEval, ExtractAnswer) {
    EXPECT_EQ(extract_answer("Reasoning...\nFinal Answer: C", abcd, "Final Answer:"), "C");
    EXPECT_EQ(extract_answer("The answer is b.", abcd, "Final Answer:"), "B");
    EXPECT_EQ(extract_answer("I cannot decide.", abcd, "Final Answer:"), std::nullopt);
    EXPECT_EQ(extract_answer("final answer: (d)", abcd, "Final Answer:"), "D");
    EXPECT_EQ(extract_answer("Final Answer: **A**", abcd, "Final Answer:"), "A");
    // The last marker followed by a label wins over earlier ones and over later bare labels.
    EXPECT_EQ(extract_answer("Final Answer: A\nOn reflection, Final Answer: C. Option B is wrong.", abcd, "Final Answer:"),
              "C");
    // A marker without a label falls through to the next-earlier marker.
    EXPECT_EQ(extract_answer("Final Answer: B\nFinal Answer: unsure", abcd, "Final Answer:"), "B");
    // Labels inside words do not count.
    EXPECT_EQ(extract_answer("Absolutely", abcd, "Final Answer:"), std::nullopt);
    const std::vector<std::string> sentiment{"Positive", "Negative", "Neutral"};
    EXPECT_EQ(extract_answer("Final Answer: negative", sentiment, "Final Answer:"), "Negative");
    EXPECT_EQ(extract_answer("mostly neutral in tone", sentiment, "Final Answer:"), "Neutral");
}

TEST(TaskEval, PerfectAndAdversarialTargets) {
    auto instances = make_instances(12);
    LlmGateway gw;
    gw.set_adapter(ModelRole::target, target_by(instances, [](const Instance& i, const std::string&) { return i.gold; }));
    EvalCache cache;
    Evaluator ev(gw, default_task_instruction(), cache);
    auto vec = ev.evaluate(PromptDocument{}, instances);
    EXPECT_EQ(vec.correct(), 12u);
    EXPECT_DOUBLE_EQ(vec.accuracy(), 1.0);
    EXPECT_EQ(vec.instance_ids.size(), vec.bits.size());

    LlmGateway gw2;
    gw2.set_adapter(ModelRole::target, target_by(instances, [](const Instance& i, const std::string&) { return wrong_label(i); }));
    EvalCache cache2;
    Evaluator ev2(gw2, default_task_instruction(), cache2);
    EXPECT_EQ(ev2.evaluate(PromptDocument{}, instances).correct(), 0u);
}

TEST(TaskEval, FactGatedTarget) {
    auto instances = make_instances(4);
    const std::string fact = "The ulna is medial.";
    LlmGateway gw;
    gw.set_adapter(ModelRole::target, target_by(instances, [&](const Instance& i, const std::string& sys) {
                       return sys.find(fact) != std::string::npos ? i.gold : wrong_label(i);
                   }));
    EvalCache cache;
    Evaluator ev(gw, default_task_instruction(), cache);
    auto without = parse_prompt("# Anatomy\n- The radius is lateral.\n");
    auto with = parse_prompt("# Anatomy\n- The ulna is medial.\n");
    EXPECT_EQ(ev.evaluate(without, instances).correct(), 0u);
    EXPECT_EQ(ev.evaluate(with, instances).correct(), 4u);
}

TEST(TaskEval, CachedPairsMakeNoCalls) {
    auto instances = make_instances(8);
    auto counting = std::make_shared<CountingAdapter>(
        target_by(instances, [](const Instance& i, const std::string&) { return i.gold; }));
    LlmGateway gw;
    gw.set_adapter(ModelRole::target, counting);
    EvalCache cache;
    Evaluator ev(gw, default_task_instruction(), cache);
    auto doc = parse_prompt("# T\n- n\n");
    ev.evaluate(doc, instances);
    EXPECT_EQ(counting->calls(), 8);
    EXPECT_EQ(cache.size(), 8u);
    ev.evaluate(doc, instances);
    ev.evaluate_serial(doc, instances);
    EXPECT_EQ(counting->calls(), 8);
    EXPECT_EQ(cache.take_pending().size(), 8u);
    EXPECT_TRUE(cache.take_pending().empty());
}

// Cached bits equal freshly computed bits for random (prompt, instance) pairs.
TEST(TaskEval, CacheSoundness) {
    auto instances = make_instances(30);
    auto pick = [](const Instance& i, const std::string& sys) {
        auto h = sha256_hex(sys + i.id);
        return (h[0] % 2 == 0) ? i.gold : wrong_label(i);
    };
    std::vector<PromptDocument> prompts;
    std::mt19937_64 rng(9);
    for (int i = 0; i < 10; ++i) prompts.push_back(random_document(rng, 12));

    LlmGateway gw;
    gw.set_adapter(ModelRole::target, target_by(instances, pick));
    EvalCache cache;
    Evaluator ev(gw, default_task_instruction(), cache);

    std::uniform_int_distribution<std::size_t> pd(0, prompts.size() - 1), id(0, instances.size() - 1);
    for (int trial = 0; trial < 100; ++trial) {
        const auto& p = prompts[pd(rng)];
        std::vector<Instance> one{instances[id(rng)]};
        ev.evaluate(p, one);
        auto cached = cache.lookup(prompt_fingerprint(p), one[0].id);
        ASSERT_TRUE(cached);

        LlmGateway fresh_gw;
        fresh_gw.set_adapter(ModelRole::target, target_by(instances, pick));
        EvalCache fresh_cache;
        Evaluator fresh(fresh_gw, default_task_instruction(), fresh_cache);
        EXPECT_EQ(*cached, fresh.evaluate_serial(p, one).bits[0]);
        EXPECT_EQ(ev.evaluate(p, one).bits[0], *cached);
    }
}

TEST(TaskEval, ParallelMatchesSerial) {
    auto instances = make_instances(40);
    auto pick = [](const Instance& i, const std::string& sys) {
        auto h = sha256_hex(i.question + sys);
        return (h[1] % 3 == 0) ? wrong_label(i) : i.gold;
    };
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        auto doc = random_document(rng, 20);
        LlmGateway g1, g2;
        g1.set_adapter(ModelRole::target, target_by(instances, pick));
        g2.set_adapter(ModelRole::target, target_by(instances, pick));
        EvalCache c1, c2;
        Evaluator parallel(g1, default_task_instruction(), c1, {}, 8);
        Evaluator serial(g2, default_task_instruction(), c2, {}, 1);
        auto a = parallel.evaluate(doc, instances);
        auto b = serial.evaluate_serial(doc, instances);
        EXPECT_EQ(a.bits, b.bits);
        EXPECT_EQ(a.instance_ids, b.instance_ids);
        EXPECT_EQ(a.prompt_fingerprint, b.prompt_fingerprint);
    }
}

TEST(TaskEval, FailureCarriesPosition) {
    auto instances = make_instances(6);
    auto known = std::vector<Instance>(instances.begin(), instances.begin() + 3);
    LlmGateway gw;
    gw.set_adapter(ModelRole::target, target_by(known, [](const Instance& i, const std::string&) { return i.gold; }));
    EvalCache cache;
    Evaluator ev(gw, default_task_instruction(), cache, {}, 4);
    try {
        ev.evaluate(PromptDocument{}, instances);
        FAIL() << "expected EvaluationError";
    } catch (const EvaluationError& e) {
        EXPECT_EQ(e.position(), 3u);
    }
    try {
        ev.evaluate_serial(PromptDocument{}, instances);
        FAIL() << "expected EvaluationError";
    } catch (const EvaluationError& e) {
        EXPECT_EQ(e.position(), 3u);
    }
}

TEST(TaskEval, EvalCachePersistence) {
    TempDir dir;
    EvalCache cache;
    cache.insert({"fp", "a", 1, "d1"});
    cache.insert({"fp", "b", 0, "d2"});
    std::string lines;
    for (const auto& r : cache.take_pending()) lines += eval_record_line(r) + "\n";
    kppo::write_file_atomic(dir / "eval.jsonl", lines);
    EvalCache back;
    back.load(dir / "eval.jsonl");
    EXPECT_EQ(back.lookup("fp", "a"), std::optional<std::uint8_t>(1));
    EXPECT_EQ(back.lookup("fp", "b"), std::optional<std::uint8_t>(0));
    EvalCache partial;
    partial.load(dir / "eval.jsonl", 1);
    EXPECT_EQ(partial.size(), 1u);
}
