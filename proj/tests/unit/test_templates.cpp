#include "kppo/error.hpp"
#include "kppo/templates.hpp"
#include "kppo/util.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace kppo;
using kppo::testing::TempDir;

TEST(Templates, DefaultsAreValid) {
    auto t = PromptTemplates::defaults();
    EXPECT_NO_THROW(t.validate());
    EXPECT_NE(t.gradient.find("Error Explanation:"), std::string::npos);
    EXPECT_NE(t.gradient.find("Knowledge Gap Analysis:"), std::string::npos);
    EXPECT_NE(t.gradient.find("Modification:"), std::string::npos);
    EXPECT_NE(t.candidate_pruning.find("{violations}"), std::string::npos);
    EXPECT_EQ(t.candidate.find("{violations}"), std::string::npos);
}

TEST(Templates, FillIsSinglePass) {
    EXPECT_EQ(fill_template("a {x} b {y} {z}", {{"x", "{y}"}, {"y", "Y"}}), "a {y} b Y {z}");
    EXPECT_EQ(fill_template("{x}{x}", {{"x", "1"}}), "11");
    EXPECT_EQ(fill_template("{unclosed", {{"unclosed", "no"}}), "{unclosed");
}

TEST(Templates, DirectoryOverrides) {
    TempDir dir;
    write_file_atomic(dir / "shorten.txt", "Too long ({chars} > {budget}).");
    auto t = PromptTemplates::load(dir.path());
    EXPECT_EQ(t.shorten, "Too long ({chars} > {budget}).");
    EXPECT_EQ(t.gradient, PromptTemplates::defaults().gradient);

    write_file_atomic(dir / "gradient.txt", "Explain {failures}.");
    try {
        PromptTemplates::load(dir.path()).validate();
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("{prompt}"), std::string::npos);
    }
    EXPECT_THROW(PromptTemplates::load(dir / "missing"), ConfigError);
}
