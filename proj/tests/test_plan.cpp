#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "planeval/plan.hpp"
#include "support.hpp"

using namespace planeval;

namespace {

Plan listing1() { return parse_plan(testsupport::listing1_text()); }

ErrorKind parse_error(std::string_view text) {
    try {
        parse_plan(text);
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected a parse error for: " << text;
    return ErrorKind::BadInput;
}

bool has_violation(const ValidationReport& r, ViolationKind k, int step) {
    for (const auto& v : r.violations) {
        if (v.kind == k && v.step == step) return true;
    }
    return false;
}

}  // namespace

TEST(ParsePlan, Listing1HasSixStepsAndFinalJoin) {
    const auto p = listing1();
    ASSERT_EQ(p.size(), 6u);
    EXPECT_EQ(p.step(6).tool, ToolKind::LLM);
    EXPECT_EQ(p.step(6).depends_on, (std::vector<int>{4, 5}));
    EXPECT_EQ(p.step(2).tool, ToolKind::RAG);
    EXPECT_EQ(p.step(2).arg_refs, (std::vector<int>{1}));
    EXPECT_EQ(p.step(1).arg_refs, std::vector<int>{});
    EXPECT_EQ(p.step(3).prompt, "Extract interaction_ids from Data Insights in (2).");
}

TEST(ParsePlan, MinimalLlmStep) {
    const auto p = parse_plan(R"J({"1": {"query": "LLM('hi')", "depends_on": []}})J");
    ASSERT_EQ(p.size(), 1u);
    EXPECT_EQ(p.step(1).tool, ToolKind::LLM);
    EXPECT_EQ(p.step(1).prompt, "hi");
    EXPECT_TRUE(p.step(1).depends_on.empty());
}

TEST(ParsePlan, UnknownToolIsRejected) {
    EXPECT_EQ(parse_error(R"J({"1": {"query": "SQL('x')", "depends_on": []}})J"), ErrorKind::UnknownTool);
}

TEST(ParsePlan, AcceptsStepKeyUnquotedKeysAndDoubleQuotedPrompts) {
    const auto a = parse_plan(R"J({1: {"step": "T2S([], \"count calls\")", "depends_on": []},
                                  2: {"step": "LLM('summarize (1)')", "depends_on": [1]},})J");
    ASSERT_EQ(a.size(), 2u);
    EXPECT_EQ(a.step(1).prompt, "count calls");
    EXPECT_EQ(a.step(2).depends_on, std::vector<int>{1});
}

TEST(ParsePlan, StructuralErrors) {
    EXPECT_EQ(parse_error("not a plan"), ErrorKind::NotParseable);
    EXPECT_EQ(parse_error(R"J({"1": {"query": "LLM('a')", "depends_on": []})J"), ErrorKind::NotParseable);
    EXPECT_EQ(parse_error(R"J({"x": {"query": "LLM('a')", "depends_on": []}})J"), ErrorKind::BadStepKey);
    EXPECT_EQ(parse_error(R"J({"2": {"query": "LLM('a')", "depends_on": []}})J"), ErrorKind::BadStepKey);
    EXPECT_EQ(parse_error(R"J({"1": {"depends_on": []}})J"), ErrorKind::MissingField);
    EXPECT_EQ(parse_error(R"J({"1": {"query": "LLM('a')"}})J"), ErrorKind::MissingField);
    EXPECT_EQ(parse_error(R"J({"1": {"query": "T2S('no args')", "depends_on": []}})J"), ErrorKind::MalformedToolCall);
    EXPECT_EQ(parse_error(R"J({"1": {"query": "LLM((1), 'x')", "depends_on": []}})J"), ErrorKind::MalformedToolCall);
    EXPECT_EQ(parse_error("{}"), ErrorKind::EmptyPlan);
}

TEST(ParsePlan, CanonicalFormRoundTrips) {
    const auto p = listing1();
    const auto doc = to_document(p);
    EXPECT_EQ(parse_plan(doc), p);
    EXPECT_EQ(to_document(parse_plan(doc)), doc);
}

TEST(ParsePlan, RoundTripPropertyWithAwkwardPrompts) {
    std::mt19937_64 rng(11);
    const std::vector<std::string> nasty = {"it's", "say \"hi\"", "back\\slash", "tab\there", "line\nbreak", "ünïcödé"};
    for (int trial = 0; trial < 300; ++trial) {
        auto base = testsupport::random_valid_plan(rng);
        auto steps = base.steps();
        for (auto& s : steps) s.prompt += " " + nasty[rng() % nasty.size()];
        const Plan p(steps);
        const auto doc = to_document(p);
        ASSERT_EQ(parse_plan(doc), p) << doc;
    }
}

TEST(ParsePlan, MaskedDocumentHidesToolNames) {
    const auto doc = to_document(listing1(), true);
    EXPECT_EQ(doc.find("T2S"), std::string::npos);
    EXPECT_EQ(doc.find("RAG("), std::string::npos);
    EXPECT_NE(doc.find("TOOL((3), "), std::string::npos);
}

TEST(Validate, Listing1IsValid) {
    const auto r = validate(listing1());
    EXPECT_TRUE(r.valid);
    EXPECT_TRUE(r.violations.empty());
    EXPECT_TRUE(r.warnings.empty());
}

TEST(Validate, ForwardReference) {
    const auto p = parse_plan(R"J({"1": {"query": "LLM('a')", "depends_on": []},
                                  "2": {"query": "LLM('b (3)')", "depends_on": [3]},
                                  "3": {"query": "LLM('c')", "depends_on": []}})J");
    const auto r = validate(p);
    EXPECT_FALSE(r.valid);
    EXPECT_TRUE(has_violation(r, ViolationKind::ForwardReference, 2));
}

TEST(Validate, MissingPlaceholderIsAWarningOnly) {
    const auto p = parse_plan(R"J({"1": {"query": "T2S([], 'a')", "depends_on": []},
                                  "2": {"query": "LLM('summarize')", "depends_on": [1]}})J");
    const auto r = validate(p);
    EXPECT_TRUE(r.valid);
    ASSERT_EQ(r.warnings.size(), 1u);
    EXPECT_EQ(r.warnings[0].kind, ViolationKind::MissingPlaceholder);
    EXPECT_EQ(r.warnings[0].step, 2);
}

TEST(Validate, ArgumentsAndPlaceholdersMustBeDeclared) {
    const auto p = parse_plan(R"J({"1": {"query": "T2S([], 'a')", "depends_on": []},
                                  "2": {"query": "RAG((1), 'b')", "depends_on": []},
                                  "3": {"query": "LLM('c (1) (tool 2)')", "depends_on": [1]}})J");
    const auto r = validate(p);
    EXPECT_FALSE(r.valid);
    EXPECT_TRUE(has_violation(r, ViolationKind::ArgNotInDependencies, 2));
    EXPECT_TRUE(has_violation(r, ViolationKind::PlaceholderNotInDependencies, 3));
}

TEST(Validate, SelfReferenceAndCycle) {
    Step a{1, ToolKind::LLM, {}, "x (2)", {2}};
    Step b{2, ToolKind::LLM, {}, "y (1)", {1}};
    const auto r = validate(Plan({a, b}));
    EXPECT_FALSE(r.valid);
    EXPECT_TRUE(has_violation(r, ViolationKind::ForwardReference, 1));
    bool cycle = false;
    for (const auto& v : r.violations) cycle |= v.kind == ViolationKind::Cycle;
    EXPECT_TRUE(cycle);

    Step s{1, ToolKind::LLM, {}, "me (1)", {1}};
    EXPECT_TRUE(has_violation(validate(Plan({s})), ViolationKind::SelfReference, 1));
}

TEST(Validate, ValidIffNoViolationsOnRandomPlans) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 500; ++trial) {
        auto steps = testsupport::random_valid_plan(rng).steps();
        if (rng() % 2) {
            auto& s = steps[rng() % steps.size()];
            s.depends_on.push_back(static_cast<int>(rng() % (steps.size() + 2)));
        }
        const auto r = validate(Plan(steps));
        EXPECT_EQ(r.valid, r.violations.empty());
    }
}

TEST(Placeholders, RecognizedFormsInOrderWithDuplicates) {
    const auto ph = extract_placeholders("use (1) and (query), then (tool 2) (sub-query 3) (1) (note) (0) (x 1)");
    ASSERT_EQ(ph.size(), 5u);
    EXPECT_EQ(ph[0], Placeholder::output(1));
    EXPECT_EQ(ph[1], Placeholder::query());
    EXPECT_EQ(ph[2], Placeholder::tool(2));
    EXPECT_EQ(ph[3], Placeholder::sub_query(3));
    EXPECT_EQ(ph[4], Placeholder::output(1));
}

TEST(Hops, Listing1DepthsAndCategory) {
    const auto hp = hop_profile(listing1());
    const std::map<int, int> expected = {{1, 0}, {2, 1}, {3, 2}, {4, 3}, {5, 3}, {6, 4}};
    EXPECT_EQ(hp.per_step_depth, expected);
    EXPECT_EQ(hp.hops, 4);
    EXPECT_EQ(hp.category, HopCategory::ThreePlus);
    EXPECT_EQ(to_string(hp.category), "three-plus");
}

TEST(Hops, SingleStepAndTwoProducerSynthesis) {
    const auto single = parse_plan(R"J({"1": {"query": "T2S([], 'count')", "depends_on": []}})J");
    EXPECT_EQ(hop_profile(single).hops, 0);
    EXPECT_EQ(hop_profile(single).category, HopCategory::ZeroHop);
    const auto join = parse_plan(R"J({"1": {"query": "T2S([], 'a')", "depends_on": []},
                                     "2": {"query": "RAG([], 'b')", "depends_on": []},
                                     "3": {"query": "LLM('merge (1) and (2)')", "depends_on": [1, 2]}})J");
    EXPECT_EQ(hop_profile(join).hops, 1);
    EXPECT_EQ(hop_profile(join).category, HopCategory::OneHop);
}

TEST(Hops, InvalidPlanIsRejected) {
    Step a{1, ToolKind::LLM, {}, "x (2)", {2}};
    Step b{2, ToolKind::LLM, {}, "y", {}};
    try {
        hop_profile(Plan({a, b}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InvalidPlan);
    }
}

TEST(Hops, CategoryBuckets) {
    EXPECT_EQ(hop_category(0), HopCategory::ZeroHop);
    EXPECT_EQ(hop_category(1), HopCategory::OneHop);
    EXPECT_EQ(hop_category(2), HopCategory::TwoHop);
    EXPECT_EQ(hop_category(3), HopCategory::ThreePlus);
    EXPECT_EQ(hop_category(9), HopCategory::ThreePlus);
}
