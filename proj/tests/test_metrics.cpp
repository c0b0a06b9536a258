#include <gtest/gtest.h>

#include <random>

#include "planeval/metrics.hpp"
#include "support.hpp"

using namespace planeval;
using testsupport::FnBackend;

namespace {

std::map<MetricKind, MetricScore> raws(const std::array<double, 7>& r) {
    std::map<MetricKind, MetricScore> out;
    for (auto k : kAllMetrics) out[k] = {k, r[index_of(k)], 0.0, "", std::nullopt};
    return out;
}

ErrorKind error_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorKind::BadInput;
}

// Fixed judge score per metric, chosen from the system prompt wording.
std::string scripted_reply(const JudgeRequest& r) {
    const auto& s = r.system_prompt;
    if (s.find("answers its query") != std::string::npos) return "mostly there | 0.5 |";
    if (s.find("on format") != std::string::npos) return "step 3 lacks a placeholder | 5 |";
    if (s.find("on redundancy") != std::string::npos) return "two steps repeat work | 4 |";
    return "fine | 6 |";
}

struct Harness {
    std::shared_ptr<FnBackend> backend;
    JudgeGateway gateway;
    JudgeContext ctx;

    explicit Harness(FnBackend::Fn fn) : backend(std::make_shared<FnBackend>(std::move(fn))), gateway(backend) {
        ctx.gateway = &gateway;
    }
};

}  // namespace

TEST(Weights, DefaultVectorAndBudgetCheck) {
    const auto w = WeightVector::standard();
    EXPECT_EQ(w[MetricKind::ToolPromptAlignment], 20);
    EXPECT_EQ(w[MetricKind::Format], 20);
    EXPECT_EQ(w[MetricKind::StepExecutability], 15);
    EXPECT_EQ(w[MetricKind::QueryAdherence], 15);
    EXPECT_EQ(w[MetricKind::Dependencies], 10);
    EXPECT_EQ(w[MetricKind::Redundancy], 10);
    EXPECT_EQ(w[MetricKind::ToolUsageCompleteness], 10);
    EXPECT_NO_THROW(w.check());
    auto bad = w;
    bad.weights[0] = 25;
    EXPECT_EQ(error_of([&] { bad.check(); }), ErrorKind::WeightBudgetViolation);
    bad = w;
    bad.weights[4] = -1;
    bad.weights[5] = 21;
    EXPECT_EQ(error_of([&] { bad.check(); }), ErrorKind::WeightBudgetViolation);
}

TEST(Aggregate, HandComputedTotals) {
    const auto w = WeightVector::standard();
    EXPECT_DOUBLE_EQ(aggregate(raws({1, 1, 1, 1, 1, 1, 1}), w), 100.0);
    EXPECT_DOUBLE_EQ(aggregate(raws({0, 0, 0, 0, 0, 0, 0}), w), 0.0);
    // TPA .5, Format 1, SE .8, QA .5, Dep 1, Red 0, TUC 1.
    EXPECT_NEAR(aggregate(raws({0.5, 1, 0.8, 0.5, 1, 0, 1}), w), 10 + 20 + 12 + 7.5 + 10 + 0 + 10, 1e-12);
    auto partial = raws({1, 1, 1, 1, 1, 1, 1});
    partial.erase(MetricKind::Redundancy);
    EXPECT_EQ(error_of([&] { aggregate(partial, w); }), ErrorKind::MissingMetric);
}

TEST(Aggregate, MonotoneAndBoundedOnRandomInputs) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0, 1);
    const auto w = WeightVector::standard();
    for (int trial = 0; trial < 500; ++trial) {
        std::array<double, 7> r{};
        for (auto& x : r) x = u(rng);
        const double total = aggregate(raws(r), w);
        EXPECT_GE(total, 0.0);
        EXPECT_LE(total, 100.0);
        auto up = r;
        const auto k = rng() % 7;
        up[k] = std::min(1.0, up[k] + 0.1);
        EXPECT_GE(aggregate(raws(up), w), total);
    }
}

TEST(NormalizedAverage, MeanPointsOverWeight) {
    const auto w = WeightVector::standard();
    PlanScorecard a, b;
    for (auto k : kAllMetrics) {
        a.per_metric[k] = {k, 1.0, w[k], "", std::nullopt};
        b.per_metric[k] = {k, 0.5, w[k] * 0.5, "", std::nullopt};
    }
    const auto avg = normalized_average({a, b}, w);
    for (auto k : kAllMetrics) EXPECT_NEAR(avg.at(k), 75.0, 1e-12);
    EXPECT_EQ(error_of([&] { normalized_average({}, w); }), ErrorKind::EmptyInput);
}

TEST(ParseResponse, ScoreFieldForms) {
    auto r = parse_metric_response("All steps fit | 4 |");
    EXPECT_EQ(r.explanation, "All steps fit");
    EXPECT_EQ(r.score, 4.0);
    EXPECT_EQ(parse_metric_response("a | b | **2.5** |\n").score, 2.5);
    EXPECT_EQ(parse_metric_response("x|+1|").score, 1.0);
    EXPECT_EQ(error_of([] { parse_metric_response("score 4"); }), ErrorKind::NoScoreField);
    EXPECT_EQ(error_of([] { parse_metric_response("4 |"); }), ErrorKind::NoScoreField);
    EXPECT_EQ(error_of([] { parse_metric_response("why | four |"); }), ErrorKind::NonNumericScore);
}

TEST(ParseResponse, RangeRules) {
    EXPECT_FALSE(score_range_problem(MetricKind::QueryAdherence, 0.5, 3));
    EXPECT_TRUE(score_range_problem(MetricKind::QueryAdherence, 0.7, 3));
    EXPECT_TRUE(score_range_problem(MetricKind::QueryAdherence, 2, 3));
    EXPECT_FALSE(score_range_problem(MetricKind::Format, 3, 3));
    EXPECT_FALSE(score_range_problem(MetricKind::Format, 0, 3));
    EXPECT_TRUE(score_range_problem(MetricKind::Format, 4, 3));
    EXPECT_TRUE(score_range_problem(MetricKind::Redundancy, -1, 3));
    EXPECT_DOUBLE_EQ(raw_from_score(MetricKind::QueryAdherence, 0.5, 6), 0.5);
    EXPECT_DOUBLE_EQ(raw_from_score(MetricKind::Dependencies, 3, 6), 0.5);
}

TEST(ParseResponse, SingleStyleNeedsAllSevenLines) {
    std::string reply;
    for (auto k : kAllMetrics) reply += "**" + std::string(single_label(k)) + "**: ok | 1 |\n";
    const auto parsed = parse_single_response(reply);
    EXPECT_EQ(parsed.size(), 7u);
    const auto missing = reply.substr(0, reply.rfind("**TOOL_USAGE"));
    EXPECT_EQ(error_of([&] { parse_single_response(missing); }), ErrorKind::MissingMetric);
}

TEST(ScorePlan, DeconstructedUsesOneCallPerMetric) {
    Harness h(scripted_reply);
    const auto ref = parse_plan(testsupport::listing1_text());
    const auto card = score_plan(testsupport::listing1_text(), &ref, "which calls failed", EvalMode::ReferenceBased,
                                 PromptStyle::Deconstructed, h.ctx);
    EXPECT_EQ(h.backend->calls, 7);
    EXPECT_TRUE(card.candidate_parseable);
    EXPECT_NEAR(card.per_metric.at(MetricKind::Format).raw, 5.0 / 6.0, 1e-12);
    EXPECT_NEAR(card.per_metric.at(MetricKind::Redundancy).points, 10.0 * 4 / 6, 1e-12);
    EXPECT_EQ(card.per_metric.at(MetricKind::QueryAdherence).raw, 0.5);
    EXPECT_EQ(card.per_metric.at(MetricKind::Format).explanation, "step 3 lacks a placeholder");
    const double expected = 20 + 20 * 5.0 / 6 + 15 + 7.5 + 10 + 10 * 4.0 / 6 + 10;
    EXPECT_NEAR(card.total, expected, 1e-9);
    EXPECT_TRUE(card.mechanical_format_ok);
    EXPECT_TRUE(card.format_disagreement);
}

TEST(ScorePlan, QueryOnlyReachesQueryAdherenceWhichSeesMaskedTools) {
    std::vector<JudgeRequest> seen;
    std::mutex m;
    Harness h([&](const JudgeRequest& r) {
        std::lock_guard lock(m);
        seen.push_back(r);
        return scripted_reply(r);
    });
    score_plan(testsupport::listing1_text(), nullptr, "QUERY-MARKER-42", EvalMode::ReferenceFree,
               PromptStyle::Deconstructed, h.ctx);
    ASSERT_EQ(seen.size(), 7u);
    int with_query = 0;
    for (const auto& r : seen) {
        const bool has = r.user_prompt.find("QUERY-MARKER-42") != std::string::npos ||
                         r.system_prompt.find("QUERY-MARKER-42") != std::string::npos;
        if (has) {
            ++with_query;
            EXPECT_NE(r.system_prompt.find("answers its query"), std::string::npos);
            EXPECT_NE(r.user_prompt.find("TOOL((1), "), std::string::npos);
        } else {
            EXPECT_NE(r.user_prompt.find("RAG((1), "), std::string::npos);
        }
    }
    EXPECT_EQ(with_query, 1);
}

TEST(ScorePlan, UnparseableCandidateScoresZeroWithoutCalls) {
    Harness h(scripted_reply);
    const auto card = score_plan("not json at all", nullptr, "q", EvalMode::ReferenceFree, PromptStyle::Deconstructed, h.ctx);
    EXPECT_FALSE(card.candidate_parseable);
    EXPECT_EQ(card.total, 0.0);
    EXPECT_EQ(card.per_metric.size(), 7u);
    EXPECT_EQ(h.backend->calls, 0);
}

TEST(ScorePlan, ReferenceBasedNeedsReference) {
    Harness h(scripted_reply);
    EXPECT_EQ(error_of([&] {
                  score_plan(testsupport::listing1_text(), nullptr, "q", EvalMode::ReferenceBased,
                             PromptStyle::Deconstructed, h.ctx);
              }),
              ErrorKind::MissingReference);
}

TEST(ScorePlan, OutOfRangeScoreIsRetriedThenReported) {
    Harness bad([](const JudgeRequest&) { return std::string("too generous | 99 |"); });
    EXPECT_EQ(error_of([&] {
                  score_plan(testsupport::listing1_text(), nullptr, "q", EvalMode::ReferenceFree,
                             PromptStyle::Deconstructed, bad.ctx);
              }),
              ErrorKind::JudgeFormatError);
    EXPECT_EQ(bad.backend->calls, 3);
}

TEST(ScorePlan, SingleStyleUsesOneCall) {
    Harness h([](const JudgeRequest& r) {
        EXPECT_NE(r.system_prompt.find("seven criteria"), std::string::npos);
        std::string reply;
        for (auto k : kAllMetrics) {
            reply += std::string(single_label(k)) + ": fine | " + (k == MetricKind::QueryAdherence ? "1" : "3") + " |\n";
        }
        return reply;
    });
    const auto card = score_plan(testsupport::listing1_text(), nullptr, "q", EvalMode::ReferenceFree,
                                 PromptStyle::Single, h.ctx);
    EXPECT_EQ(h.backend->calls, 1);
    EXPECT_NEAR(card.total, 15 + 85 * 0.5, 1e-9);
}

TEST(MechanicalFormat, FractionOfCleanSteps) {
    const auto p = parse_plan(R"J({"1": {"query": "T2S([], 'a')", "depends_on": []},
                                  "2": {"query": "LLM('summarize')", "depends_on": [1]}})J");
    EXPECT_DOUBLE_EQ(mechanical_format_fraction(p), 0.5);
    EXPECT_DOUBLE_EQ(mechanical_format_fraction(parse_plan(testsupport::listing1_text())), 1.0);
}

TEST(MetricNames, LookupAcceptsAllSpellings) {
    for (auto k : kAllMetrics) {
        EXPECT_EQ(metric_from_string(short_name(k)), k);
        EXPECT_EQ(metric_from_string(single_label(k)), k);
        EXPECT_EQ(metric_from_string(to_string(k)), k);
    }
    EXPECT_FALSE(metric_from_string("Speed").has_value());
}
