#pragma once

// Seven-metric rubric scoring.

#include <array>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "planeval/error.hpp"
#include "planeval/judge.hpp"
#include "planeval/plan.hpp"
#include "planeval/prompts.hpp"

namespace planeval {

enum class MetricKind {
    ToolPromptAlignment,
    Format,
    StepExecutability,
    QueryAdherence,
    Dependencies,
    Redundancy,
    ToolUsageCompleteness,
};

inline constexpr std::array<MetricKind, 7> kAllMetrics = {
    MetricKind::ToolPromptAlignment, MetricKind::Format,     MetricKind::StepExecutability,
    MetricKind::QueryAdherence,      MetricKind::Dependencies, MetricKind::Redundancy,
    MetricKind::ToolUsageCompleteness,
};

/// Column order used by the published summary tables.
inline constexpr std::array<MetricKind, 7> kTableOrder = {
    MetricKind::Format,         MetricKind::ToolPromptAlignment, MetricKind::StepExecutability,
    MetricKind::QueryAdherence, MetricKind::Dependencies,        MetricKind::Redundancy,
    MetricKind::ToolUsageCompleteness,
};

inline std::size_t index_of(MetricKind k) { return static_cast<std::size_t>(k); }

inline bool is_effectiveness(MetricKind k) { return index_of(k) < 4; }

inline std::string_view to_string(MetricKind k) {
    switch (k) {
        case MetricKind::ToolPromptAlignment: return "ToolPromptAlignment";
        case MetricKind::Format: return "Format";
        case MetricKind::StepExecutability: return "StepExecutability";
        case MetricKind::QueryAdherence: return "QueryAdherence";
        case MetricKind::Dependencies: return "Dependencies";
        case MetricKind::Redundancy: return "Redundancy";
        case MetricKind::ToolUsageCompleteness: return "ToolUsageCompleteness";
    }
    return "?";
}

inline std::string_view short_name(MetricKind k) {
    static constexpr std::array<std::string_view, 7> names = {"TPA", "Format", "SE", "QA", "Dep", "Red", "TUC"};
    return names[index_of(k)];
}

inline std::string_view asset_name(MetricKind k) {
    static constexpr std::array<std::string_view, 7> names = {
        "metric_tool_prompt_alignment", "metric_format",     "metric_step_executability",
        "metric_query_adherence",       "metric_dependencies", "metric_redundancy",
        "metric_tool_usage_completeness"};
    return names[index_of(k)];
}

/// Line label in the single-prompt reply.
inline std::string_view single_label(MetricKind k) {
    static constexpr std::array<std::string_view, 7> names = {
        "TOOL_PROMPT_ALIGNMENT", "FORMAT",     "STEP_EXECUTABILITY",     "QUERY_ADHERENCE",
        "DEPENDENCIES",          "REDUNDANCY", "TOOL_USAGE_COMPLETENESS"};
    return names[index_of(k)];
}

inline std::optional<MetricKind> metric_from_string(std::string_view s) {
    for (auto k : kAllMetrics) {
        if (s == to_string(k) || s == short_name(k) || s == single_label(k)) return k;
    }
    return std::nullopt;
}

struct WeightVector {
    std::array<double, 7> weights{};  // points, in kAllMetrics order
    double effectiveness_budget = 70.0;
    double efficiency_budget = 30.0;

    static WeightVector standard() { return {{20, 20, 15, 15, 10, 10, 10}, 70.0, 30.0}; }

    double operator[](MetricKind k) const { return weights[index_of(k)]; }

    double effectiveness_sum() const { return weights[0] + weights[1] + weights[2] + weights[3]; }
    double efficiency_sum() const { return weights[4] + weights[5] + weights[6]; }

    void check(double tolerance = 1e-6) const {
        for (double w : weights) {
            if (w < 0.0 || !std::isfinite(w)) throw Error(ErrorKind::WeightBudgetViolation, "negative weight");
        }
        if (std::abs(effectiveness_sum() - effectiveness_budget) > tolerance ||
            std::abs(efficiency_sum() - efficiency_budget) > tolerance) {
            throw Error(ErrorKind::WeightBudgetViolation,
                        "group sums " + std::to_string(effectiveness_sum()) + "/" + std::to_string(efficiency_sum()) +
                            " do not match budgets " + std::to_string(effectiveness_budget) + "/" +
                            std::to_string(efficiency_budget));
        }
    }
};

struct MetricScore {
    MetricKind metric = MetricKind::Format;
    double raw = 0.0;
    double points = 0.0;
    std::string explanation;
    std::optional<double> judge_score;  // as reported, before normalization
};

struct PlanScorecard {
    std::map<MetricKind, MetricScore> per_metric;
    double total = 0.0;
    bool candidate_parseable = true;
    bool mechanical_format_ok = false;
    double mechanical_format_fraction = 0.0;
    bool format_disagreement = false;
};

enum class EvalMode { ReferenceFree, ReferenceBased };
enum class PromptStyle { Deconstructed, Single };

struct MetricResponse {
    std::string explanation;
    double score = 0.0;
};

namespace detail {

inline std::optional<double> parse_real(std::string_view s) {
    s = trim(s);
    while (!s.empty() && (s.front() == '*' || s.front() == '`')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == '*' || s.back() == '`')) s.remove_suffix(1);
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
    return value;
}

}  // namespace detail

/// Reads `<explanation> | <score> |`, taking the rightmost score field.
inline MetricResponse parse_metric_response(std::string_view text) {
    auto body = detail::trim(text);
    if (body.empty() || body.back() != '|') {
        throw Error(ErrorKind::NoScoreField, "reply does not end with '| <score> |'");
    }
    body.remove_suffix(1);
    const auto bar = body.rfind('|');
    if (bar == std::string_view::npos) throw Error(ErrorKind::NoScoreField, "reply has no '<explanation> |' part");
    const auto field = body.substr(bar + 1);
    const auto value = detail::parse_real(field);
    if (!value) throw Error(ErrorKind::NonNumericScore, "score '" + std::string(detail::trim(field)) + "' is not a number");
    return {std::string(detail::trim(body.substr(0, bar))), *value};
}

/// Error text when `score` is out of range for `kind` on a plan of `steps` steps.
inline std::optional<std::string> score_range_problem(MetricKind kind, double score, std::size_t steps) {
    if (kind == MetricKind::QueryAdherence) {
        if (score == 0.0 || score == 0.5 || score == 1.0) return std::nullopt;
        return "query adherence score must be 0, 0.5 or 1";
    }
    if (score < 0.0 || score > static_cast<double>(steps)) {
        return "score must lie between 0 and the number of steps (" + std::to_string(steps) + ")";
    }
    return std::nullopt;
}

inline double raw_from_score(MetricKind kind, double score, std::size_t steps) {
    return kind == MetricKind::QueryAdherence ? score : score / static_cast<double>(steps);
}

/// Share of steps with no hard violation and no missing-placeholder warning.
inline double mechanical_format_fraction(const Plan& plan) {
    if (plan.empty()) return 0.0;
    const auto report = validate(plan);
    std::set<int> bad;
    for (const auto& v : report.violations) {
        if (!v.step) return 0.0;
        bad.insert(*v.step);
    }
    for (const auto& v : report.warnings) {
        if (v.step) bad.insert(*v.step);
    }
    return 1.0 - static_cast<double>(bad.size()) / static_cast<double>(plan.size());
}

namespace detail {

inline std::map<std::string, std::string> metric_slots(const Plan& candidate, const Plan* reference,
                                                        const std::string& query, bool mask,
                                                        bool include_query, const PromptLibrary& lib) {
    std::map<std::string, std::string> slots = {
        {"PLAN", to_document(candidate, mask)},
        {"REFERENCE_PLAN", reference ? to_document(*reference, mask) : std::string("(not provided)")},
        {"REFERENCE_EXAMPLES", lib.snippet("reference_examples")},
        {"TRIGGER_LISTS", lib.snippet("trigger_lists")},
        {"TOOL_DESCRIPTIONS", lib.snippet("tool_descriptions")},
    };
    if (include_query) slots["QUERY"] = query;
    return slots;
}

}  // namespace detail

inline MetricScore score_metric(const Plan& candidate, const Plan* reference, const std::string& query,
                                MetricKind kind, EvalMode mode, const JudgeContext& ctx,
                                const WeightVector& weights = WeightVector::standard()) {
    if (mode == EvalMode::ReferenceBased && !reference) {
        throw Error(ErrorKind::MissingReference, "reference-based scoring needs a reference plan");
    }
    if (candidate.empty()) throw Error(ErrorKind::EmptyPlan, "cannot score an empty plan");
    const auto& lib = ctx.library();
    const bool qa = kind == MetricKind::QueryAdherence;
    const auto slots = detail::metric_slots(candidate, mode == EvalMode::ReferenceBased ? reference : nullptr,
                                            query, qa, qa, lib);
    const auto request = ctx.request(lib.templ(std::string(asset_name(kind))), slots);
    const std::size_t steps = candidate.size();
    const ResponseValidator validator = [&](const std::string& reply) -> std::optional<std::string> {
        try {
            return score_range_problem(kind, parse_metric_response(reply).score, steps);
        } catch (const Error& e) {
            return std::string(e.what());
        }
    };
    const auto reply = rethrow_format_as(ErrorKind::JudgeFormatError, [&] {
        return ctx.judge().invoke(request, validator, ctx.max_format_retries);
    });
    const auto parsed = parse_metric_response(reply);
    MetricScore out;
    out.metric = kind;
    out.judge_score = parsed.score;
    out.raw = raw_from_score(kind, parsed.score, steps);
    out.points = out.raw * weights[kind];
    out.explanation = parsed.explanation;
    return out;
}

/// Reads the seven `LABEL: <explanation> | <score> |` lines of a single-prompt reply.
inline std::map<MetricKind, MetricResponse> parse_single_response(std::string_view text) {
    std::map<MetricKind, MetricResponse> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        auto line = detail::trim(text.substr(pos, end - pos));
        pos = end + 1;
        while (!line.empty() && (line.front() == '*' || line.front() == '-' || line.front() == ' ')) line.remove_prefix(1);
        const auto colon = line.find(':');
        if (colon == std::string_view::npos) continue;
        auto label = detail::trim(line.substr(0, colon));
        while (!label.empty() && label.back() == '*') label.remove_suffix(1);
        const auto kind = metric_from_string(label);
        if (!kind || out.contains(*kind)) continue;
        out.emplace(*kind, parse_metric_response(line.substr(colon + 1)));
    }
    for (auto k : kAllMetrics) {
        if (!out.contains(k)) throw Error(ErrorKind::MissingMetric, "reply has no " + std::string(single_label(k)) + " line");
    }
    return out;
}

inline double aggregate(const std::map<MetricKind, MetricScore>& per_metric, const WeightVector& weights) {
    weights.check();
    double total = 0.0;
    for (auto k : kAllMetrics) {
        auto it = per_metric.find(k);
        if (it == per_metric.end()) throw Error(ErrorKind::MissingMetric, "no score for " + std::string(to_string(k)));
        total += weights[k] * it->second.raw;
    }
    return total;
}

/// Per metric: mean points over rows / weight * 100.
inline std::map<MetricKind, double> normalized_average(const std::vector<PlanScorecard>& rows,
                                                       const WeightVector& weights) {
    if (rows.empty()) throw Error(ErrorKind::EmptyInput, "no scorecards");
    std::map<MetricKind, double> out;
    for (auto k : kAllMetrics) {
        double sum = 0.0;
        for (const auto& row : rows) {
            auto it = row.per_metric.find(k);
            if (it == row.per_metric.end()) throw Error(ErrorKind::MissingMetric, "row lacks " + std::string(to_string(k)));
            sum += it->second.points;
        }
        out[k] = weights[k] > 0.0 ? sum / static_cast<double>(rows.size()) / weights[k] * 100.0 : 0.0;
    }
    return out;
}

/// Scores raw candidate text. Unparseable candidates score 0 everywhere without judge calls.
inline PlanScorecard score_plan(std::string_view candidate_text, const Plan* reference, const std::string& query,
                                EvalMode mode, PromptStyle style, const JudgeContext& ctx,
                                const WeightVector& weights = WeightVector::standard()) {
    weights.check();
    if (mode == EvalMode::ReferenceBased && !reference) {
        throw Error(ErrorKind::MissingReference, "reference-based scoring needs a reference plan");
    }
    PlanScorecard card;
    const auto candidate = try_parse_plan(candidate_text);
    if (!candidate) {
        card.candidate_parseable = false;
        for (auto k : kAllMetrics) card.per_metric[k] = {k, 0.0, 0.0, "candidate is not parseable", std::nullopt};
        card.total = 0.0;
        return card;
    }
    card.mechanical_format_fraction = mechanical_format_fraction(*candidate);
    card.mechanical_format_ok = validate(*candidate).valid;
    if (style == PromptStyle::Deconstructed) {
        for (auto k : kAllMetrics) card.per_metric[k] = score_metric(*candidate, reference, query, k, mode, ctx, weights);
    } else {
        const auto& lib = ctx.library();
        const auto slots = detail::metric_slots(*candidate, mode == EvalMode::ReferenceBased ? reference : nullptr,
                                                query, false, true, lib);
        const auto request = ctx.request(lib.templ("metric_single"), slots);
        const std::size_t steps = candidate->size();
        const ResponseValidator validator = [&](const std::string& reply) -> std::optional<std::string> {
            try {
                for (const auto& [k, r] : parse_single_response(reply)) {
                    if (auto problem = score_range_problem(k, r.score, steps)) {
                        return std::string(single_label(k)) + ": " + *problem;
                    }
                }
                return std::nullopt;
            } catch (const Error& e) {
                return std::string(e.what());
            }
        };
        const auto reply = rethrow_format_as(ErrorKind::JudgeFormatError, [&] {
            return ctx.judge().invoke(request, validator, ctx.max_format_retries);
        });
        for (const auto& [k, r] : parse_single_response(reply)) {
            const double raw = raw_from_score(k, r.score, steps);
            card.per_metric[k] = {k, raw, raw * weights[k], r.explanation, r.score};
        }
    }
    const bool judge_full = card.per_metric.at(MetricKind::Format).raw >= 1.0 - 1e-12;
    const bool mechanical_full = card.mechanical_format_fraction >= 1.0 - 1e-12;
    card.format_disagreement = judge_full != mechanical_full;
    card.total = aggregate(card.per_metric, weights);
    return card;
}

}  // namespace planeval
