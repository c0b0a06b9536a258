#pragma once

// Reference-based one-shot evaluation and the seven-tier rating.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "planeval/error.hpp"
#include "planeval/judge.hpp"
#include "planeval/metrics.hpp"
#include "planeval/plan.hpp"
#include "planeval/prompts.hpp"

namespace planeval {

enum class RatingTier { ExtremelyBad, VeryBad, Bad, Acceptable, Good, VeryGood, ExtremelyGood };

inline constexpr std::array<RatingTier, 7> kAllTiers = {
    RatingTier::ExtremelyBad, RatingTier::VeryBad,  RatingTier::Bad,          RatingTier::Acceptable,
    RatingTier::Good,         RatingTier::VeryGood, RatingTier::ExtremelyGood,
};

inline std::string_view to_string(RatingTier t) {
    static constexpr std::array<std::string_view, 7> names = {
        "Extremely Bad", "Very Bad", "Bad", "Acceptable", "Good", "Very Good", "Extremely Good"};
    return names[static_cast<std::size_t>(t)];
}

inline std::optional<RatingTier> tier_from_string(std::string_view s) {
    std::string key;
    for (char c : s) {
        if (std::isalpha(static_cast<unsigned char>(c))) key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    for (auto t : kAllTiers) {
        std::string name;
        for (char c : to_string(t)) {
            if (c != ' ') name.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
        if (key == name) return t;
    }
    return std::nullopt;
}

/// Strict thresholds; the small epsilon keeps e.g. (0.8 + 0.9) / 2 at the 0.85 boundary.
inline RatingTier rating_from_f1(double f1, bool json_ok) {
    if (!json_ok) return RatingTier::ExtremelyBad;
    constexpr double eps = 1e-9;
    if (f1 > 0.95 + eps) return RatingTier::ExtremelyGood;
    if (f1 > 0.85 + eps) return RatingTier::VeryGood;
    if (f1 > 0.75 + eps) return RatingTier::Good;
    if (f1 > 0.60 + eps) return RatingTier::Acceptable;
    if (f1 > 0.45 + eps) return RatingTier::Bad;
    if (f1 > 0.30 + eps) return RatingTier::VeryBad;
    return RatingTier::ExtremelyBad;
}

inline double harmonic_f1(double precision, double recall) {
    return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

struct QualityBucketRates {
    double a_plus = 0.0;
    double a = 0.0;
    double b = 0.0;
};

inline QualityBucketRates bucket_rates(const std::vector<RatingTier>& tiers) {
    if (tiers.empty()) throw Error(ErrorKind::EmptyInput, "no ratings");
    std::size_t top = 0, good = 0, acceptable = 0;
    for (auto t : tiers) {
        if (t >= RatingTier::VeryGood) ++top;
        if (t == RatingTier::Good) ++good;
        if (t == RatingTier::Acceptable) ++acceptable;
    }
    const double n = static_cast<double>(tiers.size());
    QualityBucketRates r;
    r.a_plus = 100.0 * static_cast<double>(top) / n;
    r.a = 100.0 * static_cast<double>(top + good) / n;
    r.b = 100.0 * static_cast<double>(top + good + acceptable) / n;
    return r;
}

/// Fields of the judge's JSON reply, fractions in [0,1].
struct OneShotJudgement {
    double precision = 0.0;
    double recall = 0.0;
    std::optional<double> f1;
    bool format_verdict = true;
    std::optional<double> format_fraction;
    double dependencies = 0.0;
    double placeholders = 0.0;
    std::optional<std::string> rating;
    nlohmann::ordered_json rationale = nlohmann::ordered_json::object();
};

struct OneShotResult {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool format_ok = false;
    double format_fraction = 0.0;
    double dependencies_ok_fraction = 0.0;
    double placeholders_ok_fraction = 0.0;
    RatingTier rating = RatingTier::ExtremelyBad;
    nlohmann::ordered_json rationale = nlohmann::ordered_json::object();
    bool judge_called = false;
    std::optional<double> judge_f1;
    std::optional<std::string> judge_rating;
    bool rating_disagreement = false;
};

namespace detail {

/// Accepts fractions, percentages (numbers above 1 or "85%") and numeric strings.
inline std::optional<double> fraction_value(const nlohmann::ordered_json& v) {
    double x = 0.0;
    if (v.is_number()) {
        x = v.get<double>();
    } else if (v.is_string()) {
        auto s = trim(v.get_ref<const std::string&>());
        bool percent = false;
        if (!s.empty() && s.back() == '%') {
            percent = true;
            s.remove_suffix(1);
        }
        auto parsed = parse_real(s);
        if (!parsed) return std::nullopt;
        x = percent ? *parsed / 100.0 : *parsed;
    } else {
        return std::nullopt;
    }
    if (x > 1.0 + 1e-12) x /= 100.0;
    if (x < 0.0 || x > 1.0 + 1e-12) return std::nullopt;
    return std::min(x, 1.0);
}

inline std::optional<bool> truth_value(std::string_view s) {
    std::string key;
    for (char c : s) key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    const auto k = trim(key);
    if (k == "true" || k == "yes" || k == "valid" || k == "correct" || k == "valid json") return true;
    if (k == "false" || k == "no" || k == "invalid" || k == "incorrect" || k == "invalid json") return false;
    return std::nullopt;
}

inline nlohmann::ordered_json extract_json_object(std::string_view text) {
    const auto open = text.find('{');
    const auto close = text.rfind('}');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
        throw Error(ErrorKind::JudgeFormatError, "reply holds no JSON object");
    }
    std::string body(text.substr(open, close - open + 1));
    try {
        return nlohmann::ordered_json::parse(body);
    } catch (const nlohmann::json::exception&) {
    }
    static const std::regex missing_comma(R"(\}(\s*)\"score\")");
    const auto repaired = std::regex_replace(body, missing_comma, "},$1\"score\"");
    try {
        return nlohmann::ordered_json::parse(repaired);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::JudgeFormatError, std::string("reply is not valid JSON: ") + e.what());
    }
}

}  // namespace detail

inline OneShotJudgement parse_oneshot_response(std::string_view text) {
    const auto doc = detail::extract_json_object(text);
    if (!doc.contains("score") || !doc.at("score").is_object()) {
        throw Error(ErrorKind::JudgeFormatError, "reply has no \"score\" object");
    }
    const auto& score = doc.at("score");
    auto fraction = [&](const char* name, bool required) -> std::optional<double> {
        if (!score.contains(name)) {
            if (required) throw Error(ErrorKind::JudgeFormatError, std::string("score lacks \"") + name + "\"");
            return std::nullopt;
        }
        auto v = detail::fraction_value(score.at(name));
        if (!v) throw Error(ErrorKind::JudgeFormatError, std::string("score \"") + name + "\" is not a fraction");
        return v;
    };
    OneShotJudgement j;
    j.precision = *fraction("precision", true);
    j.recall = *fraction("recall", true);
    j.f1 = fraction("f1_score", false);
    j.dependencies = fraction("dependencies", true).value();
    j.placeholders = fraction("placeholders", true).value();
    if (!score.contains("format_correctness")) {
        throw Error(ErrorKind::JudgeFormatError, "score lacks \"format_correctness\"");
    }
    const auto& fmt = score.at("format_correctness");
    auto read_format = [&](const nlohmann::ordered_json& v) {
        if (v.is_boolean()) {
            j.format_verdict = v.get<bool>();
            j.format_fraction = j.format_verdict ? 1.0 : 0.0;
        } else if (v.is_string() && detail::truth_value(v.get<std::string>())) {
            j.format_verdict = *detail::truth_value(v.get<std::string>());
            j.format_fraction = j.format_verdict ? 1.0 : 0.0;
        } else if (auto x = detail::fraction_value(v)) {
            j.format_fraction = *x;
        } else {
            throw Error(ErrorKind::JudgeFormatError, "format_correctness is unreadable");
        }
    };
    if (fmt.is_object()) {
        for (const char* key : {"valid_json", "json_valid", "is_valid_json", "json"}) {
            if (fmt.contains(key)) read_format(fmt.at(key));
        }
        const bool verdict = j.format_verdict;
        for (const char* key : {"fraction", "percentage", "steps", "step_fraction"}) {
            if (fmt.contains(key)) {
                if (auto x = detail::fraction_value(fmt.at(key))) j.format_fraction = *x;
            }
        }
        j.format_verdict = verdict;
    } else {
        read_format(fmt);
    }
    if (score.contains("rating")) {
        const auto& r = score.at("rating");
        j.rating = r.is_string() ? r.get<std::string>() : r.dump();
    }
    if (doc.contains("rationale") && doc.at("rationale").is_object()) j.rationale = doc.at("rationale");
    return j;
}

/// Candidate given as raw text; an unparseable candidate is rated without a judge call.
inline OneShotResult evaluate_oneshot(std::string_view candidate_text, const Plan* reference,
                                      const std::string& query, const JudgeContext& ctx) {
    (void)query;  // the packaged prompt compares plans only
    if (!reference) throw Error(ErrorKind::MissingReference, "one-shot evaluation needs a reference plan");
    require_valid(*reference);
    OneShotResult out;
    const auto candidate = try_parse_plan(candidate_text);
    if (!candidate) return out;
    const auto& lib = ctx.library();
    const std::map<std::string, std::string> slots = {
        {"CANDIDATE_PLAN", to_document(*candidate)},
        {"REFERENCE_PLAN", to_document(*reference)},
        {"TOOL_DESCRIPTIONS", lib.snippet("tool_descriptions")},
    };
    const auto request = ctx.request(lib.templ("oneshot"), slots);
    const ResponseValidator validator = [](const std::string& reply) -> std::optional<std::string> {
        try {
            parse_oneshot_response(reply);
            return std::nullopt;
        } catch (const Error& e) {
            return std::string(e.what());
        }
    };
    const auto reply = rethrow_format_as(ErrorKind::JudgeFormatError, [&] {
        return ctx.judge().invoke(request, validator, ctx.max_format_retries);
    });
    const auto j = parse_oneshot_response(reply);
    out.judge_called = true;
    out.precision = j.precision;
    out.recall = j.recall;
    out.f1 = harmonic_f1(j.precision, j.recall);
    out.format_ok = j.format_verdict;
    out.format_fraction = j.format_fraction.value_or(j.format_verdict ? 1.0 : 0.0);
    out.dependencies_ok_fraction = j.dependencies;
    out.placeholders_ok_fraction = j.placeholders;
    out.rating = rating_from_f1(out.f1, out.format_ok);
    out.rationale = j.rationale;
    out.judge_f1 = j.f1;
    out.judge_rating = j.rating;
    if (j.rating) {
        const auto claimed = tier_from_string(*j.rating);
        out.rating_disagreement = !claimed || *claimed != out.rating;
    }
    return out;
}

inline OneShotResult evaluate_oneshot(const Plan& candidate, const Plan& reference, const std::string& query,
                                      const JudgeContext& ctx) {
    return evaluate_oneshot(to_document(candidate), &reference, query, ctx);
}

struct Similarity {
    double score = 0.0;
    RatingTier tier = RatingTier::ExtremelyBad;
};

/// Mean of the two directional F1 values, gated on both plans passing format.
inline Similarity symmetric_similarity(std::string_view plan_a, std::string_view plan_b, const std::string& query,
                                       const JudgeContext& ctx) {
    const auto a = try_parse_plan(plan_a);
    const auto b = try_parse_plan(plan_b);
    if (!a || !b || !validate(*a).valid || !validate(*b).valid) return {};
    const auto ab = evaluate_oneshot(*a, *b, query, ctx);
    const auto ba = evaluate_oneshot(*b, *a, query, ctx);
    Similarity s;
    s.score = (ab.f1 + ba.f1) / 2.0;
    s.tier = rating_from_f1(s.score, ab.format_ok && ba.format_ok);
    return s;
}

}  // namespace planeval
