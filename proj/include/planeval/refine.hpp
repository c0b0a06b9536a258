#pragma once

// Step-wise evaluator -> plan optimizer feedback loop producing a lineage.

#include <algorithm>
#include <cctype>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "planeval/error.hpp"
#include "planeval/judge.hpp"
#include "planeval/lineage.hpp"
#include "planeval/plan.hpp"
#include "planeval/prompts.hpp"

namespace planeval {

enum class DiagnosticTag { IncorrectTool, IncorrectPrompt, ComplexPrompt, RepeatedDetail, MultiToolPrompt, NoChange };

inline std::string_view to_string(DiagnosticTag t) {
    switch (t) {
        case DiagnosticTag::IncorrectTool: return "INCORRECT TOOL";
        case DiagnosticTag::IncorrectPrompt: return "INCORRECT PROMPT";
        case DiagnosticTag::ComplexPrompt: return "COMPLEX PROMPT";
        case DiagnosticTag::RepeatedDetail: return "REPEATED DETAIL";
        case DiagnosticTag::MultiToolPrompt: return "MULTI-TOOL PROMPT";
        case DiagnosticTag::NoChange: return "NO CHANGE";
    }
    return "?";
}

/// Case-insensitive; tolerates markdown emphasis, quotes, hyphens and plural forms.
inline std::optional<DiagnosticTag> tag_from_text(std::string_view text) {
    std::string key;
    for (char c : text) {
        if (c == '*' || c == '"' || c == '\'' || c == '`' || c == '.' || c == '<' || c == '>') continue;
        if (c == '-' || c == '_') c = ' ';
        if (c == ' ' && (key.empty() || key.back() == ' ')) continue;
        key.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
    while (!key.empty() && key.back() == ' ') key.pop_back();
    if (key == "INCORRECT TOOL") return DiagnosticTag::IncorrectTool;
    if (key == "INCORRECT PROMPT") return DiagnosticTag::IncorrectPrompt;
    if (key == "COMPLEX PROMPT") return DiagnosticTag::ComplexPrompt;
    if (key == "REPEATED DETAIL" || key == "REPEATED DETAILS") return DiagnosticTag::RepeatedDetail;
    if (key == "MULTI TOOL PROMPT" || key == "MULTITOOL PROMPT") return DiagnosticTag::MultiToolPrompt;
    if (key == "NO CHANGE" || key == "NO CHANGES") return DiagnosticTag::NoChange;
    return std::nullopt;
}

struct Finding {
    std::string rationale;
    DiagnosticTag tag = DiagnosticTag::NoChange;
};

struct StepDiagnosis {
    int step_index = 0;
    std::vector<Finding> findings;

    bool no_change_only() const {
        return std::all_of(findings.begin(), findings.end(),
                           [](const Finding& f) { return f.tag == DiagnosticTag::NoChange; });
    }

    std::vector<DiagnosticTag> tags() const {
        std::vector<DiagnosticTag> out;
        for (const auto& f : findings) out.push_back(f.tag);
        return out;
    }

    /// Evaluator output as handed to the optimizer.
    std::string render() const {
        std::string out = "Step number: " + std::to_string(step_index);
        for (std::size_t i = 0; i < findings.size(); ++i) {
            out += "\n" + std::to_string(i + 1) + ". " + findings[i].rationale + ": " + std::string(to_string(findings[i].tag));
        }
        return out;
    }
};

/// Reads a step number line followed by `N. <reasoning>: <TAG>` findings.
/// `expected_step` (when > 0) must match the header.
inline StepDiagnosis parse_step_diagnosis(std::string_view text, int expected_step = 0) {
    static const std::regex header_re(R"(^[\s*"'<#]*(?:step(?:\s*number)?\s*[:#]?\s*)?(\d+)[\s.:*"'>]*$)",
                                      std::regex::icase);
    static const std::regex item_re(R"(^[\s*"']*(\d+)[.)]\s*(.*)$)");
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        auto line = detail::trim(text.substr(pos, end - pos));
        pos = end + 1;
        if (line.empty() || line == "\"" || line == "```" || line == "...") continue;
        lines.emplace_back(line);
    }
    StepDiagnosis diag;
    std::size_t i = 0;
    std::smatch m;
    if (i >= lines.size() || !std::regex_match(lines[i], m, header_re)) {
        throw Error(ErrorKind::JudgeFormatError, "reply does not start with the step number");
    }
    diag.step_index = std::stoi(m[1].str());
    if (expected_step > 0 && diag.step_index != expected_step) {
        throw Error(ErrorKind::JudgeFormatError, "reply is about step " + std::to_string(diag.step_index) +
                                                     ", expected step " + std::to_string(expected_step));
    }
    ++i;
    std::vector<std::string> chunks;
    for (; i < lines.size(); ++i) {
        if (std::regex_match(lines[i], m, item_re)) {
            chunks.push_back(m[2].str());
        } else if (!chunks.empty()) {
            chunks.back() += " " + lines[i];
        }
    }
    if (chunks.empty()) throw Error(ErrorKind::JudgeFormatError, "reply has no numbered findings");
    bool saw_no_change = false, saw_other = false;
    for (const auto& chunk : chunks) {
        const auto colon = chunk.rfind(':');
        if (colon == std::string::npos) throw Error(ErrorKind::JudgeFormatError, "finding without ': <TAG>': " + chunk);
        const auto tag_text = std::string_view(chunk).substr(colon + 1);
        const auto tag = tag_from_text(tag_text);
        if (!tag) throw Error(ErrorKind::UnknownTag, "unknown tag '" + std::string(detail::trim(tag_text)) + "'");
        (*tag == DiagnosticTag::NoChange ? saw_no_change : saw_other) = true;
        diag.findings.push_back({std::string(detail::trim(std::string_view(chunk).substr(0, colon))), *tag});
    }
    if (saw_no_change && saw_other) {
        throw Error(ErrorKind::UnknownTag, "NO CHANGE cannot be combined with other tags");
    }
    return diag;
}

namespace detail {

inline std::string dependency_block(const Plan& plan, const Step& step) {
    std::string out;
    for (int d : step.depends_on) {
        if (d < 1 || d > static_cast<int>(plan.size())) continue;
        if (!out.empty()) out += "\n";
        out += step_entry(plan.step(d));
    }
    return out.empty() ? "(none)" : out;
}

/// Reparses the last reply of an exhausted retry loop to surface its specific error.
template <typename Parse>
[[noreturn]] void rethrow_specific(const Error& e, Parse&& parse) {
    parse(e.detail());
    throw Error(ErrorKind::JudgeFormatError, e.what(), e.detail());
}

}  // namespace detail

inline StepDiagnosis stepwise_evaluate(const Plan& plan, int i, const JudgeContext& ctx) {
    const auto& step = plan.step(i);
    const auto& lib = ctx.library();
    const std::map<std::string, std::string> slots = {
        {"STEP_NUMBER", std::to_string(i)},
        {"STEP", detail::step_entry(step)},
        {"DEPENDENT_STEPS", detail::dependency_block(plan, step)},
        {"PLAN", to_document(plan)},
        {"TOOL_DESCRIPTIONS", lib.snippet("tool_descriptions")},
        {"REFERENCE_EXAMPLES", lib.snippet("reference_examples")},
    };
    const auto request = ctx.request(lib.templ("step_evaluator"), slots);
    const ResponseValidator validator = [i](const std::string& reply) -> std::optional<std::string> {
        try {
            parse_step_diagnosis(reply, i);
            return std::nullopt;
        } catch (const Error& e) {
            return std::string(e.what());
        }
    };
    try {
        return parse_step_diagnosis(ctx.judge().invoke(request, validator, ctx.max_format_retries), i);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::FormatUnrecoverable) throw;
        detail::rethrow_specific(e, [i](const std::string& last) { parse_step_diagnosis(last, i); });
    }
}

struct OptimizerEdit {
    std::string change0;
    std::string change1;
    Plan new_plan;
};

/// Reads the "CHANGE 0", "CHANGE 1" and "NEW PLAN STARTS" sections; the plan
/// must parse and validate.
inline OptimizerEdit parse_optimizer_response(std::string_view text) {
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    const auto c0 = lower.find("change 0");
    const auto c1 = lower.find("change 1", c0 == std::string::npos ? 0 : c0);
    const auto np = lower.rfind("new plan starts");
    if (c0 == std::string::npos || c1 == std::string::npos || np == std::string::npos || !(c0 < c1 && c1 < np)) {
        throw Error(ErrorKind::JudgeFormatError, "reply lacks CHANGE 0 / CHANGE 1 / NEW PLAN STARTS sections");
    }
    auto section = [&](std::size_t from, std::size_t marker_len, std::size_t to) {
        auto s = detail::trim(text.substr(from + marker_len, to - from - marker_len));
        while (!s.empty() && (s.front() == '"' || s.front() == ':' || s.front() == '*')) s = detail::trim(s.substr(1));
        while (!s.empty() && (s.back() == '"' || s.back() == '*')) s = detail::trim(s.substr(0, s.size() - 1));
        return std::string(s);
    };
    OptimizerEdit edit;
    edit.change0 = section(c0, 8, c1);
    edit.change1 = section(c1, 8, np);
    const auto rest = text.substr(np + 15);
    const auto open = rest.find('{');
    const auto close = rest.rfind('}');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
        throw Error(ErrorKind::InvalidRevisedPlan, "no plan after NEW PLAN STARTS");
    }
    try {
        edit.new_plan = parse_plan(rest.substr(open, close - open + 1));
        require_valid(edit.new_plan);
    } catch (const Error& e) {
        throw Error(ErrorKind::InvalidRevisedPlan, e.what());
    }
    return edit;
}

inline OptimizerEdit optimize_step(const Plan& plan, int i, const StepDiagnosis& diagnosis, const std::string& query,
                                   const JudgeContext& ctx) {
    (void)plan.step(i);
    const auto& lib = ctx.library();
    const std::map<std::string, std::string> slots = {
        {"QUERY", query},
        {"PLAN", to_document(plan)},
        {"STEP_EVALUATOR_OUTPUT", diagnosis.render()},
        {"TOOL_DESCRIPTIONS", lib.snippet("tool_descriptions")},
        {"STEP_OPTIMIZER_ERROR_CATEGORIES_DESCRIBED", lib.snippet("optimizer_error_categories")},
    };
    const auto request = ctx.request(lib.templ("plan_optimizer"), slots);
    const ResponseValidator validator = [](const std::string& reply) -> std::optional<std::string> {
        try {
            parse_optimizer_response(reply);
            return std::nullopt;
        } catch (const Error& e) {
            return std::string(e.what());
        }
    };
    try {
        return parse_optimizer_response(ctx.judge().invoke(request, validator, ctx.max_format_retries));
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::FormatUnrecoverable) throw;
        detail::rethrow_specific(e, [](const std::string& last) { parse_optimizer_response(last); });
    }
}

struct LoopConfig {
    int max_passes = 4;
    /// Guard against optimizers that keep changing the plan length forever.
    int max_visits_per_pass = 100;
};

enum class StopReason { NoChangePass, MaxPasses, Aborted };

inline std::string_view to_string(StopReason r) {
    switch (r) {
        case StopReason::NoChangePass: return "NoChangePass";
        case StopReason::MaxPasses: return "MaxPasses";
        case StopReason::Aborted: return "Aborted";
    }
    return "?";
}

struct LoopEvent {
    int pass = 0;   // 1-based
    int index = 0;  // step evaluated
    std::vector<DiagnosticTag> tags;
    bool appended = false;
    bool length_changed = false;
    std::string note;
};

struct LoopTrace {
    PlanLineage lineage;
    std::vector<std::size_t> pass_boundaries;
    StopReason stop_reason = StopReason::NoChangePass;
    std::vector<LoopEvent> events;
    std::string error;  // set when aborted

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json doc;
        doc["query_id"] = lineage.query_id();
        auto plans = nlohmann::ordered_json::array();
        for (const auto& p : lineage.plans()) plans.push_back(plan_to_json(p));
        doc["lineage"] = std::move(plans);
        doc["pass_boundaries"] = pass_boundaries;
        doc["stop_reason"] = std::string(to_string(stop_reason));
        auto events_json = nlohmann::ordered_json::array();
        for (const auto& e : events) {
            nlohmann::ordered_json ev;
            ev["pass"] = e.pass;
            ev["index"] = e.index;
            auto tags = nlohmann::ordered_json::array();
            for (auto t : e.tags) tags.push_back(std::string(to_string(t)));
            ev["tags"] = std::move(tags);
            ev["appended"] = e.appended;
            ev["length_changed"] = e.length_changed;
            if (!e.note.empty()) ev["note"] = e.note;
            events_json.push_back(std::move(ev));
        }
        doc["events"] = std::move(events_json);
        if (!error.empty()) doc["error"] = error;
        return doc;
    }
};

/// Judge failures end the loop early with stop_reason Aborted; the partial trace is kept.
inline LoopTrace run_loop(const Plan& initial, const std::string& query, const JudgeContext& evaluator,
                          const JudgeContext& optimizer, const LoopConfig& config = {},
                          const std::string& query_id = "") {
    if (config.max_passes < 1) throw Error(ErrorKind::BadInput, "max_passes must be >= 1");
    require_valid(initial);
    LoopTrace trace{PlanLineage(query_id, initial), {}, StopReason::NoChangePass, {}, {}};
    Plan plan = initial;
    std::string plan_bytes = to_document(plan);
    bool changed = true;
    int pass = 0;
    try {
        while (changed && pass < config.max_passes) {
            changed = false;
            int i = 1;
            int length = static_cast<int>(plan.size());
            trace.pass_boundaries.push_back(0);
            int visits = 0;
            while (i <= length) {
                if (++visits > config.max_visits_per_pass) {
                    trace.events.push_back({pass + 1, i, {}, false, false, "visit budget exhausted"});
                    break;
                }
                const auto diagnosis = stepwise_evaluate(plan, i, evaluator);
                LoopEvent event{pass + 1, i, diagnosis.tags(), false, false, {}};
                if (diagnosis.no_change_only()) {
                    trace.events.push_back(std::move(event));
                    ++i;
                    continue;
                }
                std::optional<Plan> revised;
                try {
                    revised = optimize_step(plan, i, diagnosis, query, optimizer).new_plan;
                } catch (const Error& e) {
                    if (e.kind() != ErrorKind::InvalidRevisedPlan) throw;
                    event.note = std::string("revision discarded: ") + e.what();
                }
                if (revised && to_document(*revised) != plan_bytes) {
                    plan = std::move(*revised);
                    plan_bytes = to_document(plan);
                    trace.lineage.append_if_changed(plan);
                    ++trace.pass_boundaries.back();
                    event.appended = true;
                    changed = true;
                    if (static_cast<int>(plan.size()) == length) {
                        ++i;
                    } else {
                        event.length_changed = true;
                        length = static_cast<int>(plan.size());
                        i = std::min(i, length);
                    }
                } else {
                    ++i;
                }
                trace.events.push_back(std::move(event));
            }
            ++pass;
        }
        trace.stop_reason = changed ? StopReason::MaxPasses : StopReason::NoChangePass;
    } catch (const Error& e) {
        trace.stop_reason = StopReason::Aborted;
        trace.error = e.what();
    }
    return trace;
}

}  // namespace planeval
