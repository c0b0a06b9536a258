#pragma once

// Plan documents: DAGs of tool-invocation steps.
//
// A plan document is a JSON-like object keyed by step index. Each step holds a
// tool call ("query" or "step") and a "depends_on" list:
//
//   {
//     "1": {"query": "T2S([], 'Fetch interaction_ids of unresolved calls')", "depends_on": []},
//     "2": {"query": "RAG((1), 'Fetch calls where ...')", "depends_on": [1]}
//   }
//
// Input is accepted leniently (unquoted keys, bare tool calls, single or
// double quoted prompts, trailing commas, '#' comment and ``` fence lines
// around the object). Output is always the canonical form above.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "planeval/error.hpp"

namespace planeval {

enum class ToolKind { T2S, RAG, LLM };

inline std::string_view to_string(ToolKind tool) {
    switch (tool) {
        case ToolKind::T2S: return "T2S";
        case ToolKind::RAG: return "RAG";
        case ToolKind::LLM: return "LLM";
    }
    return "?";
}

inline std::optional<ToolKind> tool_from_string(std::string_view name) {
    if (name == "T2S") return ToolKind::T2S;
    if (name == "RAG") return ToolKind::RAG;
    if (name == "LLM") return ToolKind::LLM;
    return std::nullopt;
}

struct Placeholder {
    enum class Kind { StepOutput, OriginalQuery, ToolName, SubQuery };

    Kind kind = Kind::StepOutput;
    int step = 0;  // 0 for OriginalQuery

    static Placeholder output(int k) { return {Kind::StepOutput, k}; }
    static Placeholder query() { return {Kind::OriginalQuery, 0}; }
    static Placeholder tool(int k) { return {Kind::ToolName, k}; }
    static Placeholder sub_query(int k) { return {Kind::SubQuery, k}; }

    bool operator==(const Placeholder&) const = default;
};

struct Step {
    int index = 0;
    ToolKind tool = ToolKind::LLM;
    std::vector<int> arg_refs;    // positional placeholders outside the prompt (T2S/RAG only)
    std::string prompt;
    std::vector<int> depends_on;  // sorted, unique

    bool operator==(const Step&) const = default;
};

class Plan {
public:
    Plan() = default;

    /// Steps must carry indices 1..n (any order); depends_on is normalized to a sorted set.
    explicit Plan(std::vector<Step> steps) : steps_(std::move(steps)) {
        std::sort(steps_.begin(), steps_.end(),
                  [](const Step& a, const Step& b) { return a.index < b.index; });
        for (std::size_t i = 0; i < steps_.size(); ++i) {
            if (steps_[i].index != static_cast<int>(i) + 1) {
                throw Error(ErrorKind::BadStepKey,
                            "step indices must be contiguous from 1, found " +
                                std::to_string(steps_[i].index) + " at position " +
                                std::to_string(i + 1));
            }
            auto& deps = steps_[i].depends_on;
            std::sort(deps.begin(), deps.end());
            deps.erase(std::unique(deps.begin(), deps.end()), deps.end());
            if (steps_[i].tool == ToolKind::LLM && !steps_[i].arg_refs.empty()) {
                throw Error(ErrorKind::MalformedToolCall, "LLM steps take no positional arguments");
            }
        }
    }

    std::size_t size() const noexcept { return steps_.size(); }
    bool empty() const noexcept { return steps_.empty(); }
    const std::vector<Step>& steps() const noexcept { return steps_; }

    const Step& step(int index) const {
        if (index < 1 || index > static_cast<int>(steps_.size())) {
            throw Error(ErrorKind::BadInput, "no step " + std::to_string(index));
        }
        return steps_[static_cast<std::size_t>(index - 1)];
    }

    bool operator==(const Plan&) const = default;

private:
    std::vector<Step> steps_;
};

// ---------------------------------------------------------------------------
// Placeholders

/// Recognizes "(k)", "(query)", "(tool k)" and "(sub-query k)" in textual order.
inline std::vector<Placeholder> extract_placeholders(std::string_view prompt) {
    std::vector<Placeholder> out;
    auto read_index = [](std::string_view s) -> std::optional<int> {
        if (s.empty() || s.size() > 6) return std::nullopt;
        for (char c : s) {
            if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
        }
        int value = 0;
        std::from_chars(s.data(), s.data() + s.size(), value);
        if (value < 1) return std::nullopt;
        return value;
    };
    std::size_t pos = 0;
    while ((pos = prompt.find('(', pos)) != std::string_view::npos) {
        const auto close = prompt.find_first_of("()", pos + 1);
        if (close == std::string_view::npos) break;
        if (prompt[close] == '(') {
            pos = close;
            continue;
        }
        const auto body = prompt.substr(pos + 1, close - pos - 1);
        if (body == "query") {
            out.push_back(Placeholder::query());
        } else if (auto k = read_index(body)) {
            out.push_back(Placeholder::output(*k));
        } else if (body.starts_with("tool ")) {
            if (auto k = read_index(body.substr(5))) out.push_back(Placeholder::tool(*k));
        } else if (body.starts_with("sub-query ")) {
            if (auto k = read_index(body.substr(10))) out.push_back(Placeholder::sub_query(*k));
        }
        pos = close + 1;
    }
    return out;
}

namespace detail {

inline void append_utf8(std::string& out, std::uint32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

inline std::string json_escape(std::string_view s) {
    std::string out;
    out.reserve(s.size() + 2);
    for (char ch : s) {
        const auto c = static_cast<unsigned char>(ch);
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            case '\b': out += "\\b"; break;
            case '\f': out += "\\f"; break;
            default:
                if (c < 0x20) {
                    static constexpr char hex[] = "0123456789abcdef";
                    out += "\\u00";
                    out.push_back(hex[c >> 4]);
                    out.push_back(hex[c & 0xF]);
                } else {
                    out.push_back(ch);
                }
        }
    }
    return out;
}

inline std::string escape_prompt(std::string_view prompt) {
    std::string out;
    out.reserve(prompt.size());
    for (char c : prompt) {
        if (c == '\'' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

inline std::string unescape_prompt(std::string_view raw) {
    std::string out;
    out.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] == '\\' && i + 1 < raw.size() &&
            (raw[i + 1] == '\'' || raw[i + 1] == '"' || raw[i + 1] == '\\')) {
            out.push_back(raw[++i]);
        } else {
            out.push_back(raw[i]);
        }
    }
    return out;
}

inline std::string tool_call_text(const Step& step, bool mask_tool = false) {
    std::string out = mask_tool ? std::string("TOOL") : std::string(to_string(step.tool));
    out.push_back('(');
    if (step.tool != ToolKind::LLM) {
        if (step.arg_refs.empty()) {
            out += "[]";
        } else {
            for (std::size_t i = 0; i < step.arg_refs.size(); ++i) {
                if (i) out += ", ";
                out += "(" + std::to_string(step.arg_refs[i]) + ")";
            }
        }
        out += ", ";
    }
    out += "'" + escape_prompt(step.prompt) + "')";
    return out;
}

inline std::string int_list(const std::vector<int>& xs) {
    std::string out = "[";
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(xs[i]);
    }
    return out + "]";
}

/// One canonical `"k": {...}` entry without indentation or trailing comma.
inline std::string step_entry(const Step& step, bool mask_tool = false) {
    return "\"" + std::to_string(step.index) + "\": {\"query\": \"" +
           json_escape(tool_call_text(step, mask_tool)) +
           "\", \"depends_on\": " + int_list(step.depends_on) + "}";
}

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

/// Parses the arglist and prompt of a tool call whose text starts right after
/// the opening parenthesis. `full_string` selects how the prompt ends: in a
/// standalone string the closing quote is the last one before the final ')';
/// inline in a document it is the first unescaped quote followed by ')'.
/// Returns the position just past the closing ')'.
inline std::size_t parse_call_body(std::string_view text, std::size_t pos, ToolKind tool,
                                   bool full_string, Step& step) {
    auto fail = [&](const std::string& what) -> Error {
        return Error(ErrorKind::MalformedToolCall,
                     what + " in tool call near offset " + std::to_string(pos));
    };
    auto skip_ws = [&] {
        while (pos < text.size() && is_space(text[pos])) ++pos;
    };
    skip_ws();
    if (tool != ToolKind::LLM) {
        if (pos < text.size() && text[pos] == '[') {
            ++pos;
            skip_ws();
            if (pos >= text.size() || text[pos] != ']') throw fail("expected []");
            ++pos;
        } else {
            bool any = false;
            while (pos < text.size() && text[pos] == '(') {
                const auto close = text.find(')', pos);
                if (close == std::string_view::npos) throw fail("unterminated placeholder");
                const auto body = trim(text.substr(pos + 1, close - pos - 1));
                int k = 0;
                const auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), k);
                if (ec != std::errc{} || ptr != body.data() + body.size() || body.empty() || k < 1) {
                    throw fail("bad placeholder argument '(" + std::string(body) + ")'");
                }
                step.arg_refs.push_back(k);
                any = true;
                pos = close + 1;
                skip_ws();
                if (pos < text.size() && text[pos] == ',') {
                    const auto save = pos;
                    ++pos;
                    skip_ws();
                    if (pos < text.size() && text[pos] == '(') continue;
                    pos = save;
                }
                break;
            }
            if (!any) throw fail("expected [] or (k) arguments");
        }
        skip_ws();
        if (pos >= text.size() || text[pos] != ',') throw fail("expected ',' before prompt");
        ++pos;
        skip_ws();
    }
    if (pos >= text.size() || (text[pos] != '\'' && text[pos] != '"')) throw fail("expected quoted prompt");
    const char quote = text[pos++];
    const std::size_t start = pos;
    std::size_t end = std::string_view::npos;
    if (full_string) {
        auto close = text.size();
        while (close > 0 && is_space(text[close - 1])) --close;
        if (close == 0 || text[close - 1] != ')') throw fail("expected ')' at end");
        --close;
        while (close > start && is_space(text[close - 1])) --close;
        if (close <= start || text[close - 1] != quote) throw fail("unterminated prompt");
        end = close - 1;
        pos = text.size();
    } else {
        for (std::size_t i = start; i < text.size(); ++i) {
            if (text[i] == '\\') {
                ++i;
                continue;
            }
            if (text[i] == quote) {
                std::size_t j = i + 1;
                while (j < text.size() && is_space(text[j])) ++j;
                if (j < text.size() && text[j] == ')') {
                    end = i;
                    pos = j + 1;
                    break;
                }
            }
        }
        if (end == std::string_view::npos) throw fail("unterminated prompt");
    }
    step.prompt = unescape_prompt(text.substr(start, end - start));
    return pos;
}

inline std::size_t parse_tool_head(std::string_view text, std::size_t pos, Step& step) {
    const std::size_t start = pos;
    while (pos < text.size() &&
           (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_' || text[pos] == '-')) {
        ++pos;
    }
    const auto name = text.substr(start, pos - start);
    while (pos < text.size() && is_space(text[pos])) ++pos;
    if (name.empty() || pos >= text.size() || text[pos] != '(') {
        throw Error(ErrorKind::MalformedToolCall, "expected TOOL(...) but found '" +
                                                      std::string(text.substr(start, 40)) + "'");
    }
    const auto tool = tool_from_string(name);
    if (!tool) throw Error(ErrorKind::UnknownTool, "unknown tool '" + std::string(name) + "'");
    step.tool = *tool;
    return pos + 1;
}

/// Parses a complete tool-call string such as "RAG((1), 'prompt')".
inline void parse_tool_call_string(std::string_view text, Step& step) {
    text = trim(text);
    const auto pos = parse_tool_head(text, 0, step);
    parse_call_body(text, pos, step.tool, /*full_string=*/true, step);
}

class DocumentParser {
public:
    explicit DocumentParser(std::string_view text) : text_(text) {}

    Plan parse() {
        skip_preamble();
        expect('{', "plan document must be an object");
        std::map<int, Step> steps;
        skip_ws();
        if (peek() == '}') {
            ++pos_;
        } else {
            while (true) {
                const int key = parse_key();
                skip_ws();
                expect(':', "expected ':' after step key");
                Step step = parse_step_object(key);
                if (!steps.emplace(key, std::move(step)).second) {
                    throw Error(ErrorKind::BadStepKey, "duplicate step key " + std::to_string(key));
                }
                skip_ws();
                if (peek() == ',') {
                    ++pos_;
                    skip_ws();
                    if (peek() == '}') {
                        ++pos_;
                        break;
                    }
                    continue;
                }
                expect('}', "expected ',' or '}' after step");
                break;
            }
        }
        skip_postamble();
        if (steps.empty()) throw Error(ErrorKind::EmptyPlan, "plan has no steps");
        int expected = 1;
        std::vector<Step> ordered;
        ordered.reserve(steps.size());
        for (auto& [key, step] : steps) {
            if (key != expected) {
                throw Error(ErrorKind::BadStepKey,
                            "step keys must be contiguous from 1; missing " + std::to_string(expected));
            }
            ++expected;
            ordered.push_back(std::move(step));
        }
        return Plan(std::move(ordered));
    }

private:
    char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

    void skip_ws() {
        while (pos_ < text_.size() && is_space(text_[pos_])) ++pos_;
    }

    Error broken(const std::string& what) const {
        return Error(ErrorKind::NotParseable, what + " at offset " + std::to_string(pos_));
    }

    void expect(char c, const char* what) {
        skip_ws();
        if (peek() != c) throw broken(what);
        ++pos_;
    }

    void skip_line() {
        while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
    }

    void skip_preamble() {
        while (true) {
            skip_ws();
            if (peek() == '#' || text_.substr(pos_).starts_with("```")) {
                skip_line();
                continue;
            }
            break;
        }
    }

    void skip_postamble() {
        while (true) {
            skip_ws();
            if (pos_ >= text_.size()) return;
            if (text_.substr(pos_).starts_with("```")) {
                skip_line();
                continue;
            }
            throw broken("trailing content after plan");
        }
    }

    int to_index(std::string_view digits, bool allow_sign) const {
        digits = trim(digits);
        int value = 0;
        const char* first = digits.data();
        if (!allow_sign && !digits.empty() && digits.front() == '-') {
            throw Error(ErrorKind::BadStepKey, "negative step key");
        }
        const auto [ptr, ec] = std::from_chars(first, digits.data() + digits.size(), value);
        if (digits.empty() || ec != std::errc{} || ptr != digits.data() + digits.size()) {
            throw Error(ErrorKind::BadStepKey, "non-integer step key '" + std::string(digits) + "'");
        }
        return value;
    }

    int parse_key() {
        skip_ws();
        const char c = peek();
        if (c == '"' || c == '\'') {
            ++pos_;
            const auto close = text_.find(c, pos_);
            if (close == std::string_view::npos) throw broken("unterminated key");
            const auto body = text_.substr(pos_, close - pos_);
            pos_ = close + 1;
            return to_index(body, false);
        }
        const auto start = pos_;
        while (pos_ < text_.size() && !is_space(text_[pos_]) && text_[pos_] != ':') ++pos_;
        if (pos_ == start) throw broken("expected step key");
        return to_index(text_.substr(start, pos_ - start), false);
    }

    std::string parse_string() {
        const char quote = text_[pos_++];
        std::string out;
        while (pos_ < text_.size()) {
            const char c = text_[pos_++];
            if (c == quote) return out;
            if (c != '\\') {
                out.push_back(c);
                continue;
            }
            if (pos_ >= text_.size()) break;
            const char e = text_[pos_++];
            switch (e) {
                case '"': out.push_back('"'); break;
                case '\'': out.push_back('\''); break;
                case '\\': out.push_back('\\'); break;
                case '/': out.push_back('/'); break;
                case 'b': out.push_back('\b'); break;
                case 'f': out.push_back('\f'); break;
                case 'n': out.push_back('\n'); break;
                case 'r': out.push_back('\r'); break;
                case 't': out.push_back('\t'); break;
                case 'u': {
                    auto hex4 = [&]() -> std::uint32_t {
                        if (pos_ + 4 > text_.size()) throw broken("bad \\u escape");
                        std::uint32_t v = 0;
                        const auto [ptr, ec] =
                            std::from_chars(text_.data() + pos_, text_.data() + pos_ + 4, v, 16);
                        if (ec != std::errc{} || ptr != text_.data() + pos_ + 4) throw broken("bad \\u escape");
                        pos_ += 4;
                        return v;
                    };
                    std::uint32_t cp = hex4();
                    if (cp >= 0xD800 && cp < 0xDC00 && text_.substr(pos_).starts_with("\\u")) {
                        pos_ += 2;
                        const std::uint32_t lo = hex4();
                        cp = 0x10000 + ((cp - 0xD800) << 10) + (lo - 0xDC00);
                    }
                    append_utf8(out, cp);
                    break;
                }
                default:
                    out.push_back('\\');
                    out.push_back(e);
            }
        }
        throw broken("unterminated string");
    }

    std::string parse_field_name() {
        skip_ws();
        const char c = peek();
        if (c == '"' || c == '\'') return parse_string();
        const auto start = pos_;
        while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
                                       text_[pos_] == '_' || text_[pos_] == '/')) {
            ++pos_;
        }
        if (pos_ == start) throw broken("expected field name");
        return std::string(text_.substr(start, pos_ - start));
    }

    void skip_value() {
        skip_ws();
        const char c = peek();
        if (c == '"' || c == '\'') {
            parse_string();
            return;
        }
        if (c == '{' || c == '[') {
            int depth = 0;
            while (pos_ < text_.size()) {
                const char d = text_[pos_];
                if (d == '"' || d == '\'') {
                    parse_string();
                    continue;
                }
                ++pos_;
                if (d == '{' || d == '[') ++depth;
                if (d == '}' || d == ']') {
                    if (--depth == 0) return;
                }
            }
            throw broken("unterminated value");
        }
        const auto start = pos_;
        while (pos_ < text_.size() && text_[pos_] != ',' && text_[pos_] != '}' && !is_space(text_[pos_])) ++pos_;
        if (pos_ == start) throw broken("expected value");
    }

    std::vector<int> parse_int_array() {
        expect('[', "depends_on must be an array");
        std::vector<int> out;
        skip_ws();
        if (peek() == ']') {
            ++pos_;
            return out;
        }
        while (true) {
            skip_ws();
            std::string_view token;
            if (peek() == '"' || peek() == '\'') {
                const char q = text_[pos_++];
                const auto close = text_.find(q, pos_);
                if (close == std::string_view::npos) throw broken("unterminated string");
                token = text_.substr(pos_, close - pos_);
                pos_ = close + 1;
            } else {
                const auto start = pos_;
                while (pos_ < text_.size() && text_[pos_] != ',' && text_[pos_] != ']' && !is_space(text_[pos_])) ++pos_;
                token = text_.substr(start, pos_ - start);
            }
            token = trim(token);
            int value = 0;
            const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
            if (token.empty() || ec != std::errc{} || ptr != token.data() + token.size()) {
                throw broken("non-integer dependency '" + std::string(token) + "'");
            }
            out.push_back(value);
            skip_ws();
            if (peek() == ',') {
                ++pos_;
                skip_ws();
                if (peek() == ']') {
                    ++pos_;
                    return out;
                }
                continue;
            }
            expect(']', "expected ',' or ']' in depends_on");
            return out;
        }
    }

    Step parse_step_object(int key) {
        expect('{', "step value must be an object");
        Step step;
        step.index = key;
        bool have_call = false;
        bool have_deps = false;
        skip_ws();
        if (peek() == '}') {
            ++pos_;
        } else {
            while (true) {
                const auto name = parse_field_name();
                expect(':', "expected ':' after field name");
                skip_ws();
                if (name == "step" || name == "query" || name == "step/query") {
                    if (have_call) throw broken("step " + std::to_string(key) + " has two tool calls");
                    have_call = true;
                    const char c = peek();
                    if (c == '"' || c == '\'') {
                        parse_tool_call_string(parse_string(), step);
                    } else {
                        pos_ = parse_tool_head(text_, pos_, step);
                        pos_ = parse_call_body(text_, pos_, step.tool, false, step);
                    }
                } else if (name == "depends_on") {
                    if (have_deps) throw broken("step " + std::to_string(key) + " repeats depends_on");
                    have_deps = true;
                    step.depends_on = parse_int_array();
                } else {
                    skip_value();
                }
                skip_ws();
                if (peek() == ',') {
                    ++pos_;
                    skip_ws();
                    if (peek() == '}') {
                        ++pos_;
                        break;
                    }
                    continue;
                }
                expect('}', "expected ',' or '}' in step object");
                break;
            }
        }
        if (!have_call) {
            throw Error(ErrorKind::MissingField, "step " + std::to_string(key) + " has neither \"step\" nor \"query\"");
        }
        if (!have_deps) {
            throw Error(ErrorKind::MissingField, "step " + std::to_string(key) + " has no \"depends_on\"");
        }
        return step;
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

}  // namespace detail

/// Throws planeval::Error with NotParseable, UnknownTool, BadStepKey,
/// MissingField, MalformedToolCall or EmptyPlan.
inline Plan parse_plan(std::string_view text) {
    return detail::DocumentParser(text).parse();
}

inline std::optional<Plan> try_parse_plan(std::string_view text) {
    try {
        return parse_plan(text);
    } catch (const Error&) {
        return std::nullopt;
    }
}

/// Serializes any plan in canonical layout, valid or not. `mask_tools`
/// replaces every tool name with the literal TOOL.
inline std::string to_document(const Plan& plan, bool mask_tools = false) {
    std::string out = "{\n";
    for (std::size_t i = 0; i < plan.size(); ++i) {
        out += "  " + detail::step_entry(plan.steps()[i], mask_tools);
        out += (i + 1 < plan.size()) ? ",\n" : "\n";
    }
    return out + "}";
}

// ---------------------------------------------------------------------------
// Validation

enum class ViolationKind {
    EmptyPlan,
    ForwardReference,
    SelfReference,
    DependencyOutOfRange,
    ArgNotInDependencies,
    PlaceholderNotInDependencies,
    MissingPlaceholder,
    Cycle,
};

inline std::string_view to_string(ViolationKind kind) {
    switch (kind) {
        case ViolationKind::EmptyPlan: return "EmptyPlan";
        case ViolationKind::ForwardReference: return "ForwardReference";
        case ViolationKind::SelfReference: return "SelfReference";
        case ViolationKind::DependencyOutOfRange: return "DependencyOutOfRange";
        case ViolationKind::ArgNotInDependencies: return "ArgNotInDependencies";
        case ViolationKind::PlaceholderNotInDependencies: return "PlaceholderNotInDependencies";
        case ViolationKind::MissingPlaceholder: return "MissingPlaceholder";
        case ViolationKind::Cycle: return "Cycle";
    }
    return "?";
}

struct Violation {
    std::optional<int> step;  // nullopt for plan-level findings
    ViolationKind kind;
    std::string message;
};

/// `violations` are hard errors; `warnings` (dependency without placeholder)
/// do not affect `valid`.
struct ValidationReport {
    bool valid = true;
    std::vector<Violation> violations;
    std::vector<Violation> warnings;
};

inline ValidationReport validate(const Plan& plan) {
    ValidationReport report;
    const int n = static_cast<int>(plan.size());
    if (n == 0) {
        report.violations.push_back({std::nullopt, ViolationKind::EmptyPlan, "plan has no steps"});
    }
    for (const auto& step : plan.steps()) {
        const int k = step.index;
        const std::set<int> deps(step.depends_on.begin(), step.depends_on.end());
        for (int d : step.depends_on) {
            if (d == k) {
                report.violations.push_back({k, ViolationKind::SelfReference, "step depends on itself"});
            } else if (d < 1) {
                report.violations.push_back(
                    {k, ViolationKind::DependencyOutOfRange, "dependency " + std::to_string(d) + " is not a step"});
            } else if (d > k) {
                report.violations.push_back(
                    {k, ViolationKind::ForwardReference,
                     "depends on later step " + std::to_string(d)});
            }
        }
        std::set<int> referenced;
        for (int a : step.arg_refs) {
            referenced.insert(a);
            if (!deps.contains(a)) {
                report.violations.push_back({k, ViolationKind::ArgNotInDependencies,
                                             "argument (" + std::to_string(a) + ") missing from depends_on"});
            }
        }
        for (const auto& ph : extract_placeholders(step.prompt)) {
            if (ph.kind == Placeholder::Kind::OriginalQuery) continue;
            referenced.insert(ph.step);
            if (!deps.contains(ph.step)) {
                report.violations.push_back({k, ViolationKind::PlaceholderNotInDependencies,
                                             "placeholder for step " + std::to_string(ph.step) +
                                                 " missing from depends_on"});
            }
        }
        for (int d : step.depends_on) {
            if (!referenced.contains(d)) {
                report.warnings.push_back({k, ViolationKind::MissingPlaceholder,
                                           "dependency " + std::to_string(d) + " has no placeholder"});
            }
        }
    }
    // Kahn's algorithm over in-range edges.
    std::vector<int> indegree(static_cast<std::size_t>(n) + 1, 0);
    std::vector<std::vector<int>> consumers(static_cast<std::size_t>(n) + 1);
    for (const auto& step : plan.steps()) {
        for (int d : step.depends_on) {
            if (d >= 1 && d <= n) {
                consumers[static_cast<std::size_t>(d)].push_back(step.index);
                ++indegree[static_cast<std::size_t>(step.index)];
            }
        }
    }
    std::vector<int> ready;
    for (int k = 1; k <= n; ++k) {
        if (indegree[static_cast<std::size_t>(k)] == 0) ready.push_back(k);
    }
    int visited = 0;
    while (!ready.empty()) {
        const int k = ready.back();
        ready.pop_back();
        ++visited;
        for (int c : consumers[static_cast<std::size_t>(k)]) {
            if (--indegree[static_cast<std::size_t>(c)] == 0) ready.push_back(c);
        }
    }
    if (visited != n) {
        report.violations.push_back({std::nullopt, ViolationKind::Cycle, "dependency graph has a cycle"});
    }
    report.valid = report.violations.empty();
    return report;
}

inline void require_valid(const Plan& plan) {
    const auto report = validate(plan);
    if (!report.valid) {
        const auto& v = report.violations.front();
        throw Error(ErrorKind::InvalidPlan,
                    std::string(to_string(v.kind)) +
                        (v.step ? " at step " + std::to_string(*v.step) : std::string()) + ": " + v.message);
    }
}

/// Canonical bytes of a valid plan. Throws InvalidPlan otherwise.
inline std::string canonicalize(const Plan& plan) {
    require_valid(plan);
    return to_document(plan);
}

// ---------------------------------------------------------------------------
// Hops

enum class HopCategory { ZeroHop, OneHop, TwoHop, ThreePlus };

inline std::string_view to_string(HopCategory c) {
    switch (c) {
        case HopCategory::ZeroHop: return "zero-hop";
        case HopCategory::OneHop: return "one-hop";
        case HopCategory::TwoHop: return "two-hop";
        case HopCategory::ThreePlus: return "three-plus";
    }
    return "?";
}

inline HopCategory hop_category(int hops) {
    if (hops <= 0) return HopCategory::ZeroHop;
    if (hops == 1) return HopCategory::OneHop;
    if (hops == 2) return HopCategory::TwoHop;
    return HopCategory::ThreePlus;
}

struct HopProfile {
    std::map<int, int> per_step_depth;
    int hops = 0;
    HopCategory category = HopCategory::ZeroHop;
};

/// Depth is 0 for steps without dependencies, else 1 + max depth of the
/// dependencies; hops is the maximum depth over sink steps.
inline HopProfile hop_profile(const Plan& plan) {
    require_valid(plan);
    HopProfile profile;
    std::set<int> has_consumer;
    for (const auto& step : plan.steps()) {
        int depth = 0;
        for (int d : step.depends_on) {
            depth = std::max(depth, 1 + profile.per_step_depth.at(d));
            has_consumer.insert(d);
        }
        profile.per_step_depth[step.index] = depth;
    }
    for (const auto& [index, depth] : profile.per_step_depth) {
        if (!has_consumer.contains(index)) profile.hops = std::max(profile.hops, depth);
    }
    profile.category = hop_category(profile.hops);
    return profile;
}

}  // namespace planeval
