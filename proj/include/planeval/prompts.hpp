#pragma once

// Packaged prompt templates. Built-in texts are compiled in from
// assets/prompts; a directory can override any of them by file name.

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>

#include "planeval/assets_data.hpp"
#include "planeval/error.hpp"
#include "planeval/io.hpp"
#include "planeval/judge.hpp"

namespace planeval {

struct PromptTemplate {
    std::string system;
    std::string user;
};

/// Replaces {NAME} for every NAME present in `slots`, in one left-to-right
/// pass, so braces inside substituted text are never re-expanded.
inline std::string fill(std::string_view templ, const std::map<std::string, std::string>& slots) {
    std::string out;
    out.reserve(templ.size() + 256);
    std::size_t pos = 0;
    while (pos < templ.size()) {
        const auto open = templ.find('{', pos);
        if (open == std::string_view::npos) break;
        const auto close = templ.find('}', open + 1);
        if (close == std::string_view::npos) break;
        const auto name = std::string(templ.substr(open + 1, close - open - 1));
        if (auto it = slots.find(name); it != slots.end()) {
            out.append(templ.substr(pos, open - pos));
            out += it->second;
            pos = close + 1;
        } else {
            out.append(templ.substr(pos, open + 1 - pos));
            pos = open + 1;
        }
    }
    out.append(templ.substr(pos));
    return out;
}

class PromptLibrary {
public:
    static const PromptLibrary& builtin() {
        static const PromptLibrary lib = [] {
            PromptLibrary l;
            for (const auto& [name, text] : assets::builtin_prompts()) l.texts_.emplace(name, text);
            return l;
        }();
        return lib;
    }

    /// Built-ins overridden by `<dir>/<name>.txt` where present.
    static PromptLibrary with_overrides(const std::filesystem::path& dir) {
        PromptLibrary l = builtin();
        for (auto& [name, text] : l.texts_) {
            const auto path = dir / (name + ".txt");
            if (std::filesystem::exists(path)) text = read_file(path);
        }
        return l;
    }

    const std::string& text(const std::string& name) const {
        auto it = texts_.find(name);
        if (it == texts_.end()) throw Error(ErrorKind::BadInput, "no prompt asset '" + name + "'");
        return it->second;
    }

    /// Splits an asset at its "=== USER ===" line.
    PromptTemplate templ(const std::string& name) const {
        const auto& body = text(name);
        static constexpr std::string_view marker = "=== USER ===";
        const auto at = body.find(marker);
        if (at == std::string::npos) return {body, ""};
        auto system = body.substr(0, at);
        while (!system.empty() && (system.back() == '\n' || system.back() == '\r')) system.pop_back();
        auto user_start = at + marker.size();
        if (user_start < body.size() && body[user_start] == '\n') ++user_start;
        auto user = body.substr(user_start);
        while (!user.empty() && (user.back() == '\n' || user.back() == '\r')) user.pop_back();
        return {system, user};
    }

    /// Asset text with one trailing newline removed, for slot values.
    std::string snippet(const std::string& name) const {
        auto s = text(name);
        while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
        return s;
    }

    const std::map<std::string, std::string>& all() const noexcept { return texts_; }

private:
    std::map<std::string, std::string> texts_;
};

/// Everything needed to ask one judge role a question.
struct JudgeContext {
    JudgeGateway* gateway = nullptr;
    std::string model_id = "judge";
    DecodingConfig decoding;
    int max_format_retries = 2;
    const PromptLibrary* prompts = nullptr;

    const PromptLibrary& library() const { return prompts ? *prompts : PromptLibrary::builtin(); }

    JudgeGateway& judge() const {
        if (!gateway) throw Error(ErrorKind::BackendUnavailable, "judge context has no gateway");
        return *gateway;
    }

    JudgeRequest request(const PromptTemplate& t, const std::map<std::string, std::string>& slots) const {
        return {fill(t.system, slots), fill(t.user, slots), model_id, decoding};
    }
};

/// Turns FormatUnrecoverable into the caller's own error kind, keeping the last reply.
template <typename F>
auto rethrow_format_as(ErrorKind kind, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::FormatUnrecoverable) throw;
        throw Error(kind, e.what(), e.detail());
    }
}

}  // namespace planeval
