#pragma once

// Judge access: backends, response cache, rate limiting, retries and format
// re-prompting. The scripted backend is a deterministic stand-in for an LLM.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "planeval/error.hpp"
#include "planeval/io.hpp"
#include "planeval/plan.hpp"

namespace planeval {

struct DecodingConfig {
    double temperature = 0.0;
    double top_p = 1.0;
    int max_tokens = 4096;
    std::int64_t seed = 0;

    bool operator==(const DecodingConfig&) const = default;
};

struct JudgeRequest {
    std::string system_prompt;
    std::string user_prompt;
    std::string model_id;
    DecodingConfig decoding;
};

/// Decoding presets per pipeline role. Unknown roles throw UnknownRole.
inline const std::map<std::string, DecodingConfig>& presets() {
    static const std::map<std::string, DecodingConfig> table = {
        {"metric-wise-eval", {0.0, 1.0, 4096, 0}}, {"one-shot-judge", {0.0, 1.0, 4096, 0}},
        {"step-wise-eval", {0.0, 1.0, 4096, 0}},   {"plan-optimizer", {0.0, 1.0, 4096, 0}},
        {"query-generation", {0.2, 1.0, 4096, 0}}, {"plan-generation", {0.2, 1.0, 4096, 0}},
    };
    return table;
}

inline DecodingConfig preset(const std::string& role) {
    const auto& table = presets();
    auto it = table.find(role);
    if (it == table.end()) throw Error(ErrorKind::UnknownRole, "no decoding preset for role '" + role + "'");
    return it->second;
}

struct CacheKey {
    std::string model_id;
    std::string prompt_digest;  // sha256 over system + '\0' + user
    std::int64_t seed = 0;

    /// File-name digest of the whole key.
    std::string digest() const {
        return sha256_hex(model_id + '\0' + prompt_digest + '\0' + std::to_string(seed));
    }

    auto operator<=>(const CacheKey&) const = default;
};

inline CacheKey make_cache_key(const JudgeRequest& request) {
    return {request.model_id, sha256_hex(request.system_prompt + '\0' + request.user_prompt),
            request.decoding.seed};
}

/// Retryable failure (connection errors, 429, 5xx).
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class JudgeBackend {
public:
    virtual ~JudgeBackend() = default;
    virtual std::string complete(const JudgeRequest& request) = 0;
};

// ---------------------------------------------------------------------------
// Cache

/// In memory when no directory is given; otherwise one file per key plus an
/// index.jsonl manifest. Entries are never evicted.
class ResponseCache {
public:
    explicit ResponseCache(std::optional<std::filesystem::path> dir = std::nullopt) : dir_(std::move(dir)) {
        if (dir_) std::filesystem::create_directories(*dir_);
    }

    std::optional<std::string> get(const CacheKey& key) {
        const auto digest = key.digest();
        std::lock_guard lock(mutex_);
        if (auto it = memory_.find(digest); it != memory_.end()) return it->second;
        if (dir_) {
            const auto path = *dir_ / (digest + ".txt");
            if (std::filesystem::exists(path)) {
                auto text = read_file(path);
                memory_.emplace(digest, text);
                return text;
            }
        }
        return std::nullopt;
    }

    void put(const CacheKey& key, const std::string& response) {
        const auto digest = key.digest();
        std::lock_guard lock(mutex_);
        if (!memory_.emplace(digest, response).second) return;
        if (!dir_) return;
        const auto path = *dir_ / (digest + ".txt");
        if (std::filesystem::exists(path)) return;
        write_file_atomic(path, response);
        nlohmann::ordered_json line = {{"digest", digest},
                                       {"model_id", key.model_id},
                                       {"prompt_digest", key.prompt_digest},
                                       {"seed", key.seed}};
        std::ofstream index(*dir_ / "index.jsonl", std::ios::app | std::ios::binary);
        index << line.dump() << "\n";
    }

    std::size_t size() const {
        std::lock_guard lock(mutex_);
        return memory_.size();
    }

    const std::optional<std::filesystem::path>& directory() const noexcept { return dir_; }

private:
    std::optional<std::filesystem::path> dir_;
    mutable std::mutex mutex_;
    std::map<std::string, std::string> memory_;
};

// ---------------------------------------------------------------------------
// Gateway

using Sleeper = std::function<void(double seconds)>;

inline void real_sleep(double seconds) {
    std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

struct GatewayConfig {
    int max_transport_retries = 5;
    double backoff_base_seconds = 1.0;
    double backoff_factor = 2.0;
    std::size_t max_in_flight = 8;
    double requests_per_second = 0.0;  // per model_id; 0 disables the limiter
    double burst = 1.0;
    std::optional<std::filesystem::path> cache_dir;
    Sleeper sleeper = real_sleep;
};

/// Token bucket per model id with blocking acquisition.
class RateLimiter {
public:
    RateLimiter(double rate, double burst, Sleeper sleeper)
        : rate_(rate), burst_(std::max(1.0, burst)), sleeper_(std::move(sleeper)) {}

    void acquire(const std::string& model_id) {
        if (rate_ <= 0.0) return;
        while (true) {
            double wait = 0.0;
            {
                std::lock_guard lock(mutex_);
                const auto now = std::chrono::steady_clock::now();
                auto [it, inserted] = buckets_.try_emplace(model_id, Bucket{burst_, now});
                auto& bucket = it->second;
                const double elapsed = std::chrono::duration<double>(now - bucket.last).count();
                bucket.tokens = std::min(burst_, bucket.tokens + elapsed * rate_);
                bucket.last = now;
                if (bucket.tokens >= 1.0) {
                    bucket.tokens -= 1.0;
                    return;
                }
                wait = (1.0 - bucket.tokens) / rate_;
            }
            sleeper_(wait);
        }
    }

private:
    struct Bucket {
        double tokens;
        std::chrono::steady_clock::time_point last;
    };
    double rate_;
    double burst_;
    Sleeper sleeper_;
    std::mutex mutex_;
    std::map<std::string, Bucket> buckets_;
};

/// Returns an error message when the response is unusable.
using ResponseValidator = std::function<std::optional<std::string>(const std::string&)>;

struct InvokeResult {
    std::string response;
    int format_retries = 0;
    bool cache_hit = false;
    CacheKey key;
};

class JudgeGateway {
public:
    explicit JudgeGateway(std::shared_ptr<JudgeBackend> backend, GatewayConfig config = {})
        : backend_(std::move(backend)),
          config_(std::move(config)),
          cache_(config_.cache_dir),
          limiter_(config_.requests_per_second, config_.burst, config_.sleeper) {
        if (!backend_) throw Error(ErrorKind::BackendUnavailable, "no judge backend configured");
        if (config_.max_in_flight == 0) config_.max_in_flight = 1;
    }

    InvokeResult invoke_detailed(const JudgeRequest& request, const ResponseValidator& validator,
                                 int max_format_retries = 2) {
        if (request.system_prompt.empty() && request.user_prompt.empty()) {
            throw Error(ErrorKind::BadInput, "judge request has empty prompts");
        }
        InvokeResult result;
        result.key = make_cache_key(request);
        record_reference(result.key);
        if (auto hit = cache_.get(result.key)) {
            ++cache_hits_;
            result.response = std::move(*hit);
            result.cache_hit = true;
            return result;
        }
        JudgeRequest attempt = request;
        std::string last_response;
        for (int i = 0; i <= max_format_retries; ++i) {
            last_response = call_backend(attempt);
            const auto problem = validator ? validator(last_response) : std::nullopt;
            if (!problem) {
                cache_.put(result.key, last_response);
                result.response = std::move(last_response);
                result.format_retries = i;
                return result;
            }
            attempt.user_prompt = request.user_prompt +
                                  "\n\nYour previous reply could not be used: " + *problem +
                                  "\nAnswer again and follow the required output format exactly.";
        }
        throw Error(ErrorKind::FormatUnrecoverable,
                    "judge reply failed validation after " + std::to_string(max_format_retries) + " retries",
                    last_response);
    }

    std::string invoke(const JudgeRequest& request, const ResponseValidator& validator,
                       int max_format_retries = 2) {
        return invoke_detailed(request, validator, max_format_retries).response;
    }

    std::size_t backend_calls() const { return backend_calls_.load(); }
    std::size_t cache_hits() const { return cache_hits_.load(); }
    std::size_t max_observed_in_flight() const {
        std::lock_guard lock(flight_mutex_);
        return max_observed_;
    }

    /// Digests of every cache key touched, sorted.
    std::vector<std::string> referenced_digests() const {
        std::lock_guard lock(refs_mutex_);
        return {refs_.begin(), refs_.end()};
    }

    ResponseCache& cache() noexcept { return cache_; }

private:
    void record_reference(const CacheKey& key) {
        const auto digest = key.digest();
        std::lock_guard lock(refs_mutex_);
        refs_.insert(digest);
    }

    std::string call_backend(const JudgeRequest& request) {
        for (int attempt = 0;; ++attempt) {
            limiter_.acquire(request.model_id);
            acquire_slot();
            try {
                ++backend_calls_;
                auto text = backend_->complete(request);
                release_slot();
                return text;
            } catch (const TransportError& e) {
                release_slot();
                if (attempt >= config_.max_transport_retries) {
                    throw Error(ErrorKind::BackendUnavailable,
                                "transport failed after " + std::to_string(attempt + 1) + " attempts: " + e.what());
                }
                config_.sleeper(config_.backoff_base_seconds * std::pow(config_.backoff_factor, attempt));
            } catch (...) {
                release_slot();
                throw;
            }
        }
    }

    void acquire_slot() {
        std::unique_lock lock(flight_mutex_);
        flight_cv_.wait(lock, [&] { return in_flight_ < config_.max_in_flight; });
        ++in_flight_;
        max_observed_ = std::max(max_observed_, in_flight_);
    }

    void release_slot() {
        {
            std::lock_guard lock(flight_mutex_);
            --in_flight_;
        }
        flight_cv_.notify_one();
    }

    std::shared_ptr<JudgeBackend> backend_;
    GatewayConfig config_;
    ResponseCache cache_;
    RateLimiter limiter_;
    std::atomic<std::size_t> backend_calls_{0};
    std::atomic<std::size_t> cache_hits_{0};
    mutable std::mutex flight_mutex_;
    std::condition_variable flight_cv_;
    std::size_t in_flight_ = 0;
    std::size_t max_observed_ = 0;
    mutable std::mutex refs_mutex_;
    std::set<std::string> refs_;
};

// ---------------------------------------------------------------------------
// Scripted backend

/// Rules are tried in order; the first whose matchers all hit answers. A rule
/// with several responses hands them out in order and then repeats the last.
/// Responses may use {{PLAN}} (plan under the "Plan:" line of the user
/// prompt), {{STEPS}} (its step count) and {{STEP}} (the "Step number:" value).
class ScriptedJudge : public JudgeBackend {
public:
    struct Rule {
        std::optional<std::regex> match;         // over the user prompt
        std::optional<std::regex> system_match;  // over the system prompt
        std::optional<std::string> contains;
        std::optional<std::string> system_contains;
        std::vector<std::string> responses;
        std::vector<std::pair<std::string, std::string>> replace;  // applied after expansion
    };

    ScriptedJudge(std::vector<Rule> rules, std::string default_response)
        : rules_(std::move(rules)), default_(std::move(default_response)), served_(rules_.size(), 0) {}

    /// {"rules": [{"match"?, "system_match"?, "contains"?, "system_contains"?,
    ///             "response" | "responses", "replace"?: [[from, to], ...]}], "default": "..."}
    static std::shared_ptr<ScriptedJudge> from_json(const nlohmann::json& doc) {
        std::vector<Rule> rules;
        for (const auto& r : doc.value("rules", nlohmann::json::array())) {
            Rule rule;
            if (r.contains("match")) rule.match.emplace(r.at("match").get<std::string>(), std::regex::ECMAScript);
            if (r.contains("system_match")) {
                rule.system_match.emplace(r.at("system_match").get<std::string>(), std::regex::ECMAScript);
            }
            if (r.contains("contains")) rule.contains = r.at("contains").get<std::string>();
            if (r.contains("system_contains")) rule.system_contains = r.at("system_contains").get<std::string>();
            if (r.contains("responses")) {
                rule.responses = r.at("responses").get<std::vector<std::string>>();
            } else {
                rule.responses.push_back(r.at("response").get<std::string>());
            }
            if (rule.responses.empty()) throw Error(ErrorKind::BadInput, "scripted rule without responses");
            for (const auto& pair : r.value("replace", nlohmann::json::array())) {
                rule.replace.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<std::string>());
            }
            rules.push_back(std::move(rule));
        }
        return std::make_shared<ScriptedJudge>(std::move(rules), doc.value("default", std::string()));
    }

    static std::shared_ptr<ScriptedJudge> from_file(const std::filesystem::path& path) {
        try {
            return from_json(nlohmann::json::parse(read_file(path)));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::BadInput, "scripted judge file " + path.string() + ": " + e.what());
        }
    }

    std::string complete(const JudgeRequest& request) override {
        for (std::size_t i = 0; i < rules_.size(); ++i) {
            const auto& rule = rules_[i];
            if (rule.contains && request.user_prompt.find(*rule.contains) == std::string::npos) continue;
            if (rule.system_contains && request.system_prompt.find(*rule.system_contains) == std::string::npos) continue;
            if (rule.match && !std::regex_search(request.user_prompt, *rule.match)) continue;
            if (rule.system_match && !std::regex_search(request.system_prompt, *rule.system_match)) continue;
            std::size_t slot = 0;
            {
                std::lock_guard lock(mutex_);
                slot = std::min(served_[i]++, rule.responses.size() - 1);
            }
            auto text = expand(rule.responses[slot], request.user_prompt);
            for (const auto& [from, to] : rule.replace) text = replace_all(std::move(text), from, to);
            return text;
        }
        return expand(default_, request.user_prompt);
    }

    /// Text of the plan under a line reading exactly "Plan:", up to the next blank line.
    static std::optional<std::string> plan_block(const std::string& user_prompt) {
        std::size_t pos = 0;
        while (pos < user_prompt.size()) {
            auto end = user_prompt.find('\n', pos);
            if (end == std::string::npos) end = user_prompt.size();
            if (detail::trim(std::string_view(user_prompt).substr(pos, end - pos)) == "Plan:") {
                const auto start = std::min(end + 1, user_prompt.size());
                auto stop = user_prompt.find("\n\n", start);
                if (stop == std::string::npos) stop = user_prompt.size();
                return user_prompt.substr(start, stop - start);
            }
            pos = end + 1;
        }
        return std::nullopt;
    }

private:
    static std::string replace_all(std::string text, const std::string& from, const std::string& to) {
        if (from.empty()) return text;
        std::size_t pos = 0;
        while ((pos = text.find(from, pos)) != std::string::npos) {
            text.replace(pos, from.size(), to);
            pos += to.size();
        }
        return text;
    }

    static std::string expand(const std::string& templ, const std::string& user_prompt) {
        if (templ.find("{{") == std::string::npos) return templ;
        std::string text = templ;
        const auto block = plan_block(user_prompt);
        if (text.find("{{PLAN}}") != std::string::npos) text = replace_all(text, "{{PLAN}}", block.value_or(""));
        if (text.find("{{STEPS}}") != std::string::npos) {
            std::size_t steps = 0;
            if (block) {
                if (auto plan = try_parse_plan(*block)) steps = plan->size();
            }
            text = replace_all(text, "{{STEPS}}", std::to_string(steps));
        }
        if (text.find("{{STEP}}") != std::string::npos) {
            static const std::regex step_line(R"(Step number:\s*(\d+))");
            std::smatch m;
            const std::string number = std::regex_search(user_prompt, m, step_line) ? m[1].str() : "1";
            text = replace_all(text, "{{STEP}}", number);
        }
        return text;
    }

    std::vector<Rule> rules_;
    std::string default_;
    std::mutex mutex_;
    std::vector<std::size_t> served_;
};

}  // namespace planeval
