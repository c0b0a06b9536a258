#pragma once

// Chat-style HTTP judge backend. Kept apart from judge.hpp because it pulls in
// cpp-httplib and OpenSSL.

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <cstdlib>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "planeval/judge.hpp"

namespace planeval {

struct HttpBackendConfig {
    std::string url;  // e.g. https://gateway.example/v1/chat/completions
    std::string response_pointer = "/choices/0/message/content";
    std::string api_key;  // falls back to PLANEVAL_API_KEY
    int timeout_seconds = 120;
    std::map<std::string, std::string> headers;
};

class HttpBackend : public JudgeBackend {
public:
    explicit HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
        if (config_.api_key.empty()) {
            if (const char* key = std::getenv("PLANEVAL_API_KEY")) config_.api_key = key;
        }
        const auto scheme_end = config_.url.find("://");
        if (scheme_end == std::string::npos) throw Error(ErrorKind::BadInput, "backend url needs a scheme: " + config_.url);
        const auto path_start = config_.url.find('/', scheme_end + 3);
        origin_ = config_.url.substr(0, path_start);
        path_ = path_start == std::string::npos ? "/" : config_.url.substr(path_start);
    }

    static nlohmann::json request_body(const JudgeRequest& request) {
        return {{"model", request.model_id},
                {"messages",
                 {{{"role", "system"}, {"content", request.system_prompt}},
                  {{"role", "user"}, {"content", request.user_prompt}}}},
                {"temperature", request.decoding.temperature},
                {"top_p", request.decoding.top_p},
                {"max_tokens", request.decoding.max_tokens},
                {"seed", request.decoding.seed}};
    }

    std::string complete(const JudgeRequest& request) override {
        httplib::Client client(origin_);
        client.set_connection_timeout(config_.timeout_seconds);
        client.set_read_timeout(config_.timeout_seconds);
        httplib::Headers headers;
        if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
        for (const auto& [k, v] : config_.headers) headers.emplace(k, v);
        auto res = client.Post(path_, headers, request_body(request).dump(), "application/json");
        if (!res) throw TransportError("request failed: " + httplib::to_string(res.error()));
        const int status = res->status;
        if (status == 429 || status >= 500) throw TransportError("HTTP " + std::to_string(status));
        if (status == 402) throw Error(ErrorKind::QuotaExceeded, "provider quota exhausted (HTTP 402)");
        if (status >= 400) {
            throw Error(ErrorKind::BackendUnavailable, "HTTP " + std::to_string(status) + ": " + res->body.substr(0, 200));
        }
        try {
            const auto doc = nlohmann::json::parse(res->body);
            const auto& value = doc.at(nlohmann::json::json_pointer(config_.response_pointer));
            return value.is_string() ? value.get<std::string>() : value.dump();
        } catch (const nlohmann::json::exception& e) {
            throw TransportError(std::string("unreadable response body: ") + e.what());
        }
    }

private:
    HttpBackendConfig config_;
    std::string origin_;
    std::string path_;
};

}  // namespace planeval
