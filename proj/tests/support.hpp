#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>

#include <unistd.h>

#include "planeval/io.hpp"
#include "planeval/judge.hpp"
#include "planeval/plan.hpp"

namespace testsupport {

namespace fs = std::filesystem;

inline fs::path source_dir() { return fs::path(PLANEVAL_SOURCE_DIR); }

inline std::string listing1_text() { return planeval::read_file(source_dir() / "data" / "listing1_plan.txt"); }

/// Fresh empty directory under the system temp dir.
inline fs::path temp_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    auto dir = fs::temp_directory_path() /
               ("planeval_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

/// Backend answering through a callback; counts calls.
class FnBackend : public planeval::JudgeBackend {
public:
    using Fn = std::function<std::string(const planeval::JudgeRequest&)>;
    explicit FnBackend(Fn fn) : fn_(std::move(fn)) {}
    std::string complete(const planeval::JudgeRequest& request) override {
        ++calls;
        return fn_(request);
    }
    std::atomic<int> calls{0};

private:
    Fn fn_;
};

/// Random valid plan: each step depends on a random subset of earlier steps and
/// references each dependency through an argument or an embedded placeholder.
inline planeval::Plan random_valid_plan(std::mt19937_64& rng, int max_steps = 8) {
    using planeval::Step;
    using planeval::ToolKind;
    const int n = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_steps));
    std::vector<Step> steps;
    for (int k = 1; k <= n; ++k) {
        Step s;
        s.index = k;
        s.tool = static_cast<ToolKind>(rng() % 3);
        for (int d = 1; d < k; ++d) {
            if (rng() % 3 == 0) s.depends_on.push_back(d);
        }
        std::string prompt = "do task " + std::to_string(k);
        if (s.tool == ToolKind::LLM) {
            for (int d : s.depends_on) prompt += " using (" + std::to_string(d) + ")";
        } else {
            s.arg_refs = s.depends_on;
        }
        s.prompt = prompt;
        steps.push_back(std::move(s));
    }
    return planeval::Plan(std::move(steps));
}

}  // namespace testsupport
