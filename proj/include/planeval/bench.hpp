#pragma once

// Benchmark commands behind the CLI: each reads inputs, runs one stage of the
// pipeline and writes CSV tables plus a manifest into a run directory.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "planeval/csv.hpp"
#include "planeval/dataset.hpp"
#include "planeval/error.hpp"
#include "planeval/io.hpp"
#include "planeval/judge.hpp"
#include "planeval/metrics.hpp"
#include "planeval/oneshot.hpp"
#include "planeval/prompts.hpp"
#include "planeval/refine.hpp"
#include "planeval/stats.hpp"
#include "planeval/weights.hpp"

namespace planeval::bench {

namespace fs = std::filesystem;

inline const std::vector<std::string>& judge_roles() {
    static const std::vector<std::string> roles = {"metric-wise-eval", "one-shot-judge", "step-wise-eval",
                                                   "plan-optimizer"};
    return roles;
}

struct RunOptions {
    nlohmann::json config = nlohmann::json::object();  // snapshot recorded in the manifest

    std::optional<fs::path> queries;
    std::optional<fs::path> plans;
    std::optional<fs::path> triples;
    std::optional<fs::path> labels;
    std::optional<fs::path> table;
    std::optional<fs::path> plan_file;
    std::optional<fs::path> prompts_dir;
    std::optional<fs::path> cache_dir;
    fs::path out;

    std::uint64_t seed = 0;
    std::string judge;  // "remote" or "scripted:PATH"
    EvalMode mode = EvalMode::ReferenceBased;
    PromptStyle style = PromptStyle::Deconstructed;
    int max_passes = 4;
    unsigned jobs = 1;
    bool text = false;

    WeightVector weights = WeightVector::standard();
    std::map<std::string, std::string> models;  // role -> model id
    GatewayConfig gateway;

    int n_draws = 10;
    double grid_step = 0.02;
    double lattice = 5.0;
    double hinge_c = 1.0;
    int resamples = 1000;
    double level = 0.95;
    std::optional<int> ordinal_k;

    std::shared_ptr<JudgeBackend> remote_backend;  // supplied by builds with HTTP support
    std::ostream* log = nullptr;
};

struct CommandResult {
    int exit_code = 0;
    std::vector<fs::path> outputs;  // relative to the run directory
    std::string summary;
};

// ---------------------------------------------------------------------------
// Option plumbing

inline EvalMode mode_from_string(const std::string& s) {
    if (s == "reference-based") return EvalMode::ReferenceBased;
    if (s == "reference-free") return EvalMode::ReferenceFree;
    throw Error(ErrorKind::BadInput, "unknown mode '" + s + "'");
}

inline std::string to_string(EvalMode m) { return m == EvalMode::ReferenceBased ? "reference-based" : "reference-free"; }

inline PromptStyle style_from_string(const std::string& s) {
    if (s == "deconstructed") return PromptStyle::Deconstructed;
    if (s == "single") return PromptStyle::Single;
    throw Error(ErrorKind::BadInput, "unknown prompt style '" + s + "'");
}

inline std::string to_string(PromptStyle p) { return p == PromptStyle::Deconstructed ? "deconstructed" : "single"; }

/// Accepts an array of seven points in TPA, Format, SE, QA, Dep, Red, TUC order,
/// an object keyed by short metric name, or a learn-weights report (uses "quantized").
inline WeightVector weights_from_json(const nlohmann::json& doc) {
    WeightVector w = WeightVector::standard();
    if (doc.is_object() && doc.contains("quantized")) return weights_from_json(doc.at("quantized"));
    if (doc.is_array()) {
        if (doc.size() != 7) throw Error(ErrorKind::BadInput, "weights array needs 7 entries");
        for (std::size_t k = 0; k < 7; ++k) w.weights[k] = doc[k].get<double>();
    } else if (doc.is_object()) {
        for (auto k : kAllMetrics) {
            const std::string name(short_name(k));
            if (!doc.contains(name)) throw Error(ErrorKind::MissingMetric, "weights lack " + name);
            w.weights[index_of(k)] = doc.at(name).get<double>();
        }
    } else {
        throw Error(ErrorKind::BadInput, "weights must be an array or object");
    }
    w.check();
    return w;
}

/// Applies a JSON config document; fields absent from the document keep their values.
inline void apply_config(RunOptions& opt, const nlohmann::json& cfg, const fs::path& base = {}) {
    if (!cfg.is_object()) throw Error(ErrorKind::BadInput, "config must be a JSON object");
    opt.config = cfg;
    auto path_of = [&](const std::string& s) { return fs::path(s).is_absolute() || base.empty() ? fs::path(s) : base / s; };
    auto opt_path = [&](const char* key, std::optional<fs::path>& target) {
        if (cfg.contains(key)) target = path_of(cfg.at(key).get<std::string>());
    };
    try {
        opt_path("queries", opt.queries);
        opt_path("plans", opt.plans);
        opt_path("triples", opt.triples);
        opt_path("labels", opt.labels);
        opt_path("table", opt.table);
        opt_path("prompts_dir", opt.prompts_dir);
        opt_path("cache_dir", opt.cache_dir);
        if (cfg.contains("out")) opt.out = path_of(cfg.at("out").get<std::string>());
        if (cfg.contains("seed")) opt.seed = cfg.at("seed").get<std::uint64_t>();
        if (cfg.contains("judge")) {
            auto j = cfg.at("judge").get<std::string>();
            if (j.rfind("scripted:", 0) == 0) j = "scripted:" + path_of(j.substr(9)).string();
            opt.judge = j;
        }
        if (cfg.contains("mode")) opt.mode = mode_from_string(cfg.at("mode").get<std::string>());
        if (cfg.contains("prompt_style")) opt.style = style_from_string(cfg.at("prompt_style").get<std::string>());
        if (cfg.contains("jobs")) opt.jobs = cfg.at("jobs").get<unsigned>();
        if (cfg.contains("loop")) opt.max_passes = cfg.at("loop").value("max_passes", opt.max_passes);
        if (cfg.contains("max_passes")) opt.max_passes = cfg.at("max_passes").get<int>();
        if (cfg.contains("weights")) {
            const auto& w = cfg.at("weights");
            opt.weights = w.is_string() ? weights_from_json(nlohmann::json::parse(read_file(path_of(w.get<std::string>()))))
                                        : weights_from_json(w);
        }
        if (cfg.contains("models")) {
            for (const auto& [role, id] : cfg.at("models").items()) opt.models[role] = id.get<std::string>();
        }
        if (cfg.contains("gateway")) {
            const auto& g = cfg.at("gateway");
            opt.gateway.max_transport_retries = g.value("max_transport_retries", opt.gateway.max_transport_retries);
            opt.gateway.backoff_base_seconds = g.value("backoff_base_seconds", opt.gateway.backoff_base_seconds);
            opt.gateway.backoff_factor = g.value("backoff_factor", opt.gateway.backoff_factor);
            opt.gateway.max_in_flight = g.value("max_in_flight", opt.gateway.max_in_flight);
            opt.gateway.requests_per_second = g.value("requests_per_second", opt.gateway.requests_per_second);
            opt.gateway.burst = g.value("burst", opt.gateway.burst);
        }
        if (cfg.contains("n_draws")) opt.n_draws = cfg.at("n_draws").get<int>();
        if (cfg.contains("grid_step")) opt.grid_step = cfg.at("grid_step").get<double>();
        if (cfg.contains("lattice")) opt.lattice = cfg.at("lattice").get<double>();
        if (cfg.contains("hinge_c")) opt.hinge_c = cfg.at("hinge_c").get<double>();
        if (cfg.contains("resamples")) opt.resamples = cfg.at("resamples").get<int>();
        if (cfg.contains("level")) opt.level = cfg.at("level").get<double>();
        if (cfg.contains("ordinal_k")) opt.ordinal_k = cfg.at("ordinal_k").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::BadInput, std::string("config: ") + e.what());
    }
}

inline void load_config(RunOptions& opt, const fs::path& path) {
    nlohmann::json cfg;
    try {
        cfg = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::BadInput, "config " + path.string() + ": " + e.what());
    }
    apply_config(opt, cfg, path.parent_path());
}

inline fs::path default_run_dir(std::uint64_t seed) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream s;
    s << "runs/" << std::put_time(&tm, "%Y%m%dT%H%M%SZ") << "-" << seed;
    return s.str();
}

// ---------------------------------------------------------------------------
// Formatting helpers

inline std::string fmt(double v, int precision = 4) {
    if (!std::isfinite(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    std::string s(buf);
    if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
    return s;
}

/// Aligned plain-text rendering of a CSV document; numeric cells are right aligned.
inline std::string render_aligned(std::string_view csv_text) {
    const auto rows = csv::parse(csv_text);
    if (rows.empty()) return {};
    std::vector<std::size_t> width;
    for (const auto& r : rows) {
        if (width.size() < r.size()) width.resize(r.size(), 0);
        for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    }
    std::string out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        std::string line;
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (c) line += "  ";
            const bool numeric = i > 0 && detail::parse_real(r[c]).has_value();
            const std::string pad(width[c] - r[c].size(), ' ');
            line += numeric ? pad + r[c] : r[c] + pad;
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out += line + "\n";
        if (i == 0) {
            std::size_t total = 0;
            for (std::size_t c = 0; c < width.size(); ++c) total += width[c] + (c ? 2 : 0);
            out += std::string(total, '-') + "\n";
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Worker pool

/// Runs fn(i) for i in [0, n) on up to `jobs` threads; the first exception is rethrown.
template <typename F>
void parallel_for(std::size_t n, unsigned jobs, F&& fn) {
    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < jobs; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const auto i = next.fetch_add(1);
                if (i >= n || failed.load()) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    failed = true;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Run directory

class RunDir {
public:
    RunDir(std::string command, const RunOptions& opt) : command_(std::move(command)), opt_(opt) {
        root_ = opt.out.empty() ? default_run_dir(opt.seed) : opt.out;
        fs::create_directories(root_);
    }

    const fs::path& root() const { return root_; }

    void write(const fs::path& relative, std::string_view content) {
        write_file_atomic(root_ / relative, content);
        outputs_[relative.generic_string()] = sha256_hex(content);
    }

    void input(const std::string& role, const std::optional<fs::path>& path) {
        if (path) inputs_[role] = {path->string(), sha256_hex(read_file(*path))};
    }

    /// Writes manifest.json and cache_refs.txt; call last.
    CommandResult finish(const JudgeGateway* gateway, std::string summary, int exit_code = 0) {
        nlohmann::ordered_json m;
        m["seed"] = opt_.seed;
        nlohmann::ordered_json options;
        options["mode"] = to_string(opt_.mode);
        options["prompt_style"] = to_string(opt_.style);
        options["max_passes"] = opt_.max_passes;
        options["weights"] = opt_.weights.weights;
        options["n_draws"] = opt_.n_draws;
        options["grid_step"] = opt_.grid_step;
        options["lattice"] = opt_.lattice;
        options["resamples"] = opt_.resamples;
        options["level"] = opt_.level;
        if (opt_.ordinal_k) options["ordinal_k"] = *opt_.ordinal_k;
        m["options"] = options;
        m["config"] = opt_.config;
        auto inputs = nlohmann::ordered_json::object();
        for (const auto& [role, v] : inputs_) inputs[role] = {{"path", v.first}, {"sha256", v.second}};
        m["inputs"] = inputs;
        if (!opt_.judge.empty()) {
            nlohmann::ordered_json j;
            j["spec"] = opt_.judge;
            auto models = nlohmann::ordered_json::object();
            for (const auto& role : judge_roles()) {
                auto it = opt_.models.find(role);
                models[role] = it == opt_.models.end() ? "judge" : it->second;
            }
            j["models"] = models;
            m["judge"] = j;
        }
        std::string refs;
        if (gateway) {
            for (const auto& d : gateway->referenced_digests()) refs += d + "\n";
            write("cache_refs.txt", refs);
        }
        auto outputs = nlohmann::ordered_json::object();
        for (const auto& [name, digest] : outputs_) outputs[name] = digest;
        m["outputs"] = outputs;
        // One entry per command so several stages can share a run directory.
        nlohmann::ordered_json manifest = {{"commands", nlohmann::ordered_json::object()}};
        const auto manifest_path = root_ / "manifest.json";
        if (fs::exists(manifest_path)) {
            try {
                auto existing = nlohmann::ordered_json::parse(read_file(manifest_path));
                if (existing.contains("commands") && existing["commands"].is_object()) manifest = std::move(existing);
            } catch (const nlohmann::json::exception&) {
            }
        }
        manifest["commands"][command_] = m;
        write_file_atomic(manifest_path, manifest.dump(2) + "\n");
        CommandResult r;
        r.exit_code = exit_code;
        for (const auto& [name, digest] : outputs_) r.outputs.emplace_back(name);
        r.outputs.emplace_back("manifest.json");
        r.summary = std::move(summary);
        return r;
    }

private:
    std::string command_;
    const RunOptions& opt_;
    fs::path root_;
    std::map<std::string, std::pair<std::string, std::string>> inputs_;
    std::map<std::string, std::string> outputs_;
};

// ---------------------------------------------------------------------------
// Judge session

class Session {
public:
    explicit Session(const RunOptions& opt) : opt_(opt) {
        if (opt.prompts_dir) library_ = PromptLibrary::with_overrides(*opt.prompts_dir);
        auto config = opt.gateway;
        if (opt.cache_dir) config.cache_dir = opt.cache_dir;
        gateway_ = std::make_unique<JudgeGateway>(make_backend(opt), config);
    }

    static std::shared_ptr<JudgeBackend> make_backend(const RunOptions& opt) {
        if (opt.judge.rfind("scripted:", 0) == 0) return ScriptedJudge::from_file(opt.judge.substr(9));
        if (opt.judge == "remote") {
            if (!opt.remote_backend) throw Error(ErrorKind::BackendUnavailable, "remote judge is not configured");
            return opt.remote_backend;
        }
        if (opt.judge.empty()) throw Error(ErrorKind::BadInput, "--judge is required for this command");
        throw Error(ErrorKind::BadInput, "unknown judge '" + opt.judge + "'");
    }

    JudgeContext context(const std::string& role) const {
        JudgeContext ctx;
        ctx.gateway = gateway_.get();
        auto it = opt_.models.find(role);
        ctx.model_id = it == opt_.models.end() ? "judge" : it->second;
        ctx.decoding = preset(role);
        ctx.decoding.seed = opt_.seed;
        ctx.prompts = library_ ? &*library_ : nullptr;
        return ctx;
    }

    JudgeGateway& gateway() { return *gateway_; }

private:
    const RunOptions& opt_;
    std::optional<PromptLibrary> library_;
    std::unique_ptr<JudgeGateway> gateway_;
};

inline void note(const RunOptions& opt, const std::string& line) {
    if (opt.log) *opt.log << line << "\n";
}

inline Corpus load_corpus(const RunOptions& opt, bool need_plans) {
    if (!opt.queries) throw Error(ErrorKind::BadInput, "--queries is required");
    if (need_plans && !opt.plans) throw Error(ErrorKind::BadInput, "--plans is required");
    auto corpus = ingest(*opt.queries, opt.plans);
    note(opt, "ingested " + std::to_string(corpus.report.queries) + " queries, " +
                  std::to_string(corpus.report.plans) + " plans (" +
                  std::to_string(corpus.report.unparseable_plans) + " unparseable)");
    for (const auto& p : corpus.plans) {
        if (!corpus.find(p.query_id)) {
            throw Error(ErrorKind::BadInput, "plans.csv references unknown query_id '" + p.query_id + "'");
        }
    }
    return corpus;
}

/// Plans visited in (query_id, llm, prompt_type) order.
inline std::vector<std::size_t> plan_order(const Corpus& c) {
    std::vector<std::size_t> order(c.plans.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& x = c.plans[a];
        const auto& y = c.plans[b];
        return std::tie(x.query_id, x.llm, x.prompt_type) < std::tie(y.query_id, y.llm, y.prompt_type);
    });
    return order;
}

inline void echo(const RunOptions& opt, const std::string& title, const std::string& csv_text) {
    if (opt.text && opt.log) *opt.log << "\n" << title << "\n" << render_aligned(csv_text);
}

// ---------------------------------------------------------------------------
// validate

inline CommandResult cmd_validate(const RunOptions& opt) {
    if (opt.plan_file) {
        const auto plan = parse_plan(read_file(*opt.plan_file));
        const auto report = validate(plan);
        std::ostringstream s;
        s << opt.plan_file->string() << ": " << plan.size() << " steps, " << (report.valid ? "valid" : "INVALID") << "\n";
        for (const auto& v : report.violations) {
            s << "  violation " << to_string(v.kind) << (v.step ? " at step " + std::to_string(*v.step) : "") << ": "
              << v.message << "\n";
        }
        for (const auto& v : report.warnings) {
            s << "  warning " << to_string(v.kind) << (v.step ? " at step " + std::to_string(*v.step) : "") << ": "
              << v.message << "\n";
        }
        if (report.valid) {
            const auto hp = hop_profile(plan);
            s << "  hops " << hp.hops << " (" << to_string(hp.category) << ")\n";
        }
        CommandResult r;
        r.exit_code = report.valid ? 0 : 1;
        r.summary = s.str();
        return r;
    }
    const auto corpus = load_corpus(opt, false);
    RunDir run("validate", opt);
    run.input("queries", opt.queries);
    run.input("plans", opt.plans);

    std::vector<csv::Row> qrows;
    std::map<std::string, std::size_t> categories;
    for (const auto& q : corpus.queries) {
        const auto hp = hop_profile(q.best_plan);
        ++categories[std::string(to_string(hp.category))];
        qrows.push_back({q.query_id, std::to_string(q.best_plan.size()), std::to_string(hp.hops),
                         std::string(to_string(hp.category)), std::to_string(q.plan_lineage.size()),
                         q.head_matches_best() ? "1" : "0"});
    }
    const auto qcsv =
        csv::format({"query_id", "steps", "hops", "hop_category", "lineage_length", "head_matches_best"}, qrows);
    run.write("validation_queries.csv", qcsv);

    std::vector<csv::Row> prows;
    for (auto i : plan_order(corpus)) {
        const auto& p = corpus.plans[i];
        const auto plan = try_parse_plan(p.plan);
        std::string valid = "0", violations, warnings;
        if (plan) {
            const auto v = validate(*plan);
            valid = v.valid ? "1" : "0";
            for (const auto& x : v.violations) violations += (violations.empty() ? "" : ";") + std::string(to_string(x.kind));
            for (const auto& x : v.warnings) warnings += (warnings.empty() ? "" : ";") + std::string(to_string(x.kind));
        }
        prows.push_back({p.query_id, p.llm, p.prompt_type, plan ? "1" : "0", valid, violations, warnings});
    }
    if (opt.plans) {
        run.write("validation_plans.csv",
                  csv::format({"query_id", "llm", "prompt_type", "parseable", "valid", "violations", "warnings"}, prows));
    }

    const auto& rep = corpus.report;
    std::vector<csv::Row> srows = {
        {"queries", std::to_string(rep.queries)},
        {"plans", std::to_string(rep.plans)},
        {"unparseable_plans", std::to_string(rep.unparseable_plans)},
        {"invalid_plans", std::to_string(rep.invalid_plans)},
        {"lineage_head_mismatches", std::to_string(rep.lineage_head_mismatches.size())},
    };
    for (const auto& [kind, n] : rep.violation_counts) srows.push_back({"violations:" + kind, std::to_string(n)});
    for (const auto& [cat, n] : categories) srows.push_back({"hops:" + cat, std::to_string(n)});
    const auto scsv = csv::format({"item", "value"}, srows);
    run.write("ingest_summary.csv", scsv);
    echo(opt, "Ingestion summary", scsv);
    return run.finish(nullptr, render_aligned(scsv));
}

// ---------------------------------------------------------------------------
// score

struct PlannerSummary {
    std::string prompt_type;
    std::string llm;
    std::size_t n = 0;
    std::array<double, 7> points{};  // mean points, kAllMetrics order
    double overall = 0.0;
};

struct SummaryFooter {
    std::array<double, 7> normalized{};
    double overall = 0.0;
};

/// Footer row: per-metric mean of planner means as a percentage of the metric budget,
/// and the plain mean of the planners' Overall values.
inline SummaryFooter summary_footer(const std::vector<PlannerSummary>& rows, const WeightVector& weights) {
    if (rows.empty()) throw Error(ErrorKind::EmptyInput, "no planner rows");
    std::vector<PlanScorecard> cards;
    double overall = 0.0;
    for (const auto& r : rows) {
        PlanScorecard c;
        for (auto k : kAllMetrics) c.per_metric[k] = {k, 0.0, r.points[index_of(k)], {}, std::nullopt};
        cards.push_back(std::move(c));
        overall += r.overall;
    }
    SummaryFooter f;
    const auto norm = normalized_average(cards, weights);
    for (auto k : kAllMetrics) f.normalized[index_of(k)] = norm.at(k);
    f.overall = overall / static_cast<double>(rows.size());
    return f;
}

inline std::vector<std::string> table_metric_header() {
    std::vector<std::string> h;
    for (auto k : kTableOrder) h.emplace_back(short_name(k));
    return h;
}

inline std::string summary_csv(const std::vector<PlannerSummary>& rows, const WeightVector& weights) {
    std::vector<std::string> header = {"prompt_type", "llm", "n", "Overall"};
    for (auto& h : table_metric_header()) header.push_back(h);
    std::map<std::string, std::vector<PlannerSummary>> by_prompt;
    for (const auto& r : rows) by_prompt[r.prompt_type].push_back(r);
    std::vector<csv::Row> out;
    for (auto& [prompt, group] : by_prompt) {
        std::stable_sort(group.begin(), group.end(), [](const PlannerSummary& a, const PlannerSummary& b) {
            if (a.overall != b.overall) return a.overall > b.overall;
            return a.llm < b.llm;
        });
        for (const auto& r : group) {
            csv::Row row = {prompt, r.llm, std::to_string(r.n), fmt(r.overall, 2)};
            for (auto k : kTableOrder) row.push_back(fmt(r.points[index_of(k)], 2));
            out.push_back(std::move(row));
        }
        const auto f = summary_footer(group, weights);
        csv::Row footer = {prompt, "Average (Normalized)", std::to_string(group.size()), fmt(f.overall, 2)};
        for (auto k : kTableOrder) footer.push_back(fmt(f.normalized[index_of(k)], 2));
        out.push_back(std::move(footer));
    }
    return csv::format(header, out);
}

inline CommandResult cmd_score(const RunOptions& opt) {
    opt.weights.check();
    const auto corpus = load_corpus(opt, true);
    RunDir run("score", opt);
    run.input("queries", opt.queries);
    run.input("plans", opt.plans);
    Session session(opt);
    const auto ctx = session.context("metric-wise-eval");
    const auto order = plan_order(corpus);
    std::vector<PlanScorecard> cards(order.size());
    parallel_for(order.size(), opt.jobs, [&](std::size_t t) {
        const auto& p = corpus.plans[order[t]];
        const auto* q = corpus.find(p.query_id);
        cards[t] = score_plan(p.plan, &q->best_plan, q->query, opt.mode, opt.style, ctx, opt.weights);
    });

    std::vector<std::string> header = {"query_id", "llm", "prompt_type", "parseable"};
    for (auto& h : table_metric_header()) header.push_back(h);
    for (const char* h : {"Overall", "mechanical_format_ok", "format_disagreement"}) header.emplace_back(h);
    std::vector<csv::Row> rows;
    std::map<std::pair<std::string, std::string>, PlannerSummary> acc;
    for (std::size_t t = 0; t < order.size(); ++t) {
        const auto& p = corpus.plans[order[t]];
        const auto& c = cards[t];
        csv::Row row = {p.query_id, p.llm, p.prompt_type, c.candidate_parseable ? "1" : "0"};
        for (auto k : kTableOrder) row.push_back(fmt(c.per_metric.at(k).points));
        row.push_back(fmt(c.total));
        row.push_back(c.mechanical_format_ok ? "1" : "0");
        row.push_back(c.format_disagreement ? "1" : "0");
        rows.push_back(std::move(row));
        auto& s = acc[{p.prompt_type, p.llm}];
        s.prompt_type = p.prompt_type;
        s.llm = p.llm;
        ++s.n;
        for (auto k : kAllMetrics) s.points[index_of(k)] += c.per_metric.at(k).points;
        s.overall += c.total;
    }
    std::vector<PlannerSummary> summaries;
    for (auto& [key, s] : acc) {
        for (auto& v : s.points) v /= static_cast<double>(s.n);
        s.overall /= static_cast<double>(s.n);
        summaries.push_back(s);
    }
    run.write("scores.csv", csv::format(header, rows));
    const auto summary = summaries.empty() ? csv::format({"prompt_type"}, {}) : summary_csv(summaries, opt.weights);
    run.write("score_summary.csv", summary);
    echo(opt, "Metric-wise summary", summary);
    return run.finish(&session.gateway(), render_aligned(summary));
}

// ---------------------------------------------------------------------------
// oneshot

inline CommandResult cmd_oneshot(const RunOptions& opt) {
    const auto corpus = load_corpus(opt, true);
    RunDir run("oneshot", opt);
    run.input("queries", opt.queries);
    run.input("plans", opt.plans);
    Session session(opt);
    const auto ctx = session.context("one-shot-judge");
    const auto order = plan_order(corpus);
    std::vector<OneShotResult> results(order.size());
    parallel_for(order.size(), opt.jobs, [&](std::size_t t) {
        const auto& p = corpus.plans[order[t]];
        const auto* q = corpus.find(p.query_id);
        results[t] = evaluate_oneshot(p.plan, &q->best_plan, q->query, ctx);
    });

    std::vector<csv::Row> rows;
    std::map<std::pair<std::string, std::string>, std::vector<RatingTier>> tiers;
    for (std::size_t t = 0; t < order.size(); ++t) {
        const auto& p = corpus.plans[order[t]];
        const auto& r = results[t];
        rows.push_back({p.query_id, p.llm, p.prompt_type, p.parseable ? "1" : "0", fmt(r.precision), fmt(r.recall),
                        fmt(r.f1), r.format_ok ? "1" : "0", fmt(r.format_fraction), fmt(r.dependencies_ok_fraction),
                        fmt(r.placeholders_ok_fraction), std::string(to_string(r.rating)),
                        r.judge_rating.value_or(""), r.rating_disagreement ? "1" : "0"});
        tiers[{p.prompt_type, p.llm}].push_back(r.rating);
    }
    run.write("ratings.csv", csv::format({"query_id", "llm", "prompt_type", "parseable", "precision", "recall", "f1",
                                          "format_ok", "format_fraction", "dependencies", "placeholders", "rating",
                                          "judge_rating", "rating_disagreement"},
                                         rows));
    std::vector<csv::Row> brows;
    for (const auto& [key, list] : tiers) {
        const auto b = bucket_rates(list);
        brows.push_back({key.first, key.second, std::to_string(list.size()), fmt(b.a_plus, 2), fmt(b.a, 2), fmt(b.b, 2)});
    }
    const auto buckets = csv::format({"prompt_type", "llm", "n", "A+", "A", "B"}, brows);
    run.write("buckets.csv", buckets);
    echo(opt, "One-shot quality buckets (%)", buckets);
    return run.finish(&session.gateway(), render_aligned(buckets));
}

// ---------------------------------------------------------------------------
// refine

struct RefineTask {
    std::string query_id;
    std::string llm;
    std::string prompt_type;
    std::string initial_text;
};

inline std::string tier_table_csv(const std::vector<RatingTier>& pre, const std::vector<RatingTier>& post) {
    std::array<std::size_t, 7> a{}, b{};
    for (auto t : pre) ++a[static_cast<std::size_t>(t)];
    for (auto t : post) ++b[static_cast<std::size_t>(t)];
    auto pct = [](std::size_t k, std::size_t n) { return fmt(n ? 100.0 * static_cast<double>(k) / static_cast<double>(n) : 0.0, 2); };
    std::vector<csv::Row> rows;
    for (auto t : kAllTiers) {
        const auto i = static_cast<std::size_t>(t);
        rows.push_back({std::string(to_string(t)), std::to_string(a[i]), pct(a[i], pre.size()), std::to_string(b[i]),
                        pct(b[i], post.size())});
    }
    rows.push_back({"Grand Total", std::to_string(pre.size()), pct(pre.size(), pre.size()), std::to_string(post.size()),
                    pct(post.size(), post.size())});
    return csv::format({"tier", "pre_count", "pre_pct", "post_count", "post_pct"}, rows);
}

inline CommandResult cmd_refine(const RunOptions& opt) {
    const auto corpus = load_corpus(opt, false);
    RunDir run("refine", opt);
    run.input("queries", opt.queries);
    run.input("plans", opt.plans);
    Session session(opt);
    const auto evaluator = session.context("step-wise-eval");
    const auto optimizer = session.context("plan-optimizer");
    const auto rater = session.context("one-shot-judge");

    std::vector<RefineTask> tasks;
    if (opt.plans) {
        for (auto i : plan_order(corpus)) {
            const auto& p = corpus.plans[i];
            tasks.push_back({p.query_id, p.llm, p.prompt_type, p.plan});
        }
    } else {
        for (const auto& q : corpus.queries) tasks.push_back({q.query_id, "", "", to_document(q.plan_lineage.front())});
    }

    LoopConfig loop;
    loop.max_passes = opt.max_passes;
    struct Outcome {
        std::optional<LoopTrace> trace;
        RatingTier pre = RatingTier::ExtremelyBad;
        RatingTier post = RatingTier::ExtremelyBad;
    };
    std::vector<Outcome> outcomes(tasks.size());
    parallel_for(tasks.size(), opt.jobs, [&](std::size_t t) {
        const auto& task = tasks[t];
        const auto* q = corpus.find(task.query_id);
        auto& out = outcomes[t];
        out.pre = evaluate_oneshot(task.initial_text, &q->best_plan, q->query, rater).rating;
        out.post = out.pre;
        const auto initial = try_parse_plan(task.initial_text);
        if (!initial || !validate(*initial).valid) return;
        out.trace = run_loop(*initial, q->query, evaluator, optimizer, loop, task.query_id);
        const auto& head = out.trace->lineage.head();
        if (out.trace->lineage.size() > 1) out.post = evaluate_oneshot(head, q->best_plan, q->query, rater).rating;
    });

    std::vector<RatingTier> pre, post;
    std::vector<LineageMetadata> metas;
    std::map<std::string, std::size_t> stops;
    std::size_t skipped = 0;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        const auto& task = tasks[t];
        const auto& out = outcomes[t];
        pre.push_back(out.pre);
        post.push_back(out.post);
        if (!out.trace) {
            ++skipped;
            continue;
        }
        ++stops[std::string(to_string(out.trace->stop_reason))];
        metas.push_back(derive_metadata(out.trace->lineage, out.trace->pass_boundaries));
        auto doc = out.trace->to_json();
        std::string name = safe_file_stem(task.query_id);
        if (!task.llm.empty()) {
            doc["llm"] = task.llm;
            doc["prompt_type"] = task.prompt_type;
            name += "__" + safe_file_stem(task.llm) + "__" + safe_file_stem(task.prompt_type);
        }
        run.write(fs::path("traces") / (name + ".json"), doc.dump(2) + "\n");
    }
    const auto shift = tier_table_csv(pre, post);
    run.write("tier_shift.csv", shift);
    std::vector<csv::Row> stats_rows = {{"tasks", std::to_string(tasks.size())},
                                        {"refined", std::to_string(metas.size())},
                                        {"skipped_invalid", std::to_string(skipped)}};
    if (!metas.empty()) {
        const auto avg = average_metadata(metas);
        stats_rows.push_back({"mean_distinct_plans", fmt(avg.mean_distinct_plans)});
        stats_rows.push_back({"mean_passes", fmt(avg.mean_passes)});
    }
    for (auto r : {StopReason::NoChangePass, StopReason::MaxPasses, StopReason::Aborted}) {
        const std::string name(to_string(r));
        stats_rows.push_back({"stop:" + name, std::to_string(stops.count(name) ? stops.at(name) : 0)});
    }
    const auto loop_stats = csv::format({"item", "value"}, stats_rows);
    run.write("loop_stats.csv", loop_stats);
    echo(opt, "Pre/post loop tiers", shift);
    echo(opt, "Loop statistics", loop_stats);
    return run.finish(&session.gateway(), render_aligned(shift));
}

// ---------------------------------------------------------------------------
// learn-weights

inline CommandResult cmd_learn_weights(const RunOptions& opt) {
    if (!opt.triples) throw Error(ErrorKind::BadInput, "--triples is required");
    const auto triples = parse_triples_csv(read_file(*opt.triples));
    RunDir run("learn-weights", opt);
    run.input("triples", opt.triples);
    LearnOptions lo;
    lo.grid_step = opt.grid_step;
    lo.hinge_c = opt.hinge_c;
    lo.jobs = opt.jobs;
    const auto learned = learn_weights(triples, lo);
    const auto q = quantize_checked(learned.weights, triples, opt.lattice);

    nlohmann::ordered_json doc;
    auto named = [](const WeightVector& w) {
        nlohmann::ordered_json o;
        for (auto k : kAllMetrics) o[std::string(short_name(k))] = w[k];
        return o;
    };
    doc["triples"] = triples.size();
    doc["constraints"] = triples.size() * 2;
    doc["grid_step"] = opt.grid_step;
    doc["candidates"] = learned.candidates;
    doc["continuous"] = named(learned.weights);
    doc["quantized"] = named(q.quantized);
    doc["lattice"] = opt.lattice;
    doc["satisfied"] = learned.satisfied;
    doc["margin"] = learned.margin;
    doc["median_margin"] = learned.median_margin;
    if (learned.relaxed_objective) doc["relaxed_objective"] = *learned.relaxed_objective;
    doc["quantized_satisfied"] = q.satisfied_after;
    doc["quantization_dropped_constraints"] = q.dropped();
    run.write("weights.json", doc.dump(2) + "\n");

    std::vector<csv::Row> wrows;
    for (auto k : kTableOrder) wrows.push_back({std::string(short_name(k)), fmt(learned.weights[k]), fmt(q.quantized[k], 2)});
    const auto wcsv = csv::format({"metric", "continuous", "quantized"}, wrows);
    run.write("weights.csv", wcsv);
    std::vector<csv::Row> vrows;
    for (const auto& v : learned.violations) vrows.push_back({v.query_id, std::string(to_string(v.which)), fmt(v.slack, 6)});
    run.write("violations.csv", csv::format({"query_id", "inequality", "slack"}, vrows));
    echo(opt, "Learned weights", wcsv);
    std::ostringstream s;
    s << render_aligned(wcsv) << "satisfied " << learned.satisfied << "/" << triples.size() * 2 << ", margin "
      << fmt(learned.margin) << "\n";
    if (q.dropped()) s << "warning: quantization reduced satisfied constraints to " << q.satisfied_after << "\n";
    return run.finish(nullptr, s.str());
}

// ---------------------------------------------------------------------------
// sensitivity

/// Table columns: prompt_type, llm, and either the seven metric point columns
/// (short names), the published "learned"/"equal" totals, or both.
inline CommandResult cmd_sensitivity(const RunOptions& opt) {
    if (!opt.table) throw Error(ErrorKind::BadInput, "--table is required");
    opt.weights.check();
    const csv::Table table(read_file(*opt.table));
    table.require({"prompt_type", "llm"});
    const bool has_points = std::all_of(kAllMetrics.begin(), kAllMetrics.end(),
                                        [&](MetricKind k) { return table.has(std::string(short_name(k))); });
    const bool has_totals = table.has("learned") && table.has("equal");
    if (!has_points && !has_totals) {
        throw Error(ErrorKind::MissingColumn, "table needs metric point columns or learned/equal columns");
    }
    RunDir run("sensitivity", opt);
    run.input("table", opt.table);

    struct Group {
        std::map<std::string, SubScores> means;
        std::vector<double> learned, equal;
    };
    std::map<std::string, Group> groups;
    for (std::size_t r = 0; r < table.rows().size(); ++r) {
        const auto where = "table row " + std::to_string(r + 2);
        auto& g = groups[table.cell(r, "prompt_type")];
        const auto& llm = table.cell(r, "llm");
        if (has_points) {
            SubScores raw{};
            for (auto k : kAllMetrics) {
                const double w = opt.weights[k];
                const double pts = detail::parse_number(table.cell(r, std::string(short_name(k))), where);
                raw[index_of(k)] = w > 0.0 ? pts / w : 0.0;
            }
            if (!g.means.emplace(llm, raw).second) throw Error(ErrorKind::DuplicateTripleKey, where + ": repeated llm " + llm);
        }
        if (has_totals) {
            g.learned.push_back(detail::parse_number(table.cell(r, "learned"), where));
            g.equal.push_back(detail::parse_number(table.cell(r, "equal"), where));
        }
    }

    std::vector<csv::Row> rows, draw_rows;
    for (const auto& [prompt, g] : groups) {
        if (has_totals) {
            rows.push_back({prompt, "published", std::to_string(g.learned.size()),
                            fmt(stats::spearman_rho(g.learned, g.equal), 6), "", "", "", "0"});
        }
        if (has_points) {
            const auto rep = sensitivity(g.means, opt.weights, opt.n_draws, opt.seed);
            csv::Row row = {prompt, "recomputed", std::to_string(rep.planners.size()), fmt(rep.rho_equal, 6)};
            if (rep.rho_random.empty()) {
                row.insert(row.end(), {"", "", ""});
            } else {
                auto sorted = rep.rho_random;
                std::sort(sorted.begin(), sorted.end());
                row.push_back(fmt(sorted.front(), 6));
                row.push_back(fmt(median_of(sorted), 6));
                row.push_back(fmt(sorted.back(), 6));
            }
            row.push_back(std::to_string(rep.rho_random.size()));
            rows.push_back(std::move(row));
            for (std::size_t d = 0; d < rep.draws.size(); ++d) {
                csv::Row dr = {prompt, std::to_string(d + 1)};
                for (auto k : kTableOrder) dr.push_back(fmt(rep.draws[d][k]));
                dr.push_back(fmt(rep.rho_random[d], 6));
                draw_rows.push_back(std::move(dr));
            }
        }
    }
    const auto scsv = csv::format(
        {"prompt_type", "source", "n_planners", "rho_equal", "rho_min", "rho_median", "rho_max", "n_draws"}, rows);
    run.write("sensitivity.csv", scsv);
    std::vector<std::string> dh = {"prompt_type", "draw"};
    for (auto& h : table_metric_header()) dh.push_back(h);
    dh.emplace_back("rho");
    run.write("draws.csv", csv::format(dh, draw_rows));
    echo(opt, "Weight sensitivity", scsv);
    return run.finish(nullptr, render_aligned(scsv));
}

// ---------------------------------------------------------------------------
// agree

inline CommandResult cmd_agree(const RunOptions& opt) {
    if (!opt.labels) throw Error(ErrorKind::BadInput, "--labels is required");
    const auto labels = parse_labels_csv(read_file(*opt.labels));
    RunDir run("agree", opt);
    run.input("labels", opt.labels);
    const auto n = labels.item_ids.size();
    std::vector<std::size_t> items(n);
    for (std::size_t i = 0; i < n; ++i) items[i] = i;
    const auto& a = labels.labels[0];
    const auto& b = labels.labels[1];
    const std::string pair = labels.raters[0] + "," + labels.raters[1];

    std::vector<csv::Row> rows;
    auto add = [&](const std::string& statistic, const std::string& scheme, const std::string& raters,
                   const std::function<double(const std::vector<std::size_t>&)>& f) {
        const auto r = stats::with_bootstrap<std::size_t>(f, items, opt.resamples, opt.level, opt.seed);
        rows.push_back({statistic, scheme, raters, std::to_string(n), fmt(r.kappa, 6), fmt(r.ci_low, 6),
                        fmt(r.ci_high, 6), std::to_string(r.resamples)});
    };
    add("cohen_kappa", "nominal", pair, [&](const std::vector<std::size_t>& idx) {
        std::vector<std::string> x, y;
        for (auto i : idx) {
            x.push_back(a[i]);
            y.push_back(b[i]);
        }
        return stats::cohen_kappa(x, y);
    });
    if (opt.ordinal_k) {
        const int K = *opt.ordinal_k;
        auto as_int = [&](const std::string& s, std::size_t i) {
            int v = 0;
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc{} || p != s.data() + s.size()) {
                throw Error(ErrorKind::LabelOutOfRange, "item " + labels.item_ids[i] + ": label '" + s + "' is not ordinal");
            }
            return v;
        };
        std::vector<int> ia(n), ib(n);
        for (std::size_t i = 0; i < n; ++i) {
            ia[i] = as_int(a[i], i);
            ib[i] = as_int(b[i], i);
        }
        for (auto [scheme, name] : {std::pair{stats::WeightScheme::Quadratic, "quadratic"},
                                    std::pair{stats::WeightScheme::Linear, "linear"}}) {
            add("weighted_kappa", name, pair, [&, scheme = scheme](const std::vector<std::size_t>& idx) {
                std::vector<int> x, y;
                for (auto i : idx) {
                    x.push_back(ia[i]);
                    y.push_back(ib[i]);
                }
                return stats::weighted_kappa(x, y, K, scheme);
            });
        }
    }
    if (labels.raters.size() > 2) {
        std::map<std::string, std::size_t> category;
        for (const auto& col : labels.labels) {
            for (const auto& l : col) category.emplace(l, 0);
        }
        std::size_t c = 0;
        for (auto& [label, index] : category) index = c++;
        std::vector<std::vector<int>> counts(n, std::vector<int>(category.size(), 0));
        for (const auto& col : labels.labels) {
            for (std::size_t i = 0; i < n; ++i) ++counts[i][category.at(col[i])];
        }
        std::string all;
        for (const auto& r : labels.raters) all += (all.empty() ? "" : ",") + r;
        const int raters = static_cast<int>(labels.raters.size());
        add("fleiss_kappa", "nominal", all, [&](const std::vector<std::size_t>& idx) {
            std::vector<std::vector<int>> sample;
            for (auto i : idx) sample.push_back(counts[i]);
            return stats::fleiss_kappa(sample, raters);
        });
    }
    const auto acsv =
        csv::format({"statistic", "scheme", "raters", "n", "value", "ci_low", "ci_high", "resamples"}, rows);
    run.write("agree.csv", acsv);
    echo(opt, "Agreement", acsv);
    return run.finish(nullptr, render_aligned(acsv));
}

// ---------------------------------------------------------------------------
// report

/// Renders every known table found in the run directory into report.txt.
inline CommandResult cmd_report(const RunOptions& opt) {
    if (opt.out.empty()) throw Error(ErrorKind::BadInput, "--out must name an existing run directory");
    if (!fs::is_directory(opt.out)) throw Error(ErrorKind::Io, "no run directory at " + opt.out.string());
    static const std::vector<std::pair<std::string, std::string>> known = {
        {"ingest_summary.csv", "Ingestion summary"},
        {"score_summary.csv", "Metric-wise evaluation (mean points per planner)"},
        {"buckets.csv", "One-shot quality buckets (%)"},
        {"tier_shift.csv", "Evaluator/optimizer loop: tier distribution before and after"},
        {"loop_stats.csv", "Loop statistics"},
        {"weights.csv", "Learned metric weights"},
        {"sensitivity.csv", "Weight sensitivity (Spearman rank correlation)"},
        {"agree.csv", "Agreement statistics"},
    };
    std::string text;
    std::size_t found = 0;
    for (const auto& [file, title] : known) {
        const auto path = opt.out / file;
        if (!fs::exists(path)) continue;
        ++found;
        text += title + "\n" + std::string(title.size(), '=') + "\n" + render_aligned(read_file(path)) + "\n";
    }
    if (!found) throw Error(ErrorKind::EmptyInput, "no report tables in " + opt.out.string());
    write_file_atomic(opt.out / "report.txt", text);
    CommandResult r;
    r.outputs.emplace_back("report.txt");
    r.summary = text;
    return r;
}

inline CommandResult run_command(const std::string& name, const RunOptions& opt) {
    if (name == "validate") return cmd_validate(opt);
    if (name == "score") return cmd_score(opt);
    if (name == "oneshot") return cmd_oneshot(opt);
    if (name == "refine") return cmd_refine(opt);
    if (name == "learn-weights") return cmd_learn_weights(opt);
    if (name == "sensitivity") return cmd_sensitivity(opt);
    if (name == "agree") return cmd_agree(opt);
    if (name == "report") return cmd_report(opt);
    throw Error(ErrorKind::BadInput, "unknown command '" + name + "'");
}

}  // namespace planeval::bench
