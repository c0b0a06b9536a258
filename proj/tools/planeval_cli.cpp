// planeval: command-line front end for the plan evaluation toolkit.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "planeval/bench.hpp"
#include "planeval/http_backend.hpp"

namespace {

using planeval::bench::RunOptions;

std::shared_ptr<planeval::JudgeBackend> remote_backend(const nlohmann::json& config) {
    if (!config.contains("backend")) {
        throw planeval::Error(planeval::ErrorKind::BackendUnavailable, "config has no \"backend\" section for --judge remote");
    }
    const auto& b = config.at("backend");
    planeval::HttpBackendConfig http;
    http.url = b.at("url").get<std::string>();
    http.response_pointer = b.value("response_pointer", http.response_pointer);
    http.api_key = b.value("api_key", std::string());
    http.timeout_seconds = b.value("timeout_seconds", http.timeout_seconds);
    if (b.contains("headers")) http.headers = b.at("headers").get<std::map<std::string, std::string>>();
    return std::make_shared<planeval::HttpBackend>(http);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tool-aware plan evaluation: validate, score, rate, refine and analyse planner output"};
    app.require_subcommand(1);
    app.fallthrough();

    std::optional<std::string> config, queries, plans, out, judge, mode, style, triples, labels, table, plan_file,
        prompts_dir, weights_file;
    std::optional<std::uint64_t> seed;
    std::optional<int> max_passes, n_draws, resamples, ordinal_k;
    std::optional<unsigned> jobs;
    std::optional<double> grid_step, lattice;
    bool text = false;

    app.add_option("--config", config, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--queries", queries, "queries.csv")->check(CLI::ExistingFile);
    app.add_option("--plans", plans, "plans.csv")->check(CLI::ExistingFile);
    app.add_option("--out", out, "run directory (default runs/<timestamp>-<seed>)");
    app.add_option("--seed", seed, "seed for judges, draws and resampling");
    app.add_option("--judge", judge, "remote or scripted:PATH");
    app.add_option("--mode", mode, "reference-based or reference-free")
        ->check(CLI::IsMember({"reference-based", "reference-free"}));
    app.add_option("--prompt-style", style, "deconstructed or single")->check(CLI::IsMember({"deconstructed", "single"}));
    app.add_option("--max-passes", max_passes, "evaluator/optimizer pass limit")->check(CLI::PositiveNumber);
    app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--prompts", prompts_dir, "directory of prompt overrides")->check(CLI::ExistingDirectory);
    app.add_option("--weights", weights_file, "weights JSON (array, object or learn-weights output)")
        ->check(CLI::ExistingFile);
    app.add_flag("--text", text, "also print aligned text tables");

    auto* validate = app.add_subcommand("validate", "check a plan file or a dataset");
    validate->add_option("--plan", plan_file, "single plan document")->check(CLI::ExistingFile);
    app.add_subcommand("score", "metric-wise scoring of generated plans");
    app.add_subcommand("oneshot", "one-shot rating of generated plans against best plans");
    app.add_subcommand("refine", "run the evaluator/optimizer loop");
    auto* learn = app.add_subcommand("learn-weights", "learn metric weights from lineage triples");
    learn->add_option("--triples", triples, "triples CSV")->check(CLI::ExistingFile)->required();
    learn->add_option("--grid-step", grid_step, "simplex grid step");
    learn->add_option("--lattice", lattice, "quantization lattice in points");
    auto* sens = app.add_subcommand("sensitivity", "rank stability of planner orderings under other weights");
    sens->add_option("--table", table, "per-planner table CSV")->check(CLI::ExistingFile)->required();
    sens->add_option("--draws", n_draws, "random weight draws per prompt type")->check(CLI::NonNegativeNumber);
    auto* agree = app.add_subcommand("agree", "inter-rater agreement with bootstrap intervals");
    agree->add_option("--labels", labels, "labels CSV (item_id, rater_a, rater_b, ...)")->check(CLI::ExistingFile)->required();
    agree->add_option("--ordinal-k", ordinal_k, "labels are ordinal 1..K")->check(CLI::PositiveNumber);
    agree->add_option("--resamples", resamples, "bootstrap resamples")->check(CLI::NonNegativeNumber);
    app.add_subcommand("report", "render the tables of a run directory");

    CLI11_PARSE(app, argc, argv);
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        RunOptions opt;
        opt.log = &std::cerr;
        if (config) planeval::bench::load_config(opt, *config);
        if (queries) opt.queries = *queries;
        if (plans) opt.plans = *plans;
        if (out) opt.out = *out;
        if (seed) opt.seed = *seed;
        if (judge) opt.judge = *judge;
        if (mode) opt.mode = planeval::bench::mode_from_string(*mode);
        if (style) opt.style = planeval::bench::style_from_string(*style);
        if (max_passes) opt.max_passes = *max_passes;
        if (jobs) opt.jobs = *jobs;
        if (prompts_dir) opt.prompts_dir = *prompts_dir;
        if (weights_file) opt.weights = planeval::bench::weights_from_json(nlohmann::json::parse(planeval::read_file(*weights_file)));
        if (triples) opt.triples = *triples;
        if (labels) opt.labels = *labels;
        if (table) opt.table = *table;
        if (plan_file) opt.plan_file = *plan_file;
        if (grid_step) opt.grid_step = *grid_step;
        if (lattice) opt.lattice = *lattice;
        if (n_draws) opt.n_draws = *n_draws;
        if (resamples) opt.resamples = *resamples;
        if (ordinal_k) opt.ordinal_k = *ordinal_k;
        opt.text = text;
        if (const char* dir = std::getenv("PLANEVAL_CACHE_DIR"); dir && *dir && !opt.cache_dir) opt.cache_dir = dir;
        if (opt.judge == "remote") opt.remote_backend = remote_backend(opt.config);
        if (opt.out.empty() && command != "report" && !opt.plan_file) {
            opt.out = planeval::bench::default_run_dir(opt.seed);
        }

        const auto result = planeval::bench::run_command(command, opt);
        if (!opt.text) std::cout << result.summary;
        if (!result.outputs.empty() && command != "report") std::cout << "wrote " << opt.out.string() << "\n";
        return result.exit_code;
    } catch (const planeval::Error& e) {
        std::cerr << "planeval " << command << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "planeval " << command << ": " << e.what() << "\n";
        return 2;
    }
}
