// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 on any failure.

#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "planeval/bench.hpp"
#include "planeval/dataset.hpp"
#include "planeval/metrics.hpp"
#include "planeval/oneshot.hpp"
#include "planeval/refine.hpp"
#include "planeval/stats.hpp"
#include "planeval/weights.hpp"
#include "support.hpp"

using namespace planeval;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kOverallTol = 0.05;
constexpr double kFooterTol = 0.05;
constexpr double kRhoTol = 1e-3;
constexpr double kWeightedKappaTol = 1e-12;
constexpr double kOracleTol = 1e-9;
constexpr double kIngestBudgetSeconds = 120.0;
constexpr int kLoopFuzzCases = 1000;
constexpr int kLearnerInstances = 200;

struct Check {
    bool ok = true;
    std::ostringstream detail;

    void expect(bool cond, const std::string& what) {
        if (!cond) {
            if (ok) detail << "first failure: " << what;
            ok = false;
        }
    }
};

fs::path data(const std::string& rel) { return testsupport::source_dir() / "data" / rel; }

std::string num(double v, int prec = 6) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(prec) << v;
    return s.str();
}

// ---------------------------------------------------------------------------

Check criterion1() {
    Check c;
    const csv::Table t(read_file(data("published_metric_points.csv")));
    const auto w = WeightVector::standard();
    double worst = 0.0;
    for (std::size_t r = 0; r < t.rows().size(); ++r) {
        std::map<MetricKind, MetricScore> per;
        for (auto k : kAllMetrics) {
            const double pts = std::stod(t.cell(r, std::string(short_name(k))));
            per[k] = {k, pts / w[k], pts, "", std::nullopt};
        }
        const double overall = aggregate(per, w);
        const double published = std::stod(t.cell(r, "Overall"));
        worst = std::max(worst, std::abs(overall - published));
        c.expect(std::abs(overall - published) <= kOverallTol, t.cell(r, "llm") + " " + num(overall, 2));
    }
    c.detail << (c.ok ? "" : "; ") << t.rows().size() << " rows, max |diff| " << num(worst, 3) << " (tol " << kOverallTol
             << ")";
    return c;
}

Check criterion2() {
    Check c;
    const csv::Table t(read_file(data("published_metric_points.csv")));
    const auto w = WeightVector::standard();
    // Published footers, table column order: Overall, Format, TPA, SE, QA, Dep, Red, TUC.
    const std::map<std::string, std::array<double, 8>> published = {
        {"with_lineage", {73.11, 70.43, 64.36, 78.73, 80.18, 88.88, 85.56, 48.74}},
        {"without_lineage", {78.23, 74.26, 69.10, 83.24, 80.53, 92.78, 86.01, 71.12}},
    };
    double worst = 0.0;
    for (const auto& [prompt, expected] : published) {
        std::vector<bench::PlannerSummary> rows;
        for (std::size_t r = 0; r < t.rows().size(); ++r) {
            if (t.cell(r, "prompt_type") != prompt) continue;
            bench::PlannerSummary s;
            s.prompt_type = prompt;
            s.llm = t.cell(r, "llm");
            for (auto k : kAllMetrics) s.points[index_of(k)] = std::stod(t.cell(r, std::string(short_name(k))));
            s.overall = std::stod(t.cell(r, "Overall"));
            rows.push_back(s);
        }
        c.expect(rows.size() == 14, prompt + " has " + std::to_string(rows.size()) + " planners");
        const auto f = bench::summary_footer(rows, w);
        std::array<double, 8> got{f.overall};
        for (std::size_t i = 0; i < 7; ++i) got[i + 1] = f.normalized[index_of(kTableOrder[i])];
        for (std::size_t i = 0; i < 8; ++i) {
            worst = std::max(worst, std::abs(got[i] - expected[i]));
            c.expect(std::abs(got[i] - expected[i]) <= kFooterTol, prompt + " column " + std::to_string(i));
        }
        if (prompt == "with_lineage") {
            c.detail << (c.ok ? "" : "; ") << "with lineage TUC " << num(got[7], 3) << ", Format " << num(got[1], 3)
                     << "; ";
        }
    }
    c.detail << "max |diff| " << num(worst, 3) << " (tol " << kFooterTol << ")";
    return c;
}

Check criterion3() {
    Check c;
    const csv::Table t(read_file(data("weight_sensitivity_scores.csv")));
    const std::map<std::string, double> published = {{"with_lineage", 0.934}, {"without_lineage", 0.894}};
    // 14 planners without ties: rho = 1 - 6 * sum(d^2) / 2730, sum(d^2) counted by hand from the rankings.
    const std::map<std::string, double> exact = {{"with_lineage", 1.0 - 180.0 / 2730.0},
                                                 {"without_lineage", 1.0 - 288.0 / 2730.0}};
    for (const auto& [prompt, expected] : published) {
        std::vector<double> learned, equal;
        for (std::size_t r = 0; r < t.rows().size(); ++r) {
            if (t.cell(r, "prompt_type") != prompt) continue;
            learned.push_back(std::stod(t.cell(r, "learned")));
            equal.push_back(std::stod(t.cell(r, "equal")));
        }
        const double rho = stats::spearman_rho(learned, equal);
        const double truncated = std::floor(rho * 1000.0) / 1000.0;
        c.expect(std::abs(truncated - expected) < 1e-12, prompt + " truncated rho " + num(truncated, 3));
        c.expect(std::abs(rho - expected) < kRhoTol, prompt + " rho " + num(rho));
        c.expect(std::abs(rho - exact.at(prompt)) < 1e-12, prompt + " rho differs from the rank-difference value");
        c.detail << (c.ok ? "" : "; ") << prompt << " rho " << num(rho) << " (published " << num(expected, 3) << "); ";
    }
    c.detail << "three decimals compared by truncation, |diff| < " << kRhoTol;
    return c;
}

Check criterion4() {
    Check c;
    const std::vector<std::tuple<double, bool, RatingTier>> table = {
        {0.30, true, RatingTier::ExtremelyBad}, {0.30 + 1e-6, true, RatingTier::VeryBad},
        {0.45, true, RatingTier::VeryBad},      {0.45 + 1e-6, true, RatingTier::Bad},
        {0.60, true, RatingTier::Bad},          {0.60 + 1e-6, true, RatingTier::Acceptable},
        {0.75, true, RatingTier::Acceptable},   {0.75 + 1e-6, true, RatingTier::Good},
        {0.85, true, RatingTier::Good},         {0.85 + 1e-6, true, RatingTier::VeryGood},
        {0.95, true, RatingTier::VeryGood},     {0.95 + 1e-6, true, RatingTier::ExtremelyGood},
        {0.0, true, RatingTier::ExtremelyBad},  {1.0, true, RatingTier::ExtremelyGood},
        {1.0, false, RatingTier::ExtremelyBad}, {0.7, false, RatingTier::ExtremelyBad},
    };
    for (const auto& [f1, ok, tier] : table) {
        c.expect(rating_from_f1(f1, ok) == tier, "f1 " + num(f1) + (ok ? "" : " (json invalid)"));
    }
    std::mt19937_64 rng(404);
    const int multisets = 2000;
    for (int trial = 0; trial < multisets; ++trial) {
        std::vector<RatingTier> tiers(1 + rng() % 60);
        for (auto& t : tiers) t = kAllTiers[rng() % kAllTiers.size()];
        const auto b = bucket_rates(tiers);
        c.expect(b.a_plus <= b.a && b.a <= b.b && b.b <= 100.0, "bucket nesting, trial " + std::to_string(trial));
    }
    c.detail << (c.ok ? "" : "; ") << table.size() << " boundary cases, " << multisets << " random multisets";
    return c;
}

// ---------------------------------------------------------------------------

int step_number(const std::string& user_prompt) {
    static const std::regex re(R"(Step number:\s*(\d+))");
    std::smatch m;
    return std::regex_search(user_prompt, m, re) ? std::stoi(m[1].str()) : 1;
}

// Replays the event log against the visit order the loop must follow.
bool events_follow_control_flow(const LoopTrace& t, const Plan& initial, std::string& why) {
    std::size_t lineage_pos = 0;
    int length = static_cast<int>(initial.size());
    std::size_t e = 0;
    for (std::size_t pass = 0; pass < t.pass_boundaries.size(); ++pass) {
        int i = 1;
        std::size_t appended = 0;
        length = static_cast<int>(t.lineage.plans()[lineage_pos].size());
        while (i <= length) {
            if (e >= t.events.size()) {
                why = "event log ends inside pass " + std::to_string(pass + 1);
                return false;
            }
            const auto& ev = t.events[e++];
            if (ev.pass != static_cast<int>(pass) + 1 || ev.index != i) {
                why = "expected pass " + std::to_string(pass + 1) + " step " + std::to_string(i) + ", got pass " +
                      std::to_string(ev.pass) + " step " + std::to_string(ev.index);
                return false;
            }
            if (!ev.note.empty() && ev.note.find("visit budget") != std::string::npos) break;
            if (!ev.appended) {
                ++i;
                continue;
            }
            ++appended;
            ++lineage_pos;
            const int new_length = static_cast<int>(t.lineage.plans()[lineage_pos].size());
            if (ev.length_changed != (new_length != length)) {
                why = "length_changed flag disagrees with lineage";
                return false;
            }
            if (new_length == length) {
                ++i;
            } else {
                length = new_length;
                i = std::min(i, length);
            }
        }
        if (appended != t.pass_boundaries[pass]) {
            why = "pass boundary count mismatch in pass " + std::to_string(pass + 1);
            return false;
        }
    }
    if (e != t.events.size()) {
        why = "extra events after the last pass";
        return false;
    }
    return true;
}

Check criterion5() {
    Check c;
    std::mt19937_64 master(5150);
    const std::vector<std::string> tags = {"INCORRECT TOOL", "INCORRECT PROMPT", "COMPLEX PROMPT", "REPEATED DETAIL",
                                           "MULTI-TOOL PROMPT"};
    std::map<std::string, int> stops;
    int max_passes_seen = 0;
    std::size_t appends = 0, length_changes = 0;
    for (int n = 0; n < kLoopFuzzCases; ++n) {
        std::mt19937_64 rng(master());
        const int max_passes = 1 + static_cast<int>(rng() % 5);
        const double flag_rate = 0.1 + 0.6 * static_cast<double>(rng() % 100) / 100.0;
        const Plan initial = testsupport::random_valid_plan(rng, 6);
        auto backend = std::make_shared<testsupport::FnBackend>([&rng, &tags, flag_rate](const JudgeRequest& r) {
            const bool evaluator = r.system_prompt.find("You review one step") != std::string::npos;
            if (evaluator) {
                const int step = step_number(r.user_prompt);
                if (std::uniform_real_distribution<double>(0, 1)(rng) >= flag_rate) {
                    return std::to_string(step) + "\n1. fine: NO CHANGE";
                }
                std::string out = std::to_string(step);
                const int k = 1 + static_cast<int>(rng() % 2);
                for (int j = 1; j <= k; ++j) out += "\n" + std::to_string(j) + ". issue: " + tags[rng() % tags.size()];
                return out;
            }
            const auto current = ScriptedJudge::plan_block(r.user_prompt).value_or("{}");
            std::string plan;
            switch (rng() % 4) {
                case 0: plan = current; break;  // optimizer returns the plan unchanged
                case 1: plan = R"J({"1": {"query": "LLM('x (2)')", "depends_on": [2]}})J"; break;  // invalid revision
                default: plan = to_document(testsupport::random_valid_plan(rng, 6)); break;
            }
            return "CHANGE 0: edit\nCHANGE 1: repair\nNEW PLAN STARTS\n" + plan;
        });
        JudgeGateway gateway(backend);
        JudgeContext ctx;
        ctx.gateway = &gateway;
        LoopConfig cfg;
        cfg.max_passes = max_passes;
        const auto t = run_loop(initial, "fuzz query", ctx, ctx, cfg, "f" + std::to_string(n));
        const std::string tag = "case " + std::to_string(n) + ": ";
        ++stops[std::string(to_string(t.stop_reason))];
        max_passes_seen = std::max(max_passes_seen, static_cast<int>(t.pass_boundaries.size()));
        c.expect(t.stop_reason != StopReason::Aborted, tag + "aborted: " + t.error);
        c.expect(static_cast<int>(t.pass_boundaries.size()) <= max_passes, tag + "too many passes");
        c.expect(t.lineage.plans().front() == initial, tag + "lineage does not start at the initial plan");
        for (std::size_t k = 0; k < t.lineage.size(); ++k) {
            c.expect(validate(t.lineage.plans()[k]).valid, tag + "invalid lineage entry");
            if (k > 0) {
                c.expect(to_document(t.lineage.plans()[k - 1]) != to_document(t.lineage.plans()[k]),
                         tag + "adjacent lineage entries are equal");
            }
        }
        const bool last_pass_clean = !t.pass_boundaries.empty() && t.pass_boundaries.back() == 0;
        c.expect((t.stop_reason == StopReason::NoChangePass) == last_pass_clean, tag + "stop reason vs last pass");
        if (t.stop_reason == StopReason::MaxPasses) {
            c.expect(static_cast<int>(t.pass_boundaries.size()) == max_passes, tag + "MaxPasses before the limit");
        }
        for (const auto& ev : t.events) {
            appends += ev.appended;
            length_changes += ev.length_changed;
        }
        std::string why;
        c.expect(events_follow_control_flow(t, initial, why), tag + why);
    }
    c.detail << (c.ok ? "" : "; ") << kLoopFuzzCases << " fuzz cases, stops NoChangePass=" << stops["NoChangePass"]
             << " MaxPasses=" << stops["MaxPasses"] << ", most passes " << max_passes_seen << ", " << appends
             << " revisions appended, " << length_changes << " length changes";
    return c;
}

// ---------------------------------------------------------------------------

struct Oracle {
    std::array<double, 7> w{};
    std::size_t satisfied = 0;
    double median = 0;
};

Oracle brute_force(const std::vector<LineageTriple>& triples, int m) {
    Oracle best;
    bool have = false;
    std::vector<double> margins;
    for (int a = 0; a <= m; ++a)
        for (int b = 0; a + b <= m; ++b)
            for (int c = 0; a + b + c <= m; ++c)
                for (int e = 0; e <= m; ++e)
                    for (int f = 0; e + f <= m; ++f) {
                        const int d = m - a - b - c, g = m - e - f;
                        const std::array<double, 7> w = {70.0 * a / m, 70.0 * b / m, 70.0 * c / m, 70.0 * d / m,
                                                         30.0 * e / m, 30.0 * f / m, 30.0 * g / m};
                        margins.clear();
                        std::size_t sat = 0;
                        for (const auto& t : triples) {
                            double x = 0, y = 0;
                            for (int k = 0; k < 7; ++k) {
                                x += w[k] * (t.best[k] - t.pen[k]);
                                y += w[k] * (t.pen[k] - t.ante[k]);
                            }
                            margins.push_back(x);
                            margins.push_back(y);
                            sat += (x >= -1e-9) + (y >= -1e-9);
                        }
                        std::sort(margins.begin(), margins.end());
                        const auto n = margins.size();
                        const double med = n % 2 ? margins[n / 2] : 0.5 * (margins[n / 2 - 1] + margins[n / 2]);
                        if (!have || sat > best.satisfied || (sat == best.satisfied && med > best.median + 1e-9)) {
                            best = {w, sat, med};
                            have = true;
                        }
                    }
    return best;
}

Check criterion6() {
    Check c;
    std::mt19937_64 rng(66);
    std::uniform_real_distribution<double> u(0, 1);
    for (int n = 0; n < kLearnerInstances; ++n) {
        std::vector<LineageTriple> triples(1 + rng() % 3);
        for (auto& t : triples) {
            for (int k = 0; k < 7; ++k) {
                // Mix continuous scores with coarse ones so exact ties occur.
                const bool coarse = rng() % 2;
                t.ante[k] = coarse ? static_cast<double>(rng() % 3) / 2 : u(rng);
                t.pen[k] = coarse ? static_cast<double>(rng() % 3) / 2 : u(rng);
                t.best[k] = coarse ? static_cast<double>(rng() % 3) / 2 : u(rng);
            }
        }
        LearnOptions opt;
        opt.grid_step = 0.1;
        const auto got = learn_weights(triples, opt);
        const auto want = brute_force(triples, 10);
        bool same = got.satisfied == want.satisfied;
        for (int k = 0; k < 7; ++k) same = same && std::abs(got.weights.weights[k] - want.w[k]) < kOracleTol;
        c.expect(same, "instance " + std::to_string(n) + " differs from brute force");
    }
    const int quantize_cases = 2000;
    for (int n = 0; n < quantize_cases; ++n) {
        const auto w = dirichlet_draw(rng, 70, 30);
        const auto q = quantize(w, 5.0);
        double eff = 0, effc = 0;
        for (int k = 0; k < 7; ++k) {
            c.expect(std::fmod(q.weights[k], 5.0) == 0.0, "quantized weight off lattice");
            (k < 4 ? eff : effc) += q.weights[k];
        }
        c.expect(eff == 70.0 && effc == 30.0, "quantized budgets not exact");
    }
    const auto standard = WeightVector::standard();
    bool feasible = true;
    try {
        standard.check(0.0);
    } catch (const Error&) {
        feasible = false;
    }
    c.expect(feasible, "standard weights violate the budgets");
    c.expect(quantize(standard).weights == standard.weights, "standard weights are not lattice points");
    c.detail << (c.ok ? "" : "; ") << kLearnerInstances << " learner instances at grid 0.1, " << quantize_cases
             << " quantizations, (20,20,15,15,10,10,10) feasible";
    return c;
}

// ---------------------------------------------------------------------------

Check criterion7() {
    Check c;
    const auto listing = hop_profile(parse_plan(testsupport::listing1_text()));
    c.expect(listing.hops == 4 && listing.category == HopCategory::ThreePlus, "listing plan");
    const auto single = hop_profile(parse_plan(R"J({"1": {"query": "T2S([], 'count calls')", "depends_on": []}})J"));
    c.expect(single.hops == 0 && single.category == HopCategory::ZeroHop, "single step plan");
    const auto join = hop_profile(parse_plan(R"J({"1": {"query": "T2S([], 'a')", "depends_on": []},
        "2": {"query": "RAG([], 'b')", "depends_on": []},
        "3": {"query": "LLM('merge (1) and (2)')", "depends_on": [1, 2]}})J"));
    c.expect(join.hops == 1 && join.category == HopCategory::OneHop, "two producers plus synthesis");

    std::mt19937_64 rng(77);
    const int dags = 2000;
    for (int n = 0; n < dags; ++n) {
        const auto plan = testsupport::random_valid_plan(rng, 12);
        const int size = static_cast<int>(plan.size());
        // Longest path by repeated edge relaxation.
        std::vector<int> dist(size + 1, 0);
        for (int round = 0; round < size; ++round) {
            for (const auto& s : plan.steps()) {
                for (int d : s.depends_on) dist[s.index] = std::max(dist[s.index], dist[d] + 1);
            }
        }
        const auto hp = hop_profile(plan);
        bool same = true;
        for (int k = 1; k <= size; ++k) same = same && hp.per_step_depth.at(k) == dist[k];
        same = same && hp.hops == *std::max_element(dist.begin() + 1, dist.end());
        c.expect(same, "random plan " + std::to_string(n));
    }
    c.detail << (c.ok ? "" : "; ") << "listing hops " << listing.hops << ", " << dags
             << " random plans against longest-path relaxation";
    return c;
}

Check criterion8() {
    Check c;
    const std::vector<int> same = {1, 2, 3, 2, 1};
    c.expect(stats::cohen_kappa(same, same) == 1.0, "perfect agreement");
    c.expect(stats::cohen_kappa(std::vector<int>{1, 1, 2, 2}, std::vector<int>{1, 2, 1, 2}) == 0.0, "chance agreement");
    c.expect(stats::cohen_kappa(std::vector<int>{1, 2}, std::vector<int>{2, 1}) == -1.0, "total disagreement");
    // Confusion matrix {{10,4,1},{3,12,5},{1,2,12}}; quadratic weighted kappa is 20/31.
    std::vector<int> a, b;
    const int m[3][3] = {{10, 4, 1}, {3, 12, 5}, {1, 2, 12}};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < m[i][j]; ++k) {
                a.push_back(i + 1);
                b.push_back(j + 1);
            }
    const double wk = stats::weighted_kappa(a, b, 3, stats::WeightScheme::Quadratic);
    c.expect(std::abs(wk - 20.0 / 31.0) <= kWeightedKappaTol, "quadratic 3x3 " + num(wk, 15));
    const std::vector<double> x = {1, 2, 3, 4, 5}, rev = {5, 4, 3, 2, 1};
    c.expect(stats::spearman_rho(x, x) == 1.0, "spearman identity");
    c.expect(stats::spearman_rho(x, rev) == -1.0, "spearman reversal");

    std::vector<std::size_t> items(a.size());
    std::iota(items.begin(), items.end(), std::size_t{0});
    const std::function<double(const std::vector<std::size_t>&)> stat = [&](const std::vector<std::size_t>& idx) {
        std::vector<int> x1, y1;
        for (auto i : idx) {
            x1.push_back(a[i]);
            y1.push_back(b[i]);
        }
        return stats::weighted_kappa(x1, y1, 3);
    };
    const auto r1 = stats::with_bootstrap(stat, items, 1000, 0.95, 2024);
    const auto r2 = stats::with_bootstrap(stat, items, 1000, 0.95, 2024);
    c.expect(std::memcmp(&r1.ci_low, &r2.ci_low, sizeof(double)) == 0 &&
                 std::memcmp(&r1.ci_high, &r2.ci_high, sizeof(double)) == 0,
             "bootstrap interval differs between runs");
    c.detail << (c.ok ? "" : "; ") << "weighted kappa " << num(wk, 12) << " (tol " << kWeightedKappaTol
             << "), bootstrap CI [" << num(r1.ci_low, 4) << ", " << num(r1.ci_high, 4) << "] stable";
    return c;
}

// ---------------------------------------------------------------------------

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = read_file(e.path());
    }
    return out;
}

Check criterion9() {
    Check c;
    auto run = [](const std::string& tag) {
        bench::RunOptions opt;
        bench::load_config(opt, data("sample/config.json"));
        opt.out = testsupport::temp_dir(tag);
        opt.jobs = 2;
        opt.grid_step = 0.05;
        opt.triples = data("sample/triples.csv");
        opt.labels = data("sample/labels.csv");
        opt.ordinal_k = 5;
        opt.table = data("published_metric_points.csv");
        for (const auto* cmd : {"validate", "score", "oneshot", "refine", "learn-weights", "sensitivity", "agree", "report"}) {
            bench::run_command(cmd, opt);
        }
        return opt.out;
    };
    const auto first = run("acceptA");
    const auto second = run("acceptB");
    const auto ta = tree(first), tb = tree(second);
    c.expect(ta == tb, "output directories differ");
    c.expect(ta.size() > 10, "pipeline wrote too few files");
    c.detail << (c.ok ? "" : "; ") << ta.size() << " files identical across two runs";
    fs::remove_all(first);
    fs::remove_all(second);
    return c;
}

Check criterion10() {
    Check c;
    const auto dir = testsupport::temp_dir("corpus");
    std::mt19937_64 rng(1010);
    std::vector<QueryRecord> queries;
    std::vector<GeneratedPlanRecord> plans;
    const int n_queries = 200, n_llms = 14;
    for (int q = 0; q < n_queries; ++q) {
        QueryRecord r;
        r.query_id = "s" + std::to_string(1000 + q);
        r.sample_split = q % 5 == 0 ? "Validation" : "Test";
        r.query = "Synthetic analytics question number " + std::to_string(q);
        r.is_subjective = rng() % 2;
        r.is_compound = rng() % 2;
        r.best_plan = testsupport::random_valid_plan(rng, 8);
        r.bpp_steps = static_cast<int>(r.best_plan.size());
        r.bpp_steps_grouped = r.bpp_steps <= 4 ? "[1,4]" : "[5,15]";
        r.plan_lineage = PlanLineage::from_plans(r.query_id, {testsupport::random_valid_plan(rng, 4), r.best_plan}).plans();
        queries.push_back(r);
        for (const auto* prompt : {"with_lineage", "without_lineage"}) {
            for (int l = 0; l < n_llms; ++l) {
                GeneratedPlanRecord p;
                p.query_id = r.query_id;
                p.llm = "planner-" + std::to_string(l);
                p.prompt_type = prompt;
                p.plan = rng() % 50 == 0 ? std::string("I could not produce a plan.")
                                         : to_document(testsupport::random_valid_plan(rng, 8));
                plans.push_back(p);
            }
        }
    }
    write_file_atomic(dir / "queries.csv", queries_to_csv(queries));
    write_file_atomic(dir / "plans.csv", plans_to_csv(plans));

    bench::RunOptions opt;
    opt.queries = dir / "queries.csv";
    opt.plans = dir / "plans.csv";
    opt.judge = "scripted:" + data("judges/all_pass.json").string();
    opt.out = dir / "run";
    opt.seed = 3;
    const auto start = std::chrono::steady_clock::now();
    try {
        for (const auto* cmd : {"validate", "score", "oneshot", "report"}) bench::run_command(cmd, opt);
    } catch (const std::exception& e) {
        c.expect(false, std::string("pipeline failed: ") + e.what());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    c.expect(seconds < kIngestBudgetSeconds, "took " + num(seconds, 1) + " s");
    for (const auto* file : {"ingest_summary.csv", "scores.csv", "score_summary.csv", "ratings.csv", "buckets.csv", "report.txt"}) {
        c.expect(fs::exists(opt.out / file), std::string("missing ") + file);
    }
    if (fs::exists(opt.out / "scores.csv")) {
        const csv::Table scores(read_file(opt.out / "scores.csv"));
        c.expect(scores.rows().size() == plans.size(), "scores.csv row count");
    }
    c.detail << (c.ok ? "" : "; ") << n_queries << " queries x " << 2 * n_llms << " plans in " << num(seconds, 1)
             << " s (budget " << kIngestBudgetSeconds << " s)";
    fs::remove_all(dir);
    return c;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Check()>>> criteria = {
        {"aggregate reproduces published Overall", criterion1},
        {"normalized-average footers", criterion2},
        {"Spearman rank agreement of learned vs equal weights", criterion3},
        {"rating thresholds and bucket nesting", criterion4},
        {"evaluator/optimizer loop guarantees", criterion5},
        {"weight learner matches brute force; quantization exact", criterion6},
        {"hop classification and depth recursion", criterion7},
        {"agreement and correlation statistics", criterion8},
        {"byte-identical repeated pipeline runs", criterion9},
        {"synthetic corpus ingest and scoring", criterion10},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Check result;
        try {
            result = criteria[i].second();
        } catch (const std::exception& e) {
            result.ok = false;
            result.detail << "exception: " << e.what();
        }
        failed += !result.ok;
        std::cout << (result.ok ? "[PASS]" : "[FAIL]") << " criterion " << (i + 1) << ": " << criteria[i].first << " -- "
                  << result.detail.str() << std::endl;
    }
    std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << std::endl;
    return failed ? 1 : 0;
}
