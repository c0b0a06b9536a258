#pragma once

// Metric weight learning from lineage triples, lattice quantization and the
// weight sensitivity analysis.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "planeval/error.hpp"
#include "planeval/metrics.hpp"
#include "planeval/stats.hpp"

namespace planeval {

using SubScores = std::array<double, 7>;  // raw scores in kAllMetrics order

struct LineageTriple {
    std::string query_id;
    SubScores best{};
    SubScores pen{};
    SubScores ante{};
};

enum class Inequality { BestOverPen, PenOverAnte };

inline std::string_view to_string(Inequality q) {
    return q == Inequality::BestOverPen ? "best>pen" : "pen>ante";
}

struct ConstraintViolation {
    std::string query_id;
    Inequality which = Inequality::BestOverPen;
    double slack = 0.0;  // how far the margin falls below zero, in points
};

struct LearnOptions {
    double grid_step = 0.02;
    double effectiveness_budget = 70.0;
    double efficiency_budget = 30.0;
    double hinge_c = 1.0;
    double hinge_gamma = 0.0;
    unsigned jobs = 1;
};

struct LearnResult {
    WeightVector weights;
    double margin = 0.0;  // min margin when all constraints hold, else 0
    std::size_t satisfied = 0;
    std::vector<ConstraintViolation> violations;
    double median_margin = 0.0;
    std::optional<double> relaxed_objective;  // set when some constraint fails
    std::size_t candidates = 0;
};

inline constexpr double kMarginTolerance = 1e-9;

/// All compositions of `total` into `parts` non-negative integers, lexicographic.
inline std::vector<std::vector<int>> compositions(int total, int parts) {
    std::vector<std::vector<int>> out;
    std::vector<int> current(static_cast<std::size_t>(parts), 0);
    auto rec = [&](auto&& self, int index, int remaining) -> void {
        if (index == parts - 1) {
            current[static_cast<std::size_t>(index)] = remaining;
            out.push_back(current);
            return;
        }
        for (int v = 0; v <= remaining; ++v) {
            current[static_cast<std::size_t>(index)] = v;
            self(self, index + 1, remaining - v);
        }
    };
    if (parts > 0) rec(rec, 0, total);
    return out;
}

inline int grid_divisions(double step) {
    if (!(step > 0.0) || step > 1.0) throw Error(ErrorKind::DegenerateGrid, "grid step must lie in (0, 1]");
    const double m = 1.0 / step;
    const auto rounded = static_cast<int>(std::llround(m));
    if (std::abs(m - rounded) > 1e-6 || rounded < 1) {
        throw Error(ErrorKind::DegenerateGrid, "grid step does not divide the simplex");
    }
    return rounded;
}

/// Constraint margins in points: per triple, best-pen then pen-ante.
inline std::vector<double> constraint_margins(const WeightVector& w, const std::vector<LineageTriple>& triples) {
    std::vector<double> out;
    out.reserve(triples.size() * 2);
    for (const auto& t : triples) {
        double a = 0.0, b = 0.0;
        for (std::size_t k = 0; k < 7; ++k) {
            a += w.weights[k] * (t.best[k] - t.pen[k]);
            b += w.weights[k] * (t.pen[k] - t.ante[k]);
        }
        out.push_back(a);
        out.push_back(b);
    }
    return out;
}

inline double median_of(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    return n % 2 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

/// gamma - C * sum of slacks max(0, gamma - margin) over both inequality families.
inline double hinge_relaxed_objective(const WeightVector& w, const std::vector<LineageTriple>& triples, double gamma,
                                      double c) {
    if (!(c > 0.0)) throw Error(ErrorKind::BadInput, "hinge penalty C must be positive");
    double slack = 0.0;
    for (double m : constraint_margins(w, triples)) slack += std::max(0.0, gamma - m);
    return gamma - c * slack;
}

inline std::size_t satisfied_count(const WeightVector& w, const std::vector<LineageTriple>& triples) {
    std::size_t n = 0;
    for (double m : constraint_margins(w, triples)) n += m >= -kMarginTolerance;
    return n;
}

/// Grid search: maximize satisfied constraints, then median margin; ties keep the
/// earliest candidate in lexicographic order (effectiveness part outermost).
inline LearnResult learn_weights(const std::vector<LineageTriple>& triples, const LearnOptions& options = {}) {
    if (triples.empty()) throw Error(ErrorKind::EmptyTriples, "no lineage triples");
    const int m = grid_divisions(options.grid_step);
    const auto eff = compositions(m, 4);
    const auto effc = compositions(m, 3);
    const std::size_t constraints = triples.size() * 2;

    auto partials = [&](const std::vector<std::vector<int>>& grid, std::size_t offset, double budget) {
        std::vector<double> out(grid.size() * constraints);
        for (std::size_t g = 0; g < grid.size(); ++g) {
            for (std::size_t t = 0; t < triples.size(); ++t) {
                double a = 0.0, b = 0.0;
                for (std::size_t k = 0; k < grid[g].size(); ++k) {
                    const double w = budget * grid[g][k] / m;
                    a += w * (triples[t].best[offset + k] - triples[t].pen[offset + k]);
                    b += w * (triples[t].pen[offset + k] - triples[t].ante[offset + k]);
                }
                out[g * constraints + 2 * t] = a;
                out[g * constraints + 2 * t + 1] = b;
            }
        }
        return out;
    };
    const auto pa = partials(eff, 0, options.effectiveness_budget);
    const auto pb = partials(effc, 4, options.efficiency_budget);

    struct Best {
        std::size_t satisfied = 0;
        double median = -std::numeric_limits<double>::infinity();
        std::size_t index = std::numeric_limits<std::size_t>::max();
    };
    auto better = [](const Best& x, const Best& y) {  // is x strictly preferred over y
        if (x.satisfied != y.satisfied) return x.satisfied > y.satisfied;
        if (std::abs(x.median - y.median) > kMarginTolerance) return x.median > y.median;
        return x.index < y.index;
    };
    auto scan = [&](std::size_t from, std::size_t to) {
        Best best;
        std::vector<double> margins(constraints);
        for (std::size_t i = from; i < to; ++i) {
            const double* a = &pa[i * constraints];
            for (std::size_t j = 0; j < effc.size(); ++j) {
                const double* b = &pb[j * constraints];
                std::size_t sat = 0;
                for (std::size_t c = 0; c < constraints; ++c) {
                    margins[c] = a[c] + b[c];
                    sat += margins[c] >= -kMarginTolerance;
                }
                if (sat < best.satisfied) continue;
                Best candidate{sat, median_of(margins), i * effc.size() + j};
                if (best.index == std::numeric_limits<std::size_t>::max() || better(candidate, best)) best = candidate;
            }
        }
        return best;
    };
    const unsigned jobs = std::max(1u, std::min<unsigned>(options.jobs, static_cast<unsigned>(eff.size())));
    std::vector<Best> partial(jobs);
    if (jobs == 1) {
        partial[0] = scan(0, eff.size());
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (eff.size() + jobs - 1) / jobs;
        for (unsigned t = 0; t < jobs; ++t) {
            pool.emplace_back([&, t] {
                const std::size_t lo = std::min(eff.size(), t * chunk);
                partial[t] = scan(lo, std::min(eff.size(), lo + chunk));
            });
        }
        for (auto& th : pool) th.join();
    }
    Best winner;
    for (const auto& b : partial) {
        if (b.index == std::numeric_limits<std::size_t>::max()) continue;
        if (winner.index == std::numeric_limits<std::size_t>::max() || better(b, winner)) winner = b;
    }

    LearnResult result;
    result.candidates = eff.size() * effc.size();
    const auto& we = eff[winner.index / effc.size()];
    const auto& wf = effc[winner.index % effc.size()];
    result.weights.effectiveness_budget = options.effectiveness_budget;
    result.weights.efficiency_budget = options.efficiency_budget;
    for (std::size_t k = 0; k < 4; ++k) result.weights.weights[k] = options.effectiveness_budget * we[k] / m;
    for (std::size_t k = 0; k < 3; ++k) result.weights.weights[4 + k] = options.efficiency_budget * wf[k] / m;
    const auto margins = constraint_margins(result.weights, triples);
    result.median_margin = median_of(margins);
    for (std::size_t c = 0; c < margins.size(); ++c) {
        if (margins[c] >= -kMarginTolerance) {
            ++result.satisfied;
        } else {
            result.violations.push_back({triples[c / 2].query_id,
                                         c % 2 == 0 ? Inequality::BestOverPen : Inequality::PenOverAnte, -margins[c]});
        }
    }
    if (result.violations.empty()) {
        result.margin = *std::min_element(margins.begin(), margins.end());
    } else {
        result.relaxed_objective =
            hinge_relaxed_objective(result.weights, triples, options.hinge_gamma, options.hinge_c);
    }
    return result;
}

/// Largest-remainder rounding onto multiples of `lattice`, per group; ties go
/// to the lower metric index.
inline WeightVector quantize(const WeightVector& weights, double lattice = 5.0) {
    if (!(lattice > 0.0)) throw Error(ErrorKind::InfeasibleLattice, "lattice must be positive");
    WeightVector out = weights;
    auto group = [&](std::size_t from, std::size_t count, double budget) {
        const double units_total = budget / lattice;
        const auto total = std::llround(units_total);
        if (std::abs(units_total - static_cast<double>(total)) > 1e-9) {
            throw Error(ErrorKind::InfeasibleLattice, "lattice does not divide the budget " + std::to_string(budget));
        }
        double sum = 0.0;
        for (std::size_t k = from; k < from + count; ++k) {
            if (weights.weights[k] < 0.0) throw Error(ErrorKind::WeightBudgetViolation, "negative weight");
            sum += weights.weights[k];
        }
        if (std::abs(sum - budget) > 1e-6) {
            throw Error(ErrorKind::WeightBudgetViolation, "group sums to " + std::to_string(sum) +
                                                              ", budget is " + std::to_string(budget));
        }
        std::vector<long long> units(count);
        std::vector<std::pair<double, std::size_t>> remainders;
        long long assigned = 0;
        for (std::size_t k = 0; k < count; ++k) {
            const double u = weights.weights[from + k] / lattice;
            double fl = std::floor(u + 1e-9);
            units[k] = static_cast<long long>(fl);
            assigned += units[k];
            remainders.emplace_back(std::max(0.0, u - fl), k);
        }
        std::stable_sort(remainders.begin(), remainders.end(),
                         [](const auto& x, const auto& y) { return x.first > y.first + 1e-12; });
        for (long long r = 0; r < total - assigned; ++r) ++units[remainders[static_cast<std::size_t>(r) % count].second];
        for (std::size_t k = 0; k < count; ++k) out.weights[from + k] = static_cast<double>(units[k]) * lattice;
    };
    group(0, 4, weights.effectiveness_budget);
    group(4, 3, weights.efficiency_budget);
    return out;
}

struct QuantizeCheck {
    WeightVector quantized;
    std::size_t satisfied_before = 0;
    std::size_t satisfied_after = 0;
    bool dropped() const { return satisfied_after < satisfied_before; }
};

inline QuantizeCheck quantize_checked(const WeightVector& weights, const std::vector<LineageTriple>& triples,
                                      double lattice = 5.0) {
    QuantizeCheck out;
    out.quantized = quantize(weights, lattice);
    out.satisfied_before = satisfied_count(weights, triples);
    out.satisfied_after = satisfied_count(out.quantized, triples);
    return out;
}

// ---------------------------------------------------------------------------
// Sensitivity

struct SensitivityReport {
    double rho_equal = 0.0;
    std::vector<double> rho_random;
    std::vector<WeightVector> draws;
    std::uint64_t seed = 0;
    std::vector<std::string> planners;
    std::vector<double> learned_scores;
    std::vector<double> equal_scores;
};

/// Symmetric Dirichlet(1) per group via normalized unit exponentials, scaled to budgets.
inline WeightVector dirichlet_draw(std::mt19937_64& rng, double effectiveness_budget, double efficiency_budget) {
    auto exp1 = [&] {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        return -std::log1p(-u);
    };
    WeightVector w;
    w.effectiveness_budget = effectiveness_budget;
    w.efficiency_budget = efficiency_budget;
    auto group = [&](std::size_t from, std::size_t count, double budget) {
        double sum = 0.0;
        for (std::size_t k = from; k < from + count; ++k) sum += (w.weights[k] = exp1());
        if (sum <= 0.0) {
            for (std::size_t k = from; k < from + count; ++k) w.weights[k] = 1.0;
            sum = static_cast<double>(count);
        }
        double assigned = 0.0;
        for (std::size_t k = from; k + 1 < from + count; ++k) assigned += (w.weights[k] = budget * w.weights[k] / sum);
        w.weights[from + count - 1] = budget - assigned;
    };
    group(0, 4, effectiveness_budget);
    group(4, 3, efficiency_budget);
    return w;
}

inline double weighted_total(const WeightVector& w, const SubScores& raw) {
    double total = 0.0;
    for (std::size_t k = 0; k < 7; ++k) total += w.weights[k] * raw[k];
    return total;
}

inline double equal_weight_total(const SubScores& raw) {
    double sum = 0.0;
    for (double r : raw) sum += r;
    return sum / 7.0 * 100.0;
}

inline SensitivityReport sensitivity(const std::map<std::string, SubScores>& planner_means, const WeightVector& learned,
                                     int n_draws = 10, std::uint64_t seed = 0) {
    if (planner_means.size() < 3) throw Error(ErrorKind::TooFewPlanners, "need at least 3 planners");
    if (n_draws < 0) throw Error(ErrorKind::BadInput, "negative draw count");
    SensitivityReport report;
    report.seed = seed;
    for (const auto& [name, raw] : planner_means) {
        report.planners.push_back(name);
        report.learned_scores.push_back(weighted_total(learned, raw));
        report.equal_scores.push_back(equal_weight_total(raw));
    }
    report.rho_equal = stats::spearman_rho(report.learned_scores, report.equal_scores);
    std::mt19937_64 rng(seed);
    for (int d = 0; d < n_draws; ++d) {
        auto w = dirichlet_draw(rng, learned.effectiveness_budget, learned.efficiency_budget);
        std::vector<double> scores;
        for (const auto& [name, raw] : planner_means) scores.push_back(weighted_total(w, raw));
        report.rho_random.push_back(stats::spearman_rho(report.learned_scores, scores));
        report.draws.push_back(w);
    }
    return report;
}

}  // namespace planeval
