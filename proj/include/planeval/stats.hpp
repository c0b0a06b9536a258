#pragma once

// Agreement and correlation statistics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "planeval/error.hpp"

namespace planeval::stats {

template <typename Label>
double cohen_kappa(const std::vector<Label>& a, const std::vector<Label>& b) {
    if (a.size() != b.size()) throw Error(ErrorKind::LengthMismatch, "series differ in length");
    if (a.empty()) throw Error(ErrorKind::EmptySeries, "no labels");
    const double n = static_cast<double>(a.size());
    std::map<Label, double> ma, mb;
    double agree = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma[a[i]] += 1.0;
        mb[b[i]] += 1.0;
        if (a[i] == b[i]) agree += 1.0;
    }
    const double po = agree / n;
    double pe = 0.0;
    for (const auto& [label, count] : ma) {
        if (auto it = mb.find(label); it != mb.end()) pe += (count / n) * (it->second / n);
    }
    if (pe >= 1.0) {
        if (po >= 1.0) return 1.0;
        throw Error(ErrorKind::DegenerateAgreement, "chance agreement is 1 but observed agreement is not");
    }
    return (po - pe) / (1.0 - pe);
}

enum class WeightScheme { Quadratic, Linear, Identity };

/// Disagreement (penalty) weight between ordinal labels i and j in 1..K.
inline double disagreement_weight(int i, int j, int K, WeightScheme scheme) {
    const double d = std::abs(i - j) / static_cast<double>(K - 1);
    switch (scheme) {
        case WeightScheme::Quadratic: return d * d;
        case WeightScheme::Linear: return d;
        case WeightScheme::Identity: return i == j ? 0.0 : 1.0;
    }
    return 0.0;
}

/// kappa_w = 1 - sum(W*O) / sum(W*E) with penalty weights W.
inline double weighted_kappa(const std::vector<int>& a, const std::vector<int>& b, int K,
                             WeightScheme scheme = WeightScheme::Quadratic) {
    if (a.size() != b.size()) throw Error(ErrorKind::LengthMismatch, "series differ in length");
    if (a.empty()) throw Error(ErrorKind::EmptySeries, "no labels");
    if (K < 2) throw Error(ErrorKind::LabelOutOfRange, "need at least 2 ordinal levels");
    const auto k = static_cast<std::size_t>(K);
    std::vector<double> observed(k * k, 0.0), row(k, 0.0), col(k, 0.0);
    const double n = static_cast<double>(a.size());
    for (std::size_t t = 0; t < a.size(); ++t) {
        if (a[t] < 1 || a[t] > K || b[t] < 1 || b[t] > K) {
            throw Error(ErrorKind::LabelOutOfRange, "label outside 1.." + std::to_string(K));
        }
        const auto i = static_cast<std::size_t>(a[t] - 1), j = static_cast<std::size_t>(b[t] - 1);
        observed[i * k + j] += 1.0 / n;
        row[i] += 1.0 / n;
        col[j] += 1.0 / n;
    }
    double wo = 0.0, we = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            const double w = disagreement_weight(static_cast<int>(i) + 1, static_cast<int>(j) + 1, K, scheme);
            wo += w * observed[i * k + j];
            we += w * row[i] * col[j];
        }
    }
    if (we <= 0.0) {
        if (wo <= 0.0) return 1.0;
        throw Error(ErrorKind::DegenerateAgreement, "expected disagreement is 0");
    }
    return 1.0 - wo / we;
}

/// `counts[i][j]` = number of raters assigning item i to category j.
inline double fleiss_kappa(const std::vector<std::vector<int>>& counts, int raters_per_item) {
    if (counts.empty()) throw Error(ErrorKind::EmptyItems, "no items");
    if (raters_per_item < 2) throw Error(ErrorKind::RowSumMismatch, "need at least 2 raters per item");
    const std::size_t categories = counts.front().size();
    const double n = raters_per_item;
    const double items = static_cast<double>(counts.size());
    std::vector<double> totals(categories, 0.0);
    double p_bar = 0.0;
    for (const auto& row : counts) {
        if (row.size() != categories) throw Error(ErrorKind::RowSumMismatch, "ragged rating matrix");
        int sum = 0;
        double squares = 0.0;
        for (std::size_t j = 0; j < categories; ++j) {
            if (row[j] < 0) throw Error(ErrorKind::RowSumMismatch, "negative count");
            sum += row[j];
            squares += static_cast<double>(row[j]) * row[j];
            totals[j] += row[j];
        }
        if (sum != raters_per_item) {
            throw Error(ErrorKind::RowSumMismatch,
                        "row sums to " + std::to_string(sum) + ", expected " + std::to_string(raters_per_item));
        }
        p_bar += (squares - n) / (n * (n - 1.0));
    }
    p_bar /= items;
    double p_e = 0.0;
    for (double t : totals) {
        const double p = t / (items * n);
        p_e += p * p;
    }
    if (p_e >= 1.0 - 1e-15) return 1.0;
    return (p_bar - p_e) / (1.0 - p_e);
}

/// 1-based ranks; ties share the average of their positions.
inline std::vector<double> average_ranks(const std::vector<double>& x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
    std::vector<double> ranks(x.size());
    for (std::size_t start = 0; start < order.size();) {
        std::size_t end = start + 1;
        while (end < order.size() && x[order[end]] == x[order[start]]) ++end;
        const double rank = (static_cast<double>(start + 1) + static_cast<double>(end)) / 2.0;
        for (std::size_t t = start; t < end; ++t) ranks[order[t]] = rank;
        start = end;
    }
    return ranks;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) throw Error(ErrorKind::ZeroVariance, "constant series");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw Error(ErrorKind::LengthMismatch, "series differ in length");
    if (x.size() < 3) throw Error(ErrorKind::EmptySeries, "need at least 3 paired values");
    return pearson(average_ranks(x), average_ranks(y));
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Linear interpolation between closest ranks of a sorted sample.
inline double percentile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.size() == 1) return sorted.front();
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Percentile bootstrap. Resample r draws from mt19937_64 seeded with splitmix64(seed + r).
template <typename Item>
std::pair<double, double> bootstrap_ci(const std::function<double(const std::vector<Item>&)>& statistic,
                                       const std::vector<Item>& items, int resamples = 1000,
                                       double level = 0.95, std::uint64_t seed = 0) {
    if (items.empty()) throw Error(ErrorKind::EmptyItems, "nothing to resample");
    if (resamples < 1) throw Error(ErrorKind::BadInput, "resamples must be >= 1");
    if (!(level > 0.0 && level < 1.0)) throw Error(ErrorKind::BadInput, "level must lie in (0,1)");
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(resamples));
    std::vector<Item> sample(items.size());
    for (int r = 0; r < resamples; ++r) {
        std::mt19937_64 rng(splitmix64(seed + static_cast<std::uint64_t>(r)));
        for (auto& slot : sample) slot = items[rng() % items.size()];
        values.push_back(statistic(sample));
    }
    std::sort(values.begin(), values.end());
    const double tail = (1.0 - level) / 2.0;
    return {percentile_sorted(values, tail), percentile_sorted(values, 1.0 - tail)};
}

struct KappaResult {
    double kappa = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    int resamples = 0;
};

/// Point estimate plus bootstrap interval, widened to contain the estimate.
template <typename Item>
KappaResult with_bootstrap(const std::function<double(const std::vector<Item>&)>& statistic,
                           const std::vector<Item>& items, int resamples, double level, std::uint64_t seed) {
    KappaResult out;
    out.kappa = statistic(items);
    out.ci_low = out.ci_high = out.kappa;
    out.resamples = resamples;
    if (resamples > 0) {
        const auto [lo, hi] = bootstrap_ci(statistic, items, resamples, level, seed);
        out.ci_low = std::min(lo, out.kappa);
        out.ci_high = std::max(hi, out.kappa);
    }
    return out;
}

}  // namespace planeval::stats
