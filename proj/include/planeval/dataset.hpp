#pragma once

// Public-dataset CSV ingestion (queries.csv, plans.csv) and the auxiliary
// triples and label files.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "planeval/csv.hpp"
#include "planeval/error.hpp"
#include "planeval/io.hpp"
#include "planeval/lineage.hpp"
#include "planeval/plan.hpp"
#include "planeval/weights.hpp"

namespace planeval {

inline const std::vector<std::string>& queries_header() {
    static const std::vector<std::string> h = {
        "query_id", "Sample", "query", "is_query_subjective", "is_query_compound",
        "# steps in the BPP", "# steps in the BPP - Grouped", "best_plan", "plan_lineage"};
    return h;
}

inline const std::vector<std::string>& plans_header() {
    static const std::vector<std::string> h = {"query_id", "llm", "prompt_type", "plan"};
    return h;
}

struct QueryRecord {
    std::string query_id;
    std::string sample_split;
    std::string query;
    bool is_subjective = false;
    bool is_compound = false;
    int bpp_steps = 0;
    std::string bpp_steps_grouped;
    Plan best_plan;
    std::vector<Plan> plan_lineage;  // weakest first; never empty after ingestion

    bool head_matches_best() const {
        return !plan_lineage.empty() && to_document(plan_lineage.back()) == to_document(best_plan);
    }

    bool operator==(const QueryRecord&) const = default;
};

struct GeneratedPlanRecord {
    std::string query_id;
    std::string llm;
    std::string prompt_type;
    std::string plan;
    bool parseable = false;

    bool operator==(const GeneratedPlanRecord&) const = default;
};

struct IngestReport {
    std::size_t queries = 0;
    std::size_t plans = 0;
    std::size_t unparseable_plans = 0;
    std::size_t invalid_plans = 0;
    std::size_t unknown_query_refs = 0;
    std::vector<std::string> lineage_head_mismatches;
    std::map<std::string, std::size_t> violation_counts;  // by violation kind over parseable plans
};

struct Corpus {
    std::vector<QueryRecord> queries;
    std::vector<GeneratedPlanRecord> plans;
    IngestReport report;

    const QueryRecord* find(const std::string& query_id) const {
        auto it = index_.find(query_id);
        return it == index_.end() ? nullptr : &queries[it->second];
    }

    void reindex() {
        index_.clear();
        for (std::size_t i = 0; i < queries.size(); ++i) index_.emplace(queries[i].query_id, i);
    }

private:
    std::map<std::string, std::size_t> index_;
};

namespace detail {

inline bool parse_flag(const std::string& cell, const std::string& where) {
    std::string s(trim(cell));
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (s == "1" || s == "true" || s == "yes" || s == "y") return true;
    if (s == "0" || s == "false" || s == "no" || s == "n" || s.empty()) return false;
    throw Error(ErrorKind::BadInput, where + ": not a boolean: '" + cell + "'");
}

inline int parse_count(const std::string& cell, const std::string& where) {
    const auto t = trim(cell);
    if (t.empty()) return 0;
    int v = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || p != t.data() + t.size() || v < 0) {
        // Some exports write integer counts as floats ("3.0").
        const auto d = parse_real(t);
        if (!d || *d < 0 || *d != static_cast<int>(*d)) {
            throw Error(ErrorKind::BadInput, where + ": not a step count: '" + cell + "'");
        }
        return static_cast<int>(*d);
    }
    return v;
}

inline double parse_number(const std::string& cell, const std::string& where) {
    const auto v = parse_real(trim(cell));
    if (!v) throw Error(ErrorKind::BadInput, where + ": not a number: '" + cell + "'");
    return *v;
}

}  // namespace detail

inline std::vector<QueryRecord> parse_queries_csv(std::string_view text) {
    const csv::Table table(text);
    table.require(queries_header());
    std::vector<QueryRecord> out;
    std::set<std::string> seen;
    for (std::size_t r = 0; r < table.rows().size(); ++r) {
        const auto where = "queries.csv row " + std::to_string(r + 2);
        QueryRecord q;
        q.query_id = table.cell(r, "query_id");
        if (!seen.insert(q.query_id).second) {
            throw Error(ErrorKind::DuplicateTripleKey, where + ": duplicate query_id '" + q.query_id + "'");
        }
        q.sample_split = table.cell(r, "Sample");
        q.query = table.cell(r, "query");
        q.is_subjective = detail::parse_flag(table.cell(r, "is_query_subjective"), where);
        q.is_compound = detail::parse_flag(table.cell(r, "is_query_compound"), where);
        q.bpp_steps = detail::parse_count(table.cell(r, "# steps in the BPP"), where);
        q.bpp_steps_grouped = table.cell(r, "# steps in the BPP - Grouped");
        try {
            q.best_plan = parse_plan(table.cell(r, "best_plan"));
            require_valid(q.best_plan);
        } catch (const Error& e) {
            throw Error(ErrorKind::InvalidBestPlan, where + " (" + q.query_id + "): " + e.what());
        }
        const auto& cell = table.cell(r, "plan_lineage");
        if (detail::trim(cell).empty()) {
            q.plan_lineage = {q.best_plan};
        } else {
            try {
                q.plan_lineage = PlanLineage::from_plans(q.query_id, plans_from_cell(cell)).plans();
            } catch (const Error& e) {
                throw Error(e.kind(), where + " plan_lineage: " + e.what());
            }
        }
        out.push_back(std::move(q));
    }
    return out;
}

/// Extra columns (such as evaluator scores in some exports) are ignored.
inline std::vector<GeneratedPlanRecord> parse_plans_csv(std::string_view text) {
    const csv::Table table(text);
    table.require(plans_header());
    std::vector<GeneratedPlanRecord> out;
    std::set<std::tuple<std::string, std::string, std::string>> seen;
    for (std::size_t r = 0; r < table.rows().size(); ++r) {
        GeneratedPlanRecord p{table.cell(r, "query_id"), table.cell(r, "llm"), table.cell(r, "prompt_type"),
                              table.cell(r, "plan"), false};
        if (!seen.emplace(p.query_id, p.llm, p.prompt_type).second) {
            throw Error(ErrorKind::DuplicateTripleKey, "plans.csv row " + std::to_string(r + 2) + ": duplicate (" +
                                                           p.query_id + ", " + p.llm + ", " + p.prompt_type + ")");
        }
        p.parseable = try_parse_plan(p.plan).has_value();
        out.push_back(std::move(p));
    }
    return out;
}

inline Corpus ingest_text(std::string_view queries_text, std::optional<std::string_view> plans_text) {
    Corpus c;
    c.queries = parse_queries_csv(queries_text);
    if (plans_text) c.plans = parse_plans_csv(*plans_text);
    c.reindex();
    auto& rep = c.report;
    rep.queries = c.queries.size();
    rep.plans = c.plans.size();
    for (const auto& q : c.queries) {
        if (!q.head_matches_best()) rep.lineage_head_mismatches.push_back(q.query_id);
    }
    for (const auto& p : c.plans) {
        if (!c.find(p.query_id)) ++rep.unknown_query_refs;
        const auto plan = try_parse_plan(p.plan);
        if (!plan) {
            ++rep.unparseable_plans;
            continue;
        }
        const auto v = validate(*plan);
        if (!v.valid) ++rep.invalid_plans;
        for (const auto& x : v.violations) ++rep.violation_counts[std::string(to_string(x.kind))];
    }
    return c;
}

inline Corpus ingest(const std::filesystem::path& queries_path,
                     const std::optional<std::filesystem::path>& plans_path = std::nullopt) {
    const auto qt = read_file(queries_path);
    if (!plans_path) return ingest_text(qt, std::nullopt);
    const auto pt = read_file(*plans_path);
    return ingest_text(qt, std::string_view(pt));
}

inline std::string queries_to_csv(const std::vector<QueryRecord>& queries) {
    std::vector<csv::Row> rows;
    for (const auto& q : queries) {
        rows.push_back({q.query_id, q.sample_split, q.query, q.is_subjective ? "1" : "0", q.is_compound ? "1" : "0",
                        std::to_string(q.bpp_steps), q.bpp_steps_grouped, to_document(q.best_plan),
                        lineage_to_cell(q.plan_lineage)});
    }
    return csv::format(queries_header(), rows);
}

inline std::string plans_to_csv(const std::vector<GeneratedPlanRecord>& plans) {
    std::vector<csv::Row> rows;
    for (const auto& p : plans) rows.push_back({p.query_id, p.llm, p.prompt_type, p.plan});
    return csv::format(plans_header(), rows);
}

// ---------------------------------------------------------------------------
// Triples: one row per (query_id, plan_rank) with raw sub-scores per metric.

inline std::vector<LineageTriple> parse_triples_csv(std::string_view text) {
    const csv::Table table(text);
    table.require({"query_id", "plan_rank"});
    for (auto k : kAllMetrics) table.require({std::string(short_name(k))});
    struct Partial {
        std::optional<SubScores> best, pen, ante;
    };
    std::map<std::string, Partial> by_query;
    std::vector<std::string> order;
    for (std::size_t r = 0; r < table.rows().size(); ++r) {
        const auto where = "triples row " + std::to_string(r + 2);
        const auto& id = table.cell(r, "query_id");
        std::string rank(detail::trim(table.cell(r, "plan_rank")));
        std::transform(rank.begin(), rank.end(), rank.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        SubScores s{};
        for (auto k : kAllMetrics) s[index_of(k)] = detail::parse_number(table.cell(r, std::string(short_name(k))), where);
        if (!by_query.contains(id)) order.push_back(id);
        auto& slot = by_query[id];
        std::optional<SubScores>* target = rank == "best" ? &slot.best : rank == "pen" ? &slot.pen
                                           : rank == "ante"  ? &slot.ante : nullptr;
        if (!target) throw Error(ErrorKind::BadInput, where + ": plan_rank must be best, pen or ante");
        if (target->has_value()) throw Error(ErrorKind::DuplicateTripleKey, where + ": repeated rank for " + id);
        *target = s;
    }
    std::vector<LineageTriple> out;
    for (const auto& id : order) {
        const auto& p = by_query.at(id);
        if (!p.best || !p.pen || !p.ante) throw Error(ErrorKind::BadInput, "query " + id + " lacks a full triple");
        out.push_back({id, *p.best, *p.pen, *p.ante});
    }
    if (out.empty()) throw Error(ErrorKind::EmptyTriples, "triples file has no rows");
    return out;
}

// ---------------------------------------------------------------------------
// Labels: item_id plus two or more rater columns (names starting with "rater").

struct LabelTable {
    std::vector<std::string> item_ids;
    std::vector<std::string> raters;
    std::vector<std::vector<std::string>> labels;  // labels[rater][item]
};

inline LabelTable parse_labels_csv(std::string_view text) {
    const csv::Table table(text);
    table.require({"item_id"});
    LabelTable out;
    for (const auto& h : table.header()) {
        if (h.rfind("rater", 0) == 0) out.raters.push_back(h);
    }
    if (out.raters.size() < 2) throw Error(ErrorKind::MissingColumn, "labels need at least two rater columns");
    out.labels.resize(out.raters.size());
    for (std::size_t r = 0; r < table.rows().size(); ++r) {
        out.item_ids.push_back(table.cell(r, "item_id"));
        for (std::size_t j = 0; j < out.raters.size(); ++j) {
            out.labels[j].push_back(std::string(detail::trim(table.cell(r, out.raters[j]))));
        }
    }
    if (out.item_ids.empty()) throw Error(ErrorKind::EmptyItems, "labels file has no rows");
    return out;
}

}  // namespace planeval
