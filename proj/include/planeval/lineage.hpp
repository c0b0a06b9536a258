#pragma once

#include <filesystem>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "planeval/io.hpp"
#include "planeval/plan.hpp"

namespace planeval {

/// Distinct plan revisions for one query, weakest first; the last entry is the head.
class PlanLineage {
public:
    PlanLineage(std::string query_id, Plan initial) : query_id_(std::move(query_id)) {
        plans_.push_back(std::move(initial));
        head_bytes_ = to_document(plans_.back());
    }

    /// Collapses adjacent duplicates so the distinctness invariant holds.
    static PlanLineage from_plans(std::string query_id, std::vector<Plan> plans) {
        if (plans.empty()) throw Error(ErrorKind::EmptyInput, "lineage needs at least one plan");
        PlanLineage lineage(std::move(query_id), std::move(plans.front()));
        for (std::size_t i = 1; i < plans.size(); ++i) lineage.append_if_changed(plans[i]);
        return lineage;
    }

    const std::string& query_id() const noexcept { return query_id_; }
    const std::vector<Plan>& plans() const noexcept { return plans_; }
    const Plan& head() const noexcept { return plans_.back(); }
    std::size_t size() const noexcept { return plans_.size(); }

    /// Appends iff the candidate's canonical bytes differ from the head's.
    bool append_if_changed(const Plan& candidate) {
        auto bytes = to_document(candidate);
        if (bytes == head_bytes_) return false;
        plans_.push_back(candidate);
        head_bytes_ = std::move(bytes);
        return true;
    }

private:
    std::string query_id_;
    std::vector<Plan> plans_;
    std::string head_bytes_;
};

struct LineageMetadata {
    std::size_t lineage_length = 0;
    std::size_t passes_to_convergence = 0;
    std::vector<std::size_t> revisions_per_pass;
    std::size_t head_step_count = 0;
    std::optional<HopProfile> hop_profile;  // empty when the head is invalid
};

/// `pass_boundaries[p]` is the number of revisions appended during pass p.
inline LineageMetadata derive_metadata(const PlanLineage& lineage,
                                       const std::vector<std::size_t>& pass_boundaries) {
    const auto appended = std::accumulate(pass_boundaries.begin(), pass_boundaries.end(), std::size_t{0});
    if (appended != lineage.size() - 1) {
        throw Error(ErrorKind::BoundaryMismatch,
                    "pass boundaries sum to " + std::to_string(appended) + " but lineage has " +
                        std::to_string(lineage.size() - 1) + " revisions");
    }
    LineageMetadata meta;
    meta.lineage_length = lineage.size();
    meta.passes_to_convergence = pass_boundaries.size();
    meta.revisions_per_pass = pass_boundaries;
    meta.head_step_count = lineage.head().size();
    if (validate(lineage.head()).valid) meta.hop_profile = hop_profile(lineage.head());
    return meta;
}

struct LineageAverages {
    double mean_distinct_plans = 0.0;
    double mean_passes = 0.0;
};

inline LineageAverages average_metadata(const std::vector<LineageMetadata>& rows) {
    if (rows.empty()) throw Error(ErrorKind::EmptyInput, "no lineages to average");
    LineageAverages out;
    for (const auto& m : rows) {
        out.mean_distinct_plans += static_cast<double>(m.lineage_length);
        out.mean_passes += static_cast<double>(m.passes_to_convergence);
    }
    out.mean_distinct_plans /= static_cast<double>(rows.size());
    out.mean_passes /= static_cast<double>(rows.size());
    return out;
}

// ---------------------------------------------------------------------------
// Interchange: the plan_lineage cell is a JSON array of plan documents.

/// Plan as an insertion-ordered JSON object (keys stay in step order).
inline nlohmann::ordered_json plan_to_json(const Plan& plan) {
    return nlohmann::ordered_json::parse(to_document(plan));
}

inline std::string lineage_to_cell(const std::vector<Plan>& plans) {
    std::string out = "[";
    for (std::size_t i = 0; i < plans.size(); ++i) {
        if (i) out += ", ";
        out += to_document(plans[i]);
    }
    return out + "]";
}

/// Accepts array elements that are plan objects or strings holding plan documents.
inline std::vector<Plan> plans_from_cell(std::string_view cell) {
    nlohmann::ordered_json doc;
    try {
        doc = nlohmann::ordered_json::parse(cell);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::NotParseable, std::string("plan_lineage is not JSON: ") + e.what());
    }
    if (!doc.is_array()) throw Error(ErrorKind::NotParseable, "plan_lineage must be a JSON array");
    std::vector<Plan> plans;
    for (const auto& element : doc) {
        plans.push_back(parse_plan(element.is_string() ? element.get<std::string>() : element.dump()));
    }
    return plans;
}

/// One lineage document plus a `.meta.json` sidecar per query under a directory.
class LineageStore {
public:
    explicit LineageStore(std::filesystem::path root) : root_(std::move(root)) {
        std::filesystem::create_directories(root_);
    }

    void put(const PlanLineage& lineage, const std::optional<std::vector<std::size_t>>& pass_boundaries = {}) {
        std::lock_guard lock(mutex_);
        write(lineage, pass_boundaries);
    }

    std::optional<PlanLineage> get(const std::string& query_id) const {
        std::lock_guard lock(mutex_);
        const auto path = document_path(query_id);
        if (!std::filesystem::exists(path)) return std::nullopt;
        return PlanLineage::from_plans(query_id, plans_from_cell(read_file(path)));
    }

    /// Creates the lineage from `candidate` when absent.
    bool append_if_changed(const std::string& query_id, const Plan& candidate) {
        std::lock_guard lock(mutex_);
        const auto path = document_path(query_id);
        if (!std::filesystem::exists(path)) {
            write(PlanLineage(query_id, candidate), std::nullopt);
            return true;
        }
        auto lineage = PlanLineage::from_plans(query_id, plans_from_cell(read_file(path)));
        if (!lineage.append_if_changed(candidate)) return false;
        write(lineage, std::nullopt);
        return true;
    }

private:
    std::filesystem::path document_path(const std::string& query_id) const {
        return root_ / (safe_file_stem(query_id) + ".json");
    }

    void write(const PlanLineage& lineage, const std::optional<std::vector<std::size_t>>& pass_boundaries) {
        write_file_atomic(document_path(lineage.query_id()), lineage_to_cell(lineage.plans()) + "\n");
        nlohmann::ordered_json meta;
        meta["query_id"] = lineage.query_id();
        meta["lineage_length"] = lineage.size();
        meta["head_step_count"] = lineage.head().size();
        if (pass_boundaries) {
            const auto derived = derive_metadata(lineage, *pass_boundaries);
            meta["passes_to_convergence"] = derived.passes_to_convergence;
            meta["revisions_per_pass"] = derived.revisions_per_pass;
            if (derived.hop_profile) {
                meta["hops"] = derived.hop_profile->hops;
                meta["hop_category"] = std::string(to_string(derived.hop_profile->category));
            }
        }
        write_file_atomic(root_ / (safe_file_stem(lineage.query_id()) + ".meta.json"), meta.dump(2) + "\n");
    }

    std::filesystem::path root_;
    mutable std::mutex mutex_;
};

}  // namespace planeval
