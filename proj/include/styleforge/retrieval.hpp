#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "styleforge/core.hpp"
#include "styleforge/training.hpp"

namespace styleforge::retrieval {

struct SplitSpec {
    std::vector<std::string> database_ids;
    std::vector<std::string> query_ids;

    // Disjoint, both nonempty, all ids present in the dataset.
    void validate(const Dataset& dataset) const;
};

SplitSpec load_split(const std::filesystem::path& path);
void save_split(const std::filesystem::path& path, const SplitSpec& split);

// Ids of the k most cosine-similar database records, descending similarity,
// ties broken by ascending id. Exact scan; query and database vectors must be
// unit-norm.
std::vector<std::string> knn(const Vec& query, const Dataset& database, int k);

// 1 iff the label sets intersect (multi-label relevance).
int relevance(const std::set<int>& query_labels, const std::set<int>& neighbor_labels);

// Per-query recall@k: 1 if any of the first k relevance bits is set.
double recall_at_k(const std::vector<int>& relevance_bits, int k);

enum class MapMode {
    all_ranks,      // AP@k = (1/k) * sum_{r=1..k} precision@r
    relevant_ranks, // AP@k = mean of precision@r over relevant ranks (0 if none)
};

// Per-query average precision at k under the chosen reading; both give
// AP@1 = first bit, hence mAP@1 = Recall@1.
double average_precision_at_k(const std::vector<int>& relevance_bits, int k,
                              MapMode mode = MapMode::all_ranks);

struct PerQueryResult {
    std::string id;
    std::vector<std::string> neighbors; // top max(k) ids, ranked
    std::vector<int> relevance;         // aligned bits

    bool operator==(const PerQueryResult&) const = default;
};

struct RetrievalReport {
    std::vector<int> k_values;
    std::vector<double> map_at_k;    // aligned with k_values
    std::vector<double> recall_at_k; // aligned with k_values
    std::vector<PerQueryResult> per_query;
    int excluded_queries = 0;           // queries with empty label sets
    int duplicate_query_warnings = 0;   // query vector found verbatim in the database
    MapMode map_mode = MapMode::all_ranks;

    bool operator==(const RetrievalReport&) const = default;
};

struct EvalOptions {
    std::vector<int> k_values{1, 10, 100};
    MapMode map_mode = MapMode::all_ranks;
    int threads = 1;
};

// Ranks every query against the database split and aggregates mAP@k/Recall@k.
// When a head is given it is applied to both splits (then normalized); without
// one, vectors are normalized as-is, so the identity head changes nothing.
RetrievalReport evaluate(const Dataset& dataset, const SplitSpec& split,
                         const training::ProjectionHead* head, const EvalOptions& options);

// Canonical JSON (sorted keys, round-trip doubles): byte-identical re-dumps.
std::string report_to_json(const RetrievalReport& report);
RetrievalReport report_from_json(const std::string& json_text);
void save_report(const std::filesystem::path& path, const RetrievalReport& report);
RetrievalReport load_report(const std::filesystem::path& path);

// metric,k,value rows
void save_report_csv(const std::filesystem::path& path, const RetrievalReport& report);

} // namespace styleforge::retrieval
