#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "styleforge/core.hpp"
#include "styleforge/retrieval.hpp"

namespace styleforge::analysis {

// Representative point of one style label: the re-normalized mean of its
// images' unit embeddings.
struct StylePrototype {
    int label = -1;
    Vec vector;
    uint64_t support = 0;
};

// Mean of the (unit) embeddings, re-normalized to unit length so the score
// below stays a cosine. Throws on an empty set or a near-zero mean.
StylePrototype build_prototype(const std::vector<Vec>& embeddings);

enum class Band { absent, inconclusive, strongly_present };

// < 0.5 -> absent, > 0.8 -> strongly present, otherwise inconclusive.
Band band_for_score(double score);
const char* band_name(Band band);

// General style similarity: dot product of a unit embedding with a prototype.
double gss(const Vec& image_embedding, const StylePrototype& prototype);

// Mean pairwise cosine over distinct unordered pairs; needs >= 2 vectors.
double intra_cluster_similarity(const std::vector<Vec>& embeddings);

// Fine label (e.g. artist) -> group label (e.g. art movement).
struct GroupMap {
    std::map<std::string, std::string> fine_to_group;

    const std::string& group_of(const std::string& fine) const;
};

GroupMap load_group_map(const std::filesystem::path& path);

struct ConfusionMatrix {
    std::vector<std::string> groups; // first-appearance order over the queries
    Matrix counts;                   // G x G, row = truth group, col = predicted group
    uint64_t total_errors = 0;
};

// Group-level tally of top-1 errors. A query is erroneous when its label set is
// disjoint from its top-1 neighbor's; correct queries contribute no count but
// still register their groups, so the matrix shape is stable for a given query
// set. Multi-label records are grouped by their lowest-indexed label.
ConfusionMatrix group_confusion(const retrieval::RetrievalReport& report,
                                const Dataset& dataset, const GroupMap& groups);

void save_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& matrix);

// Pearson product-moment correlation; needs length >= 3 and nonzero variances.
double correlation(const std::vector<double>& x, const std::vector<double>& y);

} // namespace styleforge::analysis
