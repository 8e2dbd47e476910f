#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "styleforge/core.hpp"

namespace styleforge::curation {

struct CaptionRecord {
    std::string id;
    std::string caption;
};

struct DedupCluster {
    std::string representative;        // lexicographically smallest member id
    std::vector<std::string> members;  // sorted ascending, includes representative
    std::set<int> labels;              // union over all members
};

// Partition of the input ids into near-duplicate clusters. Clusters are sorted
// by representative id, so the result is independent of input record order.
struct DedupResult {
    std::vector<DedupCluster> clusters;
};

// Indices of every bank tag occurring in the caption, matched case-insensitively
// (ASCII folding) and on word boundaries: a match may not begin or end inside
// an alphanumeric run, so "monet" does not hit "monetary". Bytes >= 0x80 count
// as boundaries.
std::set<int> match_tags(std::string_view caption, const LabelVocabulary& bank);

// Keeps every tag with count <= cutoff; drops strictly-greater counts.
std::set<std::string> filter_frequent_tags(const std::map<std::string, uint64_t>& counts,
                                           uint64_t cutoff);

// Near-duplicate clustering: edge between i and j iff cosine > threshold,
// clusters are the connected components, labels are unioned into the
// representative. Vectors must be unit-norm. Pairwise similarities are
// computed in blocks of `block` rows; blocks may run on `threads` workers
// with the graph union serialized, so the output does not depend on the
// worker count.
DedupResult dedup(const Dataset& dataset, double threshold, int threads = 1, size_t block = 1024);

std::vector<CaptionRecord> load_captions(const std::filesystem::path& path);

} // namespace styleforge::curation
