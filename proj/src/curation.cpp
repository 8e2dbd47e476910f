#include "styleforge/curation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include "json.hpp"

namespace styleforge::curation {

namespace {

bool is_word_char(char c) {
    const unsigned char u = static_cast<unsigned char>(c);
    return (u >= 'a' && u <= 'z') || (u >= 'A' && u <= 'Z') || (u >= '0' && u <= '9');
}

std::string ascii_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

// Union-find over record indices.
class DisjointSet {
public:
    explicit DisjointSet(size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), size_t{0}); }

    size_t find(size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    void unite(size_t a, size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent_[std::max(a, b)] = std::min(a, b);
    }

private:
    std::vector<size_t> parent_;
};

} // namespace

std::set<int> match_tags(std::string_view caption, const LabelVocabulary& bank) {
    std::set<int> out;
    if (caption.empty() || bank.size() == 0) return out;
    const std::string text = ascii_lower(caption);
    for (size_t t = 0; t < bank.size(); ++t) {
        const std::string& tag = bank.tag(static_cast<int>(t));
        size_t pos = text.find(tag);
        while (pos != std::string::npos) {
            const size_t end = pos + tag.size();
            const bool starts_inside = pos > 0 && is_word_char(text[pos - 1]) && is_word_char(text[pos]);
            const bool ends_inside = end < text.size() && is_word_char(text[end - 1]) && is_word_char(text[end]);
            if (!starts_inside && !ends_inside) {
                out.insert(static_cast<int>(t));
                break;
            }
            pos = text.find(tag, pos + 1);
        }
    }
    return out;
}

std::set<std::string> filter_frequent_tags(const std::map<std::string, uint64_t>& counts,
                                           uint64_t cutoff) {
    if (cutoff == 0) throw ValidationError("filter_frequent_tags: cutoff must be positive");
    std::set<std::string> retained;
    for (const auto& [tag, count] : counts) {
        if (count <= cutoff) retained.insert(tag);
    }
    return retained;
}

DedupResult dedup(const Dataset& dataset, double threshold, int threads, size_t block) {
    if (!(threshold > 0.0 && threshold <= 1.0)) {
        throw ValidationError("dedup: threshold must be in (0, 1]");
    }
    if (block == 0) block = 1024;
    const size_t n = dataset.records.size();
    for (const auto& r : dataset.records) {
        if (std::fabs(norm(r.vector) - 1.0) > 1e-6) {
            throw ValidationError("dedup: record '" + r.id + "' is not unit-norm");
        }
    }

    // Edge discovery per block pair; the union pass below is serial and runs in
    // a fixed order, so the partition is identical for any worker count.
    struct BlockTask {
        size_t i0, i1, j0, j1;
        std::vector<std::pair<size_t, size_t>> edges;
    };
    std::vector<BlockTask> tasks;
    for (size_t i0 = 0; i0 < n; i0 += block) {
        for (size_t j0 = i0; j0 < n; j0 += block) {
            tasks.push_back({i0, std::min(i0 + block, n), j0, std::min(j0 + block, n), {}});
        }
    }

    auto run_task = [&](BlockTask& t) {
        for (size_t i = t.i0; i < t.i1; ++i) {
            const Vec& vi = dataset.records[i].vector;
            const size_t j_start = std::max(t.j0, i + 1);
            for (size_t j = j_start; j < t.j1; ++j) {
                if (dot(vi, dataset.records[j].vector) > threshold) {
                    t.edges.emplace_back(i, j);
                }
            }
        }
    };

    const int workers = std::max(1, threads);
    if (workers == 1 || tasks.size() <= 1) {
        for (auto& t : tasks) run_task(t);
    } else {
        std::vector<std::thread> pool;
        std::atomic<size_t> cursor{0};
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (;;) {
                    const size_t k = cursor.fetch_add(1);
                    if (k >= tasks.size()) return;
                    run_task(tasks[k]);
                }
            });
        }
        for (auto& th : pool) th.join();
    }

    DisjointSet sets(n);
    for (const auto& t : tasks) {
        for (const auto& [i, j] : t.edges) sets.unite(i, j);
    }

    std::map<size_t, std::vector<size_t>> components;
    for (size_t i = 0; i < n; ++i) components[sets.find(i)].push_back(i);

    DedupResult result;
    for (auto& [root, members] : components) {
        DedupCluster cluster;
        for (size_t m : members) {
            cluster.members.push_back(dataset.records[m].id);
            cluster.labels.insert(dataset.records[m].labels.begin(), dataset.records[m].labels.end());
        }
        std::sort(cluster.members.begin(), cluster.members.end());
        cluster.representative = cluster.members.front();
        result.clusters.push_back(std::move(cluster));
    }
    std::sort(result.clusters.begin(), result.clusters.end(),
              [](const DedupCluster& a, const DedupCluster& b) { return a.representative < b.representative; });
    return result;
}

std::vector<CaptionRecord> load_captions(const std::filesystem::path& path) {
    const std::string bytes = read_file_bytes(path);
    std::vector<CaptionRecord> out;
    size_t line_no = 0;
    size_t pos = 0;
    while (pos < bytes.size()) {
        size_t end = bytes.find('\n', pos);
        if (end == std::string::npos) end = bytes.size();
        const std::string line = bytes.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("id") || !j.contains("caption") ||
            !j["id"].is_string() || !j["caption"].is_string()) {
            throw FormatError(path.string() + ": malformed caption line " + std::to_string(line_no));
        }
        CaptionRecord rec{j["id"].get<std::string>(), j["caption"].get<std::string>()};
        if (rec.id.empty()) {
            throw ValidationError(path.string() + ": empty caption id on line " + std::to_string(line_no));
        }
        out.push_back(std::move(rec));
    }
    return out;
}

} // namespace styleforge::curation
