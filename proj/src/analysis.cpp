#include "styleforge/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace styleforge::analysis {

StylePrototype build_prototype(const std::vector<Vec>& embeddings) {
    if (embeddings.empty()) throw ValidationError("build_prototype: empty embedding set");
    const size_t d = embeddings.front().size();
    Vec mean(d, 0.0);
    for (const auto& v : embeddings) {
        if (v.size() != d) throw ValidationError("build_prototype: dimension mismatch");
        if (std::fabs(norm(v) - 1.0) > 1e-6) {
            throw ValidationError("build_prototype: embeddings must be unit-norm");
        }
        for (size_t i = 0; i < d; ++i) mean[i] += v[i];
    }
    for (double& x : mean) x /= static_cast<double>(embeddings.size());
    if (norm(mean) < 1e-9) {
        throw ValidationError("build_prototype: mean embedding is degenerate (norm < 1e-9)");
    }
    StylePrototype proto;
    proto.vector = normalize(mean);
    proto.support = embeddings.size();
    return proto;
}

Band band_for_score(double score) {
    if (score < 0.5) return Band::absent;
    if (score > 0.8) return Band::strongly_present;
    return Band::inconclusive;
}

const char* band_name(Band band) {
    switch (band) {
        case Band::absent: return "absent";
        case Band::inconclusive: return "inconclusive";
        case Band::strongly_present: return "strongly_present";
    }
    return "?";
}

double gss(const Vec& image_embedding, const StylePrototype& prototype) {
    return cosine(image_embedding, prototype.vector);
}

double intra_cluster_similarity(const std::vector<Vec>& embeddings) {
    const size_t n = embeddings.size();
    if (n < 2) throw ValidationError("intra_cluster_similarity: need at least 2 embeddings");
    double sum = 0.0;
    size_t pairs = 0;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            sum += cosine(embeddings[i], embeddings[j]);
            ++pairs;
        }
    }
    return sum / static_cast<double>(pairs);
}

const std::string& GroupMap::group_of(const std::string& fine) const {
    auto it = fine_to_group.find(fine);
    if (it == fine_to_group.end()) {
        throw ValidationError("group map: no group for label '" + fine + "'");
    }
    return it->second;
}

GroupMap load_group_map(const std::filesystem::path& path) {
    nlohmann::json j = nlohmann::json::parse(read_file_bytes(path), nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw FormatError(path.string() + ": group map must be a JSON object of fine -> group");
    }
    GroupMap map;
    for (const auto& [fine, group] : j.items()) {
        if (!group.is_string()) throw FormatError(path.string() + ": non-string group for '" + fine + "'");
        map.fine_to_group.emplace(fine, group.get<std::string>());
    }
    return map;
}

ConfusionMatrix group_confusion(const retrieval::RetrievalReport& report,
                                const Dataset& dataset, const GroupMap& groups) {
    const auto index = dataset.id_index();
    auto fine_tag = [&](const std::string& id) -> std::string {
        auto it = index.find(id);
        if (it == index.end()) throw ValidationError("group_confusion: unknown record id '" + id + "'");
        const auto& labels = dataset.records[it->second].labels;
        if (labels.empty()) throw ValidationError("group_confusion: record '" + id + "' has no labels");
        return dataset.vocab.tag(*labels.begin());
    };

    ConfusionMatrix out;
    std::map<std::string, size_t> group_index;
    auto register_group = [&](const std::string& g) {
        auto [it, inserted] = group_index.emplace(g, out.groups.size());
        if (inserted) out.groups.push_back(g);
        return it->second;
    };

    struct ErrorCell {
        size_t truth, predicted;
    };
    std::vector<ErrorCell> cells;
    for (const auto& q : report.per_query) {
        if (q.neighbors.empty()) throw ValidationError("group_confusion: query '" + q.id + "' has no neighbors");
        const size_t truth_group = register_group(groups.group_of(fine_tag(q.id)));
        const size_t pred_group = register_group(groups.group_of(fine_tag(q.neighbors.front())));
        if (q.relevance.front() == 0) {
            cells.push_back({truth_group, pred_group});
        }
    }

    out.counts = Matrix(out.groups.size(), out.groups.size());
    for (const auto& c : cells) {
        out.counts(c.truth, c.predicted) += 1.0;
        out.total_errors++;
    }
    return out;
}

void save_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& matrix) {
    std::string out = "truth\\predicted";
    for (const auto& g : matrix.groups) {
        out += ',';
        out += g;
    }
    out += '\n';
    for (size_t r = 0; r < matrix.groups.size(); ++r) {
        out += matrix.groups[r];
        for (size_t c = 0; c < matrix.groups.size(); ++c) {
            out += ',';
            out += format_double(matrix.counts(r, c));
        }
        out += '\n';
    }
    write_file_bytes(path, out);
}

double correlation(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ValidationError("correlation: sequences differ in length");
    if (x.size() < 3) throw ValidationError("correlation: need at least 3 points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) throw ValidationError("correlation: zero variance input");
    return sxy / std::sqrt(sxx * syy);
}

} // namespace styleforge::analysis
