#include "styleforge/retrieval.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <cmath>
#include <map>
#include <thread>

#include "json.hpp"

namespace styleforge::retrieval {

void SplitSpec::validate(const Dataset& dataset) const {
    if (database_ids.empty()) throw ValidationError("split: database ids are empty");
    if (query_ids.empty()) throw ValidationError("split: query ids are empty");
    const auto index = dataset.id_index();
    std::set<std::string> db;
    for (const auto& id : database_ids) {
        if (!index.count(id)) throw ValidationError("split: unknown database id '" + id + "'");
        if (!db.insert(id).second) throw ValidationError("split: duplicate database id '" + id + "'");
    }
    std::set<std::string> q;
    for (const auto& id : query_ids) {
        if (!index.count(id)) throw ValidationError("split: unknown query id '" + id + "'");
        if (!q.insert(id).second) throw ValidationError("split: duplicate query id '" + id + "'");
        if (db.count(id)) throw ValidationError("split: id '" + id + "' is in both database and query");
    }
}

SplitSpec load_split(const std::filesystem::path& path) {
    nlohmann::json j = nlohmann::json::parse(read_file_bytes(path), nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("database") || !j.contains("query") ||
        !j["database"].is_array() || !j["query"].is_array()) {
        throw FormatError(path.string() + ": split file must be {\"database\": [...], \"query\": [...]}");
    }
    SplitSpec split;
    for (const auto& v : j["database"]) {
        if (!v.is_string()) throw FormatError(path.string() + ": non-string database id");
        split.database_ids.push_back(v.get<std::string>());
    }
    for (const auto& v : j["query"]) {
        if (!v.is_string()) throw FormatError(path.string() + ": non-string query id");
        split.query_ids.push_back(v.get<std::string>());
    }
    return split;
}

void save_split(const std::filesystem::path& path, const SplitSpec& split) {
    nlohmann::json j;
    j["database"] = split.database_ids;
    j["query"] = split.query_ids;
    write_file_bytes(path, j.dump(2) + "\n");
}

namespace {

// Ranked indices of the k best matches: descending similarity, ascending id on
// ties.
std::vector<size_t> rank_topk(const std::vector<double>& sims,
                              const std::vector<const std::string*>& ids, int k) {
    std::vector<size_t> order(sims.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto better = [&](size_t a, size_t b) {
        if (sims[a] != sims[b]) return sims[a] > sims[b];
        return *ids[a] < *ids[b];
    };
    const size_t kk = static_cast<size_t>(k);
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(kk), order.end(), better);
    order.resize(kk);
    return order;
}

} // namespace

std::vector<std::string> knn(const Vec& query, const Dataset& database, int k) {
    if (k < 1 || static_cast<size_t>(k) > database.records.size()) {
        throw ValidationError("knn: k must be in [1, database size], got " + std::to_string(k));
    }
    if (std::fabs(norm(query) - 1.0) > 1e-6) throw ValidationError("knn: query is not unit-norm");
    std::vector<double> sims(database.records.size());
    std::vector<const std::string*> ids(database.records.size());
    for (size_t i = 0; i < database.records.size(); ++i) {
        const auto& rec = database.records[i];
        if (std::fabs(norm(rec.vector) - 1.0) > 1e-6) {
            throw ValidationError("knn: database record '" + rec.id + "' is not unit-norm");
        }
        sims[i] = dot(query, rec.vector);
        ids[i] = &rec.id;
    }
    std::vector<std::string> out;
    for (size_t i : rank_topk(sims, ids, k)) out.push_back(*ids[i]);
    return out;
}

int relevance(const std::set<int>& query_labels, const std::set<int>& neighbor_labels) {
    return training::groundtruth_similarity(query_labels, neighbor_labels);
}

double recall_at_k(const std::vector<int>& relevance_bits, int k) {
    if (k < 1 || static_cast<size_t>(k) > relevance_bits.size()) {
        throw ValidationError("recall_at_k: k out of range");
    }
    for (int r = 0; r < k; ++r) {
        if (relevance_bits[static_cast<size_t>(r)]) return 1.0;
    }
    return 0.0;
}

double average_precision_at_k(const std::vector<int>& relevance_bits, int k, MapMode mode) {
    if (k < 1 || static_cast<size_t>(k) > relevance_bits.size()) {
        throw ValidationError("average_precision_at_k: k out of range");
    }
    int hits = 0;
    double sum = 0.0;
    int relevant_ranks = 0;
    for (int r = 1; r <= k; ++r) {
        const int bit = relevance_bits[static_cast<size_t>(r - 1)];
        hits += bit;
        const double precision = static_cast<double>(hits) / r;
        if (mode == MapMode::all_ranks) {
            sum += precision;
        } else if (bit) {
            sum += precision;
            ++relevant_ranks;
        }
    }
    if (mode == MapMode::all_ranks) return sum / k;
    return relevant_ranks == 0 ? 0.0 : sum / relevant_ranks;
}

RetrievalReport evaluate(const Dataset& dataset, const SplitSpec& split,
                         const training::ProjectionHead* head, const EvalOptions& options) {
    split.validate(dataset);
    if (options.k_values.empty()) throw ValidationError("evaluate: no k values");
    int kmax = 0;
    for (int k : options.k_values) {
        if (k < 1 || static_cast<size_t>(k) > split.database_ids.size()) {
            throw ValidationError("evaluate: k=" + std::to_string(k) +
                                  " outside [1, database size=" + std::to_string(split.database_ids.size()) + "]");
        }
        kmax = std::max(kmax, k);
    }

    const auto index = dataset.id_index();
    auto descriptor = [&](const std::string& id) {
        const auto& rec = dataset.records[index.at(id)];
        return head ? head->forward(rec.vector) : normalize(rec.vector);
    };

    const size_t db_n = split.database_ids.size();
    std::vector<Vec> db_vectors(db_n);
    std::vector<const std::string*> db_ids(db_n);
    std::vector<const std::set<int>*> db_labels(db_n);
    for (size_t i = 0; i < db_n; ++i) {
        db_vectors[i] = descriptor(split.database_ids[i]);
        const auto& rec = dataset.records[index.at(split.database_ids[i])];
        db_ids[i] = &rec.id;
        db_labels[i] = &rec.labels;
    }

    RetrievalReport report;
    report.k_values = options.k_values;
    report.map_mode = options.map_mode;

    struct QuerySlot {
        bool excluded = false;
        bool duplicate = false;
        PerQueryResult result;
    };
    std::vector<QuerySlot> slots(split.query_ids.size());

    auto run_query = [&](size_t qi) {
        auto& slot = slots[qi];
        const auto& qid = split.query_ids[qi];
        const auto& qrec = dataset.records[index.at(qid)];
        if (qrec.labels.empty()) {
            slot.excluded = true;
            return;
        }
        const Vec qvec = descriptor(qid);
        std::vector<double> sims(db_n);
        for (size_t i = 0; i < db_n; ++i) sims[i] = dot(qvec, db_vectors[i]);
        const auto top = rank_topk(sims, db_ids, kmax);
        slot.result.id = qid;
        for (size_t i : top) {
            slot.result.neighbors.push_back(*db_ids[i]);
            slot.result.relevance.push_back(relevance(qrec.labels, *db_labels[i]));
            if (sims[i] >= 1.0 - 1e-12 && *db_ids[i] != qid) slot.duplicate = true;
        }
    };

    const int workers = std::max(1, options.threads);
    if (workers == 1 || slots.size() <= 1) {
        for (size_t qi = 0; qi < slots.size(); ++qi) run_query(qi);
    } else {
        std::atomic<size_t> cursor{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                try {
                    for (;;) {
                        const size_t qi = cursor.fetch_add(1);
                        if (qi >= slots.size()) return;
                        run_query(qi);
                    }
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        if (failure) std::rethrow_exception(failure);
    }

    // deterministic merge in query order
    for (auto& slot : slots) {
        if (slot.excluded) {
            report.excluded_queries++;
            continue;
        }
        if (slot.duplicate) report.duplicate_query_warnings++;
        report.per_query.push_back(std::move(slot.result));
    }
    if (report.per_query.empty()) {
        throw ValidationError("evaluate: every query has an empty label set");
    }

    for (int k : options.k_values) {
        double map_sum = 0.0, recall_sum = 0.0;
        for (const auto& q : report.per_query) {
            map_sum += average_precision_at_k(q.relevance, k, options.map_mode);
            recall_sum += recall_at_k(q.relevance, k);
        }
        const double n = static_cast<double>(report.per_query.size());
        report.map_at_k.push_back(map_sum / n);
        report.recall_at_k.push_back(recall_sum / n);
    }
    return report;
}

namespace {

const char* map_mode_name(MapMode mode) {
    return mode == MapMode::all_ranks ? "all_ranks" : "relevant_ranks";
}

MapMode map_mode_from(const std::string& name) {
    if (name == "all_ranks") return MapMode::all_ranks;
    if (name == "relevant_ranks") return MapMode::relevant_ranks;
    throw FormatError("report: unknown map_mode '" + name + "'");
}

} // namespace

std::string report_to_json(const RetrievalReport& report) {
    nlohmann::json j;
    j["k_values"] = report.k_values;
    j["map_at_k"] = report.map_at_k;
    j["recall_at_k"] = report.recall_at_k;
    j["map_mode"] = map_mode_name(report.map_mode);
    j["excluded_queries"] = report.excluded_queries;
    j["duplicate_query_warnings"] = report.duplicate_query_warnings;
    auto per_query = nlohmann::json::array();
    for (const auto& q : report.per_query) {
        nlohmann::json e;
        e["id"] = q.id;
        e["neighbors"] = q.neighbors;
        e["relevance"] = q.relevance;
        per_query.push_back(std::move(e));
    }
    j["per_query"] = std::move(per_query);
    return j.dump(2) + "\n";
}

RetrievalReport report_from_json(const std::string& json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw FormatError("report: malformed JSON");
    try {
        RetrievalReport report;
        report.k_values = j.at("k_values").get<std::vector<int>>();
        report.map_at_k = j.at("map_at_k").get<std::vector<double>>();
        report.recall_at_k = j.at("recall_at_k").get<std::vector<double>>();
        report.map_mode = map_mode_from(j.at("map_mode").get<std::string>());
        report.excluded_queries = j.at("excluded_queries").get<int>();
        report.duplicate_query_warnings = j.at("duplicate_query_warnings").get<int>();
        for (const auto& e : j.at("per_query")) {
            PerQueryResult q;
            q.id = e.at("id").get<std::string>();
            q.neighbors = e.at("neighbors").get<std::vector<std::string>>();
            q.relevance = e.at("relevance").get<std::vector<int>>();
            report.per_query.push_back(std::move(q));
        }
        return report;
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(std::string("report: ") + ex.what());
    }
}

void save_report(const std::filesystem::path& path, const RetrievalReport& report) {
    write_file_bytes(path, report_to_json(report));
}

RetrievalReport load_report(const std::filesystem::path& path) {
    return report_from_json(read_file_bytes(path));
}

void save_report_csv(const std::filesystem::path& path, const RetrievalReport& report) {
    std::string out = "metric,k,value\n";
    for (size_t i = 0; i < report.k_values.size(); ++i) {
        out += "map,";
        out += std::to_string(report.k_values[i]);
        out += ',';
        out += format_double(report.map_at_k[i]);
        out += '\n';
    }
    for (size_t i = 0; i < report.k_values.size(); ++i) {
        out += "recall,";
        out += std::to_string(report.k_values[i]);
        out += ',';
        out += format_double(report.recall_at_k[i]);
        out += '\n';
    }
    write_file_bytes(path, out);
}

} // namespace styleforge::retrieval
