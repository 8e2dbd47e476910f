#include "styleforge/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "styleforge/analysis.hpp"
#include "styleforge/core.hpp"
#include "styleforge/curation.hpp"
#include "styleforge/manifest.hpp"
#include "styleforge/plot.hpp"
#include "styleforge/retrieval.hpp"
#include "styleforge/toy_features.hpp"
#include "styleforge/training.hpp"

namespace styleforge::cli {

namespace fs = std::filesystem;

namespace {

std::string now_utc_iso() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Collects resolved config values and input digests while a command runs, then
// drops the manifest beside the command's primary output.
class ManifestScope {
public:
    explicit ManifestScope(std::string command) : start_(std::chrono::steady_clock::now()) {
        manifest_.command = std::move(command);
        manifest_.started_at = now_utc_iso();
    }

    void config(const std::string& key, const std::string& value) { manifest_.config[key] = value; }
    void config(const std::string& key, double value) { manifest_.config[key] = format_double(value); }
    void config(const std::string& key, int64_t value) { manifest_.config[key] = std::to_string(value); }
    void config_flag(const std::string& key, bool value) { manifest_.config[key] = value ? "true" : "false"; }

    void input(const fs::path& path) { manifest_.inputs[path.string()] = file_digest(path); }

    void write(const fs::path& primary_output) {
        const auto elapsed = std::chrono::steady_clock::now() - start_;
        manifest_.wall_ms = std::chrono::duration<double, std::milli>(elapsed).count();
        write_manifest(primary_output.string() + ".manifest.json", manifest_);
    }

private:
    RunManifest manifest_;
    std::chrono::steady_clock::time_point start_;
};

Dataset load_dataset(const fs::path& embeddings, const std::optional<fs::path>& labels) {
    Dataset ds = load_embeddings(embeddings);
    if (labels) attach_labels(ds, load_label_sidecar(*labels), /*extend_vocab=*/true);
    ds.validate();
    return ds;
}

std::vector<fs::path> list_images(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (ext == ".ppm" || ext == ".png") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ValidationError("no .ppm or .png images in " + dir.string());
    return files;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::vector<std::string> read_lines(const fs::path& path) {
    const std::string bytes = read_file_bytes(path);
    std::vector<std::string> lines;
    size_t pos = 0;
    while (pos < bytes.size()) {
        size_t end = bytes.find('\n', pos);
        if (end == std::string::npos) end = bytes.size();
        lines.push_back(bytes.substr(pos, end - pos));
        pos = end + 1;
    }
    return lines;
}

retrieval::MapMode parse_map_mode(const std::string& name) {
    if (name == "all_ranks") return retrieval::MapMode::all_ranks;
    if (name == "relevant_ranks") return retrieval::MapMode::relevant_ranks;
    throw ValidationError("--map-mode must be all_ranks or relevant_ranks");
}

// ---------------------------------------------------------------------------
// per-subcommand option structs and runners

struct IngestOpts {
    std::string vectors, out, labels_out, vocab_out;
};

void run_ingest(const IngestOpts& o) {
    ManifestScope scope("ingest");
    scope.input(o.vectors);

    Dataset ds;
    bool dim_known = false;
    const auto lines = read_lines(o.vectors);
    for (size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        nlohmann::json j = nlohmann::json::parse(lines[i], nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("id") || !j.contains("vector")) {
            throw FormatError(o.vectors + ": malformed record on line " + std::to_string(i + 1));
        }
        EmbeddingRecord rec;
        rec.id = j["id"].get<std::string>();
        rec.vector = j["vector"].get<Vec>();
        if (!dim_known) {
            ds.dim = static_cast<uint32_t>(rec.vector.size());
            dim_known = true;
        }
        if (j.contains("labels")) {
            for (const auto& t : j["labels"]) rec.labels.insert(ds.vocab.add(t.get<std::string>()));
        }
        ds.records.push_back(std::move(rec));
    }
    ds.validate();
    save_embeddings(o.out, ds);
    if (!o.labels_out.empty()) save_label_sidecar(o.labels_out, ds);
    if (!o.vocab_out.empty()) save_vocabulary(o.vocab_out, ds.vocab);

    scope.config("vectors", o.vectors);
    scope.config("out", o.out);
    scope.write(o.out);
    std::cout << "ingested " << ds.records.size() << " records (dim " << ds.dim << ")\n";
}

struct CurateOpts {
    std::string captions, tags, labels_out, counts_out, vocab_out;
    uint64_t cutoff = 100000;
};

void run_curate(const CurateOpts& o) {
    ManifestScope scope("curate");
    scope.input(o.captions);
    scope.input(o.tags);

    const auto captions = curation::load_captions(o.captions);
    const LabelVocabulary bank = load_vocabulary(o.tags);

    std::vector<std::set<int>> matches(captions.size());
    std::map<std::string, uint64_t> counts;
    for (const auto& t : bank.tags()) counts[t] = 0;
    for (size_t i = 0; i < captions.size(); ++i) {
        matches[i] = curation::match_tags(captions[i].caption, bank);
        for (int t : matches[i]) counts[bank.tag(t)]++;
    }

    const auto retained = curation::filter_frequent_tags(counts, o.cutoff);

    // label sidecar over retained tags only, caption order
    std::string sidecar;
    size_t labeled = 0;
    for (size_t i = 0; i < captions.size(); ++i) {
        nlohmann::json j;
        j["id"] = captions[i].id;
        auto labels = nlohmann::json::array();
        for (int t : matches[i]) {
            const std::string& tag = bank.tag(t);
            if (retained.count(tag)) labels.push_back(tag);
        }
        if (!labels.empty()) ++labeled;
        j["labels"] = labels;
        sidecar += j.dump();
        sidecar += '\n';
    }
    write_file_bytes(o.labels_out, sidecar);

    std::string csv = "tag,count\n";
    for (const auto& t : bank.tags()) {
        csv += t;
        csv += ',';
        csv += std::to_string(counts[t]);
        csv += '\n';
    }
    write_file_bytes(o.counts_out, csv);

    if (!o.vocab_out.empty()) {
        LabelVocabulary retained_vocab;
        for (const auto& t : bank.tags()) {
            if (retained.count(t)) retained_vocab.add(t);
        }
        save_vocabulary(o.vocab_out, retained_vocab);
    }

    scope.config("captions", o.captions);
    scope.config("tags", o.tags);
    scope.config("cutoff", static_cast<int64_t>(o.cutoff));
    scope.write(o.labels_out);
    std::cout << "curate: " << captions.size() << " captions, " << retained.size() << "/"
              << bank.size() << " tags retained, " << labeled << " captions labeled\n";
}

struct DedupOpts {
    std::string embeddings, labels, out;
    double threshold = 0.8;
    int threads = 1;
};

void run_dedup(const DedupOpts& o) {
    ManifestScope scope("dedup");
    scope.input(o.embeddings);
    std::optional<fs::path> labels;
    if (!o.labels.empty()) {
        labels = o.labels;
        scope.input(o.labels);
    }

    const Dataset ds = load_dataset(o.embeddings, labels);
    const auto result = curation::dedup(ds, o.threshold, o.threads);

    nlohmann::json j;
    auto clusters = nlohmann::json::array();
    for (const auto& c : result.clusters) {
        nlohmann::json e;
        e["representative"] = c.representative;
        e["members"] = c.members;
        auto tags = nlohmann::json::array();
        for (int l : c.labels) tags.push_back(ds.vocab.tag(l));
        e["labels"] = tags;
        clusters.push_back(std::move(e));
    }
    j["clusters"] = std::move(clusters);
    j["threshold"] = o.threshold;
    write_file_bytes(o.out, j.dump(2) + "\n");

    scope.config("embeddings", o.embeddings);
    scope.config("threshold", o.threshold);
    scope.config("threads", static_cast<int64_t>(o.threads));
    scope.write(o.out);
    std::cout << "dedup: " << ds.records.size() << " records -> " << result.clusters.size()
              << " clusters\n";
}

struct ExtractOpts {
    std::string images_dir, out, labels_out, images_out, split_out;
    std::vector<uint64_t> synthetic; // classes, per_class, seed
    int queries_per_class = 0;
};

void run_extract(const ExtractOpts& o) {
    ManifestScope scope("extract-features");

    Dataset ds;
    ds.dim = toyfeat::kFeatureDim;
    std::vector<toyfeat::SyntheticImage> corpus;

    if (!o.synthetic.empty()) {
        const int classes = static_cast<int>(o.synthetic[0]);
        const int per_class = static_cast<int>(o.synthetic[1]);
        const uint64_t seed = o.synthetic[2];
        ds = toyfeat::synthetic_feature_dataset(classes, per_class, seed);
        scope.config("synthetic", std::to_string(classes) + " " + std::to_string(per_class) + " " +
                                      std::to_string(seed));
        if (!o.images_out.empty()) {
            corpus = toyfeat::synthetic_corpus(classes, per_class, seed);
            fs::create_directories(o.images_out);
            for (const auto& item : corpus) {
                toyfeat::save_ppm(fs::path(o.images_out) / (item.id + ".ppm"), item.image);
            }
        }
        if (!o.split_out.empty()) {
            if (o.queries_per_class <= 0 || o.queries_per_class >= per_class) {
                throw ValidationError("--queries-per-class must be in [1, per-class-count)");
            }
            retrieval::SplitSpec split;
            for (int k = 0; k < classes; ++k) {
                for (int i = 0; i < per_class; ++i) {
                    char id[32];
                    std::snprintf(id, sizeof(id), "s%02d_%04d", k, i);
                    if (i < per_class - o.queries_per_class) {
                        split.database_ids.push_back(id);
                    } else {
                        split.query_ids.push_back(id);
                    }
                }
            }
            retrieval::save_split(o.split_out, split);
        }
    } else {
        const auto files = list_images(o.images_dir);
        for (const auto& f : files) {
            EmbeddingRecord rec;
            rec.id = f.filename().string();
            rec.vector = toyfeat::extract_features(toyfeat::load_image(f));
            ds.records.push_back(std::move(rec));
            scope.input(f);
        }
        scope.config("images", o.images_dir);
    }

    ds.validate();
    save_embeddings(o.out, ds);
    if (!o.labels_out.empty()) save_label_sidecar(o.labels_out, ds);

    scope.config("out", o.out);
    scope.write(o.out);
    std::cout << "extracted " << ds.records.size() << " feature vectors (dim " << ds.dim << ")\n";
}

struct TrainOpts {
    std::string embeddings, labels, images_dir, out, trace_out;
    std::vector<uint64_t> synthetic;
    training::TrainConfig config;
    double lambda_flag = 0.2;
};

void run_train(const TrainOpts& o) {
    ManifestScope scope("train");
    training::TrainConfig config = o.config;
    config.lambda = o.lambda_flag;

    training::TrainResult result;
    if (!o.synthetic.empty()) {
        const int classes = static_cast<int>(o.synthetic[0]);
        const int per_class = static_cast<int>(o.synthetic[1]);
        const uint64_t seed = o.synthetic[2];
        const auto corpus = toyfeat::synthetic_corpus(classes, per_class, seed);
        std::vector<toyfeat::RasterImage> images;
        std::vector<std::set<int>> labels;
        for (const auto& item : corpus) {
            images.push_back(item.image);
            labels.push_back({item.style_class});
        }
        scope.config("synthetic", std::to_string(classes) + " " + std::to_string(per_class) + " " +
                                      std::to_string(seed));
        result = training::train(images, labels, config);
    } else if (!o.images_dir.empty()) {
        if (o.labels.empty() && !config.ssl_only) {
            throw ValidationError("train: --images needs --labels (or --ssl-only, which trains unlabeled)");
        }
        const auto files = list_images(o.images_dir);
        Dataset ids_only;
        std::vector<toyfeat::RasterImage> images;
        for (const auto& f : files) {
            images.push_back(toyfeat::load_image(f));
            EmbeddingRecord rec;
            rec.id = f.filename().string();
            rec.vector = Vec{0.0};
            ids_only.records.push_back(rec);
            scope.input(f);
        }
        ids_only.dim = 1;
        if (!o.labels.empty()) {
            attach_labels(ids_only, load_label_sidecar(o.labels), true);
            scope.input(o.labels);
        }
        std::vector<std::set<int>> labels;
        for (const auto& rec : ids_only.records) labels.push_back(rec.labels);
        scope.config("images", o.images_dir);
        result = training::train(images, labels, config);
    } else {
        const Dataset ds = load_dataset(o.embeddings, o.labels.empty()
                                                          ? std::optional<fs::path>{}
                                                          : std::optional<fs::path>{o.labels});
        scope.input(o.embeddings);
        if (!o.labels.empty()) scope.input(o.labels);
        scope.config("embeddings", o.embeddings);
        result = training::train(ds, config);
    }

    training::save_head(o.out, result.head);
    if (!o.trace_out.empty()) training::save_trace_csv(o.trace_out, result.trace);

    scope.config("tau", config.tau);
    scope.config("lambda", config.lambda);
    scope.config_flag("ssl_only", config.ssl_only);
    scope.config("lr", config.lr);
    scope.config("momentum", config.momentum);
    scope.config("batch_size", static_cast<int64_t>(config.batch_size));
    scope.config("iterations", static_cast<int64_t>(config.iterations));
    scope.config("seed", static_cast<int64_t>(config.seed));
    scope.config("dim", static_cast<int64_t>(config.projection_dim));
    scope.write(o.out);

    double first = 0.0, last = 0.0;
    if (!result.trace.empty()) {
        first = result.trace.front().combined;
        last = result.trace.back().combined;
    }
    std::cout << "trained head " << result.head.d_in() << " -> " << result.head.d_out() << " in "
              << result.trace.size() << " iterations (loss " << first << " -> " << last << ", "
              << result.skipped_batches << " skipped batches)\n";
}

struct EvalOpts {
    std::string embeddings, labels, split, head, out, csv_out;
    std::vector<int> k_values{1, 10, 100};
    std::string map_mode = "all_ranks";
    int threads = 1;
};

void run_eval(const EvalOpts& o) {
    ManifestScope scope("eval");
    scope.input(o.embeddings);
    scope.input(o.split);
    std::optional<fs::path> labels;
    if (!o.labels.empty()) {
        labels = o.labels;
        scope.input(o.labels);
    }

    const Dataset ds = load_dataset(o.embeddings, labels);
    const auto split = retrieval::load_split(o.split);

    std::optional<training::ProjectionHead> head;
    if (!o.head.empty()) {
        head = training::load_head(o.head);
        scope.input(o.head);
    }

    retrieval::EvalOptions opts;
    opts.k_values = o.k_values;
    opts.map_mode = parse_map_mode(o.map_mode);
    opts.threads = o.threads;
    const auto report = retrieval::evaluate(ds, split, head ? &*head : nullptr, opts);

    retrieval::save_report(o.out, report);
    const std::string csv_out =
        o.csv_out.empty() ? fs::path(o.out).replace_extension(".csv").string() : o.csv_out;
    retrieval::save_report_csv(csv_out, report);

    scope.config("split", o.split);
    scope.config("map_mode", o.map_mode);
    scope.config("threads", static_cast<int64_t>(o.threads));
    {
        std::string ks;
        for (int k : o.k_values) {
            if (!ks.empty()) ks += ',';
            ks += std::to_string(k);
        }
        scope.config("k", ks);
    }
    scope.write(o.out);

    for (size_t i = 0; i < report.k_values.size(); ++i) {
        std::cout << "k=" << report.k_values[i] << "  mAP=" << format_double(report.map_at_k[i])
                  << "  recall=" << format_double(report.recall_at_k[i]) << "\n";
    }
    if (report.excluded_queries > 0) {
        std::cout << "excluded " << report.excluded_queries << " unlabeled queries\n";
    }
    if (report.duplicate_query_warnings > 0) {
        std::cout << "warning: " << report.duplicate_query_warnings
                  << " queries have an identical database vector under another id\n";
    }
}

struct QueryOpts {
    std::string embeddings, labels, image, head, out;
    std::vector<double> vector;
    int k = 10;
};

void run_query(const QueryOpts& o) {
    std::optional<ManifestScope> scope;
    if (!o.out.empty()) scope.emplace("query");

    const Dataset ds = load_dataset(o.embeddings, o.labels.empty()
                                                      ? std::optional<fs::path>{}
                                                      : std::optional<fs::path>{o.labels});
    if (scope) scope->input(o.embeddings);

    if (o.vector.empty() == o.image.empty()) {
        throw ValidationError("query: provide exactly one of --vector, --image");
    }
    Vec raw;
    if (!o.vector.empty()) {
        raw = o.vector;
    } else {
        raw = toyfeat::extract_features(toyfeat::load_image(o.image));
        if (scope) scope->input(o.image);
    }

    std::optional<training::ProjectionHead> head;
    if (!o.head.empty()) {
        head = training::load_head(o.head);
        if (scope) scope->input(o.head);
    }

    Dataset projected = ds;
    for (auto& rec : projected.records) {
        rec.vector = head ? head->forward(rec.vector) : normalize(rec.vector);
    }
    const Vec query_vec = head ? head->forward(raw) : normalize(raw);
    const auto ids = retrieval::knn(query_vec, projected, o.k);

    const auto index = projected.id_index();
    std::string csv = "rank,id,cosine,labels\n";
    for (size_t r = 0; r < ids.size(); ++r) {
        const auto& rec = projected.records[index.at(ids[r])];
        const double sim = dot(query_vec, rec.vector);
        std::string tags;
        for (int l : rec.labels) {
            if (!tags.empty()) tags += ' ';
            tags += ds.vocab.tag(l);
        }
        std::printf("%3zu  %-24s  %.6f  %s\n", r + 1, rec.id.c_str(), sim, tags.c_str());
        csv += std::to_string(r + 1) + "," + rec.id + "," + format_double(sim) + "," + tags + "\n";
    }
    if (!o.out.empty()) {
        write_file_bytes(o.out, csv);
        scope->config("k", static_cast<int64_t>(o.k));
        scope->write(o.out);
    }
}

struct PrototypeOpts {
    std::string embeddings, labels, head, out;
};

void run_prototype(const PrototypeOpts& o) {
    ManifestScope scope("prototype");
    scope.input(o.embeddings);
    scope.input(o.labels);

    const Dataset ds = load_dataset(o.embeddings, fs::path(o.labels));
    std::optional<training::ProjectionHead> head;
    if (!o.head.empty()) {
        head = training::load_head(o.head);
        scope.input(o.head);
    }

    std::map<int, std::vector<Vec>> by_label;
    for (const auto& rec : ds.records) {
        const Vec v = head ? head->forward(rec.vector) : normalize(rec.vector);
        for (int l : rec.labels) by_label[l].push_back(v);
    }
    if (by_label.empty()) throw ValidationError("prototype: no labeled records");

    Dataset protos;
    protos.dim = static_cast<uint32_t>(by_label.begin()->second.front().size());
    for (const auto& [label, vectors] : by_label) {
        const std::string& tag = ds.vocab.tag(label);
        try {
            const auto proto = analysis::build_prototype(vectors);
            EmbeddingRecord rec;
            rec.id = tag;
            rec.vector = proto.vector;
            protos.records.push_back(std::move(rec));
        } catch (const ValidationError& e) {
            throw ValidationError("prototype for '" + tag + "': " + e.what());
        }
    }
    save_embeddings(o.out, protos);

    scope.config("embeddings", o.embeddings);
    scope.config("labels", o.labels);
    scope.write(o.out);
    std::cout << "wrote " << protos.records.size() << " prototypes\n";
}

struct GssOpts {
    std::string prototypes, embeddings, images_dir, head, out, label;
};

void run_gss(const GssOpts& o) {
    ManifestScope scope("gss");
    scope.input(o.prototypes);

    const Dataset protos_ds = load_embeddings(o.prototypes);
    Dataset ds;
    if (!o.embeddings.empty()) {
        scope.input(o.embeddings);
        ds = load_embeddings(o.embeddings);
    } else if (!o.images_dir.empty()) {
        ds.dim = toyfeat::kFeatureDim;
        for (const auto& f : list_images(o.images_dir)) {
            EmbeddingRecord rec;
            rec.id = f.filename().string();
            rec.vector = toyfeat::extract_features(toyfeat::load_image(f));
            ds.records.push_back(std::move(rec));
            scope.input(f);
        }
    } else {
        throw ValidationError("gss: provide --embeddings or --images");
    }
    std::optional<training::ProjectionHead> head;
    if (!o.head.empty()) {
        head = training::load_head(o.head);
        scope.input(o.head);
    }

    std::vector<std::pair<std::string, analysis::StylePrototype>> protos;
    for (const auto& rec : protos_ds.records) {
        if (!o.label.empty() && rec.id != o.label) continue;
        analysis::StylePrototype p;
        p.vector = normalize(rec.vector); // f32 storage round-off
        p.support = 1;
        protos.emplace_back(rec.id, std::move(p));
    }
    if (protos.empty()) throw ValidationError("gss: no prototypes selected");

    std::string csv = "id,label,score,band\n";
    for (const auto& rec : ds.records) {
        const Vec v = head ? head->forward(rec.vector) : normalize(rec.vector);
        for (const auto& [tag, proto] : protos) {
            const double score = analysis::gss(v, proto);
            csv += rec.id + "," + tag + "," + format_double(score) + "," +
                   analysis::band_name(analysis::band_for_score(score)) + "\n";
        }
    }
    write_file_bytes(o.out, csv);

    scope.config("prototypes", o.prototypes);
    scope.config("embeddings", o.embeddings.empty() ? o.images_dir : o.embeddings);
    scope.write(o.out);
    std::cout << "scored " << ds.records.size() << " embeddings against " << protos.size()
              << " prototypes\n";
}

struct ConfusionOpts {
    std::string report, embeddings, labels, groups, out;
};

void run_confusion(const ConfusionOpts& o) {
    ManifestScope scope("confusion");
    scope.input(o.report);
    scope.input(o.embeddings);
    scope.input(o.labels);
    scope.input(o.groups);

    const auto report = retrieval::load_report(o.report);
    const Dataset ds = load_dataset(o.embeddings, fs::path(o.labels));
    const auto groups = analysis::load_group_map(o.groups);
    const auto matrix = analysis::group_confusion(report, ds, groups);
    analysis::save_confusion_csv(o.out, matrix);

    scope.config("report", o.report);
    scope.config("groups", o.groups);
    scope.write(o.out);
    std::cout << "confusion over " << matrix.groups.size() << " groups, " << matrix.total_errors
              << " errors\n";
}

struct PlotOpts {
    std::string report, gss, gss_y, confusion, out_prefix;
};

// rows of a gss CSV keyed by (id, label)
std::map<std::pair<std::string, std::string>, double> read_gss_scores(const fs::path& path) {
    const auto lines = read_lines(path);
    if (lines.size() < 2) throw ValidationError("plot: gss csv has no data rows: " + path.string());
    std::map<std::pair<std::string, std::string>, double> out;
    for (size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto cols = split_csv_line(lines[i]);
        if (cols.size() < 4) throw FormatError(path.string() + ": bad row " + std::to_string(i + 1));
        out[{cols[0], cols[1]}] = std::stod(cols[2]);
    }
    return out;
}

void run_plot(const PlotOpts& o) {
    ManifestScope scope("plot");
    const fs::path svg_path = o.out_prefix + ".svg";
    const fs::path csv_path = o.out_prefix + ".csv";

    const int sources = (!o.report.empty()) + (!o.gss.empty()) + (!o.confusion.empty());
    if (sources != 1) throw ValidationError("plot: provide exactly one of --report, --gss, --confusion");

    if (!o.report.empty()) {
        scope.input(o.report);
        const auto report = retrieval::load_report(o.report);
        std::vector<plot::ScatterPoint> points;
        for (size_t i = 0; i < report.k_values.size(); ++i) {
            points.push_back({static_cast<double>(report.k_values[i]), report.map_at_k[i], "map"});
        }
        for (size_t i = 0; i < report.k_values.size(); ++i) {
            points.push_back({static_cast<double>(report.k_values[i]), report.recall_at_k[i], "recall"});
        }
        plot::write_scatter_svg(svg_path, points, "k", "metric value");
        retrieval::save_report_csv(csv_path, report);
    } else if (!o.gss.empty() && !o.gss_y.empty()) {
        // two score files joined on (id, label): one point per shared pair
        scope.input(o.gss);
        scope.input(o.gss_y);
        const auto scores_x = read_gss_scores(o.gss);
        const auto scores_y = read_gss_scores(o.gss_y);
        std::vector<plot::ScatterPoint> points;
        std::string csv = "id,label,score_x,score_y\n";
        for (const auto& [key, x] : scores_x) {
            auto it = scores_y.find(key);
            if (it == scores_y.end()) continue;
            points.push_back({x, it->second, key.second});
            csv += key.first + "," + key.second + "," + format_double(x) + "," +
                   format_double(it->second) + "\n";
        }
        if (points.empty()) throw ValidationError("plot: no shared (id, label) rows between the two gss files");
        plot::write_scatter_svg(svg_path, points, "style similarity (first file)",
                                "style similarity (second file)");
        write_file_bytes(csv_path, csv);
    } else if (!o.gss.empty()) {
        scope.input(o.gss);
        const auto lines = read_lines(o.gss);
        if (lines.size() < 2) throw ValidationError("plot: gss csv has no data rows");
        std::vector<plot::ScatterPoint> points;
        std::string csv = "index,id,label,score\n";
        size_t index = 0;
        for (size_t i = 1; i < lines.size(); ++i) {
            if (lines[i].empty()) continue;
            const auto cols = split_csv_line(lines[i]);
            if (cols.size() < 4) throw FormatError(o.gss + ": bad row " + std::to_string(i + 1));
            ++index;
            const double score = std::stod(cols[2]);
            points.push_back({static_cast<double>(index), score, cols[1]});
            csv += std::to_string(index) + "," + cols[0] + "," + cols[1] + "," + format_double(score) + "\n";
        }
        plot::write_scatter_svg(svg_path, points, "image", "style similarity");
        write_file_bytes(csv_path, csv);
    } else {
        scope.input(o.confusion);
        const auto lines = read_lines(o.confusion);
        if (lines.size() < 2) throw ValidationError("plot: confusion csv has no data rows");
        const auto header = split_csv_line(lines[0]);
        std::vector<std::string> col_names(header.begin() + 1, header.end());
        std::vector<std::string> row_names;
        Matrix values(lines.size() - 1 - std::count(lines.begin() + 1, lines.end(), std::string{}),
                      col_names.size());
        size_t r = 0;
        std::string csv = lines[0] + "\n";
        for (size_t i = 1; i < lines.size(); ++i) {
            if (lines[i].empty()) continue;
            const auto cols = split_csv_line(lines[i]);
            if (cols.size() != col_names.size() + 1) {
                throw FormatError(o.confusion + ": bad row " + std::to_string(i + 1));
            }
            row_names.push_back(cols[0]);
            for (size_t c = 0; c < col_names.size(); ++c) values(r, c) = std::stod(cols[c + 1]);
            ++r;
            csv += lines[i] + "\n";
        }
        plot::write_heatmap_svg(svg_path, values, row_names, col_names);
        write_file_bytes(csv_path, csv);
    }

    scope.write(csv_path);
    std::cout << "wrote " << svg_path.string() << " and " << csv_path.string() << "\n";
}

} // namespace

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"style descriptor toolkit: curation, contrastive training, retrieval evaluation"};
    app.name("styleforge");
    app.option_defaults()->always_capture_default();
    app.set_config("--config", "", "key=value config file; flags override it");
    app.require_subcommand(0, 1);
    app.set_version_flag("--version", kToolVersion);

    int threads = 1;
    app.add_option("--threads", threads, "worker thread cap (1 = deterministic baseline)")
        ->envname("STYLEFORGE_THREADS");

    IngestOpts ingest;
    auto* cmd_ingest = app.add_subcommand("ingest", "convert a JSONL vector dump to the binary embedding format");
    cmd_ingest->add_option("--vectors", ingest.vectors, "JSONL: {\"id\",\"vector\",[\"labels\"]}")->required();
    cmd_ingest->add_option("--out", ingest.out, "output embedding file")->required();
    cmd_ingest->add_option("--labels-out", ingest.labels_out, "optional label sidecar output");
    cmd_ingest->add_option("--vocab-out", ingest.vocab_out, "optional vocabulary output");

    CurateOpts curate;
    auto* cmd_curate = app.add_subcommand("curate", "match caption text against a tag bank and filter over-frequent tags");
    cmd_curate->add_option("--captions", curate.captions, "captions JSONL: {\"id\",\"caption\"}")->required();
    cmd_curate->add_option("--tags", curate.tags, "tag bank, one lowercase tag per line")->required();
    cmd_curate->add_option("--labels-out", curate.labels_out, "label sidecar output")->required();
    cmd_curate->add_option("--counts-out", curate.counts_out, "tag count CSV output")->required();
    cmd_curate->add_option("--vocab-out", curate.vocab_out, "retained tag list output");
    cmd_curate->add_option("--cutoff", curate.cutoff, "drop tags with more hits than this");

    DedupOpts dedup;
    auto* cmd_dedup = app.add_subcommand("dedup", "cluster near-duplicate embeddings and merge their labels");
    cmd_dedup->add_option("--embeddings", dedup.embeddings, "embedding file (unit-norm vectors)")->required();
    cmd_dedup->add_option("--labels", dedup.labels, "optional label sidecar");
    cmd_dedup->add_option("--threshold", dedup.threshold, "cosine threshold; strictly greater joins a cluster");
    cmd_dedup->add_option("--out", dedup.out, "cluster JSON output")->required();

    ExtractOpts extract;
    auto* cmd_extract = app.add_subcommand("extract-features", "compute style features for images (or a synthetic corpus)");
    cmd_extract->add_option("--images", extract.images_dir, "directory of .ppm/.png images");
    cmd_extract->add_option("--synthetic", extract.synthetic, "CLASSES PER_CLASS SEED: generate a procedural corpus")
        ->expected(3);
    cmd_extract->add_option("--out", extract.out, "output embedding file")->required();
    cmd_extract->add_option("--labels-out", extract.labels_out, "label sidecar output (synthetic mode)");
    cmd_extract->add_option("--images-out", extract.images_out, "dump synthetic images as PPM into this directory");
    cmd_extract->add_option("--split-out", extract.split_out, "write a database/query split JSON (synthetic mode)");
    cmd_extract->add_option("--queries-per-class", extract.queries_per_class,
                            "trailing images per class routed to the query split");

    TrainOpts train;
    auto* cmd_train = app.add_subcommand("train", "train the projection head with the contrastive objective");
    cmd_train->add_option("--embeddings", train.embeddings, "embedding file (lambda must be 0: no images to augment)");
    cmd_train->add_option("--images", train.images_dir, "directory of images (enables the SSL term)");
    cmd_train->add_option("--labels", train.labels, "label sidecar");
    cmd_train->add_option("--synthetic", train.synthetic, "CLASSES PER_CLASS SEED: train on a procedural corpus")
        ->expected(3);
    cmd_train->add_option("--tau", train.config.tau, "softmax temperature");
    cmd_train->add_option("--lambda", train.lambda_flag, "SSL term weight");
    cmd_train->add_flag("--ssl-only", train.config.ssl_only, "train on the SSL term alone");
    cmd_train->add_option("--lr", train.config.lr, "learning rate");
    cmd_train->add_option("--momentum", train.config.momentum, "SGD momentum");
    cmd_train->add_option("--batch-size", train.config.batch_size, "mini-batch size");
    cmd_train->add_option("--iterations", train.config.iterations, "optimizer steps")->required();
    cmd_train->add_option("--seed", train.config.seed, "RNG seed");
    cmd_train->add_option("--dim", train.config.projection_dim, "style-descriptor dimension");
    cmd_train->add_flag("--identity-init", train.config.identity_init, "start from the identity map (square heads)");
    cmd_train->add_option("--out", train.out, "output head file")->required();
    cmd_train->add_option("--trace-out", train.trace_out, "per-iteration loss CSV");

    EvalOpts eval;
    auto* cmd_eval = app.add_subcommand("eval", "rank queries against a database split and score mAP/Recall");
    cmd_eval->add_option("--embeddings", eval.embeddings, "embedding file")->required();
    cmd_eval->add_option("--labels", eval.labels, "label sidecar");
    cmd_eval->add_option("--split", eval.split, "split JSON: {\"database\": [...], \"query\": [...]}")->required();
    cmd_eval->add_option("--head", eval.head, "optional projection head to apply");
    cmd_eval->add_option("--k", eval.k_values, "ranks to report")->delimiter(',');
    cmd_eval->add_option("--map-mode", eval.map_mode, "all_ranks | relevant_ranks");
    cmd_eval->add_option("--out", eval.out, "report JSON output")->required();
    cmd_eval->add_option("--csv-out", eval.csv_out, "metric CSV output (default: report path with .csv)");

    QueryOpts query;
    auto* cmd_query = app.add_subcommand("query", "rank the database against one query vector or image");
    cmd_query->add_option("--embeddings", query.embeddings, "database embedding file")->required();
    cmd_query->add_option("--labels", query.labels, "label sidecar");
    cmd_query->add_option("--vector", query.vector, "query vector components")->delimiter(',');
    cmd_query->add_option("--image", query.image, "query image (.ppm/.png)");
    cmd_query->add_option("--head", query.head, "optional projection head");
    cmd_query->add_option("--k", query.k, "neighbors to print");
    cmd_query->add_option("--out", query.out, "optional CSV output");

    PrototypeOpts prototype;
    auto* cmd_prototype = app.add_subcommand("prototype", "average each label's embeddings into a unit prototype");
    cmd_prototype->add_option("--embeddings", prototype.embeddings, "embedding file")->required();
    cmd_prototype->add_option("--labels", prototype.labels, "label sidecar")->required();
    cmd_prototype->add_option("--head", prototype.head, "optional projection head");
    cmd_prototype->add_option("--out", prototype.out, "prototype embedding file")->required();

    GssOpts gss;
    auto* cmd_gss = app.add_subcommand("gss", "score embeddings against style prototypes");
    cmd_gss->add_option("--prototypes", gss.prototypes, "prototype embedding file")->required();
    cmd_gss->add_option("--embeddings", gss.embeddings, "embedding file to score");
    cmd_gss->add_option("--images", gss.images_dir, "directory of images to score");
    cmd_gss->add_option("--head", gss.head, "optional projection head for the scored embeddings");
    cmd_gss->add_option("--label", gss.label, "score against this prototype only");
    cmd_gss->add_option("--out", gss.out, "CSV output: id,label,score,band")->required();

    ConfusionOpts confusion;
    auto* cmd_confusion = app.add_subcommand("confusion", "tally top-1 retrieval errors at the group level");
    cmd_confusion->add_option("--report", confusion.report, "retrieval report JSON")->required();
    cmd_confusion->add_option("--embeddings", confusion.embeddings, "embedding file")->required();
    cmd_confusion->add_option("--labels", confusion.labels, "label sidecar")->required();
    cmd_confusion->add_option("--groups", confusion.groups, "JSON object: fine label -> group")->required();
    cmd_confusion->add_option("--out", confusion.out, "confusion matrix CSV")->required();

    PlotOpts plot_opts;
    auto* cmd_plot = app.add_subcommand("plot", "render a report, gss CSV or confusion CSV as SVG + data CSV");
    cmd_plot->add_option("--report", plot_opts.report, "retrieval report JSON");
    cmd_plot->add_option("--gss", plot_opts.gss, "gss CSV");
    cmd_plot->add_option("--gss-y", plot_opts.gss_y,
                         "second gss CSV: scatter score vs score joined on (id, label)");
    cmd_plot->add_option("--confusion", plot_opts.confusion, "confusion CSV");
    cmd_plot->add_option("--out-prefix", plot_opts.out_prefix, "output path prefix")->required();

    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("styleforge");
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());

        if (cmd_ingest->parsed()) {
            run_ingest(ingest);
        } else if (cmd_curate->parsed()) {
            run_curate(curate);
        } else if (cmd_dedup->parsed()) {
            dedup.threads = threads;
            run_dedup(dedup);
        } else if (cmd_extract->parsed()) {
            if (extract.synthetic.empty() == extract.images_dir.empty()) {
                throw ValidationError("extract-features: provide exactly one of --images, --synthetic");
            }
            run_extract(extract);
        } else if (cmd_train->parsed()) {
            if (static_cast<int>(!train.synthetic.empty()) + static_cast<int>(!train.images_dir.empty()) +
                    static_cast<int>(!train.embeddings.empty()) !=
                1) {
                throw ValidationError("train: provide exactly one of --embeddings, --images, --synthetic");
            }
            run_train(train);
        } else if (cmd_eval->parsed()) {
            eval.threads = threads;
            run_eval(eval);
        } else if (cmd_query->parsed()) {
            run_query(query);
        } else if (cmd_prototype->parsed()) {
            run_prototype(prototype);
        } else if (cmd_gss->parsed()) {
            run_gss(gss);
        } else if (cmd_confusion->parsed()) {
            run_confusion(confusion);
        } else if (cmd_plot->parsed()) {
            run_plot(plot_opts);
        } else {
            std::cout << app.help() << "\n";
        }
        return 0;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace styleforge::cli
