#include "styleforge/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "binary_io.hpp"

namespace styleforge {

double norm(const Vec& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

Vec normalize(const Vec& v) {
    const double n = norm(v);
    if (!(n > 1e-12)) {
        throw ValidationError("normalize: vector norm is zero (degenerate input)");
    }
    Vec out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
    return out;
}

double cosine(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) {
        throw ValidationError("cosine: dimension mismatch (" + std::to_string(a.size()) +
                              " vs " + std::to_string(b.size()) + ")");
    }
    if (std::fabs(norm(a) - 1.0) > 1e-6 || std::fabs(norm(b) - 1.0) > 1e-6) {
        throw ValidationError("cosine: inputs must be unit-norm within 1e-6");
    }
    return dot(a, b);
}

namespace {

bool has_ascii_upper(const std::string& s) {
    return std::any_of(s.begin(), s.end(), [](unsigned char c) { return c >= 'A' && c <= 'Z'; });
}

} // namespace

LabelVocabulary::LabelVocabulary(const std::vector<std::string>& tags) {
    for (const auto& t : tags) add(t);
}

int LabelVocabulary::add(const std::string& tag) {
    if (tag.empty()) throw ValidationError("vocabulary: empty tag");
    if (has_ascii_upper(tag)) throw ValidationError("vocabulary: tag is not lowercase: '" + tag + "'");
    auto it = index_.find(tag);
    if (it != index_.end()) return it->second;
    const int idx = static_cast<int>(tags_.size());
    tags_.push_back(tag);
    index_.emplace(tag, idx);
    return idx;
}

std::optional<int> LabelVocabulary::find(const std::string& tag) const {
    auto it = index_.find(tag);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

const std::string& LabelVocabulary::tag(int index) const {
    if (index < 0 || static_cast<size_t>(index) >= tags_.size()) {
        throw ValidationError("vocabulary: label index out of range: " + std::to_string(index));
    }
    return tags_[static_cast<size_t>(index)];
}

void Dataset::validate() const {
    std::set<std::string> seen;
    for (const auto& r : records) {
        if (r.id.empty()) throw ValidationError("dataset: empty record id");
        if (!seen.insert(r.id).second) throw ValidationError("dataset: duplicate id '" + r.id + "'");
        if (r.vector.size() != dim) {
            throw ValidationError("dataset: record '" + r.id + "' has dim " +
                                  std::to_string(r.vector.size()) + ", expected " + std::to_string(dim));
        }
        for (double x : r.vector) {
            if (!std::isfinite(x)) throw ValidationError("dataset: non-finite value in record '" + r.id + "'");
        }
        for (int l : r.labels) {
            if (l < 0 || static_cast<size_t>(l) >= vocab.size()) {
                throw ValidationError("dataset: record '" + r.id + "' has label index " +
                                      std::to_string(l) + " outside vocabulary of size " +
                                      std::to_string(vocab.size()));
            }
        }
    }
}

const EmbeddingRecord* Dataset::find(const std::string& id) const {
    for (const auto& r : records) {
        if (r.id == id) return &r;
    }
    return nullptr;
}

std::map<std::string, size_t> Dataset::id_index() const {
    std::map<std::string, size_t> out;
    for (size_t i = 0; i < records.size(); ++i) out.emplace(records[i].id, i);
    return out;
}

// ---------------------------------------------------------------------------
// binary embedding format

namespace {

constexpr char kEmbeddingMagic[4] = {'C', 'S', 'D', 'E'};
constexpr uint16_t kEmbeddingVersion = 1;

using detail::ByteReader;
using detail::put_f32;
using detail::put_u16;
using detail::put_u32;
using detail::put_u64;

} // namespace

std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write file: " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write: " + path.string());
}

Dataset load_embeddings(const std::filesystem::path& path) {
    const std::string bytes = read_file_bytes(path);
    ByteReader r(bytes, path.string());

    const std::string magic = r.str(4, "magic");
    if (std::memcmp(magic.data(), kEmbeddingMagic, 4) != 0) {
        throw FormatError(path.string() + ": bad magic at byte offset 0 (expected \"CSDE\")");
    }
    const uint16_t version = r.u16("version");
    if (version != kEmbeddingVersion) {
        throw FormatError(path.string() + ": unsupported version " + std::to_string(version) +
                          " at byte offset 4");
    }
    Dataset ds;
    ds.dim = r.u32("dim");
    const uint64_t count = r.u64("record count");

    std::set<std::string> seen;
    ds.records.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        const uint16_t id_len = r.u16("id length");
        EmbeddingRecord rec;
        rec.id = r.str(id_len, "id");
        if (rec.id.empty()) {
            throw ValidationError(path.string() + ": empty record id (record " + std::to_string(i) + ")");
        }
        if (!seen.insert(rec.id).second) {
            throw ValidationError(path.string() + ": duplicate record id '" + rec.id + "'");
        }
        rec.vector.resize(ds.dim);
        for (uint32_t d = 0; d < ds.dim; ++d) {
            rec.vector[d] = static_cast<double>(r.f32("vector entry"));
        }
        ds.records.push_back(std::move(rec));
    }
    if (!r.exhausted()) {
        throw FormatError(path.string() + ": trailing data at byte offset " + std::to_string(r.offset()));
    }
    return ds;
}

void save_embeddings(const std::filesystem::path& path, const Dataset& dataset) {
    std::string out;
    out.append(kEmbeddingMagic, 4);
    put_u16(out, kEmbeddingVersion);
    put_u32(out, dataset.dim);
    put_u64(out, dataset.records.size());
    for (const auto& rec : dataset.records) {
        if (rec.id.size() > 0xffff) {
            throw ValidationError("save_embeddings: id longer than 65535 bytes: '" + rec.id.substr(0, 32) + "...'");
        }
        if (rec.vector.size() != dataset.dim) {
            throw ValidationError("save_embeddings: record '" + rec.id + "' has wrong dimension");
        }
        put_u16(out, static_cast<uint16_t>(rec.id.size()));
        out.append(rec.id);
        for (double x : rec.vector) put_f32(out, static_cast<float>(x));
    }
    write_file_bytes(path, out);
}

// ---------------------------------------------------------------------------
// label sidecar / vocabulary files

LabelSidecar load_label_sidecar(const std::filesystem::path& path) {
    const std::string bytes = read_file_bytes(path);
    LabelSidecar out;
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
        if (j.is_discarded() || !j.is_object() || !j.contains("id") || !j.contains("labels") ||
            !j["id"].is_string() || !j["labels"].is_array()) {
            throw FormatError(path.string() + ": malformed sidecar line " + std::to_string(line_no));
        }
        std::vector<std::string> tags;
        for (const auto& t : j["labels"]) {
            if (!t.is_string()) {
                throw FormatError(path.string() + ": non-string label on line " + std::to_string(line_no));
            }
            tags.push_back(t.get<std::string>());
        }
        out.emplace_back(j["id"].get<std::string>(), std::move(tags));
    }
    return out;
}

void save_label_sidecar(const std::filesystem::path& path, const Dataset& dataset) {
    std::string out;
    for (const auto& rec : dataset.records) {
        nlohmann::json j;
        j["id"] = rec.id;
        auto labels = nlohmann::json::array();
        for (int l : rec.labels) labels.push_back(dataset.vocab.tag(l));
        j["labels"] = labels;
        out += j.dump();
        out += '\n';
    }
    write_file_bytes(path, out);
}

void attach_labels(Dataset& dataset, const LabelSidecar& sidecar, bool extend_vocab) {
    auto index = dataset.id_index();
    for (const auto& [id, tags] : sidecar) {
        auto it = index.find(id);
        if (it == index.end()) {
            throw ValidationError("attach_labels: sidecar id '" + id + "' not present in dataset");
        }
        auto& rec = dataset.records[it->second];
        for (const auto& tag : tags) {
            if (extend_vocab) {
                rec.labels.insert(dataset.vocab.add(tag));
            } else {
                auto idx = dataset.vocab.find(tag);
                if (!idx) throw ValidationError("attach_labels: unknown tag '" + tag + "'");
                rec.labels.insert(*idx);
            }
        }
    }
}

LabelVocabulary load_vocabulary(const std::filesystem::path& path) {
    const std::string bytes = read_file_bytes(path);
    LabelVocabulary vocab;
    size_t pos = 0;
    while (pos < bytes.size()) {
        size_t end = bytes.find('\n', pos);
        if (end == std::string::npos) end = bytes.size();
        std::string line = bytes.substr(pos, end - pos);
        pos = end + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        vocab.add(line);
    }
    return vocab;
}

void save_vocabulary(const std::filesystem::path& path, const LabelVocabulary& vocab) {
    std::string out;
    for (const auto& t : vocab.tags()) {
        out += t;
        out += '\n';
    }
    write_file_bytes(path, out);
}

std::string format_double(double value) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

} // namespace styleforge
