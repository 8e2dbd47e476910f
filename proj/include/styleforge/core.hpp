#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "styleforge/errors.hpp"

namespace styleforge {

using Vec = std::vector<double>;

// Dense row-major matrix, 64-bit. The math in this project is small batches of
// dot products and rank-one updates; nothing here needs a linear-algebra library.
struct Matrix {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(size_t r, size_t c) { return data[r * cols + c]; }
    double operator()(size_t r, size_t c) const { return data[r * cols + c]; }

    bool operator==(const Matrix& other) const = default;
};

double norm(const Vec& v);
double dot(const Vec& a, const Vec& b);

// v / ||v||. Throws ValidationError on (near-)zero input. Idempotent.
Vec normalize(const Vec& v);

// Dot product of two unit vectors. Both must be unit-norm within 1e-6 and of
// equal dimension.
double cosine(const Vec& a, const Vec& b);

// One image: identifier, descriptor vector, multi-hot style labels
// (indices into a LabelVocabulary).
struct EmbeddingRecord {
    std::string id;
    Vec vector;
    std::set<int> labels;
};

// Ordered set of style tags. Tags are lowercase UTF-8 (no ASCII uppercase),
// nonempty and unique; index lookups are the inverse of tag().
class LabelVocabulary {
public:
    LabelVocabulary() = default;
    explicit LabelVocabulary(const std::vector<std::string>& tags);

    // Returns the tag's index, inserting it if new. Throws on invalid tags.
    int add(const std::string& tag);
    std::optional<int> find(const std::string& tag) const;
    const std::string& tag(int index) const;
    size_t size() const { return tags_.size(); }
    const std::vector<std::string>& tags() const { return tags_; }

    bool operator==(const LabelVocabulary& other) const { return tags_ == other.tags_; }

private:
    std::vector<std::string> tags_;
    std::unordered_map<std::string, int> index_;
};

struct Dataset {
    std::vector<EmbeddingRecord> records;
    LabelVocabulary vocab;
    uint32_t dim = 0;

    // Unique nonempty ids, uniform finite vectors of length dim, labels < vocab size.
    void validate() const;
    const EmbeddingRecord* find(const std::string& id) const;
    std::map<std::string, size_t> id_index() const;
};

// Binary embedding file, little-endian:
//   magic "CSDE" | u16 version (=1) | u32 dim | u64 count
//   per record: u16 id byte-length | id bytes | dim x f32
// Vectors are stored as f32 and promoted to f64 in memory. Loading does not
// renormalize. Format errors name the byte offset.
Dataset load_embeddings(const std::filesystem::path& path);
void save_embeddings(const std::filesystem::path& path, const Dataset& dataset);

// Label sidecar: JSON lines, one object per record: {"id": ..., "labels": [...]}.
using LabelSidecar = std::vector<std::pair<std::string, std::vector<std::string>>>;
LabelSidecar load_label_sidecar(const std::filesystem::path& path);
void save_label_sidecar(const std::filesystem::path& path, const Dataset& dataset);

// Applies sidecar labels to matching records. Unknown record ids are an error;
// unknown tags extend the vocabulary when extend_vocab is set, otherwise throw.
void attach_labels(Dataset& dataset, const LabelSidecar& sidecar, bool extend_vocab = true);

// Vocabulary file: newline-delimited lowercase tags.
LabelVocabulary load_vocabulary(const std::filesystem::path& path);
void save_vocabulary(const std::filesystem::path& path, const LabelVocabulary& vocab);

std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::string& bytes);

// Shortest representation that round-trips the double; used for every CSV/SVG
// number so regenerated outputs are byte-identical.
std::string format_double(double value);

} // namespace styleforge
