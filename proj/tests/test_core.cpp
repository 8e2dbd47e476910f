#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "styleforge/core.hpp"
#include "styleforge/rng.hpp"
#include "testutil.hpp"

using namespace styleforge;

TEST_CASE("normalize: 3-4-5 triangle") {
    const Vec v = normalize({3.0, 4.0});
    CHECK(v[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(v[1] == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("normalize: idempotent on unit vectors") {
    Rng rng(11);
    for (int i = 0; i < 20; ++i) {
        const Vec u = rng.unit_vector(5);
        const Vec again = normalize(u);
        for (size_t k = 0; k < u.size(); ++k) {
            CHECK(std::fabs(again[k] - u[k]) <= 1e-12);
        }
    }
}

TEST_CASE("normalize: zero vector rejected") {
    CHECK_THROWS_AS(normalize({0.0, 0.0}), ValidationError);
}

TEST_CASE("cosine: self, orthogonal, antipodal") {
    const Vec a = normalize({1.0, 2.0, -1.0});
    CHECK(cosine(a, a) == doctest::Approx(1.0).epsilon(1e-9));
    const Vec x{1.0, 0.0}, y{0.0, 1.0};
    CHECK(cosine(x, y) == 0.0);
    Vec neg = a;
    for (double& v : neg) v = -v;
    CHECK(cosine(a, neg) == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("cosine: dimension mismatch and non-unit inputs rejected") {
    CHECK_THROWS_AS(cosine({1.0, 0.0}, {1.0, 0.0, 0.0}), ValidationError);
    CHECK_THROWS_AS(cosine({2.0, 0.0}, {1.0, 0.0}), ValidationError);
}

TEST_CASE("scale invariance: cosine(normalize(av), normalize(v)) = 1") {
    Rng rng(12);
    for (int i = 0; i < 30; ++i) {
        Vec v(4);
        for (auto& x : v) x = rng.uniform(-1.0, 1.0);
        if (norm(v) < 1e-3) continue;
        const double alpha = rng.uniform(0.01, 100.0);
        Vec scaled = v;
        for (auto& x : scaled) x *= alpha;
        CHECK(cosine(normalize(scaled), normalize(v)) == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("vocabulary: round trip, duplicates, casing") {
    LabelVocabulary vocab;
    CHECK(vocab.add("claude monet") == 0);
    CHECK(vocab.add("van gogh") == 1);
    CHECK(vocab.add("claude monet") == 0); // idempotent insert
    CHECK(vocab.tag(1) == "van gogh");
    CHECK(*vocab.find("van gogh") == 1);
    CHECK(!vocab.find("missing"));
    CHECK_THROWS_AS(vocab.add(""), ValidationError);
    CHECK_THROWS_AS(vocab.add("Van Gogh"), ValidationError);
    CHECK_THROWS_AS(vocab.tag(99), ValidationError);
}

TEST_CASE("embedding file: empty dataset round trip") {
    testutil::TempDir tmp("core_empty");
    Dataset ds;
    ds.dim = 4;
    save_embeddings(tmp.file("e.csde"), ds);
    const Dataset loaded = load_embeddings(tmp.file("e.csde"));
    CHECK(loaded.records.empty());
    CHECK(loaded.dim == 4);
}

TEST_CASE("embedding file: save -> load -> save is byte identical") {
    testutil::TempDir tmp("core_roundtrip");
    Rng rng(13);
    for (int trial = 0; trial < 25; ++trial) {
        const Dataset ds = testutil::random_dataset(rng, rng.below(8), 1 + static_cast<uint32_t>(rng.below(6)));
        save_embeddings(tmp.file("a.csde"), ds);
        const Dataset loaded = load_embeddings(tmp.file("a.csde"));
        REQUIRE(loaded.records.size() == ds.records.size());
        for (size_t i = 0; i < ds.records.size(); ++i) {
            CHECK(loaded.records[i].id == ds.records[i].id);
            CHECK(loaded.records[i].vector == ds.records[i].vector); // f32-exact fixture
        }
        save_embeddings(tmp.file("b.csde"), loaded);
        CHECK(read_file_bytes(tmp.file("a.csde")) == read_file_bytes(tmp.file("b.csde")));
    }
}

TEST_CASE("embedding file: vectors read verbatim, no renormalization") {
    testutil::TempDir tmp("core_verbatim");
    Dataset ds;
    ds.dim = 2;
    ds.records.push_back({"long", {3.0, 4.0}, {}});
    save_embeddings(tmp.file("e.csde"), ds);
    const Dataset loaded = load_embeddings(tmp.file("e.csde"));
    CHECK(loaded.records[0].vector == Vec{3.0, 4.0});
}

TEST_CASE("embedding file: truncated record count is a format error with offset") {
    testutil::TempDir tmp("core_truncated");
    Dataset ds;
    ds.dim = 3;
    ds.records.push_back({"a", {1.0, 2.0, 3.0}, {}});
    ds.records.push_back({"b", {4.0, 5.0, 6.0}, {}});
    save_embeddings(tmp.file("e.csde"), ds);

    std::string bytes = read_file_bytes(tmp.file("e.csde"));
    bytes[10] = 3; // claim 3 records, provide 2
    write_file_bytes(tmp.file("bad.csde"), bytes);
    try {
        load_embeddings(tmp.file("bad.csde"));
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
    }
}

TEST_CASE("embedding file: bad magic, bad version, trailing bytes") {
    testutil::TempDir tmp("core_magic");
    Dataset ds;
    ds.dim = 1;
    ds.records.push_back({"a", {1.0}, {}});
    save_embeddings(tmp.file("e.csde"), ds);
    std::string bytes = read_file_bytes(tmp.file("e.csde"));

    std::string bad = bytes;
    bad[0] = 'X';
    write_file_bytes(tmp.file("m.csde"), bad);
    CHECK_THROWS_AS(load_embeddings(tmp.file("m.csde")), FormatError);

    bad = bytes;
    bad[4] = 9;
    write_file_bytes(tmp.file("v.csde"), bad);
    CHECK_THROWS_AS(load_embeddings(tmp.file("v.csde")), FormatError);

    bad = bytes + "junk";
    write_file_bytes(tmp.file("t.csde"), bad);
    CHECK_THROWS_AS(load_embeddings(tmp.file("t.csde")), FormatError);
}

TEST_CASE("embedding file: golden bytes") {
    testutil::TempDir tmp("core_golden");
    Dataset ds;
    ds.dim = 2;
    ds.records.push_back({"ab", {1.0, -2.5}, {}});
    save_embeddings(tmp.file("g.csde"), ds);
    static const unsigned char expected[] = {
        'C',  'S',  'D',  'E',            // magic
        0x01, 0x00,                       // version
        0x02, 0x00, 0x00, 0x00,           // dim
        0x01, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, // count
        0x02, 0x00, 'a',  'b',            // id
        0x00, 0x00, 0x80, 0x3f,           // 1.0f
        0x00, 0x00, 0x20, 0xc0,           // -2.5f
    };
    CHECK(read_file_bytes(tmp.file("g.csde")) ==
          std::string(reinterpret_cast<const char*>(expected), sizeof(expected)));
}

TEST_CASE("embedding file: every truncation raises a clean format error") {
    testutil::TempDir tmp("core_truncsweep");
    Rng rng(15);
    const Dataset ds = testutil::random_dataset(rng, 3, 4);
    save_embeddings(tmp.file("full.csde"), ds);
    const std::string bytes = read_file_bytes(tmp.file("full.csde"));
    for (size_t len = 0; len < bytes.size(); ++len) {
        write_file_bytes(tmp.file("cut.csde"), bytes.substr(0, len));
        CHECK_THROWS_AS(load_embeddings(tmp.file("cut.csde")), FormatError);
    }
}

TEST_CASE("embedding file: duplicate id names the offender") {
    testutil::TempDir tmp("core_dup");
    Dataset ds;
    ds.dim = 1;
    ds.records.push_back({"same", {1.0}, {}});
    save_embeddings(tmp.file("e.csde"), ds);
    // append the record block once more and bump the count
    std::string bytes = read_file_bytes(tmp.file("e.csde"));
    const std::string record = bytes.substr(18); // past header
    bytes[10] = 2;
    bytes += record;
    write_file_bytes(tmp.file("dup.csde"), bytes);
    try {
        load_embeddings(tmp.file("dup.csde"));
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("same") != std::string::npos);
    }
}

TEST_CASE("embedding file: multibyte UTF-8 ids round trip") {
    testutil::TempDir tmp("core_utf8");
    Dataset ds;
    ds.dim = 2;
    ds.records.push_back({"café_界", {0.5, -0.5}, {}});
    ds.records.push_back({"плес", {1.0, 0.0}, {}});
    save_embeddings(tmp.file("u.csde"), ds);
    const Dataset loaded = load_embeddings(tmp.file("u.csde"));
    CHECK(loaded.records[0].id == ds.records[0].id);
    CHECK(loaded.records[1].id == ds.records[1].id);
}

TEST_CASE("vocabulary accepts non-ASCII lowercase tags") {
    LabelVocabulary vocab;
    CHECK(vocab.add("café") == 0);
    CHECK(vocab.tag(0) == "café");
}

TEST_CASE("label sidecar and vocabulary round trip") {
    testutil::TempDir tmp("core_sidecar");
    Rng rng(14);
    Dataset ds = testutil::random_dataset(rng, 6, 3);
    save_label_sidecar(tmp.file("labels.jsonl"), ds);
    save_vocabulary(tmp.file("vocab.txt"), ds.vocab);

    Dataset fresh;
    fresh.dim = ds.dim;
    for (const auto& rec : ds.records) fresh.records.push_back({rec.id, rec.vector, {}});
    fresh.vocab = load_vocabulary(tmp.file("vocab.txt"));
    attach_labels(fresh, load_label_sidecar(tmp.file("labels.jsonl")), false);
    for (size_t i = 0; i < ds.records.size(); ++i) {
        CHECK(fresh.records[i].labels == ds.records[i].labels);
    }

    // sidecar with an id the dataset does not have
    write_file_bytes(tmp.file("bad.jsonl"), "{\"id\":\"ghost\",\"labels\":[\"tag0\"]}\n");
    CHECK_THROWS_AS(attach_labels(fresh, load_label_sidecar(tmp.file("bad.jsonl")), true), ValidationError);
}

TEST_CASE("dataset validate catches duplicate ids and bad labels") {
    Dataset ds;
    ds.dim = 1;
    ds.vocab.add("t");
    ds.records.push_back({"a", {1.0}, {0}});
    ds.records.push_back({"a", {1.0}, {}});
    CHECK_THROWS_AS(ds.validate(), ValidationError);
    ds.records[1].id = "b";
    ds.records[1].labels = {5};
    CHECK_THROWS_AS(ds.validate(), ValidationError);
    ds.records[1].labels = {0};
    CHECK_NOTHROW(ds.validate());
}
