#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "styleforge/training.hpp"
#include "testutil.hpp"

using namespace styleforge;
using namespace styleforge::training;

namespace {

std::vector<Vec> random_batch(Rng& rng, size_t b, size_t d) {
    std::vector<Vec> out(b);
    for (auto& v : out) {
        v = rng.unit_vector(d);
        const double scale = rng.uniform(0.5, 2.0); // exercises the normalization chain rule
        for (double& x : v) x *= scale;
    }
    return out;
}

std::vector<Vec> unit_batch(Rng& rng, size_t b, size_t d) {
    std::vector<Vec> out(b);
    for (auto& v : out) v = rng.unit_vector(d);
    return out;
}

std::vector<double> flatten(const std::vector<Vec>& grads) {
    std::vector<double> flat;
    for (const auto& g : grads) flat.insert(flat.end(), g.begin(), g.end());
    return flat;
}

} // namespace

TEST_CASE("groundtruth_similarity: shared, disjoint, identical") {
    CHECK(groundtruth_similarity({0, 1}, {1, 2}) == 1);
    CHECK(groundtruth_similarity({0}, {1}) == 0);
    CHECK(groundtruth_similarity({0}, {0}) == 1);
    CHECK(groundtruth_similarity({}, {}) == 0);
}

TEST_CASE("similarity batch: symmetry, unit diagonal, indicator") {
    Rng rng(51);
    const auto embeddings = unit_batch(rng, 5, 4);
    const std::vector<std::set<int>> labels{{0}, {0, 1}, {2}, {1}, {3}};
    const SimilarityBatch batch = build_similarity_batch(embeddings, labels);
    for (size_t i = 0; i < 5; ++i) {
        CHECK(batch.s(i, i) == doctest::Approx(1.0).epsilon(1e-9));
        for (size_t j = 0; j < 5; ++j) {
            CHECK(batch.s(i, j) == batch.s(j, i));
            CHECK(batch.s_hat(i, j) == batch.s_hat(j, i));
            CHECK(batch.s_hat(i, j) ==
                  static_cast<double>(groundtruth_similarity(labels[i], labels[j])));
        }
    }
}

TEST_CASE("mcl_loss: two identical embeddings with a shared label, tau 1 -> exactly 0") {
    const std::vector<Vec> e{{1.0, 0.0}, {1.0, 0.0}};
    const std::vector<std::set<int>> labels{{0}, {0}};
    const LossGrad lg = mcl_loss(e, labels, 1.0);
    CHECK(lg.loss == 0.0);
}

TEST_CASE("mcl_loss: pairwise-disjoint labels -> loss 0, gradient 0") {
    Rng rng(52);
    const auto e = unit_batch(rng, 4, 3);
    const std::vector<std::set<int>> labels{{0}, {1}, {2}, {3}};
    const LossGrad lg = mcl_loss(e, labels, 0.5);
    CHECK(lg.loss == 0.0);
    for (const auto& g : lg.grad) {
        for (double v : g) CHECK(v == 0.0);
    }
}

TEST_CASE("mcl_loss: frozen three-point value") {
    // positives (0,1) and (1,0); each term -log(e^2 / (e^2 + 1)) at tau = 0.5
    const std::vector<Vec> e{{1.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
    const std::vector<std::set<int>> labels{{0}, {0}, {1}};
    const LossGrad lg = mcl_loss(e, labels, 0.5);
    const double expected = std::log(1.0 + std::exp(-2.0)); // 0.12692801104297252
    CHECK(lg.loss == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("mcl_loss: nonnegative on random batches") {
    Rng rng(53);
    for (int trial = 0; trial < 50; ++trial) {
        const size_t b = 2 + rng.below(5);
        const auto e = random_batch(rng, b, 2 + rng.below(5));
        std::vector<std::set<int>> labels(b);
        for (auto& l : labels) l = testutil::random_label_set(rng, 3, 2);
        const double tau = rng.uniform(0.05, 2.0);
        CHECK(mcl_loss(e, labels, tau).loss >= 0.0);
    }
}

TEST_CASE("mcl_loss: invariant under joint permutation of rows and labels") {
    Rng rng(54);
    const size_t b = 5;
    auto e = random_batch(rng, b, 4);
    std::vector<std::set<int>> labels{{0}, {0, 1}, {1}, {2}, {0, 2}};
    const double base = mcl_loss(e, labels, 0.3).loss;

    std::vector<size_t> perm{3, 0, 4, 1, 2};
    std::vector<Vec> pe(b);
    std::vector<std::set<int>> pl(b);
    for (size_t i = 0; i < b; ++i) {
        pe[i] = e[perm[i]];
        pl[i] = labels[perm[i]];
    }
    CHECK(mcl_loss(pe, pl, 0.3).loss == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("mcl_loss: validates batch size and tau") {
    CHECK_THROWS_AS(mcl_loss({{1.0, 0.0}}, {{0}}, 1.0), ValidationError);
    CHECK_THROWS_AS(mcl_loss({{1.0, 0.0}, {0.0, 1.0}}, {{0}, {0}}, 0.0), ValidationError);
}

TEST_CASE("mcl_loss: gradient matches finite differences") {
    Rng rng(55);
    for (int trial = 0; trial < 30; ++trial) {
        const size_t b = 2 + rng.below(5);
        const size_t d = 2 + rng.below(7);
        const auto e = random_batch(rng, b, d);
        std::vector<std::set<int>> labels(b);
        for (auto& l : labels) l = testutil::random_label_set(rng, 3, 2);
        const double tau = rng.uniform(0.1, 1.5);

        const LossGrad analytic = mcl_loss(e, labels, tau);
        auto f = [&](const std::vector<double>& flat) {
            std::vector<Vec> batch(b, Vec(d));
            for (size_t i = 0; i < b; ++i) {
                for (size_t k = 0; k < d; ++k) batch[i][k] = flat[i * d + k];
            }
            return mcl_loss(batch, labels, tau).loss;
        };
        const auto numeric = testutil::finite_difference(f, flatten(e), 1e-5);
        CHECK(testutil::gradient_relative_error(flatten(analytic.grad), numeric) <= 1e-4);
    }
}

TEST_CASE("ssl_loss: frozen orthonormal value log(1 + 2/e)") {
    const std::vector<Vec> view{{1.0, 0.0}, {0.0, 1.0}};
    const SslLossGrad lg = ssl_loss(view, view, 1.0);
    CHECK(lg.loss == doctest::Approx(std::log(1.0 + 2.0 / std::exp(1.0))).epsilon(1e-12));
}

TEST_CASE("ssl_loss: invariant to a joint row permutation") {
    Rng rng(56);
    const size_t b = 4;
    const auto a = random_batch(rng, b, 3);
    const auto v = random_batch(rng, b, 3);
    const double base = ssl_loss(a, v, 0.4).loss;

    const std::vector<size_t> perm{2, 0, 3, 1};
    std::vector<Vec> pa(b), pv(b);
    for (size_t i = 0; i < b; ++i) {
        pa[i] = a[perm[i]];
        pv[i] = v[perm[i]];
    }
    CHECK(ssl_loss(pa, pv, 0.4).loss == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("ssl_loss: gradient matches finite differences") {
    Rng rng(57);
    for (int trial = 0; trial < 20; ++trial) {
        const size_t b = 2 + rng.below(4);
        const size_t d = 2 + rng.below(6);
        const auto a = random_batch(rng, b, d);
        const auto v = random_batch(rng, b, d);
        const double tau = rng.uniform(0.1, 1.5);

        const SslLossGrad analytic = ssl_loss(a, v, tau);
        std::vector<double> flat = flatten(a);
        const auto flat_b = flatten(v);
        flat.insert(flat.end(), flat_b.begin(), flat_b.end());

        auto f = [&](const std::vector<double>& x) {
            std::vector<Vec> xa(b, Vec(d)), xb(b, Vec(d));
            for (size_t i = 0; i < b; ++i) {
                for (size_t k = 0; k < d; ++k) {
                    xa[i][k] = x[i * d + k];
                    xb[i][k] = x[(b + i) * d + k];
                }
            }
            return ssl_loss(xa, xb, tau).loss;
        };
        const auto numeric = testutil::finite_difference(f, flat, 1e-5);
        auto analytic_flat = flatten(analytic.grad_a);
        const auto gb = flatten(analytic.grad_b);
        analytic_flat.insert(analytic_flat.end(), gb.begin(), gb.end());
        CHECK(testutil::gradient_relative_error(analytic_flat, numeric) <= 1e-4);
    }
}

TEST_CASE("ssl_loss: validates batch") {
    CHECK_THROWS_AS(ssl_loss({{1.0, 0.0}}, {{1.0, 0.0}}, 1.0), ValidationError);
    CHECK_THROWS_AS(ssl_loss({{1.0, 0.0}, {0.0, 1.0}}, {{1.0, 0.0}}, 1.0), ValidationError);
}

TEST_CASE("combined_loss: lambda 0, ssl_only, weighted sum") {
    TrainConfig config;
    config.lambda = 0.0;
    CHECK(combined_loss(0.7, 0.3, config) == 0.7);
    config.ssl_only = true;
    CHECK(combined_loss(0.7, 0.3, config) == 0.3);
    config.ssl_only = false;
    config.lambda = 0.2;
    CHECK(combined_loss(0.7, 0.3, config) == doctest::Approx(0.7 + 0.2 * 0.3).epsilon(1e-12));
}

TEST_CASE("batch loss: full gradient through projection and normalization") {
    Rng rng(58);
    for (int trial = 0; trial < 12; ++trial) {
        const size_t b = 2 + rng.below(4);
        const size_t d_in = 3 + rng.below(5);
        const size_t d_out = 2 + rng.below(4);

        TrainConfig config;
        config.tau = rng.uniform(0.2, 1.0);
        config.lambda = (trial % 3 == 0) ? 0.0 : 0.2;
        config.ssl_only = trial % 5 == 4;
        config.projection_dim = static_cast<int>(d_out);

        const auto features = random_batch(rng, b, d_in);
        const auto view_a = random_batch(rng, b, d_in);
        const auto view_b = random_batch(rng, b, d_in);
        std::vector<std::set<int>> labels(b);
        for (auto& l : labels) l = testutil::random_label_set(rng, 3, 2);

        ProjectionHead head;
        head.weights = Matrix(d_out, d_in);
        for (auto& w : head.weights.data) w = rng.uniform(-0.8, 0.8);

        const BatchLoss analytic =
            batch_loss_and_gradient(head, features, labels, view_a, view_b, config);
        CHECK(analytic.combined ==
              doctest::Approx(combined_loss(analytic.mcl, analytic.ssl, config)).epsilon(1e-12));

        auto f = [&](const std::vector<double>& wflat) {
            ProjectionHead h;
            h.weights = Matrix(d_out, d_in);
            h.weights.data = wflat;
            return batch_loss_and_gradient(h, features, labels, view_a, view_b, config).combined;
        };
        const auto numeric = testutil::finite_difference(f, head.weights.data, 1e-5);
        CHECK(testutil::gradient_relative_error(analytic.weight_grad.data, numeric) <= 1e-4);
    }
}

TEST_CASE("mcl_loss value matches a direct unshifted evaluation") {
    Rng rng(70);
    for (int trial = 0; trial < 25; ++trial) {
        const size_t b = 2 + rng.below(5);
        const size_t d = 2 + rng.below(5);
        const auto e = unit_batch(rng, b, d);
        std::vector<std::set<int>> labels(b);
        for (auto& l : labels) l = testutil::random_label_set(rng, 3, 2);
        const double tau = rng.uniform(0.1, 2.0);

        double naive = 0.0;
        size_t pairs = 0;
        for (size_t i = 0; i < b; ++i) {
            for (size_t j = 0; j < b; ++j) {
                if (i == j || !groundtruth_similarity(labels[i], labels[j])) continue;
                double denom = 0.0;
                for (size_t k = 0; k < b; ++k) {
                    if (k != i) denom += std::exp(dot(e[i], e[k]) / tau);
                }
                naive += -std::log(std::exp(dot(e[i], e[j]) / tau) / denom);
                ++pairs;
            }
        }
        const double expected = pairs == 0 ? 0.0 : naive / static_cast<double>(pairs);
        CHECK(std::fabs(mcl_loss(e, labels, tau).loss - expected) <= 1e-12);
    }
}

TEST_CASE("ssl_loss value matches a direct unshifted evaluation") {
    Rng rng(71);
    for (int trial = 0; trial < 25; ++trial) {
        const size_t b = 2 + rng.below(4);
        const size_t d = 2 + rng.below(5);
        const auto va = unit_batch(rng, b, d);
        const auto vb = unit_batch(rng, b, d);
        const double tau = rng.uniform(0.1, 2.0);

        std::vector<Vec> views = va;
        views.insert(views.end(), vb.begin(), vb.end());
        const size_t n = 2 * b;
        double naive = 0.0;
        for (size_t t = 0; t < n; ++t) {
            const size_t pos = t < b ? t + b : t - b;
            double denom = 0.0;
            for (size_t u = 0; u < n; ++u) {
                if (u != t) denom += std::exp(dot(views[t], views[u]) / tau);
            }
            naive += -std::log(std::exp(dot(views[t], views[pos]) / tau) / denom);
        }
        naive /= static_cast<double>(n);
        CHECK(std::fabs(ssl_loss(va, vb, tau).loss - naive) <= 1e-12);
    }
}

TEST_CASE("batch loss: bias gradient matches finite differences") {
    Rng rng(72);
    for (int trial = 0; trial < 8; ++trial) {
        const size_t b = 3, d_in = 4, d_out = 3;
        TrainConfig config;
        config.tau = 0.5;
        config.lambda = 0.2;
        config.projection_dim = static_cast<int>(d_out);

        const auto features = random_batch(rng, b, d_in);
        const auto view_a = random_batch(rng, b, d_in);
        const auto view_b = random_batch(rng, b, d_in);
        const std::vector<std::set<int>> labels{{0}, {0, 1}, {1}};

        ProjectionHead head;
        head.weights = Matrix(d_out, d_in);
        for (auto& w : head.weights.data) w = rng.uniform(-0.8, 0.8);
        head.bias = Vec(d_out);
        for (auto& v : *head.bias) v = rng.uniform(-0.3, 0.3);

        const BatchLoss analytic =
            batch_loss_and_gradient(head, features, labels, view_a, view_b, config);
        REQUIRE(analytic.bias_grad.size() == d_out);

        auto f = [&](const std::vector<double>& bias_flat) {
            ProjectionHead h = head;
            h.bias = bias_flat;
            return batch_loss_and_gradient(h, features, labels, view_a, view_b, config).combined;
        };
        const auto numeric = testutil::finite_difference(f, *head.bias, 1e-5);
        CHECK(testutil::gradient_relative_error(analytic.bias_grad, numeric) <= 1e-4);
    }
}

TEST_CASE("projection head: forward is unit-norm, file round trip is byte identical") {
    testutil::TempDir tmp("training_head");
    Rng rng(59);
    ProjectionHead head;
    head.weights = Matrix(4, 6);
    for (auto& w : head.weights.data) {
        w = static_cast<double>(static_cast<float>(rng.uniform(-1.0, 1.0)));
    }
    const Vec x{0.3, -0.2, 0.9, 0.1, -0.5, 0.4};
    CHECK(norm(head.forward(x)) == doctest::Approx(1.0).epsilon(1e-9));

    save_head(tmp.file("h.csdh"), head);
    const ProjectionHead loaded = load_head(tmp.file("h.csdh"));
    CHECK(loaded.weights == head.weights);
    save_head(tmp.file("h2.csdh"), loaded);
    CHECK(read_file_bytes(tmp.file("h.csdh")) == read_file_bytes(tmp.file("h2.csdh")));

    std::string corrupt = read_file_bytes(tmp.file("h.csdh"));
    corrupt[0] = 'Z';
    write_file_bytes(tmp.file("bad.csdh"), corrupt);
    CHECK_THROWS_AS(load_head(tmp.file("bad.csdh")), FormatError);
    write_file_bytes(tmp.file("short.csdh"), read_file_bytes(tmp.file("h.csdh")).substr(0, 20));
    CHECK_THROWS_AS(load_head(tmp.file("short.csdh")), FormatError);
}

TEST_CASE("head file: golden bytes and a truncation sweep") {
    testutil::TempDir tmp("training_head_golden");
    ProjectionHead head;
    head.weights = Matrix(1, 1);
    head.weights(0, 0) = 0.5;
    save_head(tmp.file("g.csdh"), head);
    static const unsigned char expected[] = {
        'C',  'S',  'D',  'H',  0x01, 0x00,             // magic, version
        0x01, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, // d_in, d_out
        0x00, 0x00, 0x00, 0x3f,                         // 0.5f
    };
    CHECK(read_file_bytes(tmp.file("g.csdh")) ==
          std::string(reinterpret_cast<const char*>(expected), sizeof(expected)));

    const std::string bytes = read_file_bytes(tmp.file("g.csdh"));
    for (size_t len = 0; len < bytes.size(); ++len) {
        write_file_bytes(tmp.file("cut.csdh"), bytes.substr(0, len));
        CHECK_THROWS_AS(load_head(tmp.file("cut.csdh")), FormatError);
    }
}

TEST_CASE("train: zero gradient leaves weights at their initialization") {
    Dataset ds;
    ds.dim = 3;
    ds.vocab.add("a");
    ds.vocab.add("b");
    ds.records.push_back({"r0", {1.0, 0.0, 0.0}, {0}});
    ds.records.push_back({"r1", {0.0, 1.0, 0.0}, {1}});

    TrainConfig config;
    config.lambda = 0.0;
    config.batch_size = 2;
    config.iterations = 5;
    config.projection_dim = 2;
    config.seed = 3;

    const TrainResult result = train(ds, config);
    const ProjectionHead fresh = init_head(3, config);
    CHECK(result.head.weights == fresh.weights);
    for (const auto& row : result.trace) CHECK(row.combined == 0.0);
}

TEST_CASE("train: first step ignores momentum") {
    Dataset ds;
    ds.dim = 2;
    ds.vocab.add("a");
    ds.records.push_back({"r0", {1.0, 0.1}, {0}});
    ds.records.push_back({"r1", {0.1, 1.0}, {0}});

    TrainConfig config;
    config.lambda = 0.0;
    config.batch_size = 2;
    config.iterations = 1;
    config.projection_dim = 2;
    config.seed = 9;

    TrainConfig no_momentum = config;
    no_momentum.momentum = 0.0;
    const auto with_m = train(ds, config);
    const auto without_m = train(ds, no_momentum);
    CHECK(with_m.head.weights == without_m.head.weights);
}

TEST_CASE("train: one step applies W1 = W0 - lr * g") {
    Dataset ds;
    ds.dim = 3;
    ds.vocab.add("a");
    ds.records.push_back({"r0", {1.0, 0.2, -0.3}, {0}});
    ds.records.push_back({"r1", {0.1, 0.9, 0.4}, {0}});

    TrainConfig config;
    config.lambda = 0.0;
    config.batch_size = 2;
    config.iterations = 1;
    config.projection_dim = 2;
    config.seed = 17;

    const TrainResult result = train(ds, config);
    const ProjectionHead w0 = init_head(3, config);

    // the seeded shuffle picks one of the two possible row orders
    auto expected_for = [&](size_t first, size_t second) {
        const std::vector<Vec> batch{ds.records[first].vector, ds.records[second].vector};
        const std::vector<std::set<int>> labels{{0}, {0}};
        const BatchLoss step = batch_loss_and_gradient(w0, batch, labels, {}, {}, config);
        Matrix w1 = w0.weights;
        for (size_t i = 0; i < w1.data.size(); ++i) w1.data[i] -= config.lr * step.weight_grad.data[i];
        return w1;
    };
    const bool matches_either = result.head.weights == expected_for(0, 1) ||
                                result.head.weights == expected_for(1, 0);
    CHECK(matches_either);
}

TEST_CASE("train: bitwise reproducible for a fixed seed") {
    const auto corpus = toyfeat::synthetic_corpus(3, 6, 11);
    std::vector<toyfeat::RasterImage> images;
    std::vector<std::set<int>> labels;
    for (const auto& item : corpus) {
        images.push_back(item.image);
        labels.push_back({item.style_class});
    }
    TrainConfig config;
    config.batch_size = 6;
    config.iterations = 20;
    config.projection_dim = 8;
    config.seed = 123;

    const auto run1 = train(images, labels, config);
    const auto run2 = train(images, labels, config);
    CHECK(run1.head.weights == run2.head.weights);
    REQUIRE(run1.trace.size() == run2.trace.size());
    for (size_t i = 0; i < run1.trace.size(); ++i) {
        CHECK(run1.trace[i].combined == run2.trace[i].combined);
    }
}

TEST_CASE("train: loss trends down on the synthetic corpus") {
    const auto corpus = toyfeat::synthetic_corpus(3, 8, 21);
    std::vector<toyfeat::RasterImage> images;
    std::vector<std::set<int>> labels;
    for (const auto& item : corpus) {
        images.push_back(item.image);
        labels.push_back({item.style_class});
    }
    TrainConfig config;
    config.batch_size = 8;
    config.iterations = 300;
    config.projection_dim = toyfeat::kFeatureDim;
    config.identity_init = true;
    config.seed = 4;

    const auto result = train(images, labels, config);
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 50; ++i) {
        first += result.trace[static_cast<size_t>(i)].combined;
        last += result.trace[result.trace.size() - 50 + static_cast<size_t>(i)].combined;
    }
    CHECK(last < first);
}

TEST_CASE("train: leftover single-record batches are skipped and counted") {
    Dataset ds;
    ds.dim = 2;
    ds.vocab.add("a");
    ds.records.push_back({"r0", {1.0, 0.1}, {0}});
    ds.records.push_back({"r1", {0.1, 1.0}, {0}});
    ds.records.push_back({"r2", {0.5, 0.5}, {0}});

    TrainConfig config;
    config.lambda = 0.0;
    config.batch_size = 2;
    config.iterations = 10;
    config.projection_dim = 2;
    config.seed = 6;

    const auto result = train(ds, config);
    CHECK(result.trace.size() == 10);
    CHECK(result.skipped_batches > 0);
}

TEST_CASE("train: embeddings corpus rejects the SSL term") {
    Dataset ds;
    ds.dim = 2;
    ds.vocab.add("a");
    ds.records.push_back({"r0", {1.0, 0.1}, {0}});
    ds.records.push_back({"r1", {0.1, 1.0}, {0}});

    TrainConfig config;
    config.batch_size = 2;
    config.iterations = 1;
    config.lambda = 0.2;
    CHECK_THROWS_AS(train(ds, config), ValidationError);
    config.lambda = 0.0;
    config.ssl_only = true;
    CHECK_THROWS_AS(train(ds, config), ValidationError);
    config.ssl_only = false;
    CHECK_NOTHROW(train(ds, config));
}

TEST_CASE("train config validation") {
    TrainConfig config;
    config.iterations = 1;
    CHECK_NOTHROW(config.validate());
    TrainConfig bad = config;
    bad.tau = 0.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = config;
    bad.momentum = 1.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = config;
    bad.iterations = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = config;
    bad.lr = -0.1;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("init_head: identity option and seeded uniform") {
    TrainConfig config;
    config.iterations = 1;
    config.projection_dim = 3;
    config.identity_init = true;
    const ProjectionHead id_head = init_head(3, config);
    for (size_t r = 0; r < 3; ++r) {
        for (size_t c = 0; c < 3; ++c) CHECK(id_head.weights(r, c) == (r == c ? 1.0 : 0.0));
    }
    CHECK_THROWS_AS(init_head(4, config), ValidationError);

    config.identity_init = false;
    config.seed = 42;
    const ProjectionHead h1 = init_head(4, config);
    const ProjectionHead h2 = init_head(4, config);
    CHECK(h1.weights == h2.weights);
    const double bound = 1.0 / std::sqrt(4.0);
    for (double w : h1.weights.data) {
        CHECK(w >= -bound);
        CHECK(w <= bound);
    }
}
