#include "styleforge/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "styleforge/rng.hpp"

#include "binary_io.hpp"

namespace styleforge::training {

Vec ProjectionHead::project_raw(const Vec& x) const {
    if (x.size() != d_in()) {
        throw ValidationError("projection head: input dim " + std::to_string(x.size()) +
                              ", expected " + std::to_string(d_in()));
    }
    Vec out(d_out(), 0.0);
    for (size_t r = 0; r < d_out(); ++r) {
        double acc = bias ? (*bias)[r] : 0.0;
        const double* row = &weights.data[r * weights.cols];
        for (size_t c = 0; c < d_in(); ++c) acc += row[c] * x[c];
        out[r] = acc;
    }
    return out;
}

Vec ProjectionHead::forward(const Vec& x) const {
    return normalize(project_raw(x));
}

namespace {

constexpr char kHeadMagic[4] = {'C', 'S', 'D', 'H'};
constexpr uint16_t kHeadVersion = 1;

} // namespace

ProjectionHead load_head(const std::filesystem::path& path) {
    const std::string bytes = read_file_bytes(path);
    detail::ByteReader r(bytes, path.string());
    const std::string magic = r.str(4, "magic");
    if (std::memcmp(magic.data(), kHeadMagic, 4) != 0) {
        throw FormatError(path.string() + ": bad magic at byte offset 0 (expected \"CSDH\")");
    }
    const uint16_t version = r.u16("version");
    if (version != kHeadVersion) {
        throw FormatError(path.string() + ": unsupported head version " + std::to_string(version));
    }
    const uint32_t d_in = r.u32("d_in");
    const uint32_t d_out = r.u32("d_out");
    if (d_in == 0 || d_out == 0) {
        throw FormatError(path.string() + ": zero head dimension");
    }
    ProjectionHead head;
    head.weights = Matrix(d_out, d_in);
    for (size_t i = 0; i < head.weights.data.size(); ++i) {
        head.weights.data[i] = static_cast<double>(r.f32("weight"));
    }
    if (!r.exhausted()) {
        throw FormatError(path.string() + ": trailing data at byte offset " + std::to_string(r.offset()));
    }
    return head;
}

void save_head(const std::filesystem::path& path, const ProjectionHead& head) {
    if (head.bias) {
        throw ValidationError("save_head: head file format carries no bias term");
    }
    std::string out;
    out.append(kHeadMagic, 4);
    detail::put_u16(out, kHeadVersion);
    detail::put_u32(out, static_cast<uint32_t>(head.d_in()));
    detail::put_u32(out, static_cast<uint32_t>(head.d_out()));
    for (double w : head.weights.data) detail::put_f32(out, static_cast<float>(w));
    write_file_bytes(path, out);
}

void TrainConfig::validate() const {
    if (!(tau > 0.0)) throw ValidationError("config: tau must be > 0");
    if (!(lambda >= 0.0)) throw ValidationError("config: lambda must be >= 0");
    if (!(lr > 0.0)) throw ValidationError("config: lr must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("config: momentum must be in [0, 1)");
    if (batch_size < 1) throw ValidationError("config: batch_size must be positive");
    if (iterations < 1) throw ValidationError("config: iterations must be positive");
    if (projection_dim < 1) throw ValidationError("config: projection dim must be positive");
}

int groundtruth_similarity(const std::set<int>& labels_i, const std::set<int>& labels_j) {
    const auto& small = labels_i.size() <= labels_j.size() ? labels_i : labels_j;
    const auto& large = labels_i.size() <= labels_j.size() ? labels_j : labels_i;
    for (int l : small) {
        if (large.count(l)) return 1;
    }
    return 0;
}

SimilarityBatch build_similarity_batch(const std::vector<Vec>& unit_embeddings,
                                       const std::vector<std::set<int>>& labels) {
    const size_t b = unit_embeddings.size();
    if (labels.size() != b) throw ValidationError("similarity batch: embeddings/labels size mismatch");
    SimilarityBatch batch{Matrix(b, b), Matrix(b, b)};
    for (size_t i = 0; i < b; ++i) {
        batch.s(i, i) = 1.0;
        batch.s_hat(i, i) = groundtruth_similarity(labels[i], labels[i]);
        for (size_t j = i + 1; j < b; ++j) {
            const double s = cosine(unit_embeddings[i], unit_embeddings[j]);
            batch.s(i, j) = s;
            batch.s(j, i) = s;
            const double sh = groundtruth_similarity(labels[i], labels[j]);
            batch.s_hat(i, j) = sh;
            batch.s_hat(j, i) = sh;
        }
    }
    return batch;
}

namespace {

// Shared gradient core for both contrastive losses. Terms are (anchor,
// positive) index pairs into `raw`; the loss is
//   (1/M) * sum_terms [ log(sum_{k != anchor} exp(s_ak / tau)) - s_ap / tau ]
// with s the cosine matrix of the normalized rows. Row softmaxes are computed
// max-shifted, so small temperatures stay finite. The returned gradient is
// w.r.t. the raw rows (normalization chain rule applied).
LossGrad contrastive_core(const std::vector<Vec>& raw,
                          const std::vector<std::pair<int, int>>& terms, double tau) {
    const size_t n = raw.size();
    const size_t d = raw.empty() ? 0 : raw.front().size();
    LossGrad out;
    out.grad.assign(n, Vec(d, 0.0));
    if (terms.empty()) return out;

    std::vector<double> norms(n);
    std::vector<Vec> e(n);
    for (size_t i = 0; i < n; ++i) {
        if (raw[i].size() != d) throw ValidationError("loss: embedding dimension mismatch");
        norms[i] = norm(raw[i]);
        if (!(norms[i] > 1e-12)) throw ValidationError("loss: zero-norm embedding");
        e[i] = raw[i];
        for (double& x : e[i]) x /= norms[i];
    }

    Matrix s(n, n);
    for (size_t i = 0; i < n; ++i) {
        s(i, i) = 1.0;
        for (size_t j = i + 1; j < n; ++j) {
            const double v = dot(e[i], e[j]);
            s(i, j) = v;
            s(j, i) = v;
        }
    }

    std::vector<int> anchor_terms(n, 0);
    for (const auto& [a, p] : terms) anchor_terms[static_cast<size_t>(a)]++;

    const double m = static_cast<double>(terms.size());

    // log-denominator and softmax weights per anchor that has terms
    std::vector<double> log_denom(n, 0.0);
    Matrix w(n, n); // w(t, u) = exp(s_tu / tau) / denom_t, u != t
    for (size_t t = 0; t < n; ++t) {
        if (anchor_terms[t] == 0) continue;
        double mx = -std::numeric_limits<double>::infinity();
        for (size_t k = 0; k < n; ++k) {
            if (k != t) mx = std::max(mx, s(t, k) / tau);
        }
        double z = 0.0;
        for (size_t k = 0; k < n; ++k) {
            if (k != t) z += std::exp(s(t, k) / tau - mx);
        }
        log_denom[t] = mx + std::log(z);
        for (size_t k = 0; k < n; ++k) {
            if (k != t) w(t, k) = std::exp(s(t, k) / tau - mx) / z;
        }
    }

    double loss = 0.0;
    for (const auto& [a, p] : terms) {
        loss += log_denom[static_cast<size_t>(a)] - s(static_cast<size_t>(a), static_cast<size_t>(p)) / tau;
    }
    out.loss = loss / m;

    // coefficient on s(t, u): g(t, u) = (m_t * w_tu - P_tu) / (M * tau)
    Matrix g(n, n);
    for (size_t t = 0; t < n; ++t) {
        if (anchor_terms[t] == 0) continue;
        for (size_t u = 0; u < n; ++u) {
            if (u != t) g(t, u) = anchor_terms[t] * w(t, u) / (m * tau);
        }
    }
    for (const auto& [a, p] : terms) {
        g(static_cast<size_t>(a), static_cast<size_t>(p)) -= 1.0 / (m * tau);
    }

    // d loss / d e_c, then through e_c = raw_c / ||raw_c||
    for (size_t c = 0; c < n; ++c) {
        Vec ge(d, 0.0);
        for (size_t u = 0; u < n; ++u) {
            if (u == c) continue;
            const double coeff = g(c, u) + g(u, c);
            if (coeff == 0.0) continue;
            for (size_t k = 0; k < d; ++k) ge[k] += coeff * e[u][k];
        }
        const double radial = dot(ge, e[c]);
        for (size_t k = 0; k < d; ++k) {
            out.grad[c][k] = (ge[k] - radial * e[c][k]) / norms[c];
        }
    }
    return out;
}

} // namespace

LossGrad mcl_loss(const std::vector<Vec>& embeddings,
                  const std::vector<std::set<int>>& labels, double tau) {
    if (embeddings.size() < 2) throw ValidationError("mcl_loss: batch must have at least 2 embeddings");
    if (labels.size() != embeddings.size()) throw ValidationError("mcl_loss: embeddings/labels size mismatch");
    if (!(tau > 0.0)) throw ValidationError("mcl_loss: tau must be > 0");

    std::vector<std::pair<int, int>> positive_pairs;
    const int b = static_cast<int>(embeddings.size());
    for (int i = 0; i < b; ++i) {
        for (int j = 0; j < b; ++j) {
            if (i != j && groundtruth_similarity(labels[i], labels[j])) {
                positive_pairs.emplace_back(i, j);
            }
        }
    }
    return contrastive_core(embeddings, positive_pairs, tau);
}

SslLossGrad ssl_loss(const std::vector<Vec>& view_a, const std::vector<Vec>& view_b, double tau) {
    const size_t b = view_a.size();
    if (b < 2) throw ValidationError("ssl_loss: batch must have at least 2 view pairs");
    if (view_b.size() != b) throw ValidationError("ssl_loss: view batches differ in size");
    if (!(tau > 0.0)) throw ValidationError("ssl_loss: tau must be > 0");

    std::vector<Vec> views;
    views.reserve(2 * b);
    views.insert(views.end(), view_a.begin(), view_a.end());
    views.insert(views.end(), view_b.begin(), view_b.end());

    std::vector<std::pair<int, int>> terms;
    terms.reserve(2 * b);
    for (size_t i = 0; i < b; ++i) terms.emplace_back(static_cast<int>(i), static_cast<int>(i + b));
    for (size_t i = 0; i < b; ++i) terms.emplace_back(static_cast<int>(i + b), static_cast<int>(i));

    LossGrad core = contrastive_core(views, terms, tau);
    SslLossGrad out;
    out.loss = core.loss;
    out.grad_a.assign(core.grad.begin(), core.grad.begin() + static_cast<long>(b));
    out.grad_b.assign(core.grad.begin() + static_cast<long>(b), core.grad.end());
    return out;
}

double combined_loss(double mcl, double ssl, const TrainConfig& config) {
    if (config.ssl_only) return ssl;
    return mcl + config.lambda * ssl;
}

BatchLoss batch_loss_and_gradient(const ProjectionHead& head,
                                  const std::vector<Vec>& features,
                                  const std::vector<std::set<int>>& labels,
                                  const std::vector<Vec>& view_a_features,
                                  const std::vector<Vec>& view_b_features,
                                  const TrainConfig& config) {
    BatchLoss result;
    result.weight_grad = Matrix(head.d_out(), head.d_in());
    if (head.bias) result.bias_grad.assign(head.d_out(), 0.0);

    auto accumulate = [&](const Vec& grad_projected, const Vec& input, double weight) {
        for (size_t r = 0; r < head.d_out(); ++r) {
            const double gr = weight * grad_projected[r];
            if (gr == 0.0) continue;
            double* row = &result.weight_grad.data[r * head.d_in()];
            for (size_t c = 0; c < head.d_in(); ++c) row[c] += gr * input[c];
            if (head.bias) result.bias_grad[r] += gr;
        }
    };

    if (!config.ssl_only) {
        std::vector<Vec> projected(features.size());
        for (size_t i = 0; i < features.size(); ++i) projected[i] = head.project_raw(features[i]);
        const LossGrad mcl = mcl_loss(projected, labels, config.tau);
        result.mcl = mcl.loss;
        for (size_t i = 0; i < features.size(); ++i) accumulate(mcl.grad[i], features[i], 1.0);
    }

    const bool want_ssl = config.ssl_only || config.lambda > 0.0;
    if (want_ssl && !view_a_features.empty()) {
        std::vector<Vec> pa(view_a_features.size()), pb(view_b_features.size());
        for (size_t i = 0; i < view_a_features.size(); ++i) pa[i] = head.project_raw(view_a_features[i]);
        for (size_t i = 0; i < view_b_features.size(); ++i) pb[i] = head.project_raw(view_b_features[i]);
        const SslLossGrad ssl = ssl_loss(pa, pb, config.tau);
        result.ssl = ssl.loss;
        const double weight = config.ssl_only ? 1.0 : config.lambda;
        for (size_t i = 0; i < view_a_features.size(); ++i) {
            accumulate(ssl.grad_a[i], view_a_features[i], weight);
            accumulate(ssl.grad_b[i], view_b_features[i], weight);
        }
    }

    result.combined = combined_loss(result.mcl, result.ssl, config);
    return result;
}

ProjectionHead init_head(size_t d_in, const TrainConfig& config) {
    ProjectionHead head;
    const size_t d_out = static_cast<size_t>(config.projection_dim);
    head.weights = Matrix(d_out, d_in);
    if (config.identity_init) {
        if (d_in != d_out) {
            throw ValidationError("init_head: identity init requires matching input and output dims");
        }
        for (size_t i = 0; i < d_out; ++i) head.weights(i, i) = 1.0;
        return head;
    }
    Rng rng(splitmix64(config.seed ^ 0x57464f524745ULL));
    const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
    for (double& w : head.weights.data) w = rng.uniform(-bound, bound);
    return head;
}

namespace {

// Common SGD-with-momentum loop. view_source is empty in embedding mode.
TrainResult train_loop(const std::vector<Vec>& features,
                       const std::vector<std::set<int>>& labels,
                       const std::vector<toyfeat::RasterImage>* images,
                       const TrainConfig& config) {
    config.validate();
    const size_t n = features.size();
    if (n < 2) throw ValidationError("train: need at least 2 records");
    if (static_cast<size_t>(config.batch_size) > n) {
        throw ValidationError("train: batch_size exceeds corpus size");
    }
    const bool want_ssl = config.ssl_only || config.lambda > 0.0;
    if (want_ssl && images == nullptr) {
        throw ValidationError(
            "train: the SSL term needs an image corpus to augment; use lambda 0 with embeddings");
    }

    TrainResult result;
    result.head = init_head(features.front().size(), config);
    Matrix velocity(result.head.d_out(), result.head.d_in());

    Rng shuffler(splitmix64(config.seed ^ 0x7368756666ULL));
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    size_t cursor = n; // forces an initial shuffle

    std::vector<Vec> batch_features, batch_a, batch_b;
    std::vector<std::set<int>> batch_labels;

    int it = 0;
    while (it < config.iterations) {
        if (cursor >= n) {
            shuffler.shuffle(order);
            cursor = 0;
        }
        const size_t take = std::min(static_cast<size_t>(config.batch_size), n - cursor);
        if (take < 2) {
            // leftover single record; cannot form a contrastive pair
            result.skipped_batches++;
            cursor = n;
            continue;
        }

        batch_features.clear();
        batch_labels.clear();
        batch_a.clear();
        batch_b.clear();
        for (size_t s = 0; s < take; ++s) {
            const size_t idx = order[cursor + s];
            batch_features.push_back(features[idx]);
            batch_labels.push_back(labels[idx]);
            if (want_ssl) {
                const uint64_t view_seed =
                    splitmix64(config.seed * 0x9e3779b97f4a7c15ULL + static_cast<uint64_t>(it) * 0xf4243ULL + idx);
                auto [va, vb] = toyfeat::sample_view_pair((*images)[idx], view_seed);
                batch_a.push_back(toyfeat::extract_features(va));
                batch_b.push_back(toyfeat::extract_features(vb));
            }
        }
        cursor += take;

        const BatchLoss step =
            batch_loss_and_gradient(result.head, batch_features, batch_labels, batch_a, batch_b, config);

        for (size_t i = 0; i < velocity.data.size(); ++i) {
            velocity.data[i] = config.momentum * velocity.data[i] + step.weight_grad.data[i];
            result.head.weights.data[i] -= config.lr * velocity.data[i];
        }

        result.trace.push_back({it, step.mcl, step.ssl, step.combined});
        ++it;
    }
    return result;
}

} // namespace

TrainResult train(const std::vector<toyfeat::RasterImage>& images,
                  const std::vector<std::set<int>>& labels, const TrainConfig& config) {
    if (images.size() != labels.size()) throw ValidationError("train: images/labels size mismatch");
    std::vector<Vec> features(images.size());
    for (size_t i = 0; i < images.size(); ++i) features[i] = toyfeat::extract_features(images[i]);
    return train_loop(features, labels, &images, config);
}

TrainResult train(const Dataset& dataset, const TrainConfig& config) {
    std::vector<Vec> features;
    std::vector<std::set<int>> labels;
    features.reserve(dataset.records.size());
    for (const auto& rec : dataset.records) {
        features.push_back(rec.vector);
        labels.push_back(rec.labels);
    }
    return train_loop(features, labels, nullptr, config);
}

void save_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& trace) {
    std::string out = "iteration,mcl,ssl,combined\n";
    for (const auto& row : trace) {
        out += std::to_string(row.iteration);
        out += ',';
        out += format_double(row.mcl);
        out += ',';
        out += format_double(row.ssl);
        out += ',';
        out += format_double(row.combined);
        out += '\n';
    }
    write_file_bytes(path, out);
}

} // namespace styleforge::training
