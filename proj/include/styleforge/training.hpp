#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "styleforge/core.hpp"
#include "styleforge/toy_features.hpp"

namespace styleforge::training {

// Trainable linear map from backbone-feature space to the style-descriptor
// space. forward() L2-normalizes the projected vector.
struct ProjectionHead {
    Matrix weights;           // d_out x d_in
    std::optional<Vec> bias;  // d_out, absent by default

    size_t d_in() const { return weights.cols; }
    size_t d_out() const { return weights.rows; }

    Vec project_raw(const Vec& x) const;
    Vec forward(const Vec& x) const;
};

// Head file, little-endian: magic "CSDH" | u16 version (=1) | u32 d_in |
// u32 d_out | row-major f32 weights. Carries no bias.
ProjectionHead load_head(const std::filesystem::path& path);
void save_head(const std::filesystem::path& path, const ProjectionHead& head);

struct TrainConfig {
    double tau = 0.1;
    double lambda = 0.2;
    bool ssl_only = false;  // drop the supervised term entirely
    double lr = 0.003;
    double momentum = 0.9;
    int batch_size = 16;
    int iterations = 0;
    uint64_t seed = 0;
    int projection_dim = 32;
    bool identity_init = false;  // requires d_in == projection_dim

    void validate() const;
};

// 1 iff the two label sets share any label.
int groundtruth_similarity(const std::set<int>& labels_i, const std::set<int>& labels_j);

// Pairwise cosine matrix of a batch plus the 0/1 shared-label indicator.
struct SimilarityBatch {
    Matrix s;      // B x B cosines, unit diagonal
    Matrix s_hat;  // B x B indicator
};
SimilarityBatch build_similarity_batch(const std::vector<Vec>& unit_embeddings,
                                       const std::vector<std::set<int>>& labels);

struct LossGrad {
    double loss = 0.0;
    std::vector<Vec> grad;  // d(loss)/d(raw input vector), one row per input
};

// Multi-label contrastive loss: mean over ordered positive pairs (i, j),
// i != j with shared labels, of -log(exp(s_ij/tau) / sum_{k != i} exp(s_ik/tau)).
// Inputs are normalized internally; the returned gradient is taken w.r.t. the
// raw (pre-normalization) vectors, chain rule through the normalization
// included. No positive pair -> loss 0, gradient 0.
LossGrad mcl_loss(const std::vector<Vec>& embeddings,
                  const std::vector<std::set<int>>& labels, double tau);

struct SslLossGrad {
    double loss = 0.0;
    std::vector<Vec> grad_a, grad_b;
};

// Symmetric InfoNCE over the 2B views: each view is an anchor, its positive is
// the paired view of the same image, and the denominator runs over all other
// 2B-1 views. Averaged over the 2B anchors. Gradients w.r.t. the raw inputs.
SslLossGrad ssl_loss(const std::vector<Vec>& view_a, const std::vector<Vec>& view_b, double tau);

// mcl + lambda * ssl; ssl_only drops the mcl term, lambda = 0 drops the ssl term.
double combined_loss(double mcl, double ssl, const TrainConfig& config);

// Full objective for one batch, differentiated through projection and
// normalization down to the head parameters. Pass empty views to skip the SSL
// term (equivalent to lambda = 0 for this batch).
struct BatchLoss {
    double mcl = 0.0;
    double ssl = 0.0;
    double combined = 0.0;
    Matrix weight_grad;
    Vec bias_grad;  // empty when the head has no bias
};
BatchLoss batch_loss_and_gradient(const ProjectionHead& head,
                                  const std::vector<Vec>& features,
                                  const std::vector<std::set<int>>& labels,
                                  const std::vector<Vec>& view_a_features,
                                  const std::vector<Vec>& view_b_features,
                                  const TrainConfig& config);

struct TraceRow {
    int iteration = 0;
    double mcl = 0.0;
    double ssl = 0.0;
    double combined = 0.0;
};

struct TrainResult {
    ProjectionHead head;
    std::vector<TraceRow> trace;
    int skipped_batches = 0;
};

// SGD with momentum (u <- m*u + g; W <- W - lr*u) over seeded shuffled
// mini-batches. Image corpus: the supervised term sees the unaugmented
// features, the SSL term sees a fresh augmentation view pair each iteration.
// Bitwise deterministic for a fixed seed.
TrainResult train(const std::vector<toyfeat::RasterImage>& images,
                  const std::vector<std::set<int>>& labels, const TrainConfig& config);

// Precomputed-embedding corpus: no images to augment, so lambda must be 0 (or
// ssl_only unset); trains on the supervised term alone.
TrainResult train(const Dataset& dataset, const TrainConfig& config);

void save_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& trace);

ProjectionHead init_head(size_t d_in, const TrainConfig& config);

} // namespace styleforge::training
