#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "styleforge/core.hpp"
#include "styleforge/rng.hpp"

namespace styleforge::toyfeat {

// Row-major RGB raster, channels in [0, 1].
struct RasterImage {
    int width = 0;
    int height = 0;
    std::vector<double> pixels; // 3 * width * height

    RasterImage() = default;
    RasterImage(int w, int h) : width(w), height(h), pixels(static_cast<size_t>(3) * w * h, 0.0) {}

    double& at(int x, int y, int c) { return pixels[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    double at(int x, int y, int c) const { return pixels[(static_cast<size_t>(y) * width + x) * 3 + c]; }

    bool operator==(const RasterImage&) const = default;
};

enum class AugKind { horizontal_flip, vertical_flip, rotate90, resize };

// Style-preserving spatial transforms only; photometric changes are excluded
// because they would alter the color statistics the features describe.
struct AugmentationSpec {
    AugKind kind = AugKind::horizontal_flip;
    int quarter_turns = 1; // rotate90: 1..3 counter-clockwise quarter turns
    double scale = 1.0;    // resize: [0.5, 1.0]

    void validate() const;
};

// Deterministic for equal (img, spec, seed); `seed` is reserved for future
// stochastic transforms, the current kinds are fully determined by the spec
// fields. Resize box-averages down then nearest-neighbor upsamples back to the
// original dimensions.
RasterImage augment(const RasterImage& img, const AugmentationSpec& spec, uint64_t seed = 0);

AugmentationSpec sample_spec(Rng& rng);

// Two independent uniformly-sampled augmentations of the same image.
std::pair<RasterImage, RasterImage> sample_view_pair(const RasterImage& img, uint64_t seed);

constexpr int kColorHistDim = 64;   // 4x4x4 RGB histogram, L1-normalized
constexpr int kGradHistDim = 16;    // gradient-orientation histogram, L1-normalized
constexpr int kGramDim = 36;        // upper triangle (incl. diagonal) of 8x8 filter gram
constexpr int kFeatureDim = kColorHistDim + kGradHistDim + kGramDim;

// Handcrafted 116-d style descriptor over raster images (width, height >= 8):
// color histogram, gradient-orientation histogram, and the gram block of a
// fixed bank of 8 oriented derivative filters (see kOrientedFilterCount).
Vec extract_features(const RasterImage& img);

constexpr int kOrientedFilterCount = 8;
// 3x3 filter k: cos(k*22.5 deg) * Sx + sin(k*22.5 deg) * Sy with Sobel kernels
//   Sx = [[-1,0,1],[-2,0,2],[-1,0,1]]   Sy = [[-1,-2,-1],[0,0,0],[1,2,1]]
void oriented_filter(int index, double out[3][3]);

// G[p][q] = (1/M) * sum_m F_p[m] * F_q[m]; symmetric positive semidefinite.
Matrix gram_matrix(const std::vector<Vec>& feature_maps);

// PPM (P3/P6, maxval 255) and PNG (8-bit) readers; P6 writer.
RasterImage load_image(const std::filesystem::path& path);
void save_ppm(const std::filesystem::path& path, const RasterImage& img);

struct SyntheticImage {
    std::string id;
    int style_class = 0;
    RasterImage image;
};

// Procedural corpus: `per_class` images for each of `classes` style classes.
// A class fixes a palette and a stroke-texture family; each image draws
// content clutter from a palette shared across classes plus a random spatial
// pose, so raw features overlap between classes while the style signal stays
// linearly recoverable.
std::vector<SyntheticImage> synthetic_corpus(int classes, int per_class, uint64_t seed);

// Corpus as a feature dataset: one record per image, label = class tag.
Dataset synthetic_feature_dataset(int classes, int per_class, uint64_t seed);

std::string synthetic_class_tag(int style_class);

} // namespace styleforge::toyfeat
