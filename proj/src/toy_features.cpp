#include "styleforge/toy_features.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <iterator>

#include <png.h>

namespace styleforge::toyfeat {

namespace {

constexpr double kPi = 3.14159265358979323846;

} // namespace

void AugmentationSpec::validate() const {
    switch (kind) {
        case AugKind::horizontal_flip:
        case AugKind::vertical_flip:
            return;
        case AugKind::rotate90:
            if (quarter_turns < 1 || quarter_turns > 3) {
                throw ValidationError("augmentation: quarter_turns must be 1, 2 or 3");
            }
            return;
        case AugKind::resize:
            if (!(scale >= 0.5 && scale <= 1.0)) {
                throw ValidationError("augmentation: resize scale must be in [0.5, 1.0]");
            }
            return;
    }
    throw ValidationError("augmentation: unknown kind");
}

namespace {

RasterImage flip_horizontal(const RasterImage& in) {
    RasterImage out(in.width, in.height);
    for (int y = 0; y < in.height; ++y)
        for (int x = 0; x < in.width; ++x)
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = in.at(in.width - 1 - x, y, c);
    return out;
}

RasterImage flip_vertical(const RasterImage& in) {
    RasterImage out(in.width, in.height);
    for (int y = 0; y < in.height; ++y)
        for (int x = 0; x < in.width; ++x)
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = in.at(x, in.height - 1 - y, c);
    return out;
}

// One counter-clockwise quarter turn.
RasterImage rotate_quarter(const RasterImage& in) {
    RasterImage out(in.height, in.width);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = in.at(out.height - 1 - y, x, c);
    return out;
}

// Exact box filter: each target pixel averages the source rectangle it covers,
// with fractional edge weights. scale = 1 reproduces the input bitwise.
RasterImage box_downsample(const RasterImage& in, int tw, int th) {
    RasterImage out(tw, th);
    const double sx = static_cast<double>(in.width) / tw;
    const double sy = static_cast<double>(in.height) / th;
    for (int ty = 0; ty < th; ++ty) {
        const double y0 = ty * sy, y1 = (ty + 1) * sy;
        for (int tx = 0; tx < tw; ++tx) {
            const double x0 = tx * sx, x1 = (tx + 1) * sx;
            double acc[3] = {0, 0, 0};
            double area = 0.0;
            for (int iy = static_cast<int>(std::floor(y0)); iy < static_cast<int>(std::ceil(y1)); ++iy) {
                const double wy = std::min<double>(y1, iy + 1) - std::max<double>(y0, iy);
                if (wy <= 0) continue;
                for (int ix = static_cast<int>(std::floor(x0)); ix < static_cast<int>(std::ceil(x1)); ++ix) {
                    const double wx = std::min<double>(x1, ix + 1) - std::max<double>(x0, ix);
                    if (wx <= 0) continue;
                    const double w = wx * wy;
                    for (int c = 0; c < 3; ++c) acc[c] += w * in.at(std::min(ix, in.width - 1), std::min(iy, in.height - 1), c);
                    area += w;
                }
            }
            for (int c = 0; c < 3; ++c) out.at(tx, ty, c) = acc[c] / area;
        }
    }
    return out;
}

RasterImage nearest_upsample(const RasterImage& in, int tw, int th) {
    RasterImage out(tw, th);
    for (int y = 0; y < th; ++y) {
        const int sy = std::min(in.height - 1, y * in.height / th);
        for (int x = 0; x < tw; ++x) {
            const int sx = std::min(in.width - 1, x * in.width / tw);
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = in.at(sx, sy, c);
        }
    }
    return out;
}

} // namespace

RasterImage augment(const RasterImage& img, const AugmentationSpec& spec, uint64_t /*seed*/) {
    spec.validate();
    switch (spec.kind) {
        case AugKind::horizontal_flip:
            return flip_horizontal(img);
        case AugKind::vertical_flip:
            return flip_vertical(img);
        case AugKind::rotate90: {
            RasterImage out = img;
            for (int k = 0; k < spec.quarter_turns; ++k) out = rotate_quarter(out);
            return out;
        }
        case AugKind::resize: {
            const int tw = std::max(1, static_cast<int>(std::llround(img.width * spec.scale)));
            const int th = std::max(1, static_cast<int>(std::llround(img.height * spec.scale)));
            if (tw == img.width && th == img.height) return img;
            return nearest_upsample(box_downsample(img, tw, th), img.width, img.height);
        }
    }
    throw ValidationError("augment: unknown kind");
}

AugmentationSpec sample_spec(Rng& rng) {
    AugmentationSpec spec;
    switch (rng.below(4)) {
        case 0: spec.kind = AugKind::horizontal_flip; break;
        case 1: spec.kind = AugKind::vertical_flip; break;
        case 2:
            spec.kind = AugKind::rotate90;
            spec.quarter_turns = rng.range_int(1, 3);
            break;
        default:
            spec.kind = AugKind::resize;
            spec.scale = rng.uniform(0.5, 1.0);
            break;
    }
    return spec;
}

std::pair<RasterImage, RasterImage> sample_view_pair(const RasterImage& img, uint64_t seed) {
    Rng rng(splitmix64(seed));
    const AugmentationSpec a = sample_spec(rng);
    const AugmentationSpec b = sample_spec(rng);
    return {augment(img, a, seed), augment(img, b, seed)};
}

// ---------------------------------------------------------------------------
// features

void oriented_filter(int index, double out[3][3]) {
    static const double sx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    static const double sy[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
    const double theta = index * (kPi / kOrientedFilterCount);
    const double c = std::cos(theta), s = std::sin(theta);
    for (int r = 0; r < 3; ++r)
        for (int q = 0; q < 3; ++q) out[r][q] = c * sx[r][q] + s * sy[r][q];
}

namespace {

double luminance(const RasterImage& img, int x, int y) {
    return 0.2126 * img.at(x, y, 0) + 0.7152 * img.at(x, y, 1) + 0.0722 * img.at(x, y, 2);
}

} // namespace

Matrix gram_matrix(const std::vector<Vec>& feature_maps) {
    if (feature_maps.empty()) throw ValidationError("gram_matrix: need at least one feature map");
    const size_t len = feature_maps.front().size();
    if (len == 0) throw ValidationError("gram_matrix: feature maps must be nonempty");
    for (const auto& m : feature_maps) {
        if (m.size() != len) throw ValidationError("gram_matrix: feature maps differ in size");
    }
    const size_t channels = feature_maps.size();
    Matrix g(channels, channels);
    for (size_t p = 0; p < channels; ++p) {
        for (size_t q = p; q < channels; ++q) {
            double acc = 0.0;
            for (size_t m = 0; m < len; ++m) acc += feature_maps[p][m] * feature_maps[q][m];
            g(p, q) = acc / static_cast<double>(len);
            g(q, p) = g(p, q);
        }
    }
    return g;
}

Vec extract_features(const RasterImage& img) {
    if (img.width < 8 || img.height < 8) {
        throw ValidationError("extract_features: image must be at least 8x8, got " +
                              std::to_string(img.width) + "x" + std::to_string(img.height));
    }
    Vec features;
    features.reserve(kFeatureDim);

    // 4x4x4 color histogram; integer counts make it exactly invariant under any
    // pixel permutation (flips, right-angle rotations).
    {
        uint64_t counts[kColorHistDim] = {};
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                int bin[3];
                for (int c = 0; c < 3; ++c) {
                    bin[c] = std::min(3, static_cast<int>(img.at(x, y, c) * 4.0));
                }
                counts[bin[0] * 16 + bin[1] * 4 + bin[2]]++;
            }
        }
        const double total = static_cast<double>(img.width) * img.height;
        for (uint64_t c : counts) features.push_back(static_cast<double>(c) / total);
    }

    // Magnitude-weighted 16-bin gradient-orientation histogram over interior
    // pixels (central differences). A gradient-free image gets the uniform
    // histogram so the block always sums to 1.
    {
        double bins[kGradHistDim] = {};
        double total = 0.0;
        for (int y = 1; y + 1 < img.height; ++y) {
            for (int x = 1; x + 1 < img.width; ++x) {
                const double gx = 0.5 * (luminance(img, x + 1, y) - luminance(img, x - 1, y));
                const double gy = 0.5 * (luminance(img, x, y + 1) - luminance(img, x, y - 1));
                const double mag = std::hypot(gx, gy);
                if (mag <= 0.0) continue;
                const double theta = std::atan2(gy, gx);
                int bin = static_cast<int>((theta + kPi) / (2.0 * kPi) * kGradHistDim);
                bin = std::clamp(bin, 0, kGradHistDim - 1);
                bins[bin] += mag;
                total += mag;
            }
        }
        if (total > 1e-12) {
            for (double b : bins) features.push_back(b / total);
        } else {
            for (int i = 0; i < kGradHistDim; ++i) features.push_back(1.0 / kGradHistDim);
        }
    }

    // Gram block: responses of the oriented filter bank on luminance, valid
    // region only, upper triangle incl. diagonal.
    {
        const int mw = img.width - 2, mh = img.height - 2;
        std::vector<Vec> maps(kOrientedFilterCount, Vec(static_cast<size_t>(mw) * mh));
        Vec luma(static_cast<size_t>(img.width) * img.height);
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) luma[static_cast<size_t>(y) * img.width + x] = luminance(img, x, y);
        for (int f = 0; f < kOrientedFilterCount; ++f) {
            double k[3][3];
            oriented_filter(f, k);
            for (int y = 0; y < mh; ++y) {
                for (int x = 0; x < mw; ++x) {
                    double acc = 0.0;
                    for (int dy = 0; dy < 3; ++dy)
                        for (int dx = 0; dx < 3; ++dx)
                            acc += k[dy][dx] * luma[static_cast<size_t>(y + dy) * img.width + (x + dx)];
                    maps[f][static_cast<size_t>(y) * mw + x] = acc;
                }
            }
        }
        const Matrix g = gram_matrix(maps);
        for (int p = 0; p < kOrientedFilterCount; ++p)
            for (int q = p; q < kOrientedFilterCount; ++q) features.push_back(g(p, q));
    }

    return features;
}

// ---------------------------------------------------------------------------
// image files

namespace {

RasterImage load_ppm(const std::string& bytes, const std::string& path) {
    size_t pos = 2; // past magic
    auto skip_space = [&] {
        for (;;) {
            while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
            if (pos < bytes.size() && bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else {
                return;
            }
        }
    };
    auto read_int = [&]() -> long {
        skip_space();
        size_t start = pos;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
        if (pos == start) throw FormatError(path + ": malformed PPM header at byte offset " + std::to_string(pos));
        return std::stol(bytes.substr(start, pos - start));
    };

    const bool binary = bytes[1] == '6';
    const long w = read_int(), h = read_int(), maxval = read_int();
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
        throw FormatError(path + ": unsupported PPM geometry or maxval");
    }
    RasterImage img(static_cast<int>(w), static_cast<int>(h));
    const size_t n = static_cast<size_t>(w) * h * 3;
    if (binary) {
        ++pos; // single whitespace after maxval
        if (pos + n > bytes.size()) {
            throw FormatError(path + ": truncated PPM pixel data at byte offset " + std::to_string(bytes.size()));
        }
        for (size_t i = 0; i < n; ++i) {
            img.pixels[i] = static_cast<uint8_t>(bytes[pos + i]) / static_cast<double>(maxval);
        }
    } else {
        for (size_t i = 0; i < n; ++i) {
            img.pixels[i] = static_cast<double>(read_int()) / static_cast<double>(maxval);
        }
    }
    return img;
}

RasterImage load_png(const std::filesystem::path& path) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
        throw FormatError(path.string() + ": " + image.message);
    }
    image.format = PNG_FORMAT_RGB;
    std::vector<uint8_t> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw FormatError(path.string() + ": " + msg);
    }
    RasterImage img(static_cast<int>(image.width), static_cast<int>(image.height));
    for (size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = buffer[i] / 255.0;
    return img;
}

} // namespace

RasterImage load_image(const std::filesystem::path& path) {
    const std::string bytes = read_file_bytes(path);
    if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '3' || bytes[1] == '6')) {
        return load_ppm(bytes, path.string());
    }
    if (bytes.size() >= 8 && static_cast<uint8_t>(bytes[0]) == 0x89 && bytes[1] == 'P') {
        return load_png(path);
    }
    throw FormatError(path.string() + ": not a PPM or PNG file");
}

void save_ppm(const std::filesystem::path& path, const RasterImage& img) {
    std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.reserve(out.size() + img.pixels.size());
    for (double v : img.pixels) {
        const long b = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
        out.push_back(static_cast<char>(static_cast<uint8_t>(b)));
    }
    write_file_bytes(path, out);
}

// ---------------------------------------------------------------------------
// synthetic corpus

namespace {

struct Color {
    double r, g, b;
};

Color hsv(double h, double s, double v) {
    h = h - std::floor(h);
    const double c = v * s;
    const double hp = h * 6.0;
    const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(hp) % 6) {
        case 0: r = c; g = x; break;
        case 1: r = x; g = c; break;
        case 2: g = c; b = x; break;
        case 3: g = x; b = c; break;
        case 4: r = x; b = c; break;
        default: r = c; b = x; break;
    }
    const double m = v - c;
    return {r + m, g + m, b + m};
}

Color lerp(const Color& a, const Color& b, double t) {
    return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

// Clutter colors shared by every class; they dilute the per-class color signal.
const Color kContentPalette[] = {
    {0.95, 0.95, 0.95}, {0.1, 0.1, 0.1}, {0.5, 0.5, 0.5}, {0.85, 0.8, 0.7},
    {0.9, 0.2, 0.2},    {0.2, 0.9, 0.2}, {0.2, 0.2, 0.9}, {0.9, 0.8, 0.15},
};

constexpr int kImageSize = 32;

} // namespace

std::string synthetic_class_tag(int style_class) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "style_%02d", style_class);
    return buf;
}

std::vector<SyntheticImage> synthetic_corpus(int classes, int per_class, uint64_t seed) {
    if (classes <= 0 || per_class <= 0) {
        throw ValidationError("synthetic_corpus: classes and per_class must be positive");
    }
    std::vector<SyntheticImage> out;
    out.reserve(static_cast<size_t>(classes) * per_class);
    for (int k = 0; k < classes; ++k) {
        // Class signature: stroke frequency and orientation family plus a
        // moderately saturated hue. Pose, gain and clutter vary per image, so
        // raw feature cosines confuse classes while the signal stays linearly
        // recoverable.
        const double hue = static_cast<double>(k) / classes;
        const Color pal_a = hsv(hue, 0.45, 0.9);
        const Color pal_b = hsv(hue, 0.2, 0.45);
        const Color stroke = hsv(hue + 0.5, 0.2, 0.1);
        const double angle = kPi * (k % kOrientedFilterCount) / kOrientedFilterCount;
        const double freq = 2.5 + 0.9 * k;

        for (int i = 0; i < per_class; ++i) {
            Rng rng(splitmix64(seed ^ (static_cast<uint64_t>(k) * 0x100000001b3ULL + i)));
            const double phase = rng.uniform(0.0, 2.0 * kPi);
            const double gain = rng.uniform(0.55, 1.0);
            const double freq_i = freq * rng.uniform(0.9, 1.1);
            const double angle_i = angle + rng.uniform(-0.12, 0.12);
            const double ca = std::cos(angle_i), sa = std::sin(angle_i);
            RasterImage img(kImageSize, kImageSize);
            for (int y = 0; y < kImageSize; ++y) {
                for (int x = 0; x < kImageSize; ++x) {
                    const double t = (ca * x + sa * y) / kImageSize;
                    const double wave = std::sin(2.0 * kPi * freq_i * t + phase);
                    Color col = lerp(pal_a, pal_b, 0.5 + 0.5 * wave);
                    if (wave > 0.8) col = stroke; // hard stroke edges at the class angle
                    img.at(x, y, 0) = std::clamp(col.r * gain, 0.0, 1.0);
                    img.at(x, y, 1) = std::clamp(col.g * gain, 0.0, 1.0);
                    img.at(x, y, 2) = std::clamp(col.b * gain, 0.0, 1.0);
                }
            }

            // heavy content clutter, same palette for every class
            const int blobs = rng.range_int(12, 20);
            for (int bidx = 0; bidx < blobs; ++bidx) {
                const Color& col = kContentPalette[rng.below(std::size(kContentPalette))];
                const int cx = rng.range_int(0, kImageSize - 1);
                const int cy = rng.range_int(0, kImageSize - 1);
                const int rad = rng.range_int(2, 7);
                for (int y = std::max(0, cy - rad); y <= std::min(kImageSize - 1, cy + rad); ++y) {
                    for (int x = std::max(0, cx - rad); x <= std::min(kImageSize - 1, cx + rad); ++x) {
                        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= rad * rad) {
                            img.at(x, y, 0) = col.r;
                            img.at(x, y, 1) = col.g;
                            img.at(x, y, 2) = col.b;
                        }
                    }
                }
            }

            // random spatial pose and rendering scale; within-class raw
            // features drift with orientation and resolution, which labels and
            // view-pair training can undo
            const int turns = static_cast<int>(rng.below(4));
            if (turns > 0) {
                img = augment(img, {AugKind::rotate90, turns, 1.0});
            }
            if (rng.below(2) == 1) {
                img = augment(img, {AugKind::horizontal_flip, 1, 1.0});
            }
            img = augment(img, {AugKind::resize, 1, rng.uniform(0.55, 1.0)});

            char id[32];
            std::snprintf(id, sizeof(id), "s%02d_%04d", k, i);
            out.push_back({id, k, std::move(img)});
        }
    }
    return out;
}

Dataset synthetic_feature_dataset(int classes, int per_class, uint64_t seed) {
    const auto corpus = synthetic_corpus(classes, per_class, seed);
    Dataset ds;
    ds.dim = kFeatureDim;
    for (int k = 0; k < classes; ++k) ds.vocab.add(synthetic_class_tag(k));
    ds.records.reserve(corpus.size());
    for (const auto& item : corpus) {
        EmbeddingRecord rec;
        rec.id = item.id;
        rec.vector = extract_features(item.image);
        rec.labels.insert(item.style_class);
        ds.records.push_back(std::move(rec));
    }
    return ds;
}

} // namespace styleforge::toyfeat
