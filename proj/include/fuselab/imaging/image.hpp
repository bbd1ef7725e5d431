#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fuselab/errors.hpp"

namespace fuselab::imaging {

/// Row-major 8-bit grayscale image.
struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;

    GrayImage() = default;
    GrayImage(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h, fill) {}

    std::uint8_t& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
    std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
    std::size_t size() const { return pixels.size(); }
    bool empty() const { return pixels.empty(); }

    friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

// Integer BT.601 luma, rounded to nearest.
inline std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    return static_cast<std::uint8_t>((299u * r + 587u * g + 114u * b + 500u) / 1000u);
}

struct Margins {
    std::size_t top = 50;
    std::size_t right = 50;
    std::size_t left = 50;
    std::size_t bottom = 80;
};

inline GrayImage crop_margins(const GrayImage& img, const Margins& m = {}) {
    if (m.left + m.right >= img.width || m.top + m.bottom >= img.height) {
        throw DomainError("crop margins (top " + std::to_string(m.top) + ", right " + std::to_string(m.right) +
                          ", left " + std::to_string(m.left) + ", bottom " + std::to_string(m.bottom) +
                          ") exceed the " + std::to_string(img.width) + "x" + std::to_string(img.height) + " image");
    }
    GrayImage out(img.width - m.left - m.right, img.height - m.top - m.bottom);
    for (std::size_t y = 0; y < out.height; ++y) {
        for (std::size_t x = 0; x < out.width; ++x) out.at(x, y) = img.at(x + m.left, y + m.top);
    }
    return out;
}

inline constexpr int kBlurBits = 14;  // fixed-point precision of the 1-D weights

inline double default_sigma(int kernel_size) { return 0.3 * ((kernel_size - 1) / 2.0 - 1.0) + 0.8; }

/// 1-D integer Gaussian weights summing to exactly 2^kBlurBits. Rounding
/// residue goes to the centre tap.
inline std::vector<std::int64_t> blur_weights(int kernel_size, std::optional<double> sigma = std::nullopt) {
    if (kernel_size < 1 || kernel_size % 2 == 0) {
        throw DomainError("blur kernel size must be odd and at least 1, got " + std::to_string(kernel_size));
    }
    const double s = sigma.value_or(default_sigma(kernel_size));
    if (!(s > 0.0) || !std::isfinite(s)) throw DomainError("blur sigma must be positive");
    const int r = kernel_size / 2;
    std::vector<double> g(static_cast<std::size_t>(kernel_size));
    double total = 0.0;
    for (int i = -r; i <= r; ++i) {
        g[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (s * s));
        total += g[static_cast<std::size_t>(i + r)];
    }
    const std::int64_t one = std::int64_t{1} << kBlurBits;
    std::vector<std::int64_t> w(g.size());
    std::int64_t sum = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        w[i] = std::llround(g[i] / total * static_cast<double>(one));
        sum += w[i];
    }
    w[static_cast<std::size_t>(r)] += one - sum;
    return w;
}

/// Separable Gaussian blur with replicate padding. Both passes accumulate in
/// exact integers; the single rounding (half up, values are non-negative)
/// happens at the end, so the result equals a direct 2-D convolution with
/// the outer-product kernel.
inline GrayImage gaussian_blur(const GrayImage& img, int kernel_size = 5, std::optional<double> sigma = std::nullopt) {
    const auto w = blur_weights(kernel_size, sigma);
    if (img.empty()) return img;
    const long r = kernel_size / 2;
    const long W = static_cast<long>(img.width), H = static_cast<long>(img.height);
    auto clamp = [](long v, long hi) { return v < 0 ? 0 : (v >= hi ? hi - 1 : v); };
    std::vector<std::int64_t> rows(img.size());
    for (long y = 0; y < H; ++y) {
        for (long x = 0; x < W; ++x) {
            std::int64_t s = 0;
            for (long k = -r; k <= r; ++k) s += w[static_cast<std::size_t>(k + r)] * img.at(static_cast<std::size_t>(clamp(x + k, W)), static_cast<std::size_t>(y));
            rows[static_cast<std::size_t>(y * W + x)] = s;
        }
    }
    GrayImage out(img.width, img.height);
    const std::int64_t half = std::int64_t{1} << (2 * kBlurBits - 1);
    for (long y = 0; y < H; ++y) {
        for (long x = 0; x < W; ++x) {
            std::int64_t s = 0;
            for (long k = -r; k <= r; ++k) s += w[static_cast<std::size_t>(k + r)] * rows[static_cast<std::size_t>(clamp(y + k, H) * W + x)];
            out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = static_cast<std::uint8_t>((s + half) >> (2 * kBlurBits));
        }
    }
    return out;
}

/// Fraction of pixels strictly darker than the threshold.
inline double porosity_fraction(const GrayImage& img, int threshold = 75) {
    if (img.empty()) throw DomainError("porosity_fraction: empty image");
    std::size_t pores = 0;
    for (auto v : img.pixels) pores += static_cast<int>(v) < threshold;
    return static_cast<double>(pores) / static_cast<double>(img.size());
}

using Histogram = std::array<std::uint64_t, 256>;

inline Histogram pixel_histogram(const GrayImage& img) {
    Histogram h{};
    for (auto v : img.pixels) ++h[v];
    return h;
}

struct PorositySettings {
    Margins margins;
    int kernel_size = 5;
    std::optional<double> sigma;
    int threshold = 75;
};

struct PorosityResult {
    double porosity = 0.0;
    Histogram histogram{};  // of the blurred, cropped image
};

/// Crop, blur, threshold.
inline PorosityResult measure_porosity(const GrayImage& img, const PorositySettings& s = {}) {
    const auto blurred = gaussian_blur(crop_margins(img, s.margins), s.kernel_size, s.sigma);
    return {porosity_fraction(blurred, s.threshold), pixel_histogram(blurred)};
}

}  // namespace fuselab::imaging
