#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include <gtest/gtest.h>
#include <png.h>

#include "fuselab/imaging/image.hpp"
#include "fuselab/imaging/io.hpp"

using namespace fuselab;
using namespace fuselab::imaging;
namespace fs = std::filesystem;

namespace {

GrayImage random_image(std::size_t w, std::size_t h, std::uint32_t seed) {
    std::mt19937 gen(seed);
    std::uniform_int_distribution<int> d(0, 255);
    GrayImage img(w, h);
    for (auto& v : img.pixels) v = static_cast<std::uint8_t>(d(gen));
    return img;
}

// Direct 2-D convolution with the outer-product kernel and clamped indices.
GrayImage blur_oracle(const GrayImage& img, int k, std::optional<double> sigma = std::nullopt) {
    const auto w = blur_weights(k, sigma);
    const long r = k / 2;
    GrayImage out(img.width, img.height);
    for (long y = 0; y < static_cast<long>(img.height); ++y) {
        for (long x = 0; x < static_cast<long>(img.width); ++x) {
            std::int64_t s = 0;
            for (long dy = -r; dy <= r; ++dy) {
                for (long dx = -r; dx <= r; ++dx) {
                    const long yy = std::clamp(y + dy, 0L, static_cast<long>(img.height) - 1);
                    const long xx = std::clamp(x + dx, 0L, static_cast<long>(img.width) - 1);
                    s += w[static_cast<std::size_t>(dy + r)] * w[static_cast<std::size_t>(dx + r)] *
                         img.at(static_cast<std::size_t>(xx), static_cast<std::size_t>(yy));
                }
            }
            const double v = std::floor(static_cast<double>(s) / std::ldexp(1.0, 2 * kBlurBits) + 0.5);
            out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = static_cast<std::uint8_t>(v);
        }
    }
    return out;
}

// Black square pores of side `side` on a white field, centres on a grid of pitch `pitch`.
GrayImage pore_field(std::size_t w, std::size_t h, std::size_t side, std::size_t pitch, std::size_t* pore_pixels) {
    GrayImage img(w, h, 255);
    *pore_pixels = 0;
    for (std::size_t cy = pitch / 2; cy + side < h; cy += pitch) {
        for (std::size_t cx = pitch / 2; cx + side < w; cx += pitch) {
            for (std::size_t y = cy; y < cy + side; ++y) {
                for (std::size_t x = cx; x < cx + side; ++x) {
                    img.at(x, y) = 0;
                    ++*pore_pixels;
                }
            }
        }
    }
    return img;
}

fs::path temp_path(const std::string& name) { return fs::temp_directory_path() / ("fuselab_img_" + name); }

}  // namespace

TEST(Luma, Bt601Integer) {
    EXPECT_EQ(luma(255, 255, 255), 255);
    EXPECT_EQ(luma(0, 0, 0), 0);
    for (int g = 0; g < 256; ++g) EXPECT_EQ(luma(static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(g)), g);
    EXPECT_EQ(luma(255, 0, 0), 76);   // 76.245
    EXPECT_EQ(luma(0, 255, 0), 150);  // 149.685
    EXPECT_EQ(luma(0, 0, 255), 29);   // 29.07
}

TEST(Crop, DefaultMargins) {
    const auto img = random_image(200, 200, 1);
    const auto c = crop_margins(img);
    EXPECT_EQ(c.width, 100u);
    EXPECT_EQ(c.height, 70u);
    for (std::size_t y = 0; y < c.height; ++y) {
        for (std::size_t x = 0; x < c.width; ++x) ASSERT_EQ(c.at(x, y), img.at(x + 50, y + 50));
    }
}

TEST(Crop, ZeroMarginsIsIdentity) {
    const auto img = random_image(31, 17, 2);
    EXPECT_EQ(crop_margins(img, {0, 0, 0, 0}), img);
}

TEST(Crop, AsymmetricMarginsMatchBruteForce) {
    const auto img = random_image(40, 30, 3);
    const Margins m{3, 7, 2, 5};
    const auto c = crop_margins(img, m);
    ASSERT_EQ(c.width, 31u);
    ASSERT_EQ(c.height, 22u);
    std::vector<std::uint8_t> expect;
    for (std::size_t y = 3; y < 25; ++y) {
        for (std::size_t x = 2; x < 33; ++x) expect.push_back(img.pixels[y * 40 + x]);
    }
    EXPECT_EQ(c.pixels, expect);
}

TEST(Crop, MarginsExceedingImage) {
    EXPECT_THROW(crop_margins(GrayImage(99, 99)), DomainError);
    EXPECT_THROW(crop_margins(GrayImage(100, 200)), DomainError);
}

TEST(Blur, WeightsAreNormalizedAndSymmetric) {
    for (int k : {1, 3, 5, 7, 11}) {
        const auto w = blur_weights(k);
        std::int64_t sum = 0;
        for (auto v : w) sum += v;
        EXPECT_EQ(sum, std::int64_t{1} << kBlurBits);
        for (std::size_t i = 0; i < w.size(); ++i) EXPECT_EQ(w[i], w[w.size() - 1 - i]);
    }
    EXPECT_DOUBLE_EQ(default_sigma(5), 1.1);
    EXPECT_THROW(blur_weights(4), DomainError);
    EXPECT_THROW(blur_weights(0), DomainError);
    EXPECT_THROW(blur_weights(5, -1.0), DomainError);
}

TEST(Blur, ConstantImageUnchanged) {
    for (int v : {0, 1, 75, 254, 255}) {
        const GrayImage img(23, 19, static_cast<std::uint8_t>(v));
        EXPECT_EQ(gaussian_blur(img, 5), img);
        EXPECT_EQ(gaussian_blur(img, 9, 3.0), img);
    }
}

TEST(Blur, UnitKernelIsIdentity) {
    const auto img = random_image(20, 20, 4);
    EXPECT_EQ(gaussian_blur(img, 1), img);
}

TEST(Blur, BrightPixelGivesQuantizedStamp) {
    GrayImage img(11, 11, 0);
    img.at(5, 5) = 255;
    const auto out = gaussian_blur(img, 5);
    const auto w = blur_weights(5);
    for (int dy = -2; dy <= 2; ++dy) {
        for (int dx = -2; dx <= 2; ++dx) {
            const double stamp = 255.0 * static_cast<double>(w[static_cast<std::size_t>(dy + 2)] * w[static_cast<std::size_t>(dx + 2)]) /
                                 std::ldexp(1.0, 2 * kBlurBits);
            EXPECT_EQ(out.at(static_cast<std::size_t>(5 + dx), static_cast<std::size_t>(5 + dy)),
                      static_cast<int>(std::floor(stamp + 0.5)));
        }
    }
    EXPECT_EQ(out.at(0, 0), 0);
    EXPECT_EQ(out, blur_oracle(img, 5));
}

TEST(Blur, MatchesDirectConvolutionBitForBit) {
    for (std::uint32_t s = 0; s < 4; ++s) {
        const auto img = random_image(37 + s, 29, 10 + s);
        EXPECT_EQ(gaussian_blur(img, 5), blur_oracle(img, 5));
        EXPECT_EQ(gaussian_blur(img, 7, 2.0), blur_oracle(img, 7, 2.0));
    }
    // image smaller than the kernel exercises the replicate padding on both sides
    const auto tiny = random_image(2, 3, 99);
    EXPECT_EQ(gaussian_blur(tiny, 5), blur_oracle(tiny, 5));
}

TEST(Porosity, ExactCounts) {
    EXPECT_EQ(porosity_fraction(GrayImage(50, 40, 150)), 0.0);
    GrayImage img(100, 100, 200);
    for (std::size_t i = 0; i < 250; ++i) img.pixels[i * 37 % 10000] = 20;
    EXPECT_EQ(porosity_fraction(img), 0.025);
    EXPECT_EQ(porosity_fraction(random_image(30, 30, 5), 256), 1.0);
    EXPECT_THROW(porosity_fraction(GrayImage()), DomainError);
}

TEST(Porosity, StrictThreshold) {
    GrayImage img(2, 1);
    img.pixels = {74, 75};
    EXPECT_EQ(porosity_fraction(img, 75), 0.5);
}

TEST(Porosity, MonotoneInThreshold) {
    const auto img = random_image(64, 64, 6);
    double prev = -1.0;
    for (int t = 0; t <= 256; t += 8) {
        const double p = porosity_fraction(img, t);
        EXPECT_GE(p, prev);
        prev = p;
    }
}

TEST(Porosity, BlurChangesBinaryFractionWithinBoundaryBand) {
    std::size_t pores = 0;
    const std::size_t side = 8;
    const auto img = pore_field(240, 200, side, 24, &pores);
    const double before = porosity_fraction(img, 75);
    const double after = porosity_fraction(gaussian_blur(img, 5), 75);
    const double n_pores = static_cast<double>(pores) / (side * side);
    const double band = n_pores * 4.0 * side * 2.0 / (240.0 * 200.0);  // perimeter x radius / area
    EXPECT_LT(std::abs(after - before), band);
}

TEST(Histogram, Counts) {
    const GrayImage flat(12, 5, 77);
    const auto h = pixel_histogram(flat);
    for (int v = 0; v < 256; ++v) EXPECT_EQ(h[static_cast<std::size_t>(v)], v == 77 ? 60u : 0u);
    const auto img = random_image(53, 41, 7);
    const auto hr = pixel_histogram(img);
    std::uint64_t sum = 0;
    for (int v = 0; v < 256; ++v) {
        std::uint64_t naive = 0;
        for (auto p : img.pixels) naive += p == v;
        EXPECT_EQ(hr[static_cast<std::size_t>(v)], naive);
        sum += hr[static_cast<std::size_t>(v)];
    }
    EXPECT_EQ(sum, 53u * 41u);
}

TEST(MeasurePorosity, KnownPoreFraction) {
    // 2000 x 1600 after cropping; 400 pores of 20 x 20 cover exactly 5% of it.
    const std::size_t w = 2100, h = 1730, side = 20;
    GrayImage img(w, h, 200);
    const std::size_t target = (w - 100) * (h - 130) / 20;
    std::size_t pores = 0;
    for (std::size_t y = 60; y + side + 10 <= h - 80 && pores < target; y += 60) {
        for (std::size_t x = 60; x + side + 10 <= w - 50 && pores < target; x += 60) {
            for (std::size_t yy = y; yy < y + side; ++yy) {
                for (std::size_t xx = x; xx < x + side; ++xx) img.at(xx, yy) = 10;
            }
            pores += side * side;
        }
    }
    ASSERT_EQ(pores, target);
    const auto r = measure_porosity(img);
    EXPECT_NEAR(r.porosity, 0.05, 0.005);
    std::uint64_t total = 0;
    for (auto c : r.histogram) total += c;
    EXPECT_EQ(total, target * 20);
}

TEST(ImageIo, PngRoundTrip) {
    const auto img = random_image(33, 21, 8);
    const auto path = temp_path("rt.png");
    write_png(path, img);
    EXPECT_EQ(read_png(path), img);
    EXPECT_EQ(read_image(path), img);
    fs::remove(path);
}

TEST(ImageIo, ColourPngIsConvertedWithLuma) {
    const std::size_t w = 16, h = 4;
    std::vector<std::uint8_t> rgb(w * h * 3);
    std::mt19937 gen(9);
    for (auto& v : rgb) v = static_cast<std::uint8_t>(gen() & 0xff);
    png_image im;
    std::memset(&im, 0, sizeof im);
    im.version = PNG_IMAGE_VERSION;
    im.width = w;
    im.height = h;
    im.format = PNG_FORMAT_RGB;
    const auto path = temp_path("rgb.png");
    ASSERT_TRUE(png_image_write_to_file(&im, path.string().c_str(), 0, rgb.data(), 0, nullptr));
    const auto g = read_image(path);
    for (std::size_t i = 0; i < w * h; ++i) EXPECT_EQ(g.pixels[i], luma(rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2]));
    fs::remove(path);
}

TEST(ImageIo, TiffRoundTrip) {
    const auto img = random_image(19, 13, 10);
    EXPECT_EQ(decode_tiff(encode_tiff(img)), img);
    const auto path = temp_path("rt.tif");
    write_tiff(path, img);
    EXPECT_EQ(read_image(path), img);
    fs::remove(path);
}

TEST(ImageIo, BigEndianWhiteIsZeroTiff) {
    // 3x2, two strips of one row... written by hand in Motorola order.
    std::vector<std::uint8_t> b = {'M', 'M', 0, 42, 0, 0, 0, 8};
    auto p16 = [&](int v) {
        b.push_back(static_cast<std::uint8_t>(v >> 8));
        b.push_back(static_cast<std::uint8_t>(v & 0xff));
    };
    auto p32 = [&](std::uint32_t v) {
        p16(static_cast<int>(v >> 16));
        p16(static_cast<int>(v & 0xffff));
    };
    const std::uint32_t ifd_end = 8 + 2 + 12 * 8 + 4;
    const std::uint32_t offsets_at = ifd_end, counts_at = ifd_end + 8, data_at = ifd_end + 16;
    p16(8);
    auto entry = [&](int tag, int type, std::uint32_t count, std::uint32_t value) {
        p16(tag);
        p16(type);
        p32(count);
        if (type == 3 && count == 1) {
            p16(static_cast<int>(value));
            p16(0);
        } else {
            p32(value);
        }
    };
    entry(256, 3, 1, 3);
    entry(257, 3, 1, 2);
    entry(258, 3, 1, 8);
    entry(259, 3, 1, 1);
    entry(262, 3, 1, 0);  // WhiteIsZero
    entry(273, 4, 2, offsets_at);
    entry(278, 3, 1, 1);
    entry(279, 4, 2, counts_at);
    p32(0);
    p32(data_at);
    p32(data_at + 3);
    p32(3);
    p32(3);
    for (int v : {0, 10, 255, 100, 200, 5}) b.push_back(static_cast<std::uint8_t>(v));
    const auto img = decode_tiff(b);
    ASSERT_EQ(img.width, 3u);
    ASSERT_EQ(img.height, 2u);
    EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{255, 245, 0, 155, 55, 250}));
}

TEST(ImageIo, RejectsUnsupportedInput) {
    auto bytes = encode_tiff(random_image(4, 4, 11));
    auto compressed = bytes;
    // Compression is the fourth entry; its value sits at 8 + 2 + 3 * 12 + 8.
    compressed[8 + 2 + 36 + 8] = 5;
    EXPECT_THROW(decode_tiff(compressed), DataError);
    bytes.resize(40);
    EXPECT_THROW(decode_tiff(bytes), DataError);
    const auto path = temp_path("junk.png");
    {
        std::ofstream out(path);
        out << "not an image";
    }
    EXPECT_THROW(read_image(path), DataError);
    fs::remove(path);
    EXPECT_THROW(read_image(temp_path("missing.png")), DataError);
}
