#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include <png.h>

#include "fuselab/errors.hpp"
#include "fuselab/imaging/image.hpp"

namespace fuselab::imaging {

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open image: " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Colour and grey PNGs alike are expanded to RGB and reduced with integer
// luma; for grey input that reduction is the identity. Alpha is ignored.
inline GrayImage read_png(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    png_image im;
    std::memset(&im, 0, sizeof im);
    im.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&im, bytes.data(), bytes.size())) {
        throw DataError("unreadable PNG " + path.string() + ": " + im.message);
    }
    im.format = PNG_FORMAT_RGBA;
    std::vector<std::uint8_t> rgba(PNG_IMAGE_SIZE(im));
    if (!png_image_finish_read(&im, nullptr, rgba.data(), 0, nullptr)) {
        png_image_free(&im);
        throw DataError("unreadable PNG " + path.string() + ": " + im.message);
    }
    GrayImage out(im.width, im.height);
    for (std::size_t i = 0; i < out.size(); ++i) out.pixels[i] = luma(rgba[4 * i], rgba[4 * i + 1], rgba[4 * i + 2]);
    return out;
}

inline void write_png(const std::filesystem::path& path, const GrayImage& img) {
    png_image im;
    std::memset(&im, 0, sizeof im);
    im.version = PNG_IMAGE_VERSION;
    im.width = static_cast<png_uint_32>(img.width);
    im.height = static_cast<png_uint_32>(img.height);
    im.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&im, path.string().c_str(), 0, img.pixels.data(), 0, nullptr)) {
        throw DataError("cannot write PNG " + path.string() + ": " + im.message);
    }
}

namespace tiff {

struct Reader {
    const std::vector<std::uint8_t>& b;
    bool big_endian = false;

    void need(std::size_t off, std::size_t n) const {
        if (off + n > b.size() || off + n < off) throw DataError("truncated TIFF");
    }
    std::uint32_t u16(std::size_t off) const {
        need(off, 2);
        return big_endian ? (b[off] << 8 | b[off + 1]) : (b[off] | b[off + 1] << 8);
    }
    std::uint32_t u32(std::size_t off) const {
        need(off, 4);
        const std::uint32_t a = u16(off), c = u16(off + 2);
        return big_endian ? (a << 16 | c) : (c << 16 | a);
    }
};

struct Field {
    std::uint32_t type = 0, count = 0, offset = 0;  // offset of the value bytes
};

inline std::vector<std::uint32_t> values(const Reader& r, const Field& f) {
    std::size_t size = 0;
    if (f.type == 3) size = 2;
    else if (f.type == 4) size = 4;
    else if (f.type == 1) size = 1;
    else throw DataError("TIFF: unsupported field type " + std::to_string(f.type));
    std::size_t off = f.offset;
    if (static_cast<std::size_t>(f.count) * size > 4) off = r.u32(f.offset);
    std::vector<std::uint32_t> out;
    for (std::uint32_t i = 0; i < f.count; ++i) {
        const std::size_t at = off + i * size;
        if (size == 1) {
            r.need(at, 1);
            out.push_back(r.b[at]);
        } else {
            out.push_back(size == 2 ? r.u16(at) : r.u32(at));
        }
    }
    return out;
}

}  // namespace tiff

/// Baseline TIFF: first image only, uncompressed, 8 bits per sample, one
/// sample per pixel (BlackIsZero or WhiteIsZero), chunky strips.
inline GrayImage decode_tiff(const std::vector<std::uint8_t>& bytes, const std::string& name = "TIFF") {
    try {
        if (bytes.size() < 8) throw DataError("truncated TIFF");
        tiff::Reader r{bytes};
        if (bytes[0] == 'M' && bytes[1] == 'M') r.big_endian = true;
        else if (!(bytes[0] == 'I' && bytes[1] == 'I')) throw DataError("bad TIFF byte-order mark");
        if (r.u16(2) != 42) throw DataError("bad TIFF magic");
        const std::size_t ifd = r.u32(4);
        const std::uint32_t n = r.u16(ifd);
        std::map<std::uint32_t, tiff::Field> fields;
        for (std::uint32_t i = 0; i < n; ++i) {
            const std::size_t e = ifd + 2 + 12 * i;
            fields[r.u16(e)] = {r.u16(e + 2), r.u32(e + 4), static_cast<std::uint32_t>(e + 8)};
        }
        auto get = [&](std::uint32_t tag) {
            auto it = fields.find(tag);
            if (it == fields.end()) throw DataError("TIFF: missing tag " + std::to_string(tag));
            return tiff::values(r, it->second);
        };
        auto get_or = [&](std::uint32_t tag, std::uint32_t fallback) {
            return fields.count(tag) ? get(tag).at(0) : fallback;
        };
        const std::uint32_t width = get(256).at(0), height = get(257).at(0);
        if (get_or(259, 1) != 1) throw DataError("TIFF: compressed images are not supported");
        if (get_or(277, 1) != 1) throw DataError("TIFF: only single-channel grayscale is supported");
        if (get_or(258, 1) != 8) throw DataError("TIFF: only 8-bit samples are supported");
        const std::uint32_t photometric = get(262).at(0);
        if (photometric > 1) throw DataError("TIFF: only grayscale photometric interpretations are supported");
        const auto offsets = get(273);
        const auto counts = get(279);
        if (offsets.size() != counts.size()) throw DataError("TIFF: strip tables differ in length");
        GrayImage img(width, height);
        std::size_t pos = 0;
        for (std::size_t s = 0; s < offsets.size() && pos < img.size(); ++s) {
            const std::size_t take = std::min<std::size_t>(counts[s], img.size() - pos);
            r.need(offsets[s], take);
            std::copy_n(bytes.begin() + offsets[s], take, img.pixels.begin() + static_cast<std::ptrdiff_t>(pos));
            pos += take;
        }
        if (pos != img.size()) throw DataError("TIFF: strips hold fewer pixels than the image size");
        if (photometric == 0) {
            for (auto& v : img.pixels) v = static_cast<std::uint8_t>(255 - v);
        }
        return img;
    } catch (const DataError& e) {
        throw DataError(name + ": " + e.what());
    } catch (const std::out_of_range&) {
        throw DataError(name + ": malformed TIFF tag");
    }
}

inline GrayImage read_tiff(const std::filesystem::path& path) { return decode_tiff(read_bytes(path), path.string()); }

// Little-endian single-strip writer, the inverse of decode_tiff.
inline std::vector<std::uint8_t> encode_tiff(const GrayImage& img) {
    std::vector<std::uint8_t> out;
    auto put16 = [&](std::uint32_t v) {
        out.push_back(static_cast<std::uint8_t>(v & 0xff));
        out.push_back(static_cast<std::uint8_t>(v >> 8 & 0xff));
    };
    auto put32 = [&](std::uint32_t v) {
        put16(v & 0xffff);
        put16(v >> 16);
    };
    const std::array<std::array<std::uint32_t, 3>, 9> tags{{{256, 4, static_cast<std::uint32_t>(img.width)},
                                                            {257, 4, static_cast<std::uint32_t>(img.height)},
                                                            {258, 3, 8},
                                                            {259, 3, 1},
                                                            {262, 3, 1},
                                                            {273, 4, 0},
                                                            {277, 3, 1},
                                                            {278, 4, static_cast<std::uint32_t>(img.height)},
                                                            {279, 4, static_cast<std::uint32_t>(img.size())}}};
    const std::uint32_t data_offset = 8 + 2 + 12 * static_cast<std::uint32_t>(tags.size()) + 4;
    out.insert(out.end(), {'I', 'I'});
    put16(42);
    put32(8);
    put16(static_cast<std::uint32_t>(tags.size()));
    for (auto [tag, type, value] : tags) {
        put16(tag);
        put16(type);
        put32(1);
        if (tag == 273) value = data_offset;
        if (type == 3) {
            put16(value);
            put16(0);
        } else {
            put32(value);
        }
    }
    put32(0);
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    return out;
}

inline void write_tiff(const std::filesystem::path& path, const GrayImage& img) {
    const auto bytes = encode_tiff(img);
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("cannot write TIFF " + path.string());
}

/// Dispatches on the file signature, not the extension.
inline GrayImage read_image(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    static constexpr std::array<std::uint8_t, 8> png_sig{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (bytes.size() >= 8 && std::equal(png_sig.begin(), png_sig.end(), bytes.begin())) return read_png(path);
    if (bytes.size() >= 4 && ((bytes[0] == 'I' && bytes[1] == 'I') || (bytes[0] == 'M' && bytes[1] == 'M'))) {
        return decode_tiff(bytes, path.string());
    }
    throw DataError("unsupported image format (expected PNG or TIFF): " + path.string());
}

inline bool is_image_name(const std::filesystem::path& p) {
    auto ext = p.extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return ext == ".png" || ext == ".tif" || ext == ".tiff";
}

}  // namespace fuselab::imaging
