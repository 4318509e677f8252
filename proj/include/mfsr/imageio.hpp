#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

#include "mfsr/image.hpp"

namespace mfsr {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Luminance plus, for color sources, the two chroma planes (BT.601 full range).
struct ColorImage {
    Image y;
    std::optional<Image> cb;
    std::optional<Image> cr;

    bool is_color() const noexcept { return cb.has_value(); }
};

inline double rgb_to_y(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }
inline double rgb_to_cb(double r, double g, double b) {
    return 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
}
inline double rgb_to_cr(double r, double g, double b) {
    return 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
}

/// Clamp to [0, 255] and round half away from zero.
inline std::uint8_t quantize(double v) {
    return static_cast<std::uint8_t>(std::round(std::clamp(v, 0.0, 255.0)));
}

namespace detail {

inline std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& path, const void* data, std::size_t n) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw IoError("write failed: " + path.string());
}

inline std::string lower_extension(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

inline ColorImage parse_pgm(const std::vector<unsigned char>& bytes, const std::string& name) {
    std::size_t pos = 2;
    auto next_token = [&]() -> long {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
        if (pos >= bytes.size() || !std::isdigit(bytes[pos])) {
            throw IoError(name + ": malformed PGM header");
        }
        long v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            if (v > (1L << 30)) throw IoError(name + ": PGM header value too large");
            ++pos;
        }
        return v;
    };
    const long width = next_token();
    const long height = next_token();
    const long maxval = next_token();
    if (maxval != 255) {
        throw IoError(name + ": only 8-bit PGM (maxval 255) is supported, got maxval " +
                      std::to_string(maxval));
    }
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
        throw IoError(name + ": malformed PGM header");
    }
    ++pos;
    const std::size_t need = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (bytes.size() - pos < need) {
        throw IoError(name + ": truncated PGM, expected " + std::to_string(need) +
                      " pixel bytes, found " + std::to_string(bytes.size() - pos));
    }
    std::vector<double> data(need);
    for (std::size_t i = 0; i < need; ++i) data[i] = bytes[pos + i];
    return {Image(static_cast<int>(height), static_cast<int>(width), std::move(data)), {}, {}};
}

inline ColorImage read_png(const std::filesystem::path& path) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
        throw IoError(path.string() + ": " + img.message);
    }
    if (img.format & PNG_FORMAT_FLAG_LINEAR) {
        png_image_free(&img);
        throw IoError(path.string() + ": only 8-bit PNG is supported (16-bit found)");
    }
    const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
    img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
        const std::string msg = img.message;
        png_image_free(&img);
        throw IoError(path.string() + ": " + msg);
    }
    const int h = static_cast<int>(img.height);
    const int w = static_cast<int>(img.width);
    const std::size_t n = static_cast<std::size_t>(h) * w;
    if (!color) {
        std::vector<double> data(buf.begin(), buf.end());
        return {Image(h, w, std::move(data)), {}, {}};
    }
    std::vector<double> y(n), cb(n), cr(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double r = buf[3 * i];
        const double g = buf[3 * i + 1];
        const double b = buf[3 * i + 2];
        y[i] = rgb_to_y(r, g, b);
        cb[i] = rgb_to_cb(r, g, b);
        cr[i] = rgb_to_cr(r, g, b);
    }
    return {Image(h, w, std::move(y)), Image(h, w, std::move(cb)), Image(h, w, std::move(cr))};
}

inline void write_png(const std::filesystem::path& path, int height, int width, bool color,
                      const std::vector<png_byte>& buf) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(width);
    img.height = static_cast<png_uint_32>(height);
    img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&img, path.string().c_str(), 0, buf.data(), 0, nullptr)) {
        throw IoError("cannot write " + path.string() + ": " + img.message);
    }
}

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

/// Reads an 8-bit binary PGM (P5) or PNG. Color inputs keep their chroma.
inline ColorImage read_color_image(const std::filesystem::path& path) {
    const auto bytes = detail::read_bytes(path);
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') {
        return detail::parse_pgm(bytes, path.string());
    }
    static constexpr std::array<unsigned char, 8> png_sig{0x89, 'P', 'N', 'G', '\r', '\n',
                                                          0x1A, '\n'};
    if (bytes.size() >= 8 && std::equal(png_sig.begin(), png_sig.end(), bytes.begin())) {
        return detail::read_png(path);
    }
    throw IoError(path.string() + ": unsupported image format (expected P5 PGM or PNG)");
}

/// Luminance only.
inline Image read_image(const std::filesystem::path& path) { return read_color_image(path).y; }

/// Writes PNG for a .png extension, P5 PGM otherwise.
inline void write_image(const Image& img, const std::filesystem::path& path) {
    std::vector<unsigned char> pix(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) pix[i] = quantize(img.values()[i]);
    if (detail::lower_extension(path) == ".png") {
        detail::write_png(path, img.height(), img.width(), false, pix);
        return;
    }
    const std::string header = "P5\n" + std::to_string(img.width()) + " " +
                               std::to_string(img.height()) + "\n255\n";
    std::vector<unsigned char> out(header.begin(), header.end());
    out.insert(out.end(), pix.begin(), pix.end());
    detail::write_bytes(path, out.data(), out.size());
}

/// Recombines Y with chroma into an RGB PNG; falls back to write_image when
/// there is no chroma.
inline void write_color_image(const ColorImage& img, const std::filesystem::path& path) {
    if (!img.is_color()) {
        write_image(img.y, path);
        return;
    }
    if (detail::lower_extension(path) != ".png") {
        throw IoError(path.string() + ": color output requires a .png path");
    }
    const std::size_t n = img.y.size();
    std::vector<unsigned char> rgb(3 * n);
    for (std::size_t i = 0; i < n; ++i) {
        const double y = img.y.values()[i];
        const double cb = img.cb->values()[i] - 128.0;
        const double cr = img.cr->values()[i] - 128.0;
        rgb[3 * i] = quantize(y + 1.402 * cr);
        rgb[3 * i + 1] = quantize(y - 0.344136 * cb - 0.714136 * cr);
        rgb[3 * i + 2] = quantize(y + 1.772 * cb);
    }
    detail::write_png(path, img.y.height(), img.y.width(), true, rgb);
}

// ---------------------------------------------------------------------------
// Dictionary file: "MFSRDIC1", u32 dim, u32 count (little endian), then
// dim*count little-endian IEEE-754 doubles, atom by atom.

inline constexpr char kDictionaryMagic[9] = "MFSRDIC1";

inline void write_dictionary(const Dictionary& d, const std::filesystem::path& path) {
    std::vector<unsigned char> out(kDictionaryMagic, kDictionaryMagic + 8);
    detail::put_u32(out, static_cast<std::uint32_t>(d.dim()));
    detail::put_u32(out, static_cast<std::uint32_t>(d.count()));
    out.reserve(out.size() + 8 * static_cast<std::size_t>(d.dim()) * d.count());
    for (int k = 0; k < d.count(); ++k) {
        for (int i = 0; i < d.dim(); ++i) {
            const auto bits = std::bit_cast<std::uint64_t>(d.atoms()(i, k));
            for (int b = 0; b < 8; ++b) out.push_back(static_cast<unsigned char>(bits >> (8 * b)));
        }
    }
    detail::write_bytes(path, out.data(), out.size());
}

inline Dictionary read_dictionary(const std::filesystem::path& path) {
    const auto bytes = detail::read_bytes(path);
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kDictionaryMagic, 8) != 0) {
        throw IoError(path.string() + ": bad dictionary magic, expected tag \"MFSRDIC1\"");
    }
    const std::uint32_t dim = detail::get_u32(bytes.data() + 8);
    const std::uint32_t count = detail::get_u32(bytes.data() + 12);
    const std::uint64_t payload = 8ull * dim * count;
    if (bytes.size() - 16 != payload) {
        throw IoError(path.string() + ": dictionary header says " + std::to_string(dim) + "x" +
                      std::to_string(count) + " (" + std::to_string(payload) +
                      " payload bytes) but file holds " + std::to_string(bytes.size() - 16));
    }
    Eigen::MatrixXd atoms(dim, count);
    const unsigned char* p = bytes.data() + 16;
    for (std::uint32_t k = 0; k < count; ++k) {
        for (std::uint32_t i = 0; i < dim; ++i) {
            std::uint64_t bits = 0;
            for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(p[b]) << (8 * b);
            atoms(i, k) = std::bit_cast<double>(bits);
            p += 8;
        }
    }
    return Dictionary(std::move(atoms));
}

}  // namespace mfsr
