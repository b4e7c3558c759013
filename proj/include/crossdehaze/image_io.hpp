#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "crossdehaze/error.hpp"
#include "crossdehaze/image.hpp"

namespace crossdehaze {

enum class ImageFormat { ppm, imgf };

namespace detail {

// PPM headers separate tokens with whitespace; '#' starts a comment that
// runs to end of line.
inline std::string ppm_token(std::istream& in) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {}
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    return tok;
}

inline int parse_dim(const std::string& tok) {
    if (tok.empty()) fail(Errc::malformed_header, "missing header field");
    size_t pos = 0;
    int v = 0;
    try {
        v = std::stoi(tok, &pos);
    } catch (const std::exception&) {
        fail(Errc::malformed_header, "non-numeric header field '" + tok + "'");
    }
    if (pos != tok.size() || v <= 0) fail(Errc::malformed_header, "bad header field '" + tok + "'");
    return v;
}

inline void put_u32_le(std::ostream& out, uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b, 4);
}

inline uint32_t get_u32_le(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) fail(Errc::truncated_payload, "unexpected end of float payload");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace detail

/// Loads a PPM-P6 (8-bit, maxval 255) or IMGF (32-bit float) image,
/// dispatching on the file magic. 8-bit samples map to [0,1] by v/255.
inline Image load_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::file_not_found, "cannot open " + path.string());

    char magic[6] = {};
    in.read(magic, 2);
    if (!in) fail(Errc::malformed_header, "file too short for a magic number: " + path.string());

    if (magic[0] == 'P' && magic[1] == '6') {
        int w = detail::parse_dim(detail::ppm_token(in));
        int h = detail::parse_dim(detail::ppm_token(in));
        int maxval = detail::parse_dim(detail::ppm_token(in));
        if (maxval != 255) fail(Errc::unsupported_format, "PPM maxval must be 255, got " + std::to_string(maxval));
        // a single whitespace byte terminates the header
        Image img(w, h);
        std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
        for (int y = 0; y < h; ++y) {
            in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
            if (!in) fail(Errc::truncated_payload, "PPM pixel payload truncated: " + path.string());
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c)
                    img.at(c, y, x) = static_cast<float>(row[static_cast<size_t>(x) * 3 + c]) / 255.0f;
        }
        return img;
    }

    if (magic[0] == 'P' && (magic[1] == '4' || magic[1] == '5')) {
        fail(Errc::unsupported_format, "not a 3-channel image (PBM/PGM): " + path.string());
    }

    in.read(magic + 2, 4);
    if (in && std::memcmp(magic, "IMGF1\n", 6) == 0) {
        std::string line;
        if (!std::getline(in, line)) fail(Errc::malformed_header, "IMGF missing dimension line");
        const size_t space = line.find(' ');
        if (space == std::string::npos) fail(Errc::malformed_header, "IMGF dimension line needs 'width height'");
        int w = detail::parse_dim(line.substr(0, space));
        int h = detail::parse_dim(line.substr(space + 1));
        Image img(w, h);
        for (size_t i = 0; i < img.samples(); ++i) {
            uint32_t bits = detail::get_u32_le(in);
            float f;
            std::memcpy(&f, &bits, 4);
            img.data[i] = f;
        }
        return img;
    }

    fail(Errc::unsupported_format, "unrecognized image magic in " + path.string());
}

/// Writes an image. PPM quantizes by round(v*255), half away from zero,
/// clamped to [0,255]; IMGF stores the float samples losslessly.
inline void save_image(const Image& img, const std::filesystem::path& path, ImageFormat format) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::io_failure, "cannot write " + path.string());

    if (format == ImageFormat::ppm) {
        out << "P6\n" << img.width << " " << img.height << "\n255\n";
        std::vector<unsigned char> row(static_cast<size_t>(img.width) * 3);
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x)
                for (int c = 0; c < 3; ++c) {
                    long q = std::lround(static_cast<double>(img.at(c, y, x)) * 255.0);
                    row[static_cast<size_t>(x) * 3 + c] = static_cast<unsigned char>(std::clamp(q, 0L, 255L));
                }
            out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
        }
    } else {
        out << "IMGF1\n" << img.width << " " << img.height << "\n";
        for (size_t i = 0; i < img.samples(); ++i) {
            uint32_t bits;
            std::memcpy(&bits, &img.data[i], 4);
            detail::put_u32_le(out, bits);
        }
    }
    if (!out) fail(Errc::io_failure, "write failed for " + path.string());
}

}  // namespace crossdehaze
