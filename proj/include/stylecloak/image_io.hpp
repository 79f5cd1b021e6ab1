#ifndef STYLECLOAK_IMAGE_IO_HPP
#define STYLECLOAK_IMAGE_IO_HPP

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include <openssl/evp.h>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "stylecloak/image.hpp"

namespace stylecloak {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFound("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
        throw IntegrityError("sha256 failed");
    std::string hex;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", md[i]);
        hex += buf;
    }
    return hex;
}

inline std::string sha256_hex(std::string_view text) {
    return sha256_hex(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

// Decoded 8/16-bit gray, BGR or BGRA into RGB planes in [0,1]. Alpha is dropped.
inline ArtworkImage from_mat(const cv::Mat& m, std::string id = {}) {
    if (m.empty()) throw InvalidInput("empty image");
    double scale = 0.0;
    switch (m.depth()) {
        case CV_8U: scale = 1.0 / 255.0; break;
        case CV_16U: scale = 1.0 / 65535.0; break;
        default: throw InvalidInput("unsupported pixel depth");
    }
    const int ch = m.channels();
    if (ch != 1 && ch != 3 && ch != 4) throw InvalidInput("unsupported channel count " + std::to_string(ch));
    cv::Mat f;
    m.convertTo(f, CV_64F, scale);
    Planes p(3, m.rows, m.cols);
    for (int y = 0; y < m.rows; ++y) {
        const double* row = f.ptr<double>(y);
        for (int x = 0; x < m.cols; ++x) {
            const double* px = row + x * ch;
            if (ch == 1) {
                for (int c = 0; c < 3; ++c) p.at(c, y, x) = px[0];
            } else {
                p.at(0, y, x) = px[2];
                p.at(1, y, x) = px[1];
                p.at(2, y, x) = px[0];
            }
        }
    }
    return ArtworkImage(std::move(p), std::move(id));
}

inline cv::Mat to_mat(const ArtworkImage& img, int depth = CV_16U) {
    const double scale = depth == CV_16U ? 65535.0 : 255.0;
    cv::Mat m(img.height(), img.width(), CV_MAKETYPE(depth, 3));
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            for (int c = 0; c < 3; ++c) {
                const double v = std::round(img.at(2 - c, y, x) * scale);
                if (depth == CV_16U)
                    m.ptr<std::uint16_t>(y)[x * 3 + c] = static_cast<std::uint16_t>(v);
                else
                    m.ptr<std::uint8_t>(y)[x * 3 + c] = static_cast<std::uint8_t>(v);
            }
        }
    }
    return m;
}

inline ArtworkImage decode_image(std::span<const std::uint8_t> bytes, std::string id = {}) {
    const cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8U, const_cast<std::uint8_t*>(bytes.data()));
    cv::Mat m;
    try {
        m = cv::imdecode(buf, cv::IMREAD_UNCHANGED);
    } catch (const cv::Exception& e) {
        throw InvalidInput(std::string("undecodable image: ") + e.what());
    }
    if (m.empty()) throw InvalidInput("undecodable image");
    return from_mat(m, std::move(id));
}

inline ArtworkImage load_image(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw NotFound("image not found: " + path.string());
    return decode_image(read_file(path), path.stem().string());
}

// 16-bit PNG keeps perturbations far below one 8-bit step.
inline std::vector<std::uint8_t> encode_png(const ArtworkImage& img, int bit_depth = 16) {
    if (bit_depth != 8 && bit_depth != 16) throw InvalidInput("PNG bit depth must be 8 or 16");
    std::vector<std::uint8_t> out;
    if (!cv::imencode(".png", to_mat(img, bit_depth == 16 ? CV_16U : CV_8U), out,
                      {cv::IMWRITE_PNG_COMPRESSION, 6}))
        throw InvalidInput("PNG encoding failed");
    return out;
}

inline void save_png(const ArtworkImage& img, const std::filesystem::path& path, int bit_depth = 16) {
    write_file(path, encode_png(img, bit_depth));
}

inline bool is_image_file(const std::filesystem::path& p) {
    std::string ext = p.extension().string();
    for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace stylecloak

#endif  // STYLECLOAK_IMAGE_IO_HPP
