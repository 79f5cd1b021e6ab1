#ifndef STYLECLOAK_IMAGE_HPP
#define STYLECLOAK_IMAGE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stylecloak/errors.hpp"

namespace stylecloak {

// Planar (channel, row, column) tensor of doubles.
class Planes {
public:
    Planes() = default;
    Planes(int channels, int height, int width, double fill = 0.0)
        : c_(channels), h_(height), w_(width),
          data_(static_cast<std::size_t>(channels) * height * width, fill) {
        if (channels <= 0 || height <= 0 || width <= 0)
            throw InvalidInput("tensor dimensions must be positive");
    }
    Planes(int channels, int height, int width, std::vector<double> data)
        : c_(channels), h_(height), w_(width), data_(std::move(data)) {
        if (channels <= 0 || height <= 0 || width <= 0)
            throw InvalidInput("tensor dimensions must be positive");
        if (data_.size() != static_cast<std::size_t>(channels) * height * width)
            throw InvalidInput("tensor data size does not match dimensions");
    }

    int channels() const { return c_; }
    int height() const { return h_; }
    int width() const { return w_; }
    std::size_t size() const { return data_.size(); }
    std::size_t plane_size() const { return static_cast<std::size_t>(h_) * w_; }

    double& at(int c, int y, int x) { return data_[index(c, y, x)]; }
    double at(int c, int y, int x) const { return data_[index(c, y, x)]; }

    std::span<double> plane(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
    std::span<const double> plane(int c) const {
        return {data_.data() + c * plane_size(), plane_size()};
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Planes& o) const { return c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }

    bool operator==(const Planes& o) const = default;

private:
    std::size_t index(int c, int y, int x) const {
        return (static_cast<std::size_t>(c) * h_ + y) * w_ + x;
    }

    int c_ = 0;
    int h_ = 0;
    int w_ = 0;
    std::vector<double> data_;
};

// An RGB artwork with pixel values in [0, 1]. Construction rejects anything
// else; out-of-range input is never clamped silently.
class ArtworkImage {
public:
    static constexpr int kChannels = 3;

    ArtworkImage() = default;

    explicit ArtworkImage(Planes pixels, std::string id = {}, std::string artist_id = {},
                          std::optional<std::string> genre = std::nullopt)
        : pixels_(std::move(pixels)), id_(std::move(id)), artist_id_(std::move(artist_id)),
          genre_(std::move(genre)) {
        validate();
    }

    static ArtworkImage filled(int width, int height, double r, double g, double b,
                               std::string id = {}) {
        Planes p(kChannels, height, width);
        const double rgb[3] = {r, g, b};
        for (int c = 0; c < kChannels; ++c) std::ranges::fill(p.plane(c), rgb[c]);
        return ArtworkImage(std::move(p), std::move(id));
    }

    int width() const { return pixels_.width(); }
    int height() const { return pixels_.height(); }
    const Planes& pixels() const { return pixels_; }
    double at(int c, int y, int x) const { return pixels_.at(c, y, x); }

    const std::string& id() const { return id_; }
    const std::string& artist_id() const { return artist_id_; }
    const std::optional<std::string>& genre() const { return genre_; }

    void set_id(std::string id) { id_ = std::move(id); }
    void set_artist_id(std::string a) { artist_id_ = std::move(a); }
    void set_genre(std::optional<std::string> g) { genre_ = std::move(g); }

    // Copy metadata, replace pixels.
    ArtworkImage with_pixels(Planes pixels) const {
        return ArtworkImage(std::move(pixels), id_, artist_id_, genre_);
    }

    bool same_size(const ArtworkImage& o) const {
        return width() == o.width() && height() == o.height();
    }

private:
    void validate() const {
        if (pixels_.channels() != kChannels)
            throw InvalidInput("artwork must have exactly 3 channels, got " +
                               std::to_string(pixels_.channels()));
        for (double v : pixels_.data()) {
            if (!(v >= 0.0 && v <= 1.0))
                throw InvalidInput("pixel value outside [0,1]: " + std::to_string(v));
        }
    }

    Planes pixels_;
    std::string id_;
    std::string artist_id_;
    std::optional<std::string> genre_;
};

inline Planes clamp_unit(Planes p) {
    for (double& v : p.data()) v = std::clamp(v, 0.0, 1.0);
    return p;
}

// Separable bilinear resampling with half-pixel centres (no antialiasing).
// Stored as explicit taps so the adjoint needed for backprop is exact.
class BilinearResize {
public:
    BilinearResize(int in_h, int in_w, int out_h, int out_w)
        : in_h_(in_h), in_w_(in_w), out_h_(out_h), out_w_(out_w),
          rows_(taps(in_h, out_h)), cols_(taps(in_w, out_w)) {}

    bool identity() const { return in_h_ == out_h_ && in_w_ == out_w_; }

    Planes forward(const Planes& in) const {
        if (identity()) return in;
        Planes out(in.channels(), out_h_, out_w_);
        for (int c = 0; c < in.channels(); ++c) {
            for (int y = 0; y < out_h_; ++y) {
                const Tap& ty = rows_[y];
                for (int x = 0; x < out_w_; ++x) {
                    const Tap& tx = cols_[x];
                    out.at(c, y, x) = ty.w0 * (tx.w0 * in.at(c, ty.i0, tx.i0) +
                                               tx.w1 * in.at(c, ty.i0, tx.i1)) +
                                      ty.w1 * (tx.w0 * in.at(c, ty.i1, tx.i0) +
                                               tx.w1 * in.at(c, ty.i1, tx.i1));
                }
            }
        }
        return out;
    }

    Planes adjoint(const Planes& grad_out) const {
        if (identity()) return grad_out;
        Planes g(grad_out.channels(), in_h_, in_w_);
        for (int c = 0; c < grad_out.channels(); ++c) {
            for (int y = 0; y < out_h_; ++y) {
                const Tap& ty = rows_[y];
                for (int x = 0; x < out_w_; ++x) {
                    const Tap& tx = cols_[x];
                    const double v = grad_out.at(c, y, x);
                    g.at(c, ty.i0, tx.i0) += v * ty.w0 * tx.w0;
                    g.at(c, ty.i0, tx.i1) += v * ty.w0 * tx.w1;
                    g.at(c, ty.i1, tx.i0) += v * ty.w1 * tx.w0;
                    g.at(c, ty.i1, tx.i1) += v * ty.w1 * tx.w1;
                }
            }
        }
        return g;
    }

private:
    struct Tap {
        int i0, i1;
        double w0, w1;
    };

    static std::vector<Tap> taps(int in, int out) {
        std::vector<Tap> t(out);
        const double scale = static_cast<double>(in) / out;
        for (int o = 0; o < out; ++o) {
            double src = (o + 0.5) * scale - 0.5;
            src = std::clamp(src, 0.0, static_cast<double>(in - 1));
            const int i0 = static_cast<int>(std::floor(src));
            const int i1 = std::min(i0 + 1, in - 1);
            const double f = src - i0;
            t[o] = {i0, i1, 1.0 - f, f};
        }
        return t;
    }

    int in_h_, in_w_, out_h_, out_w_;
    std::vector<Tap> rows_, cols_;
};

inline ArtworkImage resize(const ArtworkImage& img, int width, int height) {
    BilinearResize r(img.height(), img.width(), height, width);
    return img.with_pixels(clamp_unit(r.forward(img.pixels())));
}

}  // namespace stylecloak

#endif  // STYLECLOAK_IMAGE_HPP
