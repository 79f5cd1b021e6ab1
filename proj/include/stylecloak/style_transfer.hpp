#ifndef STYLECLOAK_STYLE_TRANSFER_HPP
#define STYLECLOAK_STYLE_TRANSFER_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "stylecloak/image.hpp"
#include "stylecloak/target_selection.hpp"

namespace stylecloak {

class StyleTransferBackend {
public:
    virtual ~StyleTransferBackend() = default;
    virtual std::string name() const = 0;
    virtual bool deterministic() const = 0;
    virtual bool supports_prompts() const { return false; }

    virtual ArtworkImage transfer(const ArtworkImage& x, const StyleCandidate& target,
                                  std::uint64_t seed) const = 0;

    virtual ArtworkImage transfer_prompt(const ArtworkImage& x, const std::string& prompt,
                                         std::uint64_t seed) const {
        (void)x;
        (void)seed;
        throw TransferFault("backend '" + name() + "' does not accept text targets ('" + prompt +
                            "')");
    }
};

struct ChannelStats {
    std::array<double, 3> mean{};
    std::array<double, 3> stddev{};
};

// Population mean / std per channel, pooled over every pixel of every image.
inline ChannelStats channel_stats(std::span<const ArtworkImage> images) {
    ChannelStats s;
    std::array<double, 3> sum{}, sum_sq{};
    double n = 0.0;
    for (const auto& img : images) {
        for (int c = 0; c < 3; ++c) {
            for (double v : img.pixels().plane(c)) {
                sum[c] += v;
                sum_sq[c] += v * v;
            }
        }
        n += static_cast<double>(img.pixels().plane_size());
    }
    if (n == 0.0) throw InvalidInput("channel statistics of an empty image set");
    for (int c = 0; c < 3; ++c) {
        s.mean[c] = sum[c] / n;
        s.stddev[c] = std::sqrt(std::max(0.0, sum_sq[c] / n - s.mean[c] * s.mean[c]));
    }
    return s;
}

inline ChannelStats channel_stats(const ArtworkImage& img) {
    return channel_stats(std::span<const ArtworkImage>(&img, 1));
}

// Reference backend: per-channel mean/std matching against the target's
// exemplar pool. `strength` in [0,1] blends toward the original.
class ColorStatisticsTransfer : public StyleTransferBackend {
public:
    static constexpr double kFlatStd = 1e-8;

    explicit ColorStatisticsTransfer(double strength = 1.0) : strength_(strength) {
        if (!(strength >= 0.0 && strength <= 1.0))
            throw InvalidInput("transfer strength must be in [0,1]");
    }

    std::string name() const override { return "color-stats"; }
    bool deterministic() const override { return true; }
    double strength() const { return strength_; }

    ArtworkImage transfer(const ArtworkImage& x, const StyleCandidate& target,
                          std::uint64_t seed) const override {
        (void)seed;
        if (target.exemplars.empty())
            throw TransferFault("target '" + target.style_id + "' has no exemplar images");
        return apply(x, channel_stats(target.exemplars));
    }

    ArtworkImage apply(const ArtworkImage& x, const ChannelStats& target) const {
        const ChannelStats src = channel_stats(x);
        Planes out = x.pixels();
        for (int c = 0; c < 3; ++c) {
            const double gain =
                src.stddev[c] > kFlatStd ? target.stddev[c] / src.stddev[c] : 0.0;
            for (double& v : out.plane(c)) {
                const double moved = target.mean[c] + (v - src.mean[c]) * gain;
                v = std::clamp((1.0 - strength_) * v + strength_ * moved, 0.0, 1.0);
            }
        }
        return x.with_pixels(std::move(out));
    }

private:
    double strength_;
};

}  // namespace stylecloak

#endif  // STYLECLOAK_STYLE_TRANSFER_HPP
