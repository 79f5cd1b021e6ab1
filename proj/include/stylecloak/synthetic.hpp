#ifndef STYLECLOAK_SYNTHETIC_HPP
#define STYLECLOAK_SYNTHETIC_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "stylecloak/image.hpp"
#include "stylecloak/rng.hpp"

namespace stylecloak {

enum class Texture { Stripes, Checker, Blobs, Waves, Dots };

inline const char* texture_name(Texture t) {
    switch (t) {
        case Texture::Stripes: return "stripes";
        case Texture::Checker: return "checker";
        case Texture::Blobs: return "blobs";
        case Texture::Waves: return "waves";
        case Texture::Dots: return "dots";
    }
    return "?";
}

// A procedural "artistic style": a three-colour palette and a texture family.
struct StyleRecipe {
    std::string name;
    std::array<std::array<double, 3>, 3> palette{};
    Texture texture = Texture::Stripes;
    double min_frequency = 1.0;  // cycles per image
    double max_frequency = 2.0;
    double palette_jitter = 0.04;
    double pixel_noise = 0.02;
};

inline StyleRecipe warm_stripes_style() {
    StyleRecipe r;
    r.name = "style-a";
    r.palette = {{{0.86, 0.45, 0.20}, {0.96, 0.80, 0.42}, {0.55, 0.20, 0.12}}};
    r.texture = Texture::Stripes;
    r.min_frequency = 1.5;
    r.max_frequency = 3.0;
    return r;
}

inline StyleRecipe cool_checker_style() {
    StyleRecipe r;
    r.name = "style-b";
    r.palette = {{{0.16, 0.30, 0.62}, {0.32, 0.70, 0.80}, {0.10, 0.14, 0.32}}};
    r.texture = Texture::Checker;
    r.min_frequency = 5.0;
    r.max_frequency = 8.0;
    return r;
}

// Random recipes for candidate-target libraries.
inline std::vector<StyleRecipe> make_style_family(int count, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x5717));
    std::vector<StyleRecipe> out;
    for (int i = 0; i < count; ++i) {
        StyleRecipe r;
        r.name = "family-" + std::to_string(i);
        for (auto& colour : r.palette)
            for (double& v : colour) v = rng.uniform(0.08, 0.92);
        r.texture = static_cast<Texture>(rng.below(5));
        r.min_frequency = rng.uniform(1.0, 6.0);
        r.max_frequency = r.min_frequency + rng.uniform(0.5, 3.0);
        out.push_back(r);
    }
    return out;
}

inline ArtworkImage render_style(const StyleRecipe& style, int size, std::uint64_t seed,
                                 std::string id, std::string artist_id = {}) {
    Rng rng(seed);
    const double freq = rng.uniform(style.min_frequency, style.max_frequency);
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double phase2 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    std::array<std::array<double, 3>, 3> pal = style.palette;
    for (auto& colour : pal)
        for (double& v : colour)
            v = std::clamp(v + rng.uniform(-style.palette_jitter, style.palette_jitter), 0.0, 1.0);

    // Blob / dot centres.
    std::vector<std::array<double, 3>> spots(6);
    for (auto& s : spots) s = {rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), rng.uniform(0.08, 0.2)};

    const double ca = std::cos(angle), sa = std::sin(angle);
    const double two_pi = 2.0 * std::numbers::pi;
    Planes p(3, size, size);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double u = (x + 0.5) / size;
            const double v = (y + 0.5) / size;
            const double along = u * ca + v * sa;
            double t = 0.5;
            switch (style.texture) {
                case Texture::Stripes:
                    t = 0.5 + 0.5 * std::sin(two_pi * freq * along + phase);
                    break;
                case Texture::Checker:
                    t = 0.5 + 0.5 * std::sin(two_pi * freq * u + phase) *
                                      std::sin(two_pi * freq * v + phase2);
                    t = t > 0.5 ? 0.85 : 0.15;
                    break;
                case Texture::Blobs: {
                    double acc = 0.0;
                    for (const auto& s : spots) {
                        const double dx = u - s[0], dy = v - s[1];
                        acc += std::exp(-(dx * dx + dy * dy) / (2.0 * s[2] * s[2]));
                    }
                    t = std::min(1.0, acc);
                    break;
                }
                case Texture::Waves: {
                    const double across = -u * sa + v * ca;
                    t = 0.5 + 0.5 * std::sin(two_pi * freq * along +
                                             1.5 * std::sin(two_pi * 2.0 * across + phase2) + phase);
                    break;
                }
                case Texture::Dots: {
                    const double fu = freq * u + phase / two_pi;
                    const double fv = freq * v + phase2 / two_pi;
                    const double du = fu - std::floor(fu) - 0.5;
                    const double dv = fv - std::floor(fv) - 0.5;
                    t = (du * du + dv * dv) < 0.09 ? 0.9 : 0.1;
                    break;
                }
            }
            // Piecewise palette ramp: colour 2 -> 0 -> 1 as t goes 0 -> 1.
            std::array<double, 3> rgb{};
            if (t < 0.5) {
                const double f = t * 2.0;
                for (int c = 0; c < 3; ++c) rgb[c] = (1.0 - f) * pal[2][c] + f * pal[0][c];
            } else {
                const double f = (t - 0.5) * 2.0;
                for (int c = 0; c < 3; ++c) rgb[c] = (1.0 - f) * pal[0][c] + f * pal[1][c];
            }
            for (int c = 0; c < 3; ++c)
                p.at(c, y, x) = std::clamp(rgb[c] + rng.normal() * style.pixel_noise, 0.0, 1.0);
        }
    }
    return ArtworkImage(std::move(p), std::move(id), std::move(artist_id), style.name);
}

inline std::vector<ArtworkImage> render_style_set(const StyleRecipe& style, int count, int size,
                                                  std::uint64_t seed, const std::string& artist_id) {
    std::vector<ArtworkImage> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i)
        out.push_back(render_style(style, size, mix_seed(seed, i),
                                   style.name + "-" + std::to_string(i), artist_id));
    return out;
}

}  // namespace stylecloak

#endif  // STYLECLOAK_SYNTHETIC_HPP
