#ifndef STYLECLOAK_FEATURE_SPACE_HPP
#define STYLECLOAK_FEATURE_SPACE_HPP

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stylecloak/errors.hpp"
#include "stylecloak/image.hpp"

namespace stylecloak {

class FeatureVector {
public:
    FeatureVector() = default;
    explicit FeatureVector(std::vector<double> values) : values_(std::move(values)) {
        if (values_.empty()) throw InvalidInput("feature vector must have positive dimension");
        for (double v : values_)
            if (!std::isfinite(v)) throw InvalidInput("feature vector has non-finite entry");
    }

    std::size_t dim() const { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    const std::vector<double>& values() const { return values_; }
    std::span<const double> span() const { return values_; }

    bool operator==(const FeatureVector&) const = default;

private:
    std::vector<double> values_;
};

// An image encoder. Implementations are immutable after construction and may
// be shared across threads.
class FeatureExtractor {
public:
    // Receives the forward features, returns d(loss)/d(features).
    using CotangentFn = std::function<std::vector<double>(std::span<const double>)>;

    virtual ~FeatureExtractor() = default;

    virtual std::string name() const = 0;
    virtual std::size_t dim() const = 0;
    virtual bool differentiable() const { return false; }

    // Raw encoder; callers go through extract() which validates.
    virtual std::vector<double> encode(const Planes& pixels) const = 0;

    // One forward pass, then the cotangent produced by `seed` is pulled back
    // to pixel space. Returns d(loss)/d(pixels) at the input resolution.
    virtual Planes backprop(const Planes& pixels, const CotangentFn& seed) const {
        (void)pixels;
        (void)seed;
        throw InvalidConfiguration("extractor '" + name() + "' is not differentiable");
    }

    virtual bool has_decoder() const { return false; }
    virtual ArtworkImage decode(const FeatureVector& features) const {
        (void)features;
        throw InvalidConfiguration("extractor '" + name() + "' has no decoder");
    }
};

inline FeatureVector extract(const FeatureExtractor& extractor, const Planes& pixels) {
    if (pixels.channels() != ArtworkImage::kChannels)
        throw InvalidInput("unsupported channel count " + std::to_string(pixels.channels()));
    std::vector<double> v = extractor.encode(pixels);
    if (v.size() != extractor.dim())
        throw ExtractorFault("extractor '" + extractor.name() + "' returned " +
                             std::to_string(v.size()) + " values, declared " +
                             std::to_string(extractor.dim()));
    for (double x : v)
        if (!std::isfinite(x))
            throw ExtractorFault("extractor '" + extractor.name() + "' produced non-finite output");
    return FeatureVector(std::move(v));
}

inline FeatureVector extract(const FeatureExtractor& extractor, const ArtworkImage& image) {
    return extract(extractor, image.pixels());
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw InvalidInput("feature dimension mismatch: " + std::to_string(a.size()) + " vs " +
                           std::to_string(b.size()));
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// Euclidean distance in feature space.
inline double feature_distance(const FeatureVector& a, const FeatureVector& b) {
    return std::sqrt(squared_distance(a.span(), b.span()));
}

inline FeatureVector centroid(std::span<const FeatureVector> features) {
    if (features.empty()) throw InvalidInput("centroid of an empty feature list");
    const std::size_t dim = features.front().dim();
    std::vector<double> mean(dim, 0.0);
    for (const auto& f : features) {
        if (f.dim() != dim) throw InvalidInput("centroid over features of mixed dimension");
        for (std::size_t i = 0; i < dim; ++i) mean[i] += f[i];
    }
    const double n = static_cast<double>(features.size());
    for (double& m : mean) m /= n;
    return FeatureVector(std::move(mean));
}

// Distance between a fixed reference image and a moving one. Cloak
// optimisation binds the original once and queries many perturbed versions.
class AnchoredDistance {
public:
    virtual ~AnchoredDistance() = default;
    virtual double value(const Planes& x) const = 0;
    // Returns the distance and writes d(distance)/dx into grad.
    virtual double value_and_grad(const Planes& x, Planes& grad) const = 0;
};

class PerceptualMetric {
public:
    virtual ~PerceptualMetric() = default;
    virtual std::string name() const = 0;
    virtual bool differentiable() const { return false; }
    virtual double distance(const Planes& a, const Planes& b) const = 0;
    virtual std::unique_ptr<AnchoredDistance> anchor(const Planes& reference) const = 0;
};

inline double perceptual_distance(const PerceptualMetric& metric, const ArtworkImage& x,
                                  const ArtworkImage& y) {
    if (!x.same_size(y))
        throw InvalidInput("perceptual distance needs images of equal size");
    return metric.distance(x.pixels(), y.pixels());
}

}  // namespace stylecloak

#endif  // STYLECLOAK_FEATURE_SPACE_HPP
