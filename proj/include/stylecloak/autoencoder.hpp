#ifndef STYLECLOAK_AUTOENCODER_HPP
#define STYLECLOAK_AUTOENCODER_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "stylecloak/feature_space.hpp"
#include "stylecloak/reference_extractor.hpp"

namespace stylecloak {

// Affine map from feature space back to a resolution x resolution image.
class LinearDecoder {
public:
    LinearDecoder() = default;
    LinearDecoder(int resolution, std::size_t feature_dim)
        : resolution_(resolution), dim_(feature_dim),
          weights_(static_cast<std::size_t>(pixel_count(resolution)) * feature_dim, 0.0),
          bias_(pixel_count(resolution), 0.5) {}

    static int pixel_count(int resolution) { return ArtworkImage::kChannels * resolution * resolution; }

    // Ridge regression of pixels on features:
    //   minimise sum_i ||M f_i + b - x_i||^2 + lambda ||M||^2
    static LinearDecoder fit(std::span<const FeatureVector> features,
                             std::span<const ArtworkImage> images, int resolution,
                             double ridge = 1e-2) {
        if (features.empty() || features.size() != images.size())
            throw InvalidInput("decoder fit needs one feature vector per image");
        const auto n = static_cast<Eigen::Index>(features.size());
        const auto d = static_cast<Eigen::Index>(features.front().dim());
        const auto p = static_cast<Eigen::Index>(pixel_count(resolution));
        Eigen::MatrixXd F(n, d), X(n, p);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& f = features[static_cast<std::size_t>(i)];
            if (static_cast<Eigen::Index>(f.dim()) != d) throw InvalidInput("mixed feature dims");
            for (Eigen::Index j = 0; j < d; ++j) F(i, j) = f[static_cast<std::size_t>(j)];
            const ArtworkImage small = resize(images[static_cast<std::size_t>(i)], resolution, resolution);
            for (Eigen::Index j = 0; j < p; ++j) X(i, j) = small.pixels().data()[static_cast<std::size_t>(j)];
        }
        const Eigen::RowVectorXd f_mean = F.colwise().mean();
        const Eigen::RowVectorXd x_mean = X.colwise().mean();
        F.rowwise() -= f_mean;
        X.rowwise() -= x_mean;
        Eigen::MatrixXd gram = F.transpose() * F;
        gram.diagonal().array() += ridge * static_cast<double>(n);
        const Eigen::MatrixXd coef = gram.ldlt().solve(F.transpose() * X);  // d x p
        const Eigen::RowVectorXd b = x_mean - f_mean * coef;

        LinearDecoder dec(resolution, static_cast<std::size_t>(d));
        for (Eigen::Index r = 0; r < p; ++r) {
            for (Eigen::Index c = 0; c < d; ++c)
                dec.weights_[static_cast<std::size_t>(r * d + c)] = coef(c, r);
            dec.bias_[static_cast<std::size_t>(r)] = b(r);
        }
        return dec;
    }

    int resolution() const { return resolution_; }
    std::size_t feature_dim() const { return dim_; }
    std::vector<double>& weights() { return weights_; }
    std::vector<double>& bias() { return bias_; }
    const std::vector<double>& weights() const { return weights_; }
    const std::vector<double>& bias() const { return bias_; }

    // Unclamped output, flattened channel-major.
    std::vector<double> raw(std::span<const double> f) const {
        if (f.size() != dim_) throw InvalidInput("decoder feature dimension mismatch");
        std::vector<double> out(bias_);
        for (std::size_t r = 0; r < out.size(); ++r) {
            const double* w = weights_.data() + r * dim_;
            double s = 0.0;
            for (std::size_t c = 0; c < dim_; ++c) s += w[c] * f[c];
            out[r] += s;
        }
        return out;
    }

    ArtworkImage decode(std::span<const double> f, std::string id = {}) const {
        std::vector<double> v = raw(f);
        for (double& x : v) x = std::clamp(x, 0.0, 1.0);
        return ArtworkImage(Planes(ArtworkImage::kChannels, resolution_, resolution_, std::move(v)),
                            std::move(id));
    }

    // Mean squared pixel error of decode(f) against image (resized).
    double reconstruction_error(std::span<const double> f, const ArtworkImage& image) const {
        const ArtworkImage small = resize(image, resolution_, resolution_);
        const std::vector<double> out = raw(f);
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double d = out[i] - small.pixels().data()[i];
            s += d * d;
        }
        return s / static_cast<double>(out.size());
    }

    nlohmann::json to_json() const {
        return {{"resolution", resolution_}, {"feature_dim", dim_}, {"weights", weights_}, {"bias", bias_}};
    }

    static LinearDecoder from_json(const nlohmann::json& j) {
        LinearDecoder d(j.at("resolution").get<int>(), j.at("feature_dim").get<std::size_t>());
        d.weights_ = j.at("weights").get<std::vector<double>>();
        d.bias_ = j.at("bias").get<std::vector<double>>();
        if (d.weights_.size() != static_cast<std::size_t>(pixel_count(d.resolution_)) * d.dim_ ||
            d.bias_.size() != static_cast<std::size_t>(pixel_count(d.resolution_)))
            throw InvalidInput("decoder parameter count mismatch");
        return d;
    }

private:
    int resolution_ = 0;
    std::size_t dim_ = 0;
    std::vector<double> weights_;  // [pixel][feature]
    std::vector<double> bias_;
};

// Encoder Phi paired with decoder D, the VAE-style pair a latent generator
// trains against.
class ToyAutoencoder : public FeatureExtractor {
public:
    ToyAutoencoder(ConvEncoder encoder, LinearDecoder decoder)
        : encoder_(std::move(encoder)), decoder_(std::move(decoder)) {
        if (decoder_.feature_dim() != encoder_.dim())
            throw InvalidInput("decoder does not match encoder dimension");
    }

    // Fits the decoder to the encoder on `corpus`.
    static ToyAutoencoder fit(ConvEncoder encoder, std::span<const ArtworkImage> corpus,
                              double ridge = 1e-2) {
        std::vector<FeatureVector> feats;
        feats.reserve(corpus.size());
        for (const auto& img : corpus) feats.push_back(extract(encoder, img));
        LinearDecoder dec = LinearDecoder::fit(feats, corpus, encoder.native_resolution(), ridge);
        return ToyAutoencoder(std::move(encoder), std::move(dec));
    }

    std::string name() const override { return encoder_.name(); }
    std::size_t dim() const override { return encoder_.dim(); }
    bool differentiable() const override { return true; }
    std::vector<double> encode(const Planes& p) const override { return encoder_.encode(p); }
    Planes backprop(const Planes& p, const CotangentFn& seed) const override {
        return encoder_.backprop(p, seed);
    }
    bool has_decoder() const override { return true; }
    ArtworkImage decode(const FeatureVector& f) const override { return decoder_.decode(f.span()); }

    const ConvEncoder& encoder() const { return encoder_; }
    ConvEncoder& encoder() { return encoder_; }
    const LinearDecoder& decoder() const { return decoder_; }
    LinearDecoder& decoder() { return decoder_; }

    double reconstruction_error(const ArtworkImage& img) const {
        return decoder_.reconstruction_error(encoder_.encode(img.pixels()), img);
    }

private:
    ConvEncoder encoder_;
    LinearDecoder decoder_;
};

}  // namespace stylecloak

#endif  // STYLECLOAK_AUTOENCODER_HPP
