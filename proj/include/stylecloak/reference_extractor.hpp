#ifndef STYLECLOAK_REFERENCE_EXTRACTOR_HPP
#define STYLECLOAK_REFERENCE_EXTRACTOR_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stylecloak/conv_net.hpp"
#include "stylecloak/feature_space.hpp"
#include "stylecloak/rng.hpp"

namespace stylecloak {

struct EncoderGradients {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> bias;
};

// Desk-scale encoder: bilinear resize to a native square resolution, a stack
// of stride-2 tanh convolutions, then adaptive average pooling of one chosen
// layer. Weights come from a seed or a weights file.
class ConvEncoder : public FeatureExtractor {
public:
    struct Config {
        std::string name = "desk-conv";
        int native_resolution = 32;
        std::vector<int> channels{3, 8, 16};
        int feature_layer = 0;  // 1-based; 0 selects the last layer
        int pool_grid = 4;
        double gain = 1.0;
        double bias_std = 0.1;
    };

    static constexpr std::uint64_t kReferenceSeed = 20230214;

    ConvEncoder(std::string name, int native_resolution, std::vector<ConvLayer> layers,
                int feature_layer, int pool_grid)
        : name_(std::move(name)), native_(native_resolution), layers_(std::move(layers)),
          feature_layer_(feature_layer == 0 ? static_cast<int>(layers_.size()) : feature_layer),
          pool_grid_(pool_grid) {
        if (native_ <= 0 || pool_grid_ <= 0) throw InvalidInput("invalid encoder geometry");
        if (layers_.empty()) throw InvalidInput("encoder needs at least one layer");
        if (feature_layer_ < 1 || feature_layer_ > static_cast<int>(layers_.size()))
            throw InvalidInput("feature layer out of range");
        if (layers_.front().in_channels != ArtworkImage::kChannels)
            throw InvalidInput("first layer must take 3 channels");
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            layers_[i].check();
            if (i > 0 && layers_[i].in_channels != layers_[i - 1].out_channels)
                throw InvalidInput("layer channel chain is broken");
        }
        int extent = native_;
        for (int l = 0; l < feature_layer_; ++l) extent = layers_[l].out_extent(extent);
        if (extent < pool_grid_) throw InvalidInput("pool grid larger than feature map");
    }

    static ConvEncoder from_seed(std::uint64_t seed) { return from_seed(seed, Config{}); }

    static ConvEncoder from_seed(std::uint64_t seed, const Config& cfg) {
        if (cfg.channels.size() < 2 || cfg.channels.front() != ArtworkImage::kChannels)
            throw InvalidInput("channel list must start at 3 and have at least one layer");
        Rng rng(seed);
        std::vector<ConvLayer> layers;
        for (std::size_t i = 0; i + 1 < cfg.channels.size(); ++i)
            layers.push_back(ConvLayer::random(cfg.channels[i], cfg.channels[i + 1], rng, cfg.gain,
                                               cfg.bias_std));
        return ConvEncoder(cfg.name, cfg.native_resolution, std::move(layers), cfg.feature_layer,
                           cfg.pool_grid);
    }

    // The fixed-seed extractor every test and default run uses.
    static ConvEncoder reference() { return from_seed(kReferenceSeed); }

    std::string name() const override { return name_; }
    std::size_t dim() const override {
        return static_cast<std::size_t>(layers_[feature_layer_ - 1].out_channels) * pool_grid_ *
               pool_grid_;
    }
    bool differentiable() const override { return true; }

    int native_resolution() const { return native_; }
    int feature_layer() const { return feature_layer_; }
    int pool_grid() const { return pool_grid_; }
    const std::vector<ConvLayer>& layers() const { return layers_; }
    std::vector<ConvLayer>& mutable_layers() { return layers_; }

    std::vector<double> encode(const Planes& pixels) const override {
        return run(pixels).features;
    }

    Planes backprop(const Planes& pixels, const CotangentFn& seed) const override {
        Trace t = run(pixels);
        const std::vector<double> g = seed(t.features);
        Planes grad = backward(t, g, nullptr);
        BilinearResize r(pixels.height(), pixels.width(), native_, native_);
        return r.adjoint(grad);
    }

    // Forward pass plus parameter gradients of <seed(features), features>,
    // accumulated into `acc`. Returns the features.
    std::vector<double> accumulate_param_grad(const Planes& pixels, const CotangentFn& seed,
                                              EncoderGradients& acc) const {
        Trace t = run(pixels);
        const std::vector<double> g = seed(t.features);
        backward(t, g, &acc);
        return t.features;
    }

    EncoderGradients zero_gradients() const {
        EncoderGradients g;
        for (const auto& l : layers_) {
            g.weights.emplace_back(l.weights.size(), 0.0);
            g.bias.emplace_back(l.bias.size(), 0.0);
        }
        return g;
    }

    std::uint64_t parameter_hash() const {
        std::uint64_t h = fnv1a(name_);
        for (const auto& l : layers_) {
            h = fnv1a_bytes(l.weights.data(), l.weights.size() * sizeof(double), h);
            h = fnv1a_bytes(l.bias.data(), l.bias.size() * sizeof(double), h);
        }
        return h;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["format"] = "stylecloak-encoder/1";
        j["name"] = name_;
        j["dim"] = dim();
        j["native_resolution"] = native_;
        j["feature_layer"] = feature_layer_;
        j["pool_grid"] = pool_grid_;
        j["layers"] = nlohmann::json::array();
        for (const auto& l : layers_) {
            j["layers"].push_back({{"in_channels", l.in_channels},
                                   {"out_channels", l.out_channels},
                                   {"kernel", l.kernel},
                                   {"stride", l.stride},
                                   {"pad", l.pad},
                                   {"weights", l.weights},
                                   {"bias", l.bias}});
        }
        return j;
    }

    static ConvEncoder from_json(const nlohmann::json& j) {
        try {
            if (j.at("format") != "stylecloak-encoder/1")
                throw InvalidInput("unknown weights format");
            std::vector<ConvLayer> layers;
            for (const auto& jl : j.at("layers")) {
                ConvLayer l;
                l.in_channels = jl.at("in_channels");
                l.out_channels = jl.at("out_channels");
                l.kernel = jl.at("kernel");
                l.stride = jl.at("stride");
                l.pad = jl.at("pad");
                l.weights = jl.at("weights").get<std::vector<double>>();
                l.bias = jl.at("bias").get<std::vector<double>>();
                layers.push_back(std::move(l));
            }
            ConvEncoder enc(j.at("name"), j.at("native_resolution"), std::move(layers),
                            j.at("feature_layer"), j.at("pool_grid"));
            if (enc.dim() != j.at("dim").get<std::size_t>())
                throw InvalidInput("weights file declares dim " + j.at("dim").dump() +
                                   " but layers produce " + std::to_string(enc.dim()));
            return enc;
        } catch (const nlohmann::json::exception& e) {
            throw InvalidInput(std::string("malformed weights file: ") + e.what());
        }
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw InvalidInput("cannot write weights file " + path.string());
        out << to_json().dump(1) << '\n';
    }

    static ConvEncoder load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw InvalidInput("cannot open weights file " + path.string());
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw InvalidInput(std::string("malformed weights file: ") + e.what());
        }
        return from_json(j);
    }

private:
    struct Trace {
        std::vector<Planes> inputs;  // input to each used layer
        std::vector<Planes> acts;    // activation of each used layer
        std::vector<double> features;
    };

    Trace run(const Planes& pixels) const {
        if (pixels.channels() != ArtworkImage::kChannels)
            throw InvalidInput("unsupported channel count " + std::to_string(pixels.channels()));
        BilinearResize r(pixels.height(), pixels.width(), native_, native_);
        Trace t;
        Planes cur = centre_pixels(r.forward(pixels));
        for (int l = 0; l < feature_layer_; ++l) {
            Planes next = layers_[l].forward(cur);
            t.inputs.push_back(std::move(cur));
            cur = next;
            t.acts.push_back(std::move(next));
        }
        t.features = AdaptivePool::forward(t.acts.back(), pool_grid_);
        return t;
    }

    // Returns d/d(resized pixels); optionally accumulates parameter grads.
    Planes backward(const Trace& t, const std::vector<double>& grad_features,
                    EncoderGradients* acc) const {
        const Planes& last = t.acts.back();
        Planes g = AdaptivePool::backward(grad_features, last.channels(), last.height(),
                                          last.width(), pool_grid_);
        for (int l = feature_layer_ - 1; l >= 0; --l) {
            Planes gz = ConvLayer::pre_activation_grad(t.acts[l], g);
            if (acc) layers_[l].backward_params(t.inputs[l], gz, acc->weights[l], acc->bias[l]);
            g = layers_[l].backward_input(t.inputs[l].height(), t.inputs[l].width(), gz);
        }
        for (double& v : g.data()) v *= 2.0;  // centre_pixels
        return g;
    }

    std::string name_;
    int native_;
    std::vector<ConvLayer> layers_;
    int feature_layer_;
    int pool_grid_;
};

// Means over non-overlapping block x block tiles, channel-major.
class BlockMeanExtractor : public FeatureExtractor {
public:
    BlockMeanExtractor(int width, int height, int block = 2)
        : width_(width), height_(height), block_(block) {
        if (block <= 0 || width % block != 0 || height % block != 0)
            throw InvalidInput("image size must be a multiple of the block size");
    }

    std::string name() const override { return "block-mean-" + std::to_string(block_); }
    std::size_t dim() const override {
        return static_cast<std::size_t>(ArtworkImage::kChannels) * (width_ / block_) *
               (height_ / block_);
    }
    bool differentiable() const override { return true; }

    std::vector<double> encode(const Planes& p) const override {
        check(p);
        std::vector<double> out;
        out.reserve(dim());
        const double inv = 1.0 / (block_ * block_);
        for (int c = 0; c < p.channels(); ++c)
            for (int by = 0; by < height_ / block_; ++by)
                for (int bx = 0; bx < width_ / block_; ++bx) {
                    double s = 0.0;
                    for (int y = 0; y < block_; ++y)
                        for (int x = 0; x < block_; ++x)
                            s += p.at(c, by * block_ + y, bx * block_ + x);
                    out.push_back(s * inv);
                }
        return out;
    }

    Planes backprop(const Planes& p, const CotangentFn& seed) const override {
        const std::vector<double> g = seed(encode(p));
        Planes grad(p.channels(), p.height(), p.width());
        const double inv = 1.0 / (block_ * block_);
        std::size_t k = 0;
        for (int c = 0; c < p.channels(); ++c)
            for (int by = 0; by < height_ / block_; ++by)
                for (int bx = 0; bx < width_ / block_; ++bx, ++k)
                    for (int y = 0; y < block_; ++y)
                        for (int x = 0; x < block_; ++x)
                            grad.at(c, by * block_ + y, bx * block_ + x) = g[k] * inv;
        return grad;
    }

private:
    void check(const Planes& p) const {
        if (p.channels() != ArtworkImage::kChannels)
            throw InvalidInput("unsupported channel count " + std::to_string(p.channels()));
        if (p.width() != width_ || p.height() != height_)
            throw InvalidInput("block-mean extractor configured for a different size");
    }

    int width_, height_, block_;
};

// Features are the raw pixels.
class IdentityExtractor : public FeatureExtractor {
public:
    IdentityExtractor(int width, int height) : width_(width), height_(height) {}

    std::string name() const override { return "identity"; }
    std::size_t dim() const override {
        return static_cast<std::size_t>(ArtworkImage::kChannels) * width_ * height_;
    }
    bool differentiable() const override { return true; }

    std::vector<double> encode(const Planes& p) const override {
        if (p.width() != width_ || p.height() != height_)
            throw InvalidInput("identity extractor configured for a different size");
        return p.data();
    }

    Planes backprop(const Planes& p, const CotangentFn& seed) const override {
        std::vector<double> g = seed(encode(p));
        return Planes(p.channels(), p.height(), p.width(), std::move(g));
    }

private:
    int width_, height_;
};

}  // namespace stylecloak

#endif  // STYLECLOAK_REFERENCE_EXTRACTOR_HPP
