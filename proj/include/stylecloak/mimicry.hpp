#ifndef STYLECLOAK_MIMICRY_HPP
#define STYLECLOAK_MIMICRY_HPP

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stylecloak/autoencoder.hpp"
#include "stylecloak/cloak_engine.hpp"
#include "stylecloak/rng.hpp"

namespace stylecloak {

struct CaptionedArtwork {
    ArtworkImage image;
    std::string caption;
};

class Captioner {
public:
    virtual ~Captioner() = default;
    virtual std::string name() const = 0;
    // Empty optional means the captioner could not describe the image.
    virtual std::optional<std::string> describe(const ArtworkImage& image) const = 0;
};

// Template captioner driven by image metadata. "{id}" and "{genre}" are
// substituted; anything else is copied verbatim.
class StubCaptioner : public Captioner {
public:
    explicit StubCaptioner(std::string templ = "an artwork titled {id}") : templ_(std::move(templ)) {}

    std::string name() const override { return "stub"; }

    std::optional<std::string> describe(const ArtworkImage& image) const override {
        std::string out = templ_;
        replace(out, "{id}", image.id());
        replace(out, "{genre}", image.genre().value_or("art"));
        return out;
    }

private:
    static void replace(std::string& s, const std::string& key, const std::string& value) {
        for (auto pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos + value.size()))
            s.replace(pos, key.size(), value);
    }

    std::string templ_;
};

struct CaptionWarning {
    std::string image_id;
    std::string reason;
};

inline std::vector<CaptionedArtwork> build_caption_dataset(std::span<const ArtworkImage> art,
                                                           const std::string& artist_name,
                                                           const Captioner& captioner,
                                                           std::vector<CaptionWarning>* warnings = nullptr) {
    if (artist_name.empty()) throw InvalidInput("artist name must not be empty");
    std::vector<CaptionedArtwork> out;
    out.reserve(art.size());
    for (const auto& img : art) {
        std::optional<std::string> text;
        std::string reason;
        try {
            text = captioner.describe(img);
            if (!text || text->empty()) reason = "captioner returned nothing";
        } catch (const std::exception& e) {
            reason = e.what();
        }
        if (!reason.empty()) {
            if (warnings) warnings->push_back({img.id(), reason});
            continue;
        }
        out.push_back({img, *text + " by " + artist_name});
    }
    return out;
}

template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_train_test(std::span<const T> dataset, double ratio,
                                                           std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw InvalidInput("split ratio must be in (0,1)");
    if (dataset.size() < 2) throw InvalidInput("need at least two items to split");
    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(mix_seed(seed, 0x5b11));
    rng.shuffle(order);
    const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(dataset.size())));
    std::pair<std::vector<T>, std::vector<T>> out;
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < n_train ? out.first : out.second).push_back(dataset[order[i]]);
    return out;
}

template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_train_test(const std::vector<T>& dataset, double ratio,
                                                           std::uint64_t seed) {
    return split_train_test(std::span<const T>(dataset), ratio, seed);
}

// Bag-of-tokens caption embedding: each lower-cased word seeds a Gaussian
// direction, the sum is normalised to unit length.
inline std::vector<double> embed_caption(const std::string& caption, std::size_t dim) {
    std::vector<double> e(dim, 0.0);
    std::istringstream in(caption);
    std::string word;
    while (in >> word) {
        for (char& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        Rng rng(fnv1a(word));
        for (double& v : e) v += rng.normal();
    }
    double n = 0.0;
    for (double v : e) n += v * v;
    n = std::sqrt(n);
    if (n > 0.0)
        for (double& v : e) v /= n;
    return e;
}

struct FineTuneConfig {
    int steps = 3000;
    double learning_rate = 1e-2;
    int batch_size = 32;
    std::uint64_t seed = 0;

    void validate() const {
        if (steps < 0) throw InvalidConfiguration("fine-tune steps must be >= 0");
        if (!(learning_rate > 0.0)) throw InvalidConfiguration("fine-tune learning rate must be > 0");
        if (batch_size < 1) throw InvalidConfiguration("batch size must be >= 1");
    }
};

class GeneratorModel {
public:
    virtual ~GeneratorModel() = default;
    virtual std::string name() const = 0;
    virtual FeatureVector condition(const std::string& caption) const = 0;
    virtual ArtworkImage generate(const std::string& caption, std::uint64_t seed) const = 0;
    virtual std::uint64_t parameter_hash() const = 0;
};

// Caption-conditioned latent generator:
//   f(c, s) = W e(c) + b + sigma * z_s,   image = D(f)
// where e is the caption embedding, z_s a seeded standard normal and D the
// decoder paired with the feature extractor. Fine-tuning fits W and b so that
// f(c) approaches Phi(x) for each training pair (c, x).
class ToyGenerator : public GeneratorModel {
public:
    static constexpr std::size_t kEmbeddingDim = 64;

    ToyGenerator(std::shared_ptr<const ToyAutoencoder> autoencoder, std::vector<double> bias,
                 std::vector<double> noise_scale)
        : ae_(std::move(autoencoder)), bias_(std::move(bias)), noise_(std::move(noise_scale)),
          weights_(ae_->dim() * kEmbeddingDim, 0.0) {
        if (bias_.size() != ae_->dim() || noise_.size() != ae_->dim())
            throw InvalidInput("generator parameters do not match feature dimension");
    }

    // The generic starting point: bias at the corpus feature mean, per-coordinate
    // sampling spread at `temperature` times the corpus feature std.
    static ToyGenerator pretrained(std::shared_ptr<const ToyAutoencoder> autoencoder,
                                   std::span<const ArtworkImage> generic_corpus,
                                   double temperature = 0.25) {
        if (generic_corpus.empty()) throw InvalidInput("generic corpus is empty");
        std::vector<FeatureVector> feats;
        for (const auto& img : generic_corpus) feats.push_back(extract(*autoencoder, img));
        const FeatureVector mean = centroid(feats);
        std::vector<double> spread(mean.dim(), 0.0);
        for (const auto& f : feats)
            for (std::size_t i = 0; i < spread.size(); ++i) spread[i] += (f[i] - mean[i]) * (f[i] - mean[i]);
        for (double& s : spread) s = temperature * std::sqrt(s / static_cast<double>(feats.size()));
        return ToyGenerator(std::move(autoencoder), mean.values(), std::move(spread));
    }

    std::string name() const override { return "toy-latent"; }
    const ToyAutoencoder& autoencoder() const { return *ae_; }
    std::shared_ptr<const ToyAutoencoder> autoencoder_ptr() const { return ae_; }
    std::size_t dim() const { return bias_.size(); }

    std::vector<double>& weights() { return weights_; }
    std::vector<double>& bias() { return bias_; }
    const std::vector<double>& weights() const { return weights_; }
    const std::vector<double>& bias() const { return bias_; }
    const std::vector<double>& noise_scale() const { return noise_; }

    std::vector<double> predict(std::span<const double> embedding) const {
        std::vector<double> f(bias_);
        for (std::size_t r = 0; r < f.size(); ++r) {
            const double* w = weights_.data() + r * kEmbeddingDim;
            double s = 0.0;
            for (std::size_t c = 0; c < kEmbeddingDim; ++c) s += w[c] * embedding[c];
            f[r] += s;
        }
        return f;
    }

    FeatureVector condition(const std::string& caption) const override {
        return FeatureVector(predict(embed_caption(caption, kEmbeddingDim)));
    }

    FeatureVector sample_features(const std::string& caption, std::uint64_t seed) const {
        std::vector<double> f = condition(caption).values();
        Rng rng(mix_seed(fnv1a(caption), seed));
        for (std::size_t i = 0; i < f.size(); ++i) f[i] += noise_[i] * rng.normal();
        return FeatureVector(std::move(f));
    }

    ArtworkImage generate(const std::string& caption, std::uint64_t seed) const override {
        ArtworkImage img = ae_->decoder().decode(sample_features(caption, seed).span());
        img.set_id(caption + "#" + std::to_string(seed));
        return img;
    }

    std::uint64_t parameter_hash() const override {
        std::uint64_t h = fnv1a(name());
        h = fnv1a_bytes(weights_.data(), weights_.size() * sizeof(double), h);
        h = fnv1a_bytes(bias_.data(), bias_.size() * sizeof(double), h);
        return fnv1a_bytes(noise_.data(), noise_.size() * sizeof(double), h);
    }

    nlohmann::json to_json() const {
        return {{"format", "stylecloak-generator/1"}, {"weights", weights_}, {"bias", bias_},
                {"noise_scale", noise_}};
    }

    void load_parameters(const nlohmann::json& j) {
        if (j.value("format", "") != "stylecloak-generator/1")
            throw InvalidInput("not a generator parameter file");
        auto w = j.at("weights").get<std::vector<double>>();
        auto b = j.at("bias").get<std::vector<double>>();
        auto n = j.at("noise_scale").get<std::vector<double>>();
        if (w.size() != weights_.size() || b.size() != bias_.size() || n.size() != noise_.size())
            throw InvalidInput("generator parameter shape mismatch");
        weights_ = std::move(w);
        bias_ = std::move(b);
        noise_ = std::move(n);
    }

private:
    std::shared_ptr<const ToyAutoencoder> ae_;
    std::vector<double> bias_;
    std::vector<double> noise_;
    std::vector<double> weights_;  // [feature][embedding]
};

struct FineTuneResult {
    ToyGenerator model;
    std::vector<double> loss_trace;  // mean squared feature error of each minibatch
};

// Mean over a set of pairs of ||W e + b - Phi(x)||^2 / dim.
inline double generator_loss(const ToyGenerator& model, std::span<const CaptionedArtwork> data) {
    if (data.empty()) throw InvalidInput("loss over an empty dataset");
    double total = 0.0;
    for (const auto& item : data) {
        const FeatureVector target = extract(model.autoencoder(), item.image);
        total += squared_distance(model.condition(item.caption).span(), target.span()) /
                 static_cast<double>(model.dim());
    }
    return total / static_cast<double>(data.size());
}

inline FineTuneResult finetune(const ToyGenerator& model, std::span<const CaptionedArtwork> train,
                               const FineTuneConfig& config) {
    config.validate();
    if (train.empty()) throw InvalidInput("fine-tuning needs at least one training pair");
    FineTuneResult out{model, {}};
    if (config.steps == 0) return out;

    const std::size_t d = model.dim();
    constexpr std::size_t e_dim = ToyGenerator::kEmbeddingDim;
    std::vector<std::vector<double>> emb, target;
    for (const auto& item : train) {
        emb.push_back(embed_caption(item.caption, e_dim));
        target.push_back(extract(model.autoencoder(), item.image).values());
    }
    ToyGenerator& m = out.model;
    Adam adam_w(m.weights().size(), config.learning_rate);
    Adam adam_b(m.bias().size(), config.learning_rate);
    std::vector<double> gw(m.weights().size()), gb(d);
    Rng rng(mix_seed(config.seed, 0xf17e));
    const auto batch = static_cast<std::size_t>(config.batch_size);
    out.loss_trace.reserve(static_cast<std::size_t>(config.steps));
    for (int step = 0; step < config.steps; ++step) {
        std::fill(gw.begin(), gw.end(), 0.0);
        std::fill(gb.begin(), gb.end(), 0.0);
        double loss = 0.0;
        const double scale = 2.0 / static_cast<double>(batch * d);
        for (std::size_t k = 0; k < batch; ++k) {
            const std::size_t i = rng.below(train.size());
            const std::vector<double> f = m.predict(emb[i]);
            for (std::size_t r = 0; r < d; ++r) {
                const double diff = f[r] - target[i][r];
                loss += diff * diff;
                const double g = scale * diff;
                gb[r] += g;
                double* row = gw.data() + r * e_dim;
                for (std::size_t c = 0; c < e_dim; ++c) row[c] += g * emb[i][c];
            }
        }
        loss /= static_cast<double>(batch * d);
        if (!std::isfinite(loss))
            throw TrainingDiverged("non-finite fine-tune loss at step " + std::to_string(step));
        out.loss_trace.push_back(loss);
        adam_w.step(m.weights(), gw);
        adam_b.step(m.bias(), gb);
    }
    return out;
}

struct GeneratedArtwork {
    std::string caption;
    std::uint64_t seed = 0;
    std::optional<ArtworkImage> image;
    std::string error;
};

// Seeds 0 .. seeds_per_caption-1 for every caption.
inline std::vector<GeneratedArtwork> generate_mimicry(const GeneratorModel& model,
                                                      std::span<const std::string> captions,
                                                      int seeds_per_caption) {
    if (seeds_per_caption < 0) throw InvalidInput("seeds per caption must be >= 0");
    std::vector<GeneratedArtwork> out;
    for (const auto& caption : captions) {
        for (int s = 0; s < seeds_per_caption; ++s) {
            GeneratedArtwork g{caption, static_cast<std::uint64_t>(s), std::nullopt, {}};
            try {
                g.image = model.generate(caption, g.seed);
            } catch (const std::exception& e) {
                g.error = e.what();
            }
            out.push_back(std::move(g));
        }
    }
    return out;
}

}  // namespace stylecloak

#endif  // STYLECLOAK_MIMICRY_HPP
