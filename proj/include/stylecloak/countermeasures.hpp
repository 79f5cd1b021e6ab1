#ifndef STYLECLOAK_COUNTERMEASURES_HPP
#define STYLECLOAK_COUNTERMEASURES_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/ml.hpp>

#include "stylecloak/autoencoder.hpp"
#include "stylecloak/cloak_engine.hpp"
#include "stylecloak/image_io.hpp"
#include "stylecloak/rng.hpp"

namespace stylecloak {

// ---- input transformations ----

enum class TransformKind { GaussianNoise, Jpeg, BilateralSmooth };

inline const char* transform_name(TransformKind k) {
    switch (k) {
        case TransformKind::GaussianNoise: return "gaussian_noise";
        case TransformKind::Jpeg: return "jpeg";
        case TransformKind::BilateralSmooth: return "bilateral_smooth";
    }
    return "?";
}

inline TransformKind parse_transform_kind(const std::string& s) {
    if (s == "gaussian_noise") return TransformKind::GaussianNoise;
    if (s == "jpeg") return TransformKind::Jpeg;
    if (s == "bilateral_smooth") return TransformKind::BilateralSmooth;
    throw InvalidConfiguration("unknown transform '" + s + "'");
}

struct TransformConfig {
    TransformKind kind = TransformKind::GaussianNoise;
    double sigma = 0.0;
    int quality = 75;
    int iterations = 1;
    double spatial_sigma = 3.0;
    double range_sigma = 0.1;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(sigma >= 0.0)) throw InvalidConfiguration("sigma must be >= 0");
        if (quality < 1 || quality > 100) throw InvalidConfiguration("JPEG quality must be in 1..100");
        if (iterations < 1) throw InvalidConfiguration("iterations must be >= 1");
        if (!(spatial_sigma > 0.0) || !(range_sigma > 0.0))
            throw InvalidConfiguration("bilateral sigmas must be > 0");
    }
};

// The unclamped noise field added by add_gaussian_noise for the same seed.
inline Planes gaussian_noise_field(int channels, int height, int width, double sigma,
                                   std::uint64_t seed) {
    Planes n(channels, height, width);
    Rng rng(mix_seed(seed, 0x6a55));
    for (double& v : n.data()) v = sigma * rng.normal();
    return n;
}

inline ArtworkImage add_gaussian_noise(const ArtworkImage& x, double sigma, std::uint64_t seed) {
    if (!(sigma >= 0.0)) throw InvalidInput("sigma must be >= 0");
    if (sigma == 0.0) return x;
    const Planes& p = x.pixels();
    return x.with_pixels(apply_delta(p, gaussian_noise_field(p.channels(), p.height(), p.width(), sigma, seed)));
}

inline std::vector<std::uint8_t> jpeg_bytes(const ArtworkImage& x, int quality) {
    if (quality < 1 || quality > 100) throw InvalidInput("JPEG quality must be in 1..100");
    std::vector<std::uint8_t> out;
    try {
        if (!cv::imencode(".jpg", to_mat(x, CV_8U), out, {cv::IMWRITE_JPEG_QUALITY, quality}))
            throw TransformFault("JPEG encoder refused the image");
    } catch (const cv::Exception& e) {
        throw TransformFault(std::string("JPEG encoder fault: ") + e.what());
    }
    return out;
}

inline ArtworkImage jpeg_compress(const ArtworkImage& x, int quality) {
    ArtworkImage out = decode_image(jpeg_bytes(x, quality));
    if (!out.same_size(x)) throw TransformFault("JPEG round trip changed dimensions");
    return x.with_pixels(out.pixels());
}

// Joint bilateral filter with a colour (RGB Euclidean) range kernel and a
// window of radius ceil(2 * spatial_sigma), clipped at the borders.
inline Planes bilateral_pass(const Planes& in, double spatial_sigma, double range_sigma) {
    const int r = static_cast<int>(std::ceil(2.0 * spatial_sigma));
    const int H = in.height(), W = in.width(), C = in.channels();
    std::vector<double> spatial(static_cast<std::size_t>((2 * r + 1) * (2 * r + 1)));
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
            spatial[static_cast<std::size_t>((dy + r) * (2 * r + 1) + dx + r)] =
                std::exp(-(dx * dx + dy * dy) / (2.0 * spatial_sigma * spatial_sigma));
    const double inv_range = 1.0 / (2.0 * range_sigma * range_sigma);
    Planes out(C, H, W);
    std::vector<double> acc(static_cast<std::size_t>(C));
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            std::fill(acc.begin(), acc.end(), 0.0);
            double norm = 0.0;
            for (int qy = std::max(0, y - r); qy <= std::min(H - 1, y + r); ++qy) {
                for (int qx = std::max(0, x - r); qx <= std::min(W - 1, x + r); ++qx) {
                    double d2 = 0.0;
                    for (int c = 0; c < C; ++c) {
                        const double d = in.at(c, qy, qx) - in.at(c, y, x);
                        d2 += d * d;
                    }
                    const double w =
                        spatial[static_cast<std::size_t>((qy - y + r) * (2 * r + 1) + qx - x + r)] *
                        std::exp(-d2 * inv_range);
                    norm += w;
                    for (int c = 0; c < C; ++c) acc[static_cast<std::size_t>(c)] += w * in.at(c, qy, qx);
                }
            }
            for (int c = 0; c < C; ++c) out.at(c, y, x) = acc[static_cast<std::size_t>(c)] / norm;
        }
    }
    return out;
}

inline ArtworkImage bilateral_smooth(const ArtworkImage& x, const TransformConfig& config) {
    config.validate();
    Planes p = x.pixels();
    for (int i = 0; i < config.iterations; ++i)
        p = clamp_unit(bilateral_pass(p, config.spatial_sigma, config.range_sigma));
    return x.with_pixels(std::move(p));
}

// Anisotropic total variation summed over channels.
inline double total_variation(const Planes& p) {
    double tv = 0.0;
    for (int c = 0; c < p.channels(); ++c)
        for (int y = 0; y < p.height(); ++y)
            for (int x = 0; x < p.width(); ++x) {
                if (x + 1 < p.width()) tv += std::abs(p.at(c, y, x + 1) - p.at(c, y, x));
                if (y + 1 < p.height()) tv += std::abs(p.at(c, y + 1, x) - p.at(c, y, x));
            }
    return tv;
}

inline ArtworkImage apply_transform(const ArtworkImage& x, const TransformConfig& config) {
    config.validate();
    switch (config.kind) {
        case TransformKind::GaussianNoise: return add_gaussian_noise(x, config.sigma, config.seed);
        case TransformKind::Jpeg: return jpeg_compress(x, config.quality);
        case TransformKind::BilateralSmooth: return bilateral_smooth(x, config);
    }
    throw InvalidConfiguration("unknown transform");
}

// Post-processing applied after generation (denoisers, upscalers, ...).
using ImageHook = std::function<ArtworkImage(const ArtworkImage&)>;

inline ArtworkImage apply_hooks(ArtworkImage x, std::span<const ImageHook> hooks) {
    for (const auto& h : hooks) {
        try {
            x = h(x);
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            throw TransformFault(std::string("post-processing hook failed: ") + e.what());
        }
    }
    return x;
}

// ---- robust training ----

struct ImagePair {
    ArtworkImage cloaked;
    ArtworkImage original;
};

struct RobustTrainConfig {
    int steps = 500;                      // K
    double learning_rate = 1e-3;
    int batch_size = 8;
    double reconstruction_weight = 1.0;   // lambda on the decoder reconstruction loss
    double collapse_ratio = 0.01;         // warn when feature variance falls below this share
    std::uint64_t seed = 0;

    void validate() const {
        if (steps < 0) throw InvalidConfiguration("robust training steps must be >= 0");
        if (!(learning_rate > 0.0)) throw InvalidConfiguration("learning rate must be > 0");
        if (batch_size < 1) throw InvalidConfiguration("batch size must be >= 1");
        if (!(reconstruction_weight >= 0.0)) throw InvalidConfiguration("reconstruction weight must be >= 0");
    }
};

struct CollapseWarning {
    int step = 0;
    double feature_variance = 0.0;
    double initial_variance = 0.0;
};

struct RobustTrainResult {
    ToyAutoencoder model;
    std::vector<double> loss_trace;  // minibatch pair loss + lambda * reconstruction
    double initial_pair_loss = 0.0;  // mean ||Phi(cloaked) - Phi(original)||^2 over all pairs
    double final_pair_loss = 0.0;
    std::optional<CollapseWarning> collapse;
};

inline double mean_pair_loss(const FeatureExtractor& phi, std::span<const ImagePair> pairs) {
    double s = 0.0;
    for (const auto& p : pairs)
        s += squared_distance(extract(phi, p.cloaked).span(), extract(phi, p.original).span());
    return s / static_cast<double>(pairs.size());
}

// Mean per-coordinate variance of the originals' features.
inline double feature_variance(const FeatureExtractor& phi, std::span<const ImagePair> pairs) {
    std::vector<FeatureVector> f;
    for (const auto& p : pairs) f.push_back(extract(phi, p.original));
    const FeatureVector c = centroid(f);
    double s = 0.0;
    for (const auto& v : f) s += squared_distance(v.span(), c.span());
    return s / static_cast<double>(f.size() * c.dim());
}

// Retrains encoder and decoder on
//   ||Phi(x_cloaked) - Phi(x_orig)||^2 + lambda * mean (D(Phi(x_orig)) - x_orig)^2
// Returns the result even when collapse is detected; the warning is attached.
inline RobustTrainResult robust_train_extractor(const ToyAutoencoder& start,
                                                std::span<const ImagePair> pairs,
                                                const RobustTrainConfig& config) {
    config.validate();
    if (pairs.empty()) throw InvalidInput("robust training needs image pairs");
    for (const auto& p : pairs)
        if (!p.cloaked.same_size(p.original)) throw InvalidInput("image pair sizes differ");

    RobustTrainResult out{start, {}, mean_pair_loss(start, pairs), 0.0, std::nullopt};
    if (config.steps == 0) {
        out.final_pair_loss = out.initial_pair_loss;
        return out;
    }
    ToyAutoencoder& m = out.model;
    const double var0 = feature_variance(m, pairs);

    std::size_t n_enc = 0;
    for (const auto& l : m.encoder().layers()) n_enc += l.weights.size() + l.bias.size();
    Adam adam_enc(n_enc, config.learning_rate);
    Adam adam_w(m.decoder().weights().size(), config.learning_rate);
    Adam adam_b(m.decoder().bias().size(), config.learning_rate);

    const std::size_t d = m.dim();
    const int res = m.decoder().resolution();
    const auto P = static_cast<std::size_t>(LinearDecoder::pixel_count(res));
    std::vector<std::vector<double>> small;  // originals at decoder resolution
    for (const auto& p : pairs) small.push_back(resize(p.original, res, res).pixels().data());

    Rng rng(mix_seed(config.seed, 0x2b57));
    std::vector<double> enc_params(n_enc), enc_grad(n_enc);
    std::vector<double> gw(m.decoder().weights().size()), gb(P);
    const auto batch = static_cast<std::size_t>(config.batch_size);
    for (int step = 0; step < config.steps; ++step) {
        EncoderGradients acc = m.encoder().zero_gradients();
        std::fill(gw.begin(), gw.end(), 0.0);
        std::fill(gb.begin(), gb.end(), 0.0);
        double loss = 0.0;
        for (std::size_t k = 0; k < batch; ++k) {
            const std::size_t i = rng.below(pairs.size());
            const auto& pr = pairs[i];
            const std::vector<double> fc = m.encoder().encode(pr.cloaked.pixels());
            const std::vector<double> fo = m.encoder().encode(pr.original.pixels());
            std::vector<double> diff(d);
            for (std::size_t j = 0; j < d; ++j) {
                diff[j] = fc[j] - fo[j];
                loss += diff[j] * diff[j] / static_cast<double>(batch);
            }
            // reconstruction residual
            std::vector<double> rres = m.decoder().raw(fo);
            double rec = 0.0;
            for (std::size_t q = 0; q < P; ++q) {
                rres[q] -= small[i][q];
                rec += rres[q] * rres[q];
            }
            loss += config.reconstruction_weight * rec / static_cast<double>(P * batch);
            const double rs = 2.0 * config.reconstruction_weight / static_cast<double>(P * batch);
            std::vector<double> g_fo(d, 0.0);
            for (std::size_t j = 0; j < d; ++j) g_fo[j] = -2.0 * diff[j] / static_cast<double>(batch);
            const auto& W = m.decoder().weights();
            for (std::size_t q = 0; q < P; ++q) {
                const double g = rs * rres[q];
                gb[q] += g;
                const double* wrow = W.data() + q * d;
                double* grow = gw.data() + q * d;
                for (std::size_t j = 0; j < d; ++j) {
                    grow[j] += g * fo[j];
                    g_fo[j] += g * wrow[j];
                }
            }
            std::vector<double> g_fc(d);
            for (std::size_t j = 0; j < d; ++j) g_fc[j] = 2.0 * diff[j] / static_cast<double>(batch);
            m.encoder().accumulate_param_grad(pr.cloaked.pixels(), [&](std::span<const double>) { return g_fc; }, acc);
            m.encoder().accumulate_param_grad(pr.original.pixels(), [&](std::span<const double>) { return g_fo; }, acc);
        }
        if (!std::isfinite(loss))
            throw TrainingDiverged("non-finite robust-training loss at step " + std::to_string(step));
        out.loss_trace.push_back(loss);

        std::size_t o = 0;
        for (std::size_t l = 0; l < acc.weights.size(); ++l) {
            const auto& layer = m.encoder().layers()[l];
            std::copy(layer.weights.begin(), layer.weights.end(), enc_params.begin() + static_cast<std::ptrdiff_t>(o));
            std::copy(acc.weights[l].begin(), acc.weights[l].end(), enc_grad.begin() + static_cast<std::ptrdiff_t>(o));
            o += layer.weights.size();
            std::copy(layer.bias.begin(), layer.bias.end(), enc_params.begin() + static_cast<std::ptrdiff_t>(o));
            std::copy(acc.bias[l].begin(), acc.bias[l].end(), enc_grad.begin() + static_cast<std::ptrdiff_t>(o));
            o += layer.bias.size();
        }
        adam_enc.step(enc_params, enc_grad);
        o = 0;
        for (auto& layer : m.encoder().mutable_layers()) {
            std::copy_n(enc_params.begin() + static_cast<std::ptrdiff_t>(o), layer.weights.size(), layer.weights.begin());
            o += layer.weights.size();
            std::copy_n(enc_params.begin() + static_cast<std::ptrdiff_t>(o), layer.bias.size(), layer.bias.begin());
            o += layer.bias.size();
        }
        adam_w.step(m.decoder().weights(), gw);
        adam_b.step(m.decoder().bias(), gb);

        if (!out.collapse && (step + 1) % 50 == 0) {
            const double v = feature_variance(m, pairs);
            if (v < config.collapse_ratio * var0) out.collapse = CollapseWarning{step + 1, v, var0};
        }
    }
    out.final_pair_loss = mean_pair_loss(m, pairs);
    return out;
}

// Mean ||Phi(cloaked) - Phi(original)|| over the pairs.
inline double mean_feature_gap(const FeatureExtractor& phi, std::span<const ImagePair> pairs) {
    double s = 0.0;
    for (const auto& p : pairs) s += feature_distance(extract(phi, p.cloaked), extract(phi, p.original));
    return s / static_cast<double>(pairs.size());
}

// Mean decoder reconstruction error over a set of images.
inline double mean_reconstruction_error(const ToyAutoencoder& ae, std::span<const ArtworkImage> images) {
    double s = 0.0;
    for (const auto& img : images) s += ae.reconstruction_error(img);
    return s / static_cast<double>(images.size());
}

// ---- outlier detection ----

struct OutlierConfig {
    double nu = 0.1;
    double gamma = 0.0;       // 0 selects 1 / dim on standardised features
    bool calibrate = true;    // leave-one-out threshold instead of the SVM's zero level
};

struct DetectionScore {
    int true_positive = 0;
    int false_positive = 0;
    int false_negative = 0;
    double precision = 0.0;
    double recall = 0.0;
};

struct OutlierReport {
    std::vector<bool> flags;    // true = outlier
    std::vector<double> scores; // SVM decision value, larger = more typical
    double threshold = 0.0;
    std::optional<DetectionScore> score;
};

inline DetectionScore score_detection(const std::vector<bool>& flags, const std::vector<bool>& truth) {
    if (flags.size() != truth.size()) throw InvalidInput("flag and label counts differ");
    DetectionScore s;
    for (std::size_t i = 0; i < flags.size(); ++i) {
        if (flags[i] && truth[i]) ++s.true_positive;
        else if (flags[i]) ++s.false_positive;
        else if (truth[i]) ++s.false_negative;
    }
    const int flagged = s.true_positive + s.false_positive;
    const int positives = s.true_positive + s.false_negative;
    s.precision = flagged ? static_cast<double>(s.true_positive) / flagged : 0.0;
    s.recall = positives ? static_cast<double>(s.true_positive) / positives : 0.0;
    return s;
}

namespace detail {

inline cv::Ptr<cv::ml::SVM> train_one_class(const cv::Mat& rows, double nu, double gamma) {
    auto svm = cv::ml::SVM::create();
    svm->setType(cv::ml::SVM::ONE_CLASS);
    svm->setKernel(cv::ml::SVM::RBF);
    svm->setNu(nu);
    svm->setGamma(gamma);
    svm->setTermCriteria(cv::TermCriteria(cv::TermCriteria::MAX_ITER + cv::TermCriteria::EPS, 10000, 1e-7));
    try {
        svm->train(rows, cv::ml::ROW_SAMPLE, cv::Mat::ones(rows.rows, 1, CV_32S));
    } catch (const cv::Exception& e) {
        throw DetectorDegenerate(std::string("one-class SVM failed to train: ") + e.what());
    }
    return svm;
}

inline std::vector<double> decision_values(const cv::ml::SVM& svm, const cv::Mat& rows) {
    cv::Mat raw;
    svm.predict(rows, raw, cv::ml::StatModel::RAW_OUTPUT);
    std::vector<double> out;
    for (int i = 0; i < raw.rows; ++i) out.push_back(raw.at<float>(i, 0));
    return out;
}

}  // namespace detail

// One-class SVM (RBF) over standardised embeddings of the reference art. With
// `calibrate`, the decision threshold is the nu-quantile of leave-one-out
// scores of the reference set, so about a fraction nu of in-distribution art
// is rejected.
inline OutlierReport outlier_detect(std::span<const ArtworkImage> reference,
                                    std::span<const ArtworkImage> candidates,
                                    const FeatureExtractor& embedder, const OutlierConfig& config = {},
                                    const std::vector<bool>* truth = nullptr) {
    if (reference.empty()) throw InvalidInput("outlier detector needs reference art");
    if (!(config.nu > 0.0 && config.nu <= 1.0)) throw InvalidConfiguration("nu must be in (0,1]");
    std::vector<FeatureVector> ref;
    for (const auto& img : reference) ref.push_back(extract(embedder, img));
    const FeatureVector mean = centroid(ref);
    const std::size_t d = mean.dim();
    std::vector<double> sd(d, 0.0);
    for (const auto& f : ref)
        for (std::size_t j = 0; j < d; ++j) sd[j] += (f[j] - mean[j]) * (f[j] - mean[j]);
    double total = 0.0;
    for (double& s : sd) {
        total += s;
        s = std::sqrt(s / static_cast<double>(ref.size()));
    }
    if (total <= 1e-20) throw DetectorDegenerate("reference embeddings are all identical");
    const double floor = 1e-6 * std::sqrt(total / static_cast<double>(ref.size() * d));
    const double gamma = config.gamma > 0.0 ? config.gamma : 1.0 / static_cast<double>(d);

    auto to_rows = [&](std::span<const FeatureVector> fs) {
        cv::Mat m(static_cast<int>(fs.size()), static_cast<int>(d), CV_32F);
        for (std::size_t i = 0; i < fs.size(); ++i)
            for (std::size_t j = 0; j < d; ++j)
                m.at<float>(static_cast<int>(i), static_cast<int>(j)) =
                    static_cast<float>((fs[i][j] - mean[j]) / std::max(sd[j], floor));
        return m;
    };
    const cv::Mat train = to_rows(ref);
    auto svm = detail::train_one_class(train, config.nu, gamma);

    OutlierReport rep;
    if (config.calibrate && ref.size() >= 3) {
        std::vector<double> loo;
        for (int i = 0; i < train.rows; ++i) {
            cv::Mat rest;
            if (i > 0) rest.push_back(train.rowRange(0, i));
            if (i + 1 < train.rows) rest.push_back(train.rowRange(i + 1, train.rows));
            auto m = detail::train_one_class(rest, config.nu, gamma);
            loo.push_back(detail::decision_values(*m, train.row(i)).front());
        }
        std::sort(loo.begin(), loo.end());
        const auto k = std::min(loo.size() - 1, static_cast<std::size_t>(config.nu * static_cast<double>(loo.size())));
        rep.threshold = loo[k];
    }
    if (!candidates.empty()) {
        std::vector<FeatureVector> cf;
        for (const auto& img : candidates) cf.push_back(extract(embedder, img));
        rep.scores = detail::decision_values(*svm, to_rows(cf));
        for (double v : rep.scores) rep.flags.push_back(v < rep.threshold);
    }
    if (truth) rep.score = score_detection(rep.flags, *truth);
    return rep;
}

// ---- prior cloaking baselines ----

enum class BaselineKind { Fawkes, Lowkey, Photoguard };

inline constexpr double kLowkeyInitNoise = 1e-3;

inline const char* baseline_name(BaselineKind k) {
    switch (k) {
        case BaselineKind::Fawkes: return "fawkes";
        case BaselineKind::Lowkey: return "lowkey";
        case BaselineKind::Photoguard: return "photoguard";
    }
    return "?";
}

inline BaselineKind parse_baseline_kind(const std::string& s) {
    if (s == "fawkes") return BaselineKind::Fawkes;
    if (s == "lowkey") return BaselineKind::Lowkey;
    if (s == "photoguard") return BaselineKind::Photoguard;
    throw InvalidConfiguration("unknown baseline '" + s + "'");
}

// Same penalty machinery and budget as the style cloak, different feature loss:
//   fawkes:     ||Phi(x+d) - Phi(t)||^2  for another artist's artwork t
//   lowkey:    -||Phi(x+d) - Phi(x)||^2
//   photoguard: ||Phi(x+d)||^2
// The reported feature distance is to Phi(t), Phi(x) and 0 respectively.
inline CloakResult baseline_cloak(BaselineKind kind, const ArtworkImage& x,
                                  const FeatureExtractor& extractor, const PerceptualMetric& metric,
                                  const CloakConfig& config,
                                  const ArtworkImage* fawkes_target = nullptr) {
    std::vector<double> anchor;
    FeatureLoss loss;
    switch (kind) {
        case BaselineKind::Fawkes: {
            if (!fawkes_target) throw InvalidInput("fawkes baseline needs a target artwork");
            anchor = extract(extractor, *fawkes_target).values();
            loss = squared_distance_to(anchor);
            break;
        }
        case BaselineKind::Lowkey: {
            anchor = extract(extractor, x).values();
            auto inner = squared_distance_to(anchor);
            loss = {[inner](std::span<const double> f) { return -inner.value(f); },
                    [inner](std::span<const double> f) {
                        auto g = inner.gradient(f);
                        for (double& v : g) v = -v;
                        return g;
                    }};
            break;
        }
        case BaselineKind::Photoguard: {
            anchor.assign(extractor.dim(), 0.0);
            loss = squared_distance_to(anchor);
            break;
        }
    }
    CloakConfig cfg = config;
    // -||f - f0||^2 has zero gradient at delta = 0, so lowkey needs a random start.
    if (kind == BaselineKind::Lowkey && cfg.init_noise == 0.0) cfg.init_noise = kLowkeyInitNoise;
    const FeatureVector a(anchor);
    return optimize_penalized(x, extractor, metric, cfg, std::move(loss),
                              [a](const FeatureVector& f) { return feature_distance(f, a); });
}

}  // namespace stylecloak

#endif  // STYLECLOAK_COUNTERMEASURES_HPP
