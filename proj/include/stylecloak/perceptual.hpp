#ifndef STYLECLOAK_PERCEPTUAL_HPP
#define STYLECLOAK_PERCEPTUAL_HPP

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "stylecloak/conv_net.hpp"
#include "stylecloak/feature_space.hpp"
#include "stylecloak/reference_extractor.hpp"

namespace stylecloak {

// LPIPS-shaped distance built from a conv stack run at the artwork's own
// resolution:
//
//   d(x, y) = scale * ( w_0 * mean_{h,w} || x'[h,w] - y'[h,w] ||^2
//                     + sum_l w_l * mean_{h,w} || n_l(x)[h,w] - n_l(y)[h,w] ||^2 )
//
// x' are the centred pixels (2x - 1) and n_l is layer l's activation
// unit-normalised across channels at each spatial position. Stride-2 layers
// have a null space, so the pixel term w_0 is what keeps perturbations that
// no conv layer sees from being free. Symmetric, non-negative, zero on
// identical inputs.
class FeatureDifferenceMetric : public PerceptualMetric {
public:
    static constexpr double kNormEpsilon = 1e-10;
    static constexpr double kDefaultScale = 1.0;
    static constexpr double kDefaultPixelWeight = 0.5;

    FeatureDifferenceMetric(std::vector<ConvLayer> layers, std::vector<double> layer_weights,
                            double pixel_weight = kDefaultPixelWeight,
                            double scale = kDefaultScale, std::string name = "desk-lpips")
        : layers_(std::move(layers)), weights_(std::move(layer_weights)),
          pixel_weight_(pixel_weight), scale_(scale), name_(std::move(name)) {
        if (layers_.empty()) throw InvalidInput("metric needs at least one layer");
        if (weights_.size() != layers_.size())
            throw InvalidInput("one weight per metric layer required");
        for (const auto& l : layers_) l.check();
        for (double w : weights_)
            if (!(w >= 0.0)) throw InvalidInput("metric layer weights must be non-negative");
        if (!(pixel_weight_ >= 0.0)) throw InvalidInput("pixel weight must be non-negative");
        if (!(scale_ > 0.0)) throw InvalidInput("metric scale must be positive");
    }

    // Uses every conv layer of `encoder` with equal weight.
    static FeatureDifferenceMetric from_encoder(const ConvEncoder& encoder,
                                                double pixel_weight = kDefaultPixelWeight,
                                                double scale = kDefaultScale) {
        return FeatureDifferenceMetric(encoder.layers(),
                                       std::vector<double>(encoder.layers().size(), 1.0),
                                       pixel_weight, scale);
    }

    static FeatureDifferenceMetric reference() {
        return from_encoder(ConvEncoder::reference());
    }

    std::string name() const override { return name_; }
    bool differentiable() const override { return true; }
    double scale() const { return scale_; }
    const std::vector<ConvLayer>& layers() const { return layers_; }
    const std::vector<double>& layer_weights() const { return weights_; }
    double pixel_weight() const { return pixel_weight_; }

    double distance(const Planes& a, const Planes& b) const override {
        if (!a.same_shape(b)) throw InvalidInput("perceptual distance needs equal shapes");
        const auto na = normalised(forward(a));
        const auto nb = normalised(forward(b));
        double total = pixel_weight_ * pixel_term(a, b);
        for (std::size_t l = 0; l < layers_.size(); ++l)
            total += weights_[l] * layer_term(na[l], nb[l]);
        return scale_ * total;
    }

    std::unique_ptr<AnchoredDistance> anchor(const Planes& reference) const override {
        return std::make_unique<Anchored>(*this, reference);
    }

private:
    struct Forward {
        std::vector<Planes> inputs;
        std::vector<Planes> acts;
    };

    class Anchored : public AnchoredDistance {
    public:
        Anchored(const FeatureDifferenceMetric& m, const Planes& ref)
            : m_(m), ref_(ref), ref_norm_(normalised(m.forward(ref))) {}

        double value(const Planes& x) const override {
            check(x);
            const auto nx = normalised(m_.forward(x));
            double total = m_.pixel_weight_ * pixel_term(x, ref_);
            for (std::size_t l = 0; l < m_.layers_.size(); ++l)
                total += m_.weights_[l] * layer_term(nx[l], ref_norm_[l]);
            return m_.scale_ * total;
        }

        double value_and_grad(const Planes& x, Planes& grad) const override {
            check(x);
            const Forward f = m_.forward(x);
            const std::size_t n_layers = m_.layers_.size();
            double total = 0.0;
            // Gradient flowing into each layer's activation.
            std::vector<Planes> g_act;
            g_act.reserve(n_layers);
            for (std::size_t l = 0; l < n_layers; ++l) {
                const Planes& a = f.acts[l];
                const Planes& r = ref_norm_[l];
                Planes g(a.channels(), a.height(), a.width());
                const double inv_hw = 1.0 / static_cast<double>(a.plane_size());
                const double w = m_.scale_ * m_.weights_[l];
                double term = 0.0;
                std::vector<double> n(a.channels()), gn(a.channels());
                for (int y = 0; y < a.height(); ++y) {
                    for (int xx = 0; xx < a.width(); ++xx) {
                        double ss = kNormEpsilon;
                        for (int c = 0; c < a.channels(); ++c) ss += a.at(c, y, xx) * a.at(c, y, xx);
                        const double s = std::sqrt(ss);
                        double dot = 0.0;
                        for (int c = 0; c < a.channels(); ++c) {
                            n[c] = a.at(c, y, xx) / s;
                            const double d = n[c] - r.at(c, y, xx);
                            term += d * d;
                            gn[c] = 2.0 * d * inv_hw * w;
                            dot += a.at(c, y, xx) * gn[c];
                        }
                        for (int c = 0; c < a.channels(); ++c)
                            g.at(c, y, xx) = gn[c] / s - a.at(c, y, xx) * dot / (ss * s);
                    }
                }
                total += m_.weights_[l] * term * inv_hw;
                g_act.push_back(std::move(g));
            }
            // Backprop through the stack, adding each layer's direct term.
            Planes g = std::move(g_act.back());
            for (std::size_t l = n_layers; l-- > 0;) {
                Planes gz = ConvLayer::pre_activation_grad(f.acts[l], g);
                g = m_.layers_[l].backward_input(f.inputs[l].height(), f.inputs[l].width(), gz);
                if (l > 0) {
                    auto& gd = g.data();
                    const auto& extra = g_act[l - 1].data();
                    for (std::size_t i = 0; i < gd.size(); ++i) gd[i] += extra[i];
                }
            }
            // Pixel term: d/dx of w0 * scale * mean ||2x - 2r||^2.
            const double pw = m_.scale_ * m_.pixel_weight_ * 8.0 / static_cast<double>(x.plane_size());
            auto& gd = g.data();
            const auto& xd = x.data();
            const auto& rd = ref_.data();
            for (std::size_t i = 0; i < gd.size(); ++i) gd[i] = 2.0 * gd[i] + pw * (xd[i] - rd[i]);
            total += m_.pixel_weight_ * pixel_term(x, ref_);
            grad = std::move(g);
            return m_.scale_ * total;
        }

    private:
        void check(const Planes& x) const {
            if (!x.same_shape(ref_)) throw InvalidInput("perceptual distance needs equal shapes");
        }

        const FeatureDifferenceMetric& m_;
        Planes ref_;
        std::vector<Planes> ref_norm_;
    };

    Forward forward(const Planes& x) const {
        Forward f;
        Planes cur = centre_pixels(x);
        for (const auto& layer : layers_) {
            Planes next = layer.forward(cur);
            f.inputs.push_back(std::move(cur));
            cur = next;
            f.acts.push_back(std::move(next));
        }
        return f;
    }

    static std::vector<Planes> normalised(const Forward& f) {
        std::vector<Planes> out;
        for (const Planes& a : f.acts) {
            Planes n = a;
            for (int y = 0; y < a.height(); ++y)
                for (int x = 0; x < a.width(); ++x) {
                    double ss = kNormEpsilon;
                    for (int c = 0; c < a.channels(); ++c) ss += a.at(c, y, x) * a.at(c, y, x);
                    const double s = std::sqrt(ss);
                    for (int c = 0; c < a.channels(); ++c) n.at(c, y, x) = a.at(c, y, x) / s;
                }
            out.push_back(std::move(n));
        }
        return out;
    }

    // mean over positions of the squared centred-pixel difference
    static double pixel_term(const Planes& a, const Planes& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = 2.0 * (a.data()[i] - b.data()[i]);
            s += d * d;
        }
        return s / static_cast<double>(a.plane_size());
    }

    static double layer_term(const Planes& a, const Planes& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = a.data()[i] - b.data()[i];
            s += d * d;
        }
        return s / static_cast<double>(a.plane_size());
    }

    std::vector<ConvLayer> layers_;
    std::vector<double> weights_;
    double pixel_weight_;
    double scale_;
    std::string name_;
};

}  // namespace stylecloak

#endif  // STYLECLOAK_PERCEPTUAL_HPP
