#ifndef STYLECLOAK_CLOAK_ENGINE_HPP
#define STYLECLOAK_CLOAK_ENGINE_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "stylecloak/feature_space.hpp"
#include "stylecloak/rng.hpp"
#include "stylecloak/style_transfer.hpp"
#include "stylecloak/target_selection.hpp"

namespace stylecloak {

struct CloakConfig {
    double budget = 0.05;          // p
    double penalty_weight = 200.0;  // alpha
    int steps = 500;
    double learning_rate = 0.01;
    std::uint64_t seed = 0;
    double init_noise = 0.0;       // uniform +/- init_noise start, drawn from seed
    bool alpha_ramp = false;       // double alpha every 100 steps while over budget
    double final_lr_fraction = 0.05;  // cosine decay of the step size to this fraction

    void validate() const {
        if (!(budget >= 0.0)) throw InvalidConfiguration("budget must be >= 0");
        if (!(penalty_weight > 0.0)) throw InvalidConfiguration("penalty weight must be > 0");
        if (steps < 1) throw InvalidConfiguration("steps must be >= 1");
        if (!(learning_rate > 0.0)) throw InvalidConfiguration("learning rate must be > 0");
        if (!(init_noise >= 0.0)) throw InvalidConfiguration("init noise must be >= 0");
    }
};

struct CloakResult {
    Planes delta;
    ArtworkImage cloaked_image;
    double final_perceptual = 0.0;
    double final_feature_distance = 0.0;
    double initial_feature_distance = 0.0;
    std::vector<double> loss_trace;  // objective at each step's iterate
    int best_step = 0;
    double final_penalty_weight = 0.0;
};

// elementwise clamp(x + delta, 0, 1)
inline Planes apply_delta(const Planes& x, const Planes& delta) {
    if (!x.same_shape(delta)) throw InvalidInput("perturbation shape does not match image");
    Planes out = x;
    auto& o = out.data();
    const auto& d = delta.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::clamp(o[i] + d[i], 0.0, 1.0);
    return out;
}

inline ArtworkImage apply_cloak(const ArtworkImage& x, const Planes& delta) {
    return x.with_pixels(apply_delta(x.pixels(), delta));
}

inline bool verify_budget(const ArtworkImage& x, const ArtworkImage& cloaked,
                          const PerceptualMetric& metric, double p, double slack) {
    return perceptual_distance(metric, x, cloaked) <= p + slack;
}

// Loss on the feature vector of the perturbed image: value and d/d(features).
struct FeatureLoss {
    std::function<double(std::span<const double>)> value;
    std::function<std::vector<double>(std::span<const double>)> gradient;
};

// ||f - target||^2
inline FeatureLoss squared_distance_to(std::vector<double> target) {
    auto t = std::make_shared<const std::vector<double>>(std::move(target));
    return {[t](std::span<const double> f) { return squared_distance(f, *t); },
            [t](std::span<const double> f) {
                std::vector<double> g(f.size());
                for (std::size_t i = 0; i < f.size(); ++i) g[i] = 2.0 * (f[i] - (*t)[i]);
                return g;
            }};
}

// Penalty-method objective over the pixel-space perturbation:
//   J(delta) = L(Phi(x + delta)) + alpha * max(d(x, x + delta) - p, 0)
// The clamp into [0,1] is applied by the optimiser as a projection, so J
// itself is smooth in the interior.
class CloakObjective {
public:
    CloakObjective(const ArtworkImage& x, const FeatureExtractor& extractor,
                   const PerceptualMetric& metric, FeatureLoss loss, double budget,
                   double penalty_weight)
        : x_(x.pixels()), extractor_(extractor), anchor_(metric.anchor(x.pixels())),
          loss_(std::move(loss)), budget_(budget), alpha_(penalty_weight) {}

    struct Evaluation {
        double objective = 0.0;
        double feature_loss = 0.0;
        double perceptual = 0.0;
    };

    void set_penalty_weight(double a) { alpha_ = a; }
    double penalty_weight() const { return alpha_; }

    Evaluation evaluate(const Planes& delta) const {
        Planes z = add(delta);
        Evaluation e;
        e.feature_loss = loss_.value(extract(extractor_, z).span());
        e.perceptual = anchor_->value(z);
        e.objective = e.feature_loss + alpha_ * std::max(e.perceptual - budget_, 0.0);
        return e;
    }

    Evaluation evaluate_with_gradient(const Planes& delta, Planes& grad) const {
        Planes z = add(delta);
        Evaluation e;
        grad = extractor_.backprop(z, [&](std::span<const double> f) {
            e.feature_loss = loss_.value(f);
            return loss_.gradient(f);
        });
        Planes pgrad;
        e.perceptual = anchor_->value_and_grad(z, pgrad);
        const double excess = e.perceptual - budget_;
        e.objective = e.feature_loss + alpha_ * std::max(excess, 0.0);
        if (excess > 0.0) {
            auto& g = grad.data();
            const auto& pg = pgrad.data();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += alpha_ * pg[i];
        }
        return e;
    }

    const Planes& origin() const { return x_; }

private:
    Planes add(const Planes& delta) const {
        if (!delta.same_shape(x_)) throw InvalidInput("perturbation shape does not match image");
        Planes z = x_;
        auto& zd = z.data();
        const auto& dd = delta.data();
        for (std::size_t i = 0; i < zd.size(); ++i) zd[i] += dd[i];
        return z;
    }

    Planes x_;
    const FeatureExtractor& extractor_;
    std::unique_ptr<AnchoredDistance> anchor_;
    FeatureLoss loss_;
    double budget_;
    double alpha_;
};

class Adam {
public:
    Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : m_(n, 0.0), v_(n, 0.0), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    void set_learning_rate(double lr) { lr_ = lr; }

    void step(std::span<double> params, std::span<const double> grad) {
        ++t_;
        const double c1 = 1.0 - std::pow(b1_, t_);
        const double c2 = 1.0 - std::pow(b2_, t_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = b1_ * m_[i] + (1.0 - b1_) * grad[i];
            v_[i] = b2_ * v_[i] + (1.0 - b2_) * grad[i] * grad[i];
            params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
        }
    }

private:
    std::vector<double> m_, v_;
    double lr_, b1_, b2_, eps_;
    int t_ = 0;
};

using StepCallback = std::function<void(int done, int total)>;

// Generic penalty-method driver shared by the style cloak and the baselines.
// `distance_of` maps final features to the distance reported in the result.
inline CloakResult optimize_penalized(const ArtworkImage& x, const FeatureExtractor& extractor,
                                      const PerceptualMetric& metric, const CloakConfig& config,
                                      FeatureLoss loss,
                                      const std::function<double(const FeatureVector&)>& distance_of,
                                      const StepCallback& on_step = {}) {
    config.validate();
    if (!extractor.differentiable())
        throw InvalidConfiguration("extractor '" + extractor.name() + "' is not differentiable");
    if (!metric.differentiable())
        throw InvalidConfiguration("metric '" + metric.name() + "' is not differentiable");

    CloakObjective objective(x, extractor, metric, std::move(loss), config.budget,
                             config.penalty_weight);
    const Planes& xp = x.pixels();
    Planes delta(xp.channels(), xp.height(), xp.width());
    if (config.init_noise > 0.0) {
        Rng rng(mix_seed(config.seed, 0xc10a));
        for (double& d : delta.data()) d = rng.uniform(-config.init_noise, config.init_noise);
    }
    auto project = [&](Planes& d) {
        auto& dd = d.data();
        const auto& xd = xp.data();
        for (std::size_t i = 0; i < dd.size(); ++i) dd[i] = std::clamp(dd[i], -xd[i], 1.0 - xd[i]);
    };
    project(delta);

    CloakResult result;
    result.loss_trace.reserve(config.steps);
    Adam adam(delta.size(), config.learning_rate);
    Planes best = delta;
    double best_objective = std::numeric_limits<double>::infinity();
    Planes grad;
    for (int step = 0; step < config.steps; ++step) {
        const auto e = objective.evaluate_with_gradient(delta, grad);
        if (!std::isfinite(e.objective))
            throw OptimizationDiverged("non-finite loss at step " + std::to_string(step) +
                                       "; learning rate too high?");
        for (double g : grad.data())
            if (!std::isfinite(g))
                throw OptimizationDiverged("non-finite gradient at step " + std::to_string(step));
        result.loss_trace.push_back(e.objective);
        if (e.objective < best_objective) {
            best_objective = e.objective;
            best = delta;
            result.best_step = step;
        }
        if (config.alpha_ramp && step > 0 && step % 100 == 0 && e.perceptual > config.budget) {
            objective.set_penalty_weight(objective.penalty_weight() * 2.0);
            // Objectives are not comparable across a weight change.
            best_objective = objective.evaluate(best).objective;
        }
        if (config.final_lr_fraction != 1.0) {
            const double t = static_cast<double>(step) / config.steps;
            const double f = config.final_lr_fraction +
                             (1.0 - config.final_lr_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
            adam.set_learning_rate(config.learning_rate * f);
        }
        adam.step(delta.data(), grad.data());
        project(delta);
        if (on_step) on_step(step + 1, config.steps);
    }
    const auto last = objective.evaluate(delta);
    if (std::isfinite(last.objective) && last.objective < best_objective) {
        best = delta;
        result.best_step = config.steps;
    }

    result.delta = std::move(best);
    result.cloaked_image = apply_cloak(x, result.delta);
    result.final_perceptual = perceptual_distance(metric, x, result.cloaked_image);
    result.final_feature_distance = distance_of(extract(extractor, result.cloaked_image));
    result.initial_feature_distance = distance_of(extract(extractor, x));
    result.final_penalty_weight = objective.penalty_weight();
    return result;
}

// Minimise ||Phi(guide) - Phi(x + delta)||^2 under the soft perceptual budget.
inline CloakResult optimize_cloak(const ArtworkImage& x, const ArtworkImage& guide,
                                  const FeatureExtractor& extractor, const PerceptualMetric& metric,
                                  const CloakConfig& config, const StepCallback& on_step = {}) {
    if (!x.same_size(guide)) throw InvalidInput("guide image must match artwork size");
    if (!extractor.differentiable())
        throw InvalidConfiguration("extractor '" + extractor.name() + "' is not differentiable");
    const FeatureVector target = extract(extractor, guide);
    return optimize_penalized(
        x, extractor, metric, config, squared_distance_to(target.values()),
        [&](const FeatureVector& f) { return feature_distance(f, target); }, on_step);
}

struct PortfolioItem {
    std::string image_id;
    std::optional<CloakResult> result;
    std::optional<ArtworkImage> guide;
    std::string error;

    bool ok() const { return result.has_value(); }
};

// Cloaks every artwork toward the same target. Item failures are recorded
// and do not abort the batch. Output order matches input order regardless of
// worker count.
inline std::vector<PortfolioItem> cloak_portfolio(std::span<const ArtworkImage> portfolio,
                                                  const StyleCandidate& target,
                                                  const StyleTransferBackend& backend,
                                                  const FeatureExtractor& extractor,
                                                  const PerceptualMetric& metric,
                                                  const CloakConfig& config, int workers = 1) {
    if (portfolio.empty()) throw EmptyPortfolio("portfolio is empty");
    config.validate();
    std::vector<PortfolioItem> items(portfolio.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < portfolio.size(); i = next++) {
            PortfolioItem& item = items[i];
            item.image_id = portfolio[i].id();
            try {
                ArtworkImage guide = backend.transfer(portfolio[i], target, config.seed);
                item.result = optimize_cloak(portfolio[i], guide, extractor, metric, config);
                item.guide = std::move(guide);
            } catch (const std::exception& e) {
                item.error = e.what();
            }
        }
    };
    const int n_threads = std::clamp(workers, 1, static_cast<int>(portfolio.size()));
    if (n_threads == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(work);
    }
    return items;
}

}  // namespace stylecloak

#endif  // STYLECLOAK_CLOAK_ENGINE_HPP
