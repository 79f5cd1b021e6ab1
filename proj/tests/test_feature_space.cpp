#include <catch_amalgamated.hpp>

#include "stylecloak/perceptual.hpp"
#include "stylecloak/reference_extractor.hpp"
#include "test_support.hpp"

using namespace stylecloak;
using Catch::Approx;

namespace {

// Straightforward re-implementation of the metric, kept independent of the
// library's conv and normalisation code.
double naive_conv_tanh(const std::vector<double>& in, int ic_n, int h, int w, const ConvLayer& l,
                       std::vector<double>& out, int& oh, int& ow) {
    oh = (h + 2 - 3) / 2 + 1;
    ow = (w + 2 - 3) / 2 + 1;
    out.assign(static_cast<std::size_t>(l.out_channels) * oh * ow, 0.0);
    // zero-padded copy
    const int ph = h + 2, pw = w + 2;
    std::vector<double> pad(static_cast<std::size_t>(ic_n) * ph * pw, 0.0);
    for (int c = 0; c < ic_n; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) pad[(c * ph + y + 1) * pw + x + 1] = in[(c * h + y) * w + x];
    for (int oc = 0; oc < l.out_channels; ++oc)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double s = l.bias[oc];
                for (int c = 0; c < ic_n; ++c)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx)
                            s += l.weights[((oc * ic_n + c) * 3 + ky) * 3 + kx] *
                                 pad[(c * ph + oy * 2 + ky) * pw + ox * 2 + kx];
                out[(oc * oh + oy) * ow + ox] = std::tanh(s);
            }
    return 0.0;
}

double naive_metric(const Planes& a, const Planes& b, const std::vector<ConvLayer>& layers, double w0) {
    const int h = a.height(), w = a.width();
    double pixel = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) pixel += std::pow(2.0 * a.data()[i] - 2.0 * b.data()[i], 2);
    double total = w0 * pixel / (h * w);
    std::vector<double> ca, cb;
    for (double v : a.data()) ca.push_back(2.0 * v - 1.0);
    for (double v : b.data()) cb.push_back(2.0 * v - 1.0);
    int ch = 3, hh = h, ww = w;
    for (const auto& l : layers) {
        std::vector<double> na, nb;
        int oh = 0, ow = 0;
        naive_conv_tanh(ca, ch, hh, ww, l, na, oh, ow);
        naive_conv_tanh(cb, ch, hh, ww, l, nb, oh, ow);
        ch = l.out_channels;
        hh = oh;
        ww = ow;
        double term = 0.0;
        for (int p = 0; p < hh * ww; ++p) {
            double sa = 1e-10, sb = 1e-10;
            for (int c = 0; c < ch; ++c) {
                sa += na[c * hh * ww + p] * na[c * hh * ww + p];
                sb += nb[c * hh * ww + p] * nb[c * hh * ww + p];
            }
            for (int c = 0; c < ch; ++c) {
                const double d = na[c * hh * ww + p] / std::sqrt(sa) - nb[c * hh * ww + p] / std::sqrt(sb);
                term += d * d;
            }
        }
        total += term / (hh * ww);
        ca = std::move(na);
        cb = std::move(nb);
    }
    return total;
}

}  // namespace

TEST_CASE("reference encoder yields a finite vector of the declared dimension") {
    const auto enc = ConvEncoder::reference();
    const auto img = ArtworkImage::filled(64, 64, 0, 0, 0);
    const auto f = extract(enc, img);
    CHECK(f.dim() == enc.dim());
    CHECK(enc.dim() == 256);
    for (double v : f.values()) CHECK(std::isfinite(v));
}

TEST_CASE("extraction is deterministic") {
    const auto enc = ConvEncoder::reference();
    const auto img = testing::random_image(40, 24, 5);
    CHECK(extract(enc, img) == extract(enc, img));
    CHECK(extract(ConvEncoder::reference(), img) == extract(enc, img));
}

TEST_CASE("block-mean extractor matches hand-computed tile means") {
    Planes p(3, 4, 4);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) p.at(c, y, x) = (c * 16 + y * 4 + x) / 64.0;
    BlockMeanExtractor ex(4, 4, 2);
    const auto f = extract(ex, p);
    REQUIRE(f.dim() == 12);
    // channel 0 tiles: {0,1,4,5}, {2,3,6,7}, {8,9,12,13}, {10,11,14,15}
    CHECK(f[0] == Approx(2.5 / 64));
    CHECK(f[1] == Approx(4.5 / 64));
    CHECK(f[2] == Approx(10.5 / 64));
    CHECK(f[3] == Approx(12.5 / 64));
    CHECK(f[4] == Approx(18.5 / 64));
    CHECK(f[11] == Approx(44.5 / 64));
}

TEST_CASE("feature distance examples") {
    CHECK(feature_distance(FeatureVector({0, 0}), FeatureVector({3, 4})) == Approx(5.0));
    const FeatureVector a({0.25, -1.5, 3.0});
    CHECK(feature_distance(a, a) == 0.0);
    CHECK_THROWS_AS(feature_distance(FeatureVector({1.0}), FeatureVector({1.0, 2.0})), InvalidInput);
}

TEST_CASE("feature distance equals the square root of summed squares on random 128-d pairs") {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> a(128), b(128);
        for (auto& v : a) v = rng.normal() * 3.0;
        for (auto& v : b) v = rng.normal() * 3.0;
        long double s = 0.0L;
        for (int i = 0; i < 128; ++i) s += static_cast<long double>(a[i] - b[i]) * (a[i] - b[i]);
        const double expected = static_cast<double>(std::sqrt(s));
        const double got = feature_distance(FeatureVector(a), FeatureVector(b));
        CHECK(std::abs(got - expected) <= 1e-9 * expected);
        CHECK(got == feature_distance(FeatureVector(b), FeatureVector(a)));
    }
}

TEST_CASE("non-finite features are rejected") {
    CHECK_THROWS_AS(FeatureVector({1.0, std::nan("")}), InvalidInput);
    CHECK_THROWS_AS(FeatureVector(std::vector<double>{}), InvalidInput);
}

TEST_CASE("centroid oracles") {
    const FeatureVector v({1.0, -2.0, 0.5});
    std::vector<FeatureVector> one{v};
    CHECK(centroid(one) == v);
    std::vector<FeatureVector> pair{v, FeatureVector({-1.0, 2.0, -0.5})};
    const auto mid = centroid(pair);
    for (double x : mid.values()) CHECK(x == Approx(0.0).margin(1e-15));
    CHECK_THROWS_AS(centroid(std::span<const FeatureVector>{}), InvalidInput);

    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(12));
        const int d = 1 + static_cast<int>(rng.below(20));
        std::vector<FeatureVector> fs;
        std::vector<long double> sum(d, 0.0L);
        for (int i = 0; i < n; ++i) {
            std::vector<double> x(d);
            for (int k = 0; k < d; ++k) {
                x[k] = rng.normal();
                sum[k] += x[k];
            }
            fs.emplace_back(x);
        }
        const auto c = centroid(fs);
        for (int k = 0; k < d; ++k) CHECK(c[k] == Approx(static_cast<double>(sum[k] / n)).margin(1e-12));
    }
}

TEST_CASE("perceptual metric identity and symmetry") {
    const auto m = FeatureDifferenceMetric::reference();
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto a = testing::random_image(20, 16, s);
        const auto b = testing::random_image(20, 16, s + 100);
        CHECK(perceptual_distance(m, a, a) == 0.0);
        const double ab = perceptual_distance(m, a, b);
        CHECK(ab > 0.0);
        CHECK(ab == Approx(perceptual_distance(m, b, a)).epsilon(1e-12));
    }
    CHECK_THROWS_AS(perceptual_distance(m, testing::random_image(8, 8, 1), testing::random_image(9, 8, 1)),
                    InvalidInput);
}

TEST_CASE("perceptual metric agrees with an independent implementation") {
    const auto enc = ConvEncoder::reference();
    const auto m = FeatureDifferenceMetric::from_encoder(enc);
    const auto gray = ArtworkImage::filled(16, 16, 0.5, 0.5, 0.5);
    const auto lighter = ArtworkImage::filled(16, 16, 0.6, 0.6, 0.6);
    const double expected = naive_metric(gray.pixels(), lighter.pixels(), enc.layers(), 0.5);
    CHECK(perceptual_distance(m, gray, lighter) == Approx(expected).epsilon(1e-10));
    // pixel term alone: 0.5 * 3 * 0.2^2 = 0.06
    CHECK(expected > 0.06);

    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto a = testing::random_planes(12, 10, s);
        const auto b = testing::random_planes(12, 10, s + 50);
        CHECK(m.distance(a, b) == Approx(naive_metric(a, b, enc.layers(), 0.5)).epsilon(1e-10));
    }
}

TEST_CASE("anchored metric matches the two-argument form and its gradient") {
    const auto m = FeatureDifferenceMetric::reference();
    const auto ref = testing::random_planes(8, 8, 1);
    const auto anchor = m.anchor(ref);
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto x = testing::random_planes(8, 8, 10 + s);
        CHECK(anchor->value(x) == Approx(m.distance(x, ref)).epsilon(1e-12));
        Planes g;
        const double v = anchor->value_and_grad(x, g);
        CHECK(v == Approx(m.distance(x, ref)).epsilon(1e-12));
        const auto fd = testing::numeric_gradient([&](const Planes& p) { return anchor->value(p); }, x);
        CHECK(testing::relative_error(g.data(), fd) < 1e-3);
    }
}

TEST_CASE("encoder backprop matches finite differences at 8x8") {
    const auto enc = ConvEncoder::reference();
    Rng rng(9);
    std::vector<double> target(enc.dim());
    for (auto& v : target) v = 0.1 * rng.normal();
    auto loss = [&](const Planes& p) {
        return squared_distance(enc.encode(p), target);
    };
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto x = testing::random_planes(8, 8, 30 + s);
        const Planes g = enc.backprop(x, [&](std::span<const double> f) {
            std::vector<double> out(f.size());
            for (std::size_t i = 0; i < f.size(); ++i) out[i] = 2.0 * (f[i] - target[i]);
            return out;
        });
        CHECK(testing::relative_error(g.data(), testing::numeric_gradient(loss, x)) < 1e-3);
    }
}

TEST_CASE("encoder JSON round trip and the checked-in fixture") {
    const auto enc = ConvEncoder::reference();
    const auto back = ConvEncoder::from_json(enc.to_json());
    CHECK(back.parameter_hash() == enc.parameter_hash());
    const auto fixture = ConvEncoder::load(std::filesystem::path(STYLECLOAK_FIXTURE_DIR) / "reference_encoder.json");
    CHECK(fixture.parameter_hash() == enc.parameter_hash());
    const auto img = testing::random_image(32, 32, 2);
    CHECK(extract(fixture, img) == extract(enc, img));
}

TEST_CASE("out-of-range pixels are rejected") {
    Planes p(3, 4, 4, 0.5);
    p.at(1, 2, 2) = 1.5;
    CHECK_THROWS_AS(ArtworkImage(p), InvalidInput);
    p.at(1, 2, 2) = std::nan("");
    CHECK_THROWS_AS(ArtworkImage(p), InvalidInput);
}

TEST_CASE("a different seed gives a different encoder") {
    CHECK(ConvEncoder::from_seed(777).parameter_hash() != ConvEncoder::reference().parameter_hash());
}
