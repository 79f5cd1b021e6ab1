#ifndef STYLECLOAK_CONV_NET_HPP
#define STYLECLOAK_CONV_NET_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "stylecloak/errors.hpp"
#include "stylecloak/image.hpp"
#include "stylecloak/rng.hpp"

namespace stylecloak {

// Square-kernel strided convolution followed by tanh. tanh keeps the whole
// stack smooth so finite-difference gradient checks are meaningful.
struct ConvLayer {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 3;
    int stride = 2;
    int pad = 1;
    std::vector<double> weights;  // [out][in][ky][kx]
    std::vector<double> bias;     // [out]

    int out_extent(int n) const { return (n + 2 * pad - kernel) / stride + 1; }

    std::size_t weight_index(int oc, int ic, int ky, int kx) const {
        return ((static_cast<std::size_t>(oc) * in_channels + ic) * kernel + ky) * kernel + kx;
    }

    void check() const {
        if (in_channels <= 0 || out_channels <= 0 || kernel <= 0 || stride <= 0 || pad < 0)
            throw InvalidInput("conv layer has invalid geometry");
        if (weights.size() != static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel)
            throw InvalidInput("conv layer weight count mismatch");
        if (bias.size() != static_cast<std::size_t>(out_channels))
            throw InvalidInput("conv layer bias count mismatch");
    }

    Planes forward(const Planes& in) const {
        if (in.channels() != in_channels) throw InvalidInput("conv layer input channel mismatch");
        const int oh = out_extent(in.height());
        const int ow = out_extent(in.width());
        if (oh <= 0 || ow <= 0) throw InvalidInput("input too small for conv layer");
        Planes z(out_channels, oh, ow);
        for (int oc = 0; oc < out_channels; ++oc) {
            auto zp = z.plane(oc);
            std::fill(zp.begin(), zp.end(), bias[oc]);
            for (int ic = 0; ic < in_channels; ++ic) {
                auto ip = in.plane(ic);
                for (int ky = 0; ky < kernel; ++ky) {
                    for (int kx = 0; kx < kernel; ++kx) {
                        const double w = weights[weight_index(oc, ic, ky, kx)];
                        for (int oy = 0; oy < oh; ++oy) {
                            const int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= in.height()) continue;
                            const double* row = ip.data() + static_cast<std::size_t>(iy) * in.width();
                            double* out = zp.data() + static_cast<std::size_t>(oy) * ow;
                            for (int ox = 0; ox < ow; ++ox) {
                                const int ix = ox * stride - pad + kx;
                                if (ix < 0 || ix >= in.width()) continue;
                                out[ox] += w * row[ix];
                            }
                        }
                    }
                }
            }
            for (double& v : zp) v = std::tanh(v);
        }
        return z;
    }

    // d(loss)/d(pre-activation) from d(loss)/d(activation).
    static Planes pre_activation_grad(const Planes& act, const Planes& grad_act) {
        Planes gz = grad_act;
        auto& g = gz.data();
        const auto& a = act.data();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - a[i] * a[i];
        return gz;
    }

    Planes backward_input(int in_h, int in_w, const Planes& gz) const {
        Planes gin(in_channels, in_h, in_w);
        const int oh = gz.height();
        const int ow = gz.width();
        for (int oc = 0; oc < out_channels; ++oc) {
            auto gp = gz.plane(oc);
            for (int ic = 0; ic < in_channels; ++ic) {
                auto ip = gin.plane(ic);
                for (int ky = 0; ky < kernel; ++ky) {
                    for (int kx = 0; kx < kernel; ++kx) {
                        const double w = weights[weight_index(oc, ic, ky, kx)];
                        for (int oy = 0; oy < oh; ++oy) {
                            const int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= in_h) continue;
                            double* row = ip.data() + static_cast<std::size_t>(iy) * in_w;
                            const double* g = gp.data() + static_cast<std::size_t>(oy) * ow;
                            for (int ox = 0; ox < ow; ++ox) {
                                const int ix = ox * stride - pad + kx;
                                if (ix < 0 || ix >= in_w) continue;
                                row[ix] += w * g[ox];
                            }
                        }
                    }
                }
            }
        }
        return gin;
    }

    // Accumulates parameter gradients into gw / gb.
    void backward_params(const Planes& in, const Planes& gz, std::vector<double>& gw,
                         std::vector<double>& gb) const {
        const int oh = gz.height();
        const int ow = gz.width();
        for (int oc = 0; oc < out_channels; ++oc) {
            auto gp = gz.plane(oc);
            double s = 0.0;
            for (double v : gp) s += v;
            gb[oc] += s;
            for (int ic = 0; ic < in_channels; ++ic) {
                auto ip = in.plane(ic);
                for (int ky = 0; ky < kernel; ++ky) {
                    for (int kx = 0; kx < kernel; ++kx) {
                        double acc = 0.0;
                        for (int oy = 0; oy < oh; ++oy) {
                            const int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= in.height()) continue;
                            const double* row = ip.data() + static_cast<std::size_t>(iy) * in.width();
                            const double* g = gp.data() + static_cast<std::size_t>(oy) * ow;
                            for (int ox = 0; ox < ow; ++ox) {
                                const int ix = ox * stride - pad + kx;
                                if (ix < 0 || ix >= in.width()) continue;
                                acc += g[ox] * row[ix];
                            }
                        }
                        gw[weight_index(oc, ic, ky, kx)] += acc;
                    }
                }
            }
        }
    }

    static ConvLayer random(int in_c, int out_c, Rng& rng, double gain, double bias_std) {
        ConvLayer l;
        l.in_channels = in_c;
        l.out_channels = out_c;
        const double std = gain / std::sqrt(static_cast<double>(in_c * l.kernel * l.kernel));
        l.weights.resize(static_cast<std::size_t>(out_c) * in_c * l.kernel * l.kernel);
        for (double& w : l.weights) w = rng.normal() * std;
        l.bias.resize(out_c);
        for (double& b : l.bias) b = rng.normal() * bias_std;
        return l;
    }
};

// Maps [0,1] pixels to [-1,1] before the first convolution.
inline Planes centre_pixels(const Planes& p) {
    Planes out = p;
    for (double& v : out.data()) v = 2.0 * v - 1.0;
    return out;
}

// Adaptive average pooling to a grid x grid map, flattened channel-major.
struct AdaptivePool {
    static std::pair<int, int> bounds(int i, int n, int grid) {
        const int lo = (i * n) / grid;
        const int hi = ((i + 1) * n + grid - 1) / grid;
        return {lo, hi};
    }

    static std::vector<double> forward(const Planes& a, int grid) {
        std::vector<double> out(static_cast<std::size_t>(a.channels()) * grid * grid);
        std::size_t k = 0;
        for (int c = 0; c < a.channels(); ++c)
            for (int gy = 0; gy < grid; ++gy)
                for (int gx = 0; gx < grid; ++gx) {
                    const auto [y0, y1] = bounds(gy, a.height(), grid);
                    const auto [x0, x1] = bounds(gx, a.width(), grid);
                    double s = 0.0;
                    for (int y = y0; y < y1; ++y)
                        for (int x = x0; x < x1; ++x) s += a.at(c, y, x);
                    out[k++] = s / ((y1 - y0) * (x1 - x0));
                }
        return out;
    }

    static Planes backward(const std::vector<double>& g, int channels, int h, int w, int grid) {
        Planes ga(channels, h, w);
        std::size_t k = 0;
        for (int c = 0; c < channels; ++c)
            for (int gy = 0; gy < grid; ++gy)
                for (int gx = 0; gx < grid; ++gx) {
                    const auto [y0, y1] = bounds(gy, h, grid);
                    const auto [x0, x1] = bounds(gx, w, grid);
                    const double v = g[k++] / ((y1 - y0) * (x1 - x0));
                    for (int y = y0; y < y1; ++y)
                        for (int x = x0; x < x1; ++x) ga.at(c, y, x) += v;
                }
        return ga;
    }
};

}  // namespace stylecloak

#endif  // STYLECLOAK_CONV_NET_HPP
