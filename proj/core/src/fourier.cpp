#include "forge/fourier.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace forge {

FourierCurve::FourierCurve(std::vector<double> cx, std::vector<double> sx,
                           std::vector<double> cy, std::vector<double> sy)
    : cx_(std::move(cx)), sx_(std::move(sx)), cy_(std::move(cy)), sy_(std::move(sy)) {
    std::size_t n = std::max(std::max(cx_.size(), sx_.size()), std::max(cy_.size(), sy_.size()));
    n = std::max<std::size_t>(n, 1);
    cx_.resize(n, 0.0);
    sx_.resize(n, 0.0);
    cy_.resize(n, 0.0);
    sy_.resize(n, 0.0);
    degree_ = static_cast<int>(n) - 1;
    for (double v : cx_)
        if (!std::isfinite(v)) throw std::invalid_argument("FourierCurve: non-finite coefficient");
    for (double v : sx_)
        if (!std::isfinite(v)) throw std::invalid_argument("FourierCurve: non-finite coefficient");
    for (double v : cy_)
        if (!std::isfinite(v)) throw std::invalid_argument("FourierCurve: non-finite coefficient");
    for (double v : sy_)
        if (!std::isfinite(v)) throw std::invalid_argument("FourierCurve: non-finite coefficient");
}

FourierCurve FourierCurve::circle(double radius) {
    return FourierCurve({0.0, radius}, {0.0, 0.0}, {0.0, 0.0}, {0.0, radius});
}

FourierCurve FourierCurve::ellipse(double a, double b) {
    return FourierCurve({0.0, a}, {0.0, 0.0}, {0.0, 0.0}, {0.0, b});
}

std::array<Vec2, 5> FourierCurve::jet(double theta, int max_order) const {
    std::array<Vec2, 5> out;
    for (auto& v : out) v = Vec2::Zero();
    out[0] = Vec2(cx_[0], cy_[0]);
    const double base = kTwoPi * theta;
    for (int k = 1; k <= degree_; ++k) {
        const double c = std::cos(k * base);
        const double s = std::sin(k * base);
        const double w = kTwoPi * k;
        // d^m/dtheta^m of (A cos + B sin) cycles with period 4 in m.
        double pc = c, ps = s, f = 1.0;
        for (int m = 0; m <= max_order; ++m) {
            out[m].x() += f * (cx_[k] * pc + sx_[k] * ps);
            out[m].y() += f * (cy_[k] * pc + sy_[k] * ps);
            double npc = -ps, nps = pc; // derivative of (cos, sin)
            pc = npc;
            ps = nps;
            f *= w;
        }
    }
    return out;
}

Vec2 FourierCurve::evaluate(double theta, int order) const {
    if (order < 0 || order > 4) throw std::invalid_argument("FourierCurve::evaluate: order out of range");
    return jet(theta, order)[order];
}

std::string FourierCurve::to_json() const {
    nlohmann::json j;
    j["cx"] = cx_;
    j["sx"] = sx_;
    j["cy"] = cy_;
    j["sy"] = sy_;
    return j.dump();
}

FourierCurve FourierCurve::from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    return FourierCurve(j.at("cx").get<std::vector<double>>(),
                        j.value("sx", std::vector<double>{}),
                        j.at("cy").get<std::vector<double>>(),
                        j.value("sy", std::vector<double>{}));
}

namespace detail {

void fft_radix2(std::vector<double>& re, std::vector<double>& im, bool inverse) {
    const std::size_t n = re.size();
    if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft_radix2: size must be a power of 2");
    // bit reversal
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? kTwoPi : -kTwoPi) / static_cast<double>(len);
        const double wr = std::cos(ang), wi = std::sin(ang);
        for (std::size_t i = 0; i < n; i += len) {
            double cr = 1.0, ci = 0.0;
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::size_t a = i + k, b = i + k + len / 2;
                const double ur = re[a], ui = im[a];
                const double vr = re[b] * cr - im[b] * ci;
                const double vi = re[b] * ci + im[b] * cr;
                re[a] = ur + vr;
                im[a] = ui + vi;
                re[b] = ur - vr;
                im[b] = ui - vi;
                const double ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
        }
    }
    if (inverse) {
        for (std::size_t i = 0; i < n; ++i) {
            re[i] /= static_cast<double>(n);
            im[i] /= static_cast<double>(n);
        }
    }
}

} // namespace detail

FourierCurve fit_fourier(const std::function<Vec2(double)>& f, double tail_tol, int max_samples) {
    int n = 512;
    for (;;) {
        std::vector<double> xr(n), xi(n, 0.0), yr(n), yi(n, 0.0);
        for (int j = 0; j < n; ++j) {
            Vec2 p = f(static_cast<double>(j) / n);
            xr[j] = p.x();
            yr[j] = p.y();
        }
        detail::fft_radix2(xr, xi, false);
        detail::fft_radix2(yr, yi, false);

        const int kmax = n / 2 - 1;
        std::vector<double> cx(kmax + 1), sx(kmax + 1), cy(kmax + 1), sy(kmax + 1);
        cx[0] = xr[0] / n;
        cy[0] = yr[0] / n;
        sx[0] = sy[0] = 0.0;
        double top = 0.0, scale = std::max(std::abs(cx[0]), std::abs(cy[0]));
        for (int k = 1; k <= kmax; ++k) {
            cx[k] = 2.0 * xr[k] / n;
            sx[k] = -2.0 * xi[k] / n;
            cy[k] = 2.0 * yr[k] / n;
            sy[k] = -2.0 * yi[k] / n;
            double mag = std::max(std::hypot(cx[k], sx[k]), std::hypot(cy[k], sy[k]));
            scale = std::max(scale, mag);
            if (k >= n / 4) top = std::max(top, mag);
        }
        if (top <= tail_tol * std::max(scale, 1e-300) || n >= max_samples) {
            // trim negligible tail
            int keep = kmax;
            const double floor_mag = tail_tol * std::max(scale, 1e-300);
            while (keep > 1) {
                double mag = std::max(std::hypot(cx[keep], sx[keep]), std::hypot(cy[keep], sy[keep]));
                if (mag > floor_mag) break;
                --keep;
            }
            cx.resize(keep + 1);
            sx.resize(keep + 1);
            cy.resize(keep + 1);
            sy.resize(keep + 1);
            return FourierCurve(std::move(cx), std::move(sx), std::move(cy), std::move(sy));
        }
        n *= 2;
    }
}

} // namespace forge
