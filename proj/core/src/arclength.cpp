#include "forge/arclength.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "forge/errors.hpp"

namespace forge {

// The cumulative arc length is integrated spectrally: the speed |gamma'| of
// an embedded analytic curve is analytic and 1-periodic, so its Fourier
// series integrates term by term with geometrically small truncation error.
// A uniform node table plus a monotone cubic supplies inverse brackets and
// guesses; one or two Newton steps polish each inverse query.

double ArcLengthTable::speed(double theta) const { return curve_->evaluate(theta, 1).norm(); }

double ArcLengthTable::quad_segment(double a, double b) const {
    return (sigma(b) - sigma(a)) * perimeter_;
}

ArcLengthTable::ArcLengthTable(const FourierCurve& curve, int nodes) : curve_(&curve) {
    if (nodes < 64) nodes = 64;

    // Fourier coefficients of |gamma'| by FFT, doubling until the top octave
    // is negligible.
    int n = 1024;
    std::vector<double> re, im;
    for (;;) {
        re.assign(static_cast<std::size_t>(n), 0.0);
        im.assign(static_cast<std::size_t>(n), 0.0);
        for (int j = 0; j < n; ++j) re[static_cast<std::size_t>(j)] = speed(static_cast<double>(j) / n);
        detail::fft_radix2(re, im, false);
        double top = 0.0, scale = std::abs(re[0]) / n;
        for (int k = n / 4; k < n / 2; ++k)
            top = std::max(top, 2.0 * std::hypot(re[static_cast<std::size_t>(k)],
                                                 im[static_cast<std::size_t>(k)]) / n);
        if (top <= 1e-15 * std::max(scale, 1e-300) || n >= 32768) break;
        n *= 2;
    }
    perimeter_ = re[0] / n;
    if (!(perimeter_ > 0.0) || !std::isfinite(perimeter_))
        throw DegenerateTangent("arc length table: perimeter not positive");

    speed_cos_.assign(1, 1.0); // normalized mean
    speed_sin_.assign(1, 0.0);
    const double floor_mag = 1e-16;
    for (int k = 1; k < n / 2; ++k) {
        const double a = 2.0 * re[static_cast<std::size_t>(k)] / n / perimeter_;
        const double b = -2.0 * im[static_cast<std::size_t>(k)] / n / perimeter_;
        speed_cos_.push_back(a);
        speed_sin_.push_back(b);
        if (static_cast<int>(speed_cos_.size()) > 8 && std::abs(a) < floor_mag && std::abs(b) < floor_mag) {
            // keep scanning a little to avoid cutting inside a parity gap
            bool done = true;
            for (int kk = k + 1; kk < std::min(k + 8, n / 2); ++kk) {
                if (2.0 * std::hypot(re[static_cast<std::size_t>(kk)], im[static_cast<std::size_t>(kk)]) / n /
                        perimeter_ >
                    floor_mag)
                    done = false;
            }
            if (done) break;
        }
    }

    const int N = nodes;
    sig_.assign(static_cast<std::size_t>(N) + 1, 0.0);
    for (int i = 0; i <= N; ++i) sig_[static_cast<std::size_t>(i)] = sigma(static_cast<double>(i) / N);
    sig_.front() = 0.0;
    sig_.back() = 1.0;

    inv_theta_.resize(static_cast<std::size_t>(N) + 1);
    for (int i = 0; i <= N; ++i) inv_theta_[static_cast<std::size_t>(i)] = static_cast<double>(i) / N;
    slope_.assign(static_cast<std::size_t>(N) + 1, 0.0);
    std::vector<double> d(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i)
        d[static_cast<std::size_t>(i)] = (inv_theta_[static_cast<std::size_t>(i) + 1] - inv_theta_[static_cast<std::size_t>(i)]) /
                                         (sig_[static_cast<std::size_t>(i) + 1] - sig_[static_cast<std::size_t>(i)]);
    slope_[0] = d[0];
    slope_[static_cast<std::size_t>(N)] = d[static_cast<std::size_t>(N) - 1];
    for (int i = 1; i < N; ++i) {
        if (d[static_cast<std::size_t>(i) - 1] * d[static_cast<std::size_t>(i)] <= 0.0)
            slope_[static_cast<std::size_t>(i)] = 0.0;
        else {
            const double h1 = sig_[static_cast<std::size_t>(i) + 1] - sig_[static_cast<std::size_t>(i)];
            const double h0 = sig_[static_cast<std::size_t>(i)] - sig_[static_cast<std::size_t>(i) - 1];
            const double w1 = 2.0 * h1 + h0, w2 = h1 + 2.0 * h0;
            slope_[static_cast<std::size_t>(i)] =
                (w1 + w2) / (w1 / d[static_cast<std::size_t>(i) - 1] + w2 / d[static_cast<std::size_t>(i)]);
        }
    }
}

double ArcLengthTable::dsigma(double theta) const {
    double acc = 1.0;
    const double base = kTwoPi * theta;
    for (std::size_t k = 1; k < speed_cos_.size(); ++k)
        acc += speed_cos_[k] * std::cos(k * base) + speed_sin_[k] * std::sin(k * base);
    return acc;
}

double ArcLengthTable::sigma(double theta) const {
    const double k0 = std::floor(theta);
    const double t = theta - k0;
    double acc = t;
    const double base = kTwoPi * t;
    for (std::size_t k = 1; k < speed_cos_.size(); ++k) {
        const double w = kTwoPi * static_cast<double>(k);
        acc += (speed_cos_[k] * std::sin(k * base) + speed_sin_[k] * (1.0 - std::cos(k * base))) / w;
    }
    return acc + k0;
}

double ArcLengthTable::sigma_inv(double s) const {
    const double x = mod1(s);
    const int N = nodes();
    int lo = 0, hi = N;
    while (hi - lo > 1) {
        const int mid = (lo + hi) / 2;
        (sig_[static_cast<std::size_t>(mid)] <= x ? lo : hi) = mid;
    }
    const double hseg = sig_[static_cast<std::size_t>(lo) + 1] - sig_[static_cast<std::size_t>(lo)];
    const double t = (x - sig_[static_cast<std::size_t>(lo)]) / hseg;
    const double h00 = (1 + 2 * t) * (1 - t) * (1 - t);
    const double h10 = t * (1 - t) * (1 - t);
    const double h01 = t * t * (3 - 2 * t);
    const double h11 = t * t * (t - 1);
    double theta = h00 * inv_theta_[static_cast<std::size_t>(lo)] + h10 * hseg * slope_[static_cast<std::size_t>(lo)] +
                   h01 * inv_theta_[static_cast<std::size_t>(lo) + 1] +
                   h11 * hseg * slope_[static_cast<std::size_t>(lo) + 1];
    for (int it = 0; it < 3; ++it) {
        const double r = sigma(theta) - x;
        if (std::abs(r) < 1e-15) break;
        theta -= r / dsigma(theta);
    }
    return mod1(theta);
}

BoundaryTable::BoundaryTable(FourierCurve curve, int nodes)
    : curve_(std::make_shared<FourierCurve>(std::move(curve))), chart_(*curve_, nodes) {}

BoundaryTable::Jet BoundaryTable::jet(double s) const {
    const double theta = theta_of(s);
    const double L = chart_.perimeter();
    const auto g = curve_->jet(theta, 3);
    const Vec2 g1 = g[1], g2 = g[2], g3 = g[3];
    const double n1 = g1.norm();
    if (n1 < 1e-12) throw DegenerateTangent("boundary jet: |gamma'| ~ 0");

    // theta(s): dtheta/ds = L / |gamma'|, and its s-derivatives
    const double tp = L / n1;
    const double g1g2 = g1.dot(g2);
    const double tpp = -L * L * g1g2 / std::pow(n1, 4);
    const double dtpp_dtheta =
        -L * L * ((g2.squaredNorm() + g1.dot(g3)) / std::pow(n1, 4) -
                  4.0 * g1g2 * g1g2 / std::pow(n1, 6));
    const double tppp = dtpp_dtheta * tp;

    Jet out;
    out.p = g[0] / L;
    out.d1 = g1 * (tp / L);
    out.d2 = (g2 * tp * tp + g1 * tpp) / L;
    out.d3 = (g3 * tp * tp * tp + 3.0 * g2 * tp * tpp + g1 * tppp) / L;
    out.normal = rotate_cw(out.d1);
    out.K = -wedge(out.d1, out.d2);
    out.Kdot = -wedge(out.d1, out.d3);
    return out;
}

Vec2 BoundaryTable::point(double s) const { return curve_->evaluate(theta_of(s), 0) / chart_.perimeter(); }

Vec2 BoundaryTable::tangent(double s) const {
    Vec2 g1 = curve_->evaluate(theta_of(s), 1);
    return g1 / g1.norm();
}

Vec2 BoundaryTable::normal(double s) const { return rotate_cw(tangent(s)); }

double BoundaryTable::curvature(double s) const { return jet2(s).K; }

BoundaryTable::PT BoundaryTable::point_tangent(double s) const {
    const double theta = theta_of(s);
    const auto g = curve_->jet(theta, 1);
    PT out;
    out.p = g[0] / chart_.perimeter();
    out.t = g[1] / g[1].norm();
    return out;
}

BoundaryTable::Jet2 BoundaryTable::jet2(double s) const {
    const double theta = theta_of(s);
    const double L = chart_.perimeter();
    const auto g = curve_->jet(theta, 2);
    const double n1 = g[1].norm();
    if (n1 < 1e-12) throw DegenerateTangent("boundary jet2: |gamma'| ~ 0");
    Jet2 out;
    out.p = g[0] / L;
    out.d1 = g[1] / n1;
    out.K = -L * wedge(g[1], g[2]) / (n1 * n1 * n1);
    return out;
}

Vec2 PerturbedBoundary::point(double s) const {
    const auto j = base_->jet(s);
    return j.p + eta_(s, 0) * j.normal;
}

Vec2 PerturbedBoundary::d1(double s) const {
    const auto j = base_->jet(s);
    // n'(s) = -K(s) beta'(s)
    return (1.0 - eta_(s, 0) * j.K) * j.d1 + eta_(s, 1) * j.normal;
}

Vec2 PerturbedBoundary::d2(double s) const {
    const auto j = base_->jet(s);
    const double e0 = eta_(s, 0), e1 = eta_(s, 1), e2 = eta_(s, 2);
    return (j.K + e2 - e0 * j.K * j.K) * j.normal - (2.0 * e1 * j.K + e0 * j.Kdot) * j.d1;
}

double PerturbedBoundary::curvature(double s) const {
    const Vec2 v1 = d1(s), v2 = d2(s);
    const double n = v1.norm();
    if (n < 1e-12) throw DegenerateTangent("perturbed curvature: |beta_eta'| ~ 0");
    return -wedge(v1, v2) / (n * n * n);
}

FrameExpansion perturbed_frame(const BoundaryTable& base, const PerturbationView& eta,
                               double s, double eps) {
    PerturbationView scaled;
    scaled.f0 = [eta, eps](double u) { return eps * eta.f0(u); };
    scaled.f1 = [eta, eps](double u) { return eps * eta.f1(u); };
    scaled.f2 = [eta, eps](double u) { return eps * eta.f2(u); };
    scaled.compact = eta.compact;
    scaled.lo = eta.lo;
    scaled.hi = eta.hi;
    PerturbedBoundary pb(base, scaled);
    const auto j = base.jet(s);
    FrameExpansion out;
    out.speed_exact = pb.speed(s);
    out.curvature_exact = pb.curvature(s);
    if (out.curvature_exact >= 0.0)
        throw ConvexityLost("perturbed_frame: curvature lost negativity at s=" + std::to_string(s));
    out.speed_first_order = 1.0 - eps * eta.f0(s) * j.K;
    out.curvature_first_order = j.K + eps * (eta.f2(s) + eta.f0(s) * j.K * j.K);
    return out;
}

} // namespace forge
