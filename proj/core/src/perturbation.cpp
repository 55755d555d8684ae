#include "forge/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "forge/fourier.hpp"

namespace forge {

NormalPerturbation::NormalPerturbation(double c0, std::vector<double> ck, std::vector<double> sk, double r)
    : c0_(c0), ck_(std::move(ck)), sk_(std::move(sk)), r_(r) {
    if (r < 0) throw std::invalid_argument("NormalPerturbation: r must be >= 0");
    std::size_t n = std::max<std::size_t>(std::max(ck_.size(), sk_.size()), 1);
    ck_.resize(n, 0.0);
    sk_.resize(n, 0.0);
    ck_[0] = 0.0;
    sk_[0] = 0.0;
}

double NormalPerturbation::derivative(double s, int order) const {
    if (order < 0 || order > 3) throw std::invalid_argument("NormalPerturbation: order out of range");
    double acc = (order == 0) ? c0_ : 0.0;
    const double base = kTwoPi * s;
    for (std::size_t k = 1; k < ck_.size(); ++k) {
        double pc = std::cos(k * base), ps = std::sin(k * base);
        const double w = kTwoPi * static_cast<double>(k);
        double f = 1.0;
        for (int m = 0; m < order; ++m) {
            const double npc = -ps, nps = pc;
            pc = npc;
            ps = nps;
            f *= w;
        }
        acc += f * (ck_[k] * pc + sk_[k] * ps);
    }
    return acc;
}

double NormalPerturbation::strip_norm(double r) const {
    double acc = std::abs(c0_);
    for (std::size_t k = 1; k < ck_.size(); ++k)
        acc += (std::abs(ck_[k]) + std::abs(sk_[k])) * std::exp(kTwoPi * static_cast<double>(k) * r);
    return acc;
}

NormalPerturbation NormalPerturbation::scaled(double factor) const {
    NormalPerturbation out = *this;
    out.c0_ *= factor;
    for (auto& v : out.ck_) v *= factor;
    for (auto& v : out.sk_) v *= factor;
    return out;
}

NormalPerturbation NormalPerturbation::truncated(int degree) const {
    if (degree < 0) degree = 0;
    NormalPerturbation out = *this;
    if (static_cast<int>(out.ck_.size()) - 1 > degree) {
        out.ck_.resize(degree + 1);
        out.sk_.resize(degree + 1);
    }
    return out;
}

NormalPerturbation NormalPerturbation::operator+(const NormalPerturbation& other) const {
    std::size_t n = std::max(ck_.size(), other.ck_.size());
    std::vector<double> ck(n, 0.0), sk(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        if (k < ck_.size()) {
            ck[k] += ck_[k];
            sk[k] += sk_[k];
        }
        if (k < other.ck_.size()) {
            ck[k] += other.ck_[k];
            sk[k] += other.sk_[k];
        }
    }
    return NormalPerturbation(c0_ + other.c0_, std::move(ck), std::move(sk), std::max(r_, other.r_));
}

bool NormalPerturbation::is_zero() const {
    if (c0_ != 0.0) return false;
    for (double v : ck_)
        if (v != 0.0) return false;
    for (double v : sk_)
        if (v != 0.0) return false;
    return true;
}

std::string NormalPerturbation::to_json() const {
    nlohmann::json j;
    j["c0"] = c0_;
    j["ck"] = ck_;
    j["sk"] = sk_;
    j["r"] = r_;
    return j.dump();
}

NormalPerturbation NormalPerturbation::from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    return NormalPerturbation(j.value("c0", 0.0),
                              j.value("ck", std::vector<double>{}),
                              j.value("sk", std::vector<double>{}),
                              j.value("r", 0.1));
}

NormalPerturbation NormalPerturbation::fit(const std::function<double(double)>& f, double r,
                                           int degree, int samples) {
    int n = 1;
    while (n < samples) n <<= 1;
    std::vector<double> re(n), im(n, 0.0);
    for (int j = 0; j < n; ++j) re[j] = f(static_cast<double>(j) / n);
    detail::fft_radix2(re, im, false);
    degree = std::min(degree, n / 2 - 1);
    std::vector<double> ck(degree + 1, 0.0), sk(degree + 1, 0.0);
    const double c0 = re[0] / n;
    for (int k = 1; k <= degree; ++k) {
        ck[k] = 2.0 * re[k] / n;
        sk[k] = -2.0 * im[k] / n;
    }
    return NormalPerturbation(c0, std::move(ck), std::move(sk), r);
}

bool PerturbationView::supports(double s) const {
    if (!compact) return true;
    const double span = hi - lo;
    double d = mod1(s - lo);
    return d <= span;
}

PerturbationView view_of(const NormalPerturbation& p) {
    PerturbationView v;
    v.f0 = [p](double s) { return p.derivative(s, 0); };
    v.f1 = [p](double s) { return p.derivative(s, 1); };
    v.f2 = [p](double s) { return p.derivative(s, 2); };
    v.compact = false;
    return v;
}

namespace {

// quintic smoothstep and derivatives on [0,1]
inline double smooth5(double t, int order) {
    switch (order) {
        case 0: return t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
        case 1: return 30.0 * t * t * (1.0 + t * (-2.0 + t));
        default: return 60.0 * t * (1.0 + t * (-3.0 + 2.0 * t));
    }
}

// plateau window: 1 on |u| <= 1/2, smooth descent to 0 at |u| = 1, C^2
inline double plateau(double u, int order) {
    double a = std::abs(u);
    if (a >= 1.0) return 0.0;
    if (a <= 0.5) return order == 0 ? 1.0 : 0.0;
    const double t = 2.0 * (a - 0.5); // in (0,1)
    const double sgn = (u < 0.0) ? -1.0 : 1.0;
    switch (order) {
        case 0: return 1.0 - smooth5(t, 0);
        case 1: return -2.0 * sgn * smooth5(t, 1);
        default: return -4.0 * smooth5(t, 2);
    }
}

} // namespace

double SupportedBump::eval(double s, int order) const {
    const double x = circle_dist(s, center);
    if (std::abs(x) >= half_width) return 0.0;
    const double u = x / half_width;
    const double j0 = a + b * x + 0.5 * q * x * x;
    const double j1 = b + q * x;
    const double j2 = q;
    const double w0 = plateau(u, 0);
    const double w1 = plateau(u, 1) / half_width;
    const double w2 = plateau(u, 2) / (half_width * half_width);
    switch (order) {
        case 0: return j0 * w0;
        case 1: return j1 * w0 + j0 * w1;
        default: return j2 * w0 + 2.0 * j1 * w1 + j0 * w2;
    }
}

PerturbationView view_of(const SupportedBump& bump) {
    PerturbationView v;
    v.f0 = [bump](double s) { return bump.eval(s, 0); };
    v.f1 = [bump](double s) { return bump.eval(s, 1); };
    v.f2 = [bump](double s) { return bump.eval(s, 2); };
    v.compact = true;
    v.lo = mod1(bump.center - bump.half_width);
    v.hi = v.lo + 2.0 * bump.half_width;
    return v;
}

} // namespace forge
