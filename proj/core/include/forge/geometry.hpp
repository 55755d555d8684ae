#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>

namespace forge {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

inline double wedge(const Vec2& u, const Vec2& v) { return u.x() * v.y() - u.y() * v.x(); }

/// Rotation by -pi/2: maps the unit tangent of an anticlockwise arclength
/// parameterization to the outward normal.
inline Vec2 rotate_cw(const Vec2& v) { return Vec2(v.y(), -v.x()); }
inline Vec2 rotate_ccw(const Vec2& v) { return Vec2(-v.y(), v.x()); }

/// Reduce to [0, 1).
inline double mod1(double x) {
    double m = x - std::floor(x);
    return (m >= 1.0) ? m - 1.0 : m;
}

/// Signed distance on the circle T = R/Z, in (-1/2, 1/2].
inline double circle_dist(double a, double b) {
    double d = mod1(a - b);
    return (d > 0.5) ? d - 1.0 : d;
}

constexpr double kPi = 3.14159265358979323846264338327950288;
constexpr double kTwoPi = 2.0 * kPi;

/// splitmix64: counter-based generator. All randomness in the project flows
/// from one config seed through keyed calls; no global state.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Uniform double in [0,1) keyed by (seed, stream, counter).
inline double uniform01(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    std::uint64_t z = splitmix64(seed ^ splitmix64(stream ^ splitmix64(counter)));
    return static_cast<double>(z >> 11) * 0x1.0p-53;
}

} // namespace forge
