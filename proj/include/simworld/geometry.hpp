#pragma once

#include <algorithm>
#include <cmath>

namespace simworld {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double cross(Vec2 o) const { return x * o.y - y * o.x; }
    double norm() const { return std::hypot(x, y); }
    double norm2() const { return x * x + y * y; }
    Vec2 normalized() const {
        const double n = norm();
        return n > 1e-12 ? Vec2{x / n, y / n} : Vec2{1.0, 0.0};
    }
    Vec2 perp() const { return {-y, x}; }  // 90 deg counterclockwise
};

inline Vec2 heading_vec(double heading) { return {std::cos(heading), std::sin(heading)}; }

// Wraps to (-pi, pi].
inline double wrap_angle(double a) {
    while (a > M_PI) a -= 2.0 * M_PI;
    while (a <= -M_PI) a += 2.0 * M_PI;
    return a;
}

// Absolute angular difference wrapped to [0, pi].
inline double heading_error(double a, double b) { return std::abs(wrap_angle(a - b)); }

inline double dist_point_segment(Vec2 p, Vec2 a, Vec2 b) {
    const Vec2 ab = b - a;
    const double len2 = ab.norm2();
    if (len2 < 1e-18) return (p - a).norm();
    const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
    return (p - (a + ab * t)).norm();
}

// Oriented rectangle: center, heading, full length (along heading), width.
struct Obb {
    Vec2 center;
    double heading = 0.0;
    double length = 1.0;
    double width = 1.0;
};

// Separating-axis overlap test; symmetric in its arguments.
inline bool obb_overlap(const Obb& a, const Obb& b) {
    const Vec2 axes[4] = {heading_vec(a.heading), heading_vec(a.heading).perp(), heading_vec(b.heading),
                          heading_vec(b.heading).perp()};
    const double ext_a[2] = {a.length * 0.5, a.width * 0.5};
    const double ext_b[2] = {b.length * 0.5, b.width * 0.5};
    const Vec2 d = b.center - a.center;
    for (const Vec2& axis : axes) {
        const double ra = ext_a[0] * std::abs(axis.dot(axes[0])) + ext_a[1] * std::abs(axis.dot(axes[1]));
        const double rb = ext_b[0] * std::abs(axis.dot(axes[2])) + ext_b[1] * std::abs(axis.dot(axes[3]));
        if (std::abs(d.dot(axis)) > ra + rb) return false;
    }
    return true;
}

}  // namespace simworld
