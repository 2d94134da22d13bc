// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace csiloc {

/// Planar point in the scene frame, meters.
struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
};

inline Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
inline Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
inline Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }

inline double norm(Point2 p) { return std::hypot(p.x, p.y); }
inline double distance(Point2 a, Point2 b) { return norm(a - b); }

/// Convex hull in counter-clockwise order (Andrew's monotone chain). Collinear points are dropped.
std::vector<Point2> convex_hull(std::span<const Point2> points);

/// Signed distance to a convex polygon given in CCW order: negative inside, positive outside.
/// Degenerate hulls (a point or a segment) have no interior, so the result is the plain distance.
double signed_distance_to_hull(std::span<const Point2> hull, Point2 p);

} // namespace csiloc
