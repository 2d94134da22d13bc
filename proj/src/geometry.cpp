// SPDX-License-Identifier: Apache-2.0

#include "csiloc/geometry.hpp"

#include <algorithm>
#include <limits>

namespace csiloc {

namespace {

double cross(Point2 o, Point2 a, Point2 b)
{
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

double distance_to_segment(Point2 a, Point2 b, Point2 p)
{
    const Point2 ab = b - a;
    const double len2 = ab.x * ab.x + ab.y * ab.y;
    if (len2 == 0.0) {
        return distance(a, p);
    }
    const Point2 ap = p - a;
    const double t = std::clamp((ap.x * ab.x + ap.y * ab.y) / len2, 0.0, 1.0);
    return distance(a + t * ab, p);
}

} // namespace

std::vector<Point2> convex_hull(std::span<const Point2> points)
{
    std::vector<Point2> pts(points.begin(), points.end());
    std::sort(pts.begin(), pts.end(), [](Point2 a, Point2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 3) {
        return pts;
    }

    std::vector<Point2> hull(2 * pts.size());
    std::size_t k = 0;
    for (const Point2& p : pts) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0.0) {
            --k;
        }
        hull[k++] = p;
    }
    const std::size_t lower = k + 1;
    for (auto it = pts.rbegin() + 1; it != pts.rend(); ++it) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], *it) <= 0.0) {
            --k;
        }
        hull[k++] = *it;
    }
    hull.resize(k - 1);
    return hull;
}

double signed_distance_to_hull(std::span<const Point2> hull, Point2 p)
{
    if (hull.empty()) {
        return std::numeric_limits<double>::infinity();
    }
    if (hull.size() == 1) {
        return distance(hull[0], p);
    }

    double edge_distance = std::numeric_limits<double>::infinity();
    bool inside = hull.size() >= 3;
    for (std::size_t i = 0; i < hull.size(); ++i) {
        const Point2 a = hull[i];
        const Point2 b = hull[(i + 1) % hull.size()];
        edge_distance = std::min(edge_distance, distance_to_segment(a, b, p));
        if (cross(a, b, p) < 0.0) {
            inside = false;
        }
    }
    return inside ? -edge_distance : edge_distance;
}

} // namespace csiloc
