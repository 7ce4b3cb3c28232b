#pragma once

#include <algorithm>
#include <cmath>

namespace streamperf {

// Axis-aligned image-plane box, center + extent, in pixels.
struct BBox {
    double cx = 0.0;
    double cy = 0.0;
    double w = 0.0;
    double h = 0.0;

    double area() const { return w * h; }
    double left() const { return cx - 0.5 * w; }
    double right() const { return cx + 0.5 * w; }
    double top() const { return cy - 0.5 * h; }
    double bottom() const { return cy + 0.5 * h; }
    bool valid() const { return w > 0.0 && h > 0.0; }
};

inline double iou(const BBox& a, const BBox& b) {
    if (!a.valid() || !b.valid()) return 0.0;
    double ix = std::min(a.right(), b.right()) - std::max(a.left(), b.left());
    double iy = std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top());
    if (ix <= 0.0 || iy <= 0.0) return 0.0;
    double inter = ix * iy;
    return inter / (a.area() + b.area() - inter);
}

// Intersects the box with the [0,W]x[0,H] plane. May return an invalid
// (w<=0 or h<=0) box when fully outside.
inline BBox clip_to_plane(const BBox& b, double plane_w, double plane_h) {
    double l = std::max(0.0, b.left());
    double r = std::min(plane_w, b.right());
    double t = std::max(0.0, b.top());
    double bo = std::min(plane_h, b.bottom());
    BBox out;
    out.w = r - l;
    out.h = bo - t;
    out.cx = 0.5 * (l + r);
    out.cy = 0.5 * (t + bo);
    return out;
}

inline double wrap_angle(double rad) {
    while (rad > M_PI) rad -= 2.0 * M_PI;
    while (rad <= -M_PI) rad += 2.0 * M_PI;
    return rad;
}

}  // namespace streamperf
