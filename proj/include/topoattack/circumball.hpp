#pragma once

#include "topoattack/common.hpp"

namespace topoattack {

struct Circumball {
    Vec3 center;
    double radius;
};

inline Circumball circumball_edge(const Vec3& a, const Vec3& b) {
    return {(a + b) * 0.5, (b - a).norm() * 0.5};
}

// Center solved in the plane of the triangle via the Gram system of the two
// edge vectors, which keeps the computation well conditioned for thin shapes.
inline Circumball circumball_triangle(const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 u = b - a, v = c - a;
    const double uu = u.squaredNorm(), vv = v.squaredNorm(), uv = u.dot(v);
    const double det = uu * vv - uv * uv;
    if (!(det > 1e-28 * uu * vv)) throw DegenerateSimplex("triangle is (near) collinear");
    const double s = (0.5 * uu * vv - 0.5 * vv * uv) / det;
    const double t = (0.5 * vv * uu - 0.5 * uu * uv) / det;
    const Vec3 q = s * u + t * v;
    return {a + q, q.norm()};
}

inline Circumball circumball_tetra(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
    const Vec3 u1 = b - a, u2 = c - a, u3 = d - a;
    const double vol6 = u1.dot(u2.cross(u3));
    const double scale = u1.norm() * u2.norm() * u3.norm();
    if (!(std::abs(vol6) > 1e-14 * scale)) throw DegenerateSimplex("tetrahedron is (near) flat");
    const Vec3 q = (u1.squaredNorm() * u2.cross(u3) + u2.squaredNorm() * u3.cross(u1) +
                    u3.squaredNorm() * u1.cross(u2)) /
                   (2.0 * vol6);
    return {a + q, q.norm()};
}

inline Circumball circumball(const std::vector<Vec3>& pts, const std::array<int, 4>& v, int dim) {
    switch (dim) {
        case 1:
            return circumball_edge(pts[v[0]], pts[v[1]]);
        case 2:
            return circumball_triangle(pts[v[0]], pts[v[1]], pts[v[2]]);
        case 3:
            return circumball_tetra(pts[v[0]], pts[v[1]], pts[v[2]], pts[v[3]]);
        default:
            throw InvalidArgument("circumball expects a simplex of dimension 1..3");
    }
}

}  // namespace topoattack
