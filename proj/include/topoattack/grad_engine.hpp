#pragma once

#include "topoattack/circumball.hpp"
#include "topoattack/persistence.hpp"

namespace topoattack {

// Per-point gradient accumulator for scalar losses over a cloud.
struct GradField {
    std::vector<Vec3> g;

    explicit GradField(std::size_t n = 0) : g(n, Vec3::Zero()) {}
    std::size_t size() const { return g.size(); }
    void add(int i, const Vec3& v) { g[static_cast<std::size_t>(i)] += v; }
    GradField& operator+=(const GradField& other) {
        if (other.size() != size()) throw InvalidArgument("gradient fields have different sizes");
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += other.g[i];
        return *this;
    }
    GradField& operator*=(double s) {
        for (Vec3& v : g) v *= s;
        return *this;
    }
    double max_norm() const {
        double m = 0.0;
        for (const Vec3& v : g) m = std::max(m, v.norm());
        return m;
    }
};

// Derivative of the circumradius with respect to each vertex, computed in
// forward mode over the same linear systems the circumball solves use. The
// radius is smooth as long as the simplex stays non-degenerate, which holds
// inside a fixed Delaunay regime.
inline std::array<Vec3, 4> circumradius_grad(const std::vector<Vec3>& pts,
                                             const std::array<int, 4>& v, int dim) {
    std::array<Vec3, 4> grad{Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
    if (dim == 1) {
        const Vec3& a = pts[v[0]];
        const Vec3& b = pts[v[1]];
        const double len = (a - b).norm();
        if (!(len > 0.0)) throw DegenerateSimplex("zero length edge has no radius gradient");
        grad[0] = (a - b) / (2.0 * len);
        grad[1] = -grad[0];
        return grad;
    }
    if (dim == 2) {
        const Vec3 a = pts[v[0]], b = pts[v[1]], c = pts[v[2]];
        const Vec3 u = b - a, w = c - a;
        const double uu = u.squaredNorm(), ww = w.squaredNorm(), uw = u.dot(w);
        const double det = uu * ww - uw * uw;
        if (!(det > 1e-28 * uu * ww)) throw DegenerateSimplex("triangle is (near) collinear");
        const double s = (0.5 * uu * ww - 0.5 * ww * uw) / det;
        const double t = (0.5 * ww * uu - 0.5 * uu * uw) / det;
        const Vec3 q = s * u + t * w;
        const double r = q.norm();
        Eigen::Matrix2d G;
        G << uu, uw, uw, ww;
        const Eigen::Matrix2d Ginv = G.inverse();
        for (int k = 0; k < 3; ++k) {
            for (int cidx = 0; cidx < 3; ++cidx) {
                Vec3 da = Vec3::Zero(), db = Vec3::Zero(), dc = Vec3::Zero();
                (k == 0 ? da : (k == 1 ? db : dc))[cidx] = 1.0;
                const Vec3 du = db - da, dw = dc - da;
                const double dG00 = 2.0 * u.dot(du);
                const double dG01 = du.dot(w) + u.dot(dw);
                const double dG11 = 2.0 * w.dot(dw);
                const Eigen::Vector2d dh(u.dot(du), w.dot(dw));
                Eigen::Vector2d dGx(dG00 * s + dG01 * t, dG01 * s + dG11 * t);
                const Eigen::Vector2d dx = Ginv * (dh - dGx);
                const Vec3 dq = dx(0) * u + s * du + dx(1) * w + t * dw;
                grad[k][cidx] = q.dot(dq) / r;
            }
        }
        return grad;
    }
    if (dim == 3) {
        const Vec3 a = pts[v[0]];
        const Vec3 u1 = pts[v[1]] - a, u2 = pts[v[2]] - a, u3 = pts[v[3]] - a;
        Mat3 A;
        A.row(0) = 2.0 * u1;
        A.row(1) = 2.0 * u2;
        A.row(2) = 2.0 * u3;
        const double vol6 = u1.dot(u2.cross(u3));
        if (!(std::abs(vol6) > 1e-14 * u1.norm() * u2.norm() * u3.norm())) {
            throw DegenerateSimplex("tetrahedron is (near) flat");
        }
        const Mat3 Ainv = A.inverse();
        const Vec3 rhs(u1.squaredNorm(), u2.squaredNorm(), u3.squaredNorm());
        const Vec3 q = Ainv * rhs;
        const double r = q.norm();
        const Vec3 u[3] = {u1, u2, u3};
        for (int k = 0; k < 4; ++k) {
            for (int cidx = 0; cidx < 3; ++cidx) {
                Vec3 dd[4] = {Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
                dd[k][cidx] = 1.0;
                Vec3 drhs;
                Mat3 dA;
                for (int i = 0; i < 3; ++i) {
                    const Vec3 du = dd[i + 1] - dd[0];
                    dA.row(i) = 2.0 * du;
                    drhs(i) = 2.0 * u[i].dot(du);
                }
                const Vec3 dq = Ainv * (drhs - dA * q);
                grad[k][cidx] = q.dot(dq) / r;
            }
        }
        return grad;
    }
    throw InvalidArgument("circumradius_grad expects a simplex of dimension 1..3");
}

// dL = tr(M^T dC) pullback matrix for the j-th eigenvalue of a symmetric
// matrix: M = v_j v_j^T.
inline Mat3 eigval_vjp(const Eigen::SelfAdjointEigenSolver<Mat3>& eig, int j, double upstream) {
    const Vec3 vj = eig.eigenvectors().col(j);
    return upstream * (vj * vj.transpose());
}

// Pullback through the j-th eigenvector: dv_j = sum_{m != j} (v_m^T dC v_j)
// / (lambda_j - lambda_m) v_m. Terms whose eigengap falls below `gap_eps`
// are dropped, which keeps the gradient bounded near degenerate spectra.
inline Mat3 eigvec_vjp(const Eigen::SelfAdjointEigenSolver<Mat3>& eig, int j, const Vec3& upstream,
                       double gap_eps = 1e-8) {
    const Mat3& V = eig.eigenvectors();
    const Vec3& lam = eig.eigenvalues();
    Mat3 M = Mat3::Zero();
    for (int m = 0; m < 3; ++m) {
        if (m == j) continue;
        const double gap = lam(j) - lam(m);
        if (std::abs(gap) < gap_eps) continue;
        M += (upstream.dot(V.col(m)) / gap) * (V.col(m) * V.col(j).transpose());
    }
    return 0.5 * (M + M.transpose());
}

// Distributes dL = tr(U^T dC) of a neighborhood covariance onto the points
// that formed it ({i} plus its neighbor row). U must be symmetric.
inline void covariance_chain(const std::vector<Vec3>& points, int i,
                             const std::vector<int>& neighbor_row, const Mat3& U, GradField& out) {
    const double m = static_cast<double>(neighbor_row.size() + 1);
    Vec3 mean = points[i];
    for (int j : neighbor_row) mean += points[j];
    mean /= m;
    out.add(i, (2.0 / m) * (U * (points[i] - mean)));
    for (int j : neighbor_row) out.add(j, (2.0 / m) * (U * (points[j] - mean)));
}

// For every diagram pair, the simplices whose circumradii realize the birth
// and death values. Dimension-0 births sit at value zero on a vertex and
// carry no gradient.
struct CriticalMap {
    struct Entry {
        std::array<int, 4> birth_v{-1, -1, -1, -1};
        int birth_dim = 0;
        std::array<int, 4> death_v{-1, -1, -1, -1};
        int death_dim = -1;  // -1 for essential pairs
    };
    std::vector<Entry> entries;  // parallel to diagram.pairs
};

inline CriticalMap critical_map(const Filtration& filt, const PersistenceDiagram& dgm) {
    CriticalMap map;
    map.entries.reserve(dgm.pairs.size());
    for (const PersistencePair& pr : dgm.pairs) {
        CriticalMap::Entry e;
        const FiltrationSimplex& bs = filt.simplices[filt.simplices[pr.birth_pos].value_source];
        e.birth_v = bs.v;
        e.birth_dim = bs.dim;
        if (pr.finite()) {
            const FiltrationSimplex& ds = filt.simplices[filt.simplices[pr.death_pos].value_source];
            e.death_v = ds.v;
            e.death_dim = ds.dim;
        }
        map.entries.push_back(e);
    }
    return map;
}

// Pulls per-pair (d/d birth, d/d death) values back to point coordinates
// through the circumradii of the critical simplices. Upstream entries for
// essential pairs must have a zero death component.
inline GradField diagram_vjp(const std::vector<Vec3>& pts, const PersistenceDiagram& dgm,
                             const CriticalMap& map,
                             const std::vector<std::pair<double, double>>& upstream) {
    if (upstream.size() != dgm.pairs.size() || map.entries.size() != dgm.pairs.size()) {
        throw InvalidArgument("diagram_vjp: upstream size does not match the diagram");
    }
    GradField out(pts.size());
    for (std::size_t i = 0; i < dgm.pairs.size(); ++i) {
        const auto [ub, ud] = upstream[i];
        const CriticalMap::Entry& e = map.entries[i];
        if (ub != 0.0 && e.birth_dim > 0) {
            const auto g = circumradius_grad(pts, e.birth_v, e.birth_dim);
            for (int k = 0; k <= e.birth_dim; ++k) out.add(e.birth_v[k], ub * g[k]);
        }
        if (ud != 0.0) {
            if (e.death_dim < 0) throw InvalidArgument("diagram_vjp: essential pair with death gradient");
            const auto g = circumradius_grad(pts, e.death_v, e.death_dim);
            for (int k = 0; k <= e.death_dim; ++k) out.add(e.death_v[k], ud * g[k]);
        }
    }
    return out;
}

}  // namespace topoattack
