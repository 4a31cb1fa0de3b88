#pragma once

#include <algorithm>
#include <numeric>
#include <unordered_map>
#include <vector>

#include "topoattack/common.hpp"
#include "topoattack/point_cloud.hpp"
#include "topoattack/predicates.hpp"

namespace topoattack {

inline constexpr int kGhostVertex = -1;

// Finite tetrahedra of the Delaunay triangulation. When the input contained a
// degeneracy (cospherical or coplanar configurations, duplicates), `points`
// holds the jittered coordinates that were actually triangulated and
// `jittered` is set; downstream consumers must use these coordinates.
struct Triangulation {
    std::vector<Vec3> points;
    std::vector<std::array<int, 4>> tets;
    bool jittered = false;
    std::uint64_t perturb_seed = 0;
};

namespace detail {

struct DegeneracyDetected {};

// Incremental Bowyer-Watson insertion. The convex hull is closed off with
// ghost tetrahedra (fourth vertex = kGhostVertex, always stored in slot 3)
// so conflict regions never have open boundaries. All predicate signs are
// exact; any exact zero aborts the build via DegeneracyDetected and the
// caller retries on jittered coordinates.
class DelaunayBuilder {
  public:
    explicit DelaunayBuilder(const std::vector<Vec3>& pts) : pts_(pts) {}

    std::vector<std::array<int, 4>> run(std::uint64_t shuffle_seed) {
        const int n = static_cast<int>(pts_.size());
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        Rng rng(shuffle_seed);
        rng.shuffle(order);

        const std::array<int, 4> seed = pick_initial(order);
        make_initial(seed);

        std::vector<char> used(n, 0);
        for (int s : seed) used[s] = 1;
        for (int idx : order) {
            if (!used[idx]) insert(idx);
        }

        std::vector<std::array<int, 4>> out;
        for (const Tet& t : tets_) {
            if (!t.alive || t.v[3] == kGhostVertex) continue;
            std::array<int, 4> v = t.v;
            std::sort(v.begin(), v.end());
            out.push_back(v);
        }
        std::sort(out.begin(), out.end());
        return out;
    }

  private:
    struct Tet {
        std::array<int, 4> v{};
        std::array<int, 4> nbr{-1, -1, -1, -1};
        bool alive = true;
        bool conflict = false;
    };

    const Vec3& P(int i) const { return pts_[static_cast<std::size_t>(i)]; }

    int orient(int a, int b, int c, int d) const { return orient3d(P(a), P(b), P(c), P(d)); }

    bool collinear_exact(int a, int b, int c) const {
        mpq_class ux = mpq_class(P(b).x()) - mpq_class(P(a).x());
        mpq_class uy = mpq_class(P(b).y()) - mpq_class(P(a).y());
        mpq_class uz = mpq_class(P(b).z()) - mpq_class(P(a).z());
        mpq_class vx = mpq_class(P(c).x()) - mpq_class(P(a).x());
        mpq_class vy = mpq_class(P(c).y()) - mpq_class(P(a).y());
        mpq_class vz = mpq_class(P(c).z()) - mpq_class(P(a).z());
        return sgn(uy * vz - uz * vy) == 0 && sgn(uz * vx - ux * vz) == 0 &&
               sgn(ux * vy - uy * vx) == 0;
    }

    std::array<int, 4> pick_initial(const std::vector<int>& order) const {
        const int n = static_cast<int>(order.size());
        const int i0 = order[0];
        int i1 = -1;
        for (int k = 1; k < n; ++k) {
            const Vec3& q = P(order[k]);
            if (q.x() != P(i0).x() || q.y() != P(i0).y() || q.z() != P(i0).z()) {
                i1 = order[k];
                break;
            }
        }
        if (i1 < 0) throw DegeneracyDetected{};
        int i2 = -1;
        for (int k = 1; k < n; ++k) {
            if (order[k] == i1) continue;
            if (!collinear_exact(i0, i1, order[k])) {
                i2 = order[k];
                break;
            }
        }
        if (i2 < 0) throw DegeneracyDetected{};
        int i3 = -1;
        for (int k = 1; k < n; ++k) {
            if (order[k] == i1 || order[k] == i2) continue;
            if (orient(i0, i1, i2, order[k]) != 0) {
                i3 = order[k];
                break;
            }
        }
        if (i3 < 0) throw DegeneracyDetected{};
        return {i0, i1, i2, i3};
    }

    void make_initial(std::array<int, 4> s) {
        if (orient(s[0], s[1], s[2], s[3]) < 0) std::swap(s[0], s[1]);
        ref_ = (P(s[0]) + P(s[1]) + P(s[2]) + P(s[3])) / 4.0;
        const int t0 = new_tet({s[0], s[1], s[2], s[3]});
        for (int i = 0; i < 4; ++i) {
            std::array<int, 3> f{};
            int m = 0;
            for (int j = 0; j < 4; ++j) {
                if (j != i) f[m++] = tets_[t0].v[j];
            }
            const int og = orient3d(P(f[0]), P(f[1]), P(f[2]), ref_);
            if (og == 0) throw DegeneracyDetected{};
            if (og > 0) std::swap(f[1], f[2]);
            new_tet({f[0], f[1], f[2], kGhostVertex});
        }
        wire_all_faces();
        last_ = t0;
    }

    static std::uint64_t face_key(int a, int b, int c) {
        std::array<int, 3> f{a, b, c};
        std::sort(f.begin(), f.end());
        return (static_cast<std::uint64_t>(f[0] + 1) << 42) |
               (static_cast<std::uint64_t>(f[1] + 1) << 21) |
               static_cast<std::uint64_t>(f[2] + 1);
    }

    std::uint64_t face_key_of(int ti, int slot) const {
        std::array<int, 3> f{};
        int m = 0;
        for (int j = 0; j < 4; ++j) {
            if (j != slot) f[m++] = tets_[ti].v[j];
        }
        return face_key(f[0], f[1], f[2]);
    }

    void wire_all_faces() {
        std::unordered_map<std::uint64_t, std::pair<int, int>> open;
        for (int ti = 0; ti < static_cast<int>(tets_.size()); ++ti) {
            if (!tets_[ti].alive) continue;
            for (int s = 0; s < 4; ++s) {
                const std::uint64_t key = face_key_of(ti, s);
                auto it = open.find(key);
                if (it == open.end()) {
                    open.emplace(key, std::make_pair(ti, s));
                } else {
                    tets_[ti].nbr[s] = it->second.first;
                    tets_[it->second.first].nbr[it->second.second] = ti;
                    open.erase(it);
                }
            }
        }
        if (!open.empty()) throw Error("delaunay: initial hull failed to close");
    }

    bool conflicts_with(int ti, int p) const {
        const Tet& t = tets_[ti];
        if (t.v[3] == kGhostVertex) {
            const int s = orient(t.v[0], t.v[1], t.v[2], p);
            if (s == 0) throw DegeneracyDetected{};
            return s > 0;
        }
        const int s = insphere(P(t.v[0]), P(t.v[1]), P(t.v[2]), P(t.v[3]), P(p));
        if (s == 0) throw DegeneracyDetected{};
        return s > 0;
    }

    int locate(int p) const {
        int cur = last_;
        const std::size_t cap = tets_.size() * 8 + 64;
        for (std::size_t steps = 0; steps < cap; ++steps) {
            const Tet& t = tets_[cur];
            if (t.v[3] == kGhostVertex) {
                const int s = orient(t.v[0], t.v[1], t.v[2], p);
                if (s == 0) throw DegeneracyDetected{};
                if (s > 0) return cur;
                cur = t.nbr[3];
                continue;
            }
            int next = -1;
            for (int i = 0; i < 4 && next < 0; ++i) {
                std::array<int, 4> w = t.v;
                w[i] = p;
                const int s = orient(w[0], w[1], w[2], w[3]);
                if (s == 0) throw DegeneracyDetected{};
                if (s < 0) next = t.nbr[i];
            }
            if (next < 0) return cur;
            cur = next;
        }
        throw DegeneracyDetected{};
    }

    int new_tet(std::array<int, 4> v) {
        tets_.push_back(Tet{v, {-1, -1, -1, -1}, true, false});
        return static_cast<int>(tets_.size()) - 1;
    }

    int make_cavity_tet(const std::array<int, 3>& f, int p) {
        std::array<int, 4> v{};
        if (f[0] != kGhostVertex && f[1] != kGhostVertex && f[2] != kGhostVertex) {
            v = {f[0], f[1], f[2], p};
            const int s = orient(v[0], v[1], v[2], v[3]);
            if (s == 0) throw DegeneracyDetected{};
            if (s < 0) std::swap(v[0], v[1]);
        } else {
            std::array<int, 2> e{};
            int m = 0;
            for (int x : f) {
                if (x != kGhostVertex) e[m++] = x;
            }
            std::array<int, 3> g{e[0], e[1], p};
            const int s = orient3d(P(g[0]), P(g[1]), P(g[2]), ref_);
            if (s == 0) throw DegeneracyDetected{};
            if (s > 0) std::swap(g[0], g[1]);
            v = {g[0], g[1], g[2], kGhostVertex};
        }
        return new_tet(v);
    }

    int slot_of_vertex(int ti, int p) const {
        for (int j = 0; j < 4; ++j) {
            if (tets_[ti].v[j] == p) return j;
        }
        throw Error("delaunay: vertex missing from its own tetrahedron");
    }

    int slot_opposite_face(int ti, const std::array<int, 3>& f) const {
        for (int j = 0; j < 4; ++j) {
            const int x = tets_[ti].v[j];
            if (x != f[0] && x != f[1] && x != f[2]) return j;
        }
        throw Error("delaunay: neighbor does not share the boundary face");
    }

    void insert(int p) {
        const int seed = locate(p);
        if (!conflicts_with(seed, p)) throw Error("delaunay: located tetrahedron not in conflict");

        std::vector<int> conflict{seed};
        tets_[seed].conflict = true;
        for (std::size_t k = 0; k < conflict.size(); ++k) {
            const int ti = conflict[k];
            for (int i = 0; i < 4; ++i) {
                const int u = tets_[ti].nbr[i];
                if (u < 0) throw Error("delaunay: missing neighbor");
                if (tets_[u].conflict) continue;
                if (conflicts_with(u, p)) {
                    tets_[u].conflict = true;
                    conflict.push_back(u);
                }
            }
        }

        struct BFace {
            std::array<int, 3> f;
            int outer;
        };
        std::vector<BFace> boundary;
        for (int ti : conflict) {
            for (int i = 0; i < 4; ++i) {
                const int u = tets_[ti].nbr[i];
                if (tets_[u].conflict) continue;
                std::array<int, 3> f{};
                int m = 0;
                for (int j = 0; j < 4; ++j) {
                    if (j != i) f[m++] = tets_[ti].v[j];
                }
                boundary.push_back({f, u});
            }
        }

        std::unordered_map<std::uint64_t, std::pair<int, int>> open;
        int first_created = -1;
        for (const BFace& bf : boundary) {
            const int nt = make_cavity_tet(bf.f, p);
            if (first_created < 0) first_created = nt;
            const int ps = slot_of_vertex(nt, p);
            tets_[nt].nbr[ps] = bf.outer;
            tets_[bf.outer].nbr[slot_opposite_face(bf.outer, bf.f)] = nt;
            for (int s = 0; s < 4; ++s) {
                if (s == ps) continue;
                const std::uint64_t key = face_key_of(nt, s);
                auto it = open.find(key);
                if (it == open.end()) {
                    open.emplace(key, std::make_pair(nt, s));
                } else {
                    tets_[nt].nbr[s] = it->second.first;
                    tets_[it->second.first].nbr[it->second.second] = nt;
                    open.erase(it);
                }
            }
        }
        if (!open.empty()) throw Error("delaunay: cavity boundary failed to close");

        for (int ti : conflict) tets_[ti].alive = false;
        last_ = first_created;
    }

    const std::vector<Vec3>& pts_;
    std::vector<Tet> tets_;
    Vec3 ref_ = Vec3::Zero();
    int last_ = 0;
};

}  // namespace detail

inline Triangulation delaunay3d(const std::vector<Vec3>& points, std::uint64_t perturb_seed = 0) {
    if (points.size() < 4) throw DegenerateInput("triangulation needs at least 4 points");
    for (const Vec3& p : points) {
        if (!p.allFinite()) throw InvalidArgument("triangulation input has a non-finite coordinate");
    }

    Triangulation tri;
    tri.perturb_seed = perturb_seed;
    try {
        detail::DelaunayBuilder builder(points);
        tri.tets = builder.run(perturb_seed);
        tri.points = points;
        return tri;
    } catch (const detail::DegeneracyDetected&) {
    }

    Vec3 lo = points[0], hi = points[0];
    for (const Vec3& p : points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const double magnitude = 1e-9 * (hi - lo).norm();
    Rng jitter_rng(perturb_seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<Vec3> jittered = points;
    for (Vec3& p : jittered) {
        for (int c = 0; c < 3; ++c) p[c] += jitter_rng.uniform(-magnitude, magnitude);
    }
    try {
        detail::DelaunayBuilder builder(jittered);
        tri.tets = builder.run(perturb_seed);
        tri.points = std::move(jittered);
        tri.jittered = true;
        return tri;
    } catch (const detail::DegeneracyDetected&) {
        throw DegenerateInput("degenerate point configuration persists after jitter");
    }
}

inline Triangulation delaunay3d(const PointCloud& cloud, std::uint64_t perturb_seed = 0) {
    return delaunay3d(cloud.points, perturb_seed);
}

// One simplex of the complex. Vertex ids are sorted ascending with -1 padding
// past `dim`. `faces` and `cofaces` index into the adjacent dimension levels.
struct Simplex {
    std::array<int, 4> v{-1, -1, -1, -1};
    std::vector<int> faces;
    std::vector<int> cofaces;
};

struct SimplicialComplex {
    std::array<std::vector<Simplex>, 4> level;
    int n_vertices = 0;
};

// Expands the tetrahedra into the full complex (vertices, edges, triangles,
// tets), each level sorted lexicographically by vertex tuple.
inline SimplicialComplex simplices_by_dim(const Triangulation& tri) {
    SimplicialComplex cx;
    cx.n_vertices = static_cast<int>(tri.points.size());

    auto& tets = cx.level[3];
    tets.reserve(tri.tets.size());
    for (const auto& t : tri.tets) {
        Simplex s;
        s.v = {t[0], t[1], t[2], t[3]};
        tets.push_back(std::move(s));
    }

    // One dedup pass per level, walking down from the tets.
    auto build_level = [&](int dim) {
        auto& upper = cx.level[dim + 1];
        auto& lower = cx.level[dim];
        std::vector<std::array<int, 4>> tuples;
        tuples.reserve(upper.size() * static_cast<std::size_t>(dim + 2));
        for (const Simplex& s : upper) {
            for (int omit = 0; omit <= dim + 1; ++omit) {
                std::array<int, 4> f{-1, -1, -1, -1};
                int m = 0;
                for (int j = 0; j <= dim + 1; ++j) {
                    if (j != omit) f[m++] = s.v[j];
                }
                tuples.push_back(f);
            }
        }
        std::sort(tuples.begin(), tuples.end());
        tuples.erase(std::unique(tuples.begin(), tuples.end()), tuples.end());
        lower.resize(tuples.size());
        std::unordered_map<std::uint64_t, int> index;
        index.reserve(tuples.size() * 2);
        auto key_of = [](const std::array<int, 4>& f) {
            return (static_cast<std::uint64_t>(f[0] + 1) << 42) |
                   (static_cast<std::uint64_t>(f[1] + 1) << 21) |
                   static_cast<std::uint64_t>(f[2] + 1);
        };
        for (std::size_t i = 0; i < tuples.size(); ++i) {
            lower[i].v = tuples[i];
            index.emplace(key_of(tuples[i]), static_cast<int>(i));
        }
        for (int ui = 0; ui < static_cast<int>(upper.size()); ++ui) {
            Simplex& s = upper[ui];
            for (int omit = 0; omit <= dim + 1; ++omit) {
                std::array<int, 4> f{-1, -1, -1, -1};
                int m = 0;
                for (int j = 0; j <= dim + 1; ++j) {
                    if (j != omit) f[m++] = s.v[j];
                }
                const int fi = index.at(key_of(f));
                s.faces.push_back(fi);
                lower[fi].cofaces.push_back(ui);
            }
        }
    };
    build_level(2);
    build_level(1);

    // Vertex level covers every input point, not only those seen in an edge.
    auto& verts = cx.level[0];
    verts.resize(tri.points.size());
    for (int i = 0; i < cx.n_vertices; ++i) verts[i].v = {i, -1, -1, -1};
    for (int ei = 0; ei < static_cast<int>(cx.level[1].size()); ++ei) {
        Simplex& e = cx.level[1][ei];
        for (int j = 0; j < 2; ++j) {
            e.faces.push_back(e.v[j]);
            verts[e.v[j]].cofaces.push_back(ei);
        }
    }
    return cx;
}

}  // namespace topoattack
