#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "topoattack/circumball.hpp"
#include "topoattack/delaunay.hpp"

namespace topoattack {

// A simplex placed in the sorted filtration. `value` is the circumradius at
// which it enters the alpha complex. For a simplex whose own circumball is
// not empty (non-Gabriel) the value is inherited from a coface and
// `value_source` points at the filtration position whose circumball actually
// realizes it; Gabriel simplices point at themselves. `boundary` holds the
// filtration positions of the codimension-1 faces.
struct FiltrationSimplex {
    std::array<int, 4> v{-1, -1, -1, -1};
    int dim = 0;
    double value = 0.0;
    bool gabriel = true;
    int value_source = -1;
    std::array<int, 4> boundary{-1, -1, -1, -1};
};

struct Filtration {
    std::vector<FiltrationSimplex> simplices;
    int n_vertices = 0;
};

inline Filtration alpha_filtration(const Triangulation& tri) {
    const SimplicialComplex cx = simplices_by_dim(tri);
    const std::vector<Vec3>& pts = tri.points;

    std::array<std::vector<double>, 4> value;
    std::array<std::vector<char>, 4> gabriel;
    std::array<std::vector<std::pair<int, int>>, 4> source;  // (dim, level index)
    for (int d = 0; d < 4; ++d) {
        const std::size_t m = cx.level[d].size();
        value[d].assign(m, 0.0);
        gabriel[d].assign(m, 1);
        source[d].resize(m);
        for (std::size_t i = 0; i < m; ++i) source[d][i] = {d, static_cast<int>(i)};
    }

    for (std::size_t i = 0; i < cx.level[3].size(); ++i) {
        value[3][i] = circumball(pts, cx.level[3][i].v, 3).radius;
    }

    // Downward pass: a non-Gabriel simplex enters together with its earliest
    // coface and inherits that coface's value source.
    for (int d = 2; d >= 1; --d) {
        for (std::size_t i = 0; i < cx.level[d].size(); ++i) {
            const Simplex& s = cx.level[d][i];
            const Circumball ball = circumball(pts, s.v, d);
            const double r2 = ball.radius * ball.radius;
            bool empty = true;
            for (int ci : s.cofaces) {
                const Simplex& co = cx.level[d + 1][ci];
                for (int j = 0; j <= d + 1 && empty; ++j) {
                    const int w = co.v[j];
                    if (w == s.v[0] || w == s.v[1] || w == s.v[2]) continue;
                    if ((pts[w] - ball.center).squaredNorm() < r2) empty = false;
                }
                if (!empty) break;
            }
            int best = -1;
            for (int ci : s.cofaces) {
                if (best < 0 || value[d + 1][ci] < value[d + 1][best] ||
                    (value[d + 1][ci] == value[d + 1][best] &&
                     cx.level[d + 1][ci].v < cx.level[d + 1][best].v)) {
                    best = ci;
                }
            }
            if (best < 0) throw Error("filtration: simplex without a coface");
            // A witness sitting on the circumsphere can pass the emptiness
            // test while the coface's independently computed value lands an
            // ulp below the face's own radius; such a face enters with the
            // coface too, or the sort below would invert face and coface.
            if (empty && !(value[d + 1][best] < ball.radius)) {
                value[d][i] = ball.radius;
            } else {
                gabriel[d][i] = 0;
                value[d][i] = value[d + 1][best];
                source[d][i] = source[d + 1][best];
            }
        }
    }

    struct Entry {
        double value;
        int dim;
        std::array<int, 4> v;
        int idx;
    };
    std::vector<Entry> entries;
    std::size_t total = 0;
    for (int d = 0; d < 4; ++d) total += cx.level[d].size();
    entries.reserve(total);
    for (int d = 0; d < 4; ++d) {
        for (std::size_t i = 0; i < cx.level[d].size(); ++i) {
            entries.push_back({value[d][i], d, cx.level[d][i].v, static_cast<int>(i)});
        }
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.value != b.value) return a.value < b.value;
        if (a.dim != b.dim) return a.dim < b.dim;
        return a.v < b.v;
    });

    std::array<std::vector<int>, 4> pos;
    for (int d = 0; d < 4; ++d) pos[d].assign(cx.level[d].size(), -1);
    for (std::size_t p = 0; p < entries.size(); ++p) {
        pos[entries[p].dim][entries[p].idx] = static_cast<int>(p);
    }

    Filtration filt;
    filt.n_vertices = cx.n_vertices;
    filt.simplices.resize(entries.size());
    for (std::size_t p = 0; p < entries.size(); ++p) {
        const Entry& e = entries[p];
        FiltrationSimplex& fs = filt.simplices[p];
        fs.v = e.v;
        fs.dim = e.dim;
        fs.value = e.value;
        fs.gabriel = gabriel[e.dim][e.idx] != 0;
        const auto [sd, si] = source[e.dim][e.idx];
        fs.value_source = pos[sd][si];
        const Simplex& s = cx.level[e.dim][e.idx];
        for (std::size_t j = 0; j < s.faces.size(); ++j) {
            fs.boundary[j] = pos[e.dim - 1][s.faces[j]];
            if (fs.boundary[j] >= static_cast<int>(p)) {
                throw Error("filtration: face ordered after its coface");
            }
        }
    }
    return filt;
}

struct PersistencePair {
    int dim = 0;
    double birth = 0.0;
    double death = std::numeric_limits<double>::infinity();
    int birth_pos = -1;
    int death_pos = -1;  // -1 marks an essential class

    bool finite() const { return death_pos >= 0; }
    double lifetime() const { return death - birth; }
};

struct PersistenceDiagram {
    std::vector<PersistencePair> pairs;
};

// Standard column reduction over Z/2 with the clearing optimization: columns
// are processed one dimension at a time from the top down, so simplices
// already paired as births can be skipped entirely.
inline PersistenceDiagram compute_persistence(const Filtration& filt) {
    const int m = static_cast<int>(filt.simplices.size());
    std::vector<char> paired_as_birth(m, 0);
    std::vector<char> negative(m, 0);
    PersistenceDiagram dgm;

    std::vector<int> owner(m, -1);
    std::vector<std::vector<int>> stored(m);
    std::vector<int> scratch;

    for (int d = 3; d >= 1; --d) {
        std::fill(owner.begin(), owner.end(), -1);
        for (int p = 0; p < m; ++p) {
            const FiltrationSimplex& fs = filt.simplices[p];
            if (fs.dim != d || paired_as_birth[p]) continue;
            std::vector<int> col(fs.boundary.begin(), fs.boundary.begin() + (d + 1));
            std::sort(col.begin(), col.end());
            while (!col.empty()) {
                const int low = col.back();
                const int other = owner[low];
                if (other < 0) {
                    owner[low] = p;
                    paired_as_birth[low] = 1;
                    negative[p] = 1;
                    if (filt.simplices[low].value != fs.value) {
                        PersistencePair pr;
                        pr.dim = d - 1;
                        pr.birth = filt.simplices[low].value;
                        pr.death = fs.value;
                        pr.birth_pos = low;
                        pr.death_pos = p;
                        dgm.pairs.push_back(pr);
                    }
                    stored[p] = std::move(col);
                    break;
                }
                const std::vector<int>& rhs = stored[other];
                scratch.clear();
                std::set_symmetric_difference(col.begin(), col.end(), rhs.begin(), rhs.end(),
                                              std::back_inserter(scratch));
                col.swap(scratch);
            }
        }
        for (int p = 0; p < m; ++p) {
            if (filt.simplices[p].dim == d) stored[p].clear();
        }
    }

    // Positive simplices never paired from above create essential classes.
    for (int p = 0; p < m; ++p) {
        if (paired_as_birth[p] || negative[p]) continue;
        PersistencePair pr;
        pr.dim = filt.simplices[p].dim;
        pr.birth = filt.simplices[p].value;
        pr.birth_pos = p;
        dgm.pairs.push_back(pr);
    }

    std::sort(dgm.pairs.begin(), dgm.pairs.end(),
              [](const PersistencePair& a, const PersistencePair& b) {
                  if (a.dim != b.dim) return a.dim < b.dim;
                  if (a.birth != b.birth) return a.birth < b.birth;
                  if (a.death != b.death) return a.death < b.death;
                  return a.birth_pos < b.birth_pos;
              });
    return dgm;
}

inline double persistence_entropy(const PersistenceDiagram& dgm, int dim) {
    double total = 0.0;
    int count = 0;
    for (const PersistencePair& pr : dgm.pairs) {
        if (pr.dim != dim || !pr.finite()) continue;
        total += pr.lifetime();
        ++count;
    }
    if (count < 2 || !(total > 0.0)) return 0.0;
    double entropy = 0.0;
    for (const PersistencePair& pr : dgm.pairs) {
        if (pr.dim != dim || !pr.finite()) continue;
        const double p = pr.lifetime() / total;
        entropy -= p * std::log(p);
    }
    return entropy;
}

// Indices into dgm.pairs of the k longest finite bars of one dimension,
// longest first; ties resolved toward the earlier birth, then filtration
// position, so the selection is deterministic.
inline std::vector<int> top_k_lifetimes(const PersistenceDiagram& dgm, int dim, int k) {
    std::vector<int> idx;
    for (int i = 0; i < static_cast<int>(dgm.pairs.size()); ++i) {
        const PersistencePair& pr = dgm.pairs[i];
        if (pr.dim == dim && pr.finite()) idx.push_back(i);
    }
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        const PersistencePair& pa = dgm.pairs[a];
        const PersistencePair& pb = dgm.pairs[b];
        if (pa.lifetime() != pb.lifetime()) return pa.lifetime() > pb.lifetime();
        if (pa.birth != pb.birth) return pa.birth < pb.birth;
        return pa.birth_pos < pb.birth_pos;
    });
    if (static_cast<int>(idx.size()) > k) idx.resize(static_cast<std::size_t>(k));
    return idx;
}

}  // namespace topoattack
