// Acceptance gate. Exercises the toolkit end to end, prints one PASS/FAIL
// line per criterion, and exits nonzero if anything fails. Heavier than the
// unit suites: it builds a six class dataset, trains both victim variants,
// and attacks the whole test cohort at the default configuration.
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <tuple>
#include <vector>

#include "oracles.hpp"
#include "topoattack/attack.hpp"
#include "topoattack/data_io.hpp"
#include "topoattack/metrics.hpp"

#ifndef TOPOATTACK_CLI_PATH
#error "TOPOATTACK_CLI_PATH must point at the command line binary"
#endif

namespace {

using namespace topoattack;
using Clock = std::chrono::steady_clock;
namespace fs = std::filesystem;

constexpr double kInf = std::numeric_limits<double>::infinity();

double elapsed(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename... Args>
std::string strf(const char* f, Args... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), f, args...);
    return buf;
}

std::vector<Vec3> random_points(int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Vec3> pts;
    pts.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        pts.emplace_back(rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0));
    }
    return pts;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Central differences with a step-halving consistency probe; returns nothing
// when the function is not locally smooth (pairing or nearest-neighbor
// switches) so the instance can be discarded.
template <typename F>
std::optional<std::vector<Vec3>> fd_if_smooth(const std::vector<Vec3>& pts, F&& f,
                                              double h = 1e-5) {
    std::vector<Vec3> grad(pts.size(), Vec3::Zero());
    std::vector<Vec3> work = pts;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        for (int c = 0; c < 3; ++c) {
            const double saved = work[i][c];
            auto eval = [&](double offset) {
                work[i][c] = saved + offset;
                return f(work);
            };
            const double g1 = (eval(h) - eval(-h)) / (2.0 * h);
            const double g2 = (eval(2.0 * h) - eval(-2.0 * h)) / (4.0 * h);
            work[i][c] = saved;
            if (std::abs(g1 - g2) > 1e-4 * (1.0 + std::abs(g1))) return std::nullopt;
            grad[i][c] = g1;
        }
    }
    return grad;
}

using Verdict = std::pair<bool, std::string>;

struct Gate {
    int failures = 0;

    template <typename F>
    void run(int idx, const char* name, F&& f) {
        bool ok = false;
        std::string detail;
        try {
            std::tie(ok, detail) = f();
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        std::printf("[%s] criterion %d: %s (%s)\n", ok ? "PASS" : "FAIL", idx, name,
                    detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
};

// ---------------------------------------------------------------- criterion 1

struct Bar {
    int dim;
    double birth;
    double death;
};

// Diagram built without touching the library pipeline: brute-force Delaunay,
// naive smallest-empty-circumball values, naive column reduction.
std::vector<Bar> oracle_diagram(const std::vector<Vec3>& pts) {
    const auto tets = oracles::delaunay_tets(pts);
    std::set<std::vector<int>> faces;
    for (int i = 0; i < static_cast<int>(pts.size()); ++i) faces.insert({i});
    for (const auto& t : tets) {
        for (int mask = 1; mask < 16; ++mask) {
            std::vector<int> f;
            for (int b = 0; b < 4; ++b) {
                if (mask & (1 << b)) f.push_back(t[static_cast<std::size_t>(b)]);
            }
            std::sort(f.begin(), f.end());
            faces.insert(f);
        }
    }

    struct Simplex {
        std::vector<int> v;
        int dim;
        double val;
    };
    std::vector<Simplex> sx;
    sx.reserve(faces.size());
    for (const auto& f : faces) {
        const int dim = static_cast<int>(f.size()) - 1;
        sx.push_back({f, dim, dim == 0 ? 0.0 : oracles::alpha_value(pts, f)});
    }
    std::sort(sx.begin(), sx.end(), [](const Simplex& a, const Simplex& b) {
        if (a.val != b.val) return a.val < b.val;
        if (a.dim != b.dim) return a.dim < b.dim;
        return a.v < b.v;
    });

    std::map<std::vector<int>, int> pos;
    for (int j = 0; j < static_cast<int>(sx.size()); ++j) pos[sx[static_cast<std::size_t>(j)].v] = j;
    std::vector<std::vector<int>> boundary(sx.size());
    for (std::size_t j = 0; j < sx.size(); ++j) {
        if (sx[j].dim == 0) continue;
        for (std::size_t drop = 0; drop < sx[j].v.size(); ++drop) {
            std::vector<int> face = sx[j].v;
            face.erase(face.begin() + static_cast<long>(drop));
            boundary[j].push_back(pos.at(face));
        }
    }

    const auto red = oracles::reduce_boundary(boundary);
    std::vector<Bar> out;
    for (const auto& [b, d] : red.pairs) {
        const auto& sb = sx[static_cast<std::size_t>(b)];
        const auto& sd = sx[static_cast<std::size_t>(d)];
        if (sd.val - sb.val > 1e-7 * std::max(1.0, sb.val)) out.push_back({sb.dim, sb.val, sd.val});
    }
    for (int e : red.essential) {
        const auto& se = sx[static_cast<std::size_t>(e)];
        out.push_back({se.dim, se.val, kInf});
    }
    return out;
}

// Greedy nearest matching inside each dimension; infinity on any structural
// mismatch, otherwise the worst endpoint discrepancy relative to the
// endpoint's own magnitude (clouds routinely produce sliver circumradii in
// the hundreds, where double roundoff scales with the value).
double match_bars(const std::vector<Bar>& a, const std::vector<Bar>& b) {
    if (a.size() != b.size()) return kInf;
    std::vector<char> used(b.size(), 0);
    double worst = 0.0;
    for (const Bar& bar : a) {
        double best = kInf;
        int arg = -1;
        for (std::size_t j = 0; j < b.size(); ++j) {
            if (used[j] || b[j].dim != bar.dim) continue;
            if (std::isinf(bar.death) != std::isinf(b[j].death)) continue;
            double cost = std::abs(b[j].birth - bar.birth) / std::max(1.0, std::abs(bar.birth));
            if (!std::isinf(bar.death)) {
                cost = std::max(cost, std::abs(b[j].death - bar.death) /
                                          std::max(1.0, std::abs(bar.death)));
            }
            if (cost < best) {
                best = cost;
                arg = static_cast<int>(j);
            }
        }
        if (arg < 0) return kInf;
        used[static_cast<std::size_t>(arg)] = 1;
        worst = std::max(worst, best);
    }
    return worst;
}

Verdict criterion_persistence_oracle() {
    const auto t0 = Clock::now();
    double max_val_err = 0.0;
    double max_bar_err = 0.0;
    int clouds = 0;
    for (std::uint64_t i = 0; clouds < 200; ++i) {
        const int n = 8 + static_cast<int>(i % 18);
        const auto pts = random_points(n, 7000 + i);
        const Triangulation tri = delaunay3d(pts);
        if (tri.jittered) continue;  // the oracle needs the untouched coordinates
        ++clouds;

        const Filtration filt = alpha_filtration(tri);
        for (const auto& s : filt.simplices) {
            if (s.dim == 0) continue;
            const std::vector<int> verts(s.v.begin(), s.v.begin() + s.dim + 1);
            const double want = oracles::alpha_value(pts, verts);
            max_val_err =
                std::max(max_val_err, std::abs(s.value - want) / std::max(1.0, std::abs(want)));
        }

        std::vector<Bar> lib;
        for (const auto& pr : compute_persistence(filt).pairs) {
            if (pr.finite() && pr.death - pr.birth <= 1e-7 * std::max(1.0, pr.birth)) continue;
            lib.push_back({pr.dim, pr.birth, pr.finite() ? pr.death : kInf});
        }
        max_bar_err = std::max(max_bar_err, match_bars(oracle_diagram(pts), lib));
    }
    const double secs = elapsed(t0);
    const bool ok = max_val_err <= 1e-8 && max_bar_err <= 1e-8 && secs < 120.0;
    return {ok, strf("%d clouds, max alpha err %.2e, max bar err %.2e, %.1fs", clouds,
                     max_val_err, max_bar_err, secs)};
}

// ---------------------------------------------------------------- criterion 2

Verdict criterion_analytic_values() {
    const double s3 = std::sqrt(3.0);
    const double tri_err = std::abs(
        circumball_triangle(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0.5, s3 / 2.0, 0)).radius -
        1.0 / s3);
    const double tet_err =
        std::abs(circumball_tetra(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0.5, s3 / 2.0, 0),
                                  Vec3(0.5, s3 / 6.0, std::sqrt(6.0) / 3.0))
                     .radius -
                 std::sqrt(6.0) / 4.0);

    // Generic convex hexagon in a plane, closed off by two distant apexes.
    // Reference endpoints come from elementary 2d geometry: the loop is born
    // with its longest (Gabriel) side and dies with the largest empty
    // circumcircle among the rim's Delaunay triangles. The unit suite checks
    // the fixture assumptions (Gabriel sides, apex clearances) in detail.
    const std::array<double, 6> radius = {0.78, 0.84, 0.75, 0.86, 0.80, 0.77};
    const std::array<double, 6> angle_deg = {3.0, 55.0, 127.0, 178.0, 244.0, 294.0};
    std::vector<Eigen::Vector2d> rim;
    for (int i = 0; i < 6; ++i) {
        const double a = angle_deg[static_cast<std::size_t>(i)] * M_PI / 180.0;
        const double r = radius[static_cast<std::size_t>(i)];
        rim.emplace_back(r * std::cos(a), r * std::sin(a));
    }
    double birth = 0.0;
    for (int i = 0; i < 6; ++i) {
        birth = std::max(birth, (rim[static_cast<std::size_t>(i)] -
                                 rim[static_cast<std::size_t>((i + 1) % 6)])
                                        .norm() /
                                    2.0);
    }
    double death = 0.0;
    int empty_triangles = 0;
    for (int i = 0; i < 6; ++i) {
        for (int j = i + 1; j < 6; ++j) {
            for (int k = j + 1; k < 6; ++k) {
                Eigen::Matrix2d M;
                M.row(0) = 2.0 * (rim[static_cast<std::size_t>(j)] - rim[static_cast<std::size_t>(i)]).transpose();
                M.row(1) = 2.0 * (rim[static_cast<std::size_t>(k)] - rim[static_cast<std::size_t>(i)]).transpose();
                const Eigen::Vector2d rhs(
                    rim[static_cast<std::size_t>(j)].squaredNorm() - rim[static_cast<std::size_t>(i)].squaredNorm(),
                    rim[static_cast<std::size_t>(k)].squaredNorm() - rim[static_cast<std::size_t>(i)].squaredNorm());
                const Eigen::Vector2d center = M.fullPivLu().solve(rhs);
                const double r = (center - rim[static_cast<std::size_t>(i)]).norm();
                bool empty = true;
                for (int q = 0; q < 6; ++q) {
                    if (q == i || q == j || q == k) continue;
                    empty &= (rim[static_cast<std::size_t>(q)] - center).norm() > r;
                }
                if (!empty) continue;
                ++empty_triangles;
                death = std::max(death, r);
            }
        }
    }

    const Eigen::Vector2d apex_xy[2] = {{0.041, -0.033}, {-0.027, 0.052}};
    const double apex_z[2] = {2.6, -2.55};
    const Mat3 rot =
        (Eigen::AngleAxisd(0.29, Vec3::UnitX()) * Eigen::AngleAxisd(0.37, Vec3::UnitZ()))
            .toRotationMatrix();
    std::vector<Vec3> pts;
    for (const auto& p : rim) pts.push_back(rot * Vec3(p.x(), p.y(), 0.0));
    for (int q = 0; q < 2; ++q) {
        pts.push_back(rot * Vec3(apex_xy[q].x(), apex_xy[q].y(), apex_z[q]));
    }
    const PersistenceDiagram dgm = compute_persistence(alpha_filtration(delaunay3d(pts)));
    double hex_birth_err = kInf;
    double hex_death_err = kInf;
    double best_life = -1.0;
    for (const auto& pr : dgm.pairs) {
        if (pr.dim != 1 || !pr.finite()) continue;
        if (pr.lifetime() > best_life) {
            best_life = pr.lifetime();
            hex_birth_err = std::abs(pr.birth - birth);
            hex_death_err = std::abs(pr.death - death);
        }
    }

    const bool ok = tri_err <= 1e-12 && tet_err <= 1e-12 && empty_triangles == 4 &&
                    hex_birth_err <= 1e-9 && hex_death_err <= 1e-9;
    return {ok, strf("triangle %.1e, tetra %.1e, hexagon birth %.1e death %.1e", tri_err,
                     tet_err, hex_birth_err, hex_death_err)};
}

// ---------------------------------------------------------------- criterion 3

Verdict criterion_gradients() {
    // circumradius
    double worst_circ = 0.0;
    int n_circ = 0;
    for (std::uint64_t s = 0; n_circ < 50 && s < 200; ++s) {
        const int dim = 1 + static_cast<int>(s % 3);
        const auto pts = random_points(dim + 1, 4000 + s);
        const std::array<int, 4> v{0, 1, 2, 3};
        std::vector<Vec3> an(pts.size(), Vec3::Zero());
        try {
            const auto rows = circumradius_grad(pts, v, dim);
            for (int k = 0; k <= dim; ++k) an[static_cast<std::size_t>(k)] = rows[static_cast<std::size_t>(k)];
        } catch (const DegenerateSimplex&) {
            continue;
        }
        const auto fd = oracles::fd_gradient(
            pts, [&](const std::vector<Vec3>& p) { return circumball(p, v, dim).radius; });
        worst_circ = std::max(worst_circ, oracles::max_rel_err(an, fd));
        ++n_circ;
    }

    // diagram embedding, d(loss)/d(birth) and d(loss)/d(death)
    const auto net = EmbeddingNet::make(11);
    double worst_emb = 0.0;
    for (std::uint64_t s = 0; s < 50; ++s) {
        Rng rng(5000 + s);
        PersistenceDiagram dgm;
        const int n_pairs = 5 + static_cast<int>(s % 8);
        int pos = 0;
        for (int k = 0; k < n_pairs; ++k) {
            PersistencePair pr;
            pr.dim = std::min(2, static_cast<int>(rng.uniform(0.0, 3.0)));
            pr.birth = rng.uniform(0.05, 1.0);
            pr.death = pr.birth + rng.uniform(0.05, 0.6);
            pr.birth_pos = pos++;
            pr.death_pos = pos++;
            dgm.pairs.push_back(pr);
        }
        Eigen::VectorXd u(EmbeddingNet::embedding_size());
        for (int k = 0; k < u.size(); ++k) u[k] = rng.uniform(-1.0, 1.0);
        const auto an = net.embed_pullback(dgm, u);
        const double h = 1e-5;
        double num = 0.0;
        double den = 1e-12;
        for (std::size_t k = 0; k < dgm.pairs.size(); ++k) {
            for (int which = 0; which < 2; ++which) {
                auto eval = [&](double off) {
                    PersistenceDiagram d2 = dgm;
                    (which ? d2.pairs[k].death : d2.pairs[k].birth) += off;
                    return u.dot(net.embed(d2));
                };
                const double fd = (eval(h) - eval(-h)) / (2.0 * h);
                num = std::max(num, std::abs((which ? an[k].second : an[k].first) - fd));
                den = std::max(den, std::abs(fd));
            }
        }
        worst_emb = std::max(worst_emb, num / den);
    }

    // margin loss input gradient, away from its kinks
    double worst_cw = 0.0;
    int n_cw = 0;
    for (std::uint64_t s = 0; n_cw < 50 && s < 400; ++s) {
        Rng rng(6000 + s);
        Eigen::VectorXd logits(6);
        for (int k = 0; k < 6; ++k) logits[k] = rng.uniform(-2.0, 2.0);
        const int y = static_cast<int>(s % 6);
        double top = -kInf;
        double second = -kInf;
        for (int k = 0; k < 6; ++k) {
            if (k == y) continue;
            if (logits[k] > top) {
                second = top;
                top = logits[k];
            } else {
                second = std::max(second, logits[k]);
            }
        }
        if (std::abs(logits[y] - top + 0.05) < 1e-3 || top - second < 1e-3) continue;
        ++n_cw;
        Eigen::VectorXd dl;
        cw_margin_loss(logits, y, 0.05, &dl);
        const double h = 1e-5;
        double num = 0.0;
        double den = 1e-12;
        for (int k = 0; k < 6; ++k) {
            Eigen::VectorXd work = logits;
            work[k] = logits[k] + h;
            const double up = cw_margin_loss(work, y, 0.05);
            work[k] = logits[k] - h;
            const double dn = cw_margin_loss(work, y, 0.05);
            const double fd = (up - dn) / (2.0 * h);
            num = std::max(num, std::abs(dl[k] - fd));
            den = std::max(den, std::abs(fd));
        }
        worst_cw = std::max(worst_cw, num / den);
    }

    // the four geometric losses
    double worst_geo = 0.0;
    int n_geo_total = 0;
    for (int loss = 0; loss < 4; ++loss) {
        int n_geo = 0;
        for (std::uint64_t s = 0; n_geo < 50 && s < 120; ++s) {
            Rng rng(6500 + 1000 * static_cast<std::uint64_t>(loss) + s);
            PointCloud clean;
            clean.id = "grad";
            clean.points = random_points(40, 9100 + 1000 * static_cast<std::uint64_t>(loss) + s);
            const CleanStats stats = make_clean_stats(clean, 8);
            std::vector<Vec3> delta(clean.size());
            for (Vec3& d : delta) d = 0.03 * rng.normal3();
            std::vector<Vec3> adv = clean.points;
            for (std::size_t i = 0; i < adv.size(); ++i) adv[i] += delta[i];

            GradField g(clean.size());
            std::optional<std::vector<Vec3>> fd;
            switch (loss) {
                case 0:
                    chamfer(clean.points, adv, &g);
                    fd = fd_if_smooth(adv, [&](const std::vector<Vec3>& p) {
                        return chamfer(clean.points, p);
                    });
                    break;
                case 1:
                    normal_consistency(stats, adv, &g);
                    fd = fd_if_smooth(adv, [&](const std::vector<Vec3>& p) {
                        return normal_consistency(stats, p);
                    });
                    break;
                case 2:
                    curvature_consistency(stats, adv, &g);
                    fd = fd_if_smooth(adv, [&](const std::vector<Vec3>& p) {
                        return curvature_consistency(stats, p);
                    });
                    break;
                default:
                    laplacian_smooth(delta, stats.graph, &g);
                    fd = fd_if_smooth(delta, [&](const std::vector<Vec3>& p) {
                        return laplacian_smooth(p, stats.graph);
                    });
                    break;
            }
            if (!fd) continue;
            ++n_geo;
            worst_geo = std::max(worst_geo, oracles::max_rel_err(g.g, *fd));
        }
        n_geo_total += n_geo;
    }

    // topology loss end to end, through triangulation and reduction
    const auto net2 = EmbeddingNet::make(9);
    TopoLossConfig tcfg;
    tcfg.alpha = 1.0;
    tcfg.beta = 1.0;
    tcfg.top_k = 5;
    double worst_ph = 0.0;
    int n_ph = 0;
    for (std::uint64_t seed = 8000; n_ph < 50 && seed < 8200; ++seed) {
        const auto pts = random_points(14, seed);
        const auto phi_clean = net2.embed(
            compute_persistence(alpha_filtration(delaunay3d(random_points(14, seed + 1000)))));
        const TopoPhase mode = (seed % 2 == 0) ? TopoPhase::kDestruction : TopoPhase::kCreation;
        auto loss_at = [&](const std::vector<Vec3>& p) {
            const auto filt = alpha_filtration(delaunay3d(p));
            return loss_ph(p, filt, compute_persistence(filt), phi_clean, net2, tcfg, mode).value;
        };
        const auto fd = fd_if_smooth(pts, loss_at);
        if (!fd) continue;
        ++n_ph;
        const auto filt = alpha_filtration(delaunay3d(pts));
        const auto res =
            loss_ph(pts, filt, compute_persistence(filt), phi_clean, net2, tcfg, mode);
        worst_ph = std::max(worst_ph, oracles::max_rel_err(res.grad.g, *fd));
    }

    const bool ok = n_circ >= 50 && n_cw >= 50 && n_geo_total >= 200 && n_ph >= 50 &&
                    worst_circ < 1e-4 && worst_emb < 1e-4 && worst_cw < 1e-4 &&
                    worst_geo < 1e-4 && worst_ph < 1e-3;
    return {ok, strf("circumradius %.1e, embedding %.1e, margin %.1e, geometry %.1e, "
                     "topology end-to-end %.1e",
                     worst_circ, worst_emb, worst_cw, worst_geo, worst_ph)};
}

// ------------------------------------------------------- shared attack cohort

struct CohortRun {
    std::vector<char> success;
    std::vector<char> trivial;
    std::vector<PointCloud> adv;
    long total_ph_evals = 0;
    std::size_t trace_states = 0;
    double max_budget_excess = -kInf;
    double max_normal_dot = 0.0;
    int successes = 0;
    int eligible = 0;
    double seconds = 0.0;

    double asr() const {
        return eligible > 0 ? static_cast<double>(successes) / eligible : 0.0;
    }
};

CohortRun attack_cohort(const PointClassifier& victim, const std::vector<PointCloud>& cohort,
                        const AttackConfig& base, bool record, const char* tag) {
    CohortRun run;
    const auto t0 = Clock::now();
    for (const PointCloud& cloud : cohort) {
        const CleanStats stats = make_clean_stats(cloud, 16);
        AttackConfig cfg = base;
        cfg.record_deltas = record;
        cfg.seed = detail::mix_seed(base.seed, fnv1a(cloud.id), 0x5eedULL);
        const AttackResult res = run_attack(victim, cloud, stats, cfg);
        if (record) {
            for (const auto& dvec : res.recorded_deltas) {
                for (std::size_t i = 0; i < dvec.size(); ++i) {
                    run.max_budget_excess =
                        std::max(run.max_budget_excess, dvec[i].norm() - cfg.epsilon);
                    run.max_normal_dot = std::max(
                        run.max_normal_dot, std::abs(dvec[i].dot(stats.frame.normals[i])));
                }
            }
            run.trace_states += res.recorded_deltas.size();
        }
        if (!res.trivial) {
            ++run.eligible;
            run.successes += res.success ? 1 : 0;
        }
        run.success.push_back(res.success ? 1 : 0);
        run.trivial.push_back(res.trivial ? 1 : 0);
        run.adv.push_back(res.adv_cloud);
        run.total_ph_evals += res.ph_evaluations;
    }
    run.seconds = elapsed(t0);
    std::fprintf(stderr, "  %s: asr %d/%d in %.1fs\n", tag, run.successes, run.eligible,
                 run.seconds);
    return run;
}

// ---------------------------------------------------------------- criterion 10

fs::path scratch_root() {
    static const fs::path root = [] {
        const fs::path p = fs::temp_directory_path() / "topoattack_acceptance";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

int run_cli(const std::string& args) {
    static int counter = 0;
    const fs::path log = scratch_root() / ("cli_" + std::to_string(counter++));
    const std::string cmd = std::string(TOPOATTACK_CLI_PATH) + " " + args + " > " +
                            log.string() + ".out 2> " + log.string() + ".err";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

bool same_dir_bytes(const fs::path& a, const fs::path& b) {
    std::vector<std::string> names_a, names_b;
    for (const auto& e : fs::directory_iterator(a)) names_a.push_back(e.path().filename().string());
    for (const auto& e : fs::directory_iterator(b)) names_b.push_back(e.path().filename().string());
    std::sort(names_a.begin(), names_a.end());
    std::sort(names_b.begin(), names_b.end());
    if (names_a != names_b) return false;
    for (const std::string& name : names_a) {
        if (slurp(a / name) != slurp(b / name)) return false;
    }
    return true;
}

Verdict criterion_cli_determinism() {
    const fs::path dir = scratch_root();
    const fs::path spec = dir / "spec.ini";
    {
        std::ofstream os(spec);
        os << "[dataset]\nseed = 11\npoints = 96\nnoise = 0.02\ntrain = 8\ntest = 2\n\n"
           << "[class sphere]\n[class torus]\ntube = 0.5\n";
    }
    const fs::path data = dir / "data";
    const fs::path data2 = dir / "data_echo";
    if (run_cli("gen-data --spec " + spec.string() + " --out " + data.string() + " --quiet"))
        return {false, "gen-data failed"};
    if (run_cli("gen-data --spec " + (data / "resolved_spec.ini").string() + " --out " +
                data2.string() + " --quiet"))
        return {false, "gen-data re-run failed"};
    const bool gen_ok = same_dir_bytes(data, data2);

    const fs::path manifest = data / "manifest.txt";
    const fs::path ckpt = dir / "pw.ckpt";
    const fs::path ckpt2 = dir / "pw_again.ckpt";
    for (const fs::path& out : {ckpt, ckpt2}) {
        if (run_cli("train --data " + manifest.string() + " --out " + out.string() +
                    " --epochs 15 --seed 3 --quiet"))
            return {false, "train failed"};
    }
    const bool train_ok = slurp(ckpt) == slurp(ckpt2);

    const fs::path adv = dir / "adv";
    const fs::path adv2 = dir / "adv_echo";
    if (run_cli("attack --model " + ckpt.string() + " --data " + manifest.string() + " --out " +
                adv.string() + " --iters 30 --restarts 1 --eta0 0.01 --lambda2 0.0005 --seed 5" +
                " --quiet"))
        return {false, "attack failed"};
    if (run_cli("attack --model " + ckpt.string() + " --data " + manifest.string() + " --out " +
                adv2.string() + " --config " + (adv / "resolved_config.ini").string() +
                " --quiet"))
        return {false, "attack re-run failed"};
    const bool attack_ok = same_dir_bytes(adv, adv2);

    const fs::path ev = dir / "eval";
    const fs::path ev2 = dir / "eval_echo";
    if (run_cli("eval --clean " + manifest.string() + " --adv " + adv.string() + " --model " +
                ckpt.string() + " --out " + ev.string() + " --quiet"))
        return {false, "eval failed"};
    if (run_cli("eval --clean " + manifest.string() + " --adv " + adv.string() + " --model " +
                ckpt.string() + " --out " + ev2.string() + " --config " +
                (ev / "resolved_config.ini").string() + " --quiet"))
        return {false, "eval re-run failed"};
    const bool eval_ok = same_dir_bytes(ev, ev2);

    const bool ok = gen_ok && train_ok && attack_ok && eval_ok;
    return {ok, strf("gen %s, train %s, attack %s, eval %s", gen_ok ? "identical" : "DIFFERS",
                     train_ok ? "identical" : "DIFFERS", attack_ok ? "identical" : "DIFFERS",
                     eval_ok ? "identical" : "DIFFERS")};
}

PersistenceDiagram bars_with_lifetimes(const std::vector<double>& lifetimes) {
    PersistenceDiagram dgm;
    int pos = 0;
    for (double l : lifetimes) {
        PersistencePair pr;
        pr.dim = 0;
        pr.birth = 0.0;
        pr.death = l;
        pr.birth_pos = pos++;
        pr.death_pos = pos++;
        dgm.pairs.push_back(pr);
    }
    return dgm;
}

}  // namespace

int main() {
    Gate gate;

    std::fprintf(stderr, "building fixture: 6 classes, 150 train / 60 test samples\n");
    const auto t_fixture = Clock::now();
    struct ClassDef {
        ShapeFamily family;
        double tube;
    };
    const std::array<ClassDef, 6> defs = {{{ShapeFamily::kTorus, 0.4},
                                           {ShapeFamily::kTorus, 0.65},
                                           {ShapeFamily::kDoubleTorus, 0.4},
                                           {ShapeFamily::kCylinder, 0.4},
                                           {ShapeFamily::kBox, 0.4},
                                           {ShapeFamily::kTwoSpheres, 0.4}}};
    std::vector<PointCloud> train_set, test_set;
    for (int label = 0; label < 6; ++label) {
        for (int is_test = 0; is_test < 2; ++is_test) {
            const int count = is_test ? 10 : 25;
            for (int i = 0; i < count; ++i) {
                ShapeSpec ss;
                ss.family = defs[static_cast<std::size_t>(label)].family;
                ss.tube = defs[static_cast<std::size_t>(label)].tube;
                ss.n_points = 256;
                ss.noise_sigma = 0.02;
                ss.seed = detail::mix_seed(
                    1, (static_cast<std::uint64_t>(label) << 1) | static_cast<unsigned>(is_test),
                    static_cast<std::uint64_t>(i));
                PointCloud cloud = generate_shape(ss);
                cloud.id = "c" + std::to_string(label) + (is_test ? "_test_" : "_train_") +
                           std::to_string(i);
                cloud.label = label;
                (is_test ? test_set : train_set).push_back(std::move(cloud));
            }
        }
    }
    TrainConfig tc;
    const PointClassifier pointwise =
        train_classifier(train_set, 6, PointClassifier::Variant::kPointwise, tc);
    TrainConfig tc_edge;
    tc_edge.seed = 2;
    const PointClassifier edge =
        train_classifier(train_set, 6, PointClassifier::Variant::kEdge, tc_edge);
    const double acc_pointwise = classifier_accuracy(pointwise, test_set);
    const double acc_edge = classifier_accuracy(edge, test_set);
    std::fprintf(stderr, "  victims ready in %.1fs, test accuracy %.3f / %.3f\n",
                 elapsed(t_fixture), acc_pointwise, acc_edge);

    gate.run(1, "alpha persistence matches the brute force oracle", criterion_persistence_oracle);
    gate.run(2, "analytic circumradii and hexagon bar endpoints", criterion_analytic_values);
    gate.run(3, "gradients match central finite differences", criterion_gradients);

    std::fprintf(stderr, "attacking the cohort at the default configuration\n");
    const AttackConfig base;
    const CohortRun full = attack_cohort(pointwise, test_set, base, true, "eps 0.55");

    gate.run(4, "every trace step respects the feasible set", [&]() -> Verdict {
        bool idempotent = true;
        for (std::uint64_t s = 0; s < 50; ++s) {
            Rng rng(3000 + s);
            std::vector<Vec3> delta(30), normals(30);
            for (std::size_t i = 0; i < delta.size(); ++i) {
                delta[i] = 0.4 * rng.normal3();
                normals[i] = rng.normal3().normalized();
            }
            const auto once = tangent_project(delta, normals);
            const auto twice = tangent_project(once, normals);
            for (std::size_t i = 0; i < once.size(); ++i) {
                idempotent &= once[i].x() == twice[i].x() && once[i].y() == twice[i].y() &&
                              once[i].z() == twice[i].z();
            }
        }
        const bool ok = full.trace_states > 0 && full.max_budget_excess <= 0.0 &&
                        full.max_normal_dot <= 1e-9 && idempotent;
        return {ok, strf("%zu recorded steps, max ||delta||-eps %.2e, max |delta.n| %.2e, "
                         "reprojection %s",
                         full.trace_states, full.max_budget_excess, full.max_normal_dot,
                         idempotent ? "bitwise stable" : "UNSTABLE")};
    });

    std::fprintf(stderr, "epsilon sweep\n");
    AttackConfig e75 = base;
    e75.epsilon = 0.75;
    AttackConfig e100 = base;
    e100.epsilon = 1.0;
    const CohortRun sweep75 = attack_cohort(pointwise, test_set, e75, false, "eps 0.75");
    const CohortRun sweep100 = attack_cohort(pointwise, test_set, e100, false, "eps 1.00");

    gate.run(5, "attack efficacy at desk scale", [&]() -> Verdict {
        const double total = full.seconds + sweep75.seconds + sweep100.seconds;
        const bool ok = acc_pointwise >= 0.95 && full.eligible >= 54 && full.asr() >= 0.90 &&
                        full.asr() <= sweep75.asr() + 1e-12 &&
                        sweep75.asr() <= sweep100.asr() + 1e-12 && total < 1800.0;
        return {ok, strf("clean accuracy %.3f, asr %.3f, sweep %.3f/%.3f/%.3f, %.0fs total",
                         acc_pointwise, full.asr(), full.asr(), sweep75.asr(), sweep100.asr(),
                         total)};
    });

    std::fprintf(stderr, "ablations\n");
    AttackConfig no_restart = base;
    no_restart.R = 0;
    AttackConfig short_run = no_restart;
    short_run.T = 100;
    // Pin the decay period so the short run's eta schedule stays a prefix of
    // the full run's; the derived default would shrink it with T.
    short_run.decay_period = 100;
    const CohortRun ab_r0 = attack_cohort(pointwise, test_set, no_restart, false, "R=0");
    const CohortRun ab_r0t = attack_cohort(pointwise, test_set, short_run, false, "R=0 T=100");
    AttackConfig no_topo = base;
    no_topo.lambda2 = 0.0;
    no_topo.T = 40;
    no_topo.R = 1;
    const std::vector<PointCloud> head(test_set.begin(), test_set.begin() + 5);
    const CohortRun ab_l0 = attack_cohort(pointwise, head, no_topo, false, "lambda2=0");

    gate.run(6, "ablations order as expected and lambda2=0 skips persistence",
             [&]() -> Verdict {
                 const bool ordered = full.asr() >= ab_r0.asr() - 1e-12 &&
                                      ab_r0.asr() >= ab_r0t.asr() - 1e-12;
                 const bool ok = ordered && ab_l0.total_ph_evals == 0 && full.total_ph_evals > 0;
                 return {ok, strf("asr %.3f >= %.3f >= %.3f, lambda2=0 ph evals %ld "
                                  "(default run used %ld)",
                                  full.asr(), ab_r0.asr(), ab_r0t.asr(), ab_l0.total_ph_evals,
                                  full.total_ph_evals)};
             });

    gate.run(7, "entropy hand values and topology shift on successes", [&]() -> Verdict {
        const double two_equal = persistence_entropy(bars_with_lifetimes({1.0, 1.0}), 0);
        const double single = persistence_entropy(bars_with_lifetimes({1.0}), 0);
        const double skewed = persistence_entropy(bars_with_lifetimes({1.0, 3.0}), 0);
        const bool hand = std::abs(two_equal - std::log(2.0)) <= 1e-12 && single == 0.0 &&
                          std::abs(skewed - 0.5623351446188083) <= 1e-9;
        std::array<double, 3> mean_abs{0.0, 0.0, 0.0};
        int successes = 0;
        for (std::size_t i = 0; i < test_set.size(); ++i) {
            if (!full.success[i] || full.trivial[i]) continue;
            ++successes;
            const auto d = entropy_delta(test_set[i].points, full.adv[i].points);
            for (int k = 0; k < 3; ++k) mean_abs[static_cast<std::size_t>(k)] += std::abs(d[static_cast<std::size_t>(k)]);
        }
        for (double& m : mean_abs) m /= std::max(successes, 1);
        const bool shifted =
            successes > 0 && (mean_abs[0] > 0.0 || mean_abs[1] > 0.0 || mean_abs[2] > 0.0);
        return {hand && shifted,
                strf("hand values %s, mean |dE| %.3f/%.3f/%.3f over %d successes",
                     hand ? "exact" : "WRONG", mean_abs[0], mean_abs[1], mean_abs[2], successes)};
    });

    gate.run(8, "distance and uniformity metric identities", [&]() -> Verdict {
        const PointCloud& c = test_set[0];
        const bool self_zero = csd(c, c) == 0.0;
        const auto same = distance_report(c.points, c.points);
        const bool report_zero = same.chamfer == 0.0 && same.hausdorff == 0.0 && same.l2 == 0.0;

        const double t = 0.25;
        const std::vector<Vec3> single = {Vec3(0.25, -0.5, 0.75)};
        std::vector<Vec3> moved = single;
        moved[0].x() += t;
        const auto rep = distance_report(single, moved);
        const bool translation =
            rep.chamfer == 2.0 * t && rep.hausdorff == t && rep.l2 == t;

        PointCloud lattice;
        lattice.id = "lattice";
        for (int x = 0; x < 5; ++x) {
            for (int y = 0; y < 5; ++y) {
                for (int z = 0; z < 5; ++z) {
                    lattice.points.emplace_back(0.2 * x, 0.2 * y, 0.2 * z);
                }
            }
        }
        PointCloud clustered = lattice;
        Rng rng(8);
        for (int i = 0; i < 12; ++i) {
            clustered.points[static_cast<std::size_t>(55 + i)] =
                clustered.points[44] + 0.004 * rng.normal3();
        }
        const double u_grid = uniform_metric(lattice);
        const double u_clustered = uniform_metric(clustered);

        const bool ok = self_zero && report_zero && translation && u_grid < u_clustered;
        return {ok, strf("self distances zero %s, translation case %s, uniform %.4f < %.4f",
                         self_zero && report_zero ? "yes" : "NO", translation ? "exact" : "OFF",
                         u_grid, u_clustered)};
    });

    gate.run(9, "pointwise adversaries transfer to the edge victim", [&]() -> Verdict {
        std::vector<std::pair<PointCloud, PointCloud>> pairs;
        pairs.reserve(test_set.size());
        for (std::size_t i = 0; i < test_set.size(); ++i) {
            pairs.emplace_back(test_set[i], full.adv[i]);
        }
        const double transfer = transfer_eval(edge, pairs);
        return {transfer > 0.0, strf("edge accuracy %.3f, transfer asr %.1f%%", acc_edge, transfer)};
    });

    gate.run(10, "command line re-runs reproduce artifacts bit for bit",
             criterion_cli_determinism);

    if (gate.failures > 0) {
        std::printf("%d criterion(s) failed\n", gate.failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
