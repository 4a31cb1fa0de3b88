#pragma once

#include "topoattack/classifier.hpp"
#include "topoattack/geo_loss.hpp"
#include "topoattack/topo_loss.hpp"

namespace topoattack {

// Removes the normal component of each perturbation row. Rows whose normal
// component is already below the snap threshold are returned untouched,
// which makes the projection bitwise idempotent.
inline std::vector<Vec3> tangent_project(std::vector<Vec3> delta, const std::vector<Vec3>& normals) {
    if (delta.size() != normals.size()) throw InvalidArgument("tangent_project: size mismatch");
    for (std::size_t i = 0; i < delta.size(); ++i) {
        const double t = delta[i].dot(normals[i]);
        if (std::abs(t) <= 1e-13 * (1.0 + delta[i].norm())) continue;
        delta[i] -= t * normals[i];
    }
    return delta;
}

// Rescales rows outside the per-point budget onto the sphere of radius
// epsilon. The rescale can land a hair above epsilon in floating point, so
// offending rows are nudged down until the bound holds exactly.
inline std::vector<Vec3> clip_ball(std::vector<Vec3> delta, double epsilon) {
    if (!(epsilon > 0.0)) throw InvalidArgument("clip_ball: epsilon must be positive");
    for (Vec3& row : delta) {
        const double norm = row.norm();
        if (norm <= epsilon) continue;
        row *= epsilon / norm;
        while (row.norm() > epsilon) row *= 0.9999999999999999;
    }
    return delta;
}

// Mean norm of a standard 3d Gaussian draw, used to scale random restarts
// to an expected magnitude of 0.1 epsilon.
inline constexpr double kGaussianMeanNorm = 1.5957691216057308;

inline std::vector<Vec3> random_tangent_init(const PointCloud& cloud,
                                             const std::vector<Vec3>& normals, double epsilon,
                                             std::uint64_t seed) {
    if (cloud.size() != normals.size()) throw InvalidArgument("random_tangent_init: size mismatch");
    Rng rng(seed);
    std::vector<Vec3> delta(cloud.size());
    const double scale = 0.1 * epsilon / kGaussianMeanNorm;
    for (Vec3& row : delta) row = scale * rng.normal3();
    return clip_ball(tangent_project(std::move(delta), normals), epsilon);
}

struct AttackConfig {
    double epsilon = 0.55;
    int T = 300;
    int R = 3;  // random restarts after the mandatory zero-init run
    double eta0 = 0.001;
    double decay = 0.5;
    int decay_period = 0;  // 0 resolves to ceil(T / 3)
    double lambda1 = 10.0;
    double lambda2 = 0.001;
    double lambda3 = 5.0;
    double kappa = 0.05;
    TopoLossConfig topo;
    int patience = 30;
    int stability_S = 3;
    std::uint64_t seed = 1;
    std::uint64_t embed_seed = 424242;
    bool record_diagrams = false;
    bool record_deltas = false;

    void validate() const {
        if (!(epsilon > 0.0)) throw InvalidArgument("attack: epsilon must be positive");
        if (T < 1) throw InvalidArgument("attack: T must be at least 1");
        if (R < 0) throw InvalidArgument("attack: R must be nonnegative");
        if (!(eta0 > 0.0)) throw InvalidArgument("attack: eta0 must be positive");
        if (!(decay > 0.0) || decay > 1.0) throw InvalidArgument("attack: decay must be in (0, 1]");
        if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0) {
            throw InvalidArgument("attack: loss weights must be nonnegative");
        }
        if (kappa < 0.0) throw InvalidArgument("attack: kappa must be nonnegative");
        if (stability_S < 1) throw InvalidArgument("attack: stability_S must be at least 1");
        if (patience < 0) throw InvalidArgument("attack: patience must be nonnegative");
    }

    int resolved_period() const { return decay_period > 0 ? decay_period : (T + 2) / 3; }
};

struct IterationRecord {
    int restart = 0;
    int iter = 0;
    double eta = 0.0;
    double l_cls = 0.0;
    double l_ph = 0.0;
    double l_geom = 0.0;
    double total = 0.0;
    int prediction = -1;
};

struct AttackResult {
    PointCloud adv_cloud;
    std::vector<Vec3> delta;
    bool success = false;
    bool trivial = false;  // clean input was already misclassified
    int restart_index = -1;
    int iterations_used = 0;  // gradient steps executed in the returning trajectory
    int predicted_label = -1;
    std::vector<IterationRecord> trace;
    std::vector<std::vector<Vec3>> recorded_deltas;  // parallel to trace when enabled
    int ph_evaluations = 0;
    int degenerate_aborts = 0;
    double max_budget_violation = 0.0;
    double max_tangent_violation = 0.0;
    std::optional<PersistenceDiagram> clean_diagram;
    std::optional<PersistenceDiagram> adv_diagram;
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::uint64_t h = seed ^ 0x9e3779b97f4a7c15ULL;
    h ^= a * 0xff51afd7ed558ccdULL;
    h ^= b * 0xc4ceb9fe1a85ec53ULL;
    return h;
}

inline int argmax_lowest(const Eigen::VectorXd& logits) {
    int best = 0;
    for (int c = 1; c < logits.size(); ++c) {
        if (logits(c) > logits(best)) best = c;
    }
    return best;
}

}  // namespace detail

// Projected gradient attack over 1 + R trajectories. Every iterate is
// tangent-projected against the clean normals and clipped to the per-point
// budget; success requires the flipped prediction to hold for stability_S
// consecutive iterates, and the iterate that opened the stable streak is the
// one returned. Delaunay degeneracies retry the iteration once under a
// different jitter seed before the trajectory is abandoned.
inline AttackResult run_attack(const PointClassifier& model, const PointCloud& clean,
                               const CleanStats& stats, const AttackConfig& cfg) {
    cfg.validate();
    clean.check_finite();
    if (!clean.label) throw InvalidArgument("attack: clean cloud has no label");
    if (clean.size() != stats.size()) throw InvalidArgument("attack: stats built from another cloud");
    if (!stats.source_id.empty() && !clean.id.empty() && stats.source_id != clean.id) {
        throw InvalidArgument("attack: stats bound to a different cloud id");
    }
    const int y = *clean.label;
    const std::size_t n = clean.size();

    AttackResult out;
    out.adv_cloud = clean;
    out.delta.assign(n, Vec3::Zero());

    const int clean_pred = model.predict(clean.points);
    if (clean_pred != y) {
        out.success = true;
        out.trivial = true;
        out.predicted_label = clean_pred;
        return out;
    }

    const bool use_ph = cfg.lambda2 != 0.0;
    const bool use_geom = cfg.lambda3 != 0.0;
    EmbeddingNet net;
    Eigen::VectorXd phi_clean;
    if (use_ph) {
        net = EmbeddingNet::make(cfg.embed_seed);
        const auto filt = alpha_filtration(delaunay3d(clean.points, detail::mix_seed(cfg.seed, 0, 0)));
        phi_clean = net.embed(compute_persistence(filt));
        ++out.ph_evaluations;
    }

    const int period = cfg.resolved_period();
    std::vector<Vec3> adv(n);
    std::vector<Vec3> final_delta(n, Vec3::Zero());
    int final_restart = 0;

    auto record_violations = [&](const std::vector<Vec3>& delta) {
        for (std::size_t i = 0; i < n; ++i) {
            out.max_budget_violation =
                std::max(out.max_budget_violation, delta[i].norm() - cfg.epsilon);
            out.max_tangent_violation =
                std::max(out.max_tangent_violation, std::abs(delta[i].dot(stats.frame.normals[i])));
        }
    };

    for (int r = 0; r <= cfg.R; ++r) {
        std::vector<Vec3> delta =
            (r == 0) ? std::vector<Vec3>(n, Vec3::Zero())
                     : random_tangent_init(clean, stats.frame.normals, cfg.epsilon, cfg.seed + r);
        record_violations(delta);
        PhaseScheduler sched;
        sched.patience = cfg.patience;
        int streak = 0;
        std::vector<Vec3> streak_delta;

        for (int t = 0; t < cfg.T; ++t) {
            for (std::size_t i = 0; i < n; ++i) adv[i] = clean.points[i] + delta[i];

            PointClassifier::Cache cache;
            model.forward(adv, cache);
            const int pred = detail::argmax_lowest(cache.logits);
            if (pred != y) {
                if (streak == 0) streak_delta = delta;
                if (++streak >= cfg.stability_S) {
                    out.success = true;
                    out.restart_index = r;
                    out.iterations_used = t;
                    out.delta = streak_delta;
                    break;
                }
            } else {
                streak = 0;
            }

            // Gradient of the full objective at the current iterate.
            IterationRecord rec;
            rec.restart = r;
            rec.iter = t;
            rec.eta = cfg.eta0 * std::pow(cfg.decay, t / period);
            rec.prediction = pred;
            GradField grad(n);

            Eigen::VectorXd dlogits;
            rec.l_cls = cw_margin_loss(cache.logits, y, cfg.kappa, &dlogits);
            if (cfg.lambda1 != 0.0 && dlogits.norm() != 0.0) {
                GradField g;
                model.backward(cache, dlogits, &g, nullptr);
                g *= cfg.lambda1;
                grad += g;
            }

            bool degenerate = false;
            for (int attempt = 0; attempt < 2 && use_ph; ++attempt) {
                try {
                    const auto tri =
                        delaunay3d(adv, detail::mix_seed(cfg.seed, r * 1000003ULL + t + 1, attempt));
                    const auto filt = alpha_filtration(tri);
                    const auto dgm = compute_persistence(filt);
                    auto ph = loss_ph(adv, filt, dgm, phi_clean, net, cfg.topo, sched.mode());
                    ++out.ph_evaluations;
                    rec.l_ph = ph.value;
                    ph.grad *= cfg.lambda2;
                    grad += ph.grad;
                    degenerate = false;
                    break;
                } catch (const DegenerateInput&) {
                    degenerate = true;
                } catch (const DegenerateSimplex&) {
                    degenerate = true;
                }
            }
            if (degenerate) {
                ++out.degenerate_aborts;
                break;
            }

            if (use_geom) {
                auto geo = geom_total(stats, adv, delta);
                rec.l_geom = geo.value;
                geo.grad *= cfg.lambda3;
                grad += geo.grad;
            }
            rec.total = cfg.lambda1 * rec.l_cls + cfg.lambda2 * rec.l_ph + cfg.lambda3 * rec.l_geom;

            for (std::size_t i = 0; i < n; ++i) delta[i] -= rec.eta * grad.g[i];
            delta = clip_ball(tangent_project(std::move(delta), stats.frame.normals), cfg.epsilon);
            record_violations(delta);

            out.trace.push_back(rec);
            if (cfg.record_deltas) out.recorded_deltas.push_back(delta);
            sched.step();
        }

        if (out.success) break;
        final_delta = delta;
        final_restart = r;
    }

    if (!out.success) {
        out.delta = final_delta;
        out.restart_index = final_restart;
        out.iterations_used = cfg.T;
    }
    for (std::size_t i = 0; i < n; ++i) out.adv_cloud.points[i] = clean.points[i] + out.delta[i];
    out.predicted_label = model.predict(out.adv_cloud.points);

    if (cfg.record_diagrams) {
        const auto cfilt = alpha_filtration(delaunay3d(clean.points, detail::mix_seed(cfg.seed, 0, 1)));
        out.clean_diagram = compute_persistence(cfilt);
        ++out.ph_evaluations;
        const auto afilt =
            alpha_filtration(delaunay3d(out.adv_cloud.points, detail::mix_seed(cfg.seed, 0, 2)));
        out.adv_diagram = compute_persistence(afilt);
        ++out.ph_evaluations;
    }
    return out;
}

}  // namespace topoattack
