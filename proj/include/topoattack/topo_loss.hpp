#pragma once

#include "topoattack/grad_engine.hpp"
#include "topoattack/persistence.hpp"

namespace topoattack {

// Frozen random-feature embedding of a persistence diagram. Each homology
// dimension k gets its own two-layer map psi_k : (birth, lifetime) -> R^64,
// and the diagram embeds as phi_k = sum_i p_i psi_k(b_i, p_i) over finite
// pairs, concatenated across k. The weights are never trained; freezing them
// keeps runs reproducible while the map stays smooth and injective enough to
// separate diagrams in practice.
class EmbeddingNet {
  public:
    static constexpr int kHidden = 32;
    static constexpr int kOut = 64;
    static constexpr int kDims = 3;

    static EmbeddingNet make(std::uint64_t init_seed) {
        EmbeddingNet net;
        net.init_seed_ = init_seed;
        Rng rng(init_seed);
        for (DimNet& d : net.nets_) {
            d.W1.resize(kHidden, 2);
            d.b1.resize(kHidden);
            d.W2.resize(kOut, kHidden);
            d.b2.resize(kOut);
            const double s1 = 1.0 / std::sqrt(2.0);
            const double s2 = 1.0 / std::sqrt(static_cast<double>(kHidden));
            for (int i = 0; i < kHidden; ++i) {
                d.W1(i, 0) = rng.uniform(-s1, s1);
                d.W1(i, 1) = rng.uniform(-s1, s1);
                d.b1(i) = rng.uniform(-s1, s1);
            }
            for (int i = 0; i < kOut; ++i) {
                for (int j = 0; j < kHidden; ++j) d.W2(i, j) = rng.uniform(-s2, s2);
                d.b2(i) = rng.uniform(-s2, s2);
            }
        }
        return net;
    }

    std::uint64_t init_seed() const { return init_seed_; }
    static int embedding_size() { return kDims * kOut; }

    Eigen::VectorXd psi(int dim, double b, double p) const {
        const DimNet& d = nets_[check_dim(dim)];
        const Eigen::VectorXd h = (d.W1 * Eigen::Vector2d(b, p) + d.b1).array().tanh();
        return d.W2 * h + d.b2;
    }

    // psi along with its partials in b and p.
    void psi_jac(int dim, double b, double p, Eigen::VectorXd& value, Eigen::VectorXd& db,
                 Eigen::VectorXd& dp) const {
        const DimNet& d = nets_[check_dim(dim)];
        const Eigen::VectorXd pre = d.W1 * Eigen::Vector2d(b, p) + d.b1;
        const Eigen::VectorXd h = pre.array().tanh();
        const Eigen::VectorXd act = 1.0 - h.array().square();
        value = d.W2 * h + d.b2;
        db = d.W2 * (act.array() * d.W1.col(0).array()).matrix();
        dp = d.W2 * (act.array() * d.W1.col(1).array()).matrix();
    }

    // Pairs are re-sorted canonically before summation so the accumulated
    // floating-point result does not depend on the caller's pair order.
    Eigen::VectorXd embed(const PersistenceDiagram& dgm) const {
        std::vector<const PersistencePair*> order;
        for (const PersistencePair& pr : dgm.pairs) {
            if (pr.finite()) order.push_back(&pr);
        }
        std::sort(order.begin(), order.end(), [](const PersistencePair* a, const PersistencePair* b) {
            if (a->dim != b->dim) return a->dim < b->dim;
            if (a->birth != b->birth) return a->birth < b->birth;
            if (a->death != b->death) return a->death < b->death;
            return a->birth_pos < b->birth_pos;
        });
        Eigen::VectorXd phi = Eigen::VectorXd::Zero(embedding_size());
        for (const PersistencePair* pr : order) {
            const double p = pr->death - pr->birth;
            phi.segment(pr->dim * kOut, kOut) += p * psi(pr->dim, pr->birth, p);
        }
        return phi;
    }

    // Pullback of dL/dphi onto per-pair (dL/db_i, dL/dd_i), parallel to
    // dgm.pairs. Infinite pairs receive zeros.
    std::vector<std::pair<double, double>> embed_pullback(const PersistenceDiagram& dgm,
                                                          const Eigen::VectorXd& upstream) const {
        if (upstream.size() != embedding_size()) {
            throw InvalidArgument("embedding upstream has the wrong length");
        }
        std::vector<std::pair<double, double>> out(dgm.pairs.size(), {0.0, 0.0});
        Eigen::VectorXd value, db, dp;
        for (std::size_t i = 0; i < dgm.pairs.size(); ++i) {
            const PersistencePair& pr = dgm.pairs[i];
            if (!pr.finite()) continue;
            const double p = pr.death - pr.birth;
            psi_jac(pr.dim, pr.birth, p, value, db, dp);
            const auto seg = upstream.segment(pr.dim * kOut, kOut);
            // phi term is p * psi(b, d - b).
            const double dd = seg.dot((value + p * dp).eval());
            const double dbv = seg.dot((-value + p * (db - dp)).eval());
            out[i] = {dbv, dd};
        }
        return out;
    }

  private:
    struct DimNet {
        Eigen::MatrixXd W1;
        Eigen::VectorXd b1;
        Eigen::MatrixXd W2;
        Eigen::VectorXd b2;
    };

    static int check_dim(int dim) {
        if (dim < 0 || dim >= kDims) throw InvalidArgument("embedding dimension out of range");
        return dim;
    }

    std::array<DimNet, kDims> nets_;
    std::uint64_t init_seed_ = 0;
};

enum class TopoPhase { kDestruction, kCreation };

// Iteration-count phase switch: destruction for the first `patience`
// iterations of a run, creation afterward, never switching back.
struct PhaseScheduler {
    int patience = 30;
    int iter = 0;

    TopoPhase mode() const { return iter < patience ? TopoPhase::kDestruction : TopoPhase::kCreation; }
    void step() { ++iter; }
    void reset() { iter = 0; }
};

struct TopoLossConfig {
    double alpha = 1.0;
    double beta = 1.0;
    std::array<double, 3> w{0.3, 1.0, 1.0};
    int top_k = 50;
};

inline double loss_div(const Eigen::VectorXd& phi_adv, const Eigen::VectorXd& phi_clean,
                       Eigen::VectorXd* grad_adv = nullptr) {
    if (phi_adv.size() != phi_clean.size()) {
        throw InvalidArgument("embedding lengths differ");
    }
    const Eigen::VectorXd diff = phi_adv - phi_clean;
    if (grad_adv) *grad_adv = 2.0 * diff;
    return diff.squaredNorm();
}

// Directional loss over the top-K finite bars per dimension. Destruction
// adds lifetimes (descent shrinks prominent features), creation subtracts
// them (descent grows features). `pair_grads`, if given, must be parallel
// to dgm.pairs and receives accumulated (d/db, d/dd) contributions.
inline double loss_dir(const PersistenceDiagram& dgm, const TopoLossConfig& cfg, TopoPhase mode,
                       std::vector<std::pair<double, double>>* pair_grads = nullptr) {
    if (cfg.top_k < 1) throw InvalidArgument("top_k must be at least 1");
    const double s = (mode == TopoPhase::kDestruction) ? 1.0 : -1.0;
    double total = 0.0;
    if (pair_grads) pair_grads->assign(dgm.pairs.size(), {0.0, 0.0});
    for (int dim = 0; dim < 3; ++dim) {
        const double wk = cfg.w[static_cast<std::size_t>(dim)];
        for (int idx : top_k_lifetimes(dgm, dim, cfg.top_k)) {
            total += s * wk * dgm.pairs[idx].lifetime();
            if (pair_grads) {
                (*pair_grads)[idx].first += -s * wk;
                (*pair_grads)[idx].second += s * wk;
            }
        }
    }
    return total;
}

struct PhLossResult {
    double value = 0.0;
    double div_value = 0.0;
    double dir_value = 0.0;
    GradField grad;
};

// alpha * ||phi_adv - phi_clean||^2 + beta * L_dir, with the combined
// per-pair gradients routed to point coordinates through the critical
// simplices of the diagram.
inline PhLossResult loss_ph(const std::vector<Vec3>& pts, const Filtration& filt,
                            const PersistenceDiagram& dgm, const Eigen::VectorXd& phi_clean,
                            const EmbeddingNet& net, const TopoLossConfig& cfg, TopoPhase mode) {
    PhLossResult res;
    res.grad = GradField(pts.size());
    if (cfg.alpha == 0.0 && cfg.beta == 0.0) return res;

    std::vector<std::pair<double, double>> upstream(dgm.pairs.size(), {0.0, 0.0});
    if (cfg.alpha != 0.0) {
        const Eigen::VectorXd phi_adv = net.embed(dgm);
        Eigen::VectorXd dphi;
        res.div_value = loss_div(phi_adv, phi_clean, &dphi);
        const auto per_pair = net.embed_pullback(dgm, dphi);
        for (std::size_t i = 0; i < upstream.size(); ++i) {
            upstream[i].first += cfg.alpha * per_pair[i].first;
            upstream[i].second += cfg.alpha * per_pair[i].second;
        }
    }
    if (cfg.beta != 0.0) {
        std::vector<std::pair<double, double>> dir_grads;
        res.dir_value = loss_dir(dgm, cfg, mode, &dir_grads);
        for (std::size_t i = 0; i < upstream.size(); ++i) {
            upstream[i].first += cfg.beta * dir_grads[i].first;
            upstream[i].second += cfg.beta * dir_grads[i].second;
        }
    }
    res.value = cfg.alpha * res.div_value + cfg.beta * res.dir_value;
    res.grad = diagram_vjp(pts, dgm, critical_map(filt, dgm), upstream);
    return res;
}

}  // namespace topoattack
