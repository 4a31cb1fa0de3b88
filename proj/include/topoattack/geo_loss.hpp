#pragma once

#include "topoattack/grad_engine.hpp"
#include "topoattack/point_cloud.hpp"

namespace topoattack {

// Preprocessing statistics of the clean cloud, computed once per sample.
// The imperceptibility losses keep using these index sets, normals, and
// curvatures while the points move, which keeps the losses piecewise smooth
// and anchored to the original surface.
struct CleanStats {
    std::vector<Vec3> points;
    NeighborGraph graph;
    LocalFrame frame;
    std::string source_id;

    std::size_t size() const { return points.size(); }
};

inline CleanStats make_clean_stats(const PointCloud& cloud, int k) {
    CleanStats stats;
    stats.graph = knn_graph(cloud, k);
    stats.frame = local_frame(cloud, stats.graph);
    stats.points = cloud.points;
    stats.source_id = cloud.id;
    return stats;
}

// Bidirectional nearest-neighbor discrepancy with a single 1/|P| normalizer
// over both sums. Nearest assignments are frozen for the gradient (envelope
// treatment); coincident pairs contribute zero gradient.
inline double chamfer(const std::vector<Vec3>& clean, const std::vector<Vec3>& adv,
                      GradField* grad_adv = nullptr) {
    if (clean.empty() || adv.empty()) throw InvalidArgument("chamfer: empty cloud");
    if (grad_adv) *grad_adv = GradField(adv.size());
    const double inv = 1.0 / static_cast<double>(clean.size());

    double forward_sum = 0.0;
    for (const Vec3& x : clean) {
        int best = 0;
        double bd = (adv[0] - x).squaredNorm();
        for (std::size_t j = 1; j < adv.size(); ++j) {
            const double d = (adv[j] - x).squaredNorm();
            if (d < bd) {
                bd = d;
                best = static_cast<int>(j);
            }
        }
        const double dist = std::sqrt(bd);
        forward_sum += dist;
        if (grad_adv && dist > 0.0) grad_adv->add(best, inv * (adv[best] - x) / dist);
    }

    double backward_sum = 0.0;
    for (std::size_t j = 0; j < adv.size(); ++j) {
        int best = 0;
        double bd = (clean[0] - adv[j]).squaredNorm();
        for (std::size_t i = 1; i < clean.size(); ++i) {
            const double d = (clean[i] - adv[j]).squaredNorm();
            if (d < bd) {
                bd = d;
                best = static_cast<int>(i);
            }
        }
        const double dist = std::sqrt(bd);
        backward_sum += dist;
        if (grad_adv && dist > 0.0) grad_adv->add(static_cast<int>(j), inv * (adv[j] - clean[best]) / dist);
    }
    return (forward_sum + backward_sum) * inv;
}

// Mean squared difference between clean normals and normals re-estimated on
// the moved points over the clean neighborhoods. PCA normals carry no sign,
// so each re-estimated normal is flipped into the hemisphere of its clean
// counterpart before differencing. Points whose covariance spectrum falls
// below the eigengap guard keep their loss value but contribute no gradient.
inline double normal_consistency(const CleanStats& clean, const std::vector<Vec3>& adv,
                                 GradField* grad = nullptr, double gap_eps = 1e-8) {
    const std::size_t n = clean.size();
    if (adv.size() != n) throw InvalidArgument("normal_consistency: cloud size mismatch");
    if (grad) *grad = GradField(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Mat3 cov = neighborhood_covariance(adv, static_cast<int>(i), clean.graph.neighbors[i]);
        Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
        const Vec3& lam = eig.eigenvalues();
        if (!(lam.sum() > 0.0)) {
            throw DegenerateNeighborhood("normal_consistency: neighborhood of point " +
                                         std::to_string(i) + " collapsed");
        }
        const Vec3 v0 = eig.eigenvectors().col(0);
        const Vec3& n_clean = clean.frame.normals[i];
        const double s = (v0.dot(n_clean) < 0.0) ? -1.0 : 1.0;
        total += (s * v0 - n_clean).squaredNorm();
        if (grad && lam(1) - lam(0) >= gap_eps) {
            const Vec3 upstream = (2.0 / static_cast<double>(n)) * (v0 - s * n_clean);
            const Mat3 M = eigvec_vjp(eig, 0, upstream, gap_eps);
            covariance_chain(adv, static_cast<int>(i), clean.graph.neighbors[i], M, *grad);
        }
    }
    return total / static_cast<double>(n);
}

// Mean squared change of the surface-variation proxy over the clean
// neighborhoods, differentiated through the eigenvalues.
inline double curvature_consistency(const CleanStats& clean, const std::vector<Vec3>& adv,
                                    GradField* grad = nullptr) {
    const std::size_t n = clean.size();
    if (adv.size() != n) throw InvalidArgument("curvature_consistency: cloud size mismatch");
    if (grad) *grad = GradField(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Mat3 cov = neighborhood_covariance(adv, static_cast<int>(i), clean.graph.neighbors[i]);
        Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
        const Vec3& lam = eig.eigenvalues();
        const double trace = lam.sum();
        const double kappa = trace < 1e-12 ? 0.0 : std::max(0.0, lam(0) / trace);
        const double diff = kappa - clean.frame.curvature[i];
        total += sq(diff);
        if (grad && trace >= 1e-12 && lam(0) > 0.0) {
            const Vec3 v0 = eig.eigenvectors().col(0);
            const double u = (2.0 / static_cast<double>(n)) * diff;
            const Mat3 M = u * ((v0 * v0.transpose()) / trace -
                                (lam(0) / sq(trace)) * Mat3::Identity());
            covariance_chain(adv, static_cast<int>(i), clean.graph.neighbors[i], M, *grad);
        }
    }
    return total / static_cast<double>(n);
}

// Penalizes perturbation fields that differ from their clean-neighborhood
// average, suppressing high-frequency displacement noise.
inline double laplacian_smooth(const std::vector<Vec3>& delta, const NeighborGraph& graph,
                               GradField* grad = nullptr) {
    const std::size_t n = delta.size();
    if (graph.size() != n) throw InvalidArgument("laplacian_smooth: graph size mismatch");
    if (grad) *grad = GradField(n);
    const double inv_n = 1.0 / static_cast<double>(n);

    std::vector<Vec3> resid(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        Vec3 mean = Vec3::Zero();
        for (int j : graph.neighbors[i]) mean += delta[j];
        mean /= static_cast<double>(graph.neighbors[i].size());
        resid[i] = delta[i] - mean;
        total += resid[i].squaredNorm();
    }
    if (grad) {
        for (std::size_t i = 0; i < n; ++i) {
            grad->add(static_cast<int>(i), 2.0 * inv_n * resid[i]);
            const double invk = 1.0 / static_cast<double>(graph.neighbors[i].size());
            for (int j : graph.neighbors[i]) grad->add(j, -2.0 * inv_n * invk * resid[i]);
        }
    }
    return total * inv_n;
}

struct GeomLossResult {
    double value = 0.0;
    double chamfer_v = 0.0;
    double normal_v = 0.0;
    double curvature_v = 0.0;
    double laplacian_v = 0.0;
    GradField grad;
};

// Unweighted sum of the four imperceptibility terms; any global weight is
// applied by the caller.
inline GeomLossResult geom_total(const CleanStats& clean, const std::vector<Vec3>& adv,
                                 const std::vector<Vec3>& delta) {
    if (adv.size() != clean.size() || delta.size() != clean.size()) {
        throw InvalidArgument("geom_total: size mismatch");
    }
    GeomLossResult res;
    res.grad = GradField(adv.size());
    GradField g;
    res.chamfer_v = chamfer(clean.points, adv, &g);
    res.grad += g;
    res.normal_v = normal_consistency(clean, adv, &g);
    res.grad += g;
    res.curvature_v = curvature_consistency(clean, adv, &g);
    res.grad += g;
    res.laplacian_v = laplacian_smooth(delta, clean.graph, &g);
    res.grad += g;
    res.value = res.chamfer_v + res.normal_v + res.curvature_v + res.laplacian_v;
    return res;
}

}  // namespace topoattack
