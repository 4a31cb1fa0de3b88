#pragma once

#include <algorithm>
#include <limits>
#include <optional>
#include <utility>

#include "topoattack/common.hpp"

namespace topoattack {

struct PointCloud {
    std::vector<Vec3> points;
    std::optional<int> label;
    std::string id;

    std::size_t size() const { return points.size(); }

    void check_finite() const {
        for (const Vec3& p : points) {
            if (!p.allFinite()) throw InvalidArgument("point cloud contains non-finite coordinates");
        }
    }
};

struct NeighborGraph {
    int k = 0;
    std::vector<std::vector<int>> neighbors;  // N rows of k indices, nearest first
    std::string source_id;

    std::size_t size() const { return neighbors.size(); }
};

struct LocalFrame {
    std::vector<Vec3> normals;      // unit length
    std::vector<double> curvature;  // surface variation, in [0, 1/3]
};

inline void check_graph_matches(const NeighborGraph& graph, const PointCloud& cloud) {
    if (graph.size() != cloud.size() || (!graph.source_id.empty() && !cloud.id.empty() && graph.source_id != cloud.id))
        throw InvalidArgument("neighbor graph was not built from this cloud");
}

// k nearest neighbors by Euclidean distance, ties broken by lower index.
inline NeighborGraph knn_graph(const PointCloud& cloud, int k) {
    const int n = static_cast<int>(cloud.size());
    if (k <= 0) throw InvalidArgument("knn_graph: k must be positive");
    if (k >= n) throw InvalidArgument("knn_graph: k must be smaller than the point count");
    cloud.check_finite();

    NeighborGraph graph;
    graph.k = k;
    graph.source_id = cloud.id;
    graph.neighbors.resize(n);

    std::vector<std::pair<double, int>> dist(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) dist[j] = {(cloud.points[j] - cloud.points[i]).squaredNorm(), j};
        dist[i].first = std::numeric_limits<double>::infinity();  // exclude self
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        auto& row = graph.neighbors[i];
        row.resize(k);
        for (int j = 0; j < k; ++j) row[j] = dist[j].second;
    }
    return graph;
}

// Covariance of {p_i} union its neighbors, mean-centered, normalized by the
// neighborhood size. Shared by the normal/curvature estimators and the
// geometric losses so their gradients stay consistent.
inline Mat3 neighborhood_covariance(const std::vector<Vec3>& points, int i,
                                    const std::vector<int>& neighbor_row, Vec3* mean_out = nullptr) {
    const int m = static_cast<int>(neighbor_row.size()) + 1;
    Vec3 mean = points[i];
    for (int j : neighbor_row) mean += points[j];
    mean /= static_cast<double>(m);

    Mat3 cov = Mat3::Zero();
    Vec3 d = points[i] - mean;
    cov += d * d.transpose();
    for (int j : neighbor_row) {
        d = points[j] - mean;
        cov += d * d.transpose();
    }
    cov /= static_cast<double>(m);
    if (mean_out) *mean_out = mean;
    return cov;
}

// Deterministic sign fix: make the component of largest magnitude positive,
// lowest axis wins on magnitude ties.
inline Vec3 orient_normal(const Vec3& v) {
    int axis = 0;
    double best = std::abs(v[0]);
    for (int a = 1; a < 3; ++a) {
        if (std::abs(v[a]) > best) {
            best = std::abs(v[a]);
            axis = a;
        }
    }
    return v[axis] < 0.0 ? Vec3(-v) : v;
}

inline std::vector<Vec3> estimate_normals(const PointCloud& cloud, const NeighborGraph& graph) {
    check_graph_matches(graph, cloud);
    const int n = static_cast<int>(cloud.size());
    std::vector<Vec3> normals(n);
    for (int i = 0; i < n; ++i) {
        const Mat3 cov = neighborhood_covariance(cloud.points, i, graph.neighbors[i]);
        Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
        const Vec3 evals = eig.eigenvalues();  // ascending
        const double trace = evals.sum();
        // rank < 2 means the neighborhood is a point or a line; the normal
        // is undefined there and preprocessing must fail loudly.
        if (trace <= 0.0 || evals[1] <= 1e-12 * trace)
            throw DegenerateNeighborhood("estimate_normals: neighborhood of point " + std::to_string(i) +
                                         " is rank-deficient");
        normals[i] = orient_normal(eig.eigenvectors().col(0).normalized());
    }
    return normals;
}

// Surface variation lambda_min / (lambda0 + lambda1 + lambda2), in [0, 1/3].
inline std::vector<double> curvature_proxy(const PointCloud& cloud, const NeighborGraph& graph) {
    check_graph_matches(graph, cloud);
    const int n = static_cast<int>(cloud.size());
    std::vector<double> curv(n);
    for (int i = 0; i < n; ++i) {
        const Mat3 cov = neighborhood_covariance(cloud.points, i, graph.neighbors[i]);
        Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
        const Vec3 evals = eig.eigenvalues();
        const double trace = evals.sum();
        curv[i] = trace < 1e-12 ? 0.0 : std::max(0.0, evals[0] / trace);
    }
    return curv;
}

inline LocalFrame local_frame(const PointCloud& cloud, const NeighborGraph& graph) {
    return LocalFrame{estimate_normals(cloud, graph), curvature_proxy(cloud, graph)};
}

// Greedy max-min selection. Ties on the max-min distance go to the lower index.
inline std::vector<int> farthest_point_sample(const PointCloud& cloud, int m, int seed_index) {
    const int n = static_cast<int>(cloud.size());
    if (m <= 0 || m > n) throw InvalidArgument("farthest_point_sample: need 0 < m <= N");
    if (seed_index < 0 || seed_index >= n) throw InvalidArgument("farthest_point_sample: seed index out of range");

    std::vector<int> chosen;
    chosen.reserve(m);
    std::vector<bool> taken(n, false);
    std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
    int current = seed_index;
    for (int step = 0; step < m; ++step) {
        chosen.push_back(current);
        taken[current] = true;
        int next = -1;
        double best = -1.0;
        for (int j = 0; j < n; ++j) {
            const double d = (cloud.points[j] - cloud.points[current]).squaredNorm();
            if (d < min_dist[j]) min_dist[j] = d;
            if (!taken[j] && min_dist[j] > best) {
                best = min_dist[j];
                next = j;
            }
        }
        if (next < 0) break;  // only possible when m == n
        current = next;
    }
    return chosen;
}

}  // namespace topoattack
