#pragma once

#include "topoattack/classifier.hpp"
#include "topoattack/geo_loss.hpp"
#include "topoattack/persistence.hpp"

namespace topoattack {

inline double curvature_std(const std::vector<double>& field) {
    if (field.empty()) throw InvalidArgument("curvature_std: empty field");
    double mean = 0.0;
    for (double v : field) mean += v;
    mean /= static_cast<double>(field.size());
    double var = 0.0;
    for (double v : field) var += sq(v - mean);
    return std::sqrt(var / static_cast<double>(field.size()));
}

// Absolute change in the spread of the curvature proxy field.
inline double csd(const PointCloud& clean, const PointCloud& adv, int k = 16) {
    const auto ka = curvature_proxy(clean, knn_graph(clean, k));
    const auto kb = curvature_proxy(adv, knn_graph(adv, k));
    return std::abs(curvature_std(ka) - curvature_std(kb));
}

// Uniformity of the point distribution, summed over ball patches around 50
// farthest-point seeds at five area fractions. Each patch contributes a
// count-imbalance term times a spacing-clutter term; the expected spacing
// d_hat is the hexagonal packing of the observed count into the patch disk.
// Patch radii derive from the bounding-sphere surface area (centroid center,
// max distance radius). Lower is more uniform.
inline double uniform_metric(const PointCloud& cloud, int fps_start = 0) {
    const int n = static_cast<int>(cloud.size());
    if (n < 64) throw InvalidArgument("uniform_metric: need at least 64 points");
    cloud.check_finite();

    Vec3 centroid = Vec3::Zero();
    for (const Vec3& p : cloud.points) centroid += p;
    centroid /= static_cast<double>(n);
    double radius = 0.0;
    for (const Vec3& p : cloud.points) radius = std::max(radius, (p - centroid).norm());
    const double area = 4.0 * M_PI * radius * radius;

    const auto seeds = farthest_point_sample(cloud, 50, fps_start);
    const double fractions[] = {0.004, 0.006, 0.008, 0.010, 0.012};

    double total = 0.0;
    std::vector<int> patch;
    for (const double p : fractions) {
        const double r = std::sqrt(p * area / M_PI);
        const double expected = p * static_cast<double>(n);
        for (const int s : seeds) {
            patch.clear();
            for (int j = 0; j < n; ++j) {
                if ((cloud.points[j] - cloud.points[s]).norm() <= r) patch.push_back(j);
            }
            const int m = static_cast<int>(patch.size());
            const double imbalance = sq(expected - m) / expected;
            if (m < 2) continue;  // spacing undefined, patch contributes nothing
            const double d_hat = std::sqrt(2.0 * M_PI * r * r / (std::sqrt(3.0) * m));
            double clutter = 0.0;
            for (const int j : patch) {
                double nearest = std::numeric_limits<double>::infinity();
                for (const int l : patch) {
                    if (l == j) continue;
                    nearest = std::min(nearest, (cloud.points[j] - cloud.points[l]).norm());
                }
                clutter += sq(nearest - d_hat) / d_hat;
            }
            clutter /= static_cast<double>(m);
            total += imbalance * clutter;
        }
    }
    return total;
}

struct DistanceReport {
    double chamfer = 0.0;
    double hausdorff = 0.0;
    double l2 = 0.0;
};

inline double directed_hausdorff(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    if (a.empty() || b.empty()) throw InvalidArgument("hausdorff: empty cloud");
    double worst = 0.0;
    for (const Vec3& p : a) {
        double best = std::numeric_limits<double>::infinity();
        for (const Vec3& q : b) best = std::min(best, (p - q).norm());
        worst = std::max(worst, best);
    }
    return worst;
}

// Chamfer and symmetric Hausdorff for any pair; the l2 entry is the
// root-mean-square per-point displacement and needs matched counts.
inline DistanceReport distance_report(const std::vector<Vec3>& clean, const std::vector<Vec3>& adv) {
    DistanceReport rep;
    rep.chamfer = chamfer(clean, adv);
    rep.hausdorff = std::max(directed_hausdorff(clean, adv), directed_hausdorff(adv, clean));
    if (clean.size() != adv.size()) {
        throw InvalidArgument("distance_report: displacement distance needs equal point counts");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < clean.size(); ++i) acc += (adv[i] - clean[i]).squaredNorm();
    rep.l2 = std::sqrt(acc / static_cast<double>(clean.size()));
    return rep;
}

// Per-dimension change in persistence entropy, adversarial minus clean.
inline std::array<double, 3> entropy_delta(const std::vector<Vec3>& clean,
                                           const std::vector<Vec3>& adv,
                                           std::uint64_t perturb_seed = 0) {
    const auto dgm_clean = compute_persistence(alpha_filtration(delaunay3d(clean, perturb_seed)));
    const auto dgm_adv = compute_persistence(alpha_filtration(delaunay3d(adv, perturb_seed)));
    std::array<double, 3> out;
    for (int dim = 0; dim < 3; ++dim) {
        out[static_cast<std::size_t>(dim)] =
            persistence_entropy(dgm_adv, dim) - persistence_entropy(dgm_clean, dim);
    }
    return out;
}

struct SampleRecord {
    std::string id;
    int label = -1;
    int clean_pred = -1;
    int adv_pred = -1;
    bool eligible = false;  // model classified the clean cloud correctly
    bool success = false;
    double csd = 0.0;
    double uniform = 0.0;
    double chamfer = 0.0;
    double hausdorff = 0.0;
    double l2 = 0.0;
    std::array<double, 3> entropy_delta = {0.0, 0.0, 0.0};
};

inline double asr(const std::vector<SampleRecord>& records) {
    int eligible = 0;
    int successes = 0;
    for (const SampleRecord& rec : records) {
        if (!rec.eligible) continue;
        ++eligible;
        successes += rec.success ? 1 : 0;
    }
    if (eligible == 0) throw EmptyCohort("attack success rate over an empty cohort");
    return 100.0 * static_cast<double>(successes) / static_cast<double>(eligible);
}

struct EvalReport {
    double asr = 0.0;
    std::vector<SampleRecord> records;
    // Means over eligible samples.
    double mean_csd = 0.0;
    double mean_uniform = 0.0;
    double mean_chamfer = 0.0;
    double mean_hausdorff = 0.0;
    double mean_l2 = 0.0;
    std::array<double, 3> mean_entropy_delta = {0.0, 0.0, 0.0};
    std::string config_echo;
};

// Full metric record for one (clean, adversarial) pair. Success is judged
// from the stored adversarial cloud, so re-evaluating saved attack artifacts
// and transferring them to another model use the same path.
inline SampleRecord sample_record(const PointClassifier& model, const PointCloud& clean,
                                  const PointCloud& adv, int knn_k = 16, int fps_start = 0) {
    if (!clean.label) throw InvalidArgument("evaluation sample '" + clean.id + "' lacks a label");
    if (*clean.label < 0 || *clean.label >= model.n_classes) {
        throw InvalidArgument("evaluation sample '" + clean.id + "' labeled outside the model classes");
    }
    SampleRecord rec;
    rec.id = clean.id;
    rec.label = *clean.label;
    rec.clean_pred = model.predict(clean.points);
    rec.adv_pred = model.predict(adv.points);
    rec.eligible = rec.clean_pred == rec.label;
    rec.success = rec.eligible && rec.adv_pred != rec.label;
    rec.csd = csd(clean, adv, knn_k);
    rec.uniform = uniform_metric(adv, fps_start);
    const DistanceReport dist = distance_report(clean.points, adv.points);
    rec.chamfer = dist.chamfer;
    rec.hausdorff = dist.hausdorff;
    rec.l2 = dist.l2;
    rec.entropy_delta = entropy_delta(clean.points, adv.points);
    return rec;
}

inline EvalReport aggregate_report(std::vector<SampleRecord> records) {
    if (records.empty()) throw EmptyCohort("evaluation cohort is empty");
    EvalReport report;
    int eligible = 0;
    for (const SampleRecord& rec : records) {
        if (!rec.eligible) continue;
        ++eligible;
        report.mean_csd += rec.csd;
        report.mean_uniform += rec.uniform;
        report.mean_chamfer += rec.chamfer;
        report.mean_hausdorff += rec.hausdorff;
        report.mean_l2 += rec.l2;
        for (int d = 0; d < 3; ++d) {
            report.mean_entropy_delta[static_cast<std::size_t>(d)] +=
                rec.entropy_delta[static_cast<std::size_t>(d)];
        }
    }
    report.records = std::move(records);
    report.asr = asr(report.records);
    report.mean_csd /= eligible;
    report.mean_uniform /= eligible;
    report.mean_chamfer /= eligible;
    report.mean_hausdorff /= eligible;
    report.mean_l2 /= eligible;
    for (double& v : report.mean_entropy_delta) v /= eligible;
    return report;
}

inline EvalReport evaluate_cohort(const PointClassifier& model,
                                  const std::vector<std::pair<PointCloud, PointCloud>>& pairs,
                                  int knn_k = 16, int fps_start = 0) {
    if (pairs.empty()) throw EmptyCohort("evaluation cohort is empty");
    std::vector<SampleRecord> records;
    records.reserve(pairs.size());
    for (const auto& [clean, adv] : pairs) {
        records.push_back(sample_record(model, clean, adv, knn_k, fps_start));
    }
    return aggregate_report(std::move(records));
}

// Success rate of pre-generated adversarial clouds against another victim,
// with eligibility judged by that victim on the clean clouds.
inline double transfer_eval(const PointClassifier& victim,
                            const std::vector<std::pair<PointCloud, PointCloud>>& pairs) {
    std::vector<SampleRecord> records;
    records.reserve(pairs.size());
    for (const auto& [clean, adv] : pairs) {
        if (!clean.label) throw InvalidArgument("transfer sample '" + clean.id + "' lacks a label");
        if (*clean.label < 0 || *clean.label >= victim.n_classes) {
            throw InvalidArgument("transfer sample '" + clean.id + "' labeled outside the victim classes");
        }
        SampleRecord rec;
        rec.label = *clean.label;
        rec.clean_pred = victim.predict(clean.points);
        rec.adv_pred = victim.predict(adv.points);
        rec.eligible = rec.clean_pred == rec.label;
        rec.success = rec.eligible && rec.adv_pred != rec.label;
        records.push_back(std::move(rec));
    }
    return asr(records);
}

}  // namespace topoattack
