#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "topoattack/grad_engine.hpp"
#include "topoattack/point_cloud.hpp"

namespace topoattack {

// Two desk-scale permutation-invariant victims. The pointwise variant maps
// each point through a shared MLP and max-pools per feature channel; the
// edge variant first lifts each point to edge features (p_i, p_j - p_i)
// over its k nearest neighbors and max-pools those per point before the
// global pool. Both finish with a small dense head producing logits.
class PointClassifier {
  public:
    enum class Variant { kPointwise, kEdge };

    struct Layer {
        Eigen::MatrixXd W;
        Eigen::VectorXd b;
    };

    struct Cache {
        std::vector<std::vector<int>> nbrs;  // edge variant only
        Eigen::MatrixXd X;                   // rows fed to the shared MLP
        Eigen::MatrixXd H1, H2;
        Eigen::MatrixXd F;                   // per-point features after the neighbor max
        Eigen::MatrixXi arg_nbr;             // winning neighbor slot per (point, channel)
        Eigen::VectorXd g;                   // globally pooled features
        Eigen::VectorXi arg_point;           // winning point per channel
        Eigen::VectorXd h3;
        Eigen::VectorXd logits;
        int n_points = 0;
    };

    struct ParamGrads {
        Layer l1, l2, h1, h2;
    };

    Variant variant = Variant::kPointwise;
    int n_classes = 0;
    int knn_k = 16;
    std::uint64_t rng_seed = 0;
    Layer l1, l2, h1, h2;

    static constexpr int kFeat1 = 32;
    static constexpr int kFeat2 = 64;
    static constexpr int kHead = 32;

    static PointClassifier make(Variant variant, int n_classes, std::uint64_t seed) {
        if (n_classes < 2) throw InvalidArgument("classifier needs at least two classes");
        PointClassifier m;
        m.variant = variant;
        m.n_classes = n_classes;
        m.rng_seed = seed;
        Rng rng(seed);
        const int in_dim = (variant == Variant::kPointwise) ? 3 : 6;
        m.l1 = init_layer(kFeat1, in_dim, rng);
        m.l2 = init_layer(kFeat2, kFeat1, rng);
        m.h1 = init_layer(kHead, kFeat2, rng);
        m.h2 = init_layer(n_classes, kHead, rng);
        return m;
    }

    Eigen::VectorXd forward(const std::vector<Vec3>& pts) const {
        Cache cache;
        return forward(pts, cache);
    }

    Eigen::VectorXd forward(const std::vector<Vec3>& pts, Cache& cache) const {
        const int n = static_cast<int>(pts.size());
        if (n < 1) throw InvalidArgument("classifier input is empty");
        cache.n_points = n;

        if (variant == Variant::kPointwise) {
            cache.X.resize(n, 3);
            for (int i = 0; i < n; ++i) cache.X.row(i) = pts[i].transpose();
        } else {
            const int k = effective_k(n);
            if (k < 1) throw InvalidArgument("edge classifier needs at least two points");
            cache.nbrs = knn_rows(pts, k);
            cache.X.resize(n * k, 6);
            for (int i = 0; i < n; ++i) {
                for (int s = 0; s < k; ++s) {
                    const Vec3& pj = pts[cache.nbrs[i][s]];
                    cache.X.row(i * k + s) << pts[i].transpose(), (pj - pts[i]).transpose();
                }
            }
        }

        cache.H1 = ((cache.X * l1.W.transpose()).rowwise() + l1.b.transpose()).array().tanh();
        cache.H2 = ((cache.H1 * l2.W.transpose()).rowwise() + l2.b.transpose()).array().tanh();

        const Eigen::MatrixXd* pooled = &cache.H2;
        if (variant == Variant::kEdge) {
            const int k = effective_k(n);
            cache.F.resize(n, kFeat2);
            cache.arg_nbr.resize(n, kFeat2);
            for (int i = 0; i < n; ++i) {
                for (int c = 0; c < kFeat2; ++c) {
                    int best = 0;
                    double bv = cache.H2(i * k, c);
                    for (int s = 1; s < k; ++s) {
                        const double v = cache.H2(i * k + s, c);
                        if (v > bv) {
                            bv = v;
                            best = s;
                        }
                    }
                    cache.F(i, c) = bv;
                    cache.arg_nbr(i, c) = best;
                }
            }
            pooled = &cache.F;
        }

        cache.g.resize(kFeat2);
        cache.arg_point.resize(kFeat2);
        for (int c = 0; c < kFeat2; ++c) {
            int best = 0;
            double bv = (*pooled)(0, c);
            for (int i = 1; i < pooled->rows(); ++i) {
                if ((*pooled)(i, c) > bv) {
                    bv = (*pooled)(i, c);
                    best = i;
                }
            }
            cache.g(c) = bv;
            cache.arg_point(c) = best;
        }

        cache.h3 = (h1.W * cache.g + h1.b).array().tanh();
        cache.logits = h2.W * cache.h3 + h2.b;
        return cache.logits;
    }

    int predict(const std::vector<Vec3>& pts) const {
        const Eigen::VectorXd logits = forward(pts);
        int best = 0;
        for (int c = 1; c < n_classes; ++c) {
            if (logits(c) > logits(best)) best = c;
        }
        return best;
    }

    // Backward pass from dL/dlogits. Either output may be null. The max
    // pools route gradient only to the winning rows recorded in the cache.
    void backward(const Cache& cache, const Eigen::VectorXd& dlogits, GradField* dpoints,
                  ParamGrads* dparams) const {
        const Eigen::VectorXd dh3raw = h2.W.transpose() * dlogits;
        const Eigen::VectorXd dz3 =
            (dh3raw.array() * (1.0 - cache.h3.array().square())).matrix();
        const Eigen::VectorXd dg = h1.W.transpose() * dz3;

        if (dparams) {
            dparams->h2.W = dlogits * cache.h3.transpose();
            dparams->h2.b = dlogits;
            dparams->h1.W = dz3 * cache.g.transpose();
            dparams->h1.b = dz3;
        }

        Eigen::MatrixXd dH2 = Eigen::MatrixXd::Zero(cache.H2.rows(), cache.H2.cols());
        if (variant == Variant::kPointwise) {
            for (int c = 0; c < kFeat2; ++c) dH2(cache.arg_point(c), c) = dg(c);
        } else {
            const int k = effective_k(cache.n_points);
            for (int c = 0; c < kFeat2; ++c) {
                const int i = cache.arg_point(c);
                dH2(i * k + cache.arg_nbr(i, c), c) = dg(c);
            }
        }

        const Eigen::MatrixXd dZ2 = dH2.array() * (1.0 - cache.H2.array().square());
        const Eigen::MatrixXd dH1 = dZ2 * l2.W;
        const Eigen::MatrixXd dZ1 = dH1.array() * (1.0 - cache.H1.array().square());

        if (dparams) {
            dparams->l2.W = dZ2.transpose() * cache.H1;
            dparams->l2.b = dZ2.colwise().sum();
            dparams->l1.W = dZ1.transpose() * cache.X;
            dparams->l1.b = dZ1.colwise().sum();
        }
        if (!dpoints) return;

        const Eigen::MatrixXd dX = dZ1 * l1.W;
        *dpoints = GradField(static_cast<std::size_t>(cache.n_points));
        if (variant == Variant::kPointwise) {
            for (int i = 0; i < cache.n_points; ++i) dpoints->g[i] = dX.row(i).transpose();
        } else {
            const int k = effective_k(cache.n_points);
            for (int i = 0; i < cache.n_points; ++i) {
                for (int s = 0; s < k; ++s) {
                    const auto row = dX.row(i * k + s);
                    const Vec3 dpi = row.head<3>().transpose();
                    const Vec3 drel = row.tail<3>().transpose();
                    dpoints->g[i] += dpi - drel;
                    dpoints->g[cache.nbrs[i][s]] += drel;
                }
            }
        }
    }

    int effective_k(int n_points) const { return std::min(knn_k, n_points - 1); }

  private:
    static Layer init_layer(int out, int in, Rng& rng) {
        Layer l;
        l.W.resize(out, in);
        l.b = Eigen::VectorXd::Zero(out);
        const double s = 1.0 / std::sqrt(static_cast<double>(in));
        for (int i = 0; i < out; ++i) {
            for (int j = 0; j < in; ++j) l.W(i, j) = rng.uniform(-s, s);
        }
        return l;
    }

    static std::vector<std::vector<int>> knn_rows(const std::vector<Vec3>& pts, int k) {
        PointCloud cloud;
        cloud.points = pts;
        return knn_graph(cloud, k).neighbors;
    }
};

// Carlini-Wagner margin: max(f_y - max_{j != y} f_j, -kappa). The gradient
// is zero in the clamped regime; the runner-up tie breaks toward the lowest
// index so the subgradient choice is deterministic.
inline double cw_margin_loss(const Eigen::VectorXd& logits, int y, double kappa,
                             Eigen::VectorXd* dlogits = nullptr) {
    const int c = static_cast<int>(logits.size());
    if (y < 0 || y >= c) throw InvalidArgument("label out of range");
    if (kappa < 0.0) throw InvalidArgument("kappa must be nonnegative");
    int runner = -1;
    for (int j = 0; j < c; ++j) {
        if (j == y) continue;
        if (runner < 0 || logits(j) > logits(runner)) runner = j;
    }
    if (runner < 0) throw InvalidArgument("margin needs at least two classes");
    const double margin = logits(y) - logits(runner);
    if (dlogits) {
        dlogits->setZero(c);
        // The subgradient at the clamp boundary follows the margin branch.
        if (margin >= -kappa) {
            (*dlogits)(y) = 1.0;
            (*dlogits)(runner) = -1.0;
        }
    }
    return std::max(margin, -kappa);
}

// Loss and input gradient of the margin objective for one labeled cloud.
inline double classifier_margin_grad(const PointClassifier& model, const std::vector<Vec3>& pts,
                                     int y, double kappa, GradField& dpoints) {
    PointClassifier::Cache cache;
    model.forward(pts, cache);
    Eigen::VectorXd dlogits;
    const double loss = cw_margin_loss(cache.logits, y, kappa, &dlogits);
    if (dlogits.norm() == 0.0) {
        dpoints = GradField(pts.size());
        return loss;
    }
    model.backward(cache, dlogits, &dpoints, nullptr);
    return loss;
}

inline double softmax_cross_entropy(const Eigen::VectorXd& logits, int y,
                                    Eigen::VectorXd* dlogits = nullptr) {
    const Eigen::VectorXd z = (logits.array() - logits.maxCoeff()).exp();
    const Eigen::VectorXd p = z / z.sum();
    if (dlogits) {
        *dlogits = p;
        (*dlogits)(y) -= 1.0;
    }
    return -std::log(std::max(p(y), 1e-300));
}

struct TrainConfig {
    int epochs = 60;
    int batch_size = 16;
    double lr = 0.01;
    std::string optimizer = "adam";  // "adam" or "sgd"
    double momentum = 0.9;
    std::uint64_t seed = 1;
};

struct TrainLog {
    std::vector<double> epoch_loss;
};

namespace detail {

struct Optimizer {
    bool adam;
    double lr, momentum;
    int t = 0;
    std::vector<Eigen::MatrixXd> mW, vW;
    std::vector<Eigen::VectorXd> mb, vb;

    Optimizer(const TrainConfig& cfg, const std::vector<PointClassifier::Layer*>& layers)
        : adam(cfg.optimizer == "adam"), lr(cfg.lr), momentum(cfg.momentum) {
        for (const auto* l : layers) {
            mW.push_back(Eigen::MatrixXd::Zero(l->W.rows(), l->W.cols()));
            vW.push_back(Eigen::MatrixXd::Zero(l->W.rows(), l->W.cols()));
            mb.push_back(Eigen::VectorXd::Zero(l->b.size()));
            vb.push_back(Eigen::VectorXd::Zero(l->b.size()));
        }
    }

    template <typename T>
    void apply_one(T& param, T& m, T& v, const T& grad) {
        if (adam) {
            const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
            m = b1 * m + (1.0 - b1) * grad;
            v = (b2 * v.array() + (1.0 - b2) * grad.array().square()).matrix();
            const double bc1 = 1.0 - std::pow(b1, t);
            const double bc2 = 1.0 - std::pow(b2, t);
            param.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
        } else {
            m = momentum * m + grad;
            param -= lr * m;
        }
    }

    void step(const std::vector<PointClassifier::Layer*>& layers,
              const std::vector<const PointClassifier::Layer*>& grads) {
        ++t;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            apply_one(layers[i]->W, mW[i], vW[i], grads[i]->W);
            apply_one(layers[i]->b, mb[i], vb[i], grads[i]->b);
        }
    }
};

}  // namespace detail

inline PointClassifier train_classifier(const std::vector<PointCloud>& data, int n_classes,
                                        PointClassifier::Variant variant, const TrainConfig& cfg,
                                        TrainLog* log = nullptr) {
    if (data.empty()) throw InvalidArgument("training set is empty");
    if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.lr > 0.0)) {
        throw InvalidArgument("training config values must be positive");
    }
    if (cfg.optimizer != "adam" && cfg.optimizer != "sgd") {
        throw InvalidArgument("unknown optimizer '" + cfg.optimizer + "'");
    }
    for (const PointCloud& c : data) {
        if (!c.label || *c.label < 0 || *c.label >= n_classes) {
            throw InvalidArgument("training sample '" + c.id + "' lacks a label in range");
        }
    }

    PointClassifier model = PointClassifier::make(variant, n_classes, cfg.seed);
    std::vector<PointClassifier::Layer*> layers{&model.l1, &model.l2, &model.h1, &model.h2};
    detail::Optimizer opt(cfg, layers);
    Rng rng(cfg.seed ^ 0xa5a5a5a5a5a5a5a5ULL);
    std::vector<int> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            PointClassifier::ParamGrads sum;
            sum.l1 = {Eigen::MatrixXd::Zero(model.l1.W.rows(), model.l1.W.cols()),
                      Eigen::VectorXd::Zero(model.l1.b.size())};
            sum.l2 = {Eigen::MatrixXd::Zero(model.l2.W.rows(), model.l2.W.cols()),
                      Eigen::VectorXd::Zero(model.l2.b.size())};
            sum.h1 = {Eigen::MatrixXd::Zero(model.h1.W.rows(), model.h1.W.cols()),
                      Eigen::VectorXd::Zero(model.h1.b.size())};
            sum.h2 = {Eigen::MatrixXd::Zero(model.h2.W.rows(), model.h2.W.cols()),
                      Eigen::VectorXd::Zero(model.h2.b.size())};
            for (std::size_t s = start; s < stop; ++s) {
                const PointCloud& sample = data[order[s]];
                PointClassifier::Cache cache;
                model.forward(sample.points, cache);
                Eigen::VectorXd dlogits;
                epoch_loss += softmax_cross_entropy(cache.logits, *sample.label, &dlogits);
                PointClassifier::ParamGrads g;
                model.backward(cache, dlogits, nullptr, &g);
                sum.l1.W += g.l1.W;
                sum.l1.b += g.l1.b;
                sum.l2.W += g.l2.W;
                sum.l2.b += g.l2.b;
                sum.h1.W += g.h1.W;
                sum.h1.b += g.h1.b;
                sum.h2.W += g.h2.W;
                sum.h2.b += g.h2.b;
            }
            const double inv = 1.0 / static_cast<double>(stop - start);
            sum.l1.W *= inv;
            sum.l1.b *= inv;
            sum.l2.W *= inv;
            sum.l2.b *= inv;
            sum.h1.W *= inv;
            sum.h1.b *= inv;
            sum.h2.W *= inv;
            sum.h2.b *= inv;
            opt.step(layers, {&sum.l1, &sum.l2, &sum.h1, &sum.h2});
        }
        if (log) log->epoch_loss.push_back(epoch_loss / static_cast<double>(data.size()));
    }
    return model;
}

inline double classifier_accuracy(const PointClassifier& model, const std::vector<PointCloud>& data) {
    if (data.empty()) throw InvalidArgument("empty evaluation set");
    int hit = 0;
    for (const PointCloud& c : data) {
        if (!c.label) throw InvalidArgument("evaluation sample '" + c.id + "' lacks a label");
        hit += (model.predict(c.points) == *c.label) ? 1 : 0;
    }
    return static_cast<double>(hit) / static_cast<double>(data.size());
}

namespace detail {

inline void write_tensor(std::ostream& os, const std::string& name, const Eigen::MatrixXd& m) {
    os << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    char buf[40];
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
            os << buf << (j + 1 < m.cols() ? " " : "");
        }
        os << '\n';
    }
}

inline Eigen::MatrixXd read_tensor(std::istream& is, const std::string& want, int& line_no) {
    std::string tag, name;
    Eigen::Index rows = 0, cols = 0;
    if (!(is >> tag >> name >> rows >> cols) || tag != "tensor" || name != want || rows < 1 ||
        cols < 1) {
        throw ParseError("checkpoint: expected tensor " + want, line_no);
    }
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            if (!(is >> m(i, j))) throw ParseError("checkpoint: truncated tensor " + want, line_no);
        }
    }
    line_no += static_cast<int>(rows) + 1;
    return m;
}

}  // namespace detail

// Text checkpoint with a version header; doubles are printed with 17
// significant digits so a round trip restores them bit for bit.
inline void save_classifier(const PointClassifier& model, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw InvalidArgument("cannot open '" + path + "' for writing");
    os << "topoattack classifier v1\n";
    os << "variant " << (model.variant == PointClassifier::Variant::kPointwise ? "pointwise" : "edge")
       << '\n';
    os << "classes " << model.n_classes << '\n';
    os << "knn " << model.knn_k << '\n';
    os << "seed " << model.rng_seed << '\n';
    detail::write_tensor(os, "l1.W", model.l1.W);
    detail::write_tensor(os, "l1.b", model.l1.b);
    detail::write_tensor(os, "l2.W", model.l2.W);
    detail::write_tensor(os, "l2.b", model.l2.b);
    detail::write_tensor(os, "h1.W", model.h1.W);
    detail::write_tensor(os, "h1.b", model.h1.b);
    detail::write_tensor(os, "h2.W", model.h2.W);
    detail::write_tensor(os, "h2.b", model.h2.b);
    if (!os) throw InvalidArgument("failed while writing '" + path + "'");
}

inline PointClassifier load_classifier(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InvalidArgument("cannot open '" + path + "' for reading");
    std::string header;
    std::getline(is, header);
    if (header != "topoattack classifier v1") throw ParseError("unrecognized checkpoint header", 1);

    PointClassifier m;
    std::string key, value;
    int line_no = 2;
    is >> key >> value;
    if (key != "variant" || (value != "pointwise" && value != "edge")) {
        throw ParseError("checkpoint: bad variant line", line_no);
    }
    m.variant = (value == "pointwise") ? PointClassifier::Variant::kPointwise
                                       : PointClassifier::Variant::kEdge;
    if (!(is >> key >> m.n_classes) || key != "classes" || m.n_classes < 2) {
        throw ParseError("checkpoint: bad classes line", ++line_no);
    }
    if (!(is >> key >> m.knn_k) || key != "knn" || m.knn_k < 1) {
        throw ParseError("checkpoint: bad knn line", ++line_no);
    }
    if (!(is >> key >> m.rng_seed) || key != "seed") {
        throw ParseError("checkpoint: bad seed line", ++line_no);
    }
    auto as_vector = [](const Eigen::MatrixXd& t) -> Eigen::VectorXd {
        if (t.cols() != 1) throw ParseError("checkpoint: bias tensor must have one column", 0);
        return t.col(0);
    };
    m.l1.W = detail::read_tensor(is, "l1.W", line_no);
    m.l1.b = as_vector(detail::read_tensor(is, "l1.b", line_no));
    m.l2.W = detail::read_tensor(is, "l2.W", line_no);
    m.l2.b = as_vector(detail::read_tensor(is, "l2.b", line_no));
    m.h1.W = detail::read_tensor(is, "h1.W", line_no);
    m.h1.b = as_vector(detail::read_tensor(is, "h1.b", line_no));
    m.h2.W = detail::read_tensor(is, "h2.W", line_no);
    m.h2.b = as_vector(detail::read_tensor(is, "h2.b", line_no));
    if (m.h2.W.rows() != m.n_classes) throw ParseError("checkpoint: head size mismatch", line_no);
    const int in_dim = (m.variant == PointClassifier::Variant::kPointwise) ? 3 : 6;
    if (m.l1.W.cols() != in_dim) throw ParseError("checkpoint: input width mismatch", line_no);
    return m;
}

}  // namespace topoattack
