#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ldavae/autodiff.hpp"
#include "ldavae/rng.hpp"
#include "ldavae/tensor.hpp"

namespace ldavae::features {

/// N x (n_f + K) design matrix: VAE latent block first, LDA topic block
/// second, rows bound to corpus order.
struct FeatureMatrix {
    Tensor rows;
    std::size_t vae_dim = 0;
    std::size_t lda_dim = 0;

    Tensor vae_block() const { return block(0, vae_dim); }
    Tensor lda_block() const { return block(vae_dim, lda_dim); }

    Tensor block(std::size_t start, std::size_t width) const {
        Tensor out({rows.rows(), width});
        for (std::size_t i = 0; i < rows.rows(); ++i)
            std::copy(&rows.data[i * rows.cols() + start],
                      &rows.data[i * rows.cols() + start + width], &out.data[i * width]);
        return out;
    }
};

inline FeatureMatrix concat_features(const Tensor& vae_feats, const Tensor& lda_feats) {
    if (vae_feats.rank() != 2 || lda_feats.rank() != 2 ||
        vae_feats.rows() != lda_feats.rows())
        throw std::invalid_argument("concat_features: row counts differ (" +
                                    vae_feats.shape_str() + " vs " + lda_feats.shape_str() +
                                    ")");
    FeatureMatrix f;
    f.vae_dim = vae_feats.cols();
    f.lda_dim = lda_feats.cols();
    f.rows = Tensor({vae_feats.rows(), f.vae_dim + f.lda_dim});
    for (std::size_t i = 0; i < vae_feats.rows(); ++i) {
        std::copy(&vae_feats.data[i * f.vae_dim], &vae_feats.data[(i + 1) * f.vae_dim],
                  &f.rows.data[i * f.rows.cols()]);
        std::copy(&lda_feats.data[i * f.lda_dim], &lda_feats.data[(i + 1) * f.lda_dim],
                  &f.rows.data[i * f.rows.cols() + f.vae_dim]);
    }
    return f;
}

enum class ClassifierKind { mlp, svm, lr, nb, rf, knn };

inline std::string kind_name(ClassifierKind k) {
    switch (k) {
        case ClassifierKind::mlp: return "mlp";
        case ClassifierKind::svm: return "svm";
        case ClassifierKind::lr: return "lr";
        case ClassifierKind::nb: return "nb";
        case ClassifierKind::rf: return "rf";
        case ClassifierKind::knn: return "knn";
    }
    throw std::logic_error("kind_name: bad kind");
}

inline ClassifierKind kind_from_name(const std::string& s) {
    if (s == "mlp") return ClassifierKind::mlp;
    if (s == "svm") return ClassifierKind::svm;
    if (s == "lr") return ClassifierKind::lr;
    if (s == "nb") return ClassifierKind::nb;
    if (s == "rf") return ClassifierKind::rf;
    if (s == "knn") return ClassifierKind::knn;
    throw std::invalid_argument("unknown classifier kind: " + s);
}

inline std::vector<ClassifierKind> all_classifier_kinds() {
    return {ClassifierKind::mlp, ClassifierKind::svm, ClassifierKind::lr, ClassifierKind::nb,
            ClassifierKind::rf, ClassifierKind::knn};
}

struct Hyperparams {
    // lr / svm
    std::size_t linear_epochs = 200;
    double linear_lr = 0.1;
    double l2 = 1e-4;
    // rf
    std::size_t rf_trees = 100;
    std::size_t rf_max_depth = 16;
    std::size_t rf_min_samples = 2;
    // knn
    std::size_t knn_k = 5;
    // mlp
    std::size_t mlp_hidden = 64;
    std::size_t mlp_epochs = 60;
    std::size_t mlp_batch = 32;
    double mlp_lr = 1e-2;
};

/// Per-feature train-set standardization (used by SVM, LR, KNN, MLP; RF and
/// NB see raw features).
struct Scaler {
    std::vector<double> mean, stdev;

    static Scaler fit(const Tensor& X) {
        const std::size_t n = X.rows(), d = X.cols();
        Scaler s;
        s.mean.assign(d, 0.0);
        s.stdev.assign(d, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) s.mean[j] += X.data[i * d + j];
        for (double& m : s.mean) m /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                const double c = X.data[i * d + j] - s.mean[j];
                s.stdev[j] += c * c;
            }
        for (double& v : s.stdev) {
            v = std::sqrt(v / static_cast<double>(n));
            if (v < 1e-12) v = 1.0;  // constant feature
        }
        return s;
    }

    Tensor apply(const Tensor& X) const {
        Tensor out = X;
        const std::size_t d = mean.size();
        for (std::size_t i = 0; i < X.rows(); ++i)
            for (std::size_t j = 0; j < d; ++j)
                out.data[i * d + j] = (X.data[i * d + j] - mean[j]) / stdev[j];
        return out;
    }
};

namespace detail {

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    double positive_fraction = 0.0;
};

struct Tree {
    std::vector<TreeNode> nodes;

    double score_row(const double* x) const {
        int at = 0;
        while (nodes[static_cast<std::size_t>(at)].feature >= 0) {
            const TreeNode& n = nodes[static_cast<std::size_t>(at)];
            at = x[n.feature] <= n.threshold ? n.left : n.right;
        }
        return nodes[static_cast<std::size_t>(at)].positive_fraction;
    }
};

/// Gini impurity of a (n0, n1) split pair, weighted.
inline double gini_pair(double l0, double l1, double r0, double r1) {
    const double ln = l0 + l1, rn = r0 + r1, n = ln + rn;
    double g = 0.0;
    if (ln > 0) g += ln / n * (1.0 - (l0 / ln) * (l0 / ln) - (l1 / ln) * (l1 / ln));
    if (rn > 0) g += rn / n * (1.0 - (r0 / rn) * (r0 / rn) - (r1 / rn) * (r1 / rn));
    return g;
}

inline void grow_tree(Tree& tree, const Tensor& X, const std::vector<int>& y,
                      std::vector<std::size_t>& idx, std::size_t lo, std::size_t hi,
                      std::size_t depth, const Hyperparams& hp, Rng& rng, int node_slot) {
    const std::size_t d = X.cols();
    std::size_t n1 = 0;
    for (std::size_t p = lo; p < hi; ++p) n1 += static_cast<std::size_t>(y[idx[p]]);
    const std::size_t n = hi - lo;
    TreeNode& self = tree.nodes[static_cast<std::size_t>(node_slot)];
    self.positive_fraction = static_cast<double>(n1) / static_cast<double>(n);

    if (depth >= hp.rf_max_depth || n < hp.rf_min_samples || n1 == 0 || n1 == n) return;

    // √d feature subsample per node.
    std::vector<std::size_t> feats(d);
    for (std::size_t j = 0; j < d; ++j) feats[j] = j;
    rng.shuffle(feats);
    const std::size_t n_try =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(d))));
    feats.resize(n_try);

    double best_gini = std::numeric_limits<double>::infinity();
    int best_feat = -1;
    double best_thresh = 0.0;
    std::vector<std::pair<double, int>> vals(n);
    for (std::size_t f : feats) {
        for (std::size_t p = lo; p < hi; ++p)
            vals[p - lo] = {X.at(idx[p], f), y[idx[p]]};
        std::sort(vals.begin(), vals.end());
        double l0 = 0, l1 = 0;
        double r0 = static_cast<double>(n - n1), r1 = static_cast<double>(n1);
        for (std::size_t p = 0; p + 1 < n; ++p) {
            if (vals[p].second == 1) {
                l1 += 1;
                r1 -= 1;
            } else {
                l0 += 1;
                r0 -= 1;
            }
            if (vals[p].first == vals[p + 1].first) continue;
            const double g = gini_pair(l0, l1, r0, r1);
            if (g < best_gini) {
                best_gini = g;
                best_feat = static_cast<int>(f);
                best_thresh = 0.5 * (vals[p].first + vals[p + 1].first);
            }
        }
    }
    if (best_feat < 0) return;

    const auto mid = std::stable_partition(
        idx.begin() + static_cast<long>(lo), idx.begin() + static_cast<long>(hi),
        [&](std::size_t i) { return X.at(i, static_cast<std::size_t>(best_feat)) <= best_thresh; });
    const std::size_t split = static_cast<std::size_t>(mid - idx.begin());
    if (split == lo || split == hi) return;

    const int left_slot = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    const int right_slot = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes[static_cast<std::size_t>(node_slot)].feature = best_feat;
    tree.nodes[static_cast<std::size_t>(node_slot)].threshold = best_thresh;
    tree.nodes[static_cast<std::size_t>(node_slot)].left = left_slot;
    tree.nodes[static_cast<std::size_t>(node_slot)].right = right_slot;
    grow_tree(tree, X, y, idx, lo, split, depth + 1, hp, rng, left_slot);
    grow_tree(tree, X, y, idx, split, hi, depth + 1, hp, rng, right_slot);
}

}  // namespace detail

/// Fitted classifier; the populated fields depend on kind.
struct ClassifierModel {
    ClassifierKind kind = ClassifierKind::lr;
    std::size_t input_dim = 0;
    Hyperparams hyper;
    Scaler scaler;  // identity for rf/nb

    // lr / svm
    std::vector<double> weights;
    double bias = 0.0;

    // nb: per class per feature
    std::vector<double> nb_mean0, nb_var0, nb_mean1, nb_var1;
    double nb_log_prior0 = 0.0, nb_log_prior1 = 0.0;

    // rf
    std::vector<detail::Tree> forest;

    // knn
    Tensor knn_X;  // standardized training rows
    std::vector<int> knn_y;

    // mlp
    Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

struct Predictions {
    std::vector<int> labels;
    std::vector<double> scores;  // probability or margin, by kind
};

namespace detail {

inline void check_training_inputs(const Tensor& X, const std::vector<int>& y) {
    if (X.rank() != 2 || X.rows() != y.size() || X.rows() == 0)
        throw std::invalid_argument("fit_classifier: X/y size mismatch");
    if (!X.all_finite()) throw std::invalid_argument("fit_classifier: non-finite features");
    bool has0 = false, has1 = false;
    for (int v : y) {
        if (v == 0) has0 = true;
        else if (v == 1) has1 = true;
        else throw std::invalid_argument("fit_classifier: labels must be 0/1");
    }
    if (!has0 || !has1)
        throw std::invalid_argument("fit_classifier: both classes required in training data");
}

inline double dot_bias(const std::vector<double>& w, double b, const double* x) {
    double s = b;
    for (std::size_t j = 0; j < w.size(); ++j) s += w[j] * x[j];
    return s;
}

inline void fit_linear(ClassifierModel& m, const Tensor& X_raw, const std::vector<int>& y,
                       bool hinge, std::uint64_t seed) {
    m.scaler = Scaler::fit(X_raw);
    const Tensor X = m.scaler.apply(X_raw);
    const std::size_t n = X.rows(), d = X.cols();
    m.weights.assign(d, 0.0);
    m.bias = 0.0;
    Rng rng(seed);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    const double lr = m.hyper.linear_lr;
    const double l2 = m.hyper.l2;
    for (std::size_t epoch = 0; epoch < m.hyper.linear_epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t i : order) {
            const double* x = &X.data[i * d];
            const double margin = dot_bias(m.weights, m.bias, x);
            double g;  // d(loss)/d(margin)
            if (hinge) {
                const double ys = y[i] == 1 ? 1.0 : -1.0;
                g = ys * margin < 1.0 ? -ys : 0.0;
            } else {
                const double p = 1.0 / (1.0 + std::exp(-margin));
                g = p - static_cast<double>(y[i]);
            }
            for (std::size_t j = 0; j < d; ++j)
                m.weights[j] -= lr * (g * x[j] + l2 * m.weights[j]);
            m.bias -= lr * g;
        }
    }
}

inline void fit_nb(ClassifierModel& m, const Tensor& X, const std::vector<int>& y) {
    const std::size_t n = X.rows(), d = X.cols();
    std::size_t n1 = 0;
    for (int v : y) n1 += static_cast<std::size_t>(v);
    const std::size_t n0 = n - n1;
    m.nb_mean0.assign(d, 0.0);
    m.nb_mean1.assign(d, 0.0);
    m.nb_var0.assign(d, 0.0);
    m.nb_var1.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto& mean = y[i] == 1 ? m.nb_mean1 : m.nb_mean0;
        for (std::size_t j = 0; j < d; ++j) mean[j] += X.data[i * d + j];
    }
    for (std::size_t j = 0; j < d; ++j) {
        m.nb_mean0[j] /= static_cast<double>(n0);
        m.nb_mean1[j] /= static_cast<double>(n1);
    }
    for (std::size_t i = 0; i < n; ++i) {
        auto& mean = y[i] == 1 ? m.nb_mean1 : m.nb_mean0;
        auto& var = y[i] == 1 ? m.nb_var1 : m.nb_var0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = X.data[i * d + j] - mean[j];
            var[j] += c * c;
        }
    }
    double var_floor = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        m.nb_var0[j] /= static_cast<double>(n0);
        m.nb_var1[j] /= static_cast<double>(n1);
        var_floor = std::max({var_floor, m.nb_var0[j], m.nb_var1[j]});
    }
    var_floor = std::max(1e-9 * var_floor, 1e-12);
    for (std::size_t j = 0; j < d; ++j) {
        m.nb_var0[j] = std::max(m.nb_var0[j], var_floor);
        m.nb_var1[j] = std::max(m.nb_var1[j], var_floor);
    }
    m.nb_log_prior0 = std::log(static_cast<double>(n0) / static_cast<double>(n));
    m.nb_log_prior1 = std::log(static_cast<double>(n1) / static_cast<double>(n));
}

inline void fit_rf(ClassifierModel& m, const Tensor& X, const std::vector<int>& y,
                   std::uint64_t seed) {
    const std::size_t n = X.rows();
    Rng master(seed);
    std::vector<std::uint64_t> tree_seeds(m.hyper.rf_trees);
    for (auto& s : tree_seeds) s = master.raw();
    m.forest.resize(m.hyper.rf_trees);
    for (std::size_t t = 0; t < m.hyper.rf_trees; ++t) {
        Rng rng(tree_seeds[t]);
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i)
            idx[i] = static_cast<std::size_t>(rng.uniform_int(n));  // bootstrap
        detail::Tree& tree = m.forest[t];
        tree.nodes.clear();
        tree.nodes.emplace_back();
        detail::grow_tree(tree, X, y, idx, 0, n, 0, m.hyper, rng, 0);
    }
}

inline void fit_mlp(ClassifierModel& m, const Tensor& X_raw, const std::vector<int>& y,
                    std::uint64_t seed) {
    using autodiff::Graph;
    using autodiff::Node;
    using autodiff::Variable;
    m.scaler = Scaler::fit(X_raw);
    const Tensor X = m.scaler.apply(X_raw);
    const std::size_t n = X.rows(), d = X.cols(), h = m.hyper.mlp_hidden;

    Rng rng(seed);
    auto uniform_init = [&rng](std::vector<std::size_t> shape, double k) {
        Variable v{Tensor(std::move(shape))};
        for (double& x : v.value.data) x = rng.uniform(-k, k);
        return v;
    };
    Variable w1 = uniform_init({d, h}, 1.0 / std::sqrt(static_cast<double>(d)));
    Variable b1{Tensor({1, h})};
    Variable w2 = uniform_init({h, 1}, 1.0 / std::sqrt(static_cast<double>(h)));
    Variable b2{Tensor({1, 1})};
    autodiff::AdamOptimizer opt({&w1, &b1, &w2, &b2}, m.hyper.mlp_lr);

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t epoch = 0; epoch < m.hyper.mlp_epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += m.hyper.mlp_batch) {
            const std::size_t stop = std::min(n, start + m.hyper.mlp_batch);
            Tensor xb({stop - start, d});
            Tensor yb({stop - start, 1});
            for (std::size_t p = start; p < stop; ++p) {
                std::copy(&X.data[order[p] * d], &X.data[(order[p] + 1) * d],
                          &xb.data[(p - start) * d]);
                yb.data[p - start] = static_cast<double>(y[order[p]]);
            }
            Graph g;
            Node* hid = g.relu(g.add_rowvec(g.matmul(g.constant(xb), g.leaf(w1)), g.leaf(b1)));
            Node* p1 = g.sigmoid(g.add_rowvec(g.matmul(hid, g.leaf(w2)), g.leaf(b2)));
            Node* pc = g.clamp(p1, 1e-12, 1.0 - 1e-12);
            Node* yn = g.constant(yb);
            Node* ll = g.add(g.mul(yn, g.log_(pc)),
                             g.mul(g.affine(yn, -1.0, 1.0), g.log_(g.affine(pc, -1.0, 1.0))));
            Node* loss = g.scale(g.mean(ll), -1.0);
            opt.zero_grad();
            g.backward(loss);
            opt.step();
        }
    }
    m.mlp_w1 = w1.value;
    m.mlp_b1 = b1.value;
    m.mlp_w2 = w2.value;
    m.mlp_b2 = b2.value;
}

}  // namespace detail

/// Fits one of the six classifier kinds. Deterministic given seed.
inline ClassifierModel fit_classifier(ClassifierKind kind, const Tensor& X,
                                      const std::vector<int>& y,
                                      const Hyperparams& hyper = {}, std::uint64_t seed = 0) {
    detail::check_training_inputs(X, y);
    ClassifierModel m;
    m.kind = kind;
    m.input_dim = X.cols();
    m.hyper = hyper;
    switch (kind) {
        case ClassifierKind::lr:
            detail::fit_linear(m, X, y, /*hinge=*/false, seed);
            break;
        case ClassifierKind::svm:
            detail::fit_linear(m, X, y, /*hinge=*/true, seed);
            break;
        case ClassifierKind::nb:
            detail::fit_nb(m, X, y);
            break;
        case ClassifierKind::rf:
            detail::fit_rf(m, X, y, seed);
            break;
        case ClassifierKind::knn:
            m.scaler = Scaler::fit(X);
            m.knn_X = m.scaler.apply(X);
            m.knn_y = y;
            break;
        case ClassifierKind::mlp:
            detail::fit_mlp(m, X, y, seed);
            break;
    }
    return m;
}

/// Labels in {0,1} plus a score per row: P(fake) for probability-producing
/// kinds, the signed margin for SVM. A score at the decision boundary labels
/// 1 (fake).
inline Predictions predict(const ClassifierModel& m, const Tensor& X) {
    if (X.rank() != 2 || X.cols() != m.input_dim)
        throw std::invalid_argument("predict: feature dim " + X.shape_str() +
                                    " does not match training dim " +
                                    std::to_string(m.input_dim));
    const std::size_t n = X.rows(), d = X.cols();
    Predictions out;
    out.labels.resize(n);
    out.scores.resize(n);

    switch (m.kind) {
        case ClassifierKind::lr: {
            const Tensor Xs = m.scaler.apply(X);
            for (std::size_t i = 0; i < n; ++i) {
                const double margin = detail::dot_bias(m.weights, m.bias, &Xs.data[i * d]);
                out.scores[i] = 1.0 / (1.0 + std::exp(-margin));
                out.labels[i] = out.scores[i] >= 0.5 ? 1 : 0;
            }
            break;
        }
        case ClassifierKind::svm: {
            const Tensor Xs = m.scaler.apply(X);
            for (std::size_t i = 0; i < n; ++i) {
                out.scores[i] = detail::dot_bias(m.weights, m.bias, &Xs.data[i * d]);
                out.labels[i] = out.scores[i] >= 0.0 ? 1 : 0;
            }
            break;
        }
        case ClassifierKind::nb: {
            for (std::size_t i = 0; i < n; ++i) {
                const double* x = &X.data[i * d];
                double lp0 = m.nb_log_prior0, lp1 = m.nb_log_prior1;
                for (std::size_t j = 0; j < d; ++j) {
                    const double c0 = x[j] - m.nb_mean0[j];
                    const double c1 = x[j] - m.nb_mean1[j];
                    lp0 -= 0.5 * (std::log(2.0 * M_PI * m.nb_var0[j]) + c0 * c0 / m.nb_var0[j]);
                    lp1 -= 0.5 * (std::log(2.0 * M_PI * m.nb_var1[j]) + c1 * c1 / m.nb_var1[j]);
                }
                const double mx = std::max(lp0, lp1);
                const double p1 = std::exp(lp1 - mx) / (std::exp(lp0 - mx) + std::exp(lp1 - mx));
                out.scores[i] = p1;
                out.labels[i] = p1 >= 0.5 ? 1 : 0;
            }
            break;
        }
        case ClassifierKind::rf: {
            for (std::size_t i = 0; i < n; ++i) {
                double votes = 0.0;
                for (const auto& tree : m.forest)
                    votes += tree.score_row(&X.data[i * d]) >= 0.5 ? 1.0 : 0.0;
                out.scores[i] = votes / static_cast<double>(m.forest.size());
                out.labels[i] = out.scores[i] >= 0.5 ? 1 : 0;
            }
            break;
        }
        case ClassifierKind::knn: {
            const Tensor Xs = m.scaler.apply(X);
            const std::size_t train_n = m.knn_X.rows();
            const std::size_t k = std::min(m.hyper.knn_k, train_n);
            std::vector<std::pair<double, std::size_t>> dist(train_n);
            for (std::size_t i = 0; i < n; ++i) {
                const double* x = &Xs.data[i * d];
                for (std::size_t t = 0; t < train_n; ++t) {
                    double s = 0.0;
                    const double* xt = &m.knn_X.data[t * d];
                    for (std::size_t j = 0; j < d; ++j) {
                        const double c = x[j] - xt[j];
                        s += c * c;
                    }
                    dist[t] = {s, t};
                }
                std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(k),
                                  dist.end());
                double pos = 0.0;
                for (std::size_t t = 0; t < k; ++t)
                    pos += static_cast<double>(m.knn_y[dist[t].second]);
                out.scores[i] = pos / static_cast<double>(k);
                out.labels[i] = out.scores[i] >= 0.5 ? 1 : 0;
            }
            break;
        }
        case ClassifierKind::mlp: {
            const Tensor Xs = m.scaler.apply(X);
            const std::size_t h = m.mlp_w1.cols();
            for (std::size_t i = 0; i < n; ++i) {
                double z = m.mlp_b2.data[0];
                for (std::size_t j = 0; j < h; ++j) {
                    double a = m.mlp_b1.data[j];
                    for (std::size_t f = 0; f < d; ++f)
                        a += Xs.data[i * d + f] * m.mlp_w1.data[f * h + j];
                    if (a > 0.0) z += a * m.mlp_w2.data[j];
                }
                out.scores[i] = 1.0 / (1.0 + std::exp(-z));
                out.labels[i] = out.scores[i] >= 0.5 ? 1 : 0;
            }
            break;
        }
    }
    return out;
}

}  // namespace ldavae::features
