#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ldavae/features.hpp"
#include "ldavae/math.hpp"
#include "ldavae/rng.hpp"

namespace ldavae::eval {

/// Positive class = fake = 1 throughout.
struct ConfusionCounts {
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;

    std::size_t total() const { return tp + tn + fp + fn; }
};

/// A metric that may be undefined on degenerate counts; absence carries the
/// reason instead of a silent 0.
struct Metric {
    std::optional<double> value;
    std::string absent_reason;

    bool defined() const { return value.has_value(); }
};

struct MetricsReport {
    Metric accuracy, precision, recall, f1, fpr, fnr;
    ConfusionCounts counts;
};

inline ConfusionCounts confusion(const std::vector<int>& y_true,
                                 const std::vector<int>& y_pred) {
    if (y_true.size() != y_pred.size())
        throw std::invalid_argument("confusion: length mismatch (" +
                                    std::to_string(y_true.size()) + " vs " +
                                    std::to_string(y_pred.size()) + ")");
    ConfusionCounts c;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const int t = y_true[i], p = y_pred[i];
        if ((t != 0 && t != 1) || (p != 0 && p != 1))
            throw std::invalid_argument("confusion: labels must be 0/1 at index " +
                                        std::to_string(i));
        if (t == 1 && p == 1) ++c.tp;
        else if (t == 0 && p == 0) ++c.tn;
        else if (t == 0 && p == 1) ++c.fp;
        else ++c.fn;
    }
    return c;
}

inline MetricsReport metrics(const ConfusionCounts& c) {
    MetricsReport r;
    r.counts = c;
    const double tp = static_cast<double>(c.tp), tn = static_cast<double>(c.tn);
    const double fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);

    if (c.total() == 0)
        r.accuracy.absent_reason = "no samples";
    else
        r.accuracy.value = (tp + tn) / static_cast<double>(c.total());

    if (c.tp + c.fp == 0)
        r.precision.absent_reason = "no positive predictions";
    else
        r.precision.value = tp / (tp + fp);

    if (c.tp + c.fn == 0)
        r.recall.absent_reason = "no positive samples";
    else
        r.recall.value = tp / (tp + fn);

    if (!r.precision.defined() || !r.recall.defined())
        r.f1.absent_reason = !r.precision.defined() ? "precision undefined" : "recall undefined";
    else
        r.f1.value = 2.0 * tp / (2.0 * tp + fp + fn);

    if (c.tn + c.fp == 0)
        r.fpr.absent_reason = "no real samples";
    else
        r.fpr.value = fp / (tn + fp);

    if (c.fn + c.tp == 0)
        r.fnr.absent_reason = "no fake samples";
    else
        r.fnr.value = fn / (fn + tp);

    return r;
}

/// Disjoint cover of 0..n-1. Hash binds ablation cells to one split.
struct SplitIndices {
    std::vector<std::size_t> train, test;

    std::uint64_t hash() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (std::size_t i : train) h = fnv1a64(&i, sizeof(i), h);
        h = fnv1a64("|", h);
        for (std::size_t i : test) h = fnv1a64(&i, sizeof(i), h);
        return h;
    }
};

/// Seed-deterministic split. Stratified mode preserves per-class proportions
/// within rounding (round-half-up per class).
inline SplitIndices split_indices(const std::vector<int>& labels, double train_fraction,
                                  bool stratified, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("split: train_fraction must be in (0,1)");
    const std::size_t n = labels.size();
    SplitIndices out;
    Rng rng(seed);

    auto take = [&](std::vector<std::size_t>& pool) {
        rng.shuffle(pool);
        const std::size_t n_train = static_cast<std::size_t>(
            std::floor(train_fraction * static_cast<double>(pool.size()) + 0.5));
        for (std::size_t i = 0; i < pool.size(); ++i)
            (i < n_train ? out.train : out.test).push_back(pool[i]);
    };

    if (stratified) {
        std::vector<std::size_t> pos, neg;
        for (std::size_t i = 0; i < n; ++i) (labels[i] == 1 ? pos : neg).push_back(i);
        if (pos.empty() || neg.empty())
            throw std::invalid_argument("split: stratified split needs both classes");
        take(neg);
        take(pos);
    } else {
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        take(all);
    }
    if (out.train.empty() || out.test.empty())
        throw std::runtime_error("split: degenerate split (one side empty)");
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

namespace detail {

inline Tensor take_rows(const Tensor& X, const std::vector<std::size_t>& idx) {
    Tensor out({idx.size(), X.cols()});
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy(&X.data[idx[i] * X.cols()], &X.data[(idx[i] + 1) * X.cols()],
                  &out.data[i * X.cols()]);
    return out;
}

template <typename T>
inline std::vector<T> take(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
    std::vector<T> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(v[i]);
    return out;
}

}  // namespace detail

inline const std::vector<std::string>& feature_set_names() {
    static const std::vector<std::string> names{"VAE", "LDA", "LDAVAE"};
    return names;
}

struct AblationCell {
    features::ClassifierKind kind;
    std::string feature_set;  // VAE | LDA | LDAVAE
    MetricsReport test;
    MetricsReport train;
};

struct AblationTable {
    std::vector<AblationCell> cells;
    std::uint64_t split_hash = 0;
};

/// Fits and evaluates every classifier kind on the VAE block, the LDA block,
/// and their concatenation, all cells sharing one stratified split.
inline AblationTable ablate(const features::FeatureMatrix& f, const std::vector<int>& labels,
                            const std::vector<features::ClassifierKind>& kinds,
                            std::uint64_t seed, double train_fraction = 0.9,
                            const features::Hyperparams& hyper = {}) {
    if (f.rows.rows() != labels.size())
        throw std::invalid_argument("ablate: features not row-aligned with labels");
    const SplitIndices split = split_indices(labels, train_fraction, /*stratified=*/true, seed);
    const std::vector<int> y_train = detail::take(labels, split.train);
    const std::vector<int> y_test = detail::take(labels, split.test);

    const Tensor blocks[3] = {f.vae_block(), f.lda_block(), f.rows};

    AblationTable table;
    table.split_hash = split.hash();
    for (features::ClassifierKind kind : kinds) {
        for (std::size_t b = 0; b < 3; ++b) {
            const Tensor X_train = detail::take_rows(blocks[b], split.train);
            const Tensor X_test = detail::take_rows(blocks[b], split.test);
            features::ClassifierModel model =
                features::fit_classifier(kind, X_train, y_train, hyper, seed);
            AblationCell cell;
            cell.kind = kind;
            cell.feature_set = feature_set_names()[b];
            cell.train = metrics(confusion(y_train, features::predict(model, X_train).labels));
            cell.test = metrics(confusion(y_test, features::predict(model, X_test).labels));
            table.cells.push_back(std::move(cell));
        }
    }
    return table;
}

}  // namespace ldavae::eval
