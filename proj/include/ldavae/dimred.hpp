#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ldavae/rng.hpp"
#include "ldavae/tensor.hpp"

namespace ldavae::dimred {

/// 2-d embedding plus method metadata. points keeps the input row order.
struct Projection2D {
    Tensor points;  // N x n_components
    std::string method;

    // pca
    Tensor components;  // d x n_components, orthonormal columns
    std::vector<double> explained_variance;
    bool degenerate = false;

    // tsne
    double perplexity = 0.0;
    std::size_t iterations = 0;
    double initial_kl = 0.0;
    double final_kl = 0.0;
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues descending with matching orthonormal eigenvector columns.
inline std::pair<std::vector<double>, Tensor> symmetric_eigen(const Tensor& A) {
    if (A.rank() != 2 || A.rows() != A.cols())
        throw std::invalid_argument("symmetric_eigen: matrix must be square");
    const std::size_t n = A.rows();
    Tensor M = A;
    Tensor V({n, n});
    for (std::size_t i = 0; i < n; ++i) V.at(i, i) = 1.0;

    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::fabs(M.at(i, i)));
    scale = std::max(scale, 1.0);

    for (std::size_t sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += M.at(p, q) * M.at(p, q);
        if (off < 1e-28 * scale * scale) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = M.at(p, q);
                if (std::fabs(apq) < 1e-300) continue;
                const double theta = (M.at(q, q) - M.at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t i = 0; i < n; ++i) {
                    const double mip = M.at(i, p), miq = M.at(i, q);
                    M.at(i, p) = c * mip - s * miq;
                    M.at(i, q) = s * mip + c * miq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double mpi = M.at(p, i), mqi = M.at(q, i);
                    M.at(p, i) = c * mpi - s * mqi;
                    M.at(q, i) = s * mpi + c * mqi;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vip = V.at(i, p), viq = V.at(i, q);
                    V.at(i, p) = c * vip - s * viq;
                    V.at(i, q) = s * vip + c * viq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return M.at(a, a) > M.at(b, b); });
    std::vector<double> eigvals(n);
    Tensor sorted({n, n});
    for (std::size_t j = 0; j < n; ++j) {
        eigvals[j] = M.at(order[j], order[j]);
        for (std::size_t i = 0; i < n; ++i) sorted.at(i, j) = V.at(i, order[j]);
    }
    return {eigvals, sorted};
}

/// PCA projection: center, eigendecompose the sample covariance, project on
/// the top components. Sign rule: each component's largest-magnitude loading
/// is positive. degenerate flags a kept component with ~zero variance.
inline Projection2D pca_project(const Tensor& X, std::size_t n_components = 2) {
    if (X.rank() != 2 || X.rows() < 2)
        throw std::invalid_argument("pca_project: need at least 2 rows");
    const std::size_t n = X.rows(), d = X.cols();
    if (d < n_components)
        throw std::invalid_argument("pca_project: fewer features than components");

    Tensor centered = X;
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += X.at(i, j);
        mean /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) centered.at(i, j) -= mean;
    }

    Tensor cov({d, d});
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = a; b < d; ++b) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += centered.at(i, a) * centered.at(i, b);
            s /= static_cast<double>(n - 1);
            cov.at(a, b) = s;
            cov.at(b, a) = s;
        }

    auto [eigvals, eigvecs] = symmetric_eigen(cov);

    Projection2D out;
    out.method = "pca";
    out.components = Tensor({d, n_components});
    out.explained_variance.resize(n_components);
    double total_var = 0.0;
    for (double v : eigvals) total_var += std::max(v, 0.0);
    for (std::size_t j = 0; j < n_components; ++j) {
        out.explained_variance[j] = eigvals[j];
        std::size_t arg = 0;
        for (std::size_t i = 1; i < d; ++i)
            if (std::fabs(eigvecs.at(i, j)) > std::fabs(eigvecs.at(arg, j))) arg = i;
        const double flip = eigvecs.at(arg, j) < 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < d; ++i) out.components.at(i, j) = flip * eigvecs.at(i, j);
        if (eigvals[j] < 1e-12 * std::max(total_var, 1.0)) out.degenerate = true;
    }
    out.points = matmul(centered, out.components);
    return out;
}

/// Per-point conditional bandwidths: binary search on beta = 1/(2σ²) until
/// the conditional entropy matches log(perplexity) within 1e-5.
struct BandwidthResult {
    std::vector<double> beta;
    std::vector<double> entropy;  // nats
    Tensor conditional;           // N x N, row-normalized, zero diagonal
};

namespace detail {

inline Tensor squared_distances(const Tensor& X) {
    const std::size_t n = X.rows(), d = X.cols();
    Tensor D({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t f = 0; f < d; ++f) {
                const double c = X.at(i, f) - X.at(j, f);
                s += c * c;
            }
            D.at(i, j) = s;
            D.at(j, i) = s;
        }
    return D;
}

}  // namespace detail

inline BandwidthResult tsne_bandwidths(const Tensor& X, double perplexity) {
    const std::size_t n = X.rows();
    const double target = std::log(perplexity);
    const Tensor D = detail::squared_distances(X);

    BandwidthResult res;
    res.beta.assign(n, 1.0);
    res.entropy.assign(n, 0.0);
    res.conditional = Tensor({n, n});

    std::vector<double> row(n);
    for (std::size_t i = 0; i < n; ++i) {
        double beta = 1.0, lo = -1.0, hi = -1.0;
        double H = 0.0;
        for (std::size_t iter = 0; iter < 200; ++iter) {
            double sum_p = 0.0, sum_dp = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) {
                    row[j] = 0.0;
                    continue;
                }
                row[j] = std::exp(-beta * D.at(i, j));
                sum_p += row[j];
                sum_dp += D.at(i, j) * row[j];
            }
            if (sum_p <= 0.0) sum_p = 1e-300;
            H = std::log(sum_p) + beta * sum_dp / sum_p;
            const double diff = H - target;
            if (std::fabs(diff) < 1e-5) break;
            if (diff > 0.0) {  // entropy too high: sharpen
                lo = beta;
                beta = hi < 0.0 ? beta * 2.0 : 0.5 * (lo + hi);
            } else {
                hi = beta;
                beta = lo < 0.0 ? beta / 2.0 : 0.5 * (lo + hi);
            }
        }
        double sum_p = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            row[j] = std::exp(-beta * D.at(i, j));
            sum_p += row[j];
        }
        if (sum_p <= 0.0) sum_p = 1e-300;
        for (std::size_t j = 0; j < n; ++j) res.conditional.at(i, j) = row[j] / sum_p;
        res.beta[i] = beta;
        res.entropy[i] = H;
    }
    return res;
}

namespace detail {

inline double tsne_kl(const Tensor& P, const Tensor& Y) {
    const std::size_t n = P.rows();
    Tensor W({n, n});
    double sum_w = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t f = 0; f < Y.cols(); ++f) {
                const double c = Y.at(i, f) - Y.at(j, f);
                s += c * c;
            }
            const double w = 1.0 / (1.0 + s);
            W.at(i, j) = w;
            W.at(j, i) = w;
            sum_w += 2.0 * w;
        }
    double kl = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double p = P.at(i, j);
            if (p <= 0.0) continue;
            const double q = std::max(W.at(i, j) / sum_w, 1e-12);
            kl += p * std::log(p / q);
        }
    return kl;
}

}  // namespace detail

/// Exact t-SNE with early exaggeration (12x for the first 250 iterations),
/// momentum 0.5 then 0.8, and adaptive per-coordinate gains.
inline Projection2D tsne_project(const Tensor& X, double perplexity = 30.0,
                                 std::size_t iterations = 1000, double lr = 200.0,
                                 std::uint64_t seed = 0) {
    const std::size_t n = X.rows();
    if (n < 4) throw std::invalid_argument("tsne_project: need at least 4 points");
    if (!(perplexity < static_cast<double>(n)))
        throw std::invalid_argument("tsne_project: perplexity must be < N");

    const std::size_t dims = 2;
    const std::size_t exaggeration_until = std::min<std::size_t>(250, iterations);
    const double exaggeration = 12.0;

    BandwidthResult bw = tsne_bandwidths(X, perplexity);
    Tensor P({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            P.at(i, j) = std::max(
                (bw.conditional.at(i, j) + bw.conditional.at(j, i)) / (2.0 * static_cast<double>(n)),
                1e-12);
        }

    Rng rng(seed);
    Tensor Y({n, dims});
    for (double& v : Y.data) v = rng.normal() * 1e-4;

    Projection2D out;
    out.method = "tsne";
    out.perplexity = perplexity;
    out.iterations = iterations;
    out.initial_kl = detail::tsne_kl(P, Y);

    Tensor delta({n, dims});
    Tensor gains = Tensor::full({n, dims}, 1.0);
    Tensor grad({n, dims});
    Tensor W({n, n});

    for (std::size_t iter = 0; iter < iterations; ++iter) {
        const double ex = iter < exaggeration_until ? exaggeration : 1.0;
        const double momentum = iter < exaggeration_until ? 0.5 : 0.8;

        double sum_w = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                double s = 0.0;
                for (std::size_t f = 0; f < dims; ++f) {
                    const double c = Y.at(i, f) - Y.at(j, f);
                    s += c * c;
                }
                const double w = 1.0 / (1.0 + s);
                W.at(i, j) = w;
                W.at(j, i) = w;
                sum_w += 2.0 * w;
            }

        grad.fill(0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const double w = W.at(i, j);
                const double q = std::max(w / sum_w, 1e-12);
                const double coef = 4.0 * (ex * P.at(i, j) - q) * w;
                for (std::size_t f = 0; f < dims; ++f)
                    grad.at(i, f) += coef * (Y.at(i, f) - Y.at(j, f));
            }

        for (std::size_t i = 0; i < grad.numel(); ++i) {
            const bool same_sign = (grad[i] > 0.0) == (delta[i] > 0.0);
            gains[i] = same_sign ? std::max(gains[i] * 0.8, 0.01) : gains[i] + 0.2;
            delta[i] = momentum * delta[i] - lr * gains[i] * grad[i];
            Y[i] += delta[i];
        }
        for (std::size_t f = 0; f < dims; ++f) {
            double mean = 0.0;
            for (std::size_t i = 0; i < n; ++i) mean += Y.at(i, f);
            mean /= static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) Y.at(i, f) -= mean;
        }
    }

    out.final_kl = detail::tsne_kl(P, Y);
    out.points = Y;
    return out;
}

}  // namespace ldavae::dimred
