#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "ldavae/tensor.hpp"

namespace ldavae::autodiff {

/// Persistent trainable tensor. Gradients accumulate across backward passes
/// until zero_grad().
struct Variable {
    Tensor value;
    Tensor grad;

    Variable() = default;
    explicit Variable(Tensor v) : value(std::move(v)), grad(Tensor::zeros(value.shape)) {}

    void zero_grad() { grad.fill(0.0); }
};

class Graph;

/// One node of a define-by-run graph. The graph owns its nodes; values are
/// computed eagerly at construction, adjoints during Graph::backward.
struct Node {
    Tensor value;
    Tensor grad;  // accumulated over backward() calls
    std::size_t id = 0;
    Variable* bound = nullptr;  // leaf nodes mirror their gradient here
    std::function<void(const Tensor& adj, Graph& g)> backprop;  // empty for leaves
};

[[noreturn]] inline void shape_error(const std::string& op, const Tensor& a) {
    throw std::invalid_argument(op + ": bad shape " + a.shape_str());
}

[[noreturn]] inline void shape_error(const std::string& op, const Tensor& a,
                                     const Tensor& b) {
    throw std::invalid_argument(op + ": incompatible shapes " + a.shape_str() + " and " +
                                b.shape_str());
}

class Graph {
public:
    Node* constant(Tensor v) { return make(std::move(v)); }

    Node* scalar(double v) { return make(Tensor::scalar(v)); }

    Node* leaf(Variable& var) {
        Node* n = make(var.value);
        n->bound = &var;
        return n;
    }

    Node* add(Node* a, Node* b) {
        if (!a->value.same_shape(b->value)) shape_error("add", a->value, b->value);
        Tensor out = a->value;
        out += b->value;
        return make(std::move(out), [a, b](const Tensor& adj, Graph& g) {
            g.adj(a) += adj;
            g.adj(b) += adj;
        });
    }

    Node* sub(Node* a, Node* b) {
        if (!a->value.same_shape(b->value)) shape_error("sub", a->value, b->value);
        Tensor out = a->value;
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
        return make(std::move(out), [a, b](const Tensor& adj, Graph& g) {
            g.adj(a) += adj;
            Tensor& gb = g.adj(b);
            for (std::size_t i = 0; i < adj.numel(); ++i) gb[i] -= adj[i];
        });
    }

    /// Elementwise product (the Hadamard ⊙ of the LSTM equations).
    Node* mul(Node* a, Node* b) {
        if (!a->value.same_shape(b->value)) shape_error("elementwise_mul", a->value, b->value);
        Tensor out = a->value;
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
        return make(std::move(out), [a, b](const Tensor& adj, Graph& g) {
            Tensor& ga = g.adj(a);
            Tensor& gb = g.adj(b);
            for (std::size_t i = 0; i < adj.numel(); ++i) {
                ga[i] += adj[i] * b->value[i];
                gb[i] += adj[i] * a->value[i];
            }
        });
    }

    /// k * a + c, elementwise.
    Node* affine(Node* a, double k, double c) {
        Tensor out = a->value;
        for (double& v : out.data) v = k * v + c;
        return make(std::move(out), [a, k](const Tensor& adj, Graph& g) {
            Tensor& ga = g.adj(a);
            for (std::size_t i = 0; i < adj.numel(); ++i) ga[i] += k * adj[i];
        });
    }

    Node* scale(Node* a, double k) { return affine(a, k, 0.0); }

    Node* matmul(Node* a, Node* b) {
        if (a->value.rank() != 2 || b->value.rank() != 2 ||
            a->value.cols() != b->value.rows())
            shape_error("matmul", a->value, b->value);
        Tensor out = ldavae::matmul(a->value, b->value);
        return make(std::move(out), [a, b](const Tensor& adj, Graph& g) {
            const Tensor& av = a->value;
            const Tensor& bv = b->value;
            const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
            Tensor& ga = g.adj(a);  // m x k: adj * B^T
            Tensor& gb = g.adj(b);  // k x n: A^T * adj
            for (std::size_t i = 0; i < m; ++i) {
                const double* adjrow = &adj.data[i * n];
                const double* arow = &av.data[i * k];
                double* garow = &ga.data[i * k];
                for (std::size_t p = 0; p < k; ++p) {
                    const double* brow = &bv.data[p * n];
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += adjrow[j] * brow[j];
                    garow[p] += acc;
                    const double av_ip = arow[p];
                    if (av_ip != 0.0) {
                        double* gbrow = &gb.data[p * n];
                        for (std::size_t j = 0; j < n; ++j) gbrow[j] += av_ip * adjrow[j];
                    }
                }
            }
        });
    }

    Node* sigmoid(Node* a) {
        Tensor out = a->value;
        for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
        Node* n = make(std::move(out));
        n->backprop = [a, n](const Tensor& adj, Graph& g) {
            Tensor& ga = g.adj(a);
            for (std::size_t i = 0; i < adj.numel(); ++i) {
                const double y = n->value[i];
                ga[i] += adj[i] * y * (1.0 - y);
            }
        };
        return n;
    }

    Node* tanh_(Node* a) {
        Tensor out = a->value;
        for (double& v : out.data) v = std::tanh(v);
        Node* n = make(std::move(out));
        n->backprop = [a, n](const Tensor& adj, Graph& g) {
            Tensor& ga = g.adj(a);
            for (std::size_t i = 0; i < adj.numel(); ++i) {
                const double y = n->value[i];
                ga[i] += adj[i] * (1.0 - y * y);
            }
        };
        return n;
    }

    Node* relu(Node* a) {
        Tensor out = a->value;
        for (double& v : out.data) v = v > 0.0 ? v : 0.0;
        return make(std::move(out), [a](const Tensor& adj, Graph& g) {
            Tensor& ga = g.adj(a);
            for (std::size_t i = 0; i < adj.numel(); ++i)
                if (a->value[i] > 0.0) ga[i] += adj[i];
        });
    }

    Node* exp_(Node* a) {
        Tensor out = a->value;
        for (double& v : out.data) v = std::exp(v);
        Node* n = make(std::move(out));
        n->backprop = [a, n](const Tensor& adj, Graph& g) {
            Tensor& ga = g.adj(a);
            for (std::size_t i = 0; i < adj.numel(); ++i) ga[i] += adj[i] * n->value[i];
        };
        return n;
    }

    Node* log_(Node* a) {
        Tensor out = a->value;
        for (double& v : out.data) v = std::log(v);
        return make(std::move(out), [a](const Tensor& adj, Graph& g) {
            Tensor& ga = g.adj(a);
            for (std::size_t i = 0; i < adj.numel(); ++i) ga[i] += adj[i] / a->value[i];
        });
    }

    /// Clamp to [lo, hi]; gradient passes only through unclamped entries.
    Node* clamp(Node* a, double lo, double hi) {
        Tensor out = a->value;
        for (double& v : out.data) v = std::min(std::max(v, lo), hi);
        return make(std::move(out), [a, lo, hi](const Tensor& adj, Graph& g) {
            Tensor& ga = g.adj(a);
            for (std::size_t i = 0; i < adj.numel(); ++i) {
                const double v = a->value[i];
                if (v >= lo && v <= hi) ga[i] += adj[i];
            }
        });
    }

    /// Row-wise softmax with the max-shift for stability. Rows sum to 1.
    Node* softmax_rows(Node* a) {
        if (a->value.rank() != 2) shape_error("softmax_rows", a->value);
        const std::size_t m = a->value.rows(), c = a->value.cols();
        Tensor out = a->value;
        for (std::size_t i = 0; i < m; ++i) {
            double* row = &out.data[i * c];
            double mx = row[0];
            for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
            double total = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
                row[j] = std::exp(row[j] - mx);
                total += row[j];
            }
            for (std::size_t j = 0; j < c; ++j) row[j] /= total;
        }
        Node* n = make(std::move(out));
        n->backprop = [a, n, m, c](const Tensor& adj, Graph& g) {
            Tensor& ga = g.adj(a);
            for (std::size_t i = 0; i < m; ++i) {
                const double* y = &n->value.data[i * c];
                const double* d = &adj.data[i * c];
                double dot = 0.0;
                for (std::size_t j = 0; j < c; ++j) dot += d[j] * y[j];
                double* grow = &ga.data[i * c];
                for (std::size_t j = 0; j < c; ++j) grow[j] += (d[j] - dot) * y[j];
            }
        };
        return n;
    }

    /// Concatenate along axis 0 or 1 (2-d tensors).
    Node* concat(Node* a, Node* b, int axis) {
        const Tensor& av = a->value;
        const Tensor& bv = b->value;
        if (av.rank() != 2 || bv.rank() != 2) shape_error("concat", av, bv);
        Tensor out;
        if (axis == 0) {
            if (av.cols() != bv.cols()) shape_error("concat", av, bv);
            out = Tensor({av.rows() + bv.rows(), av.cols()});
            std::copy(av.data.begin(), av.data.end(), out.data.begin());
            std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + av.numel());
        } else if (axis == 1) {
            if (av.rows() != bv.rows()) shape_error("concat", av, bv);
            out = Tensor({av.rows(), av.cols() + bv.cols()});
            for (std::size_t i = 0; i < av.rows(); ++i) {
                std::copy(&av.data[i * av.cols()], &av.data[i * av.cols()] + av.cols(),
                          &out.data[i * out.cols()]);
                std::copy(&bv.data[i * bv.cols()], &bv.data[i * bv.cols()] + bv.cols(),
                          &out.data[i * out.cols() + av.cols()]);
            }
        } else {
            throw std::invalid_argument("concat: axis must be 0 or 1");
        }
        return make(std::move(out), [a, b, axis](const Tensor& adj, Graph& g) {
            Tensor& ga = g.adj(a);
            Tensor& gb = g.adj(b);
            const std::size_t ar = a->value.rows(), ac = a->value.cols();
            const std::size_t bc = b->value.cols();
            if (axis == 0) {
                for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += adj[i];
                for (std::size_t i = 0; i < gb.numel(); ++i) gb[i] += adj[ga.numel() + i];
            } else {
                for (std::size_t i = 0; i < ar; ++i) {
                    for (std::size_t j = 0; j < ac; ++j)
                        ga.data[i * ac + j] += adj.data[i * (ac + bc) + j];
                    for (std::size_t j = 0; j < bc; ++j)
                        gb.data[i * bc + j] += adj.data[i * (ac + bc) + ac + j];
                }
            }
        });
    }

    /// Contiguous slice along axis 0 or 1 (2-d tensors).
    Node* slice(Node* a, int axis, std::size_t start, std::size_t len) {
        const Tensor& av = a->value;
        if (av.rank() != 2) shape_error("slice", av);
        const std::size_t r = av.rows(), c = av.cols();
        Tensor out;
        if (axis == 0) {
            if (start + len > r) shape_error("slice", av);
            out = Tensor({len, c});
            std::copy(&av.data[start * c], &av.data[(start + len) * c], out.data.begin());
        } else if (axis == 1) {
            if (start + len > c) shape_error("slice", av);
            out = Tensor({r, len});
            for (std::size_t i = 0; i < r; ++i)
                std::copy(&av.data[i * c + start], &av.data[i * c + start + len],
                          &out.data[i * len]);
        } else {
            throw std::invalid_argument("slice: axis must be 0 or 1");
        }
        return make(std::move(out), [a, axis, start, len](const Tensor& adj, Graph& g) {
            Tensor& ga = g.adj(a);
            const std::size_t c = a->value.cols();
            if (axis == 0) {
                for (std::size_t i = 0; i < adj.numel(); ++i) ga.data[start * c + i] += adj[i];
            } else {
                const std::size_t r = adj.rows();
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < len; ++j)
                        ga.data[i * c + start + j] += adj.data[i * len + j];
            }
        });
    }

    /// Sum of all entries -> scalar (shape {1}).
    Node* sum(Node* a) {
        Tensor out = Tensor::scalar(a->value.sum());
        return make(std::move(out), [a](const Tensor& adj, Graph& g) {
            Tensor& ga = g.adj(a);
            for (double& v : ga.data) v += adj[0];
        });
    }

    /// Mean of all entries -> scalar (shape {1}).
    Node* mean(Node* a) {
        const double n = static_cast<double>(a->value.numel());
        Tensor out = Tensor::scalar(a->value.sum() / n);
        return make(std::move(out), [a, n](const Tensor& adj, Graph& g) {
            Tensor& ga = g.adj(a);
            for (double& v : ga.data) v += adj[0] / n;
        });
    }

    /// m (r x c) + broadcast row vector b (1 x c).
    Node* add_rowvec(Node* m, Node* b) {
        const Tensor& mv = m->value;
        const Tensor& bv = b->value;
        if (mv.rank() != 2 || bv.rank() != 2 || bv.rows() != 1 || bv.cols() != mv.cols())
            shape_error("add_rowvec", mv, bv);
        Tensor out = mv;
        const std::size_t r = mv.rows(), c = mv.cols();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] += bv.data[j];
        return make(std::move(out), [m, b, r, c](const Tensor& adj, Graph& g) {
            g.adj(m) += adj;
            Tensor& gb = g.adj(b);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) gb.data[j] += adj.data[i * c + j];
        });
    }

    /// Tile a 1 x c row n times into an n x c matrix.
    Node* repeat_rows(Node* rowvec, std::size_t n) {
        const Tensor& rv = rowvec->value;
        if (rv.rank() != 2 || rv.rows() != 1) shape_error("repeat_rows", rv);
        const std::size_t c = rv.cols();
        Tensor out({n, c});
        for (std::size_t i = 0; i < n; ++i)
            std::copy(rv.data.begin(), rv.data.end(), &out.data[i * c]);
        return make(std::move(out), [rowvec, n, c](const Tensor& adj, Graph& g) {
            Tensor& gr = g.adj(rowvec);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < c; ++j) gr.data[j] += adj.data[i * c + j];
        });
    }

    /// Negative log-likelihood over rows of a probability matrix:
    /// -sum_i log(max(probs[i][target_i], floor)) for target_i >= 0.
    /// A negative target skips the row (padding positions).
    Node* nll_rows(Node* probs, std::vector<long> targets, double floor = 1e-12) {
        const Tensor& pv = probs->value;
        if (pv.rank() != 2 || targets.size() != pv.rows())
            shape_error("nll_rows", pv);
        const std::size_t c = pv.cols();
        double total = 0.0;
        for (std::size_t i = 0; i < targets.size(); ++i) {
            const long t = targets[i];
            if (t < 0) continue;
            if (static_cast<std::size_t>(t) >= c)
                throw std::out_of_range("nll_rows: target column out of range");
            total -= std::log(std::max(pv.data[i * c + t], floor));
        }
        Tensor out = Tensor::scalar(total);
        return make(std::move(out),
                    [probs, targets = std::move(targets), floor, c](const Tensor& adj, Graph& g) {
                        Tensor& gp = g.adj(probs);
                        for (std::size_t i = 0; i < targets.size(); ++i) {
                            const long t = targets[i];
                            if (t < 0) continue;
                            const double p = probs->value.data[i * c + t];
                            if (p > floor) gp.data[i * c + t] -= adj[0] / p;
                        }
                    });
    }

    /// Reverse pass from a scalar loss. Adjoints are computed fresh per call
    /// and then added into node (and bound Variable) gradients, so calling
    /// twice accumulates exactly 2x.
    void backward(Node* loss) {
        if (loss->value.numel() != 1)
            throw std::invalid_argument("backward: loss must be scalar, got " +
                                        loss->value.shape_str());
        adjoints_.assign(nodes_.size(), Tensor());
        adj(loss)[0] = 1.0;
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            Node* n = nodes_[i].get();
            if (adjoints_[n->id].numel() == 0 || !n->backprop) continue;
            n->backprop(adjoints_[n->id], *this);
        }
        for (auto& np : nodes_) {
            Tensor& a = adjoints_[np->id];
            if (a.numel() == 0) continue;
            np->grad += a;
            if (np->bound) np->bound->grad += a;
        }
        adjoints_.clear();
    }

    /// Adjoint slot for a node, zero-initialized on first touch.
    Tensor& adj(Node* n) {
        Tensor& a = adjoints_[n->id];
        if (a.numel() == 0) a = Tensor::zeros(n->value.shape);
        return a;
    }

    std::size_t size() const { return nodes_.size(); }

private:
    Node* make(Tensor value, std::function<void(const Tensor&, Graph&)> backprop = {}) {
        auto n = std::make_unique<Node>();
        n->value = std::move(value);
        n->grad = Tensor::zeros(n->value.shape);
        n->id = nodes_.size();
        n->backprop = std::move(backprop);
        nodes_.push_back(std::move(n));
        return nodes_.back().get();
    }

    std::vector<std::unique_ptr<Node>> nodes_;
    std::vector<Tensor> adjoints_;
};

/// One Adam update on a single tensor. Bias-corrected, deterministic.
inline void adam_step(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, long t,
                      double lr, double beta1 = 0.9, double beta2 = 0.999,
                      double eps = 1e-8) {
    if (!param.same_shape(grad) || !param.same_shape(m) || !param.same_shape(v))
        throw std::invalid_argument("adam_step: shape mismatch");
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < param.numel(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

/// Adam over a fixed parameter list, with optional global-norm clipping.
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<Variable*> params, double lr, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (Variable* p : params_) {
            m_.push_back(Tensor::zeros(p->value.shape));
            v_.push_back(Tensor::zeros(p->value.shape));
        }
    }

    /// Scale all gradients so the global L2 norm is at most max_norm.
    void clip_grad_norm(double max_norm) {
        double sq = 0.0;
        for (Variable* p : params_)
            for (double g : p->grad.data) sq += g * g;
        const double norm = std::sqrt(sq);
        if (norm > max_norm && norm > 0.0) {
            const double k = max_norm / norm;
            for (Variable* p : params_) p->grad *= k;
        }
    }

    void step() {
        ++t_;
        for (std::size_t i = 0; i < params_.size(); ++i)
            adam_step(params_[i]->value, params_[i]->grad, m_[i], v_[i], t_, lr_, beta1_,
                      beta2_, eps_);
    }

    void zero_grad() {
        for (Variable* p : params_) p->zero_grad();
    }

    long steps() const { return t_; }

private:
    std::vector<Variable*> params_;
    std::vector<Tensor> m_, v_;
    long t_ = 0;
    double lr_, beta1_, beta2_, eps_;
};

}  // namespace ldavae::autodiff
