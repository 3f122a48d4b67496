#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ldavae/corpus.hpp"
#include "ldavae/math.hpp"
#include "ldavae/rng.hpp"
#include "ldavae/tensor.hpp"

namespace ldavae::topic {

/// Sparse bag of words: (vocabulary id, count) sorted by id. Column j of the
/// topic-word tensors corresponds to vocabulary id j+1 throughout.
struct BowDocument {
    std::vector<std::pair<int, int>> counts;

    std::size_t total() const {
        std::size_t n = 0;
        for (const auto& [id, c] : counts) n += static_cast<std::size_t>(c);
        return n;
    }
};

inline BowDocument to_bow(const corpus::TokenSequence& seq) {
    std::map<int, int> m;
    for (int id : seq.ids)
        if (id != corpus::Vocabulary::pad_id) ++m[id];
    BowDocument bow;
    bow.counts.assign(m.begin(), m.end());
    return bow;
}

inline std::vector<BowDocument> to_bow_corpus(const corpus::Corpus& c) {
    std::vector<BowDocument> docs;
    docs.reserve(c.size());
    for (const auto& d : c.docs) docs.push_back(to_bow(d));
    return docs;
}

/// LDA variational posterior: λ parameterizes the topic-word Dirichlets,
/// γ the per-document topic Dirichlets of the training corpus.
struct LdaModel {
    std::size_t num_topics = 0;  // K
    std::size_t vocab_size = 0;  // |V|
    std::vector<double> alpha;   // K, entrywise > 0
    double eta = 0.0;            // symmetric word prior, > 0
    Tensor lambda;               // K x |V|
    Tensor gamma;                // N x K (training docs)
    std::uint64_t vocab_hash = 0;
};

struct SviConfig {
    std::size_t batch_size = 64;
    double tau0 = 1.0;
    double kappa = 0.7;
    std::size_t passes = 5;
    std::size_t local_iters = 100;
    double local_tol = 1e-3;
};

namespace detail {

/// E[log β] rows: ψ(λ_kw) − ψ(Σ_w λ_kw).
inline Tensor expect_log_dirichlet_rows(const Tensor& x) {
    Tensor out(x.shape);
    const std::size_t r = x.rows(), c = x.cols();
    for (std::size_t i = 0; i < r; ++i) {
        double row_sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) row_sum += x.data[i * c + j];
        const double d = digamma(row_sum);
        for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] = digamma(x.data[i * c + j]) - d;
    }
    return out;
}

/// Coordinate-ascent local step for one document with λ (via elog_beta)
/// frozen. Returns γ and per-word responsibilities φ (doc-word order).
inline void fit_local(const BowDocument& doc, const std::vector<double>& alpha,
                      const Tensor& elog_beta, std::size_t local_iters, double local_tol,
                      std::vector<double>& gamma_out,
                      std::vector<std::vector<double>>& phi_out) {
    const std::size_t K = alpha.size();
    const std::size_t V = elog_beta.cols();
    gamma_out.assign(alpha.begin(), alpha.end());
    const double spread = static_cast<double>(doc.total()) / static_cast<double>(K);
    for (double& g : gamma_out) g += spread;

    phi_out.assign(doc.counts.size(), std::vector<double>(K, 0.0));
    if (doc.counts.empty()) {
        gamma_out.assign(alpha.begin(), alpha.end());
        return;
    }

    std::vector<double> elog_theta(K);
    for (std::size_t iter = 0; iter < local_iters; ++iter) {
        double gsum = 0.0;
        for (double g : gamma_out) gsum += g;
        const double dg = digamma(gsum);
        for (std::size_t k = 0; k < K; ++k) elog_theta[k] = digamma(gamma_out[k]) - dg;

        std::vector<double> gamma_new(alpha);
        for (std::size_t w = 0; w < doc.counts.size(); ++w) {
            const auto [id, count] = doc.counts[w];
            std::vector<double>& phi = phi_out[w];
            if (id < 1 || static_cast<std::size_t>(id) > V) {
                std::fill(phi.begin(), phi.end(), 0.0);  // unknown word: skipped
                continue;
            }
            const std::size_t col = static_cast<std::size_t>(id) - 1;
            double mx = -1e300;
            for (std::size_t k = 0; k < K; ++k) {
                phi[k] = elog_theta[k] + elog_beta.data[k * V + col];
                mx = std::max(mx, phi[k]);
            }
            double total = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                phi[k] = std::exp(phi[k] - mx);
                total += phi[k];
            }
            for (std::size_t k = 0; k < K; ++k) {
                phi[k] /= total;
                gamma_new[k] += count * phi[k];
            }
        }
        double change = 0.0;
        for (std::size_t k = 0; k < K; ++k) change += std::fabs(gamma_new[k] - gamma_out[k]);
        gamma_out.swap(gamma_new);
        if (change / static_cast<double>(K) < local_tol) break;
    }
}

}  // namespace detail

/// Symmetric default prior α = 1/K.
inline std::vector<double> symmetric_alpha(std::size_t K, double value = -1.0) {
    if (value <= 0.0) value = 1.0 / static_cast<double>(K);
    return std::vector<double>(K, value);
}

/// Random λ initialization (Gamma(100, 1/100) per entry), seeded.
inline LdaModel init_model(std::size_t vocab_size, std::size_t K, std::vector<double> alpha,
                           double eta, std::uint64_t seed) {
    if (K < 1) throw std::invalid_argument("init_model: K must be >= 1");
    if (alpha.size() != K) throw std::invalid_argument("init_model: |alpha| != K");
    for (double a : alpha)
        if (!(a > 0.0)) throw std::invalid_argument("init_model: alpha must be positive");
    if (!(eta > 0.0)) throw std::invalid_argument("init_model: eta must be positive");
    LdaModel m;
    m.num_topics = K;
    m.vocab_size = vocab_size;
    m.alpha = std::move(alpha);
    m.eta = eta;
    m.lambda = Tensor({K, vocab_size});
    Rng rng(seed);
    for (double& v : m.lambda.data) v = rng.gamma(100.0) / 100.0;
    return m;
}

/// Stochastic variational inference (natural-gradient steps on λ with step
/// size ρ_t = (τ0 + t)^(−κ), local coordinate ascent per document).
/// Deterministic given seed. Populates γ for the whole corpus at the end.
inline LdaModel fit_svi(const std::vector<BowDocument>& docs, std::size_t vocab_size,
                        std::size_t K, const std::vector<double>& alpha, double eta,
                        const SviConfig& cfg, std::uint64_t seed) {
    if (docs.empty()) throw std::invalid_argument("fit_svi: empty corpus");
    if (!(cfg.kappa > 0.5 && cfg.kappa <= 1.0))
        throw std::invalid_argument("fit_svi: kappa must be in (0.5, 1]");
    if (cfg.tau0 < 0.0) throw std::invalid_argument("fit_svi: tau0 must be >= 0");

    LdaModel m = init_model(vocab_size, K, alpha, eta, seed);
    const std::size_t N = docs.size();
    const double n_docs = static_cast<double>(N);

    Rng rng(seed + 1);
    std::vector<std::size_t> order(N);
    for (std::size_t i = 0; i < N; ++i) order[i] = i;

    std::vector<double> gamma_d;
    std::vector<std::vector<double>> phi_d;
    std::size_t t = 0;
    for (std::size_t pass = 0; pass < cfg.passes; ++pass) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < N; start += cfg.batch_size) {
            const std::size_t stop = std::min(N, start + cfg.batch_size);
            const double batch_n = static_cast<double>(stop - start);
            const Tensor elog_beta = detail::expect_log_dirichlet_rows(m.lambda);

            Tensor lambda_hat = Tensor::full({K, vocab_size}, eta);
            for (std::size_t pos = start; pos < stop; ++pos) {
                const BowDocument& doc = docs[order[pos]];
                detail::fit_local(doc, m.alpha, elog_beta, cfg.local_iters, cfg.local_tol,
                                  gamma_d, phi_d);
                for (std::size_t w = 0; w < doc.counts.size(); ++w) {
                    const auto [id, count] = doc.counts[w];
                    if (id < 1 || static_cast<std::size_t>(id) > vocab_size) continue;
                    const std::size_t col = static_cast<std::size_t>(id) - 1;
                    for (std::size_t k = 0; k < K; ++k)
                        lambda_hat.data[k * vocab_size + col] +=
                            (n_docs / batch_n) * count * phi_d[w][k];
                }
            }

            ++t;
            const double rho = std::pow(cfg.tau0 + static_cast<double>(t), -cfg.kappa);
            for (std::size_t i = 0; i < m.lambda.numel(); ++i)
                m.lambda[i] = (1.0 - rho) * m.lambda[i] + rho * lambda_hat[i];
        }
    }

    // Final local pass with λ frozen: per-document γ in corpus order.
    const Tensor elog_beta = detail::expect_log_dirichlet_rows(m.lambda);
    m.gamma = Tensor({N, K});
    for (std::size_t i = 0; i < N; ++i) {
        detail::fit_local(docs[i], m.alpha, elog_beta, cfg.local_iters, cfg.local_tol, gamma_d,
                          phi_d);
        std::copy(gamma_d.begin(), gamma_d.end(), &m.gamma.data[i * K]);
    }
    return m;
}

/// Reusable inference context: caches E[log β] so corpus-wide featurization
/// does not redo the digamma table per document.
class LdaInference {
public:
    explicit LdaInference(const LdaModel& m)
        : model_(m), elog_beta_(detail::expect_log_dirichlet_rows(m.lambda)) {}

    std::vector<double> infer(const BowDocument& doc) const {
        std::vector<double> gamma;
        std::vector<std::vector<double>> phi;
        detail::fit_local(doc, model_.alpha, elog_beta_, 100, 1e-3, gamma, phi);
        double total = 0.0;
        for (double g : gamma) total += g;
        for (double& g : gamma) g /= total;
        return gamma;
    }

private:
    const LdaModel& model_;
    Tensor elog_beta_;
};

/// N x K matrix of document-topic posterior means, corpus order.
inline Tensor document_topic_matrix(const LdaModel& m, const std::vector<BowDocument>& docs) {
    const LdaInference inf(m);
    Tensor out({docs.size(), m.num_topics});
    for (std::size_t i = 0; i < docs.size(); ++i) {
        const std::vector<double> phi = inf.infer(docs[i]);
        std::copy(phi.begin(), phi.end(), &out.data[i * m.num_topics]);
    }
    return out;
}

/// Held-out document-topic posterior mean: γ fitted with λ frozen, then
/// normalized onto the simplex. Unknown word ids are skipped; an empty
/// document returns the prior mean α/Σα.
inline std::vector<double> infer_document_topics(const LdaModel& m, const BowDocument& doc) {
    return LdaInference(m).infer(doc);
}

/// Posterior mean of β_k (λ_k normalized).
inline std::vector<double> topic_word_distribution(const LdaModel& m, std::size_t k) {
    if (k >= m.num_topics)
        throw std::out_of_range("topic_word_distribution: topic " + std::to_string(k) +
                                " out of range 0.." + std::to_string(m.num_topics - 1));
    const std::size_t V = m.vocab_size;
    std::vector<double> beta(V);
    double total = 0.0;
    for (std::size_t w = 0; w < V; ++w) total += m.lambda.data[k * V + w];
    for (std::size_t w = 0; w < V; ++w) beta[w] = m.lambda.data[k * V + w] / total;
    return beta;
}

/// Per-word posterior over topic assignments: p(z=k) ∝ φ_k · β_k[w], one row
/// per bow entry in order. Unknown words get the uniform distribution.
inline std::vector<std::vector<double>> word_topic_posterior(const LdaModel& m,
                                                             const BowDocument& doc) {
    const std::size_t K = m.num_topics;
    const std::size_t V = m.vocab_size;
    const std::vector<double> phi = infer_document_topics(m, doc);

    std::vector<std::vector<double>> beta(K);
    for (std::size_t k = 0; k < K; ++k) beta[k] = topic_word_distribution(m, k);

    std::vector<std::vector<double>> out;
    out.reserve(doc.counts.size());
    for (const auto& [id, count] : doc.counts) {
        std::vector<double> post(K, 1.0 / static_cast<double>(K));
        if (id >= 1 && static_cast<std::size_t>(id) <= V) {
            double total = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                post[k] = phi[k] * beta[k][static_cast<std::size_t>(id) - 1];
                total += post[k];
            }
            if (total > 0.0)
                for (double& p : post) p /= total;
            else
                std::fill(post.begin(), post.end(), 1.0 / static_cast<double>(K));
        }
        out.push_back(std::move(post));
    }
    return out;
}

/// Top-n word ids (1-based) of a topic by β, ties toward smaller id.
inline std::vector<int> top_word_ids(const LdaModel& m, std::size_t k, std::size_t n) {
    const std::vector<double> beta = topic_word_distribution(m, k);
    std::vector<int> ids(beta.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i) + 1;
    std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
        return beta[static_cast<std::size_t>(a) - 1] > beta[static_cast<std::size_t>(b) - 1];
    });
    ids.resize(std::min(n, ids.size()));
    return ids;
}

struct CoherenceResult {
    std::vector<double> per_topic;
    std::vector<bool> degenerate;  // fewer than 2 in-corpus top words
    double mean = 0.0;
};

/// UMass coherence of each topic's top_n words over corpus co-occurrence
/// counts: Σ over ranked pairs of log((D(both) + 1) / D(higher-ranked)).
/// Topics with fewer than 2 in-corpus words score 0 and are flagged.
inline CoherenceResult coherence_umass(const LdaModel& m,
                                       const std::vector<BowDocument>& docs,
                                       std::size_t top_n = 20) {
    if (docs.empty()) throw std::invalid_argument("coherence_umass: empty corpus");
    const std::size_t K = m.num_topics;

    std::vector<std::vector<int>> tops(K);
    std::map<int, std::size_t> word_slot;
    for (std::size_t k = 0; k < K; ++k) {
        tops[k] = top_word_ids(m, k, top_n);
        for (int id : tops[k]) word_slot.emplace(id, 0);
    }
    std::size_t slot = 0;
    for (auto& [id, s] : word_slot) s = slot++;

    const std::size_t W = word_slot.size();
    std::vector<std::size_t> doc_freq(W, 0);
    std::vector<std::size_t> pair_freq(W * W, 0);
    std::vector<std::size_t> present;
    for (const auto& doc : docs) {
        present.clear();
        for (const auto& [id, count] : doc.counts) {
            auto it = word_slot.find(id);
            if (it != word_slot.end()) present.push_back(it->second);
        }
        for (std::size_t a : present) {
            ++doc_freq[a];
            for (std::size_t b : present)
                if (a != b) ++pair_freq[a * W + b];
        }
    }

    CoherenceResult res;
    res.per_topic.assign(K, 0.0);
    res.degenerate.assign(K, false);
    for (std::size_t k = 0; k < K; ++k) {
        std::vector<std::size_t> slots;
        for (int id : tops[k]) {
            const std::size_t s = word_slot[id];
            if (doc_freq[s] > 0) slots.push_back(s);
        }
        if (slots.size() < 2) {
            res.degenerate[k] = true;
            continue;
        }
        double score = 0.0;
        for (std::size_t a = 0; a < slots.size(); ++a)
            for (std::size_t b = a + 1; b < slots.size(); ++b)
                score += std::log(
                    (static_cast<double>(pair_freq[slots[a] * W + slots[b]]) + 1.0) /
                    static_cast<double>(doc_freq[slots[a]]));
        res.per_topic[k] = score;
    }
    for (double s : res.per_topic) res.mean += s;
    res.mean /= static_cast<double>(K);
    return res;
}

/// Fits one model per candidate K on the training portion and scores UMass
/// coherence on the validation portion; returns the maximizer, ties toward
/// smaller K.
inline std::size_t select_num_topics(const std::vector<BowDocument>& docs,
                                     std::size_t vocab_size, std::vector<std::size_t> candidates,
                                     double validation_fraction, const SviConfig& cfg,
                                     double eta, std::uint64_t seed) {
    if (candidates.empty()) throw std::invalid_argument("select_num_topics: no candidates");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
        throw std::invalid_argument("select_num_topics: fraction must be in (0,1)");
    std::sort(candidates.begin(), candidates.end());

    std::vector<std::size_t> order(docs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    std::size_t n_val = static_cast<std::size_t>(
        std::floor(validation_fraction * static_cast<double>(docs.size()) + 0.5));
    n_val = std::max<std::size_t>(1, std::min(n_val, docs.size() - 1));

    std::vector<BowDocument> train, val;
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < n_val ? val : train).push_back(docs[order[i]]);

    std::size_t best_k = candidates.front();
    double best_score = -1e300;
    for (std::size_t K : candidates) {
        LdaModel m = fit_svi(train, vocab_size, K, symmetric_alpha(K), eta, cfg, seed);
        const double score = coherence_umass(m, val).mean;
        if (score > best_score) {
            best_score = score;
            best_k = K;
        }
    }
    return best_k;
}

/// Variational lower bound estimate for the corpus under the model, with
/// locally optimized γ per document.
inline double elbo(const LdaModel& m, const std::vector<BowDocument>& docs) {
    const std::size_t K = m.num_topics;
    const std::size_t V = m.vocab_size;
    const Tensor elog_beta = detail::expect_log_dirichlet_rows(m.lambda);

    double alpha_sum = 0.0, lg_alpha = 0.0;
    for (double a : m.alpha) {
        alpha_sum += a;
        lg_alpha += log_gamma(a);
    }

    double score = 0.0;
    std::vector<double> gamma;
    std::vector<std::vector<double>> phi;
    for (const auto& doc : docs) {
        detail::fit_local(doc, m.alpha, elog_beta, 100, 1e-3, gamma, phi);
        double gsum = 0.0;
        for (double g : gamma) gsum += g;
        const double dg = digamma(gsum);
        for (const auto& [id, count] : doc.counts) {
            if (id < 1 || static_cast<std::size_t>(id) > V) continue;
            const std::size_t col = static_cast<std::size_t>(id) - 1;
            double mx = -1e300;
            std::vector<double> terms(K);
            for (std::size_t k = 0; k < K; ++k) {
                terms[k] = digamma(gamma[k]) - dg + elog_beta.data[k * V + col];
                mx = std::max(mx, terms[k]);
            }
            double s = 0.0;
            for (std::size_t k = 0; k < K; ++k) s += std::exp(terms[k] - mx);
            score += count * (mx + std::log(s));
        }
        for (std::size_t k = 0; k < K; ++k) {
            const double elog_theta_k = digamma(gamma[k]) - dg;
            score += (m.alpha[k] - gamma[k]) * elog_theta_k + log_gamma(gamma[k]);
        }
        score += log_gamma(alpha_sum) - lg_alpha - log_gamma(gsum);
    }

    for (std::size_t k = 0; k < K; ++k) {
        double lsum = 0.0;
        for (std::size_t w = 0; w < V; ++w) {
            const double l = m.lambda.data[k * V + w];
            score += (m.eta - l) * elog_beta.data[k * V + w] + log_gamma(l) - log_gamma(m.eta);
            lsum += l;
        }
        score += log_gamma(static_cast<double>(V) * m.eta) - log_gamma(lsum);
    }
    return score;
}

/// Planted corpus drawn from the LDA generative model, with the true
/// parameters for recovery checks.
struct PlantedCorpus {
    std::vector<std::vector<int>> docs;  // token id sequences, ids 1..V
    Tensor beta;                         // K x V
    Tensor phi;                          // n_docs x K
};

/// Ancestral sampling: β_k ~ Dir_V(η), φ_i ~ Dir_K(α), z_ij ~ Mult(φ_i),
/// w_ij ~ Mult(β_{z_ij}).
inline PlantedCorpus sample_corpus(const std::vector<double>& alpha, double eta,
                                   std::size_t K, std::size_t V, std::size_t n_docs,
                                   std::size_t doc_len, std::uint64_t seed) {
    if (alpha.size() != K) throw std::invalid_argument("sample_corpus: |alpha| != K");
    Rng rng(seed);
    PlantedCorpus out;
    out.beta = Tensor({K, V});
    const std::vector<double> eta_vec(V, eta);
    for (std::size_t k = 0; k < K; ++k) {
        const std::vector<double> b = rng.dirichlet(eta_vec);
        std::copy(b.begin(), b.end(), &out.beta.data[k * V]);
    }
    out.phi = Tensor({n_docs, K});
    out.docs.resize(n_docs);
    for (std::size_t i = 0; i < n_docs; ++i) {
        const std::vector<double> phi_i = rng.dirichlet(alpha);
        std::copy(phi_i.begin(), phi_i.end(), &out.phi.data[i * K]);
        out.docs[i].reserve(doc_len);
        for (std::size_t j = 0; j < doc_len; ++j) {
            const std::size_t z = rng.categorical(phi_i);
            std::vector<double> row(out.beta.data.begin() + static_cast<long>(z * V),
                                    out.beta.data.begin() + static_cast<long>((z + 1) * V));
            out.docs[i].push_back(static_cast<int>(rng.categorical(row)) + 1);
        }
    }
    return out;
}

inline std::vector<BowDocument> planted_to_bow(const PlantedCorpus& pc) {
    std::vector<BowDocument> docs;
    docs.reserve(pc.docs.size());
    for (const auto& ids : pc.docs) {
        corpus::TokenSequence seq;
        seq.ids = ids;
        docs.push_back(to_bow(seq));
    }
    return docs;
}

}  // namespace ldavae::topic
