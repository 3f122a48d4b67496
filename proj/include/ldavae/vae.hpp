#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ldavae/autodiff.hpp"
#include "ldavae/corpus.hpp"
#include "ldavae/embedding.hpp"
#include "ldavae/rng.hpp"

namespace ldavae::vae {

using autodiff::Graph;
using autodiff::Node;
using autodiff::Variable;

/// LSTM cell parameters. The 4h gate axis is blocked as
/// [forget | input | output | candidate].
struct LstmCell {
    Variable W;  // hidden x 4h, recurrence
    Variable U;  // input x 4h
    Variable b;  // 1 x 4h
    std::size_t hidden = 0;

    static LstmCell init(std::size_t input_dim, std::size_t hidden, Rng& rng) {
        LstmCell cell;
        cell.hidden = hidden;
        const double kw = 1.0 / std::sqrt(static_cast<double>(hidden));
        const double ku = 1.0 / std::sqrt(static_cast<double>(input_dim));
        cell.W = Variable(Tensor({hidden, 4 * hidden}));
        for (double& v : cell.W.value.data) v = rng.uniform(-kw, kw);
        cell.U = Variable(Tensor({input_dim, 4 * hidden}));
        for (double& v : cell.U.value.data) v = rng.uniform(-ku, ku);
        cell.b = Variable(Tensor({1, 4 * hidden}));
        for (std::size_t j = 0; j < hidden; ++j) cell.b.value[j] = 1.0;  // forget block
        return cell;
    }

    std::vector<Variable*> params() { return {&W, &U, &b}; }
};

/// Graph-bound view of a cell's parameters for one forward pass.
struct LstmCellNodes {
    Node* W;
    Node* U;
    Node* b;
    std::size_t hidden;
};

inline LstmCellNodes bind(Graph& g, LstmCell& cell) {
    return {g.leaf(cell.W), g.leaf(cell.U), g.leaf(cell.b), cell.hidden};
}

struct LstmState {
    Node* s;  // 1 x h
    Node* c;  // 1 x h
};

/// One recurrence step: [f,i,o] = σ(blocks), c~ = tanh(block),
/// c = f⊙c_prev + i⊙c~, s = o⊙tanh(c).
inline LstmState lstm_forward_step(Graph& g, const LstmCellNodes& cell, Node* s_prev,
                                   Node* c_prev, Node* x) {
    const std::size_t h = cell.hidden;
    Node* gates = g.add_rowvec(g.add(g.matmul(s_prev, cell.W), g.matmul(x, cell.U)), cell.b);
    Node* f = g.sigmoid(g.slice(gates, 1, 0, h));
    Node* i = g.sigmoid(g.slice(gates, 1, h, h));
    Node* o = g.sigmoid(g.slice(gates, 1, 2 * h, h));
    Node* cand = g.tanh_(g.slice(gates, 1, 3 * h, h));
    Node* c = g.add(g.mul(f, c_prev), g.mul(i, cand));
    Node* s = g.mul(o, g.tanh_(c));
    return {s, c};
}

/// The backward-direction step is the same map applied with the primed cell
/// and next-position recurrence; callers drive the reversed index order.
inline LstmState lstm_backward_step(Graph& g, const LstmCellNodes& cell, Node* s_next,
                                    Node* c_next, Node* x) {
    return lstm_forward_step(g, cell, s_next, c_next, x);
}

/// Paired forward/backward recurrent layer.
struct BiLstm {
    LstmCell fwd;
    LstmCell bwd;

    static BiLstm init(std::size_t input_dim, std::size_t hidden, Rng& rng) {
        return {LstmCell::init(input_dim, hidden, rng), LstmCell::init(input_dim, hidden, rng)};
    }

    std::vector<Variable*> params() {
        return {&fwd.W, &fwd.U, &fwd.b, &bwd.W, &bwd.U, &bwd.b};
    }
};

struct BiLstmOut {
    std::vector<Node*> tau;  // L nodes of 1 x 2h: concat(s_j, s'_j)
    Node* final_fwd;         // s_{L-1}
    Node* final_bwd;         // s'_0
};

/// Runs both directions from zero states over per-position inputs xs and
/// concatenates aligned outputs.
inline BiLstmOut bilstm_sequence(Graph& g, BiLstm& layer, const std::vector<Node*>& xs) {
    if (xs.empty()) throw std::invalid_argument("bilstm_sequence: empty sequence");
    const std::size_t L = xs.size();
    const std::size_t h = layer.fwd.hidden;
    LstmCellNodes fwd = bind(g, layer.fwd);
    LstmCellNodes bwd = bind(g, layer.bwd);

    std::vector<Node*> s_fwd(L), s_bwd(L);
    Node* s = g.constant(Tensor({1, h}));
    Node* c = g.constant(Tensor({1, h}));
    for (std::size_t j = 0; j < L; ++j) {
        LstmState st = lstm_forward_step(g, fwd, s, c, xs[j]);
        s = st.s;
        c = st.c;
        s_fwd[j] = st.s;
    }
    Node* sp = g.constant(Tensor({1, h}));
    Node* cp = g.constant(Tensor({1, h}));
    for (std::size_t j = L; j-- > 0;) {
        LstmState st = lstm_backward_step(g, bwd, sp, cp, xs[j]);
        sp = st.s;
        cp = st.c;
        s_bwd[j] = st.s;
    }

    BiLstmOut out;
    out.tau.resize(L);
    for (std::size_t j = 0; j < L; ++j) out.tau[j] = g.concat(s_fwd[j], s_bwd[j], 1);
    out.final_fwd = s_fwd[L - 1];
    out.final_bwd = s_bwd[0];
    return out;
}

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    double clip_norm = 5.0;
};

/// Supervised Bi-LSTM variational autoencoder: encoder to (μ, log σ),
/// reparameterized latent, sequence decoder over the vocabulary, and a
/// sigmoid classifier head on the latent.
struct VaeModel {
    std::size_t embed_dim = 0;   // w
    std::size_t seq_len = 0;     // L
    std::size_t hidden = 0;      // LSTM state dim
    std::size_t latent_dim = 0;  // n_f
    std::size_t vocab_size = 0;  // |V|

    BiLstm encoder;
    Variable enc_mu_w, enc_mu_b;          // 2h x n_f, 1 x n_f
    Variable enc_logsig_w, enc_logsig_b;  // 2h x n_f, 1 x n_f
    Variable dec_in_w, dec_in_b;          // n_f x h, 1 x h
    BiLstm decoder;                       // input dim h
    Variable dec_out_w, dec_out_b;        // 2h x |V|, 1 x |V|
    Variable cls_w, cls_b;                // n_f x 1, 1 x 1

    std::uint64_t vocab_hash = 0;
    std::vector<double> loss_history;  // per-epoch mean total loss

    static VaeModel init(std::size_t embed_dim, std::size_t seq_len, std::size_t vocab_size,
                         std::size_t hidden, std::size_t latent_dim, std::uint64_t seed) {
        Rng rng(seed);
        VaeModel m;
        m.embed_dim = embed_dim;
        m.seq_len = seq_len;
        m.hidden = hidden;
        m.latent_dim = latent_dim;
        m.vocab_size = vocab_size;
        m.encoder = BiLstm::init(embed_dim, hidden, rng);
        auto dense = [&rng](std::size_t in, std::size_t out) {
            Variable w(Tensor({in, out}));
            const double k = 1.0 / std::sqrt(static_cast<double>(in));
            for (double& v : w.value.data) v = rng.uniform(-k, k);
            return w;
        };
        m.enc_mu_w = dense(2 * hidden, latent_dim);
        m.enc_mu_b = Variable(Tensor({1, latent_dim}));
        m.enc_logsig_w = dense(2 * hidden, latent_dim);
        m.enc_logsig_b = Variable(Tensor({1, latent_dim}));
        m.dec_in_w = dense(latent_dim, hidden);
        m.dec_in_b = Variable(Tensor({1, hidden}));
        m.decoder = BiLstm::init(hidden, hidden, rng);
        m.dec_out_w = dense(2 * hidden, vocab_size);
        m.dec_out_b = Variable(Tensor({1, vocab_size}));
        m.cls_w = dense(latent_dim, 1);
        m.cls_b = Variable(Tensor({1, 1}));
        return m;
    }

    std::vector<Variable*> params() {
        std::vector<Variable*> ps = encoder.params();
        for (Variable* p : decoder.params()) ps.push_back(p);
        for (Variable* p : {&enc_mu_w, &enc_mu_b, &enc_logsig_w, &enc_logsig_b, &dec_in_w,
                            &dec_in_b, &dec_out_w, &dec_out_b, &cls_w, &cls_b})
            ps.push_back(p);
        return ps;
    }
};

struct EncodeNodes {
    Node* mu;     // 1 x n_f
    Node* sigma;  // 1 x n_f, strictly positive
};

namespace detail {

inline std::vector<Node*> split_rows(Graph& g, Node* X) {
    std::vector<Node*> rows(X->value.rows());
    for (std::size_t j = 0; j < rows.size(); ++j) rows[j] = g.slice(X, 0, j, 1);
    return rows;
}

}  // namespace detail

/// Encoder: Bi-LSTM over the embedded document; the summary is the
/// concatenation of the final forward and backward states, mapped by dense
/// heads to μ and log σ.
inline EncodeNodes encode(Graph& g, VaeModel& m, const Tensor& X) {
    if (X.rank() != 2 || X.cols() != m.embed_dim)
        throw std::invalid_argument("encode: input shape " + X.shape_str() +
                                    " does not match embed_dim " + std::to_string(m.embed_dim));
    Node* Xn = g.constant(X);
    BiLstmOut enc = bilstm_sequence(g, m.encoder, detail::split_rows(g, Xn));
    Node* summary = g.concat(enc.final_fwd, enc.final_bwd, 1);
    Node* mu = g.add(g.matmul(summary, g.leaf(m.enc_mu_w)), g.leaf(m.enc_mu_b));
    Node* logsig = g.add(g.matmul(summary, g.leaf(m.enc_logsig_w)), g.leaf(m.enc_logsig_b));
    Node* sigma = g.exp_(logsig);
    if (!mu->value.all_finite() || !sigma->value.all_finite())
        throw std::runtime_error("encode: non-finite activation");
    return {mu, sigma};
}

/// z = μ + σ ⊙ ε with ε N(0,1); gradients flow to μ and σ.
inline Node* reparameterize(Graph& g, const EncodeNodes& enc, Rng& rng) {
    Tensor eps(enc.mu->value.shape);
    for (double& v : eps.data) v = rng.normal();
    return g.add(enc.mu, g.mul(enc.sigma, g.constant(std::move(eps))));
}

/// Value-level variant for direct use; checks σ > 0.
inline Tensor reparameterize(const Tensor& mu, const Tensor& sigma, Rng& rng) {
    if (!mu.same_shape(sigma))
        throw std::invalid_argument("reparameterize: mu/sigma shape mismatch");
    for (double s : sigma.data)
        if (!(s > 0.0)) throw std::invalid_argument("reparameterize: sigma must be positive");
    Tensor z = mu;
    for (std::size_t i = 0; i < z.numel(); ++i) z[i] += sigma[i] * rng.normal();
    return z;
}

/// Decoder: z through a dense layer, tiled across all L positions, a
/// Bi-LSTM, and a per-position softmax over the |V| real tokens (the pad id
/// has no column).
inline Node* decode(Graph& g, VaeModel& m, Node* z) {
    if (z->value.rank() != 2 || z->value.cols() != m.latent_dim)
        throw std::invalid_argument("decode: latent shape " + z->value.shape_str() +
                                    " does not match n_f " + std::to_string(m.latent_dim));
    Node* h0 = g.add(g.matmul(z, g.leaf(m.dec_in_w)), g.leaf(m.dec_in_b));
    Node* tiled = g.repeat_rows(h0, m.seq_len);
    BiLstmOut dec = bilstm_sequence(g, m.decoder, detail::split_rows(g, tiled));
    Node* tau = dec.tau[0];
    for (std::size_t j = 1; j < dec.tau.size(); ++j) tau = g.concat(tau, dec.tau[j], 0);
    Node* logits = g.add_rowvec(g.matmul(tau, g.leaf(m.dec_out_w)), g.leaf(m.dec_out_b));
    return g.softmax_rows(logits);
}

/// Classifier head: P(fake) from the latent vector.
inline Node* classify(Graph& g, VaeModel& m, Node* z) {
    return g.sigmoid(g.add(g.matmul(z, g.leaf(m.cls_w)), g.leaf(m.cls_b)));
}

/// Cross-entropy part of the reconstruction loss:
/// -Σ_{j: id_j != pad} log probs[j][id_j], probabilities floored at 1e-12.
inline Node* loss_reconstruction(Graph& g, Node* probs, const std::vector<int>& padded_ids) {
    std::vector<long> cols(padded_ids.size());
    for (std::size_t j = 0; j < padded_ids.size(); ++j)
        cols[j] = padded_ids[j] == corpus::Vocabulary::pad_id ? -1 : padded_ids[j] - 1;
    return g.nll_rows(probs, std::move(cols));
}

/// KL to the unit Gaussian: ½ Σ_f (μ_f² + σ_f² − 2 log σ_f − 1), always ≥ 0.
inline Node* loss_kl(Graph& g, Node* mu, Node* sigma) {
    Node* terms = g.add(g.mul(mu, mu), g.mul(sigma, sigma));
    terms = g.add(terms, g.affine(g.log_(sigma), -2.0, -1.0));
    return g.scale(g.sum(terms), 0.5);
}

/// Binary cross-entropy with ŷ clamped to [1e-12, 1-1e-12].
inline Node* loss_classifier(Graph& g, double y, Node* y_hat) {
    if (y != 0.0 && y != 1.0)
        throw std::invalid_argument("loss_classifier: label must be 0 or 1");
    Node* p = g.clamp(y_hat, 1e-12, 1.0 - 1e-12);
    Node* pos = g.scale(g.log_(p), -y);
    Node* neg = g.scale(g.log_(g.affine(p, -1.0, 1.0)), -(1.0 - y));
    return g.sum(g.add(pos, neg));
}

/// Minimizes L_CE + L_KL + L_BC with Adam over shuffled mini-batches.
/// Deterministic given cfg.seed; throws if the loss goes non-finite.
inline void train_vae(VaeModel& m, const corpus::Corpus& c,
                      const embedding::EmbeddingMatrix& e, const TrainConfig& cfg) {
    if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.clip_norm <= 0.0)
        throw std::invalid_argument("train_vae: bad config");
    if (e.dim != m.embed_dim)
        throw std::invalid_argument("train_vae: embedding dim mismatch");

    std::vector<Variable*> params = m.params();
    autodiff::AdamOptimizer opt(params, cfg.lr);
    Rng rng(cfg.seed);

    std::vector<std::size_t> order(c.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            opt.zero_grad();
            for (std::size_t pos = start; pos < stop; ++pos) {
                const std::size_t i = order[pos];
                const std::vector<int> padded = corpus::pad_sequence(c.docs[i], m.seq_len);
                const Tensor X = embedding::embed_document(padded, e);
                Graph g;
                EncodeNodes enc = encode(g, m, X);
                Node* z = reparameterize(g, enc, rng);
                Node* probs = decode(g, m, z);
                Node* total = g.add(g.add(loss_reconstruction(g, probs, padded),
                                          loss_kl(g, enc.mu, enc.sigma)),
                                    loss_classifier(g, c.labels[i], classify(g, m, z)));
                if (!std::isfinite(total->value[0]))
                    throw std::runtime_error("train_vae: loss diverged at epoch " +
                                             std::to_string(epoch + 1));
                epoch_loss += total->value[0];
                g.backward(g.scale(total, 1.0 / static_cast<double>(stop - start)));
            }
            opt.clip_grad_norm(cfg.clip_norm);
            opt.step();
        }
        m.loss_history.push_back(epoch_loss / static_cast<double>(c.size()));
    }
}

/// Posterior means μ for every document, |D| x n_f, corpus order. No
/// sampling: repeated extraction is bit-identical.
inline Tensor extract_latent_features(VaeModel& m, const corpus::Corpus& c,
                                      const embedding::EmbeddingMatrix& e) {
    Tensor out({c.size(), m.latent_dim});
    for (std::size_t i = 0; i < c.size(); ++i) {
        const std::vector<int> padded = corpus::pad_sequence(c.docs[i], m.seq_len);
        Graph g;
        EncodeNodes enc = encode(g, m, embedding::embed_document(padded, e));
        std::copy(enc.mu->value.data.begin(), enc.mu->value.data.end(),
                  &out.data[i * m.latent_dim]);
    }
    return out;
}

/// Train-set label predictions from the classifier head (P(fake) via μ).
inline std::vector<double> classifier_head_scores(VaeModel& m, const corpus::Corpus& c,
                                                  const embedding::EmbeddingMatrix& e) {
    std::vector<double> scores(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        const std::vector<int> padded = corpus::pad_sequence(c.docs[i], m.seq_len);
        Graph g;
        EncodeNodes enc = encode(g, m, embedding::embed_document(padded, e));
        scores[i] = classify(g, m, enc.mu)->value[0];
    }
    return scores;
}

}  // namespace ldavae::vae
