#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ldavae/corpus.hpp"
#include "ldavae/rng.hpp"
#include "ldavae/tensor.hpp"

namespace ldavae::embedding {

/// |V| x w word-vector table; row i-1 belongs to vocabulary id i. The pad id
/// 0 has no row and always embeds to the zero vector.
struct EmbeddingMatrix {
    Tensor vectors;  // |V| x w
    std::size_t dim = 0;

    std::size_t vocab_size() const { return vectors.rank() == 2 ? vectors.rows() : 0; }

    const double* row(int id) const {
        if (id < 1 || static_cast<std::size_t>(id) > vocab_size())
            throw std::out_of_range("EmbeddingMatrix: id " + std::to_string(id) +
                                    " out of range 1.." + std::to_string(vocab_size()));
        return &vectors.data[(static_cast<std::size_t>(id) - 1) * dim];
    }
};

/// One training example: a (center, context) pair with its negative draws.
struct SkipgramPair {
    int center = 0;
    int context = 0;
    std::vector<int> negatives;
};

namespace detail {

inline double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace detail

/// Mean negative-sampling loss over a batch of pairs:
/// -log σ(v·v'_ctx) - Σ_neg log σ(-v·v'_neg).
inline double skipgram_loss(const Tensor& in_vecs, const Tensor& out_vecs,
                            const std::vector<SkipgramPair>& pairs) {
    const std::size_t dim = in_vecs.cols();
    double total = 0.0;
    for (const auto& p : pairs) {
        const double* v = &in_vecs.data[static_cast<std::size_t>(p.center - 1) * dim];
        const double* u = &out_vecs.data[static_cast<std::size_t>(p.context - 1) * dim];
        total -= std::log(std::max(detail::sigmoid(detail::dot(v, u, dim)), 1e-12));
        for (int neg : p.negatives) {
            const double* un = &out_vecs.data[static_cast<std::size_t>(neg - 1) * dim];
            total -= std::log(std::max(detail::sigmoid(-detail::dot(v, un, dim)), 1e-12));
        }
    }
    return pairs.empty() ? 0.0 : total / static_cast<double>(pairs.size());
}

/// One full-batch gradient step on the negative-sampling objective.
inline void skipgram_step(Tensor& in_vecs, Tensor& out_vecs,
                          const std::vector<SkipgramPair>& pairs, double lr) {
    const std::size_t dim = in_vecs.cols();
    Tensor gin = Tensor::zeros(in_vecs.shape);
    Tensor gout = Tensor::zeros(out_vecs.shape);
    const double scale = pairs.empty() ? 0.0 : 1.0 / static_cast<double>(pairs.size());
    for (const auto& p : pairs) {
        const std::size_t ci = static_cast<std::size_t>(p.center - 1) * dim;
        const double* v = &in_vecs.data[ci];
        auto push = [&](int word, double label) {
            const std::size_t wi = static_cast<std::size_t>(word - 1) * dim;
            const double* u = &out_vecs.data[wi];
            const double g = (label - detail::sigmoid(detail::dot(v, u, dim))) * scale;
            for (std::size_t d = 0; d < dim; ++d) {
                gin.data[ci + d] += g * u[d];
                gout.data[wi + d] += g * v[d];
            }
        };
        push(p.context, 1.0);
        for (int neg : p.negatives) push(neg, 0.0);
    }
    for (std::size_t i = 0; i < in_vecs.numel(); ++i) in_vecs.data[i] += lr * gin.data[i];
    for (std::size_t i = 0; i < out_vecs.numel(); ++i) out_vecs.data[i] += lr * gout.data[i];
}

/// Skip-gram with negative sampling over the corpus id sequences. Noise
/// distribution is unigram frequency raised to 0.75. The returned embedding
/// is the sum of input and output vectors per word. Deterministic given seed.
inline EmbeddingMatrix train_skipgram(const corpus::Corpus& c, std::size_t dim,
                                      std::size_t window, std::size_t negatives,
                                      std::size_t epochs, double lr, std::uint64_t seed) {
    const std::size_t V = c.vocab.size();
    if (c.size() == 0) throw std::invalid_argument("train_skipgram: empty corpus");
    if (window < 1 || negatives < 1 || dim < 1)
        throw std::invalid_argument("train_skipgram: window, negatives, dim must be >= 1");
    if (V < negatives + 1)
        throw std::runtime_error("train_skipgram: vocabulary size " + std::to_string(V) +
                                 " smaller than negatives+1=" + std::to_string(negatives + 1));

    std::vector<double> noise_cdf(V, 0.0);
    {
        std::vector<double> counts(V, 0.0);
        for (const auto& doc : c.docs)
            for (int id : doc.ids) counts[static_cast<std::size_t>(id - 1)] += 1.0;
        double acc = 0.0;
        for (std::size_t i = 0; i < V; ++i) {
            acc += std::pow(counts[i], 0.75);
            noise_cdf[i] = acc;
        }
        if (acc <= 0.0) throw std::runtime_error("train_skipgram: corpus has no tokens");
        for (double& v : noise_cdf) v /= acc;
    }

    Rng rng(seed);
    Tensor in_vecs({V, dim});
    const double init_range = 0.5 / static_cast<double>(dim);
    for (double& v : in_vecs.data) v = rng.uniform(-init_range, init_range);
    Tensor out_vecs({V, dim});

    auto sample_noise = [&]() -> int {
        const double u = rng.uniform01();
        const auto it = std::lower_bound(noise_cdf.begin(), noise_cdf.end(), u);
        return static_cast<int>(it - noise_cdf.begin()) + 1;
    };

    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        for (const auto& doc : c.docs) {
            const std::size_t n = doc.ids.size();
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t lo = i >= window ? i - window : 0;
                const std::size_t hi = std::min(n, i + window + 1);
                for (std::size_t j = lo; j < hi; ++j) {
                    if (j == i) continue;
                    const int center = doc.ids[i];
                    const int context = doc.ids[j];
                    const std::size_t ci = static_cast<std::size_t>(center - 1) * dim;
                    std::vector<double> acc(dim, 0.0);
                    auto push = [&](int word, double label) {
                        const std::size_t wi = static_cast<std::size_t>(word - 1) * dim;
                        const double g =
                            (label - detail::sigmoid(detail::dot(&in_vecs.data[ci],
                                                                 &out_vecs.data[wi], dim))) *
                            lr;
                        for (std::size_t d = 0; d < dim; ++d) {
                            acc[d] += g * out_vecs.data[wi + d];
                            out_vecs.data[wi + d] += g * in_vecs.data[ci + d];
                        }
                    };
                    push(context, 1.0);
                    for (std::size_t s = 0; s < negatives; ++s) {
                        const int neg = sample_noise();
                        if (neg == context) continue;
                        push(neg, 0.0);
                    }
                    for (std::size_t d = 0; d < dim; ++d) in_vecs.data[ci + d] += acc[d];
                }
            }
        }
    }

    EmbeddingMatrix e;
    e.dim = dim;
    e.vectors = in_vecs;
    e.vectors += out_vecs;
    return e;
}

/// word2vec text format: header "<count> <dim>", then one "token v1..vdim"
/// line per word. Vocabulary tokens absent from the file are initialized
/// uniformly in [-0.5/w, 0.5/w] with a fixed seed.
inline EmbeddingMatrix load_word2vec_text(const std::string& path,
                                          const corpus::Vocabulary& vocab,
                                          std::uint64_t missing_seed = 0x1db5u) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open embedding file: " + path);

    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error(path + ": line 1: empty file, expected '<count> <dim>' header");
    std::istringstream header(line);
    long count = 0, dim = 0;
    if (!(header >> count >> dim) || count < 0 || dim < 1)
        throw std::runtime_error(path + ": line 1: malformed header '" + line + "'");

    const std::size_t w = static_cast<std::size_t>(dim);
    EmbeddingMatrix e;
    e.dim = w;
    e.vectors = Tensor({vocab.size(), w});

    Rng rng(missing_seed);
    const double init_range = 0.5 / static_cast<double>(w);
    for (double& v : e.vectors.data) v = rng.uniform(-init_range, init_range);

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string token;
        ls >> token;
        std::vector<double> values;
        values.reserve(w);
        double v;
        while (ls >> v) values.push_back(v);
        if (values.size() != w)
            throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": got " +
                                     std::to_string(values.size()) + " values, header says " +
                                     std::to_string(w));
        const int id = vocab.id(token);
        if (id == corpus::Vocabulary::pad_id) continue;  // not in vocabulary
        std::copy(values.begin(), values.end(),
                  &e.vectors.data[(static_cast<std::size_t>(id) - 1) * w]);
    }
    return e;
}

/// Writes the matrix in the same text format, full double precision.
inline void save_word2vec_text(const std::string& path, const EmbeddingMatrix& e,
                               const corpus::Vocabulary& vocab) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write embedding file: " + path);
    out.precision(17);
    out << vocab.size() << " " << e.dim << "\n";
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        out << vocab.token(static_cast<int>(i) + 1);
        for (std::size_t d = 0; d < e.dim; ++d) out << " " << e.vectors.data[i * e.dim + d];
        out << "\n";
    }
}

/// Padded id vector -> L x w matrix; pad positions are zero rows.
inline Tensor embed_document(const std::vector<int>& padded_ids, const EmbeddingMatrix& e) {
    Tensor x({padded_ids.size(), e.dim});
    for (std::size_t j = 0; j < padded_ids.size(); ++j) {
        const int id = padded_ids[j];
        if (id == corpus::Vocabulary::pad_id) continue;
        const double* row = e.row(id);  // throws on out-of-range ids
        std::copy(row, row + e.dim, &x.data[j * e.dim]);
    }
    return x;
}

}  // namespace ldavae::embedding
