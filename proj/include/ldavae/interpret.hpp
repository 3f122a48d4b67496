#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ldavae/corpus.hpp"
#include "ldavae/tensor.hpp"
#include "ldavae/topic.hpp"

namespace ldavae::interpret {

/// Per-class arithmetic means of the document-topic posteriors; each profile
/// lies on the simplex.
struct ClassTopicProfile {
    std::vector<double> real_profile;
    std::vector<double> fake_profile;
    std::size_t n_real = 0;
    std::size_t n_fake = 0;
};

inline ClassTopicProfile class_topic_profile(const Tensor& phi, const std::vector<int>& labels) {
    if (phi.rank() != 2 || phi.rows() != labels.size())
        throw std::invalid_argument("class_topic_profile: phi rows must match labels");
    const std::size_t K = phi.cols();
    ClassTopicProfile p;
    p.real_profile.assign(K, 0.0);
    p.fake_profile.assign(K, 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto& acc = labels[i] == 1 ? p.fake_profile : p.real_profile;
        auto& n = labels[i] == 1 ? p.n_fake : p.n_real;
        for (std::size_t k = 0; k < K; ++k) acc[k] += phi.at(i, k);
        ++n;
    }
    if (p.n_real == 0 || p.n_fake == 0)
        throw std::invalid_argument("class_topic_profile: both classes must be present");
    for (double& v : p.real_profile) v /= static_cast<double>(p.n_real);
    for (double& v : p.fake_profile) v /= static_cast<double>(p.n_fake);
    return p;
}

struct RankedTopic {
    std::size_t topic = 0;
    double score = 0.0;
};

/// Topics ranked by |fake mean − real mean|, descending, ties toward the
/// smaller index.
inline std::vector<RankedTopic> discriminative_topics(const ClassTopicProfile& profile,
                                                      std::size_t top_m) {
    const std::size_t K = profile.real_profile.size();
    if (top_m > K)
        throw std::invalid_argument("discriminative_topics: top_m exceeds topic count");
    std::vector<RankedTopic> ranked(K);
    for (std::size_t k = 0; k < K; ++k) {
        ranked[k].topic = k;
        ranked[k].score = std::fabs(profile.fake_profile[k] - profile.real_profile[k]);
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const RankedTopic& a, const RankedTopic& b) { return a.score > b.score; });
    ranked.resize(top_m);
    return ranked;
}

/// Top-n words of a topic-word distribution with probabilities renormalized
/// over the selected set. Ties toward the smaller id.
inline std::vector<std::pair<std::string, double>> top_words(
    const std::vector<double>& beta_k, const corpus::Vocabulary& vocab, std::size_t n = 20) {
    if (n < 1) throw std::invalid_argument("top_words: n must be >= 1");
    if (beta_k.size() != vocab.size())
        throw std::invalid_argument("top_words: beta size does not match vocabulary");
    std::vector<std::size_t> order(beta_k.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return beta_k[a] > beta_k[b]; });
    order.resize(std::min(n, order.size()));

    double mass = 0.0;
    for (std::size_t i : order) mass += beta_k[i];
    std::vector<std::pair<std::string, double>> out;
    out.reserve(order.size());
    for (std::size_t i : order)
        out.emplace_back(vocab.token(static_cast<int>(i) + 1),
                         mass > 0.0 ? beta_k[i] / mass : 0.0);
    return out;
}

/// One word of a document with its most probable topic assignment.
struct WordColor {
    std::string token;
    std::size_t topic = 0;
    std::vector<double> posterior;
};

/// Colors each word position by the argmax of its topic posterior (ties
/// toward the smaller topic index).
inline std::vector<WordColor> color_words(const topic::LdaModel& m,
                                          const corpus::TokenSequence& doc,
                                          const corpus::Vocabulary& vocab) {
    const topic::BowDocument bow = topic::to_bow(doc);
    const auto posteriors = topic::word_topic_posterior(m, bow);

    std::vector<WordColor> out;
    out.reserve(doc.ids.size());
    for (int id : doc.ids) {
        if (id == corpus::Vocabulary::pad_id) continue;
        std::size_t slot = 0;
        while (slot < bow.counts.size() && bow.counts[slot].first != id) ++slot;
        WordColor wc;
        wc.token = vocab.token(id);
        wc.posterior = posteriors[slot];
        wc.topic = static_cast<std::size_t>(
            std::max_element(wc.posterior.begin(), wc.posterior.end()) - wc.posterior.begin());
        out.push_back(std::move(wc));
    }
    return out;
}

}  // namespace ldavae::interpret
