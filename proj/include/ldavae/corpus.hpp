#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "ldavae/math.hpp"
#include "ldavae/rng.hpp"

namespace ldavae::corpus {

/// Labeled raw text. label: 1 = fake, 0 = real.
struct RawDocument {
    std::string text;
    int label = 0;
};

/// Token <-> id bijection over ids 1..|V|. Id 0 is the padding id and never
/// maps to a token.
class Vocabulary {
public:
    static constexpr int pad_id = 0;

    Vocabulary() = default;

    /// Tokens are assigned ids 1..n in the order given.
    explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
        for (std::size_t i = 0; i < tokens_.size(); ++i)
            index_[tokens_[i]] = static_cast<int>(i) + 1;
        if (index_.size() != tokens_.size())
            throw std::invalid_argument("Vocabulary: duplicate tokens");
    }

    std::size_t size() const { return tokens_.size(); }

    /// Id of a token, or 0 if absent.
    int id(const std::string& token) const {
        auto it = index_.find(token);
        return it == index_.end() ? 0 : it->second;
    }

    bool contains(const std::string& token) const { return index_.count(token) > 0; }

    const std::string& token(int id) const {
        if (id < 1 || static_cast<std::size_t>(id) > tokens_.size())
            throw std::out_of_range("Vocabulary: id " + std::to_string(id) +
                                    " out of range 1.." + std::to_string(tokens_.size()));
        return tokens_[static_cast<std::size_t>(id) - 1];
    }

    const std::vector<std::string>& tokens() const { return tokens_; }

    /// Order-sensitive content hash, used to bind trained models to the
    /// vocabulary they were fitted against.
    std::uint64_t hash() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (const auto& t : tokens_) {
            h = fnv1a64(t, h);
            h = fnv1a64("\n", h);
        }
        return h;
    }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

/// One document as vocabulary ids (unpadded).
struct TokenSequence {
    std::vector<int> ids;

    std::size_t length() const { return ids.size(); }
};

struct Corpus {
    std::vector<TokenSequence> docs;
    std::vector<int> labels;
    Vocabulary vocab;
    std::size_t max_len = 0;  // L

    std::size_t size() const { return docs.size(); }
};

struct TokenizerConfig {
    std::set<std::string> stopwords;
};

namespace detail {

inline bool is_strip_char(char c) {
    return c == '-' || c == '@' || c == '#' || c == '(' || c == ')';
}

inline bool looks_like_url(const std::string& t) {
    return t.rfind("http://", 0) == 0 || t.rfind("https://", 0) == 0 ||
           t.rfind("www.", 0) == 0;
}

}  // namespace detail

/// Lowercase and split on whitespace, then per token: URLs and
/// mention/hashtag tokens (leading '@'/'#') are dropped whole; the characters
/// -, @, #, (, ) are deleted elsewhere; anything still containing a
/// non-ASCII-alphabetic character is dropped; stopwords are dropped last.
inline std::vector<std::string> tokenize(const std::string& text,
                                         const TokenizerConfig& cfg) {
    std::vector<std::string> out;
    std::string lower;
    lower.reserve(text.size());
    for (char c : text)
        lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));

    std::istringstream ss(lower);
    std::string tok;
    while (ss >> tok) {
        if (detail::looks_like_url(tok)) continue;
        if (tok[0] == '@' || tok[0] == '#') continue;
        std::string kept;
        kept.reserve(tok.size());
        for (char c : tok)
            if (!detail::is_strip_char(c)) kept.push_back(c);
        if (kept.empty()) continue;
        bool alphabetic = true;
        for (char c : kept)
            if (c < 'a' || c > 'z') {
                alphabetic = false;
                break;
            }
        if (!alphabetic) continue;
        if (cfg.stopwords.count(kept)) continue;
        out.push_back(std::move(kept));
    }
    return out;
}

/// Stopword file: one token per line, blank lines ignored.
inline std::set<std::string> load_stopwords(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open stopword file: " + path);
    std::set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) words.insert(line);
    }
    return words;
}

/// Tokens appearing at least min_count times, ids 1..|V| in first-occurrence
/// order.
inline Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& token_docs,
                                   std::size_t min_count = 1) {
    if (min_count < 1) throw std::invalid_argument("build_vocabulary: min_count must be >= 1");
    std::unordered_map<std::string, std::size_t> counts;
    std::vector<std::string> order;
    for (const auto& doc : token_docs)
        for (const auto& tok : doc) {
            auto [it, fresh] = counts.emplace(tok, 0);
            if (fresh) order.push_back(tok);
            ++it->second;
        }
    std::vector<std::string> kept;
    for (const auto& tok : order)
        if (counts[tok] >= min_count) kept.push_back(tok);
    if (kept.empty())
        throw std::runtime_error("build_vocabulary: no token survives min_count=" +
                                 std::to_string(min_count));
    return Vocabulary(std::move(kept));
}

/// Fixed-length id vector: ids then zeros; longer sequences truncate to L.
inline std::vector<int> pad_sequence(const TokenSequence& seq, std::size_t L) {
    if (L < 1) throw std::invalid_argument("pad_sequence: L must be >= 1");
    std::vector<int> out(L, Vocabulary::pad_id);
    const std::size_t n = std::min(seq.length(), L);
    std::copy(seq.ids.begin(), seq.ids.begin() + static_cast<long>(n), out.begin());
    return out;
}

namespace detail {

inline std::size_t hamming(const std::vector<int>& a, const std::vector<int>& b) {
    std::size_t d = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) ++d;
    return d;
}

/// Per-position mode over the group; ties resolve to the seed's value when it
/// participates in the tie, else to the smallest id.
inline int positional_mode(const std::vector<const std::vector<int>*>& group,
                           std::size_t pos, int seed_value) {
    std::map<int, std::size_t> counts;
    for (const auto* v : group) ++counts[(*v)[pos]];
    std::size_t best = 0;
    for (const auto& [value, c] : counts) best = std::max(best, c);
    if (counts[seed_value] == best) return seed_value;
    for (const auto& [value, c] : counts)
        if (c == best) return value;  // map order -> smallest id
    return seed_value;
}

}  // namespace detail

/// Categorical SMOTE on padded id vectors under Hamming distance. Synthetic
/// minority documents are positional modes over a seed document and its k
/// nearest minority neighbors; the result keeps all originals and returns a
/// class-balanced corpus.
inline Corpus smoten_oversample(const Corpus& in, std::size_t k, std::uint64_t seed) {
    std::size_t n_fake = 0, n_real = 0;
    for (int y : in.labels) (y == 1 ? n_fake : n_real)++;
    if (n_fake == 0 || n_real == 0)
        throw std::runtime_error("smoten_oversample: both classes must be present");
    if (n_fake == n_real) return in;

    const int minority_label = n_fake < n_real ? 1 : 0;
    const std::size_t n_minor = std::min(n_fake, n_real);
    const std::size_t need = std::max(n_fake, n_real) - n_minor;
    if (n_minor <= k)
        throw std::runtime_error("smoten_oversample: minority class size " +
                                 std::to_string(n_minor) + " must exceed k=" +
                                 std::to_string(k));

    std::vector<std::vector<int>> minority;
    minority.reserve(n_minor);
    for (std::size_t i = 0; i < in.size(); ++i)
        if (in.labels[i] == minority_label)
            minority.push_back(pad_sequence(in.docs[i], in.max_len));

    Corpus out = in;
    Rng rng(seed);
    for (std::size_t s = 0; s < need; ++s) {
        const std::size_t seed_idx = static_cast<std::size_t>(rng.uniform_int(n_minor));
        const std::vector<int>& seed_vec = minority[seed_idx];

        std::vector<std::pair<std::size_t, std::size_t>> by_dist;  // (distance, index)
        for (std::size_t j = 0; j < minority.size(); ++j) {
            if (j == seed_idx) continue;
            by_dist.emplace_back(detail::hamming(seed_vec, minority[j]), j);
        }
        std::sort(by_dist.begin(), by_dist.end());

        std::vector<const std::vector<int>*> group{&seed_vec};
        for (std::size_t j = 0; j < k; ++j) group.push_back(&minority[by_dist[j].second]);

        TokenSequence synthetic;
        for (std::size_t pos = 0; pos < in.max_len; ++pos) {
            const int v = detail::positional_mode(group, pos, seed_vec[pos]);
            if (v == Vocabulary::pad_id) break;  // id sequences are prefix-then-pad
            synthetic.ids.push_back(v);
        }
        out.docs.push_back(std::move(synthetic));
        out.labels.push_back(minority_label);
    }
    return out;
}

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline std::string to_lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

/// RFC 4180-style reader: quoted fields, doubled-quote escapes, newlines
/// inside quotes. Returns one vector of fields per record.
inline std::vector<std::vector<std::string>> read_csv_records(std::istream& in) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> fields;
    std::string field;
    bool in_quotes = false;
    bool any_content = false;
    char c;
    while (in.get(c)) {
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    field.push_back('"');
                    in.get();
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            in_quotes = true;
            any_content = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
            any_content = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && in.peek() == '\n') in.get();
            if (any_content || !field.empty()) {
                fields.push_back(std::move(field));
                field.clear();
                records.push_back(std::move(fields));
                fields.clear();
                any_content = false;
            }
        } else {
            field.push_back(c);
            any_content = true;
        }
    }
    if (any_content || !field.empty()) {
        fields.push_back(std::move(field));
        records.push_back(std::move(fields));
    }
    return records;
}

}  // namespace detail

/// Load labeled documents from a headered CSV. Labels accept 0/1/real/fake
/// (case-insensitive); anything else is a parse error naming the row.
inline std::vector<RawDocument> load_csv(const std::string& path,
                                         const std::string& text_column = "text",
                                         const std::string& label_column = "label") {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open csv file: " + path);
    auto records = detail::read_csv_records(in);
    if (records.empty()) throw std::runtime_error(path + ": missing header row");

    const auto& header = records[0];
    long text_idx = -1, label_idx = -1;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (detail::trim(header[i]) == text_column) text_idx = static_cast<long>(i);
        if (detail::trim(header[i]) == label_column) label_idx = static_cast<long>(i);
    }
    if (text_idx < 0)
        throw std::runtime_error(path + ": header has no column '" + text_column + "'");
    if (label_idx < 0)
        throw std::runtime_error(path + ": header has no column '" + label_column + "'");

    std::vector<RawDocument> docs;
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        const std::size_t need = static_cast<std::size_t>(std::max(text_idx, label_idx)) + 1;
        if (rec.size() < need)
            throw std::runtime_error(path + ": row " + std::to_string(r + 1) +
                                     " has " + std::to_string(rec.size()) + " fields, needs " +
                                     std::to_string(need));
        const std::string raw_label = detail::to_lower(detail::trim(rec[static_cast<std::size_t>(label_idx)]));
        int label;
        if (raw_label == "0" || raw_label == "real")
            label = 0;
        else if (raw_label == "1" || raw_label == "fake")
            label = 1;
        else
            throw std::runtime_error(path + ": row " + std::to_string(r + 1) +
                                     " has unknown label '" + raw_label + "'");
        docs.push_back({rec[static_cast<std::size_t>(text_idx)], label});
    }
    return docs;
}

/// Tokenize raw documents, build the vocabulary, and map to id sequences.
/// Documents left empty after tokenization and min_count filtering are
/// dropped. max_len_cap, when set, truncates L.
inline Corpus build_corpus(const std::vector<RawDocument>& raw, const TokenizerConfig& cfg,
                           std::size_t min_count = 1,
                           std::optional<std::size_t> max_len_cap = std::nullopt) {
    std::vector<std::vector<std::string>> token_docs;
    token_docs.reserve(raw.size());
    for (const auto& d : raw) token_docs.push_back(tokenize(d.text, cfg));

    Corpus c;
    c.vocab = build_vocabulary(token_docs, min_count);
    for (std::size_t i = 0; i < token_docs.size(); ++i) {
        TokenSequence seq;
        for (const auto& tok : token_docs[i]) {
            const int id = c.vocab.id(tok);
            if (id != Vocabulary::pad_id) seq.ids.push_back(id);
        }
        if (seq.ids.empty()) continue;
        if (max_len_cap && seq.ids.size() > *max_len_cap) seq.ids.resize(*max_len_cap);
        c.max_len = std::max(c.max_len, seq.length());
        c.docs.push_back(std::move(seq));
        c.labels.push_back(raw[i].label);
    }
    if (c.docs.empty()) throw std::runtime_error("build_corpus: no non-empty documents");
    return c;
}

}  // namespace ldavae::corpus
