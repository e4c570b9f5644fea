#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lyricemb/common.hpp"
#include "lyricemb/corpus_io.hpp"
#include "lyricemb/rng.hpp"
#include "lyricemb/vocab.hpp"

namespace lyricemb {

struct SparseVector {
  std::size_t dim = 0;
  std::vector<std::pair<std::uint32_t, double>> entries;  // strictly increasing index

  double value_at(std::uint32_t index) const {
    for (const auto& [i, v] : entries) {
      if (i == index) return v;
    }
    return 0.0;
  }

  std::vector<float> densify() const {
    std::vector<float> out(dim, 0.0f);
    for (const auto& [i, v] : entries) out[i] = static_cast<float>(v);
    return out;
  }

  double l2_norm() const {
    double s = 0.0;
    for (const auto& e : entries) s += e.second * e.second;
    return std::sqrt(s);
  }
};

namespace detail {

inline std::map<TokenId, std::uint64_t> term_counts(std::span<const std::string> tokens,
                                                     const Vocabulary& vocab) {
  std::map<TokenId, std::uint64_t> tf;
  for (const auto& t : tokens) {
    if (auto id = vocab.find(t)) ++tf[*id];
  }
  return tf;
}

}  // namespace detail

// Raw in-vocabulary term counts. Flagged when no token is in the vocabulary.
inline Flagged<SparseVector> bow_vector(std::span<const std::string> tokens, const Vocabulary& vocab) {
  Flagged<SparseVector> out;
  out.value.dim = vocab.size();
  for (const auto& [id, n] : detail::term_counts(tokens, vocab)) {
    out.value.entries.emplace_back(id, static_cast<double>(n));
  }
  out.flagged = out.value.entries.empty();
  return out;
}

// Smoothed inverse document frequency: ln((1 + N) / (1 + df)) + 1.
inline double smoothed_idf(std::uint64_t total_docs, std::uint64_t doc_freq) {
  return std::log((1.0 + static_cast<double>(total_docs)) / (1.0 + static_cast<double>(doc_freq))) + 1.0;
}

// tf * idf per term, then L2-normalised. A zero vector is returned flagged.
inline Flagged<SparseVector> tfidf_vector(std::span<const std::string> tokens, const Vocabulary& vocab,
                                          std::uint64_t total_docs) {
  Flagged<SparseVector> out;
  out.value.dim = vocab.size();
  for (const auto& [id, n] : detail::term_counts(tokens, vocab)) {
    out.value.entries.emplace_back(id, static_cast<double>(n) * smoothed_idf(total_docs, vocab.doc_freq(id)));
  }
  const double norm = out.value.l2_norm();
  if (norm == 0.0) {
    out.flagged = true;
    return out;
  }
  for (auto& e : out.value.entries) e.second /= norm;
  return out;
}

inline Flagged<SparseVector> tfidf_vector(std::span<const std::string> tokens, const Vocabulary& vocab) {
  return tfidf_vector(tokens, vocab, vocab.total_docs());
}

inline constexpr std::size_t kRandomBaselineDim = 128;

// Standard-normal vector for a token, a pure function of (seed, token).
inline std::vector<float> random_token_vector(std::string_view token, std::size_t dim, std::uint64_t seed) {
  Rng rng(derive_seed(seed, token));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<float> v(dim);
  for (auto& x : v) x = static_cast<float>(normal(rng));
  return v;
}

// Mean of per-token random vectors. Tokens are grouped first so the result
// does not depend on token order.
inline Flagged<std::vector<float>> random_embed_doc(std::span<const std::string> tokens,
                                                    std::size_t dim = kRandomBaselineDim,
                                                    std::uint64_t seed = 0) {
  if (dim < 1) throw Error("random_embed_doc: dim must be >= 1");
  Flagged<std::vector<float>> out{std::vector<float>(dim, 0.0f), tokens.empty()};
  if (tokens.empty()) return out;
  std::map<std::string_view, std::size_t> counts;
  for (const auto& t : tokens) ++counts[t];
  std::vector<double> sum(dim, 0.0);
  for (const auto& [tok, n] : counts) {
    const auto v = random_token_vector(tok, dim, seed);
    for (std::size_t k = 0; k < dim; ++k) sum[k] += static_cast<double>(n) * v[k];
  }
  for (std::size_t k = 0; k < dim; ++k) {
    out.value[k] = static_cast<float>(sum[k] / static_cast<double>(tokens.size()));
  }
  return out;
}

}  // namespace lyricemb
