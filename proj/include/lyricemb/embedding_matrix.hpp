#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lyricemb/common.hpp"
#include "lyricemb/rng.hpp"
#include "lyricemb/vocab.hpp"

namespace lyricemb {

// Input vectors W and (optionally) output vectors W' over a word list.
// Row i of both tables belongs to words()[i].
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;

  EmbeddingMatrix(std::vector<std::string> words, std::size_t dim, bool with_output)
      : words_(std::move(words)), dim_(dim) {
    if (dim_ == 0) throw Error("embedding dimension must be >= 1");
    input_.assign(words_.size() * dim_, 0.0f);
    if (with_output) output_.assign(words_.size() * dim_, 0.0f);
    rebuild_index();
  }

  std::size_t size() const { return words_.size(); }
  std::size_t dim() const { return dim_; }
  bool has_output() const { return !output_.empty(); }
  const std::vector<std::string>& words() const { return words_; }

  std::optional<TokenId> find(std::string_view word) const {
    const auto it = index_.find(std::string(word));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::span<float> input_row(TokenId id) { return {input_.data() + std::size_t{id} * dim_, dim_}; }
  std::span<const float> input_row(TokenId id) const { return {input_.data() + std::size_t{id} * dim_, dim_}; }
  std::span<float> output_row(TokenId id) { return {output_.data() + std::size_t{id} * dim_, dim_}; }
  std::span<const float> output_row(TokenId id) const { return {output_.data() + std::size_t{id} * dim_, dim_}; }

  std::vector<float>& input_data() { return input_; }
  const std::vector<float>& input_data() const { return input_; }
  std::vector<float>& output_data() { return output_; }
  const std::vector<float>& output_data() const { return output_; }

  void drop_output() { output_.clear(); output_.shrink_to_fit(); }

  // Index of the first row holding a non-finite value, if any.
  std::optional<std::size_t> first_non_finite_row() const {
    for (const auto* table : {&input_, &output_}) {
      for (std::size_t i = 0; i < table->size(); ++i) {
        if (!std::isfinite((*table)[i])) return i / dim_;
      }
    }
    return std::nullopt;
  }

  friend bool operator==(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
    return a.words_ == b.words_ && a.dim_ == b.dim_ && a.input_ == b.input_ && a.output_ == b.output_;
  }

 private:
  void rebuild_index() {
    index_.clear();
    index_.reserve(words_.size());
    for (std::size_t i = 0; i < words_.size(); ++i) {
      if (!index_.emplace(words_[i], static_cast<TokenId>(i)).second) {
        throw Error("duplicate word in embedding matrix: " + words_[i]);
      }
    }
  }

  std::vector<std::string> words_;
  std::size_t dim_ = 0;
  std::vector<float> input_;
  std::vector<float> output_;
  std::unordered_map<std::string, TokenId> index_;
};

// Fills `row` uniformly in [-0.5/d, 0.5/d), seeded per token so the value
// does not depend on vocabulary order.
inline void init_random_row(std::span<float> row, std::string_view token, std::uint64_t seed) {
  Rng rng(derive_seed(seed, token));
  const double d = static_cast<double>(row.size());
  for (auto& x : row) x = static_cast<float>((uniform01(rng) - 0.5) / d);
}

// Fresh trainable matrix: random input rows, zero output rows.
inline EmbeddingMatrix init_embedding(const Vocabulary& vocab, std::size_t dim, std::uint64_t seed) {
  std::vector<std::string> words;
  words.reserve(vocab.size());
  for (const auto& e : vocab.entries()) words.push_back(e.token);
  EmbeddingMatrix m(std::move(words), dim, /*with_output=*/true);
  for (TokenId i = 0; i < m.size(); ++i) init_random_row(m.input_row(i), m.words()[i], seed);
  return m;
}

// Negative-sampling distribution P(w) ~ count(w)^0.75 drawn in O(1) through
// Vose's alias table.
class UnigramSampler {
 public:
  static constexpr double kPower = 0.75;

  explicit UnigramSampler(std::span<const std::uint64_t> counts, double power = kPower) {
    if (counts.empty()) throw Error("negative sampling table needs at least one token");
    const std::size_t n = counts.size();
    probs_.resize(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      probs_[i] = std::pow(static_cast<double>(counts[i]), power);
      total += probs_[i];
    }
    if (!(total > 0.0)) throw Error("negative sampling table: all counts are zero");
    for (auto& p : probs_) p /= total;

    accept_.assign(n, 0.0);
    alias_.assign(n, 0);
    std::vector<double> scaled(n);
    std::vector<std::uint32_t> small, large;
    for (std::size_t i = 0; i < n; ++i) {
      scaled[i] = probs_[i] * static_cast<double>(n);
      (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
    }
    while (!small.empty() && !large.empty()) {
      const auto s = small.back();
      small.pop_back();
      const auto l = large.back();
      accept_[s] = scaled[s];
      alias_[s] = l;
      scaled[l] = (scaled[l] + scaled[s]) - 1.0;
      if (scaled[l] < 1.0) {
        large.pop_back();
        small.push_back(l);
      }
    }
    for (auto i : large) accept_[i] = 1.0;
    for (auto i : small) accept_[i] = 1.0;
  }

  static UnigramSampler from_vocab(const Vocabulary& vocab) {
    std::vector<std::uint64_t> counts;
    counts.reserve(vocab.size());
    for (const auto& e : vocab.entries()) counts.push_back(e.count);
    return UnigramSampler(counts);
  }

  TokenId sample(Rng& rng) const {
    const auto i = static_cast<TokenId>(uniform_index(rng, probs_.size()));
    return uniform01(rng) < accept_[i] ? i : alias_[i];
  }

  double probability(TokenId id) const { return probs_.at(id); }
  const std::vector<double>& probabilities() const { return probs_; }
  std::size_t size() const { return probs_.size(); }

 private:
  std::vector<double> probs_;
  std::vector<double> accept_;
  std::vector<TokenId> alias_;
};

// ---------------------------------------------------------------------------
// Negative-sampling kernel shared by CBOW, skip-gram, PV-DM and inference.
//
// The hidden vector h is the mean of the input rows. outputs[0] is the
// observed word (label 1); the remaining rows are noise words (label 0).
// The loss minimised is
//     -log s(u_0 . h) - sum_{n>0} log s(-u_n . h).

template <class T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

// log(1 + exp(x)) without overflow.
template <class T>
T softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <class T>
struct KernelScratch {
  std::vector<T> hidden;
  std::vector<T> grad_hidden;  // dLoss/dh
  std::vector<T> coeff;        // dLoss/d(u_j . h) per output row
};

// Forward pass plus gradient bookkeeping; leaves every row untouched.
template <class T>
T negative_sampling_forward(std::span<const T* const> inputs, std::span<const T* const> outputs,
                            std::size_t dim, KernelScratch<T>& s) {
  s.hidden.assign(dim, T(0));
  s.grad_hidden.assign(dim, T(0));
  s.coeff.assign(outputs.size(), T(0));
  if (inputs.empty() || outputs.empty()) return T(0);
  for (const T* row : inputs) {
    for (std::size_t k = 0; k < dim; ++k) s.hidden[k] += row[k];
  }
  const T inv_n = T(1) / static_cast<T>(inputs.size());
  for (auto& h : s.hidden) h *= inv_n;

  T loss = 0;
  for (std::size_t j = 0; j < outputs.size(); ++j) {
    const T* u = outputs[j];
    T f = 0;
    for (std::size_t k = 0; k < dim; ++k) f += u[k] * s.hidden[k];
    const bool positive = j == 0;
    loss += positive ? softplus(-f) : softplus(f);
    const T c = sigmoid(f) - (positive ? T(1) : T(0));
    s.coeff[j] = c;
    for (std::size_t k = 0; k < dim; ++k) s.grad_hidden[k] += c * u[k];
  }
  return loss;
}

// One SGD step with learning rate `lr` on every input and output row. All
// gradients are evaluated before any row moves, so the applied update is
// exactly -lr * gradient even when a row appears more than once.
template <class T>
T negative_sampling_step(std::span<T* const> inputs, std::span<T* const> outputs, std::size_t dim, T lr,
                         KernelScratch<T>& s) {
  thread_local std::vector<const T*> in;
  thread_local std::vector<const T*> out;
  in.assign(inputs.begin(), inputs.end());
  out.assign(outputs.begin(), outputs.end());
  const T loss = negative_sampling_forward<T>(in, out, dim, s);
  if (in.empty() || out.empty()) return loss;

  for (std::size_t j = 0; j < outputs.size(); ++j) {
    const T step = lr * s.coeff[j];
    T* u = outputs[j];
    for (std::size_t k = 0; k < dim; ++k) u[k] -= step * s.hidden[k];
  }
  const T scale = lr / static_cast<T>(in.size());
  for (T* row : inputs) {
    for (std::size_t k = 0; k < dim; ++k) row[k] -= scale * s.grad_hidden[k];
  }
  return loss;
}

}  // namespace lyricemb
