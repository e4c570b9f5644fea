#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "lyricemb/common.hpp"
#include "lyricemb/corpus_io.hpp"
#include "lyricemb/embedding_matrix.hpp"
#include "lyricemb/rng.hpp"
#include "lyricemb/vocab.hpp"

namespace lyricemb {

enum class Architecture { kCbow, kSkipGram };

inline Architecture parse_architecture(std::string_view s) {
  if (s == "cbow") return Architecture::kCbow;
  if (s == "skipgram" || s == "skip-gram") return Architecture::kSkipGram;
  throw Error("unknown word2vec architecture: " + std::string(s));
}

inline const char* to_string(Architecture a) { return a == Architecture::kCbow ? "cbow" : "skipgram"; }

struct Word2vecConfig {
  std::size_t dim = 128;
  Architecture architecture = Architecture::kCbow;
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t epochs = 5;
  std::uint64_t min_count = kDefaultMinCount;
  double learning_rate = 0.025;
  double min_learning_rate_ratio = 1e-4;  // lr decays linearly to lr * ratio
  double subsample = 1e-3;                // 0 disables subsampling
  std::uint64_t seed = 1;
  unsigned workers = 1;

  void validate() const {
    if (dim < 1) throw Error("word2vec: dim must be >= 1");
    if (epochs < 1) throw Error("word2vec: epochs must be >= 1");
    if (window < 1) throw Error("word2vec: window must be >= 1");
    if (negatives < 1) throw Error("word2vec: negatives must be >= 1");
    if (!(learning_rate > 0.0)) throw Error("word2vec: learning rate must be > 0");
    if (subsample < 0.0) throw Error("word2vec: subsample threshold must be >= 0");
    if (workers < 1) throw Error("word2vec: workers must be >= 1");
  }
};

// Linear decay from lr0 down to lr0 * floor_ratio as progress goes 0 -> 1.
inline double decayed_learning_rate(double lr0, double floor_ratio, double progress) {
  return lr0 * std::max(floor_ratio, 1.0 - progress);
}

// Probability of keeping one occurrence of a token with corpus frequency
// fraction f under threshold t: min(1, sqrt(t / f)).
inline double keep_probability(double threshold, double frequency) {
  if (threshold <= 0.0 || frequency <= 0.0) return 1.0;
  return std::min(1.0, std::sqrt(threshold / frequency));
}

struct EpochCallbackArgs {
  std::size_t epoch;  // 1-based
  double mean_loss;
};

using EpochCallback = std::function<void(const EpochCallbackArgs&)>;

struct Word2vecResult {
  EmbeddingMatrix matrix;
  std::vector<double> epoch_loss;  // mean per-update training loss
};

namespace detail {

// Per-worker state for one pass of CBOW / skip-gram / PV-DM.
struct ContextWorker {
  Rng rng;
  KernelScratch<float> scratch;
  std::vector<TokenId> sentence;
  std::vector<float*> trainable;
  std::vector<float*> outputs;
  double loss = 0.0;
  std::uint64_t updates = 0;

  explicit ContextWorker(std::uint64_t seed) : rng(seed) {}

  void subsampled(std::span<const TokenId> ids, std::span<const double> keep) {
    sentence.clear();
    for (TokenId id : ids) {
      if (keep[id] >= 1.0 || uniform01(rng) < keep[id]) sentence.push_back(id);
    }
  }

  void draw_outputs(EmbeddingMatrix& m, TokenId target, const UnigramSampler& sampler, std::size_t negatives) {
    outputs.clear();
    outputs.push_back(m.output_row(target).data());
    for (std::size_t n = 0; n < negatives; ++n) {
      const TokenId neg = sampler.sample(rng);
      if (neg == target) continue;
      outputs.push_back(m.output_row(neg).data());
    }
  }

  // Effective window after the usual random shrink.
  std::size_t window(std::size_t max_window) { return max_window - uniform_index(rng, max_window); }
};

inline std::vector<double> keep_probabilities(const Vocabulary& vocab, double threshold) {
  const double total = static_cast<double>(std::max<std::uint64_t>(1, vocab.total_count()));
  std::vector<double> keep(vocab.size());
  for (TokenId i = 0; i < keep.size(); ++i) {
    keep[i] = keep_probability(threshold, static_cast<double>(vocab.count(i)) / total);
  }
  return keep;
}

// Runs CBOW or skip-gram updates over one sentence.
// `extra_input` (a document row) joins every CBOW context when non-null.
inline void train_sentence(ContextWorker& w, EmbeddingMatrix& m, const Word2vecConfig& cfg,
                           const UnigramSampler& sampler, float lr, float* extra_input) {
  const auto& sent = w.sentence;
  const std::size_t dim = m.dim();
  for (std::size_t i = 0; i < sent.size(); ++i) {
    const std::size_t win = w.window(cfg.window);
    const std::size_t lo = i >= win ? i - win : 0;
    const std::size_t hi = std::min(sent.size(), i + win + 1);
    if (cfg.architecture == Architecture::kCbow || extra_input != nullptr) {
      w.trainable.clear();
      for (std::size_t j = lo; j < hi; ++j) {
        if (j != i) w.trainable.push_back(m.input_row(sent[j]).data());
      }
      if (extra_input) w.trainable.push_back(extra_input);
      if (w.trainable.empty()) continue;
      w.draw_outputs(m, sent[i], sampler, cfg.negatives);
      w.loss += negative_sampling_step<float>(w.trainable, w.outputs, dim, lr, w.scratch);
      ++w.updates;
    } else {
      float* center = m.input_row(sent[i]).data();
      for (std::size_t j = lo; j < hi; ++j) {
        if (j == i) continue;
        w.draw_outputs(m, sent[j], sampler, cfg.negatives);
        w.trainable.assign(1, center);
        w.loss += negative_sampling_step<float>(w.trainable, w.outputs, dim, lr, w.scratch);
        ++w.updates;
      }
    }
  }
}

inline void check_finite(const EmbeddingMatrix& m, std::size_t epoch, const char* what) {
  if (const auto row = m.first_non_finite_row()) {
    throw Error(std::string(what) + ": non-finite value after epoch " + std::to_string(epoch) +
                " in row " + std::to_string(*row) + " ('" + m.words()[*row] + "')");
  }
}

}  // namespace detail

// Trains `init` in place on `docs` with the negative-sampling objective.
// `init` must be aligned with `vocab` (row i is vocab.token(i)).
// With cfg.workers > 1 the shards update the shared tables without locks, so
// only single-worker runs are reproducible.
inline Word2vecResult train_word2vec(std::span<const TokenizedDocument> docs, const Vocabulary& vocab,
                                     const Word2vecConfig& cfg, EmbeddingMatrix init,
                                     const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (vocab.empty()) throw Error("train_word2vec: empty vocabulary");
  if (init.size() != vocab.size() || !init.has_output()) {
    throw Error("train_word2vec: initial matrix does not match the vocabulary");
  }
  for (TokenId i = 0; i < vocab.size(); ++i) {
    if (init.words()[i] != vocab.token(i)) throw Error("train_word2vec: matrix rows not aligned with vocabulary");
  }

  std::vector<std::vector<TokenId>> encoded;
  encoded.reserve(docs.size());
  std::uint64_t train_words = 0;
  for (const auto& d : docs) {
    encoded.push_back(vocab.encode(d.tokens));
    train_words += encoded.back().size();
  }
  const auto sampler = UnigramSampler::from_vocab(vocab);
  const auto keep = detail::keep_probabilities(vocab, cfg.subsample);
  const double total_updates = static_cast<double>(cfg.epochs * train_words + 1);

  Word2vecResult result{std::move(init), {}};
  EmbeddingMatrix& m = result.matrix;
  const unsigned n_workers = std::max(1u, std::min<unsigned>(cfg.workers, static_cast<unsigned>(std::max<std::size_t>(1, docs.size()))));
  std::vector<detail::ContextWorker> workers;
  for (unsigned w = 0; w < n_workers; ++w) workers.emplace_back(derive_seed(cfg.seed, w));
  std::atomic<std::uint64_t> processed{0};

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto run_shard = [&](unsigned w) {
      auto& worker = workers[w];
      worker.loss = 0.0;
      worker.updates = 0;
      for (std::size_t d = w; d < encoded.size(); d += n_workers) {
        const double progress = static_cast<double>(processed.load(std::memory_order_relaxed)) / total_updates;
        const auto lr = static_cast<float>(decayed_learning_rate(cfg.learning_rate, cfg.min_learning_rate_ratio, progress));
        worker.subsampled(encoded[d], keep);
        detail::train_sentence(worker, m, cfg, sampler, lr, nullptr);
        processed.fetch_add(encoded[d].size(), std::memory_order_relaxed);
      }
    };
    if (n_workers == 1) {
      run_shard(0);
    } else {
      std::vector<std::thread> threads;
      for (unsigned w = 0; w < n_workers; ++w) threads.emplace_back(run_shard, w);
      for (auto& t : threads) t.join();
    }
    double loss = 0.0;
    std::uint64_t updates = 0;
    for (const auto& w : workers) {
      loss += w.loss;
      updates += w.updates;
    }
    detail::check_finite(m, epoch, "train_word2vec");
    result.epoch_loss.push_back(updates ? loss / static_cast<double>(updates) : 0.0);
    if (on_epoch) on_epoch({epoch, result.epoch_loss.back()});
  }
  return result;
}

// Builds the vocabulary (min_count from cfg), initialises and trains.
inline Word2vecResult train_word2vec(std::span<const TokenizedDocument> docs, const Word2vecConfig& cfg,
                                     const EpochCallback& on_epoch = {}) {
  const auto vocab = build_vocab(docs, cfg.min_count);
  if (vocab.empty()) throw Error("train_word2vec: empty vocabulary");
  return train_word2vec(docs, vocab, cfg, init_embedding(vocab, cfg.dim, cfg.seed), on_epoch);
}

// Corpus vocabulary with pretrained rows where the word is known and seeded
// random rows elsewhere. Pretrained-only words are dropped. Output rows start
// at zero so the result feeds straight into train_word2vec.
inline EmbeddingMatrix warm_start_init(const EmbeddingMatrix& pretrained, const Vocabulary& corpus_vocab,
                                       std::uint64_t seed) {
  std::vector<std::string> words;
  words.reserve(corpus_vocab.size());
  for (const auto& e : corpus_vocab.entries()) words.push_back(e.token);
  EmbeddingMatrix m(std::move(words), pretrained.dim(), /*with_output=*/true);
  for (TokenId i = 0; i < m.size(); ++i) {
    if (auto src = pretrained.find(m.words()[i])) {
      const auto from = pretrained.input_row(*src);
      std::copy(from.begin(), from.end(), m.input_row(i).begin());
    } else {
      init_random_row(m.input_row(i), m.words()[i], seed);
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Held-out loss estimation

struct TrainingExample {
  std::vector<TokenId> inputs;  // averaged into the hidden layer
  TokenId target = 0;
  std::vector<TokenId> negatives;
};

// Draws examples the way training would (without subsampling).
inline std::vector<TrainingExample> sample_training_examples(std::span<const TokenizedDocument> docs,
                                                             const Vocabulary& vocab, const Word2vecConfig& cfg,
                                                             std::size_t count, std::uint64_t seed) {
  std::vector<std::vector<TokenId>> encoded;
  for (const auto& d : docs) {
    auto ids = vocab.encode(d.tokens);
    if (ids.size() >= 2) encoded.push_back(std::move(ids));
  }
  std::vector<TrainingExample> out;
  if (encoded.empty()) return out;
  const auto sampler = UnigramSampler::from_vocab(vocab);
  Rng rng(seed);
  while (out.size() < count) {
    const auto& sent = encoded[uniform_index(rng, encoded.size())];
    const std::size_t i = uniform_index(rng, sent.size());
    const std::size_t lo = i >= cfg.window ? i - cfg.window : 0;
    const std::size_t hi = std::min(sent.size(), i + cfg.window + 1);
    TrainingExample ex;
    if (cfg.architecture == Architecture::kCbow) {
      for (std::size_t j = lo; j < hi; ++j) {
        if (j != i) ex.inputs.push_back(sent[j]);
      }
      ex.target = sent[i];
    } else {
      std::size_t j = i;
      while (j == i) j = lo + uniform_index(rng, hi - lo);
      ex.inputs.push_back(sent[i]);
      ex.target = sent[j];
    }
    for (std::size_t n = 0; n < cfg.negatives; ++n) {
      const TokenId neg = sampler.sample(rng);
      if (neg != ex.target) ex.negatives.push_back(neg);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

inline double mean_negative_sampling_loss(const EmbeddingMatrix& m, std::span<const TrainingExample> examples) {
  if (examples.empty() || !m.has_output()) return 0.0;
  KernelScratch<float> scratch;
  std::vector<const float*> in, out;
  double total = 0.0;
  for (const auto& ex : examples) {
    in.clear();
    out.clear();
    for (TokenId id : ex.inputs) in.push_back(m.input_row(id).data());
    out.push_back(m.output_row(ex.target).data());
    for (TokenId id : ex.negatives) out.push_back(m.output_row(id).data());
    total += negative_sampling_forward<float>(in, out, m.dim(), scratch);
  }
  return total / static_cast<double>(examples.size());
}

}  // namespace lyricemb
