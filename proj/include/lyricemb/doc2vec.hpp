#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lyricemb/binary_io.hpp"
#include "lyricemb/common.hpp"
#include "lyricemb/corpus_io.hpp"
#include "lyricemb/embedding_matrix.hpp"
#include "lyricemb/vocab.hpp"
#include "lyricemb/word2vec.hpp"

namespace lyricemb {

struct Doc2vecConfig {
  Word2vecConfig word2vec;
  std::size_t infer_steps = 50;
  double infer_min_learning_rate_ratio = 1e-2;  // inference lr decays to lr / 100
};

// PV-DM: each prediction averages the context word vectors together with the
// document's own vector.
struct Doc2vecModel {
  EmbeddingMatrix words;        // W and W'
  std::vector<std::uint64_t> word_counts;  // corpus counts, drive the noise distribution
  std::vector<std::string> doc_ids;
  std::vector<float> doc_vectors;  // doc_ids.size() x dim
  Doc2vecConfig config;
  std::vector<double> epoch_loss;

  std::size_t dim() const { return words.dim(); }

  std::span<const float> doc_row(std::size_t i) const { return {doc_vectors.data() + i * dim(), dim()}; }
  std::span<float> doc_row(std::size_t i) { return {doc_vectors.data() + i * dim(), dim()}; }

  std::optional<std::size_t> find_doc(const std::string& doc_id) const {
    const auto it = std::find(doc_ids.begin(), doc_ids.end(), doc_id);
    if (it == doc_ids.end()) return std::nullopt;
    return static_cast<std::size_t>(it - doc_ids.begin());
  }
};

inline Doc2vecModel train_doc2vec(std::span<const TokenizedDocument> docs, const Vocabulary& vocab,
                                  const Doc2vecConfig& cfg, const EpochCallback& on_epoch = {}) {
  const auto& wc = cfg.word2vec;
  wc.validate();
  if (vocab.empty()) throw Error("train_doc2vec: empty vocabulary");
  if (cfg.infer_steps < 1) throw Error("train_doc2vec: infer_steps must be >= 1");

  Doc2vecModel model{init_embedding(vocab, wc.dim, wc.seed), {}, {}, {}, cfg, {}};
  for (const auto& e : vocab.entries()) model.word_counts.push_back(e.count);
  model.doc_ids.reserve(docs.size());
  model.doc_vectors.assign(docs.size() * wc.dim, 0.0f);
  const std::uint64_t doc_seed = derive_seed(wc.seed, "doc-vectors");
  for (std::size_t d = 0; d < docs.size(); ++d) {
    model.doc_ids.push_back(docs[d].doc_id);
    init_random_row(model.doc_row(d), docs[d].doc_id, doc_seed);
  }

  std::vector<std::vector<TokenId>> encoded;
  std::uint64_t train_words = 0;
  for (const auto& d : docs) {
    encoded.push_back(vocab.encode(d.tokens));
    train_words += encoded.back().size();
  }
  const auto sampler = UnigramSampler::from_vocab(vocab);
  const auto keep = detail::keep_probabilities(vocab, wc.subsample);
  const double total_updates = static_cast<double>(wc.epochs * train_words + 1);

  const unsigned n_workers = std::max(1u, std::min<unsigned>(wc.workers, static_cast<unsigned>(std::max<std::size_t>(1, docs.size()))));
  std::vector<detail::ContextWorker> workers;
  for (unsigned w = 0; w < n_workers; ++w) workers.emplace_back(derive_seed(wc.seed, w));
  std::atomic<std::uint64_t> processed{0};

  for (std::size_t epoch = 1; epoch <= wc.epochs; ++epoch) {
    const auto run_shard = [&](unsigned w) {
      auto& worker = workers[w];
      worker.loss = 0.0;
      worker.updates = 0;
      for (std::size_t d = w; d < encoded.size(); d += n_workers) {
        const double progress = static_cast<double>(processed.load(std::memory_order_relaxed)) / total_updates;
        const auto lr = static_cast<float>(decayed_learning_rate(wc.learning_rate, wc.min_learning_rate_ratio, progress));
        worker.subsampled(encoded[d], keep);
        detail::train_sentence(worker, model.words, wc, sampler, lr, model.doc_row(d).data());
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
    detail::check_finite(model.words, epoch, "train_doc2vec");
    if (std::any_of(model.doc_vectors.begin(), model.doc_vectors.end(), [](float x) { return !std::isfinite(x); })) {
      throw Error("train_doc2vec: non-finite document vector after epoch " + std::to_string(epoch));
    }
    model.epoch_loss.push_back(updates ? loss / static_cast<double>(updates) : 0.0);
    if (on_epoch) on_epoch({epoch, model.epoch_loss.back()});
  }
  return model;
}

// Fits a vector for an unseen token sequence with W and W' frozen. Pure with
// respect to the model. Flagged (zero vector) when no token is known.
inline Flagged<std::vector<float>> infer_vector(std::span<const std::string> tokens, const Doc2vecModel& model,
                                                std::size_t steps, std::uint64_t seed) {
  if (steps < 1) throw Error("infer_vector: steps must be >= 1");
  const std::size_t dim = model.dim();
  const auto& wc = model.config.word2vec;
  std::vector<TokenId> ids;
  for (const auto& t : tokens) {
    if (auto id = model.words.find(t)) ids.push_back(*id);
  }
  Flagged<std::vector<float>> out{std::vector<float>(dim, 0.0f), ids.empty()};
  if (ids.empty()) return out;

  Rng rng(seed);
  for (auto& x : out.value) x = static_cast<float>((uniform01(rng) - 0.5) / static_cast<double>(dim));

  const UnigramSampler sampler(model.word_counts);
  KernelScratch<float> scratch;
  std::vector<const float*> inputs;
  std::vector<const float*> outputs;
  for (std::size_t step = 0; step < steps; ++step) {
    const double progress = static_cast<double>(step) / static_cast<double>(steps);
    const double lr = decayed_learning_rate(wc.learning_rate, model.config.infer_min_learning_rate_ratio, progress);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const std::size_t win = wc.window - uniform_index(rng, wc.window);
      const std::size_t lo = i >= win ? i - win : 0;
      const std::size_t hi = std::min(ids.size(), i + win + 1);
      inputs.clear();
      for (std::size_t j = lo; j < hi; ++j) {
        if (j != i) inputs.push_back(model.words.input_row(ids[j]).data());
      }
      inputs.push_back(out.value.data());
      outputs.clear();
      outputs.push_back(model.words.output_row(ids[i]).data());
      for (std::size_t n = 0; n < wc.negatives; ++n) {
        const TokenId neg = sampler.sample(rng);
        if (neg != ids[i]) outputs.push_back(model.words.output_row(neg).data());
      }
      negative_sampling_forward<float>(inputs, outputs, dim, scratch);
      // only the document vector moves
      const auto scale = static_cast<float>(lr / static_cast<double>(inputs.size()));
      for (std::size_t k = 0; k < dim; ++k) out.value[k] -= scale * scratch.grad_hidden[k];
    }
  }
  return out;
}

inline Flagged<std::vector<float>> infer_vector(std::span<const std::string> tokens, const Doc2vecModel& model,
                                                std::uint64_t seed) {
  return infer_vector(tokens, model, model.config.infer_steps, seed);
}

// ---------------------------------------------------------------------------
// Model file: magic "LYRD" | u32 version | u32 dim | u64 n_words | u64 n_docs
// | f64 lr | u32 window | u32 negatives | u32 infer_steps, then per word
// (u16 len, bytes, u64 count, dim f32 input, dim f32 output), then per doc (u16 len,
// bytes, dim f32).

inline constexpr std::uint32_t kDoc2vecFileVersion = 1;

inline void write_doc2vec(std::ostream& out, const Doc2vecModel& m) {
  BinaryWriter w(out);
  w.magic("LYRD");
  w.put<std::uint32_t>(kDoc2vecFileVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.dim()));
  w.put<std::uint64_t>(m.words.size());
  w.put<std::uint64_t>(m.doc_ids.size());
  w.put<double>(m.config.word2vec.learning_rate);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.config.word2vec.window));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.config.word2vec.negatives));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.config.infer_steps));
  for (TokenId i = 0; i < m.words.size(); ++i) {
    w.short_string(m.words.words()[i]);
    w.put<std::uint64_t>(m.word_counts.at(i));
    for (float v : m.words.input_row(i)) w.put(v);
    for (float v : m.words.output_row(i)) w.put(v);
  }
  for (std::size_t d = 0; d < m.doc_ids.size(); ++d) {
    w.short_string(m.doc_ids[d]);
    for (float v : m.doc_row(d)) w.put(v);
  }
  if (!w.good()) throw Error("failed writing doc2vec model");
}

inline Doc2vecModel read_doc2vec(std::istream& in) {
  BinaryReader r(in);
  r.expect_magic("LYRD");
  const auto at = r.offset();
  if (const auto v = r.get<std::uint32_t>(); v != kDoc2vecFileVersion) {
    throw FormatError("unsupported doc2vec model version " + std::to_string(v), at);
  }
  const std::size_t dim = r.get<std::uint32_t>();
  const auto n_words = r.get<std::uint64_t>();
  const auto n_docs = r.get<std::uint64_t>();
  Doc2vecConfig cfg;
  cfg.word2vec.dim = dim;
  cfg.word2vec.learning_rate = r.get<double>();
  cfg.word2vec.window = r.get<std::uint32_t>();
  cfg.word2vec.negatives = r.get<std::uint32_t>();
  cfg.infer_steps = r.get<std::uint32_t>();
  std::vector<std::string> words;
  std::vector<std::uint64_t> counts;
  std::vector<float> input, output;
  for (std::uint64_t i = 0; i < n_words; ++i) {
    words.push_back(r.short_string());
    counts.push_back(r.get<std::uint64_t>());
    for (std::size_t k = 0; k < dim; ++k) input.push_back(r.get<float>());
    for (std::size_t k = 0; k < dim; ++k) output.push_back(r.get<float>());
  }
  Doc2vecModel m{EmbeddingMatrix(std::move(words), dim, true), std::move(counts), {}, {}, cfg, {}};
  m.words.input_data() = std::move(input);
  m.words.output_data() = std::move(output);
  for (std::uint64_t d = 0; d < n_docs; ++d) {
    m.doc_ids.push_back(r.short_string());
    for (std::size_t k = 0; k < dim; ++k) m.doc_vectors.push_back(r.get<float>());
  }
  return m;
}

inline void save_doc2vec(const std::string& path, const Doc2vecModel& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path);
  write_doc2vec(out, m);
}

inline Doc2vecModel load_doc2vec(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open doc2vec model: " + path);
  return read_doc2vec(in);
}

}  // namespace lyricemb
