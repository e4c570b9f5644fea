#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "lyricemb/binary_io.hpp"
#include "lyricemb/common.hpp"
#include "lyricemb/corpus_io.hpp"
#include "lyricemb/embedding_matrix.hpp"
#include "lyricemb/nn.hpp"
#include "lyricemb/rng.hpp"

namespace lyricemb {

// In-vocabulary tokens of a document grouped by id (ascending) with their
// multiplicities. Everything computed from a bag is independent of token order.
struct TokenBag {
  std::vector<TokenId> ids;
  std::vector<double> counts;
  std::size_t total = 0;

  bool empty() const { return ids.empty(); }
};

inline TokenBag make_bag(std::span<const std::string> tokens, const EmbeddingMatrix& emb) {
  std::map<TokenId, std::size_t> grouped;
  for (const auto& t : tokens) {
    if (auto id = emb.find(t)) ++grouped[*id];
  }
  TokenBag bag;
  for (const auto& [id, n] : grouped) {
    bag.ids.push_back(id);
    bag.counts.push_back(static_cast<double>(n));
    bag.total += n;
  }
  return bag;
}

// Mean of the input vectors of in-vocabulary tokens; OOV tokens are skipped.
inline Flagged<std::vector<float>> average_embed(std::span<const std::string> tokens, const EmbeddingMatrix& emb) {
  const auto bag = make_bag(tokens, emb);
  Flagged<std::vector<float>> out{std::vector<float>(emb.dim(), 0.0f), bag.empty()};
  if (bag.empty()) return out;
  std::vector<double> sum(emb.dim(), 0.0);
  for (std::size_t j = 0; j < bag.ids.size(); ++j) {
    const auto row = emb.input_row(bag.ids[j]);
    for (std::size_t k = 0; k < emb.dim(); ++k) sum[k] += bag.counts[j] * static_cast<double>(row[k]);
  }
  for (std::size_t k = 0; k < emb.dim(); ++k) {
    out.value[k] = static_cast<float>(sum[k] / static_cast<double>(bag.total));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Artist-identification proxy dataset

struct ProxyExample {
  TokenizedDocument doc;
  std::uint32_t label = 0;
};

struct ProxyDataset {
  std::vector<ProxyExample> examples;
  std::vector<std::string> artists;        // class id -> artist id
  std::vector<std::size_t> class_counts;   // all equal

  std::size_t num_classes() const { return artists.size(); }
};

inline constexpr std::size_t kProxyArtists = 1000;

// Top `n_artists` artists by song count (ties by artist id), each sampled
// down to the smallest selected count so every class has the same size.
// `per_artist_cap` lowers that size further when set.
inline ProxyDataset build_proxy_dataset(std::span<const TokenizedDocument> docs, std::size_t n_artists,
                                        std::uint64_t seed, std::optional<std::size_t> per_artist_cap = std::nullopt) {
  if (n_artists < 1) throw Error("build_proxy_dataset: n_artists must be >= 1");
  std::unordered_map<std::string, std::vector<std::size_t>> by_artist;
  for (std::size_t i = 0; i < docs.size(); ++i) by_artist[docs[i].artist_id].push_back(i);
  if (by_artist.size() < n_artists) {
    throw Error("build_proxy_dataset: requested " + std::to_string(n_artists) + " artists but corpus has only " +
                std::to_string(by_artist.size()));
  }
  std::vector<const std::pair<const std::string, std::vector<std::size_t>>*> ranked;
  for (const auto& kv : by_artist) ranked.push_back(&kv);
  std::sort(ranked.begin(), ranked.end(), [](const auto* a, const auto* b) {
    if (a->second.size() != b->second.size()) return a->second.size() > b->second.size();
    return a->first < b->first;
  });
  ranked.resize(n_artists);

  std::size_t per_class = ranked.back()->second.size();
  if (per_artist_cap) {
    if (*per_artist_cap > per_class) {
      warn("build_proxy_dataset: cap " + std::to_string(*per_artist_cap) + " exceeds smallest artist count " +
           std::to_string(per_class) + "; using " + std::to_string(per_class));
    }
    per_class = std::min(per_class, *per_artist_cap);
  }

  ProxyDataset out;
  Rng rng(seed);
  for (std::size_t c = 0; c < ranked.size(); ++c) {
    auto pool = ranked[c]->second;
    for (std::size_t i = 0; i < per_class; ++i) {  // partial Fisher-Yates
      const std::size_t j = i + uniform_index(rng, pool.size() - i);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(per_class);
    std::sort(pool.begin(), pool.end());
    for (auto idx : pool) out.examples.push_back({docs[idx], static_cast<std::uint32_t>(c)});
    out.artists.push_back(ranked[c]->first);
    out.class_counts.push_back(per_class);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Attention probe
//
// For token j with embedding e_j and probe i:
//   score_ij = p_i . tanh(M^T e_j),  a_i = softmax_j(score_i),
//   context_i = sum_j a_ij e_j,  output = [context_1; ...; context_k].
// A dense stack on top of the output predicts the artist class.

struct AttentionProbe {
  nn::Matrix mapping;                 // d_emb x d_map
  nn::Matrix probes;                  // k x d_map
  std::vector<nn::Dense> classifier;  // ReLU hidden layers, then the linear output layer

  std::size_t embedding_dim() const { return static_cast<std::size_t>(mapping.rows()); }
  std::size_t map_dim() const { return static_cast<std::size_t>(mapping.cols()); }
  std::size_t num_probes() const { return static_cast<std::size_t>(probes.rows()); }
  std::size_t output_dim() const { return num_probes() * embedding_dim(); }
  std::size_t num_classes() const { return classifier.empty() ? 0 : static_cast<std::size_t>(classifier.back().out()); }

  nn::ParameterList parameters() {
    nn::ParameterList p{&mapping, &probes};
    for (auto& layer : classifier) {
      p.push_back(&layer.weight);
      p.push_back(&layer.bias);
    }
    return p;
  }
};

struct AttentionConfig {
  std::size_t probes = 8;          // {4..32}
  std::size_t map_dim = 16;        // {4..32}
  std::size_t dense_layers = 1;    // hidden layers before the softmax layer
  std::size_t dense_size = 64;
  double learning_rate = 1e-3;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double holdout_fraction = 0.1;
  std::uint64_t seed = 1;
  unsigned threads = 1;            // data-parallel gradient accumulation
  bool fine_tune_embeddings = false;

  void validate() const {
    if (probes < 1 || map_dim < 1) throw Error("attention: probes and map_dim must be >= 1");
    if (dense_size < 1) throw Error("attention: dense_size must be >= 1");
    if (epochs < 1 || batch_size < 1) throw Error("attention: epochs and batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw Error("attention: learning rate must be > 0");
    if (holdout_fraction < 0.0 || holdout_fraction >= 1.0) throw Error("attention: holdout_fraction must lie in [0, 1)");
  }
};

inline AttentionProbe init_attention_probe(std::size_t embedding_dim, std::size_t n_classes,
                                           const AttentionConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  AttentionProbe p;
  nn::Dense mapping(static_cast<Eigen::Index>(cfg.map_dim), static_cast<Eigen::Index>(embedding_dim));
  mapping.init(rng);
  p.mapping = mapping.weight;
  nn::Dense probes(static_cast<Eigen::Index>(cfg.map_dim), static_cast<Eigen::Index>(cfg.probes));
  probes.init(rng);
  p.probes = probes.weight;
  auto in = static_cast<Eigen::Index>(cfg.probes * embedding_dim);
  for (std::size_t l = 0; l < cfg.dense_layers; ++l) {
    p.classifier.emplace_back(in, static_cast<Eigen::Index>(cfg.dense_size));
    p.classifier.back().init(rng);
    in = static_cast<Eigen::Index>(cfg.dense_size);
  }
  p.classifier.emplace_back(in, static_cast<Eigen::Index>(n_classes));
  p.classifier.back().init(rng);
  return p;
}

namespace detail {

struct AttentionCache {
  nn::Matrix embeddings;  // d_emb x n_unique
  nn::Matrix mapped;      // tanh(M^T E), d_map x n
  nn::Matrix weights;     // k x n, rows sum to 1
  nn::Vector output;      // k * d_emb
};

inline AttentionCache attention_forward(const AttentionProbe& probe, const TokenBag& bag,
                                        const EmbeddingMatrix& emb) {
  AttentionCache c;
  const auto d = static_cast<Eigen::Index>(probe.embedding_dim());
  const auto n = static_cast<Eigen::Index>(bag.ids.size());
  const auto k = static_cast<Eigen::Index>(probe.num_probes());
  c.embeddings.resize(d, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto row = emb.input_row(bag.ids[static_cast<std::size_t>(j)]);
    for (Eigen::Index r = 0; r < d; ++r) c.embeddings(r, j) = row[static_cast<std::size_t>(r)];
  }
  c.output = nn::Vector::Zero(k * d);
  if (n == 0) return c;
  c.mapped = (probe.mapping.transpose() * c.embeddings).array().tanh().matrix();
  const nn::Matrix scores = probe.probes * c.mapped;  // k x n
  c.weights.resize(k, n);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double mx = scores.row(i).maxCoeff();
    double z = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      c.weights(i, j) = bag.counts[static_cast<std::size_t>(j)] * std::exp(scores(i, j) - mx);
      z += c.weights(i, j);
    }
    c.weights.row(i) /= z;
  }
  const nn::Matrix contexts = c.embeddings * c.weights.transpose();  // d x k
  c.output = Eigen::Map<const nn::Vector>(contexts.data(), k * d);
  return c;
}

// Accumulates d(loss)/d(mapping, probes) given d(loss)/d(output); returns
// d(loss)/d(embeddings) (d_emb x n) for optional fine-tuning.
inline nn::Matrix attention_backward(const AttentionProbe& probe, const AttentionCache& c, const nn::Vector& grad_out,
                                     nn::Matrix& grad_mapping, nn::Matrix& grad_probes) {
  const auto d = static_cast<Eigen::Index>(probe.embedding_dim());
  const auto k = static_cast<Eigen::Index>(probe.num_probes());
  if (c.embeddings.cols() == 0) return nn::Matrix(d, 0);
  const Eigen::Map<const nn::Matrix> g(grad_out.data(), d, k);          // d x k
  const nn::Matrix grad_weights = g.transpose() * c.embeddings;          // k x n
  const nn::Vector row_dot = (c.weights.cwiseProduct(grad_weights)).rowwise().sum();
  const nn::Matrix grad_scores =
      c.weights.cwiseProduct(grad_weights - row_dot.replicate(1, grad_weights.cols()));  // k x n
  grad_probes += grad_scores * c.mapped.transpose();
  const nn::Matrix grad_mapped = probe.probes.transpose() * grad_scores;  // d_map x n
  const nn::Matrix grad_pre = grad_mapped.cwiseProduct((1.0 - c.mapped.array().square()).matrix());
  grad_mapping += c.embeddings * grad_pre.transpose();
  return g * c.weights + probe.mapping * grad_pre;
}

}  // namespace detail

// k * d_emb document embedding. Flagged (zeros) when no token is known.
inline Flagged<std::vector<float>> attention_embed(std::span<const std::string> tokens, const AttentionProbe& probe,
                                                   const EmbeddingMatrix& emb) {
  if (emb.dim() != probe.embedding_dim()) throw Error("attention_embed: embedding dimension mismatch");
  const auto bag = make_bag(tokens, emb);
  Flagged<std::vector<float>> out{std::vector<float>(probe.output_dim(), 0.0f), bag.empty()};
  if (bag.empty()) return out;
  const auto cache = detail::attention_forward(probe, bag, emb);
  for (std::size_t i = 0; i < out.value.size(); ++i) out.value[i] = static_cast<float>(cache.output(static_cast<Eigen::Index>(i)));
  return out;
}

// Per-probe attention weights over the bag's unique tokens (k x n).
inline nn::Matrix attention_weights(const TokenBag& bag, const AttentionProbe& probe, const EmbeddingMatrix& emb) {
  return detail::attention_forward(probe, bag, emb).weights;
}

struct AttentionBatchResult {
  double loss = 0.0;               // mean cross-entropy over the batch
  nn::GradientList gradients;      // aligned with AttentionProbe::parameters()
  std::size_t correct = 0;
  std::vector<std::pair<TokenBag, nn::Matrix>> embedding_gradients;  // only when requested
};

namespace detail {

// Sums (not averages) loss and gradients over examples [lo, hi).
inline AttentionBatchResult attention_chunk(AttentionProbe& probe, std::span<const TokenBag* const> bags,
                                            std::span<const std::uint32_t> labels, const EmbeddingMatrix& emb,
                                            bool want_embedding_grads) {
  AttentionBatchResult r;
  r.gradients = nn::zeros_like(probe.parameters());
  const auto batch = static_cast<Eigen::Index>(bags.size());
  if (batch == 0) return r;
  std::vector<AttentionCache> caches;
  caches.reserve(bags.size());
  nn::Matrix x(static_cast<Eigen::Index>(probe.output_dim()), batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    caches.push_back(attention_forward(probe, *bags[static_cast<std::size_t>(b)], emb));
    x.col(b) = caches.back().output;
  }
  std::vector<nn::Matrix> pre;
  std::vector<nn::Matrix> acts{x};
  for (std::size_t l = 0; l < probe.classifier.size(); ++l) {
    pre.push_back(probe.classifier[l].forward(acts.back()));
    acts.push_back(l + 1 < probe.classifier.size() ? nn::relu(pre.back()) : pre.back());
  }
  const nn::Matrix probs = nn::softmax_columns(acts.back());
  nn::Matrix delta = probs;
  for (Eigen::Index b = 0; b < batch; ++b) {
    const auto y = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(b)]);
    r.loss += -std::log(std::max(probs(y, b), 1e-300));
    Eigen::Index arg = 0;
    probs.col(b).maxCoeff(&arg);
    if (arg == y) ++r.correct;
    delta(y, b) -= 1.0;
  }
  // delta holds d(sum loss)/d(logits)
  for (std::size_t l = probe.classifier.size(); l-- > 0;) {
    auto& gw = r.gradients[2 + 2 * l];
    auto& gb = r.gradients[3 + 2 * l];
    gw += delta * acts[l].transpose();
    gb += delta.rowwise().sum();
    nn::Matrix back = probe.classifier[l].weight.transpose() * delta;
    delta = l > 0 ? nn::relu_grad(pre[l - 1], back) : back;
  }
  for (Eigen::Index b = 0; b < batch; ++b) {
    nn::Matrix ge = attention_backward(probe, caches[static_cast<std::size_t>(b)], delta.col(b), r.gradients[0],
                                       r.gradients[1]);
    if (want_embedding_grads) r.embedding_gradients.emplace_back(*bags[static_cast<std::size_t>(b)], std::move(ge));
  }
  return r;
}

}  // namespace detail

// Mean cross-entropy and its gradient over a batch. With threads > 1 the batch
// is split into contiguous chunks whose sums are combined in chunk order.
inline AttentionBatchResult attention_batch_gradient(AttentionProbe& probe, std::span<const TokenBag* const> bags,
                                                     std::span<const std::uint32_t> labels,
                                                     const EmbeddingMatrix& emb, unsigned threads = 1,
                                                     bool want_embedding_grads = false) {
  if (bags.size() != labels.size()) throw Error("attention_batch_gradient: size mismatch");
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, bags.size()))));
  AttentionBatchResult total;
  if (threads == 1) {
    total = detail::attention_chunk(probe, bags, labels, emb, want_embedding_grads);
  } else {
    std::vector<AttentionBatchResult> parts(threads);
    std::vector<std::thread> workers;
    const std::size_t chunk = (bags.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t lo = std::min(bags.size(), t * chunk);
      const std::size_t hi = std::min(bags.size(), lo + chunk);
      workers.emplace_back([&, t, lo, hi] {
        parts[t] = detail::attention_chunk(probe, bags.subspan(lo, hi - lo), labels.subspan(lo, hi - lo), emb,
                                           want_embedding_grads);
      });
    }
    for (auto& w : workers) w.join();
    total = std::move(parts[0]);
    for (unsigned t = 1; t < threads; ++t) {
      total.loss += parts[t].loss;
      total.correct += parts[t].correct;
      nn::accumulate(total.gradients, parts[t].gradients);
      for (auto& eg : parts[t].embedding_gradients) total.embedding_gradients.push_back(std::move(eg));
    }
  }
  const double inv = bags.empty() ? 0.0 : 1.0 / static_cast<double>(bags.size());
  total.loss *= inv;
  for (auto& g : total.gradients) g *= inv;
  for (auto& eg : total.embedding_gradients) eg.second *= inv;
  return total;
}

// Class probabilities for one document.
inline nn::Vector attention_class_probabilities(const AttentionProbe& probe, const TokenBag& bag,
                                                const EmbeddingMatrix& emb) {
  nn::Matrix x = detail::attention_forward(probe, bag, emb).output;
  for (std::size_t l = 0; l < probe.classifier.size(); ++l) {
    x = probe.classifier[l].forward(x);
    if (l + 1 < probe.classifier.size()) x = nn::relu(x);
  }
  return nn::softmax_columns(x).col(0);
}

struct AttentionTrainResult {
  AttentionProbe probe;
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;
  double heldout_accuracy = 0.0;
  std::size_t heldout_size = 0;
  std::optional<EmbeddingMatrix> tuned_embeddings;  // set only when fine-tuning
};

// Held-out split stratified by class: round(fraction * class size) per class.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_holdout(const ProxyDataset& data,
                                                                                         double fraction,
                                                                                         std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_class(data.num_classes());
  for (std::size_t i = 0; i < data.examples.size(); ++i) by_class[data.examples[i].label].push_back(i);
  Rng rng(seed);
  std::vector<std::size_t> train, held;
  for (auto& members : by_class) {
    for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[uniform_index(rng, i)]);
    const auto n_held = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size())));
    for (std::size_t i = 0; i < members.size(); ++i) (i < n_held ? held : train).push_back(members[i]);
  }
  std::sort(train.begin(), train.end());
  std::sort(held.begin(), held.end());
  return {train, held};
}

// Learns probe and classifier parameters on the proxy task by Adam. The word
// embeddings are read-only unless cfg.fine_tune_embeddings is set, in which
// case a tuned copy is returned and `emb` is still left untouched.
inline AttentionTrainResult train_attention_aggregator(const ProxyDataset& data, const EmbeddingMatrix& emb,
                                                       const AttentionConfig& cfg) {
  cfg.validate();
  if (data.examples.empty() || data.num_classes() < 2) throw Error("train_attention_aggregator: need >= 2 classes");
  AttentionTrainResult result;
  result.probe = init_attention_probe(emb.dim(), data.num_classes(), cfg, derive_seed(cfg.seed, "attention-init"));
  auto& probe = result.probe;
  std::optional<EmbeddingMatrix> tuned;
  if (cfg.fine_tune_embeddings) tuned = emb;
  const EmbeddingMatrix& active = tuned ? *tuned : emb;

  const auto [train_idx, held_idx] = stratified_holdout(data, cfg.holdout_fraction, derive_seed(cfg.seed, "holdout"));
  std::vector<TokenBag> bags;
  std::vector<std::uint32_t> labels;
  bags.reserve(data.examples.size());
  for (const auto& ex : data.examples) {
    bags.push_back(make_bag(ex.doc.tokens, emb));
    labels.push_back(ex.label);
  }

  auto params = probe.parameters();
  nn::Adam adam(params, {cfg.learning_rate});
  Rng rng(derive_seed(cfg.seed, "attention-batches"));
  auto order = train_idx;
  std::vector<const TokenBag*> batch_bags;
  std::vector<std::uint32_t> batch_labels;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch_bags.clear();
      batch_labels.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch_bags.push_back(&bags[order[i]]);
        batch_labels.push_back(labels[order[i]]);
      }
      auto r = attention_batch_gradient(probe, batch_bags, batch_labels, active, cfg.threads, cfg.fine_tune_embeddings);
      if (!std::isfinite(r.loss) || !nn::all_finite(r.gradients)) {
        throw Error("train_attention_aggregator: loss diverged (value " + std::to_string(r.loss) + ") in epoch " +
                    std::to_string(epoch) + " at example " + std::to_string(start));
      }
      adam.step(params, r.gradients);
      if (tuned) {
        for (const auto& [bag, grad] : r.embedding_gradients) {
          for (std::size_t j = 0; j < bag.ids.size(); ++j) {
            auto row = tuned->input_row(bag.ids[j]);
            for (std::size_t k = 0; k < row.size(); ++k) {
              row[k] -= static_cast<float>(cfg.learning_rate * grad(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)));
            }
          }
        }
      }
      loss_sum += r.loss * static_cast<double>(end - start);
      correct += r.correct;
    }
    result.epoch_loss.push_back(order.empty() ? 0.0 : loss_sum / static_cast<double>(order.size()));
    result.train_accuracy = order.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(order.size());
  }

  std::size_t held_correct = 0;
  for (auto i : held_idx) {
    Eigen::Index arg = 0;
    attention_class_probabilities(probe, bags[i], active).maxCoeff(&arg);
    if (static_cast<std::uint32_t>(arg) == labels[i]) ++held_correct;
  }
  result.heldout_size = held_idx.size();
  result.heldout_accuracy = held_idx.empty() ? 0.0 : static_cast<double>(held_correct) / static_cast<double>(held_idx.size());
  result.tuned_embeddings = std::move(tuned);
  return result;
}

// ---------------------------------------------------------------------------
// Probe file: magic "LYRA" | u32 version | u32 n_layers, then mapping,
// probes and each classifier layer (weight, bias) as row-major f32 blocks.

inline constexpr std::uint32_t kProbeFileVersion = 1;

inline void write_attention_probe(std::ostream& out, const AttentionProbe& p) {
  BinaryWriter w(out);
  w.magic("LYRA");
  w.put<std::uint32_t>(kProbeFileVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(p.classifier.size()));
  nn::write_matrix(w, p.mapping);
  nn::write_matrix(w, p.probes);
  for (const auto& layer : p.classifier) {
    nn::write_matrix(w, layer.weight);
    nn::write_matrix(w, layer.bias);
  }
  if (!w.good()) throw Error("failed writing attention probe");
}

inline AttentionProbe read_attention_probe(std::istream& in) {
  BinaryReader r(in);
  r.expect_magic("LYRA");
  const auto at = r.offset();
  if (const auto v = r.get<std::uint32_t>(); v != kProbeFileVersion) {
    throw FormatError("unsupported attention probe version " + std::to_string(v), at);
  }
  const auto n_layers = r.get<std::uint32_t>();
  AttentionProbe p;
  p.mapping = nn::read_matrix(r);
  p.probes = nn::read_matrix(r);
  if (p.probes.cols() != p.mapping.cols()) throw FormatError("probe / mapping shape mismatch", r.offset());
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    nn::Dense layer;
    layer.weight = nn::read_matrix(r);
    layer.bias = nn::read_matrix(r);
    p.classifier.push_back(std::move(layer));
  }
  return p;
}

inline void save_attention_probe(const std::string& path, const AttentionProbe& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path);
  write_attention_probe(out, p);
}

inline AttentionProbe load_attention_probe(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open attention probe: " + path);
  return read_attention_probe(in);
}

}  // namespace lyricemb
