#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "lyricemb/aggregate.hpp"
#include "lyricemb/common.hpp"
#include "lyricemb/corpus_io.hpp"
#include "lyricemb/doc2vec.hpp"
#include "lyricemb/embedding_file.hpp"
#include "lyricemb/sparse_baselines.hpp"
#include "lyricemb/vocab.hpp"
#include "lyricemb/word2vec.hpp"
#include "lyricemb/word2vec_format.hpp"

namespace lyricemb {

inline constexpr std::array<const char*, 7> kEmbedderKinds{"random",        "bow",     "tfidf",    "word2vec",
                                                           "word2vec-warm", "doc2vec", "attention"};

struct EmbedderConfig {
  std::string kind = "word2vec";
  std::size_t dim = 64;
  Word2vecConfig word2vec;           // word2vec, word2vec-warm, doc2vec and the attention word vectors
  std::string pretrained;            // word2vec binary file for word2vec-warm
  std::size_t infer_steps = 50;      // doc2vec
  AttentionConfig attention;
  std::size_t proxy_artists = kProxyArtists;
  std::optional<std::size_t> proxy_cap;
  double max_df_ratio = kDefaultMaxDfRatio;  // bow / tfidf pruning

  void validate() const {
    if (std::find_if(kEmbedderKinds.begin(), kEmbedderKinds.end(), [&](const char* k) { return kind == k; }) ==
        kEmbedderKinds.end()) {
      throw Error("unknown embedder '" + kind + "'");
    }
    if (dim < 1) throw Error("embedder dim must be >= 1");
    if (kind == "word2vec-warm" && pretrained.empty()) throw Error("word2vec-warm needs a pretrained vector file");
  }

  // Word2vec settings with the shared dimension, seed and thread count applied.
  Word2vecConfig word2vec_config(std::uint64_t seed, unsigned threads) const {
    Word2vecConfig c = word2vec;
    c.dim = dim;
    c.seed = seed;
    c.workers = threads;
    return c;
  }
};

// A fitted embedder; which members are set depends on the kind.
struct TrainedEmbedder {
  std::string kind;
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  std::optional<Vocabulary> vocab;        // bow, tfidf
  std::optional<EmbeddingMatrix> words;   // word2vec, word2vec-warm, attention
  std::optional<Doc2vecModel> doc2vec;
  std::optional<AttentionProbe> probe;
  std::vector<double> epoch_loss;
  std::optional<double> proxy_heldout_accuracy;

  std::size_t output_dim() const { return probe ? probe->output_dim() : dim; }
};

// Fits the embedder on `docs`. With threads > 1 word2vec-style training runs
// lock-free and is not bit-reproducible.
inline TrainedEmbedder train_embedder(std::span<const TokenizedDocument> docs, const EmbedderConfig& cfg,
                                      std::uint64_t seed, unsigned threads = 1) {
  cfg.validate();
  TrainedEmbedder te;
  te.kind = cfg.kind;
  te.dim = cfg.dim;
  te.seed = seed;
  if (cfg.kind == "random") return te;
  if (cfg.kind == "bow" || cfg.kind == "tfidf") {
    te.vocab = top_k(prune_high_df(build_vocab(docs, 1, threads), cfg.max_df_ratio), cfg.dim);
    te.dim = te.vocab->size();
    return te;
  }
  const auto wc = cfg.word2vec_config(seed, threads);
  if (cfg.kind == "doc2vec") {
    te.doc2vec = train_doc2vec(docs, build_vocab(docs, wc.min_count, threads), {wc, cfg.infer_steps, 1e-2});
    te.epoch_loss = te.doc2vec->epoch_loss;
    return te;
  }
  const auto vocab = build_vocab(docs, wc.min_count, threads);
  if (vocab.empty()) throw Error("embedder: empty vocabulary (min_count " + std::to_string(wc.min_count) + ")");
  EmbeddingMatrix init = cfg.kind == "word2vec-warm"
                             ? warm_start_init(load_pretrained_binary(cfg.pretrained), vocab, seed)
                             : init_embedding(vocab, wc.dim, seed);
  if (init.dim() != wc.dim) {
    throw Error("pretrained vectors have dimension " + std::to_string(init.dim()) + ", expected " + std::to_string(wc.dim));
  }
  auto result = train_word2vec(docs, vocab, wc, std::move(init));
  te.epoch_loss = result.epoch_loss;
  result.matrix.drop_output();
  te.words = std::move(result.matrix);
  if (cfg.kind == "attention") {
    std::unordered_set<std::string_view> artists;
    for (const auto& d : docs) artists.insert(d.artist_id);
    const auto proxy = build_proxy_dataset(docs, std::min(cfg.proxy_artists, artists.size()),
                                           derive_seed(seed, "proxy"), cfg.proxy_cap);
    AttentionConfig ac = cfg.attention;
    ac.seed = seed;
    ac.threads = threads;
    auto trained = train_attention_aggregator(proxy, *te.words, ac);
    te.probe = std::move(trained.probe);
    te.proxy_heldout_accuracy = trained.heldout_accuracy;
    if (trained.tuned_embeddings) te.words = std::move(*trained.tuned_embeddings);
  }
  return te;
}

inline Flagged<std::vector<float>> embed_document(const TrainedEmbedder& te, const TokenizedDocument& doc) {
  if (te.kind == "random") return random_embed_doc(doc.tokens, te.dim, te.seed);
  if (te.kind == "bow" || te.kind == "tfidf") {
    const auto sv = te.kind == "bow" ? bow_vector(doc.tokens, *te.vocab) : tfidf_vector(doc.tokens, *te.vocab);
    return {sv.value.densify(), sv.flagged};
  }
  if (te.kind == "doc2vec") return infer_vector(doc.tokens, *te.doc2vec, derive_seed(te.seed, doc.doc_id));
  if (te.kind == "attention") return attention_embed(doc.tokens, *te.probe, *te.words);
  return average_embed(doc.tokens, *te.words);
}

// Embeds every document; work is split over threads but each document is a
// pure function of the fitted embedder, so the result does not depend on the
// thread count.
inline DocumentEmbeddings embed_documents(const TrainedEmbedder& te, std::span<const TokenizedDocument> docs,
                                          unsigned threads = 1) {
  DocumentEmbeddings out;
  out.dim = static_cast<std::uint32_t>(te.output_dim());
  out.values.assign(docs.size() * out.dim, 0.0f);
  std::vector<std::uint8_t> flagged(docs.size(), 0);
  const auto work = [&](std::size_t first, std::size_t step) {
    for (std::size_t i = first; i < docs.size(); i += step) {
      auto v = embed_document(te, docs[i]);
      std::copy(v.value.begin(), v.value.end(), out.values.begin() + static_cast<std::ptrdiff_t>(i * out.dim));
      flagged[i] = v.flagged;
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, docs.size()))));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    for (auto& t : pool) t.join();
  }
  for (const auto& d : docs) out.doc_ids.push_back(d.doc_id);
  const auto n_flagged = static_cast<std::size_t>(std::count(flagged.begin(), flagged.end(), 1));
  if (n_flagged > 0) {
    warn("embed: " + std::to_string(n_flagged) + " document(s) have no known tokens and get a zero vector");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Artifacts: one directory per fitted embedder holding embedder.json plus the
// model files of its kind.

inline void save_embedder(const std::string& dir, const TrainedEmbedder& te) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json meta{{"kind", te.kind}, {"dim", te.dim}, {"seed", te.seed}, {"epoch_loss", te.epoch_loss}};
  if (te.proxy_heldout_accuracy) meta["proxy_heldout_accuracy"] = *te.proxy_heldout_accuracy;
  if (te.vocab) {
    std::ofstream out(fs::path(dir) / "vocab.tsv");
    save_vocab(out, *te.vocab);
  }
  if (te.words) save_word2vec_binary((fs::path(dir) / "words.bin").string(), *te.words);
  if (te.doc2vec) save_doc2vec((fs::path(dir) / "doc2vec.lyrd").string(), *te.doc2vec);
  if (te.probe) save_attention_probe((fs::path(dir) / "probe.lyra").string(), *te.probe);
  std::ofstream out(fs::path(dir) / "embedder.json");
  out << meta.dump(1) << '\n';
  if (!out) throw Error("failed writing embedder metadata in " + dir);
}

inline TrainedEmbedder load_embedder(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "embedder.json");
  if (!in) throw Error("no embedder.json in " + dir);
  const auto meta = nlohmann::json::parse(in);
  TrainedEmbedder te;
  te.kind = meta.at("kind").get<std::string>();
  te.dim = meta.at("dim").get<std::size_t>();
  te.seed = meta.at("seed").get<std::uint64_t>();
  te.epoch_loss = meta.value("epoch_loss", std::vector<double>{});
  if (meta.contains("proxy_heldout_accuracy")) te.proxy_heldout_accuracy = meta["proxy_heldout_accuracy"].get<double>();
  if (te.kind == "bow" || te.kind == "tfidf") {
    std::ifstream v(fs::path(dir) / "vocab.tsv");
    if (!v) throw Error("missing vocab.tsv in " + dir);
    te.vocab = load_vocab(v);
  }
  if (te.kind == "word2vec" || te.kind == "word2vec-warm" || te.kind == "attention") {
    te.words = load_pretrained_binary((fs::path(dir) / "words.bin").string());
  }
  if (te.kind == "doc2vec") te.doc2vec = load_doc2vec((fs::path(dir) / "doc2vec.lyrd").string());
  if (te.kind == "attention") te.probe = load_attention_probe((fs::path(dir) / "probe.lyra").string());
  return te;
}

}  // namespace lyricemb
