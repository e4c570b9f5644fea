#include <gtest/gtest.h>

#include "lyricemb/embedders.hpp"
#include "support.hpp"

using namespace lyricemb;
using lyricemb::testing::TempDir;

namespace {

// Three artists, each with its own words plus shared filler.
std::vector<TokenizedDocument> artist_corpus(std::size_t per_artist, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TokenizedDocument> docs;
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t i = 0; i < per_artist; ++i) {
      TokenizedDocument d{"a" + std::to_string(a) + "d" + std::to_string(i), "artist" + std::to_string(a), std::nullopt, {}};
      for (int t = 0; t < 20; ++t) {
        d.tokens.push_back(uniform01(rng) < 0.5 ? "own" + std::string(1, static_cast<char>('a' + a)) +
                                                      std::string(1, static_cast<char>('a' + uniform_index(rng, 5)))
                                                : "fill" + std::string(1, static_cast<char>('a' + uniform_index(rng, 8))));
      }
      docs.push_back(std::move(d));
    }
  }
  return docs;
}

EmbedderConfig config_for(const std::string& kind) {
  EmbedderConfig c;
  c.kind = kind;
  c.dim = 8;
  c.word2vec.epochs = 2;
  c.word2vec.min_count = 1;
  c.infer_steps = 5;
  c.attention.probes = 2;
  c.attention.map_dim = 4;
  c.attention.dense_size = 8;
  c.attention.epochs = 2;
  return c;
}

const std::vector<std::string> kKindsWithoutWarmStart{"random", "bow", "tfidf", "word2vec", "doc2vec", "attention"};

}  // namespace

TEST(Embedders, SeededTrainingIsBitExactForEveryKind) {
  const auto docs = artist_corpus(15, 1);
  for (const auto& kind : kKindsWithoutWarmStart) {
    const auto cfg = config_for(kind);
    const auto a = embed_documents(train_embedder(docs, cfg, 3), docs);
    const auto b = embed_documents(train_embedder(docs, cfg, 3), docs);
    EXPECT_EQ(a, b) << kind;
    EXPECT_EQ(a.size(), docs.size());
  }
}

TEST(Embedders, EmbeddingDoesNotDependOnThreadCount) {
  const auto docs = artist_corpus(15, 2);
  for (const auto& kind : kKindsWithoutWarmStart) {
    const auto te = train_embedder(docs, config_for(kind), 4);
    EXPECT_EQ(embed_documents(te, docs, 1), embed_documents(te, docs, 4)) << kind;
  }
}

TEST(Embedders, OutputDimensions) {
  const auto docs = artist_corpus(10, 3);
  EXPECT_EQ(train_embedder(docs, config_for("random"), 1).output_dim(), 8u);
  EXPECT_EQ(train_embedder(docs, config_for("word2vec"), 1).output_dim(), 8u);
  // 13 distinct tokens exceed dim 8, so bow keeps the top 8
  EXPECT_EQ(train_embedder(docs, config_for("bow"), 1).output_dim(), 8u);
  EXPECT_EQ(train_embedder(docs, config_for("attention"), 1).output_dim(), 16u);
}

TEST(Embedders, SaveLoadReproducesEmbeddings) {
  const auto docs = artist_corpus(10, 4);
  for (const auto& kind : kKindsWithoutWarmStart) {
    const auto te = train_embedder(docs, config_for(kind), 5);
    TempDir dir;
    save_embedder(dir.path().string(), te);
    const auto back = load_embedder(dir.path().string());
    EXPECT_EQ(back.kind, kind);
    EXPECT_EQ(back.epoch_loss, te.epoch_loss);
    const auto want = embed_documents(te, docs);
    const auto got = embed_documents(back, docs);
    ASSERT_EQ(got.values.size(), want.values.size()) << kind;
    // probe and doc2vec weights are stored in single precision
    const float tol = kind == "attention" ? 1e-5f : 0.0f;
    for (std::size_t i = 0; i < want.values.size(); ++i) ASSERT_NEAR(got.values[i], want.values[i], tol) << kind;
  }
}

TEST(Embedders, WarmStartUsesPretrainedVectors) {
  const auto docs = artist_corpus(10, 6);
  TempDir dir;
  EmbeddingMatrix pre({"fillA", "filla", "ownaa"}, 8, false);
  for (std::size_t i = 0; i < pre.input_data().size(); ++i) pre.input_data()[i] = static_cast<float>(i) / 24.0f;
  save_word2vec_binary(dir.file("pre.bin"), pre);
  auto cfg = config_for("word2vec-warm");
  cfg.pretrained = dir.file("pre.bin");
  const auto a = train_embedder(docs, cfg, 1);
  EXPECT_EQ(a.words->size(), build_vocab(docs, 1).size());
  EXPECT_EQ(embed_documents(a, docs), embed_documents(train_embedder(docs, cfg, 1), docs));
  // different starting rows lead to different trained rows
  const auto cold = train_embedder(docs, config_for("word2vec"), 1);
  const auto id = *a.words->find("ownaa");
  EXPECT_NE(std::vector<float>(a.words->input_row(id).begin(), a.words->input_row(id).end()),
            std::vector<float>(cold.words->input_row(id).begin(), cold.words->input_row(id).end()));

  cfg.dim = 4;
  EXPECT_THROW(train_embedder(docs, cfg, 1), Error);
}

TEST(Embedders, ConfigValidation) {
  EmbedderConfig c;
  c.kind = "glove";
  EXPECT_THROW(c.validate(), Error);
  c.kind = "word2vec-warm";
  EXPECT_THROW(c.validate(), Error);
  c.kind = "bow";
  c.dim = 0;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_THROW(load_embedder("/nonexistent"), Error);
}

TEST(Embedders, AttentionRecordsProxyAccuracy) {
  const auto docs = artist_corpus(20, 7);
  auto cfg = config_for("attention");
  cfg.attention.epochs = 50;
  cfg.attention.learning_rate = 3e-2;
  cfg.attention.holdout_fraction = 0.25;
  const auto te = train_embedder(docs, cfg, 1);
  ASSERT_TRUE(te.proxy_heldout_accuracy.has_value());
  EXPECT_GE(*te.proxy_heldout_accuracy, 0.8);
}
