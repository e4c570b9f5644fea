#include <gtest/gtest.h>

#include <cmath>

#include "lyricemb/sparse_baselines.hpp"
#include "lyricemb/vocab.hpp"
#include "support.hpp"

using namespace lyricemb;
using lyricemb::testing::doc;
using lyricemb::testing::words;

namespace {

Vocabulary small_vocab() {
  const std::vector<TokenizedDocument> docs{doc("1", "love love night"), doc("2", "love day"), doc("3", "night")};
  return build_vocab(docs, 1);  // love(3, df 2), night(2, df 2), day(1, df 1)
}

}  // namespace

TEST(Bow, CountsInVocabularyTokens) {
  const auto v = small_vocab();
  const auto r = bow_vector(words("love night love zebra"), v);
  EXPECT_FALSE(r.flagged);
  EXPECT_EQ(r.value.dim, 3u);
  EXPECT_EQ(r.value.densify(), (std::vector<float>{2.0f, 1.0f, 0.0f}));
}

TEST(Bow, AllUnknownIsFlaggedZero) {
  const auto r = bow_vector(words("zebra yak"), small_vocab());
  EXPECT_TRUE(r.flagged);
  EXPECT_EQ(r.value.densify(), (std::vector<float>(3, 0.0f)));
}

TEST(Tfidf, MatchesHandComputedWeights) {
  const auto v = small_vocab();
  const auto r = tfidf_vector(words("love love day"), v);
  // tf * (ln((1 + N) / (1 + df)) + 1) with N = 3
  const double love = 2.0 * (std::log(4.0 / 3.0) + 1.0);
  const double day = 1.0 * (std::log(4.0 / 2.0) + 1.0);
  const double norm = std::sqrt(love * love + day * day);
  EXPECT_NEAR(r.value.value_at(*v.find("love")), love / norm, 1e-12);
  EXPECT_NEAR(r.value.value_at(*v.find("day")), day / norm, 1e-12);
  EXPECT_EQ(r.value.value_at(*v.find("night")), 0.0);
  EXPECT_NEAR(r.value.l2_norm(), 1.0, 1e-12);
}

TEST(Tfidf, RarerTermsWeighMore) {
  const auto v = small_vocab();
  const auto r = tfidf_vector(words("love day"), v);
  EXPECT_GT(r.value.value_at(*v.find("day")), r.value.value_at(*v.find("love")));
  EXPECT_TRUE(tfidf_vector(words("unknown"), v).flagged);
}

TEST(Tfidf, UnitNormOnRandomDocuments) {
  const auto v = small_vocab();
  Rng rng(9);
  const std::vector<std::string> pool{"love", "night", "day", "oov"};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> toks;
    for (int i = 0; i < 1 + static_cast<int>(uniform_index(rng, 10)); ++i) toks.push_back(pool[uniform_index(rng, 4)]);
    const auto r = tfidf_vector(toks, v);
    if (r.flagged) continue;
    EXPECT_NEAR(r.value.l2_norm(), 1.0, 1e-12);
    for (const auto& [i, x] : r.value.entries) EXPECT_GT(x, 0.0);
  }
}

TEST(RandomBaseline, SingleTokenIsItsVector) {
  const auto v = random_token_vector("love", 16, 3);
  const auto d = random_embed_doc(words("love"), 16, 3);
  EXPECT_EQ(d.value, v);
  EXPECT_EQ(random_embed_doc(words("love love love"), 16, 3).value, v);
}

TEST(RandomBaseline, IsMeanOfTokenVectorsAndOrderFree) {
  const auto a = random_token_vector("a", 8, 1);
  const auto b = random_token_vector("b", 8, 1);
  const auto d = random_embed_doc(words("a b b"), 8, 1);
  for (std::size_t k = 0; k < 8; ++k) {
    EXPECT_NEAR(d.value[k], (a[k] + 2.0 * b[k]) / 3.0, 1e-6);
  }
  EXPECT_EQ(random_embed_doc(words("b a b"), 8, 1).value, d.value);
  EXPECT_NE(random_embed_doc(words("a b b"), 8, 2).value, d.value);
}

TEST(RandomBaseline, TokenVectorsAreStandardNormal) {
  double sum = 0.0, sq = 0.0;
  const int n_tokens = 400, dim = 64;
  for (int t = 0; t < n_tokens; ++t) {
    for (float x : random_token_vector("t" + std::to_string(t), dim, 0)) {
      sum += x;
      sq += static_cast<double>(x) * x;
    }
  }
  const double n = n_tokens * dim;
  EXPECT_NEAR(sum / n, 0.0, 0.03);
  EXPECT_NEAR(sq / n, 1.0, 0.05);
}

TEST(RandomBaseline, EmptyDocumentIsFlagged) {
  const auto d = random_embed_doc({}, 4, 0);
  EXPECT_TRUE(d.flagged);
  EXPECT_EQ(d.value, (std::vector<float>(4, 0.0f)));
  EXPECT_THROW(random_embed_doc(words("a"), 0, 0), Error);
}
