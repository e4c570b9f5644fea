#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <map>
#include <set>

#include "lyricemb/word2vec.hpp"
#include "support.hpp"

using namespace lyricemb;
using lyricemb::testing::relative_error;

namespace {

// Rows of a toy negative-sampling problem in double precision. `in_ids` and
// `out_ids` index into the two tables and may repeat.
struct KernelProblem {
  std::size_t dim = 6;
  std::vector<std::vector<double>> in_rows, out_rows;
  std::vector<std::size_t> in_ids, out_ids;

  double loss() const {
    std::vector<const double*> in, out;
    for (auto i : in_ids) in.push_back(in_rows[i].data());
    for (auto o : out_ids) out.push_back(out_rows[o].data());
    KernelScratch<double> s;
    return negative_sampling_forward<double>(in, out, dim, s);
  }
};

KernelProblem random_problem(std::uint64_t seed, std::size_t n_in, std::size_t n_out,
                             std::vector<std::size_t> in_ids, std::vector<std::size_t> out_ids) {
  Rng rng(seed);
  KernelProblem p;
  p.in_rows.assign(n_in, std::vector<double>(p.dim));
  p.out_rows.assign(n_out, std::vector<double>(p.dim));
  for (auto* table : {&p.in_rows, &p.out_rows}) {
    for (auto& row : *table) {
      for (auto& x : row) x = 2.0 * uniform01(rng) - 1.0;
    }
  }
  p.in_ids = std::move(in_ids);
  p.out_ids = std::move(out_ids);
  return p;
}

// Analytic gradient recovered from one SGD step with lr = 1, compared with
// central differences of the loss for every coordinate of every row.
double max_gradient_error(KernelProblem p) {
  const auto t0 = std::chrono::steady_clock::now();
  KernelProblem stepped = p;
  std::vector<double*> in, out;
  for (auto i : stepped.in_ids) in.push_back(stepped.in_rows[i].data());
  for (auto o : stepped.out_ids) out.push_back(stepped.out_rows[o].data());
  KernelScratch<double> s;
  negative_sampling_step<double>(in, out, p.dim, 1.0, s);

  double worst = 0.0;
  const double h = 1e-6;
  for (int table = 0; table < 2; ++table) {
    auto& rows = table == 0 ? p.in_rows : p.out_rows;
    const auto& after = table == 0 ? stepped.in_rows : stepped.out_rows;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t k = 0; k < p.dim; ++k) {
        const double analytic = rows[r][k] - after[r][k];
        const double saved = rows[r][k];
        rows[r][k] = saved + h;
        const double up = p.loss();
        rows[r][k] = saved - h;
        const double down = p.loss();
        rows[r][k] = saved;
        worst = std::max(worst, relative_error(analytic, (up - down) / (2.0 * h)));
      }
    }
  }
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 1.0);
  return worst;
}

std::vector<TokenizedDocument> topic_corpus(std::size_t n_docs, std::uint64_t seed) {
  // two disjoint topics; each document uses one of them
  Rng rng(seed);
  std::vector<TokenizedDocument> docs;
  for (std::size_t d = 0; d < n_docs; ++d) {
    TokenizedDocument doc{"d" + std::to_string(d), "a", std::nullopt, {}};
    const char topic = d % 2 ? 'x' : 'y';
    for (int i = 0; i < 30; ++i) doc.tokens.push_back(std::string(1, topic) + std::to_string(uniform_index(rng, 8)));
    docs.push_back(std::move(doc));
  }
  return docs;
}

double cosine(std::span<const float> a, std::span<const float> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ab += a[k] * b[k];
    aa += a[k] * a[k];
    bb += b[k] * b[k];
  }
  return ab / std::sqrt(aa * bb);
}

}  // namespace

TEST(NegativeSamplingKernel, LossMatchesClosedForm) {
  const auto p = random_problem(1, 2, 3, {0, 1}, {0, 1, 2});
  std::vector<double> h(p.dim);
  for (std::size_t k = 0; k < p.dim; ++k) h[k] = (p.in_rows[0][k] + p.in_rows[1][k]) / 2.0;
  double expected = 0.0;
  for (std::size_t j = 0; j < 3; ++j) {
    double f = 0.0;
    for (std::size_t k = 0; k < p.dim; ++k) f += p.out_rows[j][k] * h[k];
    expected += j == 0 ? -std::log(1.0 / (1.0 + std::exp(-f))) : -std::log(1.0 / (1.0 + std::exp(f)));
  }
  EXPECT_NEAR(p.loss(), expected, 1e-12);
}

TEST(NegativeSamplingKernel, SkipGramGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EXPECT_LT(max_gradient_error(random_problem(seed, 1, 6, {0}, {0, 1, 2, 3, 4, 5})), 1e-4);
  }
}

TEST(NegativeSamplingKernel, CbowGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EXPECT_LT(max_gradient_error(random_problem(seed, 5, 6, {0, 1, 2, 3, 4}, {0, 1, 2, 3, 4, 5})), 1e-4);
  }
}

TEST(NegativeSamplingKernel, RepeatedRowsGetSummedGradients) {
  // a context word appearing twice and a noise word drawn twice
  EXPECT_LT(max_gradient_error(random_problem(7, 3, 3, {0, 1, 0, 2}, {0, 1, 1, 2})), 1e-4);
}

TEST(NegativeSamplingKernel, EmptyInputsLeaveRowsUntouched) {
  auto p = random_problem(2, 1, 2, {}, {0, 1});
  const auto before = p.out_rows;
  std::vector<double*> in, out{p.out_rows[0].data(), p.out_rows[1].data()};
  KernelScratch<double> s;
  EXPECT_EQ(negative_sampling_step<double>(in, out, p.dim, 0.1, s), 0.0);
  EXPECT_EQ(p.out_rows, before);
}

TEST(UnigramSampler, ProbabilitiesFollowPowerLaw) {
  const std::vector<std::uint64_t> counts{100, 10, 1, 50};
  UnigramSampler s(counts);
  double z = 0.0;
  for (auto c : counts) z += std::pow(static_cast<double>(c), 0.75);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    EXPECT_NEAR(s.probability(static_cast<TokenId>(i)), std::pow(static_cast<double>(counts[i]), 0.75) / z, 1e-12);
  }
  Rng rng(4);
  std::vector<double> hits(4, 0.0);
  const int n = 200000;
  for (int i = 0; i < n; ++i) ++hits[s.sample(rng)];
  double chi2 = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const double e = n * s.probability(static_cast<TokenId>(i));
    chi2 += (hits[i] - e) * (hits[i] - e) / e;
  }
  EXPECT_LT(chi2, 16.27);  // 99.9th percentile, 3 degrees of freedom
  EXPECT_THROW(UnigramSampler(std::vector<std::uint64_t>{}), Error);
  EXPECT_THROW(UnigramSampler(std::vector<std::uint64_t>{0, 0}), Error);
}

TEST(Word2vecSchedule, LearningRateAndSubsampling) {
  EXPECT_DOUBLE_EQ(decayed_learning_rate(0.025, 1e-4, 0.0), 0.025);
  EXPECT_NEAR(decayed_learning_rate(0.025, 1e-4, 1.0), 0.025 * 1e-4, 1e-15);
  EXPECT_NEAR(decayed_learning_rate(0.025, 0.0, 0.5), 0.0125, 1e-15);
  EXPECT_DOUBLE_EQ(keep_probability(1e-3, 1e-4), 1.0);
  EXPECT_NEAR(keep_probability(1e-3, 0.1), std::sqrt(1e-2), 1e-15);
  EXPECT_DOUBLE_EQ(keep_probability(0.0, 0.5), 1.0);
}

TEST(Word2vec, SeededSingleWorkerRunsAreBitExact) {
  const auto docs = topic_corpus(60, 1);
  for (auto arch : {Architecture::kCbow, Architecture::kSkipGram}) {
    Word2vecConfig cfg;
    cfg.dim = 12;
    cfg.epochs = 3;
    cfg.min_count = 1;
    cfg.architecture = arch;
    const auto a = train_word2vec(docs, cfg);
    const auto b = train_word2vec(docs, cfg);
    EXPECT_EQ(a.matrix, b.matrix);
    EXPECT_EQ(a.epoch_loss, b.epoch_loss);
    cfg.seed = 2;
    EXPECT_FALSE(train_word2vec(docs, cfg).matrix == a.matrix);
  }
}

TEST(Word2vec, LossFallsAndTopicsSeparate) {
  const auto docs = topic_corpus(200, 3);
  for (auto arch : {Architecture::kCbow, Architecture::kSkipGram}) {
    Word2vecConfig cfg;
    cfg.dim = 16;
    cfg.epochs = 8;
    cfg.min_count = 1;
    cfg.subsample = 0.0;
    cfg.architecture = arch;
    const auto r = train_word2vec(docs, cfg);
    ASSERT_EQ(r.epoch_loss.size(), 8u);
    EXPECT_LT(r.epoch_loss.back(), r.epoch_loss.front());
    const auto& m = r.matrix;
    double within = 0.0, across = 0.0;
    for (int i = 0; i < 8; ++i) {
      for (int j = 0; j < 8; ++j) {
        if (i == j) continue;
        within += cosine(m.input_row(*m.find("x" + std::to_string(i))), m.input_row(*m.find("x" + std::to_string(j))));
        across += cosine(m.input_row(*m.find("x" + std::to_string(i))), m.input_row(*m.find("y" + std::to_string(j))));
      }
    }
    EXPECT_GT(within / 56.0, across / 56.0 + 0.3) << to_string(arch);
  }
}

TEST(Word2vec, HeldOutLossImprovesOverInitialisation) {
  const auto train = topic_corpus(200, 5);
  const auto held = topic_corpus(40, 6);
  Word2vecConfig cfg;
  cfg.dim = 16;
  cfg.epochs = 5;
  cfg.min_count = 1;
  const auto vocab = build_vocab(train, 1);
  const auto init = init_embedding(vocab, cfg.dim, cfg.seed);
  const auto examples = sample_training_examples(held, vocab, cfg, 500, 9);
  ASSERT_EQ(examples.size(), 500u);
  const double before = mean_negative_sampling_loss(init, examples);
  const auto trained = train_word2vec(train, vocab, cfg, init);
  EXPECT_LT(mean_negative_sampling_loss(trained.matrix, examples), before);
}

TEST(Word2vec, MultiWorkerTrainingStaysFinite) {
  const auto docs = topic_corpus(100, 8);
  Word2vecConfig cfg;
  cfg.dim = 8;
  cfg.epochs = 2;
  cfg.min_count = 1;
  cfg.workers = 4;
  const auto r = train_word2vec(docs, cfg);
  EXPECT_FALSE(r.matrix.first_non_finite_row().has_value());
}

TEST(Word2vec, RejectsMisalignedInitialMatrix) {
  const auto docs = topic_corpus(10, 1);
  const auto vocab = build_vocab(docs, 1);
  Word2vecConfig cfg;
  cfg.dim = 4;
  auto init = init_embedding(vocab, 4, 1);
  init.drop_output();
  EXPECT_THROW(train_word2vec(docs, vocab, cfg, init), Error);
  EXPECT_THROW(train_word2vec(docs, vocab, cfg, EmbeddingMatrix({"zz"}, 4, true)), Error);
  cfg.epochs = 0;
  EXPECT_THROW(train_word2vec(docs, vocab, cfg, init_embedding(vocab, 4, 1)), Error);
}

TEST(Word2vec, InitialRowsDependOnTokenNotPosition) {
  const Vocabulary a({{"x", 3, 1}, {"y", 2, 1}}, 1);
  const Vocabulary b({{"y", 5, 1}, {"x", 1, 1}}, 1);
  const auto ma = init_embedding(a, 8, 4);
  const auto mb = init_embedding(b, 8, 4);
  const auto ra = ma.input_row(*ma.find("x"));
  const auto rb = mb.input_row(*mb.find("x"));
  EXPECT_TRUE(std::equal(ra.begin(), ra.end(), rb.begin()));
  for (float v : ra) {
    EXPECT_GE(v, -0.5f / 8);
    EXPECT_LT(v, 0.5f / 8);
  }
  for (float v : ma.output_data()) EXPECT_EQ(v, 0.0f);
}

TEST(WarmStart, CopiesKnownRowsAndSeedsTheRest) {
  EmbeddingMatrix pre({"love", "night", "only_pretrained"}, 3, false);
  pre.input_data() = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  const Vocabulary v({{"night", 5, 1}, {"fresh", 3, 1}, {"love", 2, 1}}, 1);
  const auto m = warm_start_init(pre, v, 11);
  ASSERT_EQ(m.size(), 3u);
  EXPECT_TRUE(m.has_output());
  EXPECT_EQ(m.words(), (std::vector<std::string>{"night", "fresh", "love"}));
  EXPECT_EQ(std::vector<float>(m.input_row(0).begin(), m.input_row(0).end()), (std::vector<float>{4, 5, 6}));
  EXPECT_EQ(std::vector<float>(m.input_row(2).begin(), m.input_row(2).end()), (std::vector<float>{1, 2, 3}));
  std::vector<float> fresh(3);
  init_random_row(fresh, "fresh", 11);
  EXPECT_EQ(std::vector<float>(m.input_row(1).begin(), m.input_row(1).end()), fresh);
  EXPECT_FALSE(m.find("only_pretrained"));
}
