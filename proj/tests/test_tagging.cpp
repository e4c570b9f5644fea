#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <sstream>

#include "lyricemb/tagging.hpp"
#include "support.hpp"

using namespace lyricemb;
using lyricemb::testing::relative_error;
using lyricemb::testing::TempDir;

namespace {

TagDataset two_task_dataset(std::size_t n_docs) {
  TagDataset ds;
  for (std::size_t d = 0; d < n_docs; ++d) ds.doc_ids.push_back("d" + std::to_string(d));
  TaskLabels genre{{"genre", {"rock", "pop", "jazz"}}, 1.0, {}, {}};
  TaskLabels expl{{"explicit", {"False", "True"}}, 0.5, {}, {}};
  for (auto* t : {&genre, &expl}) {
    t->present.assign(n_docs, 0);
    t->labels.assign(n_docs * t->num_tags(), 0);
  }
  ds.tasks = {genre, expl};
  return ds;
}

struct RandomBatch {
  nn::Matrix x;
  std::vector<nn::Matrix> labels;
  std::vector<std::vector<std::uint8_t>> present;
};

RandomBatch random_batch(const TaggerModel& m, std::size_t batch, Rng& rng, double present_rate = 0.6) {
  RandomBatch b;
  b.x.resize(static_cast<Eigen::Index>(m.input_dim()), static_cast<Eigen::Index>(batch));
  for (Eigen::Index i = 0; i < b.x.size(); ++i) b.x.data()[i] = 2.0 * uniform01(rng) - 1.0;
  for (const auto& head : m.heads) {
    nn::Matrix y(head.out(), static_cast<Eigen::Index>(batch));
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = uniform01(rng) < 0.4 ? 1.0 : 0.0;
    b.labels.push_back(y);
    std::vector<std::uint8_t> p(batch);
    for (auto& v : p) v = uniform01(rng) < present_rate;
    b.present.push_back(p);
  }
  return b;
}

TaggerModel small_model(std::uint64_t seed, std::size_t layers = 2) {
  TaggerConfig cfg;
  cfg.dense_layers = layers;
  cfg.dense_size = 7;
  cfg.dropout = 0.3;
  cfg.seed = seed;
  return init_tagger(5, two_task_dataset(1), cfg);
}

}  // namespace

TEST(TaggerGradient, MatchesFiniteDifferences) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(1);
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto m = small_model(seed);
    const auto b = random_batch(m, 6, rng);
    const auto g = tagger_batch_gradient(m, b.x, b.labels, b.present, nullptr);
    const auto loss = [&] { return tagger_batch_gradient(m, b.x, b.labels, b.present, nullptr).loss; };
    auto params = m.parameters();
    const double h = 1e-6;
    for (std::size_t p = 0; p < params.size(); ++p) {
      for (Eigen::Index i = 0; i < params[p]->size(); ++i) {
        double& v = params[p]->data()[i];
        const double saved = v;
        v = saved + h;
        const double up = loss();
        v = saved - h;
        const double down = loss();
        v = saved;
        worst = std::max(worst, relative_error(g.gradients[p].data()[i], (up - down) / (2.0 * h)));
      }
    }
  }
  EXPECT_LT(worst, 1e-4);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 1.0);
}

TEST(TaggerGradient, MaskedHeadGetsExactlyZero) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    auto m = small_model(static_cast<std::uint64_t>(trial), 1 + trial % 3);
    auto b = random_batch(m, 1 + uniform_index(rng, 8), rng);
    const std::size_t masked = uniform_index(rng, 2);
    std::fill(b.present[masked].begin(), b.present[masked].end(), 0);
    Rng dropout(static_cast<std::uint64_t>(trial));
    const auto g = tagger_batch_gradient(m, b.x, b.labels, b.present, trial % 2 ? &dropout : nullptr);
    const std::size_t head = 2 * m.shared.size() + 2 * masked;
    EXPECT_TRUE((g.gradients[head].array() == 0.0).all());
    EXPECT_TRUE((g.gradients[head + 1].array() == 0.0).all());
  }
}

TEST(TaggerGradient, LabelsOfMaskedDocumentsHaveNoEffect) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto m = small_model(static_cast<std::uint64_t>(trial));
    auto b = random_batch(m, 5, rng);
    b.present[0][2] = 0;
    const auto g1 = tagger_batch_gradient(m, b.x, b.labels, b.present, nullptr);
    b.labels[0].col(2) = nn::Matrix::Ones(3, 1) - b.labels[0].col(2);
    const auto g2 = tagger_batch_gradient(m, b.x, b.labels, b.present, nullptr);
    EXPECT_EQ(g1.loss, g2.loss);
    for (std::size_t p = 0; p < g1.gradients.size(); ++p) EXPECT_EQ(g1.gradients[p], g2.gradients[p]);
  }
}

TEST(TaggerLoss, MatchesPerDocumentDefinition) {
  Rng rng(4);
  auto m = small_model(4);
  const auto b = random_batch(m, 6, rng);
  const auto g = tagger_batch_gradient(m, b.x, b.labels, b.present, nullptr);
  double total = 0.0;
  for (Eigen::Index d = 0; d < b.x.cols(); ++d) {
    std::vector<float> e(static_cast<std::size_t>(b.x.rows()));
    for (std::size_t k = 0; k < e.size(); ++k) e[k] = static_cast<float>(b.x(static_cast<Eigen::Index>(k), d));
    // single precision inputs differ from the batch by rounding only
    nn::Matrix col = b.x.col(d);
    const auto pass = detail::tagger_forward(m, col, nullptr);
    double doc = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
      if (!b.present[i][static_cast<std::size_t>(d)]) continue;
      double task = 0.0;
      const auto tags = pass.probs[i].rows();
      for (Eigen::Index k = 0; k < tags; ++k) {
        const double p = pass.probs[i](k, 0), y = b.labels[i](k, d);
        task += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
      }
      doc += m.loss_weights[i] * task / static_cast<double>(tags);
    }
    total += doc;
    const auto probs = forward(e, m);
    ASSERT_EQ(probs.size(), 2u);
    EXPECT_NEAR(probs[0][0], pass.probs[0](0, 0), 1e-6);
  }
  EXPECT_NEAR(g.loss, total / static_cast<double>(b.x.cols()), 1e-12);
}

TEST(TaggerLoss, BinaryCrossEntropyClamps) {
  EXPECT_NEAR(binary_cross_entropy(0.25, 1.0), -std::log(0.25), 1e-15);
  EXPECT_NEAR(binary_cross_entropy(0.25, 0.0), -std::log(0.75), 1e-15);
  EXPECT_TRUE(std::isfinite(binary_cross_entropy(0.0, 1.0)));
  EXPECT_NEAR(binary_cross_entropy(1.0, 0.0), -std::log(kProbabilityClamp), 1e-9);
}

TEST(TaggerModel, ShapesFollowConfig) {
  TaggerConfig cfg;
  cfg.dense_layers = 3;
  cfg.dense_size = 16;
  const auto m = init_tagger(10, two_task_dataset(1), cfg);
  ASSERT_EQ(m.shared.size(), 3u);
  EXPECT_EQ(m.input_dim(), 10u);
  EXPECT_EQ(m.shared[2].out(), 16);
  ASSERT_EQ(m.heads.size(), 2u);
  EXPECT_EQ(m.heads[0].out(), 3);
  EXPECT_EQ(m.heads[1].out(), 2);
  EXPECT_EQ(m.loss_weights, (std::vector<double>{1.0, 0.5}));
  cfg.dropout = 1.0;
  EXPECT_THROW(init_tagger(10, two_task_dataset(1), cfg), Error);
}

TEST(TagFile, ParsesAnnotationsAndMasks) {
  const std::vector<std::string> ids{"a", "b", "c"};
  const auto j = nlohmann::json::parse(R"({"tasks": [
    {"name": "genre", "tags": ["rock", "pop"], "annotations": {"a": ["rock"], "c": ["rock", "pop"], "zz": []}},
    {"name": "explicit", "tags": ["False", "True"], "loss_weight": 2.0, "annotations": {"b": ["True"]}}]})");
  WarningCapture capture;
  const auto ds = tag_dataset_from_json(j, ids);
  EXPECT_EQ(capture.messages().size(), 1u);
  ASSERT_EQ(ds.tasks.size(), 2u);
  EXPECT_EQ(ds.tasks[0].present, (std::vector<std::uint8_t>{1, 0, 1}));
  EXPECT_EQ(ds.tasks[0].labels, (std::vector<std::uint8_t>{1, 0, 0, 0, 1, 1}));
  EXPECT_EQ(ds.tasks[1].loss_weight, 2.0);
  EXPECT_EQ(ds.global_labels(1), (std::vector<std::size_t>{3}));
  EXPECT_EQ(ds.global_labels(2), (std::vector<std::size_t>{0, 1}));
  EXPECT_TRUE(ds.annotated(1));
  EXPECT_EQ(ds.total_tags(), 4u);
}

TEST(TagFile, RejectsMalformedInput) {
  const std::vector<std::string> ids{"a"};
  EXPECT_THROW(tag_dataset_from_json(nlohmann::json::object(), ids), Error);
  EXPECT_THROW(tag_dataset_from_json(nlohmann::json::parse(
                   R"({"tasks": [{"name": "g", "tags": ["x"], "annotations": {"a": ["y"]}}]})"), ids),
               Error);
  EXPECT_THROW(tag_dataset_from_json(nlohmann::json::parse(
                   R"({"tasks": [{"name": "g", "tags": ["x", "x"], "annotations": {}}]})"), ids),
               Error);
  EXPECT_THROW(tag_dataset_from_json(nlohmann::json::parse(R"({"tasks": [{"name": "g", "tags": []}]})"), ids),
               Error);
  EXPECT_THROW(load_tag_dataset("/nonexistent/tags.json", ids), Error);
}

TEST(Predictions, CsvRoundTripIsExact) {
  Predictions p;
  p.doc_ids = {"d1", "d2"};
  p.task_names = {"genre", "explicit"};
  p.tags = {{"rock", "pop"}, {"False", "True"}};
  p.scores = {{{0.1, 1.0 / 3.0}, {0.999999999, 1e-300}}, {{0.5, 0.25}, {2.0 / 7.0, 0.0}}};
  std::stringstream buf;
  write_predictions_csv(buf, p);
  EXPECT_EQ(read_predictions_csv(buf), p);
  std::istringstream bad("doc,task\n");
  EXPECT_THROW(read_predictions_csv(bad), Error);
}

namespace {

// Documents whose first coordinate decides the "rock" tag and the second
// decides "True"; the remaining coordinates are noise.
struct SeparableData {
  DocumentEmbeddings emb;
  TagDataset tags;
};

SeparableData separable(std::size_t n, std::uint64_t seed) {
  SeparableData s;
  s.emb.dim = 4;
  s.tags = two_task_dataset(n);
  Rng rng(seed);
  for (std::size_t d = 0; d < n; ++d) {
    std::vector<float> v(4);
    for (auto& x : v) x = static_cast<float>(2.0 * uniform01(rng) - 1.0);
    s.emb.append(s.tags.doc_ids[d], v);
    auto& genre = s.tags.tasks[0];
    auto& expl = s.tags.tasks[1];
    genre.present[d] = d % 5 != 0;
    expl.present[d] = d % 3 != 0;
    genre.labels[d * 3 + (v[0] > 0 ? 0 : 1)] = 1;
    expl.labels[d * 2 + (v[1] > 0 ? 1 : 0)] = 1;
  }
  return s;
}

}  // namespace

TEST(TrainTagger, LearnsSeparableTagsAndIsReproducible) {
  const auto data = separable(400, 5);
  std::vector<std::size_t> train, val, test;
  for (std::size_t i = 0; i < 400; ++i) (i < 300 ? train : i < 350 ? val : test).push_back(i);
  TaggerConfig cfg;
  cfg.dense_size = 16;
  cfg.batch_size = 32;
  cfg.max_epochs = 40;
  cfg.learning_rate = 1e-2;
  cfg.patience = 5;
  const auto a = train_tagger(data.emb, data.tags, train, val, cfg);
  EXPECT_LE(a.epochs_run, 40u);
  EXPECT_EQ(a.val_map.size(), a.epochs_run);
  EXPECT_EQ(a.best_epoch, early_stop(a.val_map, 5).best_epoch);
  const auto preds = predict(data.emb, test, a.model);
  WarningCapture quiet;  // jazz never occurs
  const auto report = evaluate_tasks(task_scores(preds, data.tags, test));
  EXPECT_GT(*report.vocabularies[0].map, 0.95);
  EXPECT_GT(*report.vocabularies[1].map, 0.95);

  const auto b = train_tagger(data.emb, data.tags, train, val, cfg);
  EXPECT_EQ(a.val_map, b.val_map);
  EXPECT_EQ(a.train_loss, b.train_loss);
  EXPECT_EQ(predict(data.emb, b.model), predict(data.emb, a.model));
}

TEST(TrainTagger, StopsAfterPatienceEpochsWithoutImprovement) {
  const auto data = separable(100, 6);
  std::vector<std::size_t> train, val;
  for (std::size_t i = 0; i < 100; ++i) (i < 80 ? train : val).push_back(i);
  TaggerConfig cfg;
  cfg.learning_rate = 0.0;  // validation mAP never changes
  cfg.max_epochs = 50;
  cfg.patience = 3;
  const auto r = train_tagger(data.emb, data.tags, train, val, cfg);
  EXPECT_EQ(r.epochs_run, 4u);
  EXPECT_EQ(r.best_epoch, 1u);
}

TEST(TrainTagger, RejectsMisalignedInputs) {
  auto data = separable(20, 7);
  const std::vector<std::size_t> train{0, 1, 2}, val{3}, empty;
  TaggerConfig cfg;
  EXPECT_THROW(train_tagger(data.emb, data.tags, train, empty, cfg), Error);
  auto other = data.emb;
  std::swap(other.doc_ids[0], other.doc_ids[1]);
  EXPECT_THROW(train_tagger(other, data.tags, train, val, cfg), Error);
}

TEST(TaggerFile, SaveLoadKeepsPredictionsToSinglePrecision) {
  const auto data = separable(50, 8);
  TaggerConfig cfg;
  cfg.dense_size = 8;
  const auto m = init_tagger(4, data.tags, cfg);
  TempDir dir;
  save_tagger(dir.file("t.lyrt"), m);
  const auto back = load_tagger(dir.file("t.lyrt"));
  EXPECT_EQ(back.vocabularies, m.vocabularies);
  EXPECT_EQ(back.loss_weights, m.loss_weights);
  EXPECT_EQ(back.dropout, m.dropout);
  const auto p1 = predict(data.emb, m);
  const auto p2 = predict(data.emb, back);
  for (std::size_t i = 0; i < p1.scores.size(); ++i) {
    for (std::size_t d = 0; d < p1.doc_ids.size(); ++d) {
      for (std::size_t k = 0; k < p1.scores[i][d].size(); ++k) EXPECT_NEAR(p1.scores[i][d][k], p2.scores[i][d][k], 1e-5);
    }
  }
  save_tagger(dir.file("u.lyrt"), back);
  EXPECT_EQ(predict(data.emb, load_tagger(dir.file("u.lyrt"))), p2);
}
