#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "lyricemb/binary_io.hpp"
#include "lyricemb/common.hpp"
#include "lyricemb/embedding_file.hpp"
#include "lyricemb/evaluation.hpp"
#include "lyricemb/nn.hpp"
#include "lyricemb/rng.hpp"

namespace lyricemb {

struct TagVocabulary {
  std::string name;
  std::vector<std::string> tags;

  void validate() const {
    if (tags.empty()) throw Error("tag vocabulary '" + name + "' has no tags");
    std::unordered_set<std::string> seen;
    for (const auto& t : tags) {
      if (!seen.insert(t).second) throw Error("tag vocabulary '" + name + "' repeats tag '" + t + "'");
    }
  }

  friend bool operator==(const TagVocabulary&, const TagVocabulary&) = default;
};

// One annotation task over the dataset's documents.
struct TaskLabels {
  TagVocabulary vocabulary;
  double loss_weight = 1.0;
  std::vector<std::uint8_t> present;  // a_{i,d}
  std::vector<std::uint8_t> labels;   // docs x tags, row-major; rows with present == 0 are ignored

  std::size_t num_tags() const { return vocabulary.tags.size(); }
  std::uint8_t label(std::size_t doc, std::size_t tag) const { return labels[doc * num_tags() + tag]; }
};

struct TagDataset {
  std::vector<std::string> doc_ids;
  std::vector<TaskLabels> tasks;

  std::size_t num_docs() const { return doc_ids.size(); }

  bool annotated(std::size_t doc) const {
    return std::any_of(tasks.begin(), tasks.end(), [&](const auto& t) { return t.present[doc] != 0; });
  }

  // Label ids across all tasks (task offset + tag) for a document.
  std::vector<std::size_t> global_labels(std::size_t doc) const {
    std::vector<std::size_t> out;
    std::size_t offset = 0;
    for (const auto& t : tasks) {
      if (t.present[doc]) {
        for (std::size_t k = 0; k < t.num_tags(); ++k) {
          if (t.label(doc, k)) out.push_back(offset + k);
        }
      }
      offset += t.num_tags();
    }
    return out;
  }

  std::size_t total_tags() const {
    std::size_t n = 0;
    for (const auto& t : tasks) n += t.num_tags();
    return n;
  }
};

// Tag file (JSON):
//   {"tasks": [{"name": ..., "tags": [...], "loss_weight": 1.0,
//               "annotations": {"<doc_id>": ["<tag>", ...], ...}}, ...]}
// Documents missing from a task's annotations have a_{i,d} = 0.
inline TagDataset tag_dataset_from_json(const nlohmann::json& j, std::span<const std::string> doc_ids) {
  TagDataset ds;
  ds.doc_ids.assign(doc_ids.begin(), doc_ids.end());
  std::unordered_map<std::string, std::size_t> row;
  for (std::size_t i = 0; i < doc_ids.size(); ++i) row.emplace(doc_ids[i], i);
  if (!j.contains("tasks") || !j["tasks"].is_array()) throw Error("tag file: missing 'tasks' array");
  for (const auto& tj : j["tasks"]) {
    TaskLabels t;
    t.vocabulary.name = tj.at("name").get<std::string>();
    t.vocabulary.tags = tj.at("tags").get<std::vector<std::string>>();
    t.vocabulary.validate();
    t.loss_weight = tj.value("loss_weight", 1.0);
    t.present.assign(doc_ids.size(), 0);
    t.labels.assign(doc_ids.size() * t.num_tags(), 0);
    std::unordered_map<std::string, std::size_t> tag_index;
    for (std::size_t k = 0; k < t.num_tags(); ++k) tag_index.emplace(t.vocabulary.tags[k], k);
    std::size_t unknown_docs = 0;
    for (const auto& [doc, tags] : tj.at("annotations").items()) {
      const auto it = row.find(doc);
      if (it == row.end()) {
        ++unknown_docs;
        continue;
      }
      t.present[it->second] = 1;
      for (const auto& tag : tags) {
        const auto k = tag_index.find(tag.get<std::string>());
        if (k == tag_index.end()) {
          throw Error("tag file: task '" + t.vocabulary.name + "' has no tag '" + tag.get<std::string>() + "'");
        }
        t.labels[it->second * t.num_tags() + k->second] = 1;
      }
    }
    if (unknown_docs > 0) {
      warn("tag file: task '" + t.vocabulary.name + "' annotates " + std::to_string(unknown_docs) +
           " document(s) absent from the corpus");
    }
    ds.tasks.push_back(std::move(t));
  }
  return ds;
}

inline TagDataset load_tag_dataset(const std::string& path, std::span<const std::string> doc_ids) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open tag file: " + path);
  return tag_dataset_from_json(nlohmann::json::parse(in), doc_ids);
}

// ---------------------------------------------------------------------------
// Model

struct TaggerConfig {
  std::size_t dense_layers = 2;   // {1..8}
  std::size_t dense_size = 128;   // {8..512}
  double dropout = 0.2;           // {0.1..0.9}
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 200;
  std::size_t patience = kDefaultPatience;
  std::uint64_t seed = 1;

  void validate() const {
    if (dense_layers < 1) throw Error("tagger: dense_layers must be >= 1");
    if (dense_size < 1) throw Error("tagger: dense_size must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw Error("tagger: dropout must lie in [0, 1)");
    if (learning_rate < 0.0) throw Error("tagger: learning rate must be >= 0");
    if (batch_size < 1 || max_epochs < 1 || patience < 1) throw Error("tagger: batch_size, max_epochs, patience must be >= 1");
  }
};

// Shared ReLU stack with dropout, then one linear head per tag vocabulary and
// a sigmoid per tag.
struct TaggerModel {
  std::vector<nn::Dense> shared;
  std::vector<nn::Dense> heads;
  std::vector<TagVocabulary> vocabularies;
  std::vector<double> loss_weights;
  double dropout = 0.0;

  std::size_t input_dim() const { return shared.empty() ? 0 : static_cast<std::size_t>(shared.front().in()); }
  std::size_t num_tasks() const { return heads.size(); }

  nn::ParameterList parameters() {
    nn::ParameterList p;
    for (auto* group : {&shared, &heads}) {
      for (auto& layer : *group) {
        p.push_back(&layer.weight);
        p.push_back(&layer.bias);
      }
    }
    return p;
  }
};

inline TaggerModel init_tagger(std::size_t input_dim, const TagDataset& data, const TaggerConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, "tagger-init"));
  TaggerModel m;
  m.dropout = cfg.dropout;
  auto in = static_cast<Eigen::Index>(input_dim);
  for (std::size_t l = 0; l < cfg.dense_layers; ++l) {
    m.shared.emplace_back(in, static_cast<Eigen::Index>(cfg.dense_size));
    m.shared.back().init(rng);
    in = static_cast<Eigen::Index>(cfg.dense_size);
  }
  for (const auto& t : data.tasks) {
    m.heads.emplace_back(in, static_cast<Eigen::Index>(t.num_tags()));
    m.heads.back().init(rng);
    m.vocabularies.push_back(t.vocabulary);
    m.loss_weights.push_back(t.loss_weight);
  }
  return m;
}

namespace detail {

struct TaggerPass {
  std::vector<nn::Matrix> pre;       // per shared layer, before ReLU
  std::vector<nn::Matrix> acts;      // acts[0] = input, acts[l+1] = output of layer l (after dropout)
  std::vector<nn::Matrix> keep;      // dropout masks scaled by 1/(1-p); empty when inference
  std::vector<nn::Matrix> probs;     // per task, tags x batch
};

inline TaggerPass tagger_forward(const TaggerModel& m, const nn::Matrix& x, Rng* dropout_rng) {
  if (static_cast<std::size_t>(x.rows()) != m.input_dim()) {
    throw Error("tagger: input dimension " + std::to_string(x.rows()) + " does not match model input " +
                std::to_string(m.input_dim()));
  }
  TaggerPass p;
  p.acts.push_back(x);
  for (const auto& layer : m.shared) {
    p.pre.push_back(layer.forward(p.acts.back()));
    nn::Matrix a = nn::relu(p.pre.back());
    if (dropout_rng && m.dropout > 0.0) {
      nn::Matrix keep(a.rows(), a.cols());
      const double scale = 1.0 / (1.0 - m.dropout);
      for (Eigen::Index i = 0; i < keep.size(); ++i) keep.data()[i] = uniform01(*dropout_rng) < m.dropout ? 0.0 : scale;
      a = a.cwiseProduct(keep);
      p.keep.push_back(std::move(keep));
    }
    p.acts.push_back(std::move(a));
  }
  for (const auto& head : m.heads) {
    p.probs.push_back(head.forward(p.acts.back()).unaryExpr([](double z) { return nn::sigmoid(z); }));
  }
  return p;
}

}  // namespace detail

inline constexpr double kProbabilityClamp = 1e-7;

// Per-task probability vectors for one embedding (dropout off).
inline std::vector<std::vector<double>> forward(std::span<const float> embedding, const TaggerModel& m) {
  nn::Matrix x(static_cast<Eigen::Index>(embedding.size()), 1);
  for (std::size_t i = 0; i < embedding.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = embedding[i];
  const auto pass = detail::tagger_forward(m, x, nullptr);
  std::vector<std::vector<double>> out;
  for (const auto& p : pass.probs) out.emplace_back(p.data(), p.data() + p.size());
  return out;
}

// Batch inputs for the loss: per task, probabilities and labels are
// tags x docs and `present` holds a_{i,d} per doc.
struct TaskBatch {
  nn::Matrix probs;
  nn::Matrix labels;
  std::vector<std::uint8_t> present;
};

inline double binary_cross_entropy(double p, double y) {
  p = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

// L_d = sum_i w_i a_{i,d} L_{i,d} with L_{i,d} the mean BCE over the task's
// tags; the batch loss is the mean of L_d over documents.
inline double masked_multitask_loss(std::span<const TaskBatch> tasks, std::span<const double> loss_weights) {
  if (tasks.size() != loss_weights.size()) throw Error("masked_multitask_loss: weight count mismatch");
  if (tasks.empty()) return 0.0;
  const auto docs = tasks.front().probs.cols();
  double total = 0.0;
  for (Eigen::Index d = 0; d < docs; ++d) {
    double doc_loss = 0.0;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      const auto& t = tasks[i];
      if (!t.present[static_cast<std::size_t>(d)]) continue;
      double task_loss = 0.0;
      for (Eigen::Index k = 0; k < t.probs.rows(); ++k) task_loss += binary_cross_entropy(t.probs(k, d), t.labels(k, d));
      doc_loss += loss_weights[i] * task_loss / static_cast<double>(t.probs.rows());
    }
    total += doc_loss;
  }
  return docs > 0 ? total / static_cast<double>(docs) : 0.0;
}

struct TaggerGradient {
  double loss = 0.0;
  nn::GradientList gradients;  // aligned with TaggerModel::parameters()
};

// Loss and gradient over a batch. `labels[i]` is tags x batch and
// `present[i]` one flag per column. Pass a dropout RNG to train, nullptr for
// a deterministic pass. The gradient w.r.t. logits is w_i a_{i,d} (p - y) /
// (|tags| * batch), exactly zero for masked documents.
inline TaggerGradient tagger_batch_gradient(TaggerModel& m, const nn::Matrix& x, std::span<const nn::Matrix> labels,
                                            std::span<const std::vector<std::uint8_t>> present, Rng* dropout_rng) {
  TaggerGradient g;
  g.gradients = nn::zeros_like(m.parameters());
  const auto pass = detail::tagger_forward(m, x, dropout_rng);
  const auto batch = x.cols();
  std::vector<TaskBatch> loss_view;
  for (std::size_t i = 0; i < m.num_tasks(); ++i) loss_view.push_back({pass.probs[i], labels[i], present[i]});
  g.loss = masked_multitask_loss(loss_view, m.loss_weights);

  const std::size_t n_shared = m.shared.size();
  nn::Matrix upstream = nn::Matrix::Zero(pass.acts.back().rows(), batch);
  for (std::size_t i = 0; i < m.num_tasks(); ++i) {
    const auto tags = static_cast<double>(m.heads[i].out());
    nn::Matrix delta = pass.probs[i] - labels[i];
    for (Eigen::Index d = 0; d < batch; ++d) {
      if (present[i][static_cast<std::size_t>(d)]) {
        delta.col(d) *= m.loss_weights[i] / (tags * static_cast<double>(batch));
      } else {
        delta.col(d).setZero();
      }
    }
    g.gradients[2 * (n_shared + i)] += delta * pass.acts.back().transpose();
    g.gradients[2 * (n_shared + i) + 1] += delta.rowwise().sum();
    upstream += m.heads[i].weight.transpose() * delta;
  }
  for (std::size_t l = n_shared; l-- > 0;) {
    if (!pass.keep.empty()) upstream = upstream.cwiseProduct(pass.keep[l]);
    const nn::Matrix delta = nn::relu_grad(pass.pre[l], upstream);
    g.gradients[2 * l] += delta * pass.acts[l].transpose();
    g.gradients[2 * l + 1] += delta.rowwise().sum();
    if (l > 0) upstream = m.shared[l].weight.transpose() * delta;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Prediction

struct Predictions {
  std::vector<std::string> doc_ids;
  std::vector<std::string> task_names;
  std::vector<std::vector<std::string>> tags;
  std::vector<std::vector<std::vector<double>>> scores;  // task -> doc -> tag

  friend bool operator==(const Predictions&, const Predictions&) = default;
};

inline nn::Matrix embeddings_to_matrix(const DocumentEmbeddings& emb, std::span<const std::size_t> rows) {
  nn::Matrix x(emb.dim, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t c = 0; c < rows.size(); ++c) {
    const auto r = emb.row(rows[c]);
    for (std::uint32_t k = 0; k < emb.dim; ++k) x(k, static_cast<Eigen::Index>(c)) = r[k];
  }
  return x;
}

inline Predictions predict(const DocumentEmbeddings& emb, std::span<const std::size_t> rows, const TaggerModel& m) {
  Predictions out;
  for (const auto& v : m.vocabularies) {
    out.task_names.push_back(v.name);
    out.tags.push_back(v.tags);
  }
  out.scores.resize(m.num_tasks());
  constexpr std::size_t kChunk = 4096;
  for (std::size_t start = 0; start < rows.size(); start += kChunk) {
    const auto chunk = rows.subspan(start, std::min(kChunk, rows.size() - start));
    const auto pass = detail::tagger_forward(m, embeddings_to_matrix(emb, chunk), nullptr);
    for (std::size_t c = 0; c < chunk.size(); ++c) {
      out.doc_ids.push_back(emb.doc_ids[chunk[c]]);
      for (std::size_t i = 0; i < m.num_tasks(); ++i) {
        const auto col = pass.probs[i].col(static_cast<Eigen::Index>(c));
        out.scores[i].emplace_back(col.data(), col.data() + col.size());
      }
    }
  }
  return out;
}

inline Predictions predict(const DocumentEmbeddings& emb, const TaggerModel& m) {
  std::vector<std::size_t> rows(emb.size());
  std::iota(rows.begin(), rows.end(), 0);
  return predict(emb, rows, m);
}

namespace detail {

inline std::string shortest_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace detail

// CSV `doc_id,task,tag,score`; scores use the shortest round-trip form.
inline void write_predictions_csv(std::ostream& out, const Predictions& p) {
  out << "doc_id,task,tag,score\n";
  for (std::size_t d = 0; d < p.doc_ids.size(); ++d) {
    for (std::size_t i = 0; i < p.task_names.size(); ++i) {
      for (std::size_t k = 0; k < p.tags[i].size(); ++k) {
        out << p.doc_ids[d] << ',' << p.task_names[i] << ',' << p.tags[i][k] << ','
            << detail::shortest_double(p.scores[i][d][k]) << '\n';
      }
    }
  }
}

inline Predictions read_predictions_csv(std::istream& in) {
  Predictions p;
  std::string line;
  if (!std::getline(in, line) || line != "doc_id,task,tag,score") throw Error("predictions file: bad header");
  std::unordered_map<std::string, std::size_t> doc_row, task_index;
  std::vector<std::unordered_map<std::string, std::size_t>> tag_index;
  std::vector<std::vector<std::pair<std::size_t, std::pair<std::size_t, double>>>> cells;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    const auto c3 = line.rfind(',');
    if (c1 == std::string::npos || c2 == std::string::npos || c3 <= c2) {
      throw Error("predictions file: malformed line " + std::to_string(line_no));
    }
    const std::string doc = line.substr(0, c1);
    const std::string task = line.substr(c1 + 1, c2 - c1 - 1);
    const std::string tag = line.substr(c2 + 1, c3 - c2 - 1);
    double score = 0.0;
    const auto r = std::from_chars(line.data() + c3 + 1, line.data() + line.size(), score);
    if (r.ec != std::errc{}) throw Error("predictions file: bad score on line " + std::to_string(line_no));
    auto [dit, new_doc] = doc_row.emplace(doc, p.doc_ids.size());
    if (new_doc) p.doc_ids.push_back(doc);
    auto [tit, new_task] = task_index.emplace(task, p.task_names.size());
    if (new_task) {
      p.task_names.push_back(task);
      p.tags.emplace_back();
      tag_index.emplace_back();
      cells.emplace_back();
    }
    auto& ti = tag_index[tit->second];
    auto [kit, new_tag] = ti.emplace(tag, p.tags[tit->second].size());
    if (new_tag) p.tags[tit->second].push_back(tag);
    cells[tit->second].push_back({dit->second, {kit->second, score}});
  }
  p.scores.resize(p.task_names.size());
  for (std::size_t i = 0; i < p.task_names.size(); ++i) {
    p.scores[i].assign(p.doc_ids.size(), std::vector<double>(p.tags[i].size(), 0.0));
    for (const auto& [d, ks] : cells[i]) p.scores[i][d][ks.first] = ks.second;
  }
  return p;
}

// Scores of the documents annotated for each task, ready for evaluate_tasks.
inline std::vector<TaskScores> task_scores(const Predictions& p, const TagDataset& data,
                                           std::span<const std::size_t> data_rows) {
  if (p.doc_ids.size() != data_rows.size()) throw Error("task_scores: row count mismatch");
  std::vector<TaskScores> out;
  for (std::size_t i = 0; i < data.tasks.size(); ++i) {
    const auto& t = data.tasks[i];
    TaskScores ts{t.vocabulary.name, t.vocabulary.tags, {}, {}, {}};
    for (std::size_t r = 0; r < data_rows.size(); ++r) {
      const auto d = data_rows[r];
      if (!t.present[d]) continue;
      ts.doc_ids.push_back(data.doc_ids[d]);
      ts.scores.push_back(p.scores[i][r]);
      ts.labels.emplace_back(t.labels.begin() + static_cast<std::ptrdiff_t>(d * t.num_tags()),
                             t.labels.begin() + static_cast<std::ptrdiff_t>((d + 1) * t.num_tags()));
    }
    out.push_back(std::move(ts));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

struct TaggerTrainResult {
  TaggerModel model;                 // parameters from the best validation epoch
  std::vector<double> val_map;       // overall validation mAP per epoch
  std::vector<double> train_loss;    // mean batch loss per epoch
  std::size_t best_epoch = 0;        // 1-based
  std::size_t epochs_run = 0;
};

// Requires emb.doc_ids == data.doc_ids. Documents without any annotation are
// left out of training batches.
inline TaggerTrainResult train_tagger(const DocumentEmbeddings& emb, const TagDataset& data,
                                      std::span<const std::size_t> train_rows, std::span<const std::size_t> val_rows,
                                      const TaggerConfig& cfg) {
  cfg.validate();
  if (emb.doc_ids != data.doc_ids) throw Error("train_tagger: embeddings and tag dataset are not aligned");
  std::vector<std::size_t> train;
  for (auto r : train_rows) {
    if (data.annotated(r)) train.push_back(r);
  }
  if (train.empty()) throw Error("train_tagger: no annotated training documents");
  if (val_rows.empty()) throw Error("train_tagger: empty validation split");

  TaggerTrainResult result;
  TaggerModel model = init_tagger(emb.dim, data, cfg);
  auto params = model.parameters();
  nn::Adam adam(params, {cfg.learning_rate});
  Rng rng(derive_seed(cfg.seed, "tagger-train"));
  const nn::Matrix val_x = embeddings_to_matrix(emb, val_rows);

  std::vector<nn::Matrix> labels(data.tasks.size());
  std::vector<std::vector<std::uint8_t>> present(data.tasks.size());
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = train.size(); i > 1; --i) std::swap(train[i - 1], train[uniform_index(rng, i)]);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < train.size(); start += cfg.batch_size) {
      const auto rows = std::span<const std::size_t>(train).subspan(start, std::min(cfg.batch_size, train.size() - start));
      for (std::size_t i = 0; i < data.tasks.size(); ++i) {
        const auto& t = data.tasks[i];
        labels[i].resize(static_cast<Eigen::Index>(t.num_tags()), static_cast<Eigen::Index>(rows.size()));
        present[i].resize(rows.size());
        for (std::size_t c = 0; c < rows.size(); ++c) {
          present[i][c] = t.present[rows[c]];
          for (std::size_t k = 0; k < t.num_tags(); ++k) {
            labels[i](static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) = t.label(rows[c], k);
          }
        }
      }
      auto g = tagger_batch_gradient(model, embeddings_to_matrix(emb, rows), labels, present, &rng);
      if (!std::isfinite(g.loss)) {
        throw Error("train_tagger: loss is not finite in epoch " + std::to_string(epoch));
      }
      adam.step(params, g.gradients);
      loss_sum += g.loss;
      ++batches;
    }
    result.train_loss.push_back(loss_sum / static_cast<double>(std::max<std::size_t>(1, batches)));

    const auto pass = detail::tagger_forward(model, val_x, nullptr);
    Predictions val;
    val.scores.resize(model.num_tasks());
    for (std::size_t c = 0; c < val_rows.size(); ++c) {
      val.doc_ids.push_back(data.doc_ids[val_rows[c]]);
      for (std::size_t i = 0; i < model.num_tasks(); ++i) {
        const auto col = pass.probs[i].col(static_cast<Eigen::Index>(c));
        val.scores[i].emplace_back(col.data(), col.data() + col.size());
      }
    }
    // skipped tags are reported once, by the final evaluation
    const auto report = evaluate_tasks(task_scores(val, data, val_rows), epoch, /*quiet=*/true);
    result.val_map.push_back(report.overall.value_or(0.0));
    const auto decision = early_stop(result.val_map, cfg.patience);
    if (decision.best_epoch == epoch) result.model = model;
    result.best_epoch = decision.best_epoch;
    result.epochs_run = epoch;
    if (decision.stop) break;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Model file: magic "LYRT" | u32 version | f64 dropout | u32 n_shared |
// shared layers (weight, bias) | u32 n_tasks | per task: u16 name, u32 n_tags,
// u16 tag strings, f64 loss weight, head weight, head bias. Matrices are
// u32 rows, u32 cols and row-major f32 values.

inline constexpr std::uint32_t kTaggerFileVersion = 1;

inline void write_tagger(std::ostream& out, const TaggerModel& m) {
  BinaryWriter w(out);
  w.magic("LYRT");
  w.put<std::uint32_t>(kTaggerFileVersion);
  w.put<double>(m.dropout);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.shared.size()));
  for (const auto& layer : m.shared) {
    nn::write_matrix(w, layer.weight);
    nn::write_matrix(w, layer.bias);
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.heads.size()));
  for (std::size_t i = 0; i < m.heads.size(); ++i) {
    w.short_string(m.vocabularies[i].name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.vocabularies[i].tags.size()));
    for (const auto& t : m.vocabularies[i].tags) w.short_string(t);
    w.put<double>(m.loss_weights[i]);
    nn::write_matrix(w, m.heads[i].weight);
    nn::write_matrix(w, m.heads[i].bias);
  }
  if (!w.good()) throw Error("failed writing tagger model");
}

inline TaggerModel read_tagger(std::istream& in) {
  BinaryReader r(in);
  r.expect_magic("LYRT");
  const auto at = r.offset();
  if (const auto v = r.get<std::uint32_t>(); v != kTaggerFileVersion) {
    throw FormatError("unsupported tagger model version " + std::to_string(v), at);
  }
  TaggerModel m;
  m.dropout = r.get<double>();
  const auto n_shared = r.get<std::uint32_t>();
  for (std::uint32_t l = 0; l < n_shared; ++l) {
    nn::Dense layer;
    layer.weight = nn::read_matrix(r);
    layer.bias = nn::read_matrix(r);
    m.shared.push_back(std::move(layer));
  }
  const auto n_tasks = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_tasks; ++i) {
    TagVocabulary v;
    v.name = r.short_string();
    const auto n_tags = r.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < n_tags; ++k) v.tags.push_back(r.short_string());
    m.vocabularies.push_back(std::move(v));
    m.loss_weights.push_back(r.get<double>());
    nn::Dense head;
    head.weight = nn::read_matrix(r);
    head.bias = nn::read_matrix(r);
    if (static_cast<std::size_t>(head.out()) != n_tags) throw FormatError("tagger head width mismatch", r.offset());
    m.heads.push_back(std::move(head));
  }
  return m;
}

inline void save_tagger(const std::string& path, const TaggerModel& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path);
  write_tagger(out, m);
}

inline TaggerModel load_tagger(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open tagger model: " + path);
  return read_tagger(in);
}

}  // namespace lyricemb
