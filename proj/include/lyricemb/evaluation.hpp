#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lyricemb/common.hpp"

namespace lyricemb {

// Non-interpolated average precision. Items are ranked by descending score;
// equal scores are ordered by ascending doc id (or by position when no ids are
// given). Returns nullopt when there is no positive label.
inline std::optional<double> average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels,
                                               std::span<const std::string> doc_ids = {}) {
  if (scores.size() != labels.size()) throw Error("average_precision: scores and labels differ in length");
  if (!doc_ids.empty() && doc_ids.size() != scores.size()) throw Error("average_precision: doc id count mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    if (!doc_ids.empty() && doc_ids[a] != doc_ids[b]) return doc_ids[a] < doc_ids[b];
    return a < b;
  });
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  if (hits == 0) return std::nullopt;
  return sum / static_cast<double>(hits);
}

// Tag-count weighted mean of per-vocabulary mAPs.
inline double overall_map(std::span<const double> per_vocab_map, std::span<const std::size_t> tag_counts) {
  if (per_vocab_map.empty()) throw Error("overall_map: no vocabularies");
  if (per_vocab_map.size() != tag_counts.size()) throw Error("overall_map: length mismatch");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < per_vocab_map.size(); ++i) {
    if (tag_counts[i] < 1) throw Error("overall_map: tag counts must be >= 1");
    num += static_cast<double>(tag_counts[i]) * per_vocab_map[i];
    den += static_cast<double>(tag_counts[i]);
  }
  return num / den;
}

struct EarlyStopDecision {
  bool stop = false;
  std::size_t best_epoch = 0;  // 1-based; earliest epoch holding the best value
  std::size_t epochs_since_best = 0;
};

inline constexpr std::size_t kDefaultPatience = 10;

// Stop once the best value has gone `patience` epochs without a strict improvement.
inline EarlyStopDecision early_stop(std::span<const double> history, std::size_t patience = kDefaultPatience) {
  if (history.empty()) throw Error("early_stop: empty history");
  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i] > history[best]) best = i;
  }
  EarlyStopDecision d;
  d.best_epoch = best + 1;
  d.epochs_since_best = history.size() - 1 - best;
  d.stop = d.epochs_since_best >= patience;
  return d;
}

// ---------------------------------------------------------------------------
// Reports

// Scores and labels of one tag vocabulary over the documents being evaluated.
struct TaskScores {
  std::string name;
  std::vector<std::string> tags;
  std::vector<std::string> doc_ids;
  std::vector<std::vector<double>> scores;          // docs x tags
  std::vector<std::vector<std::uint8_t>> labels;    // docs x tags
};

struct VocabularyMetrics {
  std::string name;
  std::vector<std::string> tags;
  std::vector<std::optional<double>> tag_ap;  // nullopt: no positives, excluded from the mean
  std::optional<double> map;
  std::size_t documents = 0;
};

struct MetricReport {
  std::vector<VocabularyMetrics> vocabularies;
  std::optional<double> overall;
  std::size_t epoch = 0;
};

// Tags without positives are excluded and, unless `quiet`, reported as a warning.
inline MetricReport evaluate_tasks(std::span<const TaskScores> tasks, std::size_t epoch = 0, bool quiet = false) {
  MetricReport report;
  report.epoch = epoch;
  std::vector<double> maps;
  std::vector<std::size_t> counts;
  for (const auto& t : tasks) {
    VocabularyMetrics vm;
    vm.name = t.name;
    vm.tags = t.tags;
    vm.documents = t.doc_ids.size();
    std::vector<double> column(t.doc_ids.size());
    std::vector<std::uint8_t> truth(t.doc_ids.size());
    double sum = 0.0;
    std::size_t scored = 0;
    for (std::size_t tag = 0; tag < t.tags.size(); ++tag) {
      for (std::size_t d = 0; d < t.doc_ids.size(); ++d) {
        column[d] = t.scores[d][tag];
        truth[d] = t.labels[d][tag];
      }
      auto ap = average_precision(column, truth, t.doc_ids);
      if (ap) {
        sum += *ap;
        ++scored;
      }
      vm.tag_ap.push_back(ap);
    }
    const std::size_t skipped = t.tags.size() - scored;
    if (skipped > 0 && !quiet) {
      warn("evaluation: " + std::to_string(skipped) + " tag(s) of '" + t.name + "' have no positives and are excluded");
    }
    if (scored > 0) {
      vm.map = sum / static_cast<double>(scored);
      maps.push_back(*vm.map);
      counts.push_back(t.tags.size());
    }
    report.vocabularies.push_back(std::move(vm));
  }
  if (!maps.empty()) report.overall = overall_map(maps, counts);
  return report;
}

inline nlohmann::ordered_json report_to_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["overall_map"] = r.overall ? nlohmann::ordered_json(*r.overall) : nlohmann::ordered_json(nullptr);
  auto& vocabs = j["vocabularies"] = nlohmann::ordered_json::array();
  for (const auto& v : r.vocabularies) {
    nlohmann::ordered_json vj;
    vj["name"] = v.name;
    vj["tag_count"] = v.tags.size();
    vj["documents"] = v.documents;
    vj["map"] = v.map ? nlohmann::ordered_json(*v.map) : nlohmann::ordered_json(nullptr);
    auto& tags = vj["tags"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < v.tags.size(); ++i) {
      tags.push_back({{"tag", v.tags[i]},
                      {"ap", v.tag_ap[i] ? nlohmann::ordered_json(*v.tag_ap[i]) : nlohmann::ordered_json(nullptr)}});
    }
    vocabs.push_back(std::move(vj));
  }
  return j;
}

// CSV summary `vocab,tag,ap`; excluded tags have an empty ap cell.
inline void write_report_csv(std::ostream& out, const MetricReport& r) {
  out << "vocab,tag,ap\n";
  const auto old_precision = out.precision(17);
  for (const auto& v : r.vocabularies) {
    for (std::size_t i = 0; i < v.tags.size(); ++i) {
      out << v.name << ',' << v.tags[i] << ',';
      if (v.tag_ap[i]) out << *v.tag_ap[i];
      out << '\n';
    }
  }
  out.precision(old_precision);
}

}  // namespace lyricemb
