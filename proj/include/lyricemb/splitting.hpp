#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lyricemb/common.hpp"
#include "lyricemb/rng.hpp"

namespace lyricemb {

enum class Split : std::uint8_t { kTrain = 0, kValidation = 1, kTest = 2 };

inline constexpr std::array<Split, 3> kSplits{Split::kTrain, Split::kValidation, Split::kTest};

inline const char* to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "validation") return Split::kValidation;
  if (s == "test") return Split::kTest;
  throw Error("unknown split '" + s + "'");
}

struct SplitItem {
  std::string doc_id;
  std::optional<std::string> album_id;
  std::vector<std::size_t> labels;  // distinct label ids of the document
};

struct DocGroup {
  std::optional<std::string> album_id;
  std::vector<std::size_t> members;                 // indices into the item list
  std::vector<std::pair<std::size_t, std::size_t>> label_counts;  // (label, docs carrying it), label ascending

  std::size_t size() const { return members.size(); }
};

// One group per album in order of first appearance; documents without an
// album become singleton groups.
inline std::vector<DocGroup> group_by_album(std::span<const SplitItem> items) {
  std::vector<DocGroup> groups;
  std::unordered_map<std::string, std::size_t> by_album;
  std::vector<std::map<std::size_t, std::size_t>> counts;
  for (std::size_t i = 0; i < items.size(); ++i) {
    std::size_t g;
    if (!items[i].album_id) {
      g = groups.size();
    } else {
      const auto [it, inserted] = by_album.emplace(*items[i].album_id, groups.size());
      g = it->second;
    }
    if (g == groups.size()) {
      groups.push_back({items[i].album_id, {}, {}});
      counts.emplace_back();
    }
    groups[g].members.push_back(i);
    for (auto l : items[i].labels) ++counts[g][l];
  }
  for (std::size_t g = 0; g < groups.size(); ++g) groups[g].label_counts.assign(counts[g].begin(), counts[g].end());
  return groups;
}

struct SplitAssignment {
  std::vector<std::string> doc_ids;
  std::vector<Split> splits;  // aligned with doc_ids
  std::array<double, 3> ratios{};
  std::map<std::size_t, std::array<double, 3>> label_proportions;  // achieved, per label

  std::vector<std::size_t> rows(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < splits.size(); ++i) {
      if (splits[i] == s) out.push_back(i);
    }
    return out;
  }

  std::size_t count(Split s) const {
    std::size_t n = 0;
    for (auto x : splits) n += x == s;
    return n;
  }
};

inline constexpr std::array<double, 3> kDefaultSplitRatios{0.8, 0.1, 0.1};
inline constexpr double kProportionTolerance = 0.1;
inline constexpr std::size_t kProportionCheckMinExamples = 50;

// Iterative stratification over groups. Repeatedly takes the label with the
// fewest unassigned examples and sends each of its unassigned groups to the
// split with the greatest remaining demand for that label, then the greatest
// remaining capacity, then a seeded random choice. Each label visits its
// groups in a seeded order. Groups without labels go last, by remaining
// capacity.
inline SplitAssignment iterative_group_split(std::span<const SplitItem> items, std::span<const DocGroup> groups,
                                             std::array<double, 3> ratios, std::uint64_t seed) {
  if (groups.empty()) throw Error("iterative_group_split: no groups");
  double ratio_sum = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0)) throw Error("iterative_group_split: ratios must be positive");
    ratio_sum += r;
  }
  if (std::abs(ratio_sum - 1.0) > 1e-9) throw Error("iterative_group_split: ratios must sum to 1");

  Rng rng(derive_seed(seed, "split"));
  std::size_t total_docs = 0;
  std::map<std::size_t, std::size_t> label_total;
  std::map<std::size_t, std::vector<std::size_t>> groups_with;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    total_docs += groups[g].size();
    for (const auto& [l, c] : groups[g].label_counts) {
      label_total[l] += c;
      groups_with[l].push_back(g);
    }
  }

  std::array<double, 3> capacity{};
  for (std::size_t s = 0; s < 3; ++s) capacity[s] = ratios[s] * static_cast<double>(total_docs);
  std::map<std::size_t, std::array<double, 3>> demand;
  std::map<std::size_t, std::size_t> remaining = label_total;
  for (const auto& [l, c] : label_total) {
    for (std::size_t s = 0; s < 3; ++s) demand[l][s] = ratios[s] * static_cast<double>(c);
  }

  std::vector<int> group_split(groups.size(), -1);
  const auto place = [&](std::size_t g, std::size_t s) {
    group_split[g] = static_cast<int>(s);
    capacity[s] -= static_cast<double>(groups[g].size());
    for (const auto& [l, c] : groups[g].label_counts) {
      demand[l][s] -= static_cast<double>(c);
      remaining[l] -= c;
    }
  };
  const auto pick = [&](const std::array<double, 3>* label_demand) {
    std::array<std::size_t, 3> best{};
    std::size_t n_best = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      if (n_best == 0) {
        best[n_best++] = s;
        continue;
      }
      const std::size_t b = best[0];
      int cmp = 0;
      if (label_demand && (*label_demand)[s] != (*label_demand)[b]) {
        cmp = (*label_demand)[s] > (*label_demand)[b] ? 1 : -1;
      } else if (capacity[s] != capacity[b]) {
        cmp = capacity[s] > capacity[b] ? 1 : -1;
      }
      if (cmp > 0) n_best = 0;
      if (cmp >= 0) best[n_best++] = s;
    }
    return n_best == 1 ? best[0] : best[uniform_index(rng, n_best)];
  };

  for (auto& [l, gs] : groups_with) shuffle(gs, rng);

  while (true) {
    std::optional<std::size_t> label;
    for (const auto& [l, r] : remaining) {
      if (r > 0 && (!label || r < remaining[*label])) label = l;
    }
    if (!label) break;
    for (auto g : groups_with[*label]) {
      if (group_split[g] >= 0) continue;
      place(g, pick(&demand[*label]));
    }
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (group_split[g] < 0) place(g, pick(nullptr));
  }

  SplitAssignment out;
  out.ratios = ratios;
  out.doc_ids.resize(items.size());
  out.splits.assign(items.size(), Split::kTrain);
  std::vector<std::uint8_t> seen(items.size(), 0);
  std::map<std::size_t, std::array<std::size_t, 3>> achieved;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto s = static_cast<std::size_t>(group_split[g]);
    for (auto m : groups[g].members) {
      if (m >= items.size() || seen[m]) throw Error("iterative_group_split: groups do not partition the items");
      seen[m] = 1;
      out.doc_ids[m] = items[m].doc_id;
      out.splits[m] = kSplits[s];
    }
    for (const auto& [l, c] : groups[g].label_counts) achieved[l][s] += c;
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw Error("iterative_group_split: some items belong to no group");
  }

  bool off_target = false;
  for (std::size_t s = 0; s < 3; ++s) {
    const double p = static_cast<double>(out.count(kSplits[s])) / static_cast<double>(items.size());
    off_target |= std::abs(p - ratios[s]) > kProportionTolerance;
  }
  for (const auto& [l, counts] : achieved) {
    auto& props = out.label_proportions[l];
    for (std::size_t s = 0; s < 3; ++s) {
      props[s] = static_cast<double>(counts[s]) / static_cast<double>(label_total[l]);
      if (label_total[l] >= kProportionCheckMinExamples) off_target |= std::abs(props[s] - ratios[s]) > kProportionTolerance;
    }
  }
  if (off_target) warn("iterative_group_split: achieved split proportions deviate from the targets by more than 0.1");
  return out;
}

inline SplitAssignment iterative_group_split(std::span<const SplitItem> items,
                                             std::array<double, 3> ratios = kDefaultSplitRatios,
                                             std::uint64_t seed = 0) {
  const auto groups = group_by_album(items);
  return iterative_group_split(items, groups, ratios, seed);
}

// CSV `doc_id,split`.
inline void write_split_csv(std::ostream& out, const SplitAssignment& a) {
  out << "doc_id,split\n";
  for (std::size_t i = 0; i < a.doc_ids.size(); ++i) out << a.doc_ids[i] << ',' << to_string(a.splits[i]) << '\n';
}

// Reads a split file into doc_id -> split.
inline std::unordered_map<std::string, Split> read_split_csv(std::istream& in) {
  std::unordered_map<std::string, Split> out;
  std::string line;
  if (!std::getline(in, line) || line != "doc_id,split") throw Error("split file: bad header");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw Error("split file: malformed line " + std::to_string(line_no));
    if (!out.emplace(line.substr(0, comma), parse_split(line.substr(comma + 1))).second) {
      throw Error("split file: duplicate doc_id on line " + std::to_string(line_no));
    }
  }
  return out;
}

}  // namespace lyricemb
