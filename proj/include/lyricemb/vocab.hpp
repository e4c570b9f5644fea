#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lyricemb/common.hpp"
#include "lyricemb/corpus_io.hpp"

namespace lyricemb {

using TokenId = std::uint32_t;

// Token <-> id map with corpus statistics. Ids are dense and ordered by
// descending count, ties broken lexicographically, so any two vocabularies
// built from the same multiset of documents are identical.
class Vocabulary {
 public:
  struct Entry {
    std::string token;
    std::uint64_t count = 0;
    std::uint64_t doc_freq = 0;
  };

  Vocabulary() = default;

  Vocabulary(std::vector<Entry> entries, std::uint64_t total_docs)
      : entries_(std::move(entries)), total_docs_(total_docs) {
    index_.reserve(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (!index_.emplace(entries_[i].token, static_cast<TokenId>(i)).second) {
        throw Error("duplicate token in vocabulary: " + entries_[i].token);
      }
    }
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::uint64_t total_docs() const { return total_docs_; }

  const std::string& token(TokenId id) const { return entries_.at(id).token; }
  std::uint64_t count(TokenId id) const { return entries_.at(id).count; }
  std::uint64_t doc_freq(TokenId id) const { return entries_.at(id).doc_freq; }
  const std::vector<Entry>& entries() const { return entries_; }

  std::optional<TokenId> find(std::string_view token) const {
    const auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  bool contains(std::string_view token) const { return find(token).has_value(); }

  std::uint64_t total_count() const {
    std::uint64_t n = 0;
    for (const auto& e : entries_) n += e.count;
    return n;
  }

  // Maps tokens to ids, dropping out-of-vocabulary tokens.
  std::vector<TokenId> encode(std::span<const std::string> tokens) const {
    std::vector<TokenId> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) {
      if (auto id = find(t)) ids.push_back(*id);
    }
    return ids;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    if (a.total_docs_ != b.total_docs_ || a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
      const auto& x = a.entries_[i];
      const auto& y = b.entries_[i];
      if (x.token != y.token || x.count != y.count || x.doc_freq != y.doc_freq) return false;
    }
    return true;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, TokenId> index_;
  std::uint64_t total_docs_ = 0;
};

namespace detail {

struct TokenCounts {
  std::uint64_t count = 0;
  std::uint64_t doc_freq = 0;
};

using CountMap = std::unordered_map<std::string, TokenCounts>;

inline void count_documents(std::span<const TokenizedDocument> docs, CountMap& counts) {
  std::unordered_set<std::string_view> seen;
  for (const auto& d : docs) {
    seen.clear();
    for (const auto& t : d.tokens) {
      auto& c = counts[t];
      ++c.count;
      if (seen.insert(t).second) ++c.doc_freq;
    }
  }
}

inline void sort_entries(std::vector<Vocabulary::Entry>& entries) {
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.token < b.token;
  });
}

}  // namespace detail

inline constexpr std::uint64_t kDefaultMinCount = 5;

// Keeps tokens with corpus count >= min_count. With threads > 1 the corpus is
// sharded and the partial counts merged; the result is identical.
inline Vocabulary build_vocab(std::span<const TokenizedDocument> docs,
                              std::uint64_t min_count = kDefaultMinCount,
                              unsigned threads = 1) {
  if (min_count < 1) throw Error("build_vocab: min_count must be >= 1");
  if (docs.empty()) warn("build_vocab: empty corpus, vocabulary is empty");

  detail::CountMap merged;
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(docs.size() ? docs.size() : 1)));
  if (threads == 1) {
    detail::count_documents(docs, merged);
  } else {
    std::vector<detail::CountMap> partial(threads);
    std::vector<std::thread> workers;
    const std::size_t chunk = (docs.size() + threads - 1) / threads;
    for (unsigned w = 0; w < threads; ++w) {
      const std::size_t lo = std::min(docs.size(), w * chunk);
      const std::size_t hi = std::min(docs.size(), lo + chunk);
      workers.emplace_back([&, w, lo, hi] { detail::count_documents(docs.subspan(lo, hi - lo), partial[w]); });
    }
    for (auto& t : workers) t.join();
    for (auto& p : partial) {
      for (auto& [tok, c] : p) {
        auto& m = merged[tok];
        m.count += c.count;
        m.doc_freq += c.doc_freq;
      }
    }
  }

  std::vector<Vocabulary::Entry> entries;
  for (auto& [tok, c] : merged) {
    if (c.count >= min_count) entries.push_back({tok, c.count, c.doc_freq});
  }
  detail::sort_entries(entries);
  return Vocabulary(std::move(entries), docs.size());
}

inline constexpr double kDefaultMaxDfRatio = 0.9;

// Removes tokens appearing in at least `max_df_ratio` of the documents.
inline Vocabulary prune_high_df(const Vocabulary& vocab, double max_df_ratio = kDefaultMaxDfRatio) {
  if (!(max_df_ratio > 0.0 && max_df_ratio <= 1.0)) {
    throw Error("prune_high_df: max_df_ratio must lie in (0, 1]");
  }
  std::vector<Vocabulary::Entry> kept;
  const auto n = static_cast<double>(vocab.total_docs());
  for (const auto& e : vocab.entries()) {
    const double ratio = n > 0 ? static_cast<double>(e.doc_freq) / n : 1.0;
    if (ratio < max_df_ratio) kept.push_back(e);
  }
  if (kept.empty() && !vocab.empty()) warn("prune_high_df: every token removed, vocabulary is empty");
  return Vocabulary(std::move(kept), vocab.total_docs());
}

// The d highest-count tokens, ties broken lexicographically.
inline Vocabulary top_k(const Vocabulary& vocab, std::size_t d) {
  if (d < 1) throw Error("top_k: d must be >= 1");
  auto entries = vocab.entries();
  if (d > entries.size()) {
    warn("top_k: requested " + std::to_string(d) + " tokens but vocabulary holds " +
         std::to_string(entries.size()));
  }
  detail::sort_entries(entries);
  if (entries.size() > d) entries.resize(d);
  return Vocabulary(std::move(entries), vocab.total_docs());
}

// Text format: "#docs <N>" header, then "token<TAB>count<TAB>doc_freq" in id order.
inline void save_vocab(std::ostream& out, const Vocabulary& vocab) {
  out << "#docs " << vocab.total_docs() << '\n';
  for (const auto& e : vocab.entries()) out << e.token << '\t' << e.count << '\t' << e.doc_freq << '\n';
}

inline Vocabulary load_vocab(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("#docs ", 0) != 0) {
    throw Error("vocabulary file: missing '#docs' header");
  }
  const std::uint64_t total_docs = std::stoull(line.substr(6));
  std::vector<Vocabulary::Entry> entries;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    Vocabulary::Entry e;
    std::string count, df;
    if (!std::getline(fields, e.token, '\t') || !std::getline(fields, count, '\t') ||
        !std::getline(fields, df, '\t')) {
      throw Error("vocabulary file: malformed line " + std::to_string(line_no));
    }
    e.count = std::stoull(count);
    e.doc_freq = std::stoull(df);
    entries.push_back(std::move(e));
  }
  return Vocabulary(std::move(entries), total_docs);
}

}  // namespace lyricemb
