#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "lyricemb/common.hpp"

namespace lyricemb {

struct RawDocument {
  std::string doc_id;
  std::string artist_id;
  std::optional<std::string> album_id;
  std::string language;
  std::string text;
};

struct TokenizedDocument {
  std::string doc_id;
  std::string artist_id;
  std::optional<std::string> album_id;
  std::vector<std::string> tokens;

  // Documents that tokenize to nothing are kept so tag datasets stay aligned.
  bool empty() const { return tokens.empty(); }
};

struct LineError {
  std::size_t line = 0;  // 1-based
  std::string message;
};

// Streams RawDocuments from a JSON-lines file. Malformed lines are recorded
// and skipped; reading continues with the next line.
class CorpusReader {
 public:
  explicit CorpusReader(const std::string& path) : path_(path), in_(path) {
    if (!in_) throw Error("cannot open corpus file: " + path);
  }

  std::optional<RawDocument> next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      if (auto doc = parse_line(line)) return doc;
    }
    if (in_.bad()) throw Error("read failure in corpus file: " + path_);
    return std::nullopt;
  }

  const std::vector<LineError>& errors() const { return errors_; }

 private:
  std::optional<RawDocument> parse_line(const std::string& line) {
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      errors_.push_back({line_no_, "not a JSON object"});
      return std::nullopt;
    }
    RawDocument doc;
    const auto required = [&](const char* key, std::string& dst) {
      const auto it = j.find(key);
      if (it == j.end() || !it->is_string()) {
        errors_.push_back({line_no_, std::string("missing or non-string field '") + key + "'"});
        return false;
      }
      dst = it->get<std::string>();
      return true;
    };
    if (!required("doc_id", doc.doc_id) || !required("artist_id", doc.artist_id) ||
        !required("language", doc.language) || !required("text", doc.text)) {
      return std::nullopt;
    }
    if (doc.doc_id.empty()) {
      errors_.push_back({line_no_, "empty doc_id"});
      return std::nullopt;
    }
    if (const auto it = j.find("album_id"); it != j.end() && !it->is_null()) {
      if (!it->is_string()) {
        errors_.push_back({line_no_, "field 'album_id' must be a string or null"});
        return std::nullopt;
      }
      doc.album_id = it->get<std::string>();
    }
    if (!seen_.insert(doc.doc_id).second) {
      errors_.push_back({line_no_, "duplicate doc_id '" + doc.doc_id + "'"});
      return std::nullopt;
    }
    return doc;
  }

  std::string path_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
  std::vector<LineError> errors_;
  std::unordered_set<std::string> seen_;
};

struct LoadedCorpus {
  std::vector<RawDocument> documents;
  std::vector<LineError> errors;
};

inline LoadedCorpus load_corpus(const std::string& path) {
  CorpusReader reader(path);
  LoadedCorpus out;
  while (auto doc = reader.next()) out.documents.push_back(std::move(*doc));
  out.errors = reader.errors();
  return out;
}

inline void write_corpus_line(std::ostream& out, const RawDocument& doc) {
  nlohmann::ordered_json j;
  j["doc_id"] = doc.doc_id;
  j["artist_id"] = doc.artist_id;
  j["album_id"] = doc.album_id ? nlohmann::ordered_json(*doc.album_id) : nlohmann::ordered_json(nullptr);
  j["language"] = doc.language;
  j["text"] = doc.text;
  out << j.dump() << '\n';
}

// ---------------------------------------------------------------------------
// Tokenization

struct TokenizerOptions {
  std::size_t min_token_len = 2;
  std::size_t max_token_len = 15;
  bool fold_accents = true;
};

namespace detail {

// ASCII replacement for U+00C0..U+017F, lower case; "" means "not a letter".
inline std::string_view latin_fold(char32_t cp) {
  static constexpr std::array<std::string_view, 64> kLatin1 = {
      "a", "a", "a", "a", "a", "a", "ae", "c", "e", "e", "e", "e", "i", "i", "i", "i",
      "d", "n", "o", "o", "o", "o", "o", "",  "o", "u", "u", "u", "u", "y", "th", "ss",
      "a", "a", "a", "a", "a", "a", "ae", "c", "e", "e", "e", "e", "i", "i", "i", "i",
      "d", "n", "o", "o", "o", "o", "o", "",  "o", "u", "u", "u", "u", "y", "th", "y"};
  static constexpr std::array<std::string_view, 128> kExtendedA = {
      "a", "a", "a", "a", "a", "a",                      // 0100
      "c", "c", "c", "c", "c", "c", "c", "c",            // 0106
      "d", "d", "d", "d",                                // 010E
      "e", "e", "e", "e", "e", "e", "e", "e", "e", "e",  // 0112
      "g", "g", "g", "g", "g", "g", "g", "g",            // 011C
      "h", "h", "h", "h",                                // 0124
      "i", "i", "i", "i", "i", "i", "i", "i", "i", "i",  // 0128
      "ij", "ij",                                        // 0132
      "j", "j",                                          // 0134
      "k", "k", "k",                                     // 0136
      "l", "l", "l", "l", "l", "l", "l", "l", "l", "l",  // 0139
      "n", "n", "n", "n", "n", "n", "n", "n", "n",       // 0143
      "o", "o", "o", "o", "o", "o",                      // 014C
      "oe", "oe",                                        // 0152
      "r", "r", "r", "r", "r", "r",                      // 0154
      "s", "s", "s", "s", "s", "s", "s", "s",            // 015A
      "t", "t", "t", "t", "t", "t",                      // 0162
      "u", "u", "u", "u", "u", "u", "u", "u", "u", "u", "u", "u",  // 0168
      "w", "w",                                          // 0174
      "y", "y", "y",                                     // 0176
      "z", "z", "z", "z", "z", "z",                      // 0179
      "s"};                                              // 017F
  if (cp >= 0xC0 && cp <= 0xFF) return kLatin1[cp - 0xC0];
  if (cp >= 0x100 && cp <= 0x17F) return kExtendedA[cp - 0x100];
  return {};
}

// Decodes one code point; invalid sequences yield U+FFFD and advance by one.
inline char32_t next_code_point(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  const auto cont = [&](std::size_t k) -> int {
    if (i + k >= s.size()) return -1;
    const auto b = static_cast<unsigned char>(s[i + k]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  int len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++i;
    return 0xFFFD;
  }
  for (int k = 1; k < len; ++k) {
    const int c = cont(static_cast<std::size_t>(k));
    if (c < 0) {
      ++i;
      return 0xFFFD;
    }
    cp = (cp << 6) | static_cast<char32_t>(c);
  }
  i += static_cast<std::size_t>(len);
  return cp;
}

inline bool is_combining_mark(char32_t cp) { return cp >= 0x300 && cp <= 0x36F; }

}  // namespace detail

// Lowercases, folds accents to ASCII, splits on anything that is not a
// letter and keeps tokens whose length lies in [min_token_len, max_token_len].
inline std::vector<std::string> tokenize(std::string_view text,
                                         const TokenizerOptions& opts = {}) {
  std::vector<std::string> tokens;
  std::string current;
  const auto flush = [&] {
    if (current.size() >= opts.min_token_len && current.size() <= opts.max_token_len) {
      tokens.push_back(current);
    }
    current.clear();
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const char32_t cp = detail::next_code_point(text, i);
    if (cp < 0x80) {
      const auto c = static_cast<char>(cp);
      if (c >= 'a' && c <= 'z') {
        current.push_back(c);
      } else if (c >= 'A' && c <= 'Z') {
        current.push_back(static_cast<char>(c - 'A' + 'a'));
      } else {
        flush();
      }
    } else if (opts.fold_accents && detail::is_combining_mark(cp)) {
      // decomposed accents: drop the mark, keep the word together
    } else if (const auto folded = opts.fold_accents ? detail::latin_fold(cp) : std::string_view{};
               !folded.empty()) {
      current.append(folded);
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

inline constexpr std::size_t kMaxDocumentTokens = 512;

inline std::vector<std::string> truncate_tokens(std::vector<std::string> tokens,
                                                std::size_t max_len = kMaxDocumentTokens) {
  if (max_len == 0) throw Error("truncate_tokens: max_len must be >= 1");
  if (tokens.size() > max_len) tokens.resize(max_len);
  return tokens;
}

// ---------------------------------------------------------------------------
// Ingestion

struct IngestOptions {
  TokenizerOptions tokenizer;
  std::string language = "en";  // empty accepts every language
  std::size_t max_tokens = kMaxDocumentTokens;
};

struct IngestStats {
  std::size_t accepted = 0;
  std::size_t skipped_language = 0;
  std::size_t empty_after_tokenize = 0;
  std::size_t truncated = 0;
};

struct IngestedCorpus {
  std::vector<TokenizedDocument> documents;
  IngestStats stats;
};

inline TokenizedDocument tokenize_document(const RawDocument& raw, const IngestOptions& opts,
                                           bool* was_truncated = nullptr) {
  TokenizedDocument doc{raw.doc_id, raw.artist_id, raw.album_id, tokenize(raw.text, opts.tokenizer)};
  if (was_truncated) *was_truncated = doc.tokens.size() > opts.max_tokens;
  doc.tokens = truncate_tokens(std::move(doc.tokens), opts.max_tokens);
  return doc;
}

inline IngestedCorpus ingest(std::span<const RawDocument> raw, const IngestOptions& opts = {}) {
  IngestedCorpus out;
  for (const auto& r : raw) {
    if (!opts.language.empty() && r.language != opts.language) {
      ++out.stats.skipped_language;
      continue;
    }
    bool truncated = false;
    auto doc = tokenize_document(r, opts, &truncated);
    if (truncated) ++out.stats.truncated;
    if (doc.empty()) ++out.stats.empty_after_tokenize;
    ++out.stats.accepted;
    out.documents.push_back(std::move(doc));
  }
  return out;
}

struct CorpusStats {
  std::size_t documents = 0;
  std::uint64_t tokens = 0;
  std::size_t max_sequence_length = 0;
  std::size_t empty_documents = 0;
};

inline CorpusStats corpus_stats(std::span<const TokenizedDocument> docs) {
  CorpusStats s;
  s.documents = docs.size();
  for (const auto& d : docs) {
    s.tokens += d.tokens.size();
    s.max_sequence_length = std::max(s.max_sequence_length, d.tokens.size());
    if (d.empty()) ++s.empty_documents;
  }
  return s;
}

}  // namespace lyricemb
