#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lyricemb/binary_io.hpp"
#include "lyricemb/common.hpp"
#include "lyricemb/embedding_matrix.hpp"

namespace lyricemb {

// Classic word2vec binary layout:
//   "<vocab_count> <dim>\n"
//   per entry: word bytes, one space, dim x f32 little-endian, optional '\n'

struct Word2vecHeader {
  std::uint64_t count = 0;
  std::uint64_t dim = 0;
};

// Parses the ASCII header line (without the trailing newline).
inline Word2vecHeader parse_word2vec_header(std::string_view line) {
  Word2vecHeader h;
  const auto skip_spaces = [&](std::size_t& i) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
  };
  std::size_t i = 0;
  skip_spaces(i);
  auto r1 = std::from_chars(line.data() + i, line.data() + line.size(), h.count);
  if (r1.ec != std::errc{}) throw FormatError("malformed word2vec header: bad vocabulary count", i);
  i = static_cast<std::size_t>(r1.ptr - line.data());
  const std::size_t before = i;
  skip_spaces(i);
  if (i == before) throw FormatError("malformed word2vec header: expected space", i);
  auto r2 = std::from_chars(line.data() + i, line.data() + line.size(), h.dim);
  if (r2.ec != std::errc{}) throw FormatError("malformed word2vec header: bad dimension", i);
  i = static_cast<std::size_t>(r2.ptr - line.data());
  skip_spaces(i);
  if (i != line.size()) throw FormatError("malformed word2vec header: trailing characters", i);
  if (h.dim == 0) throw FormatError("malformed word2vec header: dimension is zero", 0);
  return h;
}

// Loads input vectors only; the result carries no output table.
inline EmbeddingMatrix read_word2vec_binary(std::istream& in) {
  std::string header_line;
  char c = 0;
  std::uint64_t offset = 0;
  while (in.get(c)) {
    ++offset;
    if (c == '\n') break;
    header_line.push_back(c);
    if (header_line.size() > 64) throw FormatError("malformed word2vec header: line too long", offset);
  }
  if (c != '\n') throw FormatError("malformed word2vec header: missing newline", offset);
  const auto header = parse_word2vec_header(header_line);

  std::vector<std::string> words;
  std::vector<float> values;
  words.reserve(std::min<std::uint64_t>(header.count, 1u << 20));
  BinaryReader reader(in);
  for (std::uint64_t e = 0; e < header.count; ++e) {
    std::string word;
    // words never contain whitespace; a preceding newline belongs to the
    // previous entry
    for (;;) {
      const int peeked = in.peek();
      if (peeked == std::char_traits<char>::eof()) {
        throw FormatError("truncated payload: expected " + std::to_string(header.count) + " entries, found " +
                              std::to_string(e),
                          offset + reader.offset());
      }
      if (peeked != '\n' && peeked != ' ' && peeked != '\r' && peeked != '\t') break;
      reader.bytes(1);
    }
    for (;;) {
      if (in.peek() == std::char_traits<char>::eof()) {
        throw FormatError("truncated payload inside word of entry " + std::to_string(e), offset + reader.offset());
      }
      const char ch = reader.bytes(1)[0];
      if (ch == ' ') break;
      word.push_back(ch);
    }
    try {
      for (std::uint64_t k = 0; k < header.dim; ++k) values.push_back(reader.get<float>());
    } catch (const FormatError& err) {
      throw FormatError("truncated payload in vector of entry " + std::to_string(e) + " ('" + word + "')",
                        offset + err.offset());
    }
    words.push_back(std::move(word));
  }
  // tolerate trailing whitespace only
  while (in.peek() != std::char_traits<char>::eof()) {
    const char ch = reader.bytes(1)[0];
    if (ch != '\n' && ch != ' ' && ch != '\r' && ch != '\t') {
      throw FormatError("count mismatch: data after the " + std::to_string(header.count) + " declared entries",
                        offset + reader.offset() - 1);
    }
  }

  // Keep the first occurrence of a repeated word.
  std::vector<std::string> unique_words;
  std::vector<float> unique_values;
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (!seen.emplace(words[i], i).second) {
      warn("word2vec file: duplicate word '" + words[i] + "' ignored");
      continue;
    }
    unique_words.push_back(std::move(words[i]));
    unique_values.insert(unique_values.end(), values.begin() + static_cast<std::ptrdiff_t>(i * header.dim),
                         values.begin() + static_cast<std::ptrdiff_t>((i + 1) * header.dim));
  }
  EmbeddingMatrix m(std::move(unique_words), header.dim, /*with_output=*/false);
  m.input_data() = std::move(unique_values);
  return m;
}

inline void write_word2vec_binary(std::ostream& out, const EmbeddingMatrix& m) {
  out << m.size() << ' ' << m.dim() << '\n';
  BinaryWriter w(out);
  for (TokenId i = 0; i < m.size(); ++i) {
    w.bytes(m.words()[i]);
    w.bytes(" ");
    for (float v : m.input_row(i)) w.put(v);
    w.bytes("\n");
  }
  if (!out) throw Error("failed writing word2vec binary file");
}

inline EmbeddingMatrix load_pretrained_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open word2vec file: " + path);
  return read_word2vec_binary(in);
}

inline void save_word2vec_binary(const std::string& path, const EmbeddingMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path);
  write_word2vec_binary(out, m);
}

}  // namespace lyricemb
