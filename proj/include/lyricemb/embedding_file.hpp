#pragma once

#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lyricemb/binary_io.hpp"
#include "lyricemb/common.hpp"

namespace lyricemb {

// One dense vector per document, in a fixed document order.
struct DocumentEmbeddings {
  std::uint32_t dim = 0;
  std::vector<std::string> doc_ids;
  std::vector<float> values;  // doc_ids.size() x dim, row-major

  std::size_t size() const { return doc_ids.size(); }

  std::span<const float> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
  std::span<float> row(std::size_t i) { return {values.data() + i * dim, dim}; }

  void append(const std::string& doc_id, std::span<const float> v) {
    if (v.size() != dim) throw Error("embedding dimension mismatch for " + doc_id);
    doc_ids.push_back(doc_id);
    values.insert(values.end(), v.begin(), v.end());
  }

  std::unordered_map<std::string, std::size_t> index() const {
    std::unordered_map<std::string, std::size_t> idx;
    for (std::size_t i = 0; i < doc_ids.size(); ++i) idx.emplace(doc_ids[i], i);
    return idx;
  }

  friend bool operator==(const DocumentEmbeddings&, const DocumentEmbeddings&) = default;
};

inline constexpr std::uint32_t kEmbeddingFileVersion = 1;

// magic "LYRE" | u32 version | u64 n_docs | u32 dim, then per document:
// u16 id length, id bytes, dim x f32 (little-endian).
inline void write_embeddings(std::ostream& out, const DocumentEmbeddings& emb) {
  BinaryWriter w(out);
  w.magic("LYRE");
  w.put<std::uint32_t>(kEmbeddingFileVersion);
  w.put<std::uint64_t>(emb.size());
  w.put<std::uint32_t>(emb.dim);
  for (std::size_t i = 0; i < emb.size(); ++i) {
    w.short_string(emb.doc_ids[i]);
    for (float v : emb.row(i)) w.put(v);
  }
  if (!w.good()) throw Error("failed writing embedding file");
}

inline DocumentEmbeddings read_embeddings(std::istream& in) {
  BinaryReader r(in);
  r.expect_magic("LYRE");
  const auto version_at = r.offset();
  if (const auto v = r.get<std::uint32_t>(); v != kEmbeddingFileVersion) {
    throw FormatError("unsupported embedding file version " + std::to_string(v), version_at);
  }
  const auto n = r.get<std::uint64_t>();
  DocumentEmbeddings emb;
  emb.dim = r.get<std::uint32_t>();
  emb.doc_ids.reserve(std::min<std::uint64_t>(n, 1u << 20));
  for (std::uint64_t i = 0; i < n; ++i) {
    emb.doc_ids.push_back(r.short_string());
    for (std::uint32_t k = 0; k < emb.dim; ++k) emb.values.push_back(r.get<float>());
  }
  return emb;
}

inline void save_embeddings(const std::string& path, const DocumentEmbeddings& emb) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path);
  write_embeddings(out, emb);
}

inline DocumentEmbeddings load_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open embedding file: " + path);
  return read_embeddings(in);
}

}  // namespace lyricemb
