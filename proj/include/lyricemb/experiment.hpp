#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "lyricemb/common.hpp"
#include "lyricemb/corpus_io.hpp"
#include "lyricemb/embedders.hpp"
#include "lyricemb/evaluation.hpp"
#include "lyricemb/rng.hpp"
#include "lyricemb/splitting.hpp"
#include "lyricemb/synthetic.hpp"
#include "lyricemb/tagging.hpp"

namespace lyricemb {

// Failure inside one pipeline stage; what() starts with the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what) : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

// ---------------------------------------------------------------------------
// Configuration

struct SearchSpace {
  std::vector<std::size_t> embedding_dim{128, 256, 512};
  std::vector<double> dropout{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  double learning_rate_min = 1e-5;  // drawn log-uniformly
  double learning_rate_max = 1e-1;
  std::vector<std::size_t> dense_layers{1, 2, 4, 8};
  std::vector<std::size_t> dense_size{8, 16, 32, 64, 128, 256, 512};
  std::vector<std::size_t> attention_probes{4, 8, 16, 32};
  std::vector<std::size_t> attention_map_dim{4, 8, 16, 32};

  void validate() const {
    if (embedding_dim.empty() || dropout.empty() || dense_layers.empty() || dense_size.empty() ||
        attention_probes.empty() || attention_map_dim.empty()) {
      throw Error("search space has an empty grid");
    }
    if (!(learning_rate_min > 0.0) || learning_rate_min > learning_rate_max) {
      throw Error("search space needs 0 < learning_rate_min <= learning_rate_max");
    }
  }
};

struct SearchConfig {
  SearchSpace space;
  std::size_t trials = 100;
  unsigned concurrency = 20;
};

struct ExperimentConfig {
  std::string corpus;                       // JSON-lines corpus; empty means synthetic
  std::string tags;                         // tag file; ignored for synthetic data
  std::optional<SyntheticSpec> synthetic;
  std::string language = "en";
  EmbedderConfig embedder;
  TaggerConfig tagger;
  std::array<double, 3> split_ratios = kDefaultSplitRatios;
  double fraction = 1.0;                    // share of non-test documents kept
  std::vector<double> fractions{0.01, 0.1, 1.0};  // incremental study
  SearchConfig search;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::string out_dir = "run";
  std::string cache_dir;                    // defaults to <out_dir>/cache
  bool verbose = true;

  std::string effective_cache_dir() const {
    return cache_dir.empty() ? (std::filesystem::path(out_dir) / "cache").string() : cache_dir;
  }
};

namespace detail {

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key) && !j.at(key).is_null()) field = j.at(key).get<T>();
}

}  // namespace detail

inline Word2vecConfig word2vec_config_from_json(const nlohmann::json& j, Word2vecConfig c = {}) {
  using detail::read_field;
  read_field(j, "dim", c.dim);
  if (j.contains("architecture")) c.architecture = parse_architecture(j.at("architecture").get<std::string>());
  read_field(j, "window", c.window);
  read_field(j, "negatives", c.negatives);
  read_field(j, "epochs", c.epochs);
  read_field(j, "min_count", c.min_count);
  read_field(j, "learning_rate", c.learning_rate);
  read_field(j, "min_learning_rate_ratio", c.min_learning_rate_ratio);
  read_field(j, "subsample", c.subsample);
  read_field(j, "seed", c.seed);
  read_field(j, "workers", c.workers);
  return c;
}

inline nlohmann::json to_json(const Word2vecConfig& c) {
  return {{"dim", c.dim},
          {"architecture", std::string(to_string(c.architecture))},
          {"window", c.window},
          {"negatives", c.negatives},
          {"epochs", c.epochs},
          {"min_count", c.min_count},
          {"learning_rate", c.learning_rate},
          {"min_learning_rate_ratio", c.min_learning_rate_ratio},
          {"subsample", c.subsample},
          {"seed", c.seed},
          {"workers", c.workers}};
}

inline AttentionConfig attention_config_from_json(const nlohmann::json& j, AttentionConfig c = {}) {
  using detail::read_field;
  read_field(j, "probes", c.probes);
  read_field(j, "map_dim", c.map_dim);
  read_field(j, "dense_layers", c.dense_layers);
  read_field(j, "dense_size", c.dense_size);
  read_field(j, "learning_rate", c.learning_rate);
  read_field(j, "epochs", c.epochs);
  read_field(j, "batch_size", c.batch_size);
  read_field(j, "holdout_fraction", c.holdout_fraction);
  read_field(j, "seed", c.seed);
  read_field(j, "threads", c.threads);
  read_field(j, "fine_tune_embeddings", c.fine_tune_embeddings);
  return c;
}

inline nlohmann::json to_json(const AttentionConfig& c) {
  return {{"probes", c.probes},         {"map_dim", c.map_dim},   {"dense_layers", c.dense_layers},
          {"dense_size", c.dense_size}, {"learning_rate", c.learning_rate}, {"epochs", c.epochs},
          {"batch_size", c.batch_size}, {"holdout_fraction", c.holdout_fraction}, {"seed", c.seed},
          {"threads", c.threads},       {"fine_tune_embeddings", c.fine_tune_embeddings}};
}

inline TaggerConfig tagger_config_from_json(const nlohmann::json& j, TaggerConfig c = {}) {
  using detail::read_field;
  read_field(j, "dense_layers", c.dense_layers);
  read_field(j, "dense_size", c.dense_size);
  read_field(j, "dropout", c.dropout);
  read_field(j, "learning_rate", c.learning_rate);
  read_field(j, "batch_size", c.batch_size);
  read_field(j, "max_epochs", c.max_epochs);
  read_field(j, "patience", c.patience);
  read_field(j, "seed", c.seed);
  return c;
}

inline nlohmann::json to_json(const TaggerConfig& c) {
  return {{"dense_layers", c.dense_layers}, {"dense_size", c.dense_size}, {"dropout", c.dropout},
          {"learning_rate", c.learning_rate}, {"batch_size", c.batch_size}, {"max_epochs", c.max_epochs},
          {"patience", c.patience}, {"seed", c.seed}};
}

inline EmbedderConfig embedder_config_from_json(const nlohmann::json& j, EmbedderConfig c = {}) {
  using detail::read_field;
  read_field(j, "kind", c.kind);
  read_field(j, "dim", c.dim);
  if (j.contains("word2vec")) c.word2vec = word2vec_config_from_json(j.at("word2vec"), c.word2vec);
  read_field(j, "pretrained", c.pretrained);
  read_field(j, "infer_steps", c.infer_steps);
  if (j.contains("attention")) c.attention = attention_config_from_json(j.at("attention"), c.attention);
  read_field(j, "proxy_artists", c.proxy_artists);
  if (j.contains("proxy_cap") && !j.at("proxy_cap").is_null()) c.proxy_cap = j.at("proxy_cap").get<std::size_t>();
  read_field(j, "max_df_ratio", c.max_df_ratio);
  c.validate();
  return c;
}

inline nlohmann::json to_json(const EmbedderConfig& c) {
  nlohmann::json j{{"kind", c.kind},
                   {"dim", c.dim},
                   {"word2vec", to_json(c.word2vec)},
                   {"pretrained", c.pretrained},
                   {"infer_steps", c.infer_steps},
                   {"attention", to_json(c.attention)},
                   {"proxy_artists", c.proxy_artists},
                   {"proxy_cap", nullptr},
                   {"max_df_ratio", c.max_df_ratio}};
  if (c.proxy_cap) j["proxy_cap"] = *c.proxy_cap;
  return j;
}

inline SearchSpace search_space_from_json(const nlohmann::json& j, SearchSpace s = {}) {
  using detail::read_field;
  read_field(j, "embedding_dim", s.embedding_dim);
  read_field(j, "dropout", s.dropout);
  read_field(j, "learning_rate_min", s.learning_rate_min);
  read_field(j, "learning_rate_max", s.learning_rate_max);
  read_field(j, "dense_layers", s.dense_layers);
  read_field(j, "dense_size", s.dense_size);
  read_field(j, "attention_probes", s.attention_probes);
  read_field(j, "attention_map_dim", s.attention_map_dim);
  return s;
}

inline nlohmann::json to_json(const SearchSpace& s) {
  return {{"embedding_dim", s.embedding_dim},   {"dropout", s.dropout},
          {"learning_rate_min", s.learning_rate_min}, {"learning_rate_max", s.learning_rate_max},
          {"dense_layers", s.dense_layers},     {"dense_size", s.dense_size},
          {"attention_probes", s.attention_probes}, {"attention_map_dim", s.attention_map_dim}};
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  using detail::read_field;
  ExperimentConfig c;
  read_field(j, "corpus", c.corpus);
  read_field(j, "tags", c.tags);
  if (j.contains("synthetic") && !j.at("synthetic").is_null()) c.synthetic = synthetic_spec_from_json(j.at("synthetic"));
  read_field(j, "language", c.language);
  if (j.contains("embedder")) c.embedder = embedder_config_from_json(j.at("embedder"));
  if (j.contains("tagger")) c.tagger = tagger_config_from_json(j.at("tagger"));
  read_field(j, "split_ratios", c.split_ratios);
  read_field(j, "fraction", c.fraction);
  read_field(j, "fractions", c.fractions);
  if (j.contains("search")) {
    const auto& s = j.at("search");
    if (s.contains("space")) c.search.space = search_space_from_json(s.at("space"));
    read_field(s, "trials", c.search.trials);
    read_field(s, "concurrency", c.search.concurrency);
  }
  read_field(j, "seed", c.seed);
  read_field(j, "threads", c.threads);
  read_field(j, "out_dir", c.out_dir);
  read_field(j, "cache_dir", c.cache_dir);
  read_field(j, "verbose", c.verbose);
  if (c.corpus.empty() && !c.synthetic) c.synthetic = default_synthetic_spec();
  return c;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j{{"corpus", c.corpus},
                   {"tags", c.tags},
                   {"synthetic", nullptr},
                   {"language", c.language},
                   {"embedder", to_json(c.embedder)},
                   {"tagger", to_json(c.tagger)},
                   {"split_ratios", c.split_ratios},
                   {"fraction", c.fraction},
                   {"fractions", c.fractions},
                   {"search",
                    {{"space", to_json(c.search.space)}, {"trials", c.search.trials}, {"concurrency", c.search.concurrency}}},
                   {"seed", c.seed},
                   {"threads", c.threads},
                   {"out_dir", c.out_dir},
                   {"cache_dir", c.cache_dir},
                   {"verbose", c.verbose}};
  if (c.synthetic) j["synthetic"] = to_json(*c.synthetic);
  return j;
}

// ---------------------------------------------------------------------------
// Subsampling

// Uniform sample without replacement of round(fraction * n) indices, in
// ascending order.
inline std::vector<std::size_t> subsample_indices(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0) throw Error("subsample: fraction must lie in (0, 1]");
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (k == 0) {
    throw Error("subsample: fraction " + std::to_string(fraction) + " of " + std::to_string(n) +
                " documents leaves an empty sample");
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (k == n) return idx;
  Rng rng(derive_seed(seed, "subsample"));
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + uniform_index(rng, n - i)]);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline std::vector<TokenizedDocument> subsample_corpus(std::span<const TokenizedDocument> docs, double fraction,
                                                       std::uint64_t seed) {
  std::vector<TokenizedDocument> out;
  for (auto i : subsample_indices(docs.size(), fraction, seed)) out.push_back(docs[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Content hashing for stage caches

class ContentHash {
 public:
  ContentHash& add(std::string_view s) {
    h_ = fnv1a64(s, fnv1a64(std::to_string(s.size()) + ":", h_));
    return *this;
  }
  ContentHash& add(std::uint64_t v) { return add(std::string_view(std::to_string(v))); }
  ContentHash& add_json(const nlohmann::json& j) { return add(std::string_view(j.dump())); }

  std::string hex() const {
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << h_;
    return os.str();
  }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

namespace detail {

// Writes through a temporary sibling, then renames, so concurrent runs never
// observe partial cache entries.
inline void atomic_write(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  namespace fs = std::filesystem;
  fs::create_directories(path.parent_path());
  static std::atomic<std::uint64_t> counter{0};
  const auto tmp = fs::path(path.string() + ".tmp" + std::to_string(counter++) + "-" +
                            std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())));
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + tmp.string());
    body(out);
    if (!out) throw Error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline void atomic_write_dir(const std::filesystem::path& dir, const std::function<void(const std::string&)>& body) {
  namespace fs = std::filesystem;
  if (fs::exists(dir)) return;
  static std::atomic<std::uint64_t> counter{0};
  const auto tmp = fs::path(dir.string() + ".tmp" + std::to_string(counter++) + "-" +
                            std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())));
  fs::create_directories(tmp);
  body(tmp.string());
  std::error_code ec;
  fs::rename(tmp, dir, ec);
  if (ec) fs::remove_all(tmp);  // another run won the race
}

template <class F>
auto stage(const char* name, bool verbose, F&& f) -> decltype(f()) {
  const auto start = std::chrono::steady_clock::now();
  try {
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      if (verbose) {
        std::cerr << "[" << name << "] done in "
                  << std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() << " s\n";
      }
    } else {
      auto r = f();
      if (verbose) {
        std::cerr << "[" << name << "] done in "
                  << std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() << " s\n";
      }
      return r;
    }
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pipeline

struct LoadedData {
  std::vector<TokenizedDocument> documents;
  TagDataset tags;
  std::string corpus_path;
  std::string tags_path;
  std::string content_hash;  // of tokens, albums and labels
};

struct DataPaths {
  std::string corpus;
  std::string tags;
};

// The configured corpus and tag file, or a cached synthetic data set when no
// corpus is given.
inline DataPaths resolve_data_paths(const ExperimentConfig& cfg) {
  if (!cfg.corpus.empty()) return {cfg.corpus, cfg.tags};
  if (!cfg.synthetic) throw Error("no corpus and no synthetic spec");
  const auto key = ContentHash().add_json(to_json(*cfg.synthetic)).hex();
  const auto dir = std::filesystem::path(cfg.effective_cache_dir()) / ("synthetic-" + key);
  detail::atomic_write_dir(dir, [&](const std::string& tmp) {
    write_synthetic(tmp, generate_synthetic(*cfg.synthetic, cfg.synthetic->seed));
    std::ofstream spec(std::filesystem::path(tmp) / "spec.json");
    spec << to_json(*cfg.synthetic).dump(1) << '\n';
  });
  return {(dir / "corpus.jsonl").string(), (dir / "tags.json").string()};
}

// Loads and ingests a corpus; malformed lines become warnings.
inline std::vector<TokenizedDocument> load_documents(const std::string& path, const std::string& language) {
  auto loaded = load_corpus(path);
  for (const auto& e : loaded.errors) warn(path + ":" + std::to_string(e.line) + ": " + e.message);
  IngestOptions opts;
  opts.language = language;
  auto ingested = ingest(loaded.documents, opts);
  if (ingested.documents.empty()) throw Error("no documents left after ingestion of " + path);
  return std::move(ingested.documents);
}

inline std::vector<std::string> doc_ids_of(std::span<const TokenizedDocument> docs) {
  std::vector<std::string> ids;
  for (const auto& d : docs) ids.push_back(d.doc_id);
  return ids;
}

// Corpus plus the tag file aligned with the accepted documents.
inline LoadedData load_experiment_data(const ExperimentConfig& cfg) {
  LoadedData data;
  const auto paths = resolve_data_paths(cfg);
  data.corpus_path = paths.corpus;
  data.tags_path = paths.tags;
  data.documents = load_documents(data.corpus_path, cfg.language);
  if (data.tags_path.empty()) throw Error("no tag file given");
  data.tags = load_tag_dataset(data.tags_path, doc_ids_of(data.documents));

  ContentHash h;
  for (std::size_t i = 0; i < data.documents.size(); ++i) {
    const auto& d = data.documents[i];
    h.add(d.doc_id).add(d.artist_id).add(d.album_id.value_or("\x01"));
    for (const auto& t : d.tokens) h.add(t);
    for (auto l : data.tags.global_labels(i)) h.add(l);
  }
  data.content_hash = h.hex();
  return data;
}

inline std::vector<SplitItem> split_items(const LoadedData& data) {
  std::vector<SplitItem> items;
  for (std::size_t i = 0; i < data.documents.size(); ++i) {
    items.push_back({data.documents[i].doc_id, data.documents[i].album_id, data.tags.global_labels(i)});
  }
  return items;
}

struct ExperimentResult {
  MetricReport test_report;
  double best_val_map = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  std::size_t train_docs = 0;
  std::size_t val_docs = 0;
  std::size_t test_docs = 0;
  std::size_t embedder_docs = 0;
  std::optional<double> proxy_heldout_accuracy;
  bool embedder_cached = false;
  bool tagger_cached = false;
  std::string embedder_dir;
  std::string tagger_dir;

  double test_map() const { return test_report.overall.value_or(0.0); }
};

inline nlohmann::json to_json(const ExperimentResult& r) {
  nlohmann::json j{{"test_overall_map", r.test_report.overall ? nlohmann::json(*r.test_report.overall) : nlohmann::json()},
                   {"best_val_map", r.best_val_map},
                   {"best_epoch", r.best_epoch},
                   {"epochs_run", r.epochs_run},
                   {"train_docs", r.train_docs},
                   {"val_docs", r.val_docs},
                   {"test_docs", r.test_docs},
                   {"embedder_docs", r.embedder_docs},
                   {"embedder_cached", r.embedder_cached},
                   {"tagger_cached", r.tagger_cached},
                   {"embedder_dir", r.embedder_dir},
                   {"tagger_dir", r.tagger_dir}};
  if (r.proxy_heldout_accuracy) j["proxy_heldout_accuracy"] = *r.proxy_heldout_accuracy;
  return j;
}

// Split assignment, cached under the content hash of the data, ratios and seed.
inline SplitAssignment cached_split(const LoadedData& data, const ExperimentConfig& cfg, std::string* key_out = nullptr) {
  const auto key = ContentHash().add(data.content_hash).add_json(nlohmann::json(cfg.split_ratios)).add(cfg.seed).hex();
  if (key_out) *key_out = key;
  const auto path = std::filesystem::path(cfg.effective_cache_dir()) / ("split-" + key + ".csv");
  const auto items = split_items(data);
  if (std::filesystem::exists(path)) {
    std::ifstream in(path);
    const auto map = read_split_csv(in);
    SplitAssignment a;
    a.ratios = cfg.split_ratios;
    for (const auto& it : items) {
      const auto f = map.find(it.doc_id);
      if (f == map.end()) throw Error("cached split lacks document " + it.doc_id);
      a.doc_ids.push_back(it.doc_id);
      a.splits.push_back(f->second);
    }
    return a;
  }
  auto a = iterative_group_split(items, cfg.split_ratios, cfg.seed);
  detail::atomic_write(path, [&](std::ostream& out) { write_split_csv(out, a); });
  return a;
}

// ingest -> split -> (subsample) -> train embedder -> embed -> train tagger
// -> evaluate on the test split -> reports in cfg.out_dir. Embedders, document
// embeddings, splits and taggers are cached by content hash.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  const bool v = cfg.verbose;
  fs::create_directories(cfg.out_dir);
  const fs::path out(cfg.out_dir);
  const fs::path cache(cfg.effective_cache_dir());
  ExperimentResult result;

  const auto data = detail::stage("ingest", v, [&] { return load_experiment_data(cfg); });
  std::string split_key;
  const auto split = detail::stage("split", v, [&] { return cached_split(data, cfg, &split_key); });

  // rows used for embedder and tagger training: a sample of the non-test documents
  std::vector<std::size_t> non_test, test_rows;
  for (std::size_t i = 0; i < split.splits.size(); ++i) (split.splits[i] == Split::kTest ? test_rows : non_test).push_back(i);
  const auto sample = detail::stage("subsample", v, [&] {
    std::vector<std::size_t> rows;
    for (auto i : subsample_indices(non_test.size(), cfg.fraction, derive_seed(cfg.seed, "fraction"))) {
      rows.push_back(non_test[i]);
    }
    return rows;
  });
  std::vector<std::size_t> train_rows, val_rows;
  std::vector<TokenizedDocument> embed_docs;
  ContentHash sample_hash;
  for (auto r : sample) {
    (split.splits[r] == Split::kTrain ? train_rows : val_rows).push_back(r);
    embed_docs.push_back(data.documents[r]);
    sample_hash.add(r);
  }
  result.train_docs = train_rows.size();
  result.val_docs = val_rows.size();
  result.test_docs = test_rows.size();
  result.embedder_docs = embed_docs.size();

  const std::uint64_t embed_seed = derive_seed(cfg.seed, "embedder");
  const auto embed_key = ContentHash()
                             .add(data.content_hash)
                             .add(sample_hash.hex())
                             .add_json(to_json(cfg.embedder))
                             .add(embed_seed)
                             .add(cfg.threads > 1 ? "racy" : "serial")
                             .hex();
  const auto embed_dir = cache / ("embedder-" + embed_key);
  result.embedder_cached = fs::exists(embed_dir / "embeddings.lyre");
  result.embedder_dir = embed_dir.string();
  const auto embeddings = detail::stage("embed", v, [&] {
    detail::atomic_write_dir(embed_dir, [&](const std::string& tmp) {
      const auto te = train_embedder(embed_docs, cfg.embedder, embed_seed, cfg.threads);
      save_embedder(tmp, te);
      save_embeddings((fs::path(tmp) / "embeddings.lyre").string(), embed_documents(te, data.documents, cfg.threads));
    });
    return load_embeddings((embed_dir / "embeddings.lyre").string());
  });
  {
    std::ifstream meta(embed_dir / "embedder.json");
    const auto mj = nlohmann::json::parse(meta);
    if (mj.contains("proxy_heldout_accuracy")) result.proxy_heldout_accuracy = mj["proxy_heldout_accuracy"].get<double>();
  }

  TaggerConfig tc = cfg.tagger;
  tc.seed = derive_seed(cfg.seed, "tagger");
  const auto tagger_key =
      ContentHash().add(embed_key).add(split_key).add(sample_hash.hex()).add_json(to_json(tc)).hex();
  const auto tagger_dir = cache / ("tagger-" + tagger_key);
  result.tagger_cached = fs::exists(tagger_dir / "tagger.lyrt");
  result.tagger_dir = tagger_dir.string();
  const auto model = detail::stage("train-tagger", v, [&] {
    detail::atomic_write_dir(tagger_dir, [&](const std::string& tmp) {
      auto trained = train_tagger(embeddings, data.tags, train_rows, val_rows, tc);
      save_tagger((fs::path(tmp) / "tagger.lyrt").string(), trained.model);
      std::ofstream hist(fs::path(tmp) / "history.csv");
      hist << "epoch,train_loss,val_map\n";
      for (std::size_t e = 0; e < trained.val_map.size(); ++e) {
        hist << (e + 1) << ',' << detail::shortest_double(trained.train_loss[e]) << ','
             << detail::shortest_double(trained.val_map[e]) << '\n';
      }
    });
    return load_tagger((tagger_dir / "tagger.lyrt").string());
  });
  {
    std::ifstream hist(tagger_dir / "history.csv");
    std::string line;
    std::getline(hist, line);
    std::vector<double> val_map;
    while (std::getline(hist, line)) {
      if (!line.empty()) val_map.push_back(std::stod(line.substr(line.rfind(',') + 1)));
    }
    if (!val_map.empty()) {
      const auto d = early_stop(val_map, tc.patience);
      result.best_epoch = d.best_epoch;
      result.best_val_map = val_map[d.best_epoch - 1];
      result.epochs_run = val_map.size();
    }
    fs::copy_file(tagger_dir / "history.csv", out / "history.csv", fs::copy_options::overwrite_existing);
  }

  detail::stage("evaluate", v, [&] {
    const auto preds = predict(embeddings, test_rows, model);
    result.test_report = evaluate_tasks(task_scores(preds, data.tags, test_rows), result.best_epoch);
    std::ofstream p(out / "predictions.csv");
    write_predictions_csv(p, preds);
    std::ofstream rj(out / "report.json");
    auto j = report_to_json(result.test_report);
    j["run"] = to_json(result);
    rj << j.dump(1) << '\n';
    std::ofstream rc(out / "report.csv");
    write_report_csv(rc, result.test_report);
    std::ofstream s(out / "split.csv");
    write_split_csv(s, split);
    std::ofstream c(out / "config.json");
    c << to_json(cfg).dump(1) << '\n';
  });
  if (v) {
    std::cerr << "[run] test overall mAP " << result.test_map() << " (best validation mAP " << result.best_val_map
              << " at epoch " << result.best_epoch << ")\n";
  }
  return result;
}

// ---------------------------------------------------------------------------
// Incremental study

struct IncrementalPoint {
  double fraction = 0.0;
  double test_map = 0.0;
  std::size_t embedder_docs = 0;
  std::size_t train_docs = 0;
};

// One run per fraction, sharing the cache; writes incremental.csv
// (fraction,overall_map,embedder_docs,train_docs) to cfg.out_dir.
inline std::vector<IncrementalPoint> run_incremental(const ExperimentConfig& cfg) {
  if (cfg.fractions.empty()) throw Error("incremental: no fractions given");
  std::vector<IncrementalPoint> points;
  for (double f : cfg.fractions) {
    ExperimentConfig c = cfg;
    c.fraction = f;
    std::ostringstream name;
    name << "fraction-" << f;
    c.out_dir = (std::filesystem::path(cfg.out_dir) / name.str()).string();
    c.cache_dir = cfg.effective_cache_dir();
    const auto r = run_experiment(c);
    points.push_back({f, r.test_map(), r.embedder_docs, r.train_docs});
  }
  std::filesystem::create_directories(cfg.out_dir);
  std::ofstream out(std::filesystem::path(cfg.out_dir) / "incremental.csv");
  out << "fraction,overall_map,embedder_docs,train_docs\n";
  for (const auto& p : points) {
    out << detail::shortest_double(p.fraction) << ',' << detail::shortest_double(p.test_map) << ','
        << p.embedder_docs << ',' << p.train_docs << '\n';
  }
  return points;
}

// ---------------------------------------------------------------------------
// Random search

struct TrialParams {
  std::size_t embedding_dim = 0;
  double dropout = 0.0;
  double learning_rate = 0.0;
  std::size_t dense_layers = 0;
  std::size_t dense_size = 0;
  std::size_t attention_probes = 0;
  std::size_t attention_map_dim = 0;

  friend bool operator==(const TrialParams&, const TrialParams&) = default;
};

inline nlohmann::json to_json(const TrialParams& p) {
  return {{"embedding_dim", p.embedding_dim}, {"dropout", p.dropout}, {"learning_rate", p.learning_rate},
          {"dense_layers", p.dense_layers},   {"dense_size", p.dense_size}, {"attention_probes", p.attention_probes},
          {"attention_map_dim", p.attention_map_dim}};
}

inline double log_uniform(Rng& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::exp(std::log(lo) + uniform01(rng) * (std::log(hi) - std::log(lo)));
}

inline TrialParams draw_trial(const SearchSpace& s, Rng& rng) {
  const auto pick = [&](const auto& grid) { return grid[uniform_index(rng, grid.size())]; };
  TrialParams p;
  p.embedding_dim = pick(s.embedding_dim);
  p.dropout = pick(s.dropout);
  p.learning_rate = log_uniform(rng, s.learning_rate_min, s.learning_rate_max);
  p.dense_layers = pick(s.dense_layers);
  p.dense_size = pick(s.dense_size);
  p.attention_probes = pick(s.attention_probes);
  p.attention_map_dim = pick(s.attention_map_dim);
  return p;
}

// The learning rate drives the tagger and the attention aggregator.
inline ExperimentConfig apply_trial(ExperimentConfig cfg, const TrialParams& p) {
  cfg.embedder.dim = p.embedding_dim;
  cfg.tagger.dropout = p.dropout;
  cfg.tagger.learning_rate = p.learning_rate;
  cfg.tagger.dense_layers = p.dense_layers;
  cfg.tagger.dense_size = p.dense_size;
  cfg.embedder.attention.probes = p.attention_probes;
  cfg.embedder.attention.map_dim = p.attention_map_dim;
  cfg.embedder.attention.learning_rate = p.learning_rate;
  return cfg;
}

struct TrialRecord {
  std::size_t index = 0;
  TrialParams params;
  std::optional<double> val_map;
  std::string error;
};

struct SearchResult {
  std::vector<TrialRecord> trials;
  std::optional<std::size_t> best;  // index into trials; highest val mAP, earliest on ties
};

// All parameter draws happen up front from one seeded stream, so the log is
// independent of scheduling. Up to `concurrency` trials run at once; a
// throwing trial is recorded and the search continues.
inline SearchResult random_search(const SearchSpace& space, std::size_t trials, unsigned concurrency,
                                  std::uint64_t seed, const std::function<double(const TrialParams&, std::size_t)>& evaluate) {
  space.validate();
  if (trials < 1) throw Error("random_search: trials must be >= 1");
  SearchResult r;
  Rng rng(derive_seed(seed, "search"));
  for (std::size_t i = 0; i < trials; ++i) r.trials.push_back({i, draw_trial(space, rng), std::nullopt, {}});
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < trials; i = next++) {
      try {
        r.trials[i].val_map = evaluate(r.trials[i].params, i);
      } catch (const std::exception& e) {
        r.trials[i].error = e.what();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(concurrency, static_cast<unsigned>(trials)));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < trials; ++i) {
    if (r.trials[i].val_map && (!r.best || *r.trials[i].val_map > *r.trials[*r.best].val_map)) r.best = i;
  }
  return r;
}

// Random search where every trial is a full pipeline run scored by its best
// validation mAP. Writes trials.json and best.json to cfg.out_dir.
inline SearchResult run_search(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  // generate and cache the data once before trials start in parallel
  (void)load_experiment_data(cfg);
  std::mutex log_mutex;
  auto result = random_search(cfg.search.space, cfg.search.trials, cfg.search.concurrency, cfg.seed,
                              [&](const TrialParams& p, std::size_t i) {
                                ExperimentConfig c = apply_trial(cfg, p);
                                c.out_dir = (fs::path(cfg.out_dir) / ("trial-" + std::to_string(i))).string();
                                c.cache_dir = cfg.effective_cache_dir();
                                c.verbose = false;
                                c.threads = 1;
                                const auto r = run_experiment(c);
                                if (cfg.verbose) {
                                  std::lock_guard lock(log_mutex);
                                  std::cerr << "[search] trial " << i << " validation mAP " << r.best_val_map << '\n';
                                }
                                return r.best_val_map;
                              });
  nlohmann::json log = nlohmann::json::array();
  for (const auto& t : result.trials) {
    log.push_back({{"trial", t.index},
                   {"params", to_json(t.params)},
                   {"val_map", t.val_map ? nlohmann::json(*t.val_map) : nlohmann::json()},
                   {"error", t.error}});
  }
  fs::create_directories(cfg.out_dir);
  std::ofstream(fs::path(cfg.out_dir) / "trials.json") << log.dump(1) << '\n';
  nlohmann::json best;
  if (result.best) {
    const auto& t = result.trials[*result.best];
    best = {{"trial", t.index}, {"params", to_json(t.params)}, {"val_map", *t.val_map},
            {"config", to_json(apply_trial(cfg, t.params))}};
  }
  std::ofstream(fs::path(cfg.out_dir) / "best.json") << best.dump(1) << '\n';
  return result;
}

}  // namespace lyricemb
