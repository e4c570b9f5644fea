#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lyricemb/common.hpp"
#include "lyricemb/corpus_io.hpp"
#include "lyricemb/rng.hpp"

namespace lyricemb {

// How a task's tags show up in the lyrics.
//   topic:    every tag owns a lexicon of topic words
//   explicit: the second tag ("True") draws from the shared explicit lexicon,
//             the first tag contributes nothing
//   era:      every tag owns a small set of era marker words
enum class TagLexicon { kTopic, kExplicit, kEra };

struct SyntheticTask {
  std::string name;
  std::vector<std::string> tags;
  double tags_per_track = 1.0;  // mean number of tags per document
  double coverage = 0.5;        // fraction of documents annotated for this task
  TagLexicon lexicon = TagLexicon::kTopic;
};

struct SyntheticSpec {
  std::size_t n_docs = 10000;
  std::size_t n_artists = 20;
  std::size_t n_albums = 1000;
  double album_fraction = 0.9;           // documents that carry an album id
  std::size_t artist_lexicon_size = 60;
  std::size_t topic_lexicon_size = 30;
  std::size_t explicit_lexicon_size = 40;
  std::size_t era_markers_per_tag = 6;
  std::size_t background_size = 3000;
  double background_exponent = 1.0;      // Zipf exponent of the background words
  std::size_t min_length = 60;
  std::size_t max_length = 160;
  std::size_t line_length = 8;
  double artist_weight = 0.2;            // share of lines themed on the artist lexicon
  double topic_weight = 0.6;             // share of lines themed on one of the document's tags
  double line_focus = 0.7;               // share of a themed line's words taken from its theme
  double tag_popularity_exponent = 0.3;  // tag k is chosen with weight 1 / (k + 1)^exponent
  std::vector<SyntheticTask> tasks;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_docs < 1 || n_artists < 1) throw Error("synthetic: n_docs and n_artists must be >= 1");
    if (n_albums < n_artists) throw Error("synthetic: need at least one album per artist");
    if (album_fraction < 0.0 || album_fraction > 1.0) throw Error("synthetic: album_fraction must lie in [0, 1]");
    if (artist_lexicon_size < 1 || topic_lexicon_size < 1 || background_size < 1) {
      throw Error("synthetic: lexicon sizes must be >= 1");
    }
    if (min_length < 1 || min_length > max_length) throw Error("synthetic: need 1 <= min_length <= max_length");
    if (max_length > kMaxDocumentTokens) throw Error("synthetic: max_length exceeds the truncation length");
    if (line_length < 1) throw Error("synthetic: line_length must be >= 1");
    if (line_focus < 0.0 || line_focus > 1.0) throw Error("synthetic: line_focus must lie in [0, 1]");
    if (artist_weight < 0.0 || topic_weight < 0.0 || artist_weight + topic_weight > 1.0) {
      throw Error("synthetic: artist_weight + topic_weight must lie in [0, 1]");
    }
    for (const auto& t : tasks) {
      if (t.tags.empty()) throw Error("synthetic: task '" + t.name + "' has no tags");
      if (t.tags_per_track < 1.0 || t.tags_per_track > static_cast<double>(t.tags.size())) {
        throw Error("synthetic: task '" + t.name + "' has tags/track outside [1, |tags|]");
      }
      if (t.coverage <= 0.0 || t.coverage > 1.0) throw Error("synthetic: task '" + t.name + "' coverage must lie in (0, 1]");
      if (t.lexicon == TagLexicon::kExplicit && t.tags.size() != 2) {
        throw Error("synthetic: explicit task '" + t.name + "' needs exactly two tags");
      }
    }
  }
};

namespace detail {

inline std::vector<std::string> numbered(const std::string& stem, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(stem + std::to_string(i + 1));
  return out;
}

}  // namespace detail

// Five tag vocabularies shaped after common lyric tagging datasets: a
// flagger, an era task, multi-label moods, explicit content and a
// multi-label genre task.
inline std::vector<SyntheticTask> default_synthetic_tasks() {
  return {
      {"Flagger", {"spoken", "instrumental", "christmas", "children", "live", "cover"}, 1.0, 0.5, TagLexicon::kTopic},
      {"Era", {"50s", "60s", "70s", "80s", "90s", "00s", "10s", "20s", "classic"}, 1.0, 0.45, TagLexicon::kEra},
      {"Moods", detail::numbered("mood", 22), 1.9, 0.6, TagLexicon::kTopic},
      {"Explicit", {"False", "True"}, 1.0, 0.45, TagLexicon::kExplicit},
      {"Genre", detail::numbered("genre", 25), 3.6, 0.7, TagLexicon::kTopic},
  };
}

inline SyntheticSpec default_synthetic_spec() {
  SyntheticSpec s;
  s.tasks = default_synthetic_tasks();
  return s;
}

inline nlohmann::json to_json(const SyntheticSpec& s) {
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& t : s.tasks) {
    const char* lex = t.lexicon == TagLexicon::kExplicit ? "explicit" : t.lexicon == TagLexicon::kEra ? "era" : "topic";
    tasks.push_back({{"name", t.name}, {"tags", t.tags}, {"tags_per_track", t.tags_per_track},
                     {"coverage", t.coverage}, {"lexicon", lex}});
  }
  return {{"n_docs", s.n_docs}, {"n_artists", s.n_artists}, {"n_albums", s.n_albums},
          {"album_fraction", s.album_fraction}, {"artist_lexicon_size", s.artist_lexicon_size},
          {"topic_lexicon_size", s.topic_lexicon_size}, {"explicit_lexicon_size", s.explicit_lexicon_size},
          {"era_markers_per_tag", s.era_markers_per_tag}, {"background_size", s.background_size},
          {"background_exponent", s.background_exponent}, {"min_length", s.min_length},
          {"max_length", s.max_length}, {"line_length", s.line_length}, {"artist_weight", s.artist_weight},
          {"topic_weight", s.topic_weight}, {"line_focus", s.line_focus},
          {"tag_popularity_exponent", s.tag_popularity_exponent}, {"tasks", tasks}, {"seed", s.seed}};
}

// Missing keys keep their defaults; a missing "tasks" key means the five
// default tasks.
inline SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
  SyntheticSpec s = default_synthetic_spec();
  const auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  get("n_docs", s.n_docs);
  get("n_artists", s.n_artists);
  get("n_albums", s.n_albums);
  get("album_fraction", s.album_fraction);
  get("artist_lexicon_size", s.artist_lexicon_size);
  get("topic_lexicon_size", s.topic_lexicon_size);
  get("explicit_lexicon_size", s.explicit_lexicon_size);
  get("era_markers_per_tag", s.era_markers_per_tag);
  get("background_size", s.background_size);
  get("background_exponent", s.background_exponent);
  get("min_length", s.min_length);
  get("max_length", s.max_length);
  get("line_length", s.line_length);
  get("artist_weight", s.artist_weight);
  get("line_focus", s.line_focus);
  get("topic_weight", s.topic_weight);
  get("tag_popularity_exponent", s.tag_popularity_exponent);
  get("seed", s.seed);
  if (j.contains("tasks")) {
    s.tasks.clear();
    for (const auto& tj : j.at("tasks")) {
      SyntheticTask t;
      t.name = tj.at("name").get<std::string>();
      if (tj.at("tags").is_number_integer()) {
        t.tags = detail::numbered(t.name + "tag", tj.at("tags").get<std::size_t>());
      } else {
        t.tags = tj.at("tags").get<std::vector<std::string>>();
      }
      t.tags_per_track = tj.value("tags_per_track", 1.0);
      t.coverage = tj.value("coverage", 0.5);
      const auto lex = tj.value("lexicon", std::string("topic"));
      if (lex == "topic") {
        t.lexicon = TagLexicon::kTopic;
      } else if (lex == "explicit") {
        t.lexicon = TagLexicon::kExplicit;
      } else if (lex == "era") {
        t.lexicon = TagLexicon::kEra;
      } else {
        throw Error("synthetic: unknown lexicon kind '" + lex + "'");
      }
      s.tasks.push_back(std::move(t));
    }
  }
  return s;
}

struct SyntheticData {
  std::vector<RawDocument> documents;
  nlohmann::ordered_json tags;  // tag file contents
};

namespace detail {

// Alphabetic pseudo-word: a prefix followed by `index` written in base 26.
inline std::string synthetic_word(const std::string& prefix, std::size_t index, std::size_t width) {
  std::string w = prefix;
  std::string digits(width, 'a');
  for (std::size_t i = width; i-- > 0;) {
    digits[i] = static_cast<char>('a' + index % 26);
    index /= 26;
  }
  return w + digits;
}

inline std::size_t weighted_pick(std::span<const double> cumulative, Rng& rng) {
  const double u = uniform01(rng) * cumulative.back();
  return static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
}

}  // namespace detail

// Documents are written line by line. A line is themed on the artist, on one
// of the document's tags or on nothing; its words come from the theme's
// lexicon with probability line_focus and from the Zipf background otherwise.
// Every document gets tags for every task; only a `coverage` share of them is
// written to the tag file.
inline SyntheticData generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(derive_seed(seed, "synthetic"));

  std::vector<double> bg_cumulative;
  double acc = 0.0;
  for (std::size_t r = 0; r < spec.background_size; ++r) {
    acc += 1.0 / std::pow(static_cast<double>(r + 1), spec.background_exponent);
    bg_cumulative.push_back(acc);
  }
  const auto background = [&](std::size_t i) { return detail::synthetic_word("w", i, 4); };
  const auto artist_word = [&](std::size_t a, std::size_t i) {
    return detail::synthetic_word("ar", a * spec.artist_lexicon_size + i, 4);
  };

  // per task, per tag: the words its lexicon contributes
  std::vector<std::vector<std::vector<std::string>>> tag_words(spec.tasks.size());
  for (std::size_t t = 0; t < spec.tasks.size(); ++t) {
    const auto& task = spec.tasks[t];
    const std::string prefix = "t" + detail::synthetic_word("", t, 2);
    for (std::size_t k = 0; k < task.tags.size(); ++k) {
      std::vector<std::string> words;
      switch (task.lexicon) {
        case TagLexicon::kTopic:
          for (std::size_t i = 0; i < spec.topic_lexicon_size; ++i) {
            words.push_back(detail::synthetic_word(prefix, k * spec.topic_lexicon_size + i, 4));
          }
          break;
        case TagLexicon::kEra:
          for (std::size_t i = 0; i < spec.era_markers_per_tag; ++i) {
            words.push_back(detail::synthetic_word("era", (t * 64 + k) * spec.era_markers_per_tag + i, 4));
          }
          break;
        case TagLexicon::kExplicit:
          if (k == 1) {
            for (std::size_t i = 0; i < spec.explicit_lexicon_size; ++i) words.push_back(detail::synthetic_word("x", i, 4));
          }
          break;
      }
      tag_words[t].push_back(std::move(words));
    }
  }
  std::vector<std::vector<double>> tag_cumulative(spec.tasks.size());
  for (std::size_t t = 0; t < spec.tasks.size(); ++t) {
    double c = 0.0;
    for (std::size_t k = 0; k < spec.tasks[t].tags.size(); ++k) {
      c += 1.0 / std::pow(static_cast<double>(k + 1), spec.tag_popularity_exponent);
      tag_cumulative[t].push_back(c);
    }
  }

  SyntheticData out;
  out.tags["tasks"] = nlohmann::ordered_json::array();
  std::vector<nlohmann::ordered_json> annotations(spec.tasks.size(), nlohmann::ordered_json::object());
  const std::size_t albums_per_artist = spec.n_albums / spec.n_artists;
  const std::size_t id_width = std::to_string(spec.n_docs).size();

  for (std::size_t d = 0; d < spec.n_docs; ++d) {
    RawDocument doc;
    std::string num = std::to_string(d);
    doc.doc_id = "doc" + std::string(id_width - num.size(), '0') + num;
    const std::size_t artist = uniform_index(rng, spec.n_artists);
    doc.artist_id = "artist" + std::to_string(artist + 1);
    const std::size_t album = artist + spec.n_artists * uniform_index(rng, albums_per_artist);
    if (uniform01(rng) < spec.album_fraction) doc.album_id = "album" + std::to_string(album + 1);
    doc.language = "en";

    // tags of every task, and the lexicons they contribute
    std::vector<const std::vector<std::string>*> lexicons;
    for (std::size_t t = 0; t < spec.tasks.size(); ++t) {
      const auto& task = spec.tasks[t];
      const double whole = std::floor(task.tags_per_track);
      std::size_t n = static_cast<std::size_t>(whole) + (uniform01(rng) < task.tags_per_track - whole ? 1 : 0);
      n = std::min(n, task.tags.size());
      std::vector<std::uint8_t> chosen(task.tags.size(), 0);
      auto cumulative = tag_cumulative[t];
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = detail::weighted_pick(cumulative, rng);
        chosen[k] = 1;
        // remove k from further draws
        const double w = k == 0 ? cumulative[0] : cumulative[k] - cumulative[k - 1];
        for (std::size_t j = k; j < cumulative.size(); ++j) cumulative[j] -= w;
      }
      nlohmann::ordered_json names = nlohmann::ordered_json::array();
      for (std::size_t k = 0; k < chosen.size(); ++k) {
        if (!chosen[k]) continue;
        names.push_back(task.tags[k]);
        if (!tag_words[t][k].empty()) lexicons.push_back(&tag_words[t][k]);
      }
      if (uniform01(rng) < task.coverage) annotations[t][doc.doc_id] = std::move(names);
    }

    const std::size_t len = spec.min_length + uniform_index(rng, spec.max_length - spec.min_length + 1);
    std::string text;
    const std::vector<std::string>* theme = nullptr;
    std::vector<std::string> artist_lexicon;
    for (std::size_t i = 0; i < spec.artist_lexicon_size; ++i) artist_lexicon.push_back(artist_word(artist, i));
    for (std::size_t i = 0; i < len; ++i) {
      if (i % spec.line_length == 0) {
        if (i > 0) text += '\n';
        const double u = uniform01(rng);
        if (u < spec.artist_weight) {
          theme = &artist_lexicon;
        } else if (u < spec.artist_weight + spec.topic_weight && !lexicons.empty()) {
          theme = lexicons[uniform_index(rng, lexicons.size())];
        } else {
          theme = nullptr;
        }
      } else {
        text += ' ';
      }
      if (theme && uniform01(rng) < spec.line_focus) {
        text += (*theme)[uniform_index(rng, theme->size())];
      } else {
        text += background(detail::weighted_pick(bg_cumulative, rng));
      }
    }
    doc.text = std::move(text);
    out.documents.push_back(std::move(doc));
  }

  for (std::size_t t = 0; t < spec.tasks.size(); ++t) {
    nlohmann::ordered_json tj;
    tj["name"] = spec.tasks[t].name;
    tj["tags"] = spec.tasks[t].tags;
    tj["loss_weight"] = 1.0;
    tj["annotations"] = std::move(annotations[t]);
    out.tags["tasks"].push_back(std::move(tj));
  }
  return out;
}

struct SyntheticPaths {
  std::string corpus;
  std::string tags;
};

inline SyntheticPaths write_synthetic(const std::string& dir, const SyntheticData& data) {
  std::filesystem::create_directories(dir);
  SyntheticPaths p{(std::filesystem::path(dir) / "corpus.jsonl").string(),
                   (std::filesystem::path(dir) / "tags.json").string()};
  {
    std::ofstream out(p.corpus, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + p.corpus);
    for (const auto& d : data.documents) write_corpus_line(out, d);
  }
  std::ofstream out(p.tags, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + p.tags);
  out << data.tags.dump(1) << '\n';
  return p;
}

}  // namespace lyricemb
