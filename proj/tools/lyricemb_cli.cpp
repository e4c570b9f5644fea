// Command-line driver: every subcommand reads a JSON config, applies the
// --seed/--out-dir/--threads overrides and writes manifest-<subcommand>.json
// into the output directory.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lyricemb/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lyricemb;

namespace {

struct Invocation {
  std::string subcommand;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<unsigned> threads;
  json raw;  // config file contents, for subcommand-specific keys
  ExperimentConfig cfg;
  std::vector<std::string> outputs;

  fs::path out(const std::string& name) {
    const auto p = fs::path(cfg.out_dir) / name;
    outputs.push_back(p.string());
    return p;
  }

  std::string path_or(const char* key, const std::string& fallback) const {
    return raw.contains(key) && raw.at(key).is_string() ? raw.at(key).get<std::string>() : fallback;
  }
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return ContentHash().add(buf.str()).hex();
}

void load_config(Invocation& inv) {
  if (!inv.config_path.empty()) {
    std::ifstream in(inv.config_path);
    if (!in) throw Error("cannot open config " + inv.config_path);
    inv.raw = json::parse(in);
  } else {
    inv.raw = json::object();
  }
  inv.cfg = experiment_config_from_json(inv.raw);
  if (inv.seed) inv.cfg.seed = *inv.seed;
  if (inv.out_dir) inv.cfg.out_dir = *inv.out_dir;
  if (inv.threads) inv.cfg.threads = std::max(1u, *inv.threads);
  fs::create_directories(inv.cfg.out_dir);
}

std::vector<std::size_t> rows_in(const std::vector<std::string>& ids, const std::string& split_path,
                                 std::initializer_list<Split> wanted) {
  std::ifstream in(split_path);
  if (!in) throw Error("cannot open split file " + split_path);
  const auto map = read_split_csv(in);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto it = map.find(ids[i]);
    if (it == map.end()) continue;
    if (std::find(wanted.begin(), wanted.end(), it->second) != wanted.end()) rows.push_back(i);
  }
  return rows;
}

// ---------------------------------------------------------------------------

void cmd_synth(Invocation& inv) {
  const auto spec = inv.cfg.synthetic ? *inv.cfg.synthetic : default_synthetic_spec();
  const auto seed = inv.seed ? *inv.seed : spec.seed;
  const auto paths = write_synthetic(inv.cfg.out_dir, generate_synthetic(spec, seed));
  inv.outputs.push_back(paths.corpus);
  inv.outputs.push_back(paths.tags);
}

void cmd_vocab(Invocation& inv) {
  const auto docs = load_documents(resolve_data_paths(inv.cfg).corpus, inv.cfg.language);
  const auto vocab = build_vocab(docs, inv.cfg.embedder.word2vec.min_count, inv.cfg.threads);
  std::ofstream v(inv.out("vocab.tsv"));
  save_vocab(v, vocab);
  const auto st = corpus_stats(docs);
  std::ofstream s(inv.out("corpus_stats.json"));
  s << json{{"documents", st.documents}, {"tokens", st.tokens}, {"max_sequence_length", st.max_sequence_length},
            {"empty_documents", st.empty_documents}, {"vocabulary_size", vocab.size()}}
           .dump(1)
    << '\n';
}

void cmd_split(Invocation& inv) {
  const auto data = load_experiment_data(inv.cfg);
  const auto items = split_items(data);
  const auto a = iterative_group_split(items, inv.cfg.split_ratios, inv.cfg.seed);
  std::ofstream out(inv.out("split.csv"));
  write_split_csv(out, a);
  json props = json::object();
  std::vector<std::string> label_names;
  for (const auto& t : data.tags.tasks) {
    for (const auto& tag : t.vocabulary.tags) label_names.push_back(t.vocabulary.name + "/" + tag);
  }
  for (const auto& [l, p] : a.label_proportions) props[label_names.at(l)] = p;
  std::ofstream r(inv.out("split_report.json"));
  r << json{{"train", a.count(Split::kTrain)},
            {"validation", a.count(Split::kValidation)},
            {"test", a.count(Split::kTest)},
            {"ratios", a.ratios},
            {"label_proportions", props}}
           .dump(1)
    << '\n';
}

void cmd_train_embed(Invocation& inv) {
  auto docs = load_documents(resolve_data_paths(inv.cfg).corpus, inv.cfg.language);
  if (inv.raw.contains("split")) {
    // train on the training and validation documents only
    std::vector<TokenizedDocument> kept;
    for (auto r : rows_in(doc_ids_of(docs), inv.raw.at("split").get<std::string>(), {Split::kTrain, Split::kValidation})) {
      kept.push_back(docs[r]);
    }
    docs = std::move(kept);
  }
  const auto te = train_embedder(docs, inv.cfg.embedder, derive_seed(inv.cfg.seed, "embedder"), inv.cfg.threads);
  save_embedder(inv.out("embedder").string(), te);
}

void cmd_embed(Invocation& inv) {
  const auto docs = load_documents(resolve_data_paths(inv.cfg).corpus, inv.cfg.language);
  const auto te = load_embedder(inv.path_or("embedder_dir", (fs::path(inv.cfg.out_dir) / "embedder").string()));
  save_embeddings(inv.out("embeddings.lyre").string(), embed_documents(te, docs, inv.cfg.threads));
}

void cmd_train_tagger(Invocation& inv) {
  const auto emb = load_embeddings(inv.path_or("embeddings", (fs::path(inv.cfg.out_dir) / "embeddings.lyre").string()));
  const auto tags = load_tag_dataset(resolve_data_paths(inv.cfg).tags, emb.doc_ids);
  const auto split_path = inv.path_or("split", (fs::path(inv.cfg.out_dir) / "split.csv").string());
  const auto train = rows_in(emb.doc_ids, split_path, {Split::kTrain});
  const auto val = rows_in(emb.doc_ids, split_path, {Split::kValidation});
  TaggerConfig tc = inv.cfg.tagger;
  tc.seed = derive_seed(inv.cfg.seed, "tagger");
  const auto result = train_tagger(emb, tags, train, val, tc);
  save_tagger(inv.out("tagger.lyrt").string(), result.model);
  std::ofstream hist(inv.out("history.csv"));
  hist << "epoch,train_loss,val_map\n";
  for (std::size_t e = 0; e < result.val_map.size(); ++e) {
    hist << (e + 1) << ',' << detail::shortest_double(result.train_loss[e]) << ','
         << detail::shortest_double(result.val_map[e]) << '\n';
  }
  std::cerr << "best validation mAP " << result.val_map[result.best_epoch - 1] << " at epoch " << result.best_epoch
            << " of " << result.epochs_run << '\n';
}

void cmd_eval(Invocation& inv) {
  const auto emb = load_embeddings(inv.path_or("embeddings", (fs::path(inv.cfg.out_dir) / "embeddings.lyre").string()));
  const auto model = load_tagger(inv.path_or("model", (fs::path(inv.cfg.out_dir) / "tagger.lyrt").string()));
  const auto tags = load_tag_dataset(resolve_data_paths(inv.cfg).tags, emb.doc_ids);
  const auto which = parse_split(inv.path_or("eval_split", "test"));
  const auto rows = rows_in(emb.doc_ids, inv.path_or("split", (fs::path(inv.cfg.out_dir) / "split.csv").string()), {which});
  const auto preds = predict(emb, rows, model);
  const auto report = evaluate_tasks(task_scores(preds, tags, rows));
  std::ofstream p(inv.out("predictions.csv"));
  write_predictions_csv(p, preds);
  std::ofstream rj(inv.out("report.json"));
  rj << report_to_json(report).dump(1) << '\n';
  std::ofstream rc(inv.out("report.csv"));
  write_report_csv(rc, report);
  std::cerr << "overall mAP on " << to_string(which) << ": "
            << (report.overall ? std::to_string(*report.overall) : std::string("n/a")) << '\n';
}

void cmd_search(Invocation& inv) {
  const auto r = run_search(inv.cfg);
  inv.outputs.push_back((fs::path(inv.cfg.out_dir) / "trials.json").string());
  inv.outputs.push_back((fs::path(inv.cfg.out_dir) / "best.json").string());
  std::size_t failed = 0;
  for (const auto& t : r.trials) failed += t.val_map ? 0 : 1;
  std::cerr << r.trials.size() << " trials, " << failed << " failed";
  if (r.best) std::cerr << ", best validation mAP " << *r.trials[*r.best].val_map << " (trial " << *r.best << ")";
  std::cerr << '\n';
}

void cmd_incremental(Invocation& inv) {
  const auto points = run_incremental(inv.cfg);
  inv.outputs.push_back((fs::path(inv.cfg.out_dir) / "incremental.csv").string());
  for (const auto& p : points) std::cerr << "fraction " << p.fraction << ": test mAP " << p.test_map << '\n';
}

void cmd_run(Invocation& inv) {
  run_experiment(inv.cfg);
  for (const char* f : {"report.json", "report.csv", "predictions.csv", "history.csv", "split.csv", "config.json"}) {
    inv.outputs.push_back((fs::path(inv.cfg.out_dir) / f).string());
  }
}

void write_manifest(const Invocation& inv, const std::string& started, double seconds, const std::string& error) {
  json outputs = json::array();
  for (const auto& o : inv.outputs) {
    if (fs::is_regular_file(o)) {
      outputs.push_back({{"path", o}, {"bytes", fs::file_size(o)}, {"fnv1a64", file_digest(o)}});
    } else if (fs::exists(o)) {
      outputs.push_back({{"path", o}});
    }
  }
  json m{{"tool", "lyricemb"},
         {"subcommand", inv.subcommand},
         {"config_file", inv.config_path},
         {"config", to_json(inv.cfg)},
         {"seed", inv.cfg.seed},
         {"threads", inv.cfg.threads},
         {"out_dir", inv.cfg.out_dir},
         {"started_at", started},
         {"elapsed_seconds", seconds},
         {"status", error.empty() ? "ok" : "failed"},
         {"error", error},
         {"outputs", outputs}};
  fs::create_directories(inv.cfg.out_dir);
  std::ofstream(fs::path(inv.cfg.out_dir) / ("manifest-" + inv.subcommand + ".json")) << m.dump(1) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lyric document embeddings and multi-task tag evaluation"};
  app.require_subcommand(1);
  Invocation inv;

  const std::vector<std::pair<std::string, std::string>> commands{
      {"synth", "generate a synthetic corpus and tag file"},
      {"vocab", "build the corpus vocabulary"},
      {"train-embed", "fit a document embedder"},
      {"embed", "embed every document with a fitted embedder"},
      {"train-tagger", "train the multi-task tagger on document embeddings"},
      {"split", "album-grouped iterative stratified split"},
      {"eval", "score a tagger on one split"},
      {"search", "random hyperparameter search"},
      {"incremental", "tagging mAP as a function of the training fraction"},
      {"run", "full pipeline from corpus to test report"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", inv.config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", inv.seed, "override the config seed");
    sub->add_option("--out-dir", inv.out_dir, "override the output directory");
    sub->add_option("--threads", inv.threads, "override the worker thread count");
    sub->callback([&inv, n = name] { inv.subcommand = n; });
  }
  CLI11_PARSE(app, argc, argv);

  const auto started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  std::string error;
  try {
    load_config(inv);
    const auto& s = inv.subcommand;
    if (s == "synth") cmd_synth(inv);
    else if (s == "vocab") cmd_vocab(inv);
    else if (s == "train-embed") cmd_train_embed(inv);
    else if (s == "embed") cmd_embed(inv);
    else if (s == "train-tagger") cmd_train_tagger(inv);
    else if (s == "split") cmd_split(inv);
    else if (s == "eval") cmd_eval(inv);
    else if (s == "search") cmd_search(inv);
    else if (s == "incremental") cmd_incremental(inv);
    else if (s == "run") cmd_run(inv);
  } catch (const std::exception& e) {
    error = e.what();
    std::cerr << "error: " << error << '\n';
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  try {
    write_manifest(inv, started, seconds, error);
  } catch (const std::exception& e) {
    std::cerr << "error: writing manifest: " << e.what() << '\n';
    return 1;
  }
  return error.empty() ? 0 : 1;
}
