#include "ctrlsum/pipeline.hpp"

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "ctrlsum/augment.hpp"
#include "ctrlsum/embeddings.hpp"
#include "ctrlsum/error.hpp"
#include "ctrlsum/evaluation.hpp"
#include "ctrlsum/kmeans.hpp"
#include "ctrlsum/rng.hpp"
#include "ctrlsum/semantic_match.hpp"

namespace ctrlsum {
namespace fs = std::filesystem;
namespace {

const std::vector<std::pair<std::string, std::string>>& schema() {
  static const std::vector<std::pair<std::string, std::string>> entries = {
      {"corpus.id", "corpus"},
      {"corpus.train", ""},
      {"corpus.test", ""},
      {"corpus.foreign", ""},
      {"provider.spec", "hash:768:0"},
      {"provider.cache", "true"},
      {"oracle.metric", "semantic"},
      {"oracle.threshold", "0.5"},
      {"subaspects.k_mode", "oracle"},
      {"subaspects.k", "4"},
      {"subaspects.projection_dim", "4"},
      {"autoencoder.lambda", "0.2"},
      {"autoencoder.lr", "1e-3"},
      {"autoencoder.weight_decay", "1e-3"},
      {"autoencoder.batch", "64"},
      {"autoencoder.dropout", "0.1"},
      {"autoencoder.epochs", "50"},
      {"autoencoder.patience", "5"},
      {"autoencoder.validation_fraction", "0.1"},
      {"autoencoder.hidden", "256"},
      {"autoencoder.latent", "10"},
      {"cluster.k", "5"},
      {"selector.lr", "3e-4"},
      {"selector.weight_decay", "1e-4"},
      {"selector.batch", "64"},
      {"selector.dropout", "0.2"},
      {"selector.epochs", "20"},
      {"selector.hidden", "384"},
      {"selector.validation_fraction", "0.1"},
      {"summarize.code", "101"},
      {"summarize.top_k", "3"},
      {"summarize.trigram_block", "true"},
      {"evaluate.codes", "000,001,010,011,100,101,110,111"},
      {"shuffle.codes", "001,010,100"},
      {"shuffle.seed", "0"},
      {"run.seed", "0"},
      {"run.output_dir", "out"},
      {"run.split", ""},
      {"run.force", "false"},
  };
  return entries;
}

const std::set<std::string> kHashedSections = {"corpus",      "provider", "oracle",  "subaspects",
                                               "autoencoder", "cluster",  "selector"};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::uint64_t stage_seed(std::uint64_t seed, std::string_view stage) {
  std::uint64_t state = seed ^ fnv1a64(stage);
  return splitmix64(state);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<ControlCode> parse_codes(const std::string& text) {
  std::vector<ControlCode> out;
  for (const auto& c : split_list(text)) out.push_back(ControlCode::parse(c));
  if (out.empty()) throw Error("empty control-code list");
  return out;
}

void require(const fs::path& path, std::string_view what) {
  if (!fs::exists(path)) {
    throw MissingArtifactError("missing " + std::string(what) + ": " + path.string());
  }
}

std::ifstream open_in(const fs::path& path, std::string_view what) {
  require(path, what);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

// Artifacts are written to a temporary file and renamed into place.
template <typename Fn>
void write_file(const fs::path& path, Fn&& fn) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    fn(out);
    out.flush();
    if (!out) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

struct Context {
  const PipelineConfig& config;
  std::ostream& log;
  std::string hash;
  fs::path out_dir;
  std::unique_ptr<EmbeddingProvider> provider;
  std::vector<std::string> artifacts;
  std::string started;

  Context(const PipelineConfig& c, std::ostream& l)
      : config(c), log(l), hash(c.hash()), out_dir(c.output_dir()), started(now_iso()) {
    fs::create_directories(out_dir);
  }

  EmbeddingProvider& embedder() {
    if (!provider) provider = make_provider(config.get("provider.spec"));
    return *provider;
  }

  fs::path path(const std::string& name) const { return out_dir / name; }

  void wrote(const fs::path& p) {
    artifacts.push_back(p.filename().string());
    log << "  wrote " << p.string() << '\n';
  }

  void manifest(std::string_view command, nlohmann::json extra = nlohmann::json::object()) {
    nlohmann::ordered_json m;
    m["command"] = command;
    m["config_hash"] = hash;
    m["seed"] = config.seed();
    m["provider"] = provider ? provider->name() : config.get("provider.spec");
    m["started"] = started;
    m["finished"] = now_iso();
    m["artifacts"] = artifacts;
    m["config"] = config.values();
    m["details"] = std::move(extra);
    const auto p = path("manifest." + std::string(command) + ".json");
    write_file(p, [&](std::ostream& out) { out << m.dump(2) << '\n'; });
  }
};

std::string split_or(const PipelineConfig& config, std::string_view fallback) {
  const auto& s = config.get("run.split");
  return std::string(split_name(parse_split(s.empty() ? fallback : s)));
}

struct LoadedSplit {
  Corpus corpus;
  std::vector<DocumentEmbeddings> embeddings;
  CorpusVectors vectors;
};

LoadedSplit load_split(Context& ctx, const std::string& split, const std::string& key) {
  const std::string config_key = "corpus." + key;
  if (ctx.config.get(config_key).empty()) throw Error("no corpus configured for " + config_key);
  const fs::path path = ctx.config.get_path(config_key);
  require(path, "corpus");
  LoadedSplit out;
  out.corpus = load_corpus(path, parse_split(split));
  if (out.corpus.size() == 0) throw Error("corpus is empty: " + path.string());
  std::ifstream raw(path, std::ios::binary);
  std::stringstream bytes;
  bytes << raw.rdbuf();
  const std::string corpus_id = ctx.config.get("corpus.id") + "/" + key + "/" + hex64(fnv1a64(bytes.str()));
  auto& provider = ctx.embedder();
  if (ctx.config.get_bool("provider.cache")) {
    EmbeddingCache cache(ctx.out_dir / "cache");
    out.embeddings = cache.embed_corpus(provider, out.corpus, corpus_id);
  } else {
    for (const auto& d : out.corpus.documents) out.embeddings.push_back(embed_document(provider, d));
  }
  out.vectors = corpus_sentence_vectors(out.embeddings);
  return out;
}

LoadedSplit load_named_split(Context& ctx, const std::string& split) {
  return load_split(ctx, split, split == "validation" ? "train" : split);
}

std::vector<OracleAlignment> read_oracles(Context& ctx, const std::string& split) {
  auto in = open_in(ctx.path("oracle." + split + ".jsonl"), "oracle file (run build-oracle)");
  return read_oracle_jsonl(in);
}

std::vector<DocumentLabels> read_labels(Context& ctx, const std::string& split) {
  auto in = open_in(ctx.path("labels." + split + ".jsonl"), "sub-aspect labels (run label-subaspects)");
  return read_labels_jsonl(in);
}

template <typename T>
std::map<std::string, const T*> index_by_doc(const std::vector<T>& items) {
  std::map<std::string, const T*> out;
  for (const auto& i : items) out[i.doc_id] = &i;
  return out;
}

// Direct sentence labels for every oracle-selected sentence, in corpus order.
std::vector<SentenceAspectLabel> oracle_sentence_labels(const Corpus& corpus,
                                                         const std::vector<OracleAlignment>& oracles,
                                                         const std::vector<DocumentLabels>& labels) {
  const auto by_oracle = index_by_doc(oracles);
  const auto by_label = index_by_doc(labels);
  std::vector<SentenceAspectLabel> out;
  for (const auto& doc : corpus.documents) {
    const auto o = by_oracle.find(doc.id);
    const auto l = by_label.find(doc.id);
    if (o == by_oracle.end() || l == by_label.end()) throw Error("no oracle or labels for document '" + doc.id + "'");
    for (std::size_t idx : o->second->selected) {
      out.push_back({doc.id, idx, l->second->aspects.membership(idx), LabelOrigin::Direct});
    }
  }
  return out;
}

void cmd_build_oracle(Context& ctx) {
  const std::string split = split_or(ctx.config, "train");
  auto data = load_named_split(ctx, split);
  const auto metric = parse_metric(ctx.config.get("oracle.metric"));
  const double threshold = ctx.config.get_double("oracle.threshold");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw Error("oracle.threshold must lie in [0, 1]");
  std::vector<OracleAlignment> oracles;
  std::size_t skipped = 0;
  for (std::size_t d = 0; d < data.corpus.size(); ++d) {
    const auto& doc = data.corpus.documents[d];
    if (!doc.has_gold()) {
      ++skipped;
      continue;
    }
    oracles.push_back(metric == OracleMetric::Semantic ? build_semantic_oracle(doc, data.embeddings[d], threshold)
                                                       : build_lexical_oracle(doc));
  }
  if (oracles.empty()) throw Error("no document in the " + split + " split has a gold summary");
  OracleFileInfo info{ctx.embedder().name(), metric == OracleMetric::Semantic ? threshold : 0.0, ctx.hash};
  const auto out = ctx.path("oracle." + split + ".jsonl");
  write_file(out, [&](std::ostream& o) { write_oracle_jsonl(o, oracles, info); });
  ctx.wrote(out);

  std::size_t empty = 0;
  std::size_t picks = 0;
  for (const auto& o : oracles) {
    empty += o.selected.empty() ? 1 : 0;
    picks += o.selected.size();
  }
  nlohmann::json details = {{"documents", oracles.size()}, {"empty_oracles", empty}, {"skipped_without_gold", skipped}};
  if (picks > 0) {
    const auto cdf = oracle_position_cdf(oracles, data.corpus, kDefaultHistogramBins);
    const auto cdf_path = ctx.path("oracle_cdf." + split + ".csv");
    write_file(cdf_path, [&](std::ostream& o) {
      o << "bin_upper,cumulative_fraction\n";
      for (std::size_t b = 0; b < cdf.size(); ++b) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.2f,%.6f\n", static_cast<double>(b + 1) / static_cast<double>(cdf.size()),
                      cdf[b]);
        o << buf;
      }
    });
    ctx.wrote(cdf_path);
  }
  ctx.log << "build-oracle: " << oracles.size() << " documents, " << empty << " empty oracles\n";
  ctx.manifest("build-oracle", details);
}

void cmd_label_subaspects(Context& ctx) {
  const std::string split = split_or(ctx.config, "train");
  auto data = load_named_split(ctx, split);
  const auto oracles = read_oracles(ctx, split);
  const auto by_oracle = index_by_doc(oracles);
  const std::string k_mode = ctx.config.get("subaspects.k_mode");
  if (k_mode != "oracle" && k_mode != "fixed") throw Error("subaspects.k_mode must be 'oracle' or 'fixed'");
  const std::size_t k_fixed = ctx.config.get_size("subaspects.k");
  const std::size_t projection = ctx.config.get_size("subaspects.projection_dim");
  if (k_fixed == 0 || projection == 0) throw Error("subaspects.k and subaspects.projection_dim must be >= 1");

  std::vector<DocumentLabels> labels;
  std::vector<ControlCode> codes;
  for (std::size_t d = 0; d < data.corpus.size(); ++d) {
    const auto& doc = data.corpus.documents[d];
    const auto o = by_oracle.find(doc.id);
    if (o == by_oracle.end()) continue;
    const auto& selected = o->second->selected;
    std::size_t k = (k_mode == "oracle" && !selected.empty()) ? selected.size() : k_fixed;
    k = std::clamp<std::size_t>(k, 1, doc.size());
    DocumentLabels l;
    l.doc_id = doc.id;
    l.importance_k = k;
    l.aspects = compute_subaspects(data.vectors[d], k, projection);
    if (!selected.empty()) {
      l.code = map_summary(selected, l.aspects);
      codes.push_back(l.code);
    }
    labels.push_back(std::move(l));
  }
  if (labels.empty()) throw Error("oracle file covers no document of the " + split + " split");
  const auto out = ctx.path("labels." + split + ".jsonl");
  write_file(out, [&](std::ostream& o) { write_labels_jsonl(o, labels, ctx.hash); });
  ctx.wrote(out);

  nlohmann::json details = {{"documents", labels.size()}, {"non_empty_oracles", codes.size()}};
  if (!codes.empty()) {
    const auto coverage = corpus_coverage(codes);
    nlohmann::ordered_json cov;
    cov["config_hash"] = ctx.hash;
    cov["total"] = coverage.total;
    for (std::uint8_t v = 0; v < 8; ++v) {
      cov[v == 0 ? std::string("unmapped") : ControlCode::from_value(v).str()] = coverage.fractions[v];
    }
    const auto cov_path = ctx.path("coverage." + split + ".json");
    write_file(cov_path, [&](std::ostream& o) { o << cov.dump(2) << '\n'; });
    ctx.wrote(cov_path);
    details["unmapped_fraction"] = coverage.unmapped();
    ctx.log << "label-subaspects: " << labels.size() << " documents, unmapped fraction " << coverage.unmapped()
            << '\n';
  }
  ctx.manifest("label-subaspects", details);
}

void cmd_train_autoencoder(Context& ctx) {
  auto data = load_split(ctx, "train", "train");
  std::vector<AutoencoderPair> pairs;
  for (const auto& vecs : data.vectors) {
    const auto doc_vec = document_vector(vecs);
    for (const auto& s : vecs) pairs.push_back({doc_vec, s});
  }
  auto cfg = ctx.config.autoencoder_config();
  cfg.seed = stage_seed(ctx.config.seed(), "autoencoder");
  const auto result = train_autoencoder(pairs, cfg);
  const auto out = ctx.path("autoencoder.ckpt");
  nlohmann::json meta = {{"config_hash", ctx.hash},
                         {"seed", cfg.seed},
                         {"lambda", cfg.lambda},
                         {"epochs_run", result.history.size()},
                         {"best_epoch", result.best_epoch},
                         {"provider", ctx.embedder().name()}};
  save_autoencoder(out, result.params, meta);
  ctx.wrote(out);
  nlohmann::json history = nlohmann::json::array();
  for (const auto& e : result.history) {
    history.push_back({{"train_main", e.train_main}, {"train_adv", e.train_adv}, {"validation_main", e.validation_main}});
  }
  ctx.log << "train-autoencoder: " << pairs.size() << " pairs, " << result.history.size() << " epochs, best "
          << result.best_epoch << '\n';
  ctx.manifest("train-autoencoder", {{"pairs", pairs.size()}, {"initial_main", result.initial_main}, {"history", history}});
}

void cmd_cluster(Context& ctx) {
  const auto params = [&] {
    require(ctx.path("autoencoder.ckpt"), "autoencoder checkpoint (run train-autoencoder)");
    return load_autoencoder(ctx.path("autoencoder.ckpt"));
  }();
  auto data = load_split(ctx, "train", "train");
  const auto oracles = read_oracles(ctx, "train");
  const auto by_oracle = index_by_doc(oracles);
  Matrix latents;
  std::vector<std::pair<std::string, std::size_t>> refs;
  for (std::size_t d = 0; d < data.corpus.size(); ++d) {
    const auto& doc = data.corpus.documents[d];
    const auto o = by_oracle.find(doc.id);
    if (o == by_oracle.end()) continue;
    const auto doc_vec = document_vector(data.vectors[d]);
    for (std::size_t idx : o->second->selected) {
      latents.push_row(ae_forward(params, doc_vec, data.vectors[d].at(idx)).latent);
      refs.emplace_back(doc.id, idx);
    }
  }
  const std::size_t k = ctx.config.get_size("cluster.k");
  const auto model = kmeans(latents, k, stage_seed(ctx.config.seed(), "cluster"));

  const auto rows_path = ctx.path("clusters.jsonl");
  write_file(rows_path, [&](std::ostream& o) {
    for (std::size_t i = 0; i < refs.size(); ++i) {
      nlohmann::ordered_json j;
      j["id"] = refs[i].first;
      j["index"] = refs[i].second;
      j["cluster"] = model.assignments[i];
      j["config_hash"] = ctx.hash;
      o << j.dump() << '\n';
    }
  });
  ctx.wrote(rows_path);
  nlohmann::ordered_json m;
  m["k"] = model.k();
  m["inertia"] = model.inertia;
  m["iterations"] = model.iterations;
  m["config_hash"] = ctx.hash;
  m["centroids"] = nlohmann::json::array();
  for (std::size_t c = 0; c < model.k(); ++c) {
    const auto row = model.centroids.row(c);
    m["centroids"].push_back(std::vector<double>(row.begin(), row.end()));
  }
  const auto model_path = ctx.path("cluster_model.json");
  write_file(model_path, [&](std::ostream& o) { o << m.dump(2) << '\n'; });
  ctx.wrote(model_path);
  ctx.log << "cluster: " << refs.size() << " oracle sentences into " << k << " clusters, inertia " << model.inertia
          << '\n';
  ctx.manifest("cluster", {{"points", refs.size()}, {"inertia", model.inertia}});
}

void cmd_augment(Context& ctx) {
  auto data = load_split(ctx, "train", "train");
  const auto oracles = read_oracles(ctx, "train");
  const auto labels = read_labels(ctx, "train");
  auto rows_in = open_in(ctx.path("clusters.jsonl"), "cluster assignments (run cluster)");
  auto model_in = open_in(ctx.path("cluster_model.json"), "cluster model (run cluster)");

  Corpus covered;
  const auto by_oracle = index_by_doc(oracles);
  for (const auto& d : data.corpus.documents) {
    if (by_oracle.count(d.id) > 0) covered.documents.push_back(d);
  }
  const auto sentence_labels = oracle_sentence_labels(covered, oracles, labels);

  std::map<std::pair<std::string, std::size_t>, std::size_t> assignment;
  std::string line;
  while (std::getline(rows_in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    assignment[{j.at("id").get<std::string>(), j.at("index").get<std::size_t>()}] = j.at("cluster").get<std::size_t>();
  }
  const auto mj = nlohmann::json::parse(model_in);
  ClusterModel model;
  for (const auto& row : mj.at("centroids")) model.centroids.push_row(row.get<std::vector<double>>());
  for (const auto& l : sentence_labels) {
    const auto it = assignment.find({l.doc_id, l.index});
    if (it == assignment.end()) {
      throw Error("sentence " + l.doc_id + "#" + std::to_string(l.index) + " has no cluster assignment");
    }
    model.assignments.push_back(it->second);
  }
  const auto result = augment_labels(model, sentence_labels);
  const auto out = ctx.path("augmented.train.jsonl");
  write_file(out, [&](std::ostream& o) { write_sentence_labels_jsonl(o, result.labels, ctx.hash); });
  ctx.wrote(out);

  nlohmann::json dominant = nlohmann::json::array();
  for (const auto& a : result.dominant) dominant.push_back(a ? nlohmann::json(aspect_name(*a)) : nlohmann::json());
  ctx.log << "augment: unlabeled sentences " << result.unlabeled_before << " -> " << result.unlabeled_after << '\n';
  ctx.manifest("augment", {{"unlabeled_before", result.unlabeled_before},
                           {"unlabeled_after", result.unlabeled_after},
                           {"reduction", result.unlabeled_reduction()},
                           {"dominant", dominant},
                           {"clusters_without_direct", result.clusters_without_direct}});
}

std::vector<TrainingExample> training_examples(Context& ctx) {
  auto data = load_split(ctx, "train", "train");
  const auto oracles = read_oracles(ctx, "train");
  const auto labels = read_labels(ctx, "train");
  auto aug_in = open_in(ctx.path("augmented.train.jsonl"), "augmented labels (run augment)");
  const auto augmented = read_sentence_labels_jsonl(aug_in);
  const auto by_oracle = index_by_doc(oracles);
  Corpus covered;
  CorpusVectors vectors;
  for (std::size_t d = 0; d < data.corpus.size(); ++d) {
    if (by_oracle.count(data.corpus.documents[d].id) == 0) continue;
    covered.documents.push_back(data.corpus.documents[d]);
    vectors.push_back(data.vectors[d]);
  }
  return label_training_pairs(covered, oracles, labels, augmented, vectors);
}

void cmd_train_selector(Context& ctx) {
  auto examples = training_examples(ctx);
  if (examples.size() < 2) throw Error("train-selector needs at least 2 labeled documents");
  auto cfg = ctx.config.selector_config();
  cfg.seed = stage_seed(ctx.config.seed(), "selector");
  const double fraction = ctx.config.get_double("selector.validation_fraction");
  if (fraction <= 0.0 || fraction >= 1.0) throw Error("selector.validation_fraction must be in (0, 1)");
  Rng rng(stage_seed(ctx.config.seed(), "selector-split"));
  rng.shuffle(examples);
  const std::size_t n_val =
      std::clamp<std::size_t>(static_cast<std::size_t>(fraction * static_cast<double>(examples.size())), 1,
                              examples.size() - 1);
  const std::span<const TrainingExample> all(examples);
  const auto validation = all.first(n_val);
  const auto train = all.subspan(n_val);

  const auto result = train_selector(train, validation, cfg);
  const auto out = ctx.path("selector.ckpt");
  save_selector(out, result.params,
                {{"config_hash", ctx.hash},
                 {"seed", cfg.seed},
                 {"best_epoch", result.best_epoch},
                 {"provider", ctx.embedder().name()}});
  ctx.wrote(out);
  std::array<std::size_t, 8> code_counts{};
  for (const auto& e : examples) ++code_counts[e.code.value()];
  nlohmann::json history = nlohmann::json::array();
  for (const auto& e : result.history) history.push_back({{"train", e.train_loss}, {"validation", e.validation_loss}});
  nlohmann::json counts = nlohmann::json::object();
  for (std::uint8_t v = 0; v < 8; ++v) counts[ControlCode::from_value(v).str()] = code_counts[v];
  ctx.log << "train-selector: " << train.size() << " train / " << validation.size() << " validation documents, best epoch "
          << result.best_epoch << '\n';
  ctx.manifest("train-selector", {{"train", train.size()},
                                  {"validation", validation.size()},
                                  {"code_counts", counts},
                                  {"history", history}});
}

SelectorParams require_selector(Context& ctx) {
  const auto p = ctx.path("selector.ckpt");
  require(p, "selector checkpoint (run train-selector)");
  return load_selector(p);
}

ExtractionOptions extraction(const PipelineConfig& config) {
  return {config.get_size("summarize.top_k"), config.get_bool("summarize.trigram_block")};
}

void cmd_summarize(Context& ctx) {
  const auto params = require_selector(ctx);
  const std::string split = split_or(ctx.config, "test");
  auto data = load_named_split(ctx, split);
  const auto code = ControlCode::parse(ctx.config.get("summarize.code"));
  const auto summaries = summarize_corpus(selector_scorer(params), data.corpus, data.vectors, code, extraction(ctx.config));
  const auto out = ctx.path("summaries." + split + "." + code.str() + ".jsonl");
  write_file(out, [&](std::ostream& o) { write_summaries_jsonl(o, summaries, code, ctx.hash); });
  ctx.wrote(out);
  ctx.log << "summarize: " << summaries.size() << " documents with code " << code.str() << '\n';
  ctx.manifest("summarize", {{"code", code.str()}, {"documents", summaries.size()}});
}

std::vector<DocumentLabels> fixed_aspect_sets(const LoadedSplit& data, const PipelineConfig& config) {
  std::vector<DocumentLabels> out;
  const std::size_t k = config.get_size("subaspects.k");
  const std::size_t projection = config.get_size("subaspects.projection_dim");
  for (std::size_t d = 0; d < data.corpus.size(); ++d) {
    DocumentLabels l;
    l.doc_id = data.corpus.documents[d].id;
    l.importance_k = std::min(k, data.corpus.documents[d].size());
    l.aspects = compute_subaspects(data.vectors[d], l.importance_k, projection);
    out.push_back(std::move(l));
  }
  return out;
}

void write_reports(Context& ctx, const std::string& stem, const std::vector<EvaluationReport>& reports) {
  const auto json_path = ctx.path(stem + ".json");
  write_file(json_path, [&](std::ostream& o) {
    nlohmann::json j = {{"config_hash", ctx.hash}, {"reports", nlohmann::json::array()}};
    for (const auto& r : reports) j["reports"].push_back(report_json(r));
    o << j.dump(2) << '\n';
  });
  ctx.wrote(json_path);
  const auto text_path = ctx.path(stem + ".txt");
  write_file(text_path, [&](std::ostream& o) { write_report_text(o, reports); });
  ctx.wrote(text_path);
  const auto hist_path = ctx.path(stem + ".histogram.csv");
  write_file(hist_path, [&](std::ostream& o) { write_histogram_csv(o, reports); });
  ctx.wrote(hist_path);
  for (const auto& r : reports) {
    const auto csv = ctx.path(stem + "." + (r.code ? r.code->str() : r.system) + ".csv");
    write_file(csv, [&](std::ostream& o) { write_per_document_csv(o, r); });
    ctx.wrote(csv);
  }
}

void cmd_evaluate(Context& ctx) {
  const auto params = require_selector(ctx);
  const std::string split = split_or(ctx.config, "test");
  auto data = load_named_split(ctx, split);
  const auto aspects = fixed_aspect_sets(data, ctx.config);
  const auto options = extraction(ctx.config);
  std::vector<EvaluationReport> reports;

  std::vector<SystemSummary> lead;
  for (const auto& d : data.corpus.documents) {
    std::vector<std::size_t> first;
    for (std::size_t i = 0; i < std::min(options.top_k, d.size()); ++i) first.push_back(i);
    lead.push_back({d.id, first});
  }
  reports.push_back(evaluate_system(lead, data.corpus, "lead"));
  reports.back().mapping = aspect_mapping_report(lead, aspects);

  for (ControlCode code : parse_codes(ctx.config.get("evaluate.codes"))) {
    const auto summaries = summarize_corpus(selector_scorer(params), data.corpus, data.vectors, code, options);
    reports.push_back(evaluate_system(summaries, data.corpus, "selector", code));
    reports.back().mapping = aspect_mapping_report(summaries, aspects);
  }
  write_reports(ctx, "eval." + split, reports);
  ctx.log << "evaluate: " << reports.size() << " systems on " << data.corpus.size() << " documents\n";
  ctx.manifest("evaluate", {{"split", split}, {"systems", reports.size()}});
}

void cmd_shuffle(Context& ctx) {
  const auto params = require_selector(ctx);
  const std::string split = split_or(ctx.config, "test");
  auto data = load_named_split(ctx, split);
  const auto codes = parse_codes(ctx.config.get("shuffle.codes"));
  const auto report = shuffle_experiment(selector_scorer(params), data.corpus, data.vectors, codes,
                                         ctx.config.get_u64("shuffle.seed"), extraction(ctx.config));
  const auto json_path = ctx.path("shuffle." + split + ".json");
  write_file(json_path, [&](std::ostream& o) {
    auto j = shuffle_json(report);
    j["config_hash"] = ctx.hash;
    o << j.dump(2) << '\n';
  });
  ctx.wrote(json_path);
  const auto text_path = ctx.path("shuffle." + split + ".txt");
  write_file(text_path, [&](std::ostream& o) { write_shuffle_text(o, report); });
  ctx.wrote(text_path);
  ctx.manifest("shuffle-exp", {{"split", split}, {"codes", report.rows.size()}});
}

void cmd_cross_domain(Context& ctx) {
  const auto params = require_selector(ctx);
  auto data = load_split(ctx, "test", "foreign");
  const auto codes = parse_codes(ctx.config.get("evaluate.codes"));
  const auto reports =
      cross_domain_inference(selector_scorer(params), data.corpus, data.vectors, codes, extraction(ctx.config));
  write_reports(ctx, "crossdomain", reports);
  ctx.manifest("cross-domain", {{"documents", data.corpus.size()}, {"codes", codes.size()}});
}

void cmd_report(Context& ctx) {
  std::map<std::string, std::string> hashes;
  for (const auto& entry : fs::directory_iterator(ctx.out_dir)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("manifest.", 0) != 0 || name == "manifest.report.json") continue;
    std::ifstream in(entry.path());
    hashes[name] = nlohmann::json::parse(in).at("config_hash").get<std::string>();
  }
  if (hashes.empty()) throw MissingArtifactError("no stage manifests in " + ctx.out_dir.string());
  std::set<std::string> distinct;
  for (const auto& [name, h] : hashes) distinct.insert(h);
  if (distinct.size() > 1 && !ctx.config.get_bool("run.force")) {
    std::string msg = "artifacts come from different config hashes:";
    for (const auto& [name, h] : hashes) msg += " " + name + "=" + h;
    throw Error(msg + " (pass --force to combine them)");
  }
  std::vector<std::string> sections;
  for (const auto& entry : fs::directory_iterator(ctx.out_dir)) {
    const auto name = entry.path().filename().string();
    if (entry.path().extension() == ".txt" && name != "report.txt") sections.push_back(name);
  }
  std::sort(sections.begin(), sections.end());
  const auto out = ctx.path("report.txt");
  write_file(out, [&](std::ostream& o) {
    o << "config hash(es):";
    for (const auto& h : distinct) o << ' ' << h;
    o << "\n\nstages:\n";
    for (const auto& [name, h] : hashes) o << "  " << name << "  " << h << '\n';
    for (const auto& s : sections) {
      std::ifstream in(ctx.path(s));
      o << "\n== " << s << " ==\n" << in.rdbuf();
    }
    for (const std::string cov : {"coverage.train.json"}) {
      if (!fs::exists(ctx.path(cov))) continue;
      std::ifstream in(ctx.path(cov));
      o << "\n== " << cov << " ==\n" << in.rdbuf();
    }
  });
  ctx.wrote(out);
  ctx.manifest("report", {{"stages", hashes.size()}});
}

}  // namespace

PipelineConfig::PipelineConfig() {
  for (const auto& [k, v] : schema()) values_[k] = v;
}

const std::vector<std::string>& PipelineConfig::keys() {
  static const std::vector<std::string> out = [] {
    std::vector<std::string> k;
    for (const auto& e : schema()) k.push_back(e.first);
    return k;
  }();
  return out;
}

void PipelineConfig::set(const std::string& key, std::string value) {
  const auto it = values_.find(key);
  if (it == values_.end()) throw Error("unknown configuration key '" + key + "'");
  it->second = std::move(value);
}

const std::string& PipelineConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw Error("unknown configuration key '" + key + "'");
  return it->second;
}

double PipelineConfig::get_double(const std::string& key) const {
  const auto& v = get(key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw Error("configuration key '" + key + "' expects a number, got '" + v + "'");
  }
}

std::uint64_t PipelineConfig::get_u64(const std::string& key) const {
  const auto& v = get(key);
  try {
    std::size_t used = 0;
    if (v.empty() || v[0] == '-') throw std::invalid_argument(v);
    const auto n = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw Error("configuration key '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
}

std::size_t PipelineConfig::get_size(const std::string& key) const { return static_cast<std::size_t>(get_u64(key)); }

bool PipelineConfig::get_bool(const std::string& key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error("configuration key '" + key + "' expects a boolean, got '" + v + "'");
}

fs::path PipelineConfig::get_path(const std::string& key) const {
  fs::path p = get(key);
  if (p.is_relative() && !base_dir_.empty()) p = base_dir_ / p;
  return p.lexically_normal();
}

void PipelineConfig::load_ini(const fs::path& path) {
  require(path, "config file");
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(std::string("config: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw Error("config: key '" + section + "' outside a section in " + path.string());
    for (const auto& [key, value] : body) set(section + "." + key, value.get_value<std::string>());
  }
  base_dir_ = fs::absolute(path).parent_path();
}

std::string PipelineConfig::env_name(const std::string& key) {
  std::string out = "CTRLSUM_";
  for (char c : key) out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

void PipelineConfig::apply_environment() {
  for (const auto& key : keys()) {
    if (const char* v = std::getenv(env_name(key).c_str())) set(key, v);
  }
}

std::string PipelineConfig::hash() const {
  std::string text;
  for (const auto& [k, v] : values_) {
    const auto section = k.substr(0, k.find('.'));
    if (kHashedSections.count(section) == 0 && k != "run.seed") continue;
    std::string value = v;
    if (section == "corpus" && k != "corpus.id" && !v.empty()) value = fs::path(v).filename().string();
    text += k + "=" + value + "\n";
  }
  return hex64(fnv1a64(text));
}

AETrainConfig PipelineConfig::autoencoder_config() const {
  AETrainConfig c;
  c.lambda = get_double("autoencoder.lambda");
  c.lr = get_double("autoencoder.lr");
  c.weight_decay = get_double("autoencoder.weight_decay");
  c.batch = get_size("autoencoder.batch");
  c.dropout = get_double("autoencoder.dropout");
  c.epochs = get_size("autoencoder.epochs");
  c.patience = get_size("autoencoder.patience");
  c.validation_fraction = get_double("autoencoder.validation_fraction");
  c.hidden = get_size("autoencoder.hidden");
  c.latent = get_size("autoencoder.latent");
  c.seed = seed();
  return c;
}

SelTrainConfig PipelineConfig::selector_config() const {
  SelTrainConfig c;
  c.lr = get_double("selector.lr");
  c.weight_decay = get_double("selector.weight_decay");
  c.batch = get_size("selector.batch");
  c.dropout = get_double("selector.dropout");
  c.epochs = get_size("selector.epochs");
  c.hidden = get_size("selector.hidden");
  c.seed = seed();
  return c;
}

void run_command(std::string_view command, const PipelineConfig& config, std::ostream& log) {
  Context ctx(config, log);
  if (command == "build-oracle") return cmd_build_oracle(ctx);
  if (command == "label-subaspects") return cmd_label_subaspects(ctx);
  if (command == "train-autoencoder") return cmd_train_autoencoder(ctx);
  if (command == "cluster") return cmd_cluster(ctx);
  if (command == "augment") return cmd_augment(ctx);
  if (command == "train-selector") return cmd_train_selector(ctx);
  if (command == "summarize") return cmd_summarize(ctx);
  if (command == "evaluate") return cmd_evaluate(ctx);
  if (command == "shuffle-exp") return cmd_shuffle(ctx);
  if (command == "cross-domain") return cmd_cross_domain(ctx);
  if (command == "report") return cmd_report(ctx);
  throw Error("unknown command '" + std::string(command) + "'");
}

void run_pipeline(const PipelineConfig& config, std::ostream& log) {
  for (std::string_view c : {"build-oracle", "label-subaspects", "train-autoencoder", "cluster", "augment",
                             "train-selector", "summarize", "evaluate", "shuffle-exp"}) {
    log << "[" << c << "]\n";
    run_command(c, config, log);
  }
  if (!config.get("corpus.foreign").empty()) {
    log << "[cross-domain]\n";
    run_command("cross-domain", config, log);
  }
  log << "[report]\n";
  run_command("report", config, log);
}

}  // namespace ctrlsum
