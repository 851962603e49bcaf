#include "embcurate/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "embcurate/embedders.hpp"
#include "embcurate/metrics.hpp"
#include "embcurate/rac.hpp"
#include "embcurate/reducers.hpp"
#include "embcurate/report.hpp"
#include "embcurate/rng.hpp"
#include "hash.hpp"

namespace embcurate {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

constexpr const char* kToolVersion = "0.3.0";

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

Overshoot parse_overshoot(const std::string& s) {
  if (s == "drop") return Overshoot::kDrop;
  if (s == "allow") return Overshoot::kAllow;
  throw ValidationError("curate.overshoot must be \"drop\" or \"allow\", got \"" + s + "\"");
}

const char* overshoot_name(Overshoot o) { return o == Overshoot::kDrop ? "drop" : "allow"; }

std::string file_tag(const std::string& tag) {
  std::string out;
  for (char c : tag) out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_');
  return out;
}

}  // namespace

PipelineConfig PipelineConfig::from_tree(const ConfigTree& tree, const fs::path& base_dir) {
  PipelineConfig c;
  std::set<std::string> known;
  auto get = [&](const std::string& key) -> const ConfigValue* {
    known.insert(key);
    return tree.has(key) ? &tree.at(key) : nullptr;
  };

  if (auto v = get("seed")) c.seed = v->as_uint("seed");
  if (auto v = get("out_dir")) c.out_dir = resolve(base_dir, v->as_string("out_dir"));
  if (auto v = get("corpus.metadata")) c.metadata = resolve(base_dir, v->as_string("corpus.metadata"));

  std::vector<std::string> tags;
  for (const auto& [key, value] : tree.values()) {
    if (key.rfind("models.", 0) != 0) continue;
    const auto rest = key.substr(7);
    const auto dot = rest.find('.');
    if (dot == std::string::npos) throw ValidationError("config key '" + key + "' must be models.<tag>.<field>");
    const auto tag = rest.substr(0, dot);
    if (std::find(tags.begin(), tags.end(), tag) == tags.end()) tags.push_back(tag);
  }
  for (const auto& tag : tags) {
    ModelInput m;
    m.tag = tag;
    const std::string prefix = "models." + tag + ".";
    if (auto v = get(prefix + "embeddings")) m.embeddings = resolve(base_dir, v->as_string(prefix + "embeddings"));
    else throw ValidationError("model '" + tag + "' has no embeddings path");
    if (auto v = get(prefix + "epsilon_grid")) m.epsilon_grid = v->as_doubles(prefix + "epsilon_grid");
    c.models.push_back(std::move(m));
  }

  if (tree.has("token_model.documents") || tree.has("token_model.table")) {
    TokenModelInput t;
    if (auto v = get("token_model.tag")) t.tag = v->as_string("token_model.tag");
    if (auto v = get("token_model.documents")) t.documents = resolve(base_dir, v->as_string("token_model.documents"));
    if (auto v = get("token_model.table")) t.table = resolve(base_dir, v->as_string("token_model.table"));
    if (auto v = get("token_model.mask")) {
      for (auto id : v->as_uints("token_model.mask")) t.mask.push_back(static_cast<TokenId>(id));
    }
    if (auto v = get("token_model.append_eod")) t.append_eod = v->as_bool("token_model.append_eod");
    if (auto v = get("token_model.eod_token")) t.eod_token = static_cast<TokenId>(v->as_uint("token_model.eod_token"));
    c.token_model = std::move(t);
  }

  if (auto v = get("reduce.scheme")) c.reducer = v->as_string("reduce.scheme");
  if (auto v = get("reduce.components")) c.components = v->as_uint("reduce.components");
  if (auto v = get("reduce.fit_sample")) c.fit_sample = v->as_uint("reduce.fit_sample");

  if (auto v = get("kmeans.sizes")) {
    c.sweep_sizes.clear();
    for (auto s : v->as_uints("kmeans.sizes")) c.sweep_sizes.push_back(s);
  }
  auto ratio = [&](const std::string& key, Ratio& out) {
    if (auto v = get(key)) {
      out = v->kind == ConfigValue::Kind::kString ? Ratio::parse(v->text)
                                                  : Ratio::parse(v->kind == ConfigValue::Kind::kInt
                                                                     ? std::to_string(v->integer)
                                                                     : format_number(v->real));
    }
  };
  ratio("kmeans.min_factor", c.min_factor);
  ratio("kmeans.max_factor", c.max_factor);
  if (auto v = get("kmeans.max_iters")) c.max_iters = v->as_uint("kmeans.max_iters");
  if (auto v = get("kmeans.seeding_trials")) c.seeding_trials = v->as_uint("kmeans.seeding_trials");

  if (auto v = get("rac.epsilon_grid")) c.epsilon_grid = v->as_doubles("rac.epsilon_grid");
  if (auto v = get("rac.coordinate_pruning")) c.coordinate_pruning = v->as_bool("rac.coordinate_pruning");

  if (auto v = get("curate.budget_tokens")) c.budget_tokens = v->as_uint("curate.budget_tokens");
  if (auto v = get("curate.budget_fraction")) c.budget_fraction = v->as_double("curate.budget_fraction");
  if (auto v = get("curate.overshoot")) c.overshoot = parse_overshoot(v->as_string("curate.overshoot"));
  if (auto v = get("curate.by_count")) c.by_count = v->as_bool("curate.by_count");

  if (auto v = get("metrics.max_clusters")) c.max_metric_clusters = v->as_uint("metrics.max_clusters");
  if (auto v = get("metrics.steps")) {
    for (auto s : v->as_doubles("metrics.steps")) c.steps.push_back(static_cast<std::int64_t>(s));
  }

  for (const auto& [key, value] : tree.values()) {
    if (key.rfind("models.", 0) == 0 || key.rfind("token_model.", 0) == 0) {
      if (!known.count(key)) throw ValidationError("unknown config key '" + key + "'");
      continue;
    }
    if (!known.count(key)) throw ValidationError("unknown config key '" + key + "'");
  }
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path, const std::vector<std::string>& overrides) {
  ConfigTree tree = ConfigTree::load(path);
  for (const auto& o : overrides) tree.set(o);
  return from_tree(tree, path.parent_path());
}

void PipelineConfig::validate() const {
  auto need = [](const fs::path& p, const std::string& what) {
    if (p.empty()) throw ValidationError(what + " is not set");
    if (!fs::exists(p)) throw ValidationError("missing input file " + p.string() + " (" + what + ")");
  };
  need(metadata, "corpus.metadata");
  if (models.empty() && !token_model) throw ValidationError("no embedding models configured");
  std::set<std::string> tags;
  for (const auto& m : models) {
    need(m.embeddings, "models." + m.tag + ".embeddings");
    if (!tags.insert(m.tag).second) throw ValidationError("duplicate model tag " + m.tag);
    if (!m.epsilon_grid.empty()) EpsilonGrid{m.epsilon_grid};
  }
  if (token_model) {
    need(token_model->documents, "token_model.documents");
    need(token_model->table, "token_model.table");
    if (!tags.insert(token_model->tag).second) throw ValidationError("duplicate model tag " + token_model->tag);
  }
  if (reducer != "pca" && reducer != "rp") throw ValidationError("reduce.scheme must be \"pca\" or \"rp\"");
  if (components == 0) throw ValidationError("reduce.components must be positive");
  if (fit_sample == 0) throw ValidationError("reduce.fit_sample must be positive");
  if (sweep_sizes.empty()) throw ValidationError("kmeans.sizes is empty");
  std::set<std::size_t> seen;
  for (auto s : sweep_sizes) {
    if (s == 0) throw ValidationError("kmeans.sizes must be positive");
    if (!seen.insert(s).second) throw ValidationError("duplicate sweep size " + std::to_string(s));
  }
  if (max_iters == 0) throw ValidationError("kmeans.max_iters must be positive");
  EpsilonGrid{epsilon_grid};
  if (!budget_tokens && !(budget_fraction > 0.0 && budget_fraction <= 1.0)) {
    throw ValidationError("curate.budget_fraction must be in (0, 1]");
  }
  if (budget_tokens && *budget_tokens == 0) throw ValidationError("curate.budget_tokens must be positive");
  if (out_dir.empty()) throw ValidationError("out_dir is not set");
}

std::uint64_t PipelineConfig::reduce_seed() const { return mix_seed(seed, 1); }
std::uint64_t PipelineConfig::kmeans_seed() const { return mix_seed(seed, 2); }
std::uint64_t PipelineConfig::baseline_seed() const { return mix_seed(seed, 3); }
std::uint64_t PipelineConfig::metrics_seed() const { return mix_seed(seed, 4); }

namespace {

Json doubles_json(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(format_number(x));  // exact shortest text; avoids locale and float printing drift
  return a;
}

// Stages record a key (hash of parameters and input hashes) and the hashes of
// their outputs; a stage is skipped when both still match.
class Runner {
 public:
  Runner(const PipelineConfig& config) : cfg_(config), out_(config.out_dir) {}

  PipelineResult run();

 private:
  using Outputs = std::vector<std::string>;  // paths relative to out_

  std::string hash_of(const fs::path& p) {
    const auto key = fs::absolute(p).lexically_normal().string();
    auto it = file_hashes_.find(key);
    if (it != file_hashes_.end()) return it->second;
    return file_hashes_[key] = detail::sha256_file(p);
  }
  void forget(const fs::path& p) { file_hashes_.erase(fs::absolute(p).lexically_normal().string()); }

  void stage(const std::string& name, Json params, const std::vector<fs::path>& inputs, const Outputs& outputs,
             const std::function<void()>& body);

  const Corpus& corpus();
  const EmbeddingMatrix& reduced(const std::string& tag);
  std::vector<double> grid_for(const std::string& tag) const;

  const PipelineConfig& cfg_;
  fs::path out_;
  std::map<std::string, std::string> file_hashes_;
  std::optional<Corpus> corpus_;
  std::map<std::string, EmbeddingMatrix> reduced_;
  Json stage_log_ = Json::array();
  std::vector<StageOutcome> outcomes_;
};

void Runner::stage(const std::string& name, Json params, const std::vector<fs::path>& inputs, const Outputs& outputs,
                   const std::function<void()>& body) {
  Json keydoc;
  keydoc["stage"] = name;
  keydoc["version"] = kToolVersion;
  keydoc["params"] = std::move(params);
  // Inputs enter by content only, so moving a corpus does not invalidate a run.
  Json in = Json::array();
  for (const auto& p : inputs) in.push_back(hash_of(p));
  keydoc["inputs"] = in;
  const std::string key = detail::sha256_hex(keydoc.dump());

  const fs::path record_path = out_ / "stages" / (file_tag(name) + ".json");
  bool fresh = false;
  if (fs::exists(record_path)) {
    try {
      std::ifstream rf(record_path);
      const Json rec = Json::parse(rf);
      fresh = rec.at("key").get<std::string>() == key;
      for (const auto& rel : outputs) {
        if (!fresh) break;
        const fs::path p = out_ / rel;
        fresh = fs::exists(p) && rec.at("outputs").contains(rel) && rec.at("outputs").at(rel).get<std::string>() == hash_of(p);
      }
    } catch (const std::exception&) {
      fresh = false;
    }
  }

  if (!fresh) {
    spdlog::info("stage {}: running", name);
    {
      std::ofstream marker(out_ / "INCOMPLETE", std::ios::trunc);
      marker << "stage " << name << " in progress\n";
    }
    for (const auto& rel : outputs) forget(out_ / rel);
    try {
      body();
    } catch (const StageError&) {
      throw;
    } catch (const InfeasibleError& e) {
      throw StageError(name, std::string("infeasible: ") + e.what());
    } catch (const ValidationError& e) {
      throw StageError(name, std::string("invalid input: ") + e.what());
    } catch (const FormatError& e) {
      throw StageError(name, std::string("format error: ") + e.what());
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
  } else {
    spdlog::info("stage {}: up to date", name);
  }

  Json outs = Json::object();
  for (const auto& rel : outputs) {
    const fs::path p = out_ / rel;
    if (!fs::exists(p)) throw StageError(name, "expected output " + p.string() + " was not produced");
    outs[rel] = hash_of(p);
  }
  Json rec;
  rec["stage"] = name;
  rec["key"] = key;
  rec["outputs"] = outs;
  if (!fresh) {
    fs::create_directories(record_path.parent_path());
    std::ofstream rf(record_path, std::ios::trunc);
    rf << rec.dump(2) << '\n';
  }
  stage_log_.push_back(rec);
  outcomes_.push_back({name, !fresh});
}

const Corpus& Runner::corpus() {
  if (!corpus_) {
    Corpus c;
    c.records = load_metadata(cfg_.metadata);
    c.checkpoint_steps = collect_checkpoint_steps(c.records);
    c.validate();
    corpus_ = std::move(c);
  }
  return *corpus_;
}

const EmbeddingMatrix& Runner::reduced(const std::string& tag) {
  auto it = reduced_.find(tag);
  if (it == reduced_.end()) {
    it = reduced_.emplace(tag, load_embeddings(out_ / "reduced" / (file_tag(tag) + ".emb"))).first;
  }
  return it->second;
}

std::vector<double> Runner::grid_for(const std::string& tag) const {
  for (const auto& m : cfg_.models)
    if (m.tag == tag && !m.epsilon_grid.empty()) return m.epsilon_grid;
  return cfg_.epsilon_grid;
}

PipelineResult Runner::run() {
  fs::create_directories(out_);
  {
    std::ofstream marker(out_ / "INCOMPLETE", std::ios::trunc);
    marker << "run started\n";
  }
  const Corpus& corp = corpus();
  const std::size_t n = corp.records.size();

  // Model list in run order: configured files, then the token model.
  std::vector<std::pair<std::string, fs::path>> models;
  for (const auto& m : cfg_.models) models.emplace_back(m.tag, m.embeddings);

  if (cfg_.token_model) {
    const auto& t = *cfg_.token_model;
    const std::string rel = "embeddings/" + file_tag(t.tag) + ".emb";
    Json p;
    p["mask"] = t.mask;
    p["append_eod"] = t.append_eod;
    p["eod_token"] = t.eod_token;
    stage("embed-" + t.tag, p, {t.documents, t.table}, {rel}, [&] {
      std::vector<std::uint64_t> ids;
      auto docs = load_token_documents(t.documents, &ids);
      if (ids != corp.ids()) throw ValidationError("token documents do not list the metadata ids in order");
      if (t.append_eod)
        for (auto& doc : docs) doc.push_back(t.eod_token);
      TokenEmbeddingTable table(load_embeddings(t.table));
      auto emb = embed_corpus(docs, table, TokenMask{t.mask});
      fs::create_directories(out_ / "embeddings");
      save_embeddings(out_ / rel, emb);
    });
    models.emplace_back(t.tag, out_ / rel);
  }

  std::vector<fs::path> metric_files;
  std::vector<std::string> plan_files;
  for (const auto& [tag, emb_path] : models) {
    const std::string ft = file_tag(tag);
    const std::string red_rel = "reduced/" + ft + ".emb";
    const std::string model_rel = "reduced/" + ft + ".reducer";
    {
      Json p;
      p["scheme"] = cfg_.reducer;
      p["components"] = cfg_.components;
      p["fit_sample"] = cfg_.fit_sample;
      p["seed"] = cfg_.reduce_seed();
      stage("reduce-" + tag, p, {emb_path}, {red_rel, model_rel}, [&] {
        const EmbeddingMatrix x = load_embeddings(emb_path);
        if (x.rows() != n) {
          throw ValidationError(emb_path.string() + " has " + std::to_string(x.rows()) + " rows, metadata has " +
                                std::to_string(n) + " records");
        }
        ReducerModel model;
        if (cfg_.reducer == "pca") {
          const auto idx = fit_sample_indices(x.rows(), cfg_.fit_sample, cfg_.reduce_seed());
          model = idx.size() == x.rows() ? fit_pca(x, cfg_.components) : fit_pca(x.select_rows(idx), cfg_.components);
        } else {
          model = fit_rp(x.dim(), cfg_.components, cfg_.reduce_seed());
        }
        const Reduction r = apply_reducer(model, x);
        if (!r.degenerate_rows.empty()) {
          spdlog::warn("{}: {} rows had zero norm after projection and were replaced by a unit vector", tag,
                       r.degenerate_rows.size());
        }
        fs::create_directories(out_ / "reduced");
        save_embeddings(out_ / red_rel, r.values);
        save_reducer(out_ / model_rel, model);
      });
    }

    std::vector<std::string> cluster_rels;
    for (auto s : cfg_.sweep_sizes) cluster_rels.push_back("clusters/" + ft + "/kmeans_" + std::to_string(s) + ".csv");
    {
      Json p;
      p["sizes"] = cfg_.sweep_sizes;
      p["min_factor"] = cfg_.min_factor.str();
      p["max_factor"] = cfg_.max_factor.str();
      p["max_iters"] = cfg_.max_iters;
      p["seeding_trials"] = cfg_.seeding_trials;
      p["seed"] = cfg_.kmeans_seed();
      stage("kmeans-" + tag, p, {out_ / red_rel, cfg_.metadata}, cluster_rels, [&] {
        BalanceConfig base;
        base.min_factor = cfg_.min_factor;
        base.max_factor = cfg_.max_factor;
        base.max_iters = cfg_.max_iters;
        base.seeding_trials = cfg_.seeding_trials;
        const auto clusterings = kmeans_sweep(reduced(tag), cfg_.sweep_sizes, cfg_.kmeans_seed(), base);
        fs::create_directories(out_ / "clusters" / ft);
        const auto ids = corp.ids();
        for (std::size_t i = 0; i < clusterings.size(); ++i) save_clustering_csv(out_ / cluster_rels[i], clusterings[i], ids);
      });
    }

    std::vector<std::int64_t> steps = cfg_.steps.empty() ? corp.checkpoint_steps : cfg_.steps;
    if (!steps.empty()) {
      const std::string metrics_rel = "metrics/" + ft + ".csv";
      Json p;
      p["model"] = tag;
      p["steps"] = steps;
      p["max_clusters"] = cfg_.max_metric_clusters;
      p["seed"] = cfg_.metrics_seed();
      std::vector<fs::path> inputs{cfg_.metadata};
      for (const auto& rel : cluster_rels) inputs.push_back(out_ / rel);
      stage("metrics-" + tag, p, inputs, {metrics_rel}, [&] {
        const auto ids = corp.ids();
        std::vector<Clustering> clusterings;
        for (const auto& rel : cluster_rels) {
          Clustering loaded = load_clustering_csv(out_ / rel, ids);
          const auto size = std::stod(rel.substr(rel.rfind('_') + 1));
          clusterings.emplace_back(loaded.assignments(), loaded.num_clusters(), Provenance{"balanced-kmeans", size, 0});
        }
        std::vector<LossTable> tables;
        for (auto s : steps) tables.push_back({s, corp.losses_at(s)});
        const auto report = checkpoint_sweep(clusterings, tables, tag, corp.sources(),
                                             ClusterSampling{cfg_.max_metric_clusters, cfg_.metrics_seed()});
        fs::create_directories(out_ / "metrics");
        save_metrics_csv(out_ / metrics_rel, report);
      });
      metric_files.push_back(out_ / metrics_rel);
    }

    const std::vector<double> grid = grid_for(tag);
    const std::string dnd_rel = "rac/" + ft + ".dnd";
    {
      Json p;
      p["epsilon_max"] = format_number(grid.back());
      p["coordinate_pruning"] = cfg_.coordinate_pruning;
      stage("rac-" + tag, p, {out_ / red_rel}, {dnd_rel}, [&] {
        const auto d = build_dendrogram(reduced(tag), grid.back(), RacOptions{cfg_.coordinate_pruning});
        fs::create_directories(out_ / "rac");
        save_dendrogram(out_ / dnd_rel, d);
      });
    }

    {
      const std::string plan_rel = "plans/" + ft + ".txt";
      const std::string sidecar_rel = "plans/" + ft + ".json";
      const std::string cut_rel = "clusters/" + ft + "/rac_selected.csv";
      Json p;
      p["grid"] = doubles_json(grid);
      p["budget_tokens"] = cfg_.budget_tokens ? Json(*cfg_.budget_tokens) : Json(nullptr);
      p["budget_fraction"] = format_number(cfg_.budget_fraction);
      p["overshoot"] = overshoot_name(cfg_.overshoot);
      p["by_count"] = cfg_.by_count;
      stage("curate-" + tag, p, {out_ / red_rel, out_ / dnd_rel, cfg_.metadata}, {plan_rel, sidecar_rel, cut_rel}, [&] {
        const auto dendro = load_dendrogram(out_ / dnd_rel);
        const std::uint64_t budget = cfg_.budget_tokens
                                         ? *cfg_.budget_tokens
                                         : static_cast<std::uint64_t>(std::floor(cfg_.budget_fraction *
                                                                                 static_cast<double>(corp.total_tokens())));
        const auto plan = curate(corp.records, reduced(tag), dendro, EpsilonGrid(grid), std::max<std::uint64_t>(1, budget),
                                 CurationOptions{cfg_.overshoot, cfg_.by_count});
        fs::create_directories(out_ / "plans");
        save_plan(out_ / plan_rel, plan);
        save_clustering_csv(out_ / cut_rel, dendro.cut(plan.epsilon_chosen), corp.ids());
      });
      plan_files.push_back(plan_rel);
    }
  }

  {
    Json p;
    p["budget_tokens"] = cfg_.budget_tokens ? Json(*cfg_.budget_tokens) : Json(nullptr);
    p["budget_fraction"] = format_number(cfg_.budget_fraction);
    p["overshoot"] = overshoot_name(cfg_.overshoot);
    p["seed"] = cfg_.baseline_seed();
    stage("baseline", p, {cfg_.metadata}, {"plans/random.txt", "plans/random.json"}, [&] {
      const std::uint64_t budget = cfg_.budget_tokens
                                       ? *cfg_.budget_tokens
                                       : static_cast<std::uint64_t>(std::floor(cfg_.budget_fraction *
                                                                               static_cast<double>(corp.total_tokens())));
      const auto plan = random_baseline(corp.records, std::max<std::uint64_t>(1, budget), cfg_.baseline_seed(), cfg_.overshoot);
      fs::create_directories(out_ / "plans");
      save_plan(out_ / "plans/random.txt", plan);
    });
  }

  if (!metric_files.empty()) {
    const Outputs outs{"metrics/metrics.csv", "metrics/metrics.json", "report/vr_vs_avg_size.csv",
                       "report/vr_vs_step.csv", "report/purity.csv", "report/vr_vs_avg_size.svg",
                       "report/vr_vs_step.svg", "report/purity.svg"};
    stage("report", Json::object(), metric_files, outs, [&] {
      MetricsReport all;
      for (const auto& f : metric_files) all.append(load_metrics_csv(f));
      save_metrics_csv(out_ / "metrics/metrics.csv", all);
      save_metrics_json(out_ / "metrics/metrics.json", all);
      emit_report(all, out_ / "report");
    });
  } else {
    spdlog::warn("metadata carries no losses; skipping metrics and report");
  }

  // Manifest: everything needed to reproduce the run, and nothing that
  // changes between reruns or thread counts.
  Json cfg;
  cfg["seed"] = cfg_.seed;
  Json ms = Json::array();
  for (const auto& [tag, path] : models) {
    Json m;
    m["tag"] = tag;
    m["input_sha256"] = hash_of(path);
    m["epsilon_grid"] = doubles_json(grid_for(tag));
    ms.push_back(m);
  }
  cfg["models"] = ms;
  cfg["metadata_sha256"] = hash_of(cfg_.metadata);
  cfg["reduce"] = {{"scheme", cfg_.reducer}, {"components", cfg_.components}, {"fit_sample", cfg_.fit_sample}};
  cfg["kmeans"] = {{"sizes", cfg_.sweep_sizes},
                   {"min_factor", cfg_.min_factor.str()},
                   {"max_factor", cfg_.max_factor.str()},
                   {"max_iters", cfg_.max_iters},
                   {"seeding_trials", cfg_.seeding_trials}};
  cfg["rac"] = {{"coordinate_pruning", cfg_.coordinate_pruning}};
  cfg["curate"] = {{"budget_tokens", cfg_.budget_tokens ? Json(*cfg_.budget_tokens) : Json(nullptr)},
                   {"budget_fraction", format_number(cfg_.budget_fraction)},
                   {"overshoot", overshoot_name(cfg_.overshoot)},
                   {"by_count", cfg_.by_count}};
  cfg["metrics"] = {{"max_clusters", cfg_.max_metric_clusters}, {"steps", cfg_.steps}};

  Json manifest;
  manifest["tool"] = "embcurate";
  manifest["version"] = kToolVersion;
  manifest["config_sha256"] = detail::sha256_hex(cfg.dump());
  manifest["config"] = cfg;
  manifest["seeds"] = {{"reduce", cfg_.reduce_seed()},
                       {"kmeans", cfg_.kmeans_seed()},
                       {"baseline", cfg_.baseline_seed()},
                       {"metrics", cfg_.metrics_seed()}};
  manifest["decisions"] = {{"distance", "squared L2"},
                           {"standardization", "population standard deviation"},
                           {"normalization", "unit L2 after projection"},
                           {"kmeans_size_bounds", "[ceil(avg*min_factor), floor(avg*max_factor)]"},
                           {"kmeans_seeding", "greedy k-means++"},
                           {"rac_linkage", "complete"},
                           {"epsilon_choice", "largest grid value whose representatives meet the budget"},
                           {"representative", "member nearest the cluster mean, ties to lowest row"},
                           {"overshoot", overshoot_name(cfg_.overshoot)}};
  manifest["stages"] = stage_log_;

  const fs::path manifest_path = out_ / "manifest.json";
  {
    std::ofstream mf(manifest_path, std::ios::trunc);
    mf << manifest.dump(2) << '\n';
    if (!mf) throw Error("failed writing " + manifest_path.string());
  }
  fs::remove(out_ / "INCOMPLETE");
  return PipelineResult{out_, manifest_path, outcomes_};
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config) {
  config.validate();
  Runner runner(config);
  return runner.run();
}

}  // namespace embcurate
