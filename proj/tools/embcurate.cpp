// embcurate command-line tool.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "embcurate/balanced_kmeans.hpp"
#include "embcurate/clustering.hpp"
#include "embcurate/corpus_io.hpp"
#include "embcurate/curate.hpp"
#include "embcurate/embedders.hpp"
#include "embcurate/error.hpp"
#include "embcurate/metrics.hpp"
#include "embcurate/parallel.hpp"
#include "embcurate/pipeline.hpp"
#include "embcurate/rac.hpp"
#include "embcurate/reducers.hpp"
#include "embcurate/report.hpp"
#include "embcurate/testkit.hpp"

namespace fs = std::filesystem;
using namespace embcurate;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kInvalid = 2, kStageFailed = 3 };

std::vector<std::uint64_t> ids_from(const std::string& metadata) {
  if (metadata.empty()) return {};
  Corpus c;
  c.records = load_metadata(metadata);
  return c.ids();
}


// ---- synthgen ----
struct SynthArgs {
  testkit::SyntheticSpec spec;
  std::string out;
  std::vector<std::int64_t> steps;
  bool no_noise = false;
};

void run_synthgen(const SynthArgs& a) {
  testkit::SyntheticSpec spec = a.spec;
  if (!a.steps.empty()) spec.steps = a.steps;
  spec.noise_model = !a.no_noise;
  const auto corpus = testkit::generate(spec);
  const fs::path out(a.out);
  fs::create_directories(out);
  save_metadata(out / "metadata.jsonl", corpus.corpus.records);
  for (const auto& [tag, m] : corpus.corpus.embeddings) save_embeddings(out / (tag + ".emb"), m);
  const auto ids = corpus.corpus.ids();
  save_clustering_csv(out / "planted_labels.csv",
                      Clustering::from_labels(std::vector<std::uint64_t>(corpus.planted.begin(), corpus.planted.end()),
                                              Provenance{"planted", 0.0, spec.seed}),
                      ids);
  {
    std::ofstream dup(out / "duplicates.csv");
    dup << "copy_id,original_id\n";
    for (const auto& [copy, orig] : corpus.duplicates) dup << ids[copy] << ',' << ids[orig] << '\n';
  }
  if (corpus.token_table) {
    save_token_documents(out / "documents.jsonl", corpus.documents, ids);
    save_embeddings(out / "token_table.emb", *corpus.token_table);
  }
  std::ofstream cfg(out / "pipeline.toml");
  cfg << "# Generated by embcurate synthgen\n"
      << "out_dir = \"run\"\n"
      << "seed = " << spec.seed << "\n\n"
      << "[corpus]\nmetadata = \"metadata.jsonl\"\n\n"
      << "[models.planted]\nembeddings = \"planted.emb\"\n";
  if (spec.noise_model) cfg << "\n[models.noise]\nembeddings = \"noise.emb\"\n";
  if (corpus.token_table) {
    cfg << "\n[token_model]\ntag = \"lm-token-embeds\"\ndocuments = \"documents.jsonl\"\ntable = \"token_table.emb\"\n";
  }
  spdlog::info("wrote synthetic corpus ({} examples, d = {}) to {}", spec.n, spec.d, out.string());
}

// ---- embed ----
struct EmbedArgs {
  std::string documents, table, activations_dir, metadata, out;
  std::vector<TokenId> mask;
  bool no_eod = false;
  TokenId eod = 1;
};

void run_embed(const EmbedArgs& a) {
  if (!a.activations_dir.empty()) {
    // One EMB1 file of per-token activations per example, named <id>.emb.
    if (a.metadata.empty()) throw ValidationError("--activations-dir needs --metadata to fix the row order");
    const auto ids = ids_from(a.metadata);
    std::optional<EmbeddingMatrix> out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const fs::path p = fs::path(a.activations_dir) / (std::to_string(ids[i]) + ".emb");
      const auto acts = load_embeddings(p);
      const auto pooled = pool_activations(acts);
      if (!out) out.emplace(ids.size(), pooled.size());
      if (pooled.size() != out->dim()) throw ValidationError(p.string() + ": activation width differs");
      std::copy(pooled.begin(), pooled.end(), out->row(i).begin());
    }
    save_embeddings(a.out, *out);
    return;
  }
  if (a.documents.empty() || a.table.empty()) throw ValidationError("embed needs --documents and --table, or --activations-dir");
  auto docs = load_token_documents(a.documents);
  if (!a.no_eod)
    for (auto& d : docs) d.push_back(a.eod);
  TokenEmbeddingTable table(load_embeddings(a.table));
  save_embeddings(a.out, embed_corpus(docs, table, TokenMask{a.mask}));
}

// ---- reduce ----
struct ReduceArgs {
  std::string input, out, model_out, apply, scheme = "pca";
  std::size_t k = 64, fit_sample = 500000;
  std::uint64_t seed = 0;
  bool no_normalize = false;
};

void run_reduce(const ReduceArgs& a) {
  const auto x = load_embeddings(a.input);
  ReducerModel model;
  if (!a.apply.empty()) {
    model = load_reducer(a.apply);
  } else if (a.scheme == "pca") {
    const auto idx = fit_sample_indices(x.rows(), a.fit_sample, a.seed);
    model = idx.size() == x.rows() ? fit_pca(x, a.k) : fit_pca(x.select_rows(idx), a.k);
  } else if (a.scheme == "rp") {
    model = fit_rp(x.dim(), a.k, a.seed);
  } else {
    throw ValidationError("--scheme must be pca or rp");
  }
  const Normalize norm = a.no_normalize ? Normalize::kNo : Normalize::kYes;
  const Reduction r = std::holds_alternative<PcaModel>(model) ? apply_pca(std::get<PcaModel>(model), x, norm)
                                                              : apply_rp(std::get<RpModel>(model), x, norm);
  if (!r.degenerate_rows.empty()) spdlog::warn("{} zero-norm rows replaced by a unit vector", r.degenerate_rows.size());
  save_embeddings(a.out, r.values);
  if (!a.model_out.empty()) save_reducer(a.model_out, model);
}

// ---- cluster-kmeans ----
struct KmeansArgs {
  std::string input, metadata, out_dir, min_factor = "1/5", max_factor = "5";
  std::vector<std::size_t> sizes{25, 50, 100, 150};
  std::size_t max_iters = 25;
  std::uint64_t seed = 0;
};

void run_kmeans(const KmeansArgs& a) {
  const auto x = load_embeddings(a.input);
  const auto ids = ids_from(a.metadata);
  BalanceConfig base;
  base.min_factor = Ratio::parse(a.min_factor);
  base.max_factor = Ratio::parse(a.max_factor);
  base.max_iters = a.max_iters;
  const auto runs = kmeans_sweep(x, a.sizes, a.seed, base);
  fs::create_directories(a.out_dir);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const fs::path p = fs::path(a.out_dir) / ("kmeans_" + std::to_string(a.sizes[i]) + ".csv");
    save_clustering_csv(p, runs[i], ids);
    std::cout << p.string() << '\t' << runs[i].num_clusters() << " clusters\n";
  }
}

// ---- cluster-rac ----
struct RacArgs {
  std::string input, metadata, out, dendrogram_in, dendrogram_out;
  std::optional<double> epsilon;
  std::vector<double> grid;
  std::optional<std::size_t> required;
  bool pruning = false;
};

void run_rac(const RacArgs& a) {
  if (!a.epsilon && a.grid.empty()) throw ValidationError("give --epsilon or --epsilon-grid");
  if (!a.grid.empty() && !a.required) throw ValidationError("--epsilon-grid needs --required-clusters");
  double eps_max = a.epsilon.value_or(0.0);
  if (!a.grid.empty()) eps_max = std::max(eps_max, EpsilonGrid(a.grid).max());
  Dendrogram d;
  std::optional<EmbeddingMatrix> x;
  if (!a.dendrogram_in.empty()) {
    d = load_dendrogram(a.dendrogram_in);
  } else {
    x.emplace(load_embeddings(a.input));
    d = build_dendrogram(*x, eps_max, RacOptions{a.pruning});
  }
  if (!a.dendrogram_out.empty()) save_dendrogram(a.dendrogram_out, d);
  const auto ids = ids_from(a.metadata);
  if (!a.grid.empty()) {
    const auto choice = epsilon_sweep(d, EpsilonGrid(a.grid), *a.required);
    std::cout << "epsilon\t" << format_number(choice.epsilon) << "\nclusters\t" << choice.clustering.num_clusters() << '\n';
    if (!a.out.empty()) save_clustering_csv(a.out, choice.clustering, ids);
  } else {
    const auto c = d.cut(*a.epsilon);
    std::cout << "clusters\t" << c.num_clusters() << '\n';
    if (!a.out.empty()) save_clustering_csv(a.out, c, ids);
  }
}

// ---- metrics ----
struct MetricsArgs {
  std::string metadata, model, out_csv, out_json;
  std::vector<std::string> clusterings;
  std::vector<double> params;
  std::vector<std::int64_t> steps;
  std::size_t max_clusters = 0;
  std::uint64_t seed = 0;
};

void run_metrics(const MetricsArgs& a) {
  Corpus corpus;
  corpus.records = load_metadata(a.metadata);
  corpus.checkpoint_steps = collect_checkpoint_steps(corpus.records);
  const auto ids = corpus.ids();
  if (!a.params.empty() && a.params.size() != a.clusterings.size()) {
    throw ValidationError("--param must be given once per --clustering");
  }
  std::vector<Clustering> cs;
  for (std::size_t i = 0; i < a.clusterings.size(); ++i) {
    const auto c = load_clustering_csv(a.clusterings[i], ids);
    const double param = a.params.empty() ? static_cast<double>(c.size()) / static_cast<double>(c.num_clusters()) : a.params[i];
    cs.emplace_back(c.assignments(), c.num_clusters(), Provenance{"file", param, 0});
  }
  const auto steps = a.steps.empty() ? corpus.checkpoint_steps : a.steps;
  if (steps.empty()) throw ValidationError("metadata carries no loss checkpoints");
  std::vector<LossTable> tables;
  for (auto s : steps) tables.push_back({s, corpus.losses_at(s)});
  const auto report = checkpoint_sweep(cs, tables, a.model, corpus.sources(), ClusterSampling{a.max_clusters, a.seed});
  if (!a.out_csv.empty()) save_metrics_csv(a.out_csv, report);
  if (!a.out_json.empty()) save_metrics_json(a.out_json, report);
  std::cout << "model,avg_size_or_eps,step,variance_reduction,purity,num_clusters\n";
  for (const auto& r : report.rows) {
    std::cout << r.model << ',' << format_number(r.avg_size_or_eps) << ',' << r.step << ','
              << (r.variance_reduction.ok() ? format_number(r.variance_reduction.value) : to_string(r.variance_reduction.status))
              << ',' << (r.purity ? format_number(*r.purity) : "") << ',' << r.num_clusters << '\n';
  }
}

// ---- curate ----
struct CurateArgs {
  std::string metadata, embeddings, dendrogram, out;
  std::vector<double> grid;
  std::optional<std::uint64_t> budget_tokens;
  std::optional<double> budget_fraction;
  bool by_count = false, allow_overshoot = false, baseline = false, pruning = false;
  std::uint64_t seed = 0;
};

void run_curate(const CurateArgs& a) {
  Corpus corpus;
  corpus.records = load_metadata(a.metadata);
  std::uint64_t budget = 0;
  if (a.budget_tokens) budget = *a.budget_tokens;
  else if (a.budget_fraction) budget = static_cast<std::uint64_t>(std::floor(*a.budget_fraction * static_cast<double>(corpus.total_tokens())));
  else throw ValidationError("give --budget-tokens or --budget-fraction");
  const Overshoot over = a.allow_overshoot ? Overshoot::kAllow : Overshoot::kDrop;
  CurationPlan plan;
  if (a.baseline) {
    plan = random_baseline(corpus.records, budget, a.seed, over);
  } else {
    if (a.embeddings.empty() || a.grid.empty()) throw ValidationError("curation needs --embeddings and --epsilon-grid");
    const auto x = load_embeddings(a.embeddings);
    const EpsilonGrid grid(a.grid);
    const Dendrogram d = a.dendrogram.empty() ? build_dendrogram(x, grid.max(), RacOptions{a.pruning}) : load_dendrogram(a.dendrogram);
    plan = curate(corpus.records, x, d, grid, budget, CurationOptions{over, a.by_count});
  }
  save_plan(a.out, plan);
  std::cout << "selected\t" << plan.selected_ids.size() << "\ntokens\t" << plan.token_total << "\nbudget\t" << plan.budget << '\n';
  if (!a.baseline) std::cout << "epsilon\t" << format_number(plan.epsilon_chosen) << '\n';
}

// ---- report ----
struct ReportArgs {
  std::vector<std::string> metrics;
  std::string out;
  bool replot = false;
  double step_size = 50.0;
};

void run_report(const ReportArgs& a) {
  if (a.replot) {
    for (const auto& p : render_plots(a.out)) std::cout << p.string() << '\n';
    return;
  }
  MetricsReport all;
  for (const auto& m : a.metrics) all.append(load_metrics_csv(m));
  const auto files = emit_report(all, a.out, ReportOptions{a.step_size});
  std::cout << files.vr_vs_size_csv.string() << '\n' << files.vr_vs_step_csv.string() << '\n' << files.purity_csv.string() << '\n';
  for (const auto& p : files.plots) std::cout << p.string() << '\n';
}

// ---- pipeline ----
struct PipelineArgs {
  std::string config, out_dir;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

int run_pipeline_cmd(const PipelineArgs& a) {
  std::vector<std::string> overrides = a.overrides;
  if (a.seed) overrides.push_back("seed=" + std::to_string(*a.seed));
  PipelineConfig cfg = PipelineConfig::load(a.config, overrides);
  if (!a.out_dir.empty()) cfg.out_dir = a.out_dir;
  const auto result = run_pipeline(cfg);
  std::size_t executed = 0;
  for (const auto& s : result.stages) executed += s.executed ? 1 : 0;
  std::cout << "manifest\t" << result.manifest.string() << "\nstages_executed\t" << executed << "\nstages_cached\t"
            << result.stages.size() - executed << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"embcurate: embedding-space clustering, variance-reduction metrics and data curation"};
  app.require_subcommand(1);
  unsigned threads = 0;
  std::string log_level = "info";
  app.add_option("--threads", threads, "Worker thread cap (default: $EMBCURATE_THREADS or all cores)");
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")->capture_default_str();

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synthgen", "Write a synthetic corpus with planted cluster, source and loss structure");
  c_synth->add_option("--out", synth.out, "Output directory")->required();
  c_synth->add_option("--n", synth.spec.n)->capture_default_str();
  c_synth->add_option("--d", synth.spec.d)->capture_default_str();
  c_synth->add_option("--latent-dim", synth.spec.latent_dim, "0 means d")->capture_default_str();
  c_synth->add_option("--k-true", synth.spec.k_true)->capture_default_str();
  c_synth->add_option("--sources", synth.spec.num_sources)->capture_default_str();
  c_synth->add_option("--source-purity", synth.spec.source_purity)->capture_default_str();
  c_synth->add_option("--cluster-spread", synth.spec.cluster_spread)->capture_default_str();
  c_synth->add_option("--ambient-noise", synth.spec.ambient_noise)->capture_default_str();
  c_synth->add_option("--sigma-between", synth.spec.sigma_between)->capture_default_str();
  c_synth->add_option("--sigma-within", synth.spec.sigma_within)->capture_default_str();
  c_synth->add_option("--steps", synth.steps, "Checkpoint steps (default 2000 10000 26000)");
  c_synth->add_option("--duplicate-fraction", synth.spec.duplicate_fraction)->capture_default_str();
  c_synth->add_option("--min-tokens", synth.spec.min_tokens)->capture_default_str();
  c_synth->add_option("--max-tokens", synth.spec.max_tokens)->capture_default_str();
  c_synth->add_option("--vocab-size", synth.spec.vocab_size, "Also write token documents and a token table")->capture_default_str();
  c_synth->add_option("--table-dim", synth.spec.table_dim)->capture_default_str();
  c_synth->add_flag("--no-noise", synth.no_noise, "Skip the pure-noise embedding file");
  c_synth->add_option("--seed", synth.spec.seed)->capture_default_str();

  EmbedArgs embed;
  auto* c_embed = app.add_subcommand("embed", "Average token-table rows per document, or mean-pool activation files");
  c_embed->add_option("--documents", embed.documents, "JSONL token documents");
  c_embed->add_option("--table", embed.table, "Token embedding table (EMB1)");
  c_embed->add_option("--mask", embed.mask, "Token ids left out of the average");
  c_embed->add_flag("--no-eod", embed.no_eod, "Do not append the end-of-document token before averaging");
  c_embed->add_option("--eod-token", embed.eod)->capture_default_str();
  c_embed->add_option("--activations-dir", embed.activations_dir, "Directory of <id>.emb per-token activations");
  c_embed->add_option("--metadata", embed.metadata, "Metadata fixing the row order for --activations-dir");
  c_embed->add_option("--out", embed.out)->required();

  ReduceArgs reduce;
  auto* c_reduce = app.add_subcommand("reduce", "Fit and apply PCA or sparse random projection");
  c_reduce->add_option("--input", reduce.input)->required()->check(CLI::ExistingFile);
  c_reduce->add_option("--out", reduce.out)->required();
  c_reduce->add_option("--model-out", reduce.model_out, "Write the fitted reducer (RED1)");
  c_reduce->add_option("--apply", reduce.apply, "Apply a saved reducer instead of fitting")->check(CLI::ExistingFile);
  c_reduce->add_option("--scheme", reduce.scheme)->check(CLI::IsMember({"pca", "rp"}))->capture_default_str();
  c_reduce->add_option("--k", reduce.k)->capture_default_str();
  c_reduce->add_option("--fit-sample", reduce.fit_sample)->capture_default_str();
  c_reduce->add_option("--seed", reduce.seed)->capture_default_str();
  c_reduce->add_flag("--no-normalize", reduce.no_normalize, "Keep raw projections");

  KmeansArgs km;
  auto* c_km = app.add_subcommand("cluster-kmeans", "Balanced k-means sweep over average cluster sizes");
  c_km->add_option("--input", km.input)->required()->check(CLI::ExistingFile);
  c_km->add_option("--metadata", km.metadata, "Metadata supplying example ids")->check(CLI::ExistingFile);
  c_km->add_option("--avg-size", km.sizes, "Average cluster sizes")->capture_default_str();
  c_km->add_option("--min-factor", km.min_factor)->capture_default_str();
  c_km->add_option("--max-factor", km.max_factor)->capture_default_str();
  c_km->add_option("--max-iters", km.max_iters)->capture_default_str();
  c_km->add_option("--seed", km.seed)->capture_default_str();
  c_km->add_option("--out-dir", km.out_dir)->required();

  RacArgs rac;
  auto* c_rac = app.add_subcommand("cluster-rac", "Complete-linkage RAC with a diameter threshold");
  c_rac->add_option("--input", rac.input, "Embeddings (EMB1)");
  c_rac->add_option("--metadata", rac.metadata)->check(CLI::ExistingFile);
  c_rac->add_option("--epsilon", rac.epsilon, "Cut the dendrogram at this squared-L2 diameter");
  c_rac->add_option("--epsilon-grid", rac.grid, "Ascending grid; picks the largest value meeting --required-clusters");
  c_rac->add_option("--required-clusters", rac.required);
  c_rac->add_option("--dendrogram-in", rac.dendrogram_in)->check(CLI::ExistingFile);
  c_rac->add_option("--dendrogram-out", rac.dendrogram_out);
  c_rac->add_flag("--coordinate-pruning", rac.pruning);
  c_rac->add_option("--out", rac.out, "Clustering CSV");

  MetricsArgs met;
  auto* c_met = app.add_subcommand("metrics", "Variance reduction and source purity of clusterings");
  c_met->add_option("--metadata", met.metadata)->required()->check(CLI::ExistingFile);
  c_met->add_option("--clustering", met.clusterings)->required()->check(CLI::ExistingFile);
  c_met->add_option("--param", met.params, "avg_size_or_eps value per clustering (default n / clusters)");
  c_met->add_option("--model", met.model);
  c_met->add_option("--steps", met.steps);
  c_met->add_option("--max-clusters", met.max_clusters, "Uniformly sample at most this many clusters (0: all)");
  c_met->add_option("--seed", met.seed);
  c_met->add_option("--out-csv", met.out_csv);
  c_met->add_option("--out-json", met.out_json);

  CurateArgs cur;
  auto* c_cur = app.add_subcommand("curate", "Select one representative per RAC cluster under a token budget");
  c_cur->add_option("--metadata", cur.metadata)->required()->check(CLI::ExistingFile);
  c_cur->add_option("--embeddings", cur.embeddings)->check(CLI::ExistingFile);
  c_cur->add_option("--dendrogram", cur.dendrogram)->check(CLI::ExistingFile);
  c_cur->add_option("--epsilon-grid", cur.grid);
  c_cur->add_option("--budget-tokens", cur.budget_tokens);
  c_cur->add_option("--budget-fraction", cur.budget_fraction);
  c_cur->add_flag("--by-count", cur.by_count, "Budget in examples (equal-length examples only)");
  c_cur->add_flag("--allow-overshoot", cur.allow_overshoot, "Admit the example that crosses the budget");
  c_cur->add_flag("--baseline", cur.baseline, "Random selection baseline");
  c_cur->add_flag("--coordinate-pruning", cur.pruning);
  c_cur->add_option("--seed", cur.seed);
  c_cur->add_option("--out", cur.out, "Plan id list; a .json sidecar is written next to it")->required();

  ReportArgs rep;
  auto* c_rep = app.add_subcommand("report", "Figure tables and SVG plots from metrics CSVs");
  c_rep->add_option("--metrics", rep.metrics)->check(CLI::ExistingFile);
  c_rep->add_option("--out", rep.out)->required();
  c_rep->add_option("--step-figure-size", rep.step_size)->capture_default_str();
  c_rep->add_flag("--replot", rep.replot, "Only re-render plots from the CSVs in --out");

  PipelineArgs pipe;
  auto* c_pipe = app.add_subcommand("pipeline", "Run every stage from a config file, reusing up-to-date stages");
  c_pipe->add_option("--config", pipe.config)->required()->check(CLI::ExistingFile);
  c_pipe->add_option("--set", pipe.overrides, "Override a config key: section.key=value");
  c_pipe->add_option("--out-dir", pipe.out_dir);
  c_pipe->add_option("--seed", pipe.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version exit 0; every usage error maps to the invalid-input code.
    return app.exit(e) == 0 ? kOk : kInvalid;
  }

  auto logger = spdlog::stderr_color_mt("embcurate");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::from_str(log_level));
  if (threads > 0) set_thread_count(threads);

  try {
    if (*c_synth) run_synthgen(synth);
    else if (*c_embed) run_embed(embed);
    else if (*c_reduce) run_reduce(reduce);
    else if (*c_km) run_kmeans(km);
    else if (*c_rac) run_rac(rac);
    else if (*c_met) run_metrics(met);
    else if (*c_cur) run_curate(cur);
    else if (*c_rep) {
      if (!rep.replot && rep.metrics.empty()) throw ValidationError("report needs --metrics or --replot");
      run_report(rep);
    } else if (*c_pipe) return run_pipeline_cmd(pipe);
  } catch (const StageError& e) {
    spdlog::error("{}", e.what());
    return kStageFailed;
  } catch (const ValidationError& e) {
    spdlog::error("invalid input: {}", e.what());
    return kInvalid;
  } catch (const InfeasibleError& e) {
    spdlog::error("infeasible: {}", e.what());
    return kInvalid;
  } catch (const FormatError& e) {
    spdlog::error("format error: {}", e.what());
    return kInvalid;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kFailure;
  }
  return kOk;
}
