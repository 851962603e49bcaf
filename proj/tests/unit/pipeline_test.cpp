#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "embcurate/config.hpp"
#include "embcurate/corpus_io.hpp"
#include "embcurate/error.hpp"
#include "embcurate/parallel.hpp"
#include "embcurate/pipeline.hpp"
#include "embcurate/testkit.hpp"
#include "test_util.hpp"

using namespace embcurate;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes a synthetic corpus plus a config referring to it by relative paths.
fs::path write_corpus(const fs::path& dir, std::size_t n, std::uint64_t seed) {
  testkit::SyntheticSpec spec;
  spec.n = n;
  spec.d = 32;
  spec.latent_dim = 16;
  spec.k_true = n / 50;
  spec.steps = {1000, 5000};
  spec.duplicate_fraction = 0.02;
  spec.seed = seed;
  const auto g = testkit::generate(spec);
  fs::create_directories(dir);
  save_metadata(dir / "metadata.jsonl", g.corpus.records);
  save_embeddings(dir / "planted.emb", g.corpus.embeddings.at("planted"));
  save_embeddings(dir / "noise.emb", g.corpus.embeddings.at("noise"));
  std::ofstream cfg(dir / "pipeline.toml");
  cfg << "seed = 5\n"
         "out_dir = \"run\"\n"
         "[corpus]\nmetadata = \"metadata.jsonl\"\n"
         "[models.planted]\nembeddings = \"planted.emb\"\n"
         "[models.noise]\nembeddings = \"noise.emb\"\n"
         "[reduce]\ncomponents = 16\n"
         "[kmeans]\nsizes = [25, 50, 100]\nmax_iters = 10\n"
         "[rac]\nepsilon_grid = [0.01, 0.05, 0.1, 0.2, 0.4]\n"
         "[curate]\nbudget_fraction = 0.2\n";
  return dir / "pipeline.toml";
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
  }
  return out;
}

}  // namespace

TEST(Pipeline, SmokeRerunAndManifest) {
  test_util::TempDir dir;
  const auto cfg_path = write_corpus(dir.path(), 10000, 1);
  const auto cfg = PipelineConfig::load(cfg_path);
  const auto first = run_pipeline(cfg);
  const fs::path out = dir / "run";
  EXPECT_EQ(first.out_dir, out);
  for (const char* f : {"manifest.json", "plans/planted.txt", "plans/planted.json", "plans/random.txt",
                        "metrics/metrics.csv", "report/vr_vs_avg_size.svg", "report/purity.svg",
                        "clusters/planted/kmeans_50.csv", "rac/noise.dnd", "reduced/planted.emb"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  EXPECT_FALSE(fs::exists(out / "INCOMPLETE"));
  for (const auto& s : first.stages) EXPECT_TRUE(s.executed) << s.name;

  const auto manifest = slurp(first.manifest);
  const auto before = tree_contents(out);
  const auto second = run_pipeline(cfg);
  for (const auto& s : second.stages) EXPECT_FALSE(s.executed) << s.name;
  EXPECT_EQ(slurp(second.manifest), manifest);
  EXPECT_EQ(tree_contents(out), before);

  // Touching one stage's parameters reruns only what depends on it.
  auto changed = cfg;
  changed.budget_fraction = 0.1;
  const auto third = run_pipeline(changed);
  for (const auto& s : third.stages) {
    const bool curate_like = s.name.rfind("curate-", 0) == 0 || s.name == "baseline";
    EXPECT_EQ(s.executed, curate_like) << s.name;
  }
}

TEST(Pipeline, ArtifactsIndependentOfThreadCount) {
  test_util::TempDir dir;
  const auto cfg_path = write_corpus(dir.path(), 3000, 2);
  auto cfg = PipelineConfig::load(cfg_path);
  const unsigned saved = thread_count();
  cfg.out_dir = dir / "t1";
  set_thread_count(1);
  run_pipeline(cfg);
  cfg.out_dir = dir / "t4";
  set_thread_count(4);
  run_pipeline(cfg);
  set_thread_count(saved);
  const auto a = tree_contents(dir / "t1");
  const auto b = tree_contents(dir / "t4");
  ASSERT_EQ(a.size(), b.size());
  for (const auto& [name, content] : a) EXPECT_TRUE(b.count(name) && b.at(name) == content) << name;
}

TEST(Pipeline, MissingInputFailsBeforeCompute) {
  test_util::TempDir dir;
  const auto cfg_path = write_corpus(dir.path(), 500, 3);
  fs::remove(dir / "noise.emb");
  try {
    run_pipeline(PipelineConfig::load(cfg_path));
    FAIL();
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("noise.emb"), std::string::npos) << msg;
    EXPECT_NE(msg.find("models.noise.embeddings"), std::string::npos) << msg;
  }
  EXPECT_FALSE(fs::exists(dir / "run"));
}

TEST(Pipeline, ConfigValidation) {
  test_util::TempDir dir;
  const auto cfg_path = write_corpus(dir.path(), 500, 4);
  EXPECT_THROW(PipelineConfig::load(cfg_path, {"kmeans.sizez=[5]"}), ValidationError);
  EXPECT_THROW(PipelineConfig::load(cfg_path, {"kmeans.sizes=[5, 5]"}).validate(), ValidationError);
  EXPECT_THROW(PipelineConfig::load(cfg_path, {"reduce.scheme=\"svd\""}).validate(), ValidationError);
  const auto c = PipelineConfig::load(cfg_path, {"seed=11", "reduce.scheme=rp"});
  EXPECT_EQ(c.seed, 11u);
  EXPECT_EQ(c.reducer, "rp");
  EXPECT_EQ(c.metadata, dir / "metadata.jsonl");
  EXPECT_NE(c.kmeans_seed(), c.baseline_seed());
}

#ifdef EMBCURATE_CLI_PATH
TEST(Cli, ExitCodes) {
  test_util::TempDir dir;
  const std::string cli = EMBCURATE_CLI_PATH;
  auto run = [&](const std::string& args) {
    const int status = std::system((cli + " --log-level off " + args + " > /dev/null 2>&1").c_str());
    return WEXITSTATUS(status);
  };
  const std::string corpus = (dir / "corpus").string();
  EXPECT_EQ(run("synthgen --out " + corpus + " --n 400 --d 8 --k-true 8 --seed 1"), 0);
  EXPECT_TRUE(fs::exists(dir / "corpus" / "pipeline.toml"));
  EXPECT_EQ(run("pipeline --config " + (dir / "missing.toml").string()), 2);
  EXPECT_EQ(run("cluster-kmeans --input " + corpus + "/planted.emb --metadata " + corpus +
                "/metadata.jsonl --avg-size 1000 --out-dir " + (dir / "km").string()),
            2);
  {
    std::ofstream bad(dir / "bad.emb", std::ios::binary);
    bad << "garbage";
  }
  EXPECT_EQ(run("reduce --input " + (dir / "bad.emb").string() + " --out " + (dir / "r.emb").string() + " --k 2"), 2);
  EXPECT_EQ(run("pipeline --config " + corpus + "/pipeline.toml --set kmeans.sizes=[1000]"), 3);
  EXPECT_NE(run("no-such-command"), 0);
}
#endif
