#include "embcurate/curate.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <string>
#include <unordered_set>

#include <json.hpp>

#include "embcurate/error.hpp"
#include "embcurate/metrics.hpp"
#include "embcurate/parallel.hpp"
#include "embcurate/rng.hpp"

namespace embcurate {

std::vector<Representative> find_representatives(const Clustering& clustering, const EmbeddingMatrix& x) {
  if (clustering.size() != x.rows()) {
    throw ValidationError("clustering covers " + std::to_string(clustering.size()) + " examples, matrix has " +
                          std::to_string(x.rows()) + " rows");
  }
  const auto members = clustering.members();
  std::vector<Representative> reps(clustering.num_clusters());
  parallel_for(0, clustering.num_clusters(), 1024, [&](std::size_t lo, std::size_t hi) {
    std::vector<double> mean(x.dim());
    std::vector<float> centroid(x.dim());
    for (std::size_t c = lo; c < hi; ++c) {
      const auto idx = members.of(c);
      std::fill(mean.begin(), mean.end(), 0.0);
      for (auto i : idx) {
        const auto r = x.row(i);
        for (std::size_t t = 0; t < mean.size(); ++t) mean[t] += r[t];
      }
      for (std::size_t t = 0; t < mean.size(); ++t) {
        mean[t] /= static_cast<double>(idx.size());
      }
      Representative best{idx.front(), c, idx.size(), 0.0};
      bool first = true;
      for (auto i : idx) {  // ascending, so strict < keeps the lowest row on ties
        const auto r = x.row(i);
        double dist = 0.0;
        for (std::size_t t = 0; t < mean.size(); ++t) {
          const double diff = r[t] - mean[t];
          dist += diff * diff;
        }
        if (first || dist < best.centroid_distance) {
          best.index = i;
          best.centroid_distance = dist;
          first = false;
        }
      }
      reps[c] = best;
    }
  });
  return reps;
}

std::vector<std::size_t> select_representatives(const Clustering& clustering, const EmbeddingMatrix& x) {
  std::vector<std::size_t> out;
  for (const auto& r : find_representatives(clustering, x)) out.push_back(r.index);
  return out;
}

namespace {

void take_prefix(std::span<const std::size_t> order, std::span<const ExampleRecord> records, std::uint64_t budget,
                 Overshoot overshoot, CurationPlan& plan) {
  for (auto i : order) {
    const auto tokens = records[i].token_count;
    if (plan.token_total + tokens > budget) {
      if (overshoot == Overshoot::kAllow) {
        plan.selected_ids.push_back(records[i].id);
        plan.token_total += tokens;
      }
      break;
    }
    plan.selected_ids.push_back(records[i].id);
    plan.token_total += tokens;
    if (plan.token_total == budget) break;
  }
}

}  // namespace

CurationPlan curate(std::span<const ExampleRecord> records, const EmbeddingMatrix& x, const Dendrogram& dendrogram,
                    const EpsilonGrid& grid, std::uint64_t budget_tokens, const CurationOptions& options) {
  if (budget_tokens == 0) throw ValidationError("budget must be positive");
  if (records.size() != x.rows() || dendrogram.num_points != x.rows()) {
    throw ValidationError("records, embeddings and dendrogram disagree on the number of examples");
  }
  for (const auto& r : records) {
    if (r.token_count == 0) throw ValidationError("missing token count for example " + std::to_string(r.id));
  }
  if (grid.max() > dendrogram.epsilon_max) {
    throw ValidationError("epsilon grid exceeds the dendrogram's epsilon_max");
  }
  std::uint64_t required_clusters = 0;
  if (options.by_count) {
    const auto len = records.front().token_count;
    for (const auto& r : records) {
      if (r.token_count != len) throw ValidationError("--by-count requires every example to have the same token count");
    }
    required_clusters = (budget_tokens + len - 1) / len;
  }

  const auto& values = grid.values();
  for (auto it = values.rbegin(); it != values.rend(); ++it) {
    const Clustering clustering = dendrogram.cut(*it);
    if (options.by_count && clustering.num_clusters() < required_clusters) continue;
    auto reps = find_representatives(clustering, x);
    std::uint64_t rep_tokens = 0;
    for (const auto& r : reps) rep_tokens += records[r.index].token_count;
    if (!options.by_count && rep_tokens < budget_tokens) continue;

    std::sort(reps.begin(), reps.end(), [](const Representative& a, const Representative& b) {
      if (a.cluster_size != b.cluster_size) return a.cluster_size > b.cluster_size;
      if (a.centroid_distance != b.centroid_distance) return a.centroid_distance < b.centroid_distance;
      return a.index < b.index;
    });
    std::vector<std::size_t> order;
    order.reserve(reps.size());
    for (const auto& r : reps) order.push_back(r.index);

    CurationPlan plan;
    plan.epsilon_chosen = *it;
    plan.budget = budget_tokens;
    plan.num_clusters = clustering.num_clusters();
    plan.representative_tokens = rep_tokens;
    take_prefix(order, records, budget_tokens, options.overshoot, plan);
    return plan;
  }
  throw InfeasibleError("epsilon grid exhausted: even epsilon = " + format_number(values.front()) +
                        " cannot fill a budget of " + std::to_string(budget_tokens) + " tokens");
}

CurationPlan random_baseline(std::span<const ExampleRecord> records, std::uint64_t budget_tokens, std::uint64_t seed,
                             Overshoot overshoot) {
  if (budget_tokens == 0) throw ValidationError("budget must be positive");
  std::uint64_t total = 0;
  for (const auto& r : records) {
    if (r.token_count == 0) throw ValidationError("missing token count for example " + std::to_string(r.id));
    total += r.token_count;
  }
  if (budget_tokens > total) {
    throw InfeasibleError("budget of " + std::to_string(budget_tokens) + " tokens exceeds the corpus total " +
                          std::to_string(total));
  }
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);

  CurationPlan plan;
  plan.budget = budget_tokens;
  plan.baseline = true;
  plan.seed = seed;
  take_prefix(order, records, budget_tokens, overshoot, plan);
  return plan;
}

std::filesystem::path plan_sidecar_path(const std::filesystem::path& path) {
  auto side = path;
  side.replace_extension(".json");
  return side;
}

void save_plan(const std::filesystem::path& path, const CurationPlan& plan) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    std::string buffer;
    for (auto id : plan.selected_ids) {
      buffer += std::to_string(id);
      buffer += '\n';
    }
    out << buffer;
  }
  nlohmann::ordered_json side;
  side["baseline"] = plan.baseline;
  side["epsilon_chosen"] = plan.baseline ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(plan.epsilon_chosen);
  side["budget_tokens"] = plan.budget;
  side["token_total"] = plan.token_total;
  side["selected_count"] = plan.selected_ids.size();
  side["num_clusters"] = plan.num_clusters;
  side["representative_tokens"] = plan.representative_tokens;
  side["seed"] = plan.seed;
  std::ofstream out(plan_sidecar_path(path), std::ios::binary);
  if (!out) throw Error("cannot open " + plan_sidecar_path(path).string() + " for writing");
  out << side.dump(2) << '\n';
}

CurationPlan load_plan(const std::filesystem::path& path) {
  CurationPlan plan;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    plan.selected_ids.push_back(std::stoull(line));
  }
  std::ifstream side_in(plan_sidecar_path(path), std::ios::binary);
  if (!side_in) throw Error("cannot open " + plan_sidecar_path(path).string());
  const auto side = nlohmann::json::parse(side_in);
  plan.baseline = side.at("baseline").get<bool>();
  if (!side.at("epsilon_chosen").is_null()) plan.epsilon_chosen = side.at("epsilon_chosen").get<double>();
  plan.budget = side.at("budget_tokens").get<std::uint64_t>();
  plan.token_total = side.at("token_total").get<std::uint64_t>();
  plan.num_clusters = side.at("num_clusters").get<std::size_t>();
  plan.representative_tokens = side.at("representative_tokens").get<std::uint64_t>();
  plan.seed = side.at("seed").get<std::uint64_t>();
  return plan;
}

}  // namespace embcurate
