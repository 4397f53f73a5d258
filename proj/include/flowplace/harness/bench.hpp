#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <thread>

#include <nlohmann/json.hpp>

#include "flowplace/harness/instance_io.hpp"
#include "flowplace/harness/stats.hpp"
#include "flowplace/nn/checkpoint.hpp"
#include "flowplace/sampler/sampler.hpp"

namespace flowplace {

struct BenchMethod {
  std::string name;
  std::string checkpoint;
  std::vector<PriorKind> priors;  // empty: use the spec-wide list
};

/// Ablation spec (JSON):
///
///   {
///     "instances": "heldout/",        dataset directory, relative to the spec file
///     "limit": 50,                    0 = all
///     "methods": [{"name": "masked", "checkpoint": "masked.fpvm", "priors": ["uniform"]}, ...],
///     "priors": ["uniform", "gaussian"],
///     "steps": [50],
///     "mode": "hard",
///     "runs": 2,                      seeds per instance, shared by every arm
///     "seed": 0,
///     "projection": {"grid": 64, "boundary_weight": 0.1, "max_refinements": 2},
///     "threads": 1
///   }
struct AblationSpec {
  std::string instances;
  std::size_t limit = 0;
  std::vector<BenchMethod> methods;
  std::vector<PriorKind> priors{PriorKind::uniform};
  std::vector<int> steps{50};
  SampleMode mode = SampleMode::hard;
  int runs = 1;
  std::uint64_t seed = 0;
  ProjectionConfig projection;
  int threads = 1;

  void validate() const {
    if (methods.empty()) throw ConfigError("ablation spec lists no methods");
    if (priors.empty() || steps.empty()) throw ConfigError("ablation spec needs priors and steps");
    for (int s : steps)
      if (s < 1) throw ConfigError("steps must be >= 1");
    if (runs < 1) throw ConfigError("runs must be >= 1");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    projection.validate();
  }
};

inline AblationSpec parse_ablation_spec(const nlohmann::json& j, const std::filesystem::path& base = {}) {
  AblationSpec s;
  try {
    auto path_of = [&](const std::string& p) {
      const std::filesystem::path fp(p);
      return (fp.is_absolute() || base.empty() ? fp : base / fp).string();
    };
    auto priors_of = [](const nlohmann::json& arr) {
      std::vector<PriorKind> out;
      for (const auto& p : arr) out.push_back(parse_prior_kind(p.get<std::string>()));
      return out;
    };
    s.instances = path_of(j.at("instances").get<std::string>());
    s.limit = j.value("limit", std::size_t{0});
    for (const auto& m : j.at("methods")) {
      BenchMethod bm{m.at("name").get<std::string>(), path_of(m.at("checkpoint").get<std::string>()), {}};
      if (m.contains("priors")) bm.priors = priors_of(m.at("priors"));
      s.methods.push_back(std::move(bm));
    }
    if (j.contains("priors")) s.priors = priors_of(j.at("priors"));
    if (j.contains("steps")) s.steps = j.at("steps").get<std::vector<int>>();
    s.mode = parse_sample_mode(j.value("mode", std::string("hard")));
    s.runs = j.value("runs", 1);
    s.seed = j.value("seed", std::uint64_t{0});
    s.threads = j.value("threads", 1);
    if (j.contains("projection")) {
      const auto& p = j.at("projection");
      const int grid = p.value("grid", s.projection.grid_cols);
      s.projection.grid_cols = s.projection.grid_rows = grid;
      s.projection.boundary_weight = p.value("boundary_weight", s.projection.boundary_weight);
      s.projection.max_refinements = p.value("max_refinements", s.projection.max_refinements);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("ablation spec: ") + e.what());
  }
  s.validate();
  return s;
}

inline AblationSpec load_ablation_spec(const std::filesystem::path& path) {
  try {
    return parse_ablation_spec(nlohmann::json::parse(io::read_file(path)), path.parent_path());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string(), e.what());
  }
}

struct BenchRow {
  std::size_t instance = 0;
  std::string method;
  std::string prior;
  int steps = 0;
  int run = 0;
  std::uint64_t seed = 0;
  double hpwl = 0.0;
  double overlap_ratio = 0.0;
  bool legal = false;
  double seconds = 0.0;  // sampling wall time
  std::string error;     // non-empty if sampling failed
};

struct ArmSummary {
  std::string method;
  std::string prior;
  int steps = 0;
  std::size_t samples = 0;
  std::size_t failures = 0;
  double mean_hpwl = 0.0;
  double mean_overlap_ratio = 0.0;
  double legal_fraction = 0.0;
  double mean_ratio = 0.0;  // per-instance HPWL over the best arm's, averaged

  std::string label() const { return method + "/" + prior + "/" + std::to_string(steps); }
};

/// Paired comparison over instances of per-instance mean HPWL; p_value tests
/// H1: arm a has lower HPWL than arm b.
struct ArmComparison {
  std::string arm_a;
  std::string arm_b;
  double mean_difference = 0.0;  // a - b
  TestResult test;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::vector<ArmSummary> arms;
  std::vector<ArmComparison> comparisons;
  std::vector<std::string> missing;  // skipped methods with reasons
};

namespace detail {

struct ArmKey {
  std::string method, prior;
  int steps;
  auto operator<=>(const ArmKey&) const = default;
};

}  // namespace detail

/// Per arm, per instance mean HPWL over successful runs.
inline std::map<detail::ArmKey, std::map<std::size_t, double>> instance_means(const std::vector<BenchRow>& rows) {
  std::map<detail::ArmKey, std::map<std::size_t, std::pair<double, int>>> acc;
  for (const auto& r : rows) {
    if (!r.error.empty()) continue;
    auto& cell = acc[{r.method, r.prior, r.steps}][r.instance];
    cell.first += r.hpwl;
    ++cell.second;
  }
  std::map<detail::ArmKey, std::map<std::size_t, double>> out;
  for (const auto& [arm, per] : acc)
    for (const auto& [inst, s] : per) out[arm][inst] = s.first / s.second;
  return out;
}

/// Aggregates and comparisons, recomputed from the per-run rows alone. Arm
/// order follows first appearance in `rows`.
inline void aggregate(BenchReport& rep) {
  rep.arms.clear();
  rep.comparisons.clear();
  std::vector<detail::ArmKey> order;
  for (const auto& r : rep.rows) {
    detail::ArmKey k{r.method, r.prior, r.steps};
    if (std::find(order.begin(), order.end(), k) == order.end()) order.push_back(k);
  }
  const auto means = instance_means(rep.rows);
  std::map<std::size_t, double> best;
  for (const auto& [arm, per] : means)
    for (const auto& [inst, v] : per) {
      auto it = best.find(inst);
      if (it == best.end() || v < it->second) best[inst] = v;
    }
  for (const auto& k : order) {
    ArmSummary s{k.method, k.prior, k.steps};
    std::size_t legal = 0;
    for (const auto& r : rep.rows) {
      if (r.method != k.method || r.prior != k.prior || r.steps != k.steps) continue;
      if (!r.error.empty()) {
        ++s.failures;
        continue;
      }
      ++s.samples;
      s.mean_hpwl += r.hpwl;
      s.mean_overlap_ratio += r.overlap_ratio;
      legal += r.legal;
    }
    if (s.samples) {
      s.mean_hpwl /= static_cast<double>(s.samples);
      s.mean_overlap_ratio /= static_cast<double>(s.samples);
      s.legal_fraction = static_cast<double>(legal) / static_cast<double>(s.samples);
    }
    if (auto it = means.find(k); it != means.end() && !it->second.empty()) {
      for (const auto& [inst, v] : it->second) s.mean_ratio += best[inst] > 0 ? v / best[inst] : 1.0;
      s.mean_ratio /= static_cast<double>(it->second.size());
    }
    rep.arms.push_back(std::move(s));
  }
  for (std::size_t a = 0; a < order.size(); ++a)
    for (std::size_t b = a + 1; b < order.size(); ++b) {
      const auto ia = means.find(order[a]), ib = means.find(order[b]);
      if (ia == means.end() || ib == means.end()) continue;
      std::vector<double> xa, xb;
      for (const auto& [inst, v] : ia->second)
        if (auto jt = ib->second.find(inst); jt != ib->second.end()) {
          xa.push_back(v);
          xb.push_back(jt->second);
        }
      if (xa.size() < 2) continue;
      ArmComparison c{rep.arms[a].label(), rep.arms[b].label(), 0.0, paired_t_less(xa, xb)};
      for (std::size_t i = 0; i < xa.size(); ++i) c.mean_difference += xa[i] - xb[i];
      c.mean_difference /= static_cast<double>(xa.size());
      rep.comparisons.push_back(std::move(c));
    }
}

/// Seed shared by every arm for (instance, run): arms see identical x0 draws.
inline std::uint64_t bench_seed(std::uint64_t base, std::size_t instance, int run) {
  return derive_seed(base, instance, static_cast<std::uint64_t>(run));
}

/// Runs every (method x prior x steps) arm over every instance and run.
/// `models[i]` is the model for spec.methods[i]; a null entry marks it missing.
inline BenchReport run_ablation(const AblationSpec& spec, const std::vector<PlacementInstance>& instances,
                                const std::vector<const nn::VelocityModel<float>*>& models) {
  spec.validate();
  if (models.size() != spec.methods.size()) throw ContractError("one model slot per method required");
  BenchReport rep;
  struct Arm {
    std::size_t method;
    PriorKind prior;
    int steps;
  };
  std::vector<Arm> arms;
  for (std::size_t m = 0; m < spec.methods.size(); ++m) {
    if (!models[m]) continue;
    const auto& priors = spec.methods[m].priors.empty() ? spec.priors : spec.methods[m].priors;
    for (PriorKind p : priors)
      for (int s : spec.steps) arms.push_back({m, p, s});
  }
  std::vector<nn::GraphInput<float>> graphs;
  for (const auto& inst : instances) graphs.push_back(nn::make_graph_input<float>(inst));

  const std::size_t per_arm = instances.size() * static_cast<std::size_t>(spec.runs);
  rep.rows.resize(arms.size() * per_arm);
  auto work = [&](std::size_t cell) {
    const Arm& arm = arms[cell / per_arm];
    const std::size_t inst = (cell % per_arm) / static_cast<std::size_t>(spec.runs);
    const int run = static_cast<int>(cell % static_cast<std::size_t>(spec.runs));
    BenchRow& row = rep.rows[cell];
    row = {inst, spec.methods[arm.method].name, to_string(arm.prior), arm.steps, run,
           bench_seed(spec.seed, inst, run)};
    SamplerConfig cfg;
    cfg.prior = SourcePrior::make(arm.prior);
    cfg.steps = arm.steps;
    cfg.mode = spec.mode;
    cfg.projection = spec.projection;
    cfg.seed = row.seed;
    try {
      const auto t0 = std::chrono::steady_clock::now();
      const auto res = sample(model_field(*models[arm.method], graphs[inst]), instances[inst], cfg);
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      row.hpwl = hpwl(instances[inst], res.placement);
      row.overlap_ratio = overlap_ratio(instances[inst], res.placement);
      row.legal = is_legal(instances[inst], res.placement);
    } catch (const Error& e) {
      row.error = e.what();
    }
  };
  const std::size_t cells = rep.rows.size();
  const std::size_t nthreads = std::min<std::size_t>(static_cast<std::size_t>(spec.threads), cells);
  if (nthreads <= 1) {
    for (std::size_t c = 0; c < cells; ++c) work(c);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < nthreads; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t c = w; c < cells; c += nthreads) work(c);
      });
  }
  aggregate(rep);
  return rep;
}

/// File-based entry point: loads instances and checkpoints named by the spec.
/// Unloadable checkpoints are recorded in `missing` and their arms skipped.
inline BenchReport run_ablation(const AblationSpec& spec) {
  spec.validate();
  std::vector<PlacementInstance> instances;
  for (auto& s : load_dataset(spec.instances, spec.limit)) instances.push_back(std::move(s.instance));
  std::vector<std::optional<nn::VelocityModel<float>>> storage(spec.methods.size());
  std::vector<const nn::VelocityModel<float>*> models(spec.methods.size(), nullptr);
  std::vector<std::string> missing;
  for (std::size_t m = 0; m < spec.methods.size(); ++m) {
    const auto& path = spec.methods[m].checkpoint;
    if (!std::filesystem::exists(path)) {
      missing.push_back(spec.methods[m].name + ": checkpoint '" + path + "' not found");
      continue;
    }
    try {
      storage[m] = nn::load_checkpoint(path);
      models[m] = &*storage[m];
    } catch (const Error& e) {
      missing.push_back(spec.methods[m].name + ": " + e.what());
    }
  }
  BenchReport rep = run_ablation(spec, instances, models);
  rep.missing = std::move(missing);
  return rep;
}

/// Deterministic part of the report (no wall times).
inline nlohmann::json report_to_json(const BenchReport& rep) {
  nlohmann::json j;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rep.rows) {
    nlohmann::json row{{"instance", r.instance}, {"method", r.method}, {"prior", r.prior},
                       {"steps", r.steps},       {"run", r.run},       {"seed", r.seed},
                       {"hpwl", r.hpwl},         {"overlap_ratio", r.overlap_ratio}, {"legal", r.legal}};
    if (!r.error.empty()) row["error"] = r.error;
    j["rows"].push_back(std::move(row));
  }
  j["arms"] = nlohmann::json::array();
  for (const auto& a : rep.arms)
    j["arms"].push_back({{"method", a.method},
                         {"prior", a.prior},
                         {"steps", a.steps},
                         {"samples", a.samples},
                         {"failures", a.failures},
                         {"mean_hpwl", a.mean_hpwl},
                         {"mean_overlap_ratio", a.mean_overlap_ratio},
                         {"legal_fraction", a.legal_fraction},
                         {"mean_hpwl_ratio", a.mean_ratio}});
  j["comparisons"] = nlohmann::json::array();
  for (const auto& c : rep.comparisons)
    j["comparisons"].push_back({{"a", c.arm_a},
                                {"b", c.arm_b},
                                {"mean_difference", c.mean_difference},
                                {"t", c.test.statistic},
                                {"dof", c.test.dof},
                                {"p_a_lower", c.test.p_value}});
  j["missing"] = rep.missing;
  return j;
}

inline std::string timing_csv(const BenchReport& rep) {
  std::ostringstream os;
  os << "instance,method,prior,steps,run,seconds\n";
  for (const auto& r : rep.rows)
    os << r.instance << ',' << r.method << ',' << r.prior << ',' << r.steps << ',' << r.run << ','
       << io::format_real(r.seconds) << '\n';
  return os.str();
}

}  // namespace flowplace
