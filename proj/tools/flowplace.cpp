// flowplace command-line driver: gen, train, sample, eval, bench, render.
//
// Every subcommand takes --config <file> (TOML/INI, keys are the long option
// names without dashes). Thread counts default to $FLOWPLACE_THREADS.

#include <CLI11.hpp>

#include <atomic>
#include <cstdio>
#include <iostream>
#include <mutex>
#include <thread>

#include "flowplace/harness/bench.hpp"
#include "flowplace/harness/svg.hpp"
#include "flowplace/train/trainer.hpp"

namespace fp = flowplace;
namespace fs = std::filesystem;

namespace {

constexpr const char* kThreadsEnv = "FLOWPLACE_THREADS";

const std::vector<std::string> kPriorNames{"uniform", "gaussian", "truncated", "narrow"};

std::string config_placeholder;

CLI::App* subcommand(CLI::App& app, const std::string& name, const std::string& help) {
  auto* sub = app.add_subcommand(name, help);
  // Listed for --help; the file itself is consumed by expand_config.
  sub->add_option("--config", config_placeholder, "config file (TOML/INI); command-line flags override it");
  return sub;
}

// CLI11 only reads config files for the top-level app. A subcommand's
// --config is therefore expanded into ordinary arguments placed ahead of the
// command line's own, which win because options keep their last value. Keys
// may use '_' for '-'; sections other than the subcommand's own are skipped,
// so one file can configure several subcommands.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  if (args.empty()) return args;
  for (std::size_t i = 1; i < args.size(); ++i) {
    std::string path;
    std::size_t span = 0;
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      span = 2;
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      span = 1;
    } else {
      continue;
    }
    if (!fs::exists(path)) throw CLI::FileError::Missing(path);
    std::vector<std::string> expanded;
    for (const auto& item : CLI::ConfigTOML().from_file(path)) {
      if (item.name == "++" || item.name == "--") continue;  // section open/close markers
      if (!item.parents.empty() && !(item.parents.size() == 1 && item.parents[0] == args[0])) continue;
      std::string key = item.name;
      std::replace(key.begin(), key.end(), '_', '-');
      if (item.inputs.size() == 1) {
        expanded.push_back("--" + key + "=" + item.inputs[0]);
      } else {
        expanded.push_back("--" + key);
        expanded.insert(expanded.end(), item.inputs.begin(), item.inputs.end());
      }
    }
    args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + span));
    args.insert(args.begin() + 1, expanded.begin(), expanded.end());
    break;
  }
  return args;
}

void add_threads(CLI::App* sub, int& threads) {
  sub->add_option("--threads", threads, "worker threads")->envname(kThreadsEnv)->check(CLI::PositiveNumber);
}

// Runs fn(i) for i in [0, n) on a small pool. Work is claimed by index, so the
// output only depends on fn.
template <class F>
void parallel_for(std::size_t n, int threads, F&& fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex m;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(m);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int k = 1; k < threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::string metrics_line(const fp::PlacementInstance& inst, const fp::Placement& p) {
  return "hpwl " + fp::io::format_real(fp::hpwl(inst, p)) + "\nhpwl_physical " +
         fp::io::format_real(fp::hpwl_physical(inst, p)) + "\noverlap " +
         fp::io::format_real(fp::total_overlap(inst, p)) + "\noverlap_ratio " +
         fp::io::format_real(fp::overlap_ratio(inst, p)) + "\ninside " +
         (fp::all_inside_canvas(inst, p) ? "1" : "0") + "\nlegal " + (fp::is_legal(inst, p) ? "1" : "0") + "\n";
}

// ---------------------------------------------------------------------------

struct GenArgs {
  fp::GenConfig cfg;
  std::size_t count = 100;
  std::uint64_t seed = 0;
  std::string mode = "masked";
  std::string out;
  int threads = 1;
};

void setup_gen(CLI::App& app, GenArgs& a) {
  auto* sub = subcommand(app, "gen", "generate a synthetic dataset");
  sub->add_option("--count", a.count, "number of samples");
  sub->add_option("--seed", a.seed, "base seed");
  sub->add_option("--mode", a.mode, "layout generator")->check(CLI::IsMember({"masked", "random"}));
  sub->add_option("--out", a.out, "output directory")->required();
  sub->add_option("--min-macros", a.cfg.min_macros);
  sub->add_option("--max-macros", a.cfg.max_macros);
  sub->add_option("--grid-cols", a.cfg.grid_cols);
  sub->add_option("--grid-rows", a.cfg.grid_rows);
  sub->add_option("--min-density", a.cfg.min_density);
  sub->add_option("--max-density", a.cfg.max_density);
  sub->add_option("--min-side", a.cfg.min_side);
  sub->add_option("--max-side", a.cfg.max_side);
  sub->add_option("--epsilon", a.cfg.epsilon, "boundary score epsilon");
  sub->add_option("--min-pins", a.cfg.min_pins);
  sub->add_option("--max-pins", a.cfg.max_pins);
  sub->add_option("--degree-cap", a.cfg.degree_cap);
  sub->add_option("--proximity", a.cfg.proximity, "pin distance threshold");
  sub->add_option("--canvas-width", a.cfg.canvas_width);
  sub->add_option("--canvas-height", a.cfg.canvas_height);
  add_threads(sub, a.threads);
  sub->callback([&a] {
    a.cfg.validate();
    const fp::GenMode mode = a.mode == "masked" ? fp::GenMode::masked : fp::GenMode::random;
    fs::create_directories(a.out);
    parallel_for(a.count, a.threads, [&](std::size_t i) {
      const auto s = fp::generate_sample(a.cfg, mode, fp::derive_seed(a.seed, 0, i));
      fp::save_instance(fp::sample_path(a.out, i), s.instance, &s.placement);
    });
    std::cout << "wrote " << a.count << " samples to " << a.out << "\n";
  });
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  fp::train::TrainConfig cfg;
  fp::nn::ModelConfig model;
  std::string prior = "uniform";
  std::string out;
  std::string loss;
  std::size_t limit = 0;
};

void setup_train(CLI::App& app, TrainArgs& a) {
  auto* sub = subcommand(app, "train", "train a velocity model on a dataset");
  sub->add_option("--data", a.cfg.data_path, "dataset directory")->required();
  sub->add_option("--out", a.out, "checkpoint path")->required();
  sub->add_option("--loss", a.loss, "loss table path (default: <out>.loss.csv)");
  sub->add_option("--seed", a.cfg.seed, "seed for initialization and sampling of pairs");
  sub->add_option("--limit", a.limit, "use the first N samples (0 = all)");
  sub->add_option("--epochs", a.cfg.epochs);
  sub->add_option("--batch-size", a.cfg.batch_size);
  sub->add_option("--lr", a.cfg.adam.lr, "Adam learning rate");
  sub->add_option("--prior", a.prior, "source distribution")->check(CLI::IsMember(kPriorNames));
  sub->add_option("--checkpoint-every", a.cfg.checkpoint_every, "epochs between <out>.eN snapshots");
  sub->add_option("--hidden", a.model.hidden);
  sub->add_option("--heads", a.model.heads);
  sub->add_option("--blocks", a.model.blocks);
  sub->add_option("--time-dim", a.model.time_dim);
  add_threads(sub, a.cfg.threads);
  sub->callback([&a] {
    a.cfg.prior = fp::SourcePrior::make(fp::parse_prior_kind(a.prior));
    a.cfg.validate();
    const auto data = fp::load_dataset(a.cfg.data_path, a.limit);
    fp::nn::VelocityModel<float> model(a.model, fp::derive_seed(a.cfg.seed, 3));
    const auto res = fp::train::train(a.cfg, data, model, [&](int epoch, const fp::nn::VelocityModel<float>& m) {
      fp::nn::save_checkpoint(m, a.out + ".e" + std::to_string(epoch));
    });
    std::string table = "step,loss\n";
    for (std::size_t i = 0; i < res.step_loss.size(); ++i)
      table += std::to_string(i) + "," + fp::io::format_real(res.step_loss[i]) + "\n";
    fp::io::write_file(a.loss.empty() ? a.out + ".loss.csv" : a.loss, table);
    fp::nn::save_checkpoint(model, a.out);
    std::cout << "trained " << res.step_loss.size() << " steps on " << data.size() << " samples";
    if (!res.epoch_loss.empty()) std::cout << ", final epoch loss " << fp::io::format_real(res.epoch_loss.back());
    std::cout << "\n";
  });
}

// ---------------------------------------------------------------------------

struct SampleArgs {
  fp::SamplerConfig cfg;
  std::string model, instance, out, trace;
  std::string prior = "uniform";
  std::string mode = "hard";
};

void add_projection(CLI::App* sub, fp::ProjectionConfig& p) {
  sub->add_option("--grid-cols", p.grid_cols, "projection grid columns");
  sub->add_option("--grid-rows", p.grid_rows, "projection grid rows");
  sub->add_option("--boundary-weight", p.boundary_weight);
  sub->add_option("--max-refinements", p.max_refinements);
}

void setup_sample(CLI::App& app, SampleArgs& a) {
  auto* sub = subcommand(app, "sample", "sample a placement for one instance");
  sub->add_option("--model", a.model, "checkpoint")->required();
  sub->add_option("--instance", a.instance, "instance file")->required();
  sub->add_option("--out", a.out, "placement output")->required();
  sub->add_option("--trace", a.trace, "write the per-step trajectory here");
  sub->add_option("--steps", a.cfg.steps);
  sub->add_option("--prior", a.prior)->check(CLI::IsMember(kPriorNames));
  sub->add_option("--mode", a.mode)->check(CLI::IsMember({"free", "hard"}));
  sub->add_option("--seed", a.cfg.seed);
  sub->add_option("--project-every", a.cfg.project_every);
  add_projection(sub, a.cfg.projection);
  sub->callback([&a] {
    a.cfg.prior = fp::SourcePrior::make(fp::parse_prior_kind(a.prior));
    a.cfg.mode = fp::parse_sample_mode(a.mode);
    const auto model = fp::nn::load_checkpoint(a.model);
    const auto inst = fp::load_instance(a.instance).instance;
    const auto graph = fp::nn::make_graph_input<float>(inst);
    const auto r = fp::sample(fp::model_field(model, graph), inst, a.cfg, !a.trace.empty());
    fp::io::write_file(a.out, fp::serialize_placement(r.placement));
    if (!a.trace.empty()) fp::io::write_file(a.trace, fp::serialize_trace(fp::Trace{r.trace}));
    std::cout << metrics_line(inst, r.placement);
  });
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string instance, placement, out;
};

void setup_eval(CLI::App& app, EvalArgs& a) {
  auto* sub = subcommand(app, "eval", "metrics for an instance and a placement");
  sub->add_option("--instance", a.instance, "instance file")->required();
  sub->add_option("--placement", a.placement, "placement file (default: the instance's reference placement)");
  sub->add_option("--out", a.out, "also write the metrics here");
  sub->callback([&a] {
    const auto f = fp::load_instance(a.instance);
    fp::Placement p;
    if (!a.placement.empty()) {
      p = fp::load_placement(a.placement);
    } else if (f.placement) {
      p = *f.placement;
    } else {
      throw fp::ConfigError(a.instance + " has no reference placement; pass --placement");
    }
    if (p.size() != f.instance.size())
      throw fp::ConfigError("placement has " + std::to_string(p.size()) + " positions, instance has " +
                            std::to_string(f.instance.size()) + " macros");
    const std::string text = metrics_line(f.instance, p);
    if (!a.out.empty()) fp::io::write_file(a.out, text);
    std::cout << text;
  });
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  std::string spec, out, timing;
  int threads = 1;
};

void setup_bench(CLI::App& app, BenchArgs& a) {
  auto* sub = subcommand(app, "bench", "run an ablation spec");
  sub->add_option("--spec", a.spec, "ablation spec (JSON)")->required();
  sub->add_option("--out", a.out, "report path (JSON)")->required();
  sub->add_option("--timing", a.timing, "per-row wall times (CSV)");
  add_threads(sub, a.threads);
  sub->callback([&a, sub] {
    auto spec = fp::load_ablation_spec(a.spec);
    if (sub->count("--threads") || std::getenv(kThreadsEnv)) spec.threads = a.threads;
    const auto rep = fp::run_ablation(spec);
    fp::io::write_file(a.out, fp::report_to_json(rep).dump(2) + "\n");
    if (!a.timing.empty()) fp::io::write_file(a.timing, fp::timing_csv(rep));
    for (const auto& m : rep.missing) std::cerr << "skipped: " << m << "\n";
    for (const auto& arm : rep.arms)
      std::cout << arm.label() << "  hpwl " << fp::io::format_real(arm.mean_hpwl) << "  ratio "
                << fp::io::format_real(arm.mean_ratio) << "  legal " << fp::io::format_real(arm.legal_fraction)
                << "\n";
  });
}

// ---------------------------------------------------------------------------

struct RenderArgs {
  std::string instance, placement, trace, out;
  fp::SvgOptions opt;
  bool no_nets = false, no_overlap = false;
};

void setup_render(CLI::App& app, RenderArgs& a) {
  auto* sub = subcommand(app, "render", "draw a placement or a trajectory as SVG");
  sub->add_option("--instance", a.instance, "instance file")->required();
  auto* pl = sub->add_option("--placement", a.placement, "placement file (default: the reference placement)");
  sub->add_option("--trace", a.trace, "trajectory file")->excludes(pl);
  sub->add_option("--out", a.out, "SVG output")->required();
  sub->add_option("--size", a.opt.size_px, "image size in pixels");
  sub->add_flag("--no-nets", a.no_nets);
  sub->add_flag("--no-overlap", a.no_overlap, "do not highlight overlaps");
  sub->callback([&a] {
    a.opt.show_nets = !a.no_nets;
    a.opt.highlight_overlap = !a.no_overlap;
    const auto f = fp::load_instance(a.instance);
    std::string svg;
    if (!a.trace.empty()) {
      svg = fp::render_trace_svg(f.instance, fp::parse_trace(fp::io::read_file(a.trace), a.trace), a.opt);
    } else if (!a.placement.empty()) {
      svg = fp::render_svg(f.instance, fp::load_placement(a.placement), a.opt);
    } else if (f.placement) {
      svg = fp::render_svg(f.instance, *f.placement, a.opt);
    } else {
      throw fp::ConfigError(a.instance + " has no reference placement; pass --placement or --trace");
    }
    fp::io::write_file(a.out, svg);
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flowplace: macro placement by flow matching"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  GenArgs gen;
  TrainArgs train;
  SampleArgs smp;
  EvalArgs ev;
  BenchArgs bench;
  RenderArgs render;
  setup_gen(app, gen);
  setup_train(app, train);
  setup_sample(app, smp);
  setup_eval(app, ev);
  setup_bench(app, bench);
  setup_render(app, render);
  try {
    auto args = expand_config(std::vector<std::string>(argv + 1, argv + argc));
    std::reverse(args.begin(), args.end());  // CLI11 consumes from the back
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const fp::Error& e) {
    std::cerr << "flowplace: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "flowplace: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
