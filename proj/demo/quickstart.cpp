// Generate a small dataset, fit a tiny velocity model, then place a held-out
// instance with and without the hard constraint. Writes quickstart.svg.

#include <iostream>

#include "flowplace/harness/instance_io.hpp"
#include "flowplace/harness/svg.hpp"
#include "flowplace/sampler/sampler.hpp"
#include "flowplace/train/trainer.hpp"

namespace fp = flowplace;

int main(int argc, char** argv) {
  const int epochs = argc > 1 ? std::atoi(argv[1]) : 30;

  fp::GenConfig gen;
  gen.min_macros = 8;
  gen.max_macros = 16;
  std::vector<fp::Sample> data;
  for (std::uint64_t i = 0; i < 300; ++i) data.push_back(fp::generate_sample(gen, fp::GenMode::masked, fp::derive_seed(7, 0, i)));

  fp::nn::VelocityModel<float> model({32, 4, 2, 16, 64.0}, 1);
  fp::train::TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 16;
  const auto res = fp::train::train(tc, data, model);
  std::cout << "epoch losses:";
  for (double l : res.epoch_loss) std::cout << " " << l;
  std::cout << "\n";

  const auto test = fp::generate_sample(gen, fp::GenMode::masked, fp::derive_seed(7, 1, 0));
  const auto graph = fp::nn::make_graph_input<float>(test.instance);
  fp::SamplerConfig sc;
  sc.steps = 20;
  sc.seed = 3;
  for (auto mode : {fp::SampleMode::free, fp::SampleMode::hard}) {
    sc.mode = mode;
    const auto r = fp::sample(fp::model_field(model, graph), test.instance, sc);
    std::cout << fp::to_string(mode) << ": hpwl " << fp::hpwl(test.instance, r.placement) << ", overlap "
              << fp::total_overlap(test.instance, r.placement) << ", legal "
              << (fp::is_legal(test.instance, r.placement) ? "yes" : "no") << "\n";
    if (mode == fp::SampleMode::hard) fp::io::write_file("quickstart.svg", fp::render_svg(test.instance, r.placement));
  }
  std::cout << "reference hpwl " << fp::hpwl(test.instance, test.placement) << "\n";
}
