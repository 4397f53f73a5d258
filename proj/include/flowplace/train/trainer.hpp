#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <thread>
#include <type_traits>

#include "flowplace/nn/velocity_model.hpp"
#include "flowplace/sampler/prior.hpp"
#include "flowplace/synthgen/netlist_builder.hpp"

namespace flowplace::train {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("learning rate must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
      throw ConfigError("Adam betas must lie in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("Adam eps must be > 0");
  }
};

struct TrainConfig {
  SourcePrior prior;
  int batch_size = 16;
  AdamConfig adam;
  int epochs = 20;
  std::uint64_t seed = 0;
  std::string data_path;
  int checkpoint_every = 0;  // epochs; 0 disables intermediate checkpoints
  int threads = 1;

  void validate() const {
    prior.validate();
    adam.validate();
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
    if (threads < 1) throw ConfigError("threads must be >= 1");
  }
};

/// One point on a conditional path: x_t between x0 and x1, regressing x1 - x0.
struct TrainingPair {
  Placement x0;
  Placement xt;
  Placement target;
  double t = 0.0;
};

inline TrainingPair make_pair_at(const Placement& x0, const Placement& x1, double t) {
  if (x0.size() != x1.size()) throw ContractError("x0 and x1 sizes differ");
  TrainingPair p{x0, Placement(x0.size()), Placement(x0.size()), t};
  for (std::size_t i = 0; i < x0.size(); ++i) {
    p.xt[i] = {(1 - t) * x0[i].x + t * x1[i].x, (1 - t) * x0[i].y + t * x1[i].y};
    p.target[i] = x1[i] - x0[i];
  }
  return p;
}

/// t ~ U(0, 1), x0 ~ prior.
inline TrainingPair make_training_pair(const PlacementInstance& inst, const Placement& x1, const SourcePrior& prior,
                                       Rng& rng) {
  require_same_size(inst, x1);
  const double t = uniform01(rng);
  return make_pair_at(sample_prior(prior, inst.size(), rng), x1, t);
}

template <class T>
struct TrainItem {
  const nn::GraphInput<T>* graph = nullptr;
  TrainingPair pair;
};

/// Mean squared error over every coordinate of the batch, for any predictor
/// pred(item) -> Placement.
template <class Item, class Pred>
double cfm_loss(std::span<const Item> batch, Pred&& pred) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const Item& it : batch) {
    const Placement v = pred(it);
    const Placement& y = it.pair.target;
    if (v.size() != y.size()) throw ContractError("prediction and target sizes differ");
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double ex = v[i].x - y[i].x, ey = v[i].y - y[i].y;
      sum += ex * ex + ey * ey;
    }
    count += 2 * y.size();
  }
  if (count == 0) throw ContractError("empty batch");
  return sum / static_cast<double>(count);
}

template <class T>
double cfm_loss(const nn::VelocityModel<T>& model, std::span<const TrainItem<T>> batch) {
  return cfm_loss(batch, [&](const TrainItem<T>& it) { return model.velocity(*it.graph, it.pair.xt, it.pair.t); });
}

template <class T>
class Adam {
 public:
  Adam(const std::vector<nn::Parameter<T>>& params, AdamConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    for (const auto& p : params) {
      m_.emplace_back(p.value.rows, p.value.cols);
      v_.emplace_back(p.value.rows, p.value.cols);
    }
  }

  void step(std::vector<nn::Parameter<T>>& params, const std::vector<nn::Matrix<T>>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& w = params[k].value.data;
      auto& m = m_[k].data;
      auto& v = v_[k].data;
      const auto& g = grads[k].data;
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = static_cast<T>(cfg_.beta1 * m[i] + (1 - cfg_.beta1) * g[i]);
        v[i] = static_cast<T>(cfg_.beta2 * v[i] + (1 - cfg_.beta2) * g[i] * g[i]);
        const double mh = m[i] / c1, vh = v[i] / c2;
        w[i] = static_cast<T>(w[i] - cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps));
      }
    }
  }

  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<nn::Matrix<T>> m_, v_;
  long t_ = 0;
};

/// Minibatch CFM optimizer. Per-item gradients are computed on separate tapes
/// (optionally across threads) and reduced in item order, so results do not
/// depend on the thread count.
template <class T>
class Trainer {
 public:
  Trainer(nn::VelocityModel<T>& model, AdamConfig cfg, int threads = 1)
      : model_(model), adam_(model.parameters(), cfg), threads_(std::max(1, threads)) {}

  /// Batch loss and its gradient; does not touch the parameters.
  double gradients(std::span<const TrainItem<T>> batch, std::vector<nn::Matrix<T>>& grads) const {
    std::size_t count = 0;
    for (const auto& it : batch) count += 2 * it.pair.target.size();
    if (count == 0) throw ContractError("empty batch");
    const double inv = 1.0 / static_cast<double>(count);
    std::vector<double> losses(batch.size());
    std::vector<std::vector<nn::Matrix<T>>> per_item(batch.size());
    auto work = [&](std::size_t i) {
      nn::Tape<T> tp;
      auto bound = model_.bind(tp, true);
      const auto& it = batch[i];
      auto out = model_.forward(tp, bound, *it.graph, nn::to_matrix<T>(it.pair.xt), it.pair.t);
      auto diff = nn::sub(out, tp.constant(nn::to_matrix<T>(it.pair.target)));
      auto loss = nn::scale(nn::sum_squares(diff), static_cast<T>(inv));
      tp.backward(loss);
      losses[i] = static_cast<double>(loss.value().data[0]);
      per_item[i].reserve(bound.vars.size());
      for (const auto& v : bound.vars) per_item[i].push_back(tp.gradient(v));
    };
    const std::size_t nthreads = std::min<std::size_t>(static_cast<std::size_t>(threads_), batch.size());
    if (nthreads <= 1) {
      for (std::size_t i = 0; i < batch.size(); ++i) work(i);
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < nthreads; ++w)
        pool.emplace_back([&, w] {
          for (std::size_t i = w; i < batch.size(); i += nthreads) work(i);
        });
    }
    const auto& params = model_.parameters();
    grads.clear();
    for (const auto& p : params) grads.emplace_back(p.value.rows, p.value.cols);
    double loss = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      loss += losses[i];
      for (std::size_t k = 0; k < grads.size(); ++k)
        for (std::size_t j = 0; j < grads[k].data.size(); ++j) grads[k].data[j] += per_item[i][k].data[j];
    }
    return loss;
  }

  /// One Adam update. A non-finite loss aborts the step with parameters unchanged.
  double step(std::span<const TrainItem<T>> batch) {
    const double loss = gradients(batch, grads_);
    if (!std::isfinite(loss)) throw NumericalError("non-finite loss at step " + std::to_string(adam_.steps()));
    adam_.step(model_.parameters(), grads_);
    return loss;
  }

  long steps() const { return adam_.steps(); }

 private:
  nn::VelocityModel<T>& model_;
  Adam<T> adam_;
  int threads_;
  std::vector<nn::Matrix<T>> grads_;
};

struct TrainResult {
  std::vector<double> step_loss;
  std::vector<double> epoch_loss;  // mean of the epoch's batch losses
};

inline void validate_dataset(const std::vector<Sample>& data) {
  if (data.empty()) throw ConfigError("training dataset is empty");
  for (std::size_t i = 0; i < data.size(); ++i) {
    try {
      data[i].instance.validate();
      require_same_size(data[i].instance, data[i].placement);
    } catch (const Error& e) {
      throw ConfigError("dataset sample " + std::to_string(i) + ": " + e.what());
    }
    if (!all_finite(data[i].placement)) throw ConfigError("dataset sample " + std::to_string(i) + ": non-finite target");
  }
}

inline constexpr std::uint64_t kShuffleStream = 1;
inline constexpr std::uint64_t kPairStream = 2;

/// Epoch loop: each epoch shuffles the dataset and draws one (x0, t) per
/// sample. `on_checkpoint(epoch)` runs every cfg.checkpoint_every epochs.
template <class T>
TrainResult train(const TrainConfig& cfg, const std::vector<Sample>& data, nn::VelocityModel<T>& model,
                  const std::type_identity_t<std::function<void(int, const nn::VelocityModel<T>&)>>& on_checkpoint = {}) {
  cfg.validate();
  validate_dataset(data);
  std::vector<nn::GraphInput<T>> graphs;
  graphs.reserve(data.size());
  for (const auto& s : data) graphs.push_back(nn::make_graph_input<T>(s.instance));

  Trainer<T> trainer(model, cfg.adam, cfg.threads);
  TrainResult res;
  std::vector<std::size_t> order(data.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(cfg.seed, kShuffleStream, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<TrainItem<T>> batch;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        Rng rng(derive_seed(cfg.seed, kPairStream, (static_cast<std::uint64_t>(epoch) << 32) | idx));
        batch.push_back({&graphs[idx], make_training_pair(data[idx].instance, data[idx].placement, cfg.prior, rng)});
      }
      const double loss = trainer.step(batch);
      res.step_loss.push_back(loss);
      epoch_sum += loss;
      ++batches;
    }
    res.epoch_loss.push_back(epoch_sum / batches);
    if (on_checkpoint && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)
      on_checkpoint(epoch + 1, model);
  }
  return res;
}

/// Means of `windows` equal consecutive segments of a loss history.
inline std::vector<double> window_means(const std::vector<double>& xs, std::size_t windows) {
  std::vector<double> out;
  if (xs.size() < windows || windows == 0) return out;
  for (std::size_t w = 0; w < windows; ++w) {
    const std::size_t a = w * xs.size() / windows, b = (w + 1) * xs.size() / windows;
    double s = 0.0;
    for (std::size_t i = a; i < b; ++i) s += xs[i];
    out.push_back(s / static_cast<double>(b - a));
  }
  return out;
}

}  // namespace flowplace::train
