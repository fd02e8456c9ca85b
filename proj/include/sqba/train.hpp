#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "sqba/dataset.hpp"
#include "sqba/errors.hpp"
#include "sqba/network.hpp"

namespace sqba {

enum class Optimizer { sgd, adam };

struct TrainConfig {
  int epochs = 30;
  int batch_size = 32;
  double lr = 1e-3;
  Optimizer optimizer = Optimizer::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
};

inline double accuracy(const Network& net, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (predict(net, data.images[i]) == data.labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

// Minibatch cross-entropy training, deterministic for a fixed config and
// dataset. Returns the mean loss of the final epoch. Throws TrainingError
// if the loss stops being finite.
inline double train(Network& net, const Dataset& data, const TrainConfig& cfg) {
  if (data.size() == 0) throw TrainingError("train: empty dataset");
  if (data.shape != net.input || data.num_classes != net.num_classes)
    throw TrainingError("train: dataset does not match network");
  if (cfg.epochs <= 0 || cfg.batch_size <= 0) throw TrainingError("train: bad config");

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  ParamGrads grads = zero_param_grads(net);
  ParamGrads m = zero_param_grads(net);  // adam first moment
  ParamGrads v = zero_param_grads(net);  // adam second moment
  long long step = 0;
  double last_epoch_loss = 0.0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto& g : grads.w) std::fill(g.begin(), g.end(), 0.0);
      for (auto& g : grads.b) std::fill(g.begin(), g.end(), 0.0);
      for (std::size_t i = start; i < end; ++i) {
        const Tensor& x = data.images[order[i]];
        const int label = data.labels[order[i]];
        std::vector<double> dlogits = softmax(forward(net, x));
        epoch_loss -= std::log(std::max(dlogits[label], 1e-300));
        dlogits[label] -= 1.0;
        for (double& g : dlogits) g *= inv;
        input_gradient(net, x, dlogits, &grads);
      }
      ++step;
      for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto update = [&](std::vector<float>& w, std::vector<double>& g,
                          std::vector<double>& mw, std::vector<double>& vw) {
          if (cfg.optimizer == Optimizer::sgd) {
            for (std::size_t i = 0; i < w.size(); ++i)
              w[i] = static_cast<float>(w[i] - cfg.lr * g[i]);
            return;
          }
          const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
          const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
          for (std::size_t i = 0; i < w.size(); ++i) {
            mw[i] = cfg.adam_beta1 * mw[i] + (1.0 - cfg.adam_beta1) * g[i];
            vw[i] = cfg.adam_beta2 * vw[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
            const double mhat = mw[i] / c1, vhat = vw[i] / c2;
            w[i] = static_cast<float>(w[i] - cfg.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps));
          }
        };
        if (auto* d = std::get_if<DenseLayer>(&net.layers[l])) {
          update(d->w, grads.w[l], m.w[l], v.w[l]);
          update(d->b, grads.b[l], m.b[l], v.b[l]);
        } else if (auto* c = std::get_if<ConvLayer>(&net.layers[l])) {
          update(c->w, grads.w[l], m.w[l], v.w[l]);
          update(c->b, grads.b[l], m.b[l], v.b[l]);
        }
      }
    }
    if (!std::isfinite(epoch_loss)) throw TrainingError("train: loss diverged");
    last_epoch_loss = epoch_loss / static_cast<double>(data.size());
  }
  return last_epoch_loss;
}

}  // namespace sqba
