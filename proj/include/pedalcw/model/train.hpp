#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "pedalcw/error.hpp"
#include "pedalcw/model/net.hpp"
#include "pedalcw/tokens.hpp"

// Training loop: sequences are chunked to the context length with one-token
// shift targets, batches are assembled from a seeded shuffle, and Adam with
// linear warmup applies the averaged gradient. Single-threaded on purpose:
// with a fixed seed the loss curve is bit-reproducible.

namespace pedalcw {

struct TrainOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  int warmup_steps = 100;
  int steps = 1000;
  int batch_size = 4;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // 0: no periodic snapshots
  std::function<void(int step)> on_checkpoint;  // called every checkpoint_every steps
  std::function<void(int step, double loss)> on_step;  // progress reporting
};

struct TrainResult {
  double first_loss = 0.0;
  double final_loss = 0.0;
  int steps = 0;
  std::vector<std::string> loss_log;  // CSV: step,total,then one column per field
};

namespace train_detail {

struct Chunk {
  std::vector<SuperToken> inputs;
  std::vector<SuperToken> targets;
};

/// Windows of context+1 tokens, shifted by one for targets, stride context.
inline std::vector<Chunk> chunk_corpus(const std::vector<std::vector<SuperToken>>& corpus,
                                       int context) {
  std::vector<Chunk> chunks;
  for (const auto& seq : corpus) {
    for (std::size_t start = 0; start + 1 < seq.size(); start += std::size_t(context)) {
      std::size_t end = std::min(seq.size(), start + std::size_t(context) + 1);
      Chunk c;
      c.inputs.assign(seq.begin() + start, seq.begin() + end - 1);
      c.targets.assign(seq.begin() + start + 1, seq.begin() + end);
      chunks.push_back(std::move(c));
      if (end == seq.size()) break;
    }
  }
  return chunks;
}

template <typename Real>
struct AdamState {
  std::vector<std::vector<double>> m, v;

  explicit AdamState(const std::vector<Tensor<Real>*>& params) {
    for (const Tensor<Real>* t : params) {
      m.emplace_back(std::size_t(t->size()), 0.0);
      v.emplace_back(std::size_t(t->size()), 0.0);
    }
  }

  void update(std::vector<Tensor<Real>*>& params, const TrainOptions& opt, int step) {
    double lr = opt.lr * std::min(1.0, double(step) / std::max(1, opt.warmup_steps));
    double bc1 = 1.0 - std::pow(opt.beta1, step);
    double bc2 = 1.0 - std::pow(opt.beta2, step);
    for (std::size_t p = 0; p < params.size(); ++p) {
      Tensor<Real>& t = *params[p];
      for (std::size_t i = 0; i < t.w.size(); ++i) {
        double g = double(t.g[i]);
        m[p][i] = opt.beta1 * m[p][i] + (1.0 - opt.beta1) * g;
        v[p][i] = opt.beta2 * v[p][i] + (1.0 - opt.beta2) * g * g;
        double mhat = m[p][i] / bc1;
        double vhat = v[p][i] / bc2;
        t.w[i] = Real(double(t.w[i]) - lr * mhat / (std::sqrt(vhat) + opt.eps));
      }
    }
  }
};

inline std::string csv_line(int step, double total, const std::array<double, kFieldCount>& field,
                            int steps_in_batch) {
  char buf[320];
  int n = std::snprintf(buf, sizeof(buf), "%d,%.9g", step, total);
  for (int f = 0; f < kFieldCount; ++f) {
    double per_step = steps_in_batch > 0 ? field[f] / steps_in_batch : 0.0;
    n += std::snprintf(buf + n, sizeof(buf) - std::size_t(n), ",%.9g", per_step);
  }
  return std::string(buf, std::size_t(n));
}

}  // namespace train_detail

/// Train in place. Raises empty_corpus when no usable chunk exists and
/// nan_loss if the loss ever stops being finite.
template <typename Real>
TrainResult train(Model<Real>& model, const std::vector<std::vector<SuperToken>>& corpus,
                  const TrainOptions& opt) {
  auto chunks = train_detail::chunk_corpus(corpus, model.config().context);
  if (chunks.empty()) raise(Errc::empty_corpus, "no trainable sequences (need length >= 2)");

  std::mt19937_64 shuffle_rng(opt.seed);
  std::mt19937_64 dropout_rng(opt.seed ^ 0x9e3779b97f4a7c15ull);
  train_detail::AdamState<Real> adam(model.params());

  std::vector<std::size_t> order(chunks.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = order.size();  // forces a shuffle before the first batch

  TrainResult result;
  result.loss_log.push_back("step,total,family,position,tempo,chord,pedal,pitch,duration");

  for (int step = 1; step <= opt.steps; ++step) {
    model.zero_grad();
    double total = 0.0;
    std::array<double, kFieldCount> field_sum{};
    int batch_steps = 0;
    for (int b = 0; b < opt.batch_size; ++b) {
      if (cursor == order.size()) {
        for (std::size_t i = order.size(); i > 1; --i) {
          std::size_t j = std::size_t(shuffle_rng() % i);
          std::swap(order[i - 1], order[j]);
        }
        cursor = 0;
      }
      const train_detail::Chunk& chunk = chunks[order[cursor++]];
      auto lb = model.loss_and_grad(chunk.inputs, chunk.targets, true, &dropout_rng,
                                    1.0 / opt.batch_size);
      total += lb.total;
      for (int f = 0; f < kFieldCount; ++f) field_sum[f] += lb.field_sum[f];
      batch_steps += lb.steps;
    }
    total /= opt.batch_size;
    if (!std::isfinite(total))
      raise(Errc::nan_loss, "non-finite loss at step " + std::to_string(step));

    adam.update(model.params(), opt, step);

    result.loss_log.push_back(train_detail::csv_line(step, total, field_sum, batch_steps));
    if (step == 1) result.first_loss = total;
    result.final_loss = total;
    result.steps = step;
    if (opt.on_step) opt.on_step(step, total);
    if (opt.checkpoint_every > 0 && opt.on_checkpoint && step % opt.checkpoint_every == 0)
      opt.on_checkpoint(step);
  }
  return result;
}

}  // namespace pedalcw
