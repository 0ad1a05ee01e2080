#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "stitchlab/data.hpp"
#include "stitchlab/resnet.hpp"
#include "stitchlab/stitch.hpp"

namespace stitchlab {

struct Hyperparams {
  float learning_rate = 0.01f;
  float momentum = 0.9f;
  float weight_decay = 0.01f;
  int batch_size = 256;
  int epochs = 4;            // 4 vanilla stitch, 30 similarity-trained
  float warmup_fraction = 0.05f;
  uint64_t seed = 0;

  void validate() const {
    if (learning_rate <= 0 || momentum < 0 || weight_decay < 0)
      throw ArgumentError("hyperparams: rates must be positive");
    if (epochs < 1) throw ArgumentError("hyperparams: epochs must be >= 1");
    if (batch_size < 1) throw ArgumentError("hyperparams: batch_size must be >= 1");
    if (warmup_fraction < 0.0f || warmup_fraction > 0.5f)
      throw ArgumentError("hyperparams: warmup_fraction must be in [0, 0.5]");
  }
};

// Linear ramp 0 -> lr over W = round(warmup_fraction * total) steps, then
// cosine decay to 0 over the remainder.
inline double lr_at(long step, long total_steps, const Hyperparams& hp) {
  if (total_steps <= 0) throw ArgumentError("lr_at: total_steps must be > 0");
  if (step < 0 || step >= total_steps)
    throw ArgumentError("lr_at: step out of range");
  long warmup = std::lround(static_cast<double>(hp.warmup_fraction) * total_steps);
  if (step < warmup)
    return hp.learning_rate * static_cast<double>(step) / warmup;
  double t = static_cast<double>(step - warmup) / (total_steps - warmup);
  return hp.learning_rate * (1.0 + std::cos(std::numbers::pi * t)) / 2.0;
}

struct TrainReport {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_eval;  // task accuracy (or held metric)
  double wall_seconds = 0.0;
  uint64_t final_params_digest = 0;

  void write(const std::filesystem::path& path) const {
    std::ofstream out(path);
    out << "epochs = " << epoch_loss.size() << "\n";
    out << "wall_seconds = " << wall_seconds << "\n";
    out << "final_params_digest = " << final_params_digest << "\n";
    for (size_t e = 0; e < epoch_loss.size(); ++e)
      out << "epoch " << e << " loss " << epoch_loss[e] << " eval "
          << epoch_eval[e] << "\n";
  }
};

// ---------------------------------------------------------------------------
// Momentum SGD with decoupled-from-bias weight decay
// ---------------------------------------------------------------------------

struct Sgd {
  std::vector<std::vector<float>> velocity;

  void step(std::vector<ParamRef>& params, double lr, const Hyperparams& hp) {
    if (velocity.empty())
      for (const auto& p : params) velocity.emplace_back(p.value->size(), 0.0f);
    for (size_t k = 0; k < params.size(); ++k) {
      auto& w = *params[k].value;
      auto& g = *params[k].grad;
      auto& v = velocity[k];
      const float wd = params[k].weight_decay ? hp.weight_decay : 0.0f;
      for (size_t i = 0; i < w.size(); ++i) {
        v[i] = hp.momentum * v[i] + g[i] + wd * w[i];
        w[i] -= static_cast<float>(lr) * v[i];
      }
    }
  }
};

namespace detail {

inline std::vector<ParamRef> stitch_params(Stitch& s) {
  return {{"stitch.conv.w", &s.conv.w, &s.conv.gw, true},
          {"stitch.conv.b", &s.conv.b, &s.conv.gb, false}};
}

inline void check_finite(double loss, long step) {
  if (!std::isfinite(loss))
    throw TrainingFailure(
        "training diverged (loss not finite) at step " + std::to_string(step),
        step);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Zoo training
// ---------------------------------------------------------------------------

inline TrainReport train_network(SmallResNet& model, const DatasetSplit& train,
                                 const DatasetSplit& test,
                                 const Hyperparams& hp,
                                 AugmentPolicy policy = AugmentPolicy::crop_flip) {
  hp.validate();
  auto t0 = std::chrono::steady_clock::now();
  TrainReport report;
  long steps_per_epoch = (train.count + hp.batch_size - 1) / hp.batch_size;
  long total_steps = steps_per_epoch * hp.epochs;
  Sgd sgd;
  auto params = named_params(model);
  long step = 0;
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    auto order = epoch_order(train, hp.seed, epoch);
    double loss_sum = 0.0;
    for (long b = 0; b < steps_per_epoch; ++b) {
      size_t lo = static_cast<size_t>(b) * hp.batch_size;
      size_t hi = std::min(order.size(), lo + hp.batch_size);
      std::vector<int> idx(order.begin() + lo, order.begin() + hi);
      ImageBatch batch = train.batch(idx);
      batch = augment(batch, policy, mix_seed(hp.seed, 0xB00ULL + step));
      for (auto& p : params) std::fill(p.grad->begin(), p.grad->end(), 0.0f);
      ModelTrainCache cache;
      Tensor logits = forward_train(model, batch.images, cache);
      Tensor dlogits;
      double loss = softmax_xent(logits, batch.labels, &dlogits);
      detail::check_finite(loss, step);
      loss_sum += loss;
      backward_train(model, cache, dlogits);
      sgd.step(params, lr_at(step, total_steps, hp), hp);
      ++step;
    }
    report.epoch_loss.push_back(loss_sum / steps_per_epoch);
    report.epoch_eval.push_back(evaluate(model, test));
  }
  model.provenance = Provenance::trained;
  model.test_accuracy = report.epoch_eval.back();
  model.train_accuracy = evaluate(model, train);
  report.final_params_digest = model_digest(model);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

// ---------------------------------------------------------------------------
// Vanilla stitch training: task cross-entropy through the frozen receiver
// suffix; only stitch parameters move.
// ---------------------------------------------------------------------------

inline TrainReport train_stitch_task(StitchedNetwork& net,
                                     const DatasetSplit& train,
                                     const DatasetSplit& test,
                                     const Hyperparams& hp,
                                     AugmentPolicy policy = AugmentPolicy::crop_flip) {
  hp.validate();
  auto t0 = std::chrono::steady_clock::now();
  uint64_t digest_before = net.compute_frozen_digest();
  TrainReport report;
  long steps_per_epoch = (train.count + hp.batch_size - 1) / hp.batch_size;
  long total_steps = steps_per_epoch * hp.epochs;
  Sgd sgd;
  auto params = detail::stitch_params(net.stitch);
  long step = 0;
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    auto order = epoch_order(train, hp.seed, epoch);
    double loss_sum = 0.0;
    for (long b = 0; b < steps_per_epoch; ++b) {
      size_t lo = static_cast<size_t>(b) * hp.batch_size;
      size_t hi = std::min(order.size(), lo + hp.batch_size);
      std::vector<int> idx(order.begin() + lo, order.begin() + hi);
      ImageBatch batch = train.batch(idx);
      batch = augment(batch, policy, mix_seed(hp.seed, 0x5B00ULL + step));
      net.stitch.conv.zero_grad();
      Tensor provided = forward_prefix(*net.sender, net.i, batch.images);
      Stitch::Cache scache;
      Tensor stitched = net.stitch.forward(provided, &scache);
      SuffixCache rcache;
      Tensor logits =
          suffix_forward_cached(*net.receiver, net.j, stitched, rcache);
      Tensor dlogits;
      double loss = softmax_xent(logits, batch.labels, &dlogits);
      detail::check_finite(loss, step);
      loss_sum += loss;
      Tensor dact = suffix_backward_input(*net.receiver, rcache, dlogits);
      net.stitch.backward(scache, dact);
      sgd.step(params, lr_at(step, total_steps, hp), hp);
      ++step;
    }
    report.epoch_loss.push_back(loss_sum / steps_per_epoch);
    report.epoch_eval.push_back(evaluate_stitched(net, test));
  }
  if (net.compute_frozen_digest() != digest_before)
    throw Error("frozen digest changed during stitch training");
  report.final_params_digest = net.stitch.param_digest();
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

// ---------------------------------------------------------------------------
// Similarity-trained stitch: mean squared error against the receiver's
// expected representation B_{<=j}(x). No augmentation, so passes are
// deterministic.
// ---------------------------------------------------------------------------

inline TrainReport train_stitch_similarity(const SmallResNet& sender, int i,
                                           const SmallResNet& receiver, int j,
                                           Stitch& stitch,
                                           const DatasetSplit& train,
                                           const Hyperparams& hp) {
  hp.validate();
  auto t0 = std::chrono::steady_clock::now();
  uint64_t sd = model_digest(sender), rd = model_digest(receiver);
  TrainReport report;
  long steps_per_epoch = (train.count + hp.batch_size - 1) / hp.batch_size;
  long total_steps = steps_per_epoch * hp.epochs;
  Sgd sgd;
  auto params = detail::stitch_params(stitch);
  long step = 0;
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    auto order = epoch_order(train, hp.seed, epoch);
    double loss_sum = 0.0;
    for (long b = 0; b < steps_per_epoch; ++b) {
      size_t lo = static_cast<size_t>(b) * hp.batch_size;
      size_t hi = std::min(order.size(), lo + hp.batch_size);
      std::vector<int> idx(order.begin() + lo, order.begin() + hi);
      ImageBatch batch = train.batch(idx);
      stitch.conv.zero_grad();
      Tensor provided = forward_prefix(sender, i, batch.images);
      Tensor expected = forward_prefix(receiver, j, batch.images);
      Stitch::Cache scache;
      Tensor out = stitch.forward(provided, &scache);
      if (!out.same_shape(expected))
        throw ShapeError("similarity loss: stitch output " + out.shape_str() +
                         " vs expected representation " + expected.shape_str());
      double loss = 0.0;
      Tensor dout = Tensor::like(out);
      const double inv = 1.0 / static_cast<double>(out.size());
      for (size_t e = 0; e < out.size(); ++e) {
        double diff = static_cast<double>(out.data[e]) - expected.data[e];
        loss += diff * diff * inv;
        dout.data[e] = static_cast<float>(2.0 * diff * inv);
      }
      detail::check_finite(loss, step);
      loss_sum += loss;
      stitch.backward(scache, dout);
      sgd.step(params, lr_at(step, total_steps, hp), hp);
      ++step;
    }
    report.epoch_loss.push_back(loss_sum / steps_per_epoch);
    report.epoch_eval.push_back(report.epoch_loss.back());
  }
  if (model_digest(sender) != sd || model_digest(receiver) != rd)
    throw Error("frozen digest changed during similarity stitch training");
  report.final_params_digest = stitch.param_digest();
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

// ---------------------------------------------------------------------------
// Central-difference gradient check for stitch parameters.
// ---------------------------------------------------------------------------

struct FdResult {
  bool pass = false;
  double max_rel_err = 0.0;
};

// Scalar loss 0.5*sum(out^2); grad_scale != 1 deliberately corrupts the
// analytic gradient (mutation hook for tests).
inline FdResult finite_difference_check(Stitch stitch, const Tensor& activation,
                                        double tolerance,
                                        double grad_scale = 1.0) {
  auto loss_of = [&](const Stitch& s) {
    Tensor out = s.forward(activation);
    double l = 0.0;
    for (float v : out.data) l += 0.5 * static_cast<double>(v) * v;
    return l;
  };
  stitch.conv.zero_grad();
  Stitch::Cache cache;
  Tensor out = stitch.forward(activation, &cache);
  stitch.backward(cache, out);  // dL/dout = out

  FdResult res;
  res.max_rel_err = 0.0;
  auto check = [&](std::vector<float>& w, const std::vector<float>& g) {
    for (size_t k = 0; k < w.size(); ++k) {
      const float saved = w[k];
      const float h = 1e-2f;
      w[k] = saved + h;
      double lp = loss_of(stitch);
      w[k] = saved - h;
      double lm = loss_of(stitch);
      w[k] = saved;
      double numeric = (lp - lm) / (2.0 * h);
      double analytic = static_cast<double>(g[k]) * grad_scale;
      double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-4});
      res.max_rel_err =
          std::max(res.max_rel_err, std::abs(numeric - analytic) / scale);
    }
  };
  check(stitch.conv.w, stitch.conv.gw);
  check(stitch.conv.b, stitch.conv.gb);
  res.pass = res.max_rel_err < tolerance;
  return res;
}

}  // namespace stitchlab
