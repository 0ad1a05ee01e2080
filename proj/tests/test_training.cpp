#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "stitchlab/train.hpp"

using namespace stitchlab;

namespace {

Tensor random_tensor(int n, int c, int h, int w, uint64_t seed) {
  Tensor t(n, c, h, w);
  fill_normal(t.data, 1.0f, seed);
  return t;
}

}  // namespace

TEST_CASE("lr_at hits the peak rate exactly at warmup end") {
  Hyperparams hp;
  hp.warmup_fraction = 0.1f;
  long total = 100;
  long warmup = 10;
  // warmup end lands on the cosine start: exactly the peak rate
  REQUIRE(lr_at(warmup, total, hp) ==
          static_cast<double>(hp.learning_rate));
  REQUIRE(lr_at(0, total, hp) == 0.0);
}

TEST_CASE("lr_at cosine tail approaches zero") {
  Hyperparams hp;
  hp.warmup_fraction = 0.1f;
  REQUIRE(lr_at(99, 100, hp) < 1e-4);
}

TEST_CASE("lr_at degenerate warmup starts at the peak") {
  Hyperparams hp;
  hp.warmup_fraction = 0.0f;
  REQUIRE(lr_at(0, 50, hp) == Catch::Approx(0.01));
}

TEST_CASE("lr_at rejects empty schedules") {
  Hyperparams hp;
  REQUIRE_THROWS_AS(lr_at(0, 0, hp), ArgumentError);
}

TEST_CASE("lr schedule is continuous at warmup and non-increasing after") {
  Hyperparams hp;
  hp.warmup_fraction = 0.2f;
  long total = 200, warmup = 40;
  REQUIRE(std::abs(lr_at(warmup - 1, total, hp) - lr_at(warmup, total, hp)) <
          hp.learning_rate / warmup + 1e-9);
  for (long s = warmup; s + 1 < total; ++s)
    REQUIRE(lr_at(s + 1, total, hp) <= lr_at(s, total, hp) + 1e-15);
}

TEST_CASE("finite differences confirm gradients for all three stitch kinds") {
  struct Case {
    TensorShape in, out;
  };
  for (auto [in, out] : std::vector<std::pair<TensorShape, TensorShape>>{
           {{3, 4, 4}, {5, 4, 4}},     // 1x1 projection
           {{3, 4, 4}, {5, 2, 2}},     // downsample k=2
           {{3, 2, 2}, {5, 4, 4}}}) {  // upsample k=2
    Stitch s = build_stitch(plan_stitch(in, out), 17);
    Tensor act = random_tensor(2, in.c, in.h, in.w, 23);
    FdResult r = finite_difference_check(s, act, 1e-2);
    INFO(to_string(s.spec.kind) << " max rel err " << r.max_rel_err);
    REQUIRE(r.pass);
  }
}

TEST_CASE("a corrupted gradient fails the finite-difference check") {
  Stitch s = build_stitch(plan_stitch({3, 4, 4}, {5, 4, 4}), 17);
  Tensor act = random_tensor(2, 3, 4, 4, 23);
  FdResult r = finite_difference_check(s, act, 1e-2, /*grad_scale=*/2.0);
  REQUIRE_FALSE(r.pass);
}

TEST_CASE("vanilla stitch training moves only the stitch") {
  SmallResNet a = build_model(ArchSpec::parse("R1111"), 31);
  SmallResNet b = build_model(ArchSpec::parse("R1111"), 32);
  DatasetSplit train = make_synthetic(32, 1);
  DatasetSplit test = make_synthetic(16, 2);
  Stitch s = build_stitch(plan_stitch({64, 32, 32}, {128, 16, 16}), 3);
  StitchedNetwork net = assemble(a, 1, b, 2, std::move(s));
  uint64_t frozen_before = net.frozen_digest;
  uint64_t stitch_before = net.stitch.param_digest();

  Hyperparams hp;
  hp.epochs = 1;
  hp.batch_size = 16;
  hp.seed = 9;
  TrainReport report = train_stitch_task(net, train, test, hp);
  REQUIRE(net.compute_frozen_digest() == frozen_before);
  REQUIRE(net.stitch.param_digest() != stitch_before);
  REQUIRE(report.epoch_loss.size() == 1);
  REQUIRE(report.epoch_eval.size() == 1);
  REQUIRE(report.final_params_digest == net.stitch.param_digest());
}

TEST_CASE("non-finite loss raises a training failure with the step") {
  SmallResNet a = build_model(ArchSpec::parse("R1111"), 31);
  SmallResNet b = build_model(ArchSpec::parse("R1111"), 32);
  DatasetSplit train = make_synthetic(8, 1);
  Stitch s = build_stitch(plan_stitch({64, 32, 32}, {64, 32, 32}), 3);
  s.conv.w[0] = std::numeric_limits<float>::quiet_NaN();
  StitchedNetwork net = assemble(a, 0, b, 0, std::move(s));
  Hyperparams hp;
  hp.epochs = 1;
  hp.batch_size = 8;
  try {
    train_stitch_task(net, train, train, hp);
    FAIL("expected TrainingFailure");
  } catch (const TrainingFailure& e) {
    REQUIRE(e.step == 0);
  }
}

TEST_CASE("identity diagonal similarity stitch starts at exactly zero loss") {
  SmallResNet m = build_model(ArchSpec::parse("R1111"), 41);
  DatasetSplit train = make_synthetic(8, 3);
  TensorShape sh = stitch_points(m.arch)[1].shape;
  Stitch s = build_stitch(plan_stitch(sh, sh), 5);

  // direct check: identity stitch reproduces the expected representation
  ImageBatch batch = train.all();
  Tensor provided = forward_prefix(m, 1, batch.images);
  Tensor out = s.forward(provided);
  REQUIRE(out.data == provided.data);

  // single whole-split batch: first epoch's recorded loss is that first
  // (pre-update) batch loss, exactly zero
  Hyperparams hp;
  hp.epochs = 1;
  hp.batch_size = 8;
  TrainReport report = train_stitch_similarity(m, 1, m, 1, s, train, hp);
  REQUIRE(report.epoch_loss[0] == 0.0);
}

TEST_CASE("similarity training reduces the MSE loss") {
  SmallResNet a = build_model(ArchSpec::parse("R1111"), 51);
  SmallResNet b = build_model(ArchSpec::parse("R1111"), 52);
  DatasetSplit train = make_synthetic(32, 4);
  Stitch s = build_stitch(plan_stitch({64, 32, 32}, {64, 32, 32}), 6);
  // off-diagonal channels force a non-trivial fit
  Hyperparams hp;
  hp.epochs = 4;
  hp.batch_size = 8;
  hp.seed = 2;
  TrainReport report = train_stitch_similarity(a, 1, b, 1, s, train, hp);
  REQUIRE(report.epoch_loss.size() == 4);
  REQUIRE(report.epoch_loss.back() < report.epoch_loss.front());
}

TEST_CASE("zoo training reports per-epoch metrics and records accuracy") {
  SmallResNet m = build_model(ArchSpec::parse("R1111"), 61);
  DatasetSplit train = make_synthetic(32, 5);
  DatasetSplit test = make_synthetic(16, 6);
  Hyperparams hp;
  hp.epochs = 2;
  hp.batch_size = 16;
  hp.seed = 3;
  TrainReport report = train_network(m, train, test, hp);
  REQUIRE(report.epoch_loss.size() == 2);
  REQUIRE(report.epoch_eval.size() == 2);
  REQUIRE(m.provenance == Provenance::trained);
  REQUIRE(m.test_accuracy);
  REQUIRE(m.train_accuracy);
}

TEST_CASE("a tiny network memorizes a tiny synthetic split") {
  SmallResNet m = build_model(ArchSpec::parse("R1111"), 71);
  DatasetSplit train = make_synthetic(64, 7);
  Hyperparams hp;
  hp.epochs = 12;
  hp.batch_size = 16;
  hp.learning_rate = 0.02f;
  hp.weight_decay = 0.0f;
  hp.seed = 5;
  train_network(m, train, train, hp, AugmentPolicy::none);
  REQUIRE(*m.train_accuracy == 1.0);
}
