#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "stitchlab/stitch.hpp"

using namespace stitchlab;

namespace {

Tensor random_tensor(int n, int c, int h, int w, uint64_t seed) {
  Tensor t(n, c, h, w);
  fill_normal(t.data, 1.0f, seed);
  return t;
}

}  // namespace

TEST_CASE("plan_stitch: equal shapes force a 1x1 projection") {
  StitchSpec s = plan_stitch({64, 32, 32}, {64, 32, 32});
  REQUIRE(s.kind == StitchKind::project_1x1);
  REQUIRE(s.factor == 1);
  REQUIRE(s.in_channels == 64);
  REQUIRE(s.out_channels == 64);
}

TEST_CASE("plan_stitch: shrinking uses a k-by-k stride-k conv") {
  StitchSpec s = plan_stitch({64, 32, 32}, {256, 8, 8});
  REQUIRE(s.kind == StitchKind::downsample_conv);
  REQUIRE(s.factor == 4);
  REQUIRE(s.in_channels == 64);
  REQUIRE(s.out_channels == 256);
}

TEST_CASE("plan_stitch: growing upsamples then projects") {
  StitchSpec s = plan_stitch({512, 4, 4}, {64, 32, 32});
  REQUIRE(s.kind == StitchKind::upsample_project);
  REQUIRE(s.factor == 8);
  REQUIRE(s.in_channels == 512);
  REQUIRE(s.out_channels == 64);
}

TEST_CASE("plan_stitch rejects unsupported geometry") {
  REQUIRE_THROWS_AS(plan_stitch({64, 24, 24}, {64, 8, 8}), GeometryError);
}

TEST_CASE("plan_stitch is total and deterministic over the family shapes") {
  for (const auto& sa : enumerate_archs())
    for (const auto& ra : enumerate_archs())
      for (const auto& sp : stitch_points(sa))
        for (const auto& rp : stitch_points(ra)) {
          StitchSpec a = plan_stitch(sp.shape, rp.shape);
          StitchSpec b = plan_stitch(sp.shape, rp.shape);
          REQUIRE(a == b);
          REQUIRE(a.out_shape == rp.shape);
        }
}

TEST_CASE("build_stitch parameter counts follow conv arithmetic") {
  Stitch p = build_stitch(plan_stitch({64, 8, 8}, {64, 8, 8}), 1);
  REQUIRE(p.param_count() == 64 * 64 * 1 * 1 + 64);
  Stitch d = build_stitch(plan_stitch({64, 16, 16}, {128, 8, 8}), 1);
  REQUIRE(d.param_count() == 128 * 64 * 2 * 2 + 128);
  Stitch u = build_stitch(plan_stitch({128, 8, 8}, {64, 16, 16}), 1);
  REQUIRE(u.param_count() == 64 * 128 * 1 * 1 + 64);
}

TEST_CASE("stitch output shape equals the receiver shape for every kind") {
  for (auto [in, out] : std::vector<std::pair<TensorShape, TensorShape>>{
           {{64, 16, 16}, {64, 16, 16}},
           {{64, 16, 16}, {256, 4, 4}},
           {{256, 4, 4}, {64, 16, 16}}}) {
    Stitch s = build_stitch(plan_stitch(in, out), 5);
    Tensor x = random_tensor(2, in.c, in.h, in.w, 3);
    Tensor y = s.forward(x);
    REQUIRE(y.n == 2);
    REQUIRE(y.shape3() == out);
  }
}

TEST_CASE("nearest_upsample replicates into k-by-k blocks") {
  Tensor x(1, 1, 1, 1);
  x.data[0] = 5.0f;
  Tensor y = nearest_upsample(x, 2);
  REQUIRE(y.h == 2);
  REQUIRE(y.w == 2);
  for (float v : y.data) REQUIRE(v == 5.0f);
}

TEST_CASE("nearest_upsample with k=1 is the identity") {
  Tensor x = random_tensor(1, 2, 3, 3, 7);
  Tensor y = nearest_upsample(x, 1);
  REQUIRE(y.data == x.data);
}

TEST_CASE("upsample then k-by-k mean pooling is the exact identity") {
  for (int k : {2, 4, 8}) {
    Tensor x = random_tensor(2, 3, 4, 4, 100 + k);
    Tensor y = nearest_upsample(x, k);
    // non-overlapping k-by-k mean pool
    Tensor back(2, 3, 4, 4);
    for (int n = 0; n < 2; ++n)
      for (int c = 0; c < 3; ++c)
        for (int oy = 0; oy < 4; ++oy)
          for (int ox = 0; ox < 4; ++ox) {
            double s = 0.0;
            for (int dy = 0; dy < k; ++dy)
              for (int dx = 0; dx < k; ++dx)
                s += y.at(n, c, oy * k + dy, ox * k + dx);
            back.at(n, c, oy, ox) = static_cast<float>(s / (k * k));
          }
    REQUIRE(back.data == x.data);
  }
}

TEST_CASE("identity-initialized diagonal stitch leaves logits bitwise intact") {
  SmallResNet m = build_model(ArchSpec::parse("R1211"), 21);
  ImageBatch b = make_synthetic(2, 6).all();
  Tensor plain = forward_infer(m, b.images);
  for (int i : {0, 1, 2}) {
    TensorShape sh = stitch_points(m.arch)[i].shape;
    Stitch s = build_stitch(plan_stitch(sh, sh), 9);
    StitchedNetwork net = assemble(m, i, m, i, std::move(s));
    Tensor stitched = net.forward(b.images);
    INFO("diagonal " << i);
    REQUIRE(stitched.data == plain.data);
  }
}

TEST_CASE("assemble rejects a mismatched spec") {
  SmallResNet a = build_model(ArchSpec::parse("R1111"), 1);
  SmallResNet b = build_model(ArchSpec::parse("R1111"), 2);
  Stitch wrong = build_stitch(plan_stitch({64, 32, 32}, {128, 16, 16}), 3);
  REQUIRE_THROWS_AS(assemble(a, 0, b, 0, std::move(wrong)), AssemblyError);
}

TEST_CASE("assembled stitched network yields 10 logits per example") {
  SmallResNet a = build_model(ArchSpec::parse("R2211"), 4);
  SmallResNet b = build_model(ArchSpec::parse("R1122"), 5);
  ImageBatch batch = make_synthetic(2, 8).all();
  auto apts = stitch_points(a.arch);
  auto bpts = stitch_points(b.arch);
  // a few representative corners rather than the exhaustive grid (the
  // acceptance suite covers all 256 pairs)
  for (auto [i, j] : std::vector<std::pair<int, int>>{
           {0, 0}, {0, 6}, {6, 0}, {6, 6}, {3, 2}}) {
    Stitch s = build_stitch(plan_stitch(apts[i].shape, bpts[j].shape), 6);
    StitchedNetwork net = assemble(a, i, b, j, std::move(s));
    Tensor logits = net.forward(batch.images);
    REQUIRE(logits.n == 2);
    REQUIRE(logits.c == 10);
  }
}

TEST_CASE("frozen digest is stable across stitch mutation") {
  SmallResNet a = build_model(ArchSpec::parse("R1111"), 4);
  SmallResNet b = build_model(ArchSpec::parse("R1111"), 5);
  Stitch s = build_stitch(plan_stitch({64, 32, 32}, {64, 32, 32}), 6);
  StitchedNetwork net = assemble(a, 0, b, 0, std::move(s));
  uint64_t before = net.frozen_digest;
  for (auto& w : net.stitch.conv.w) w += 1.0f;  // train-like mutation
  REQUIRE(net.compute_frozen_digest() == before);
}
