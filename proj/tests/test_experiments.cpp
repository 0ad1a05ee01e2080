#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "stitchlab/experiments.hpp"

using namespace stitchlab;
namespace fs = std::filesystem;

namespace {

SimilarityMatrix const_matrix(int rows, int cols, double v) {
  SimilarityMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.cells.resize(static_cast<size_t>(rows) * cols);
  for (auto& c : m.cells) c.accuracy = v;
  return m;
}

}  // namespace

TEST_CASE("triangle regions partition every grid up to 9x9") {
  for (int rows = 2; rows <= 9; ++rows)
    for (int cols = 2; cols <= 9; ++cols) {
      int I = rows - 1, J = cols - 1;
      int lower = 0, upper = 0;
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
          bool lo = in_lower_triangle(i, j, I, J);
          // independent evaluation of the j/J <= i/I rule in rationals
          bool want = static_cast<double>(j) / J <=
                      static_cast<double>(i) / I + 1e-12;
          REQUIRE(lo == want);
          (lo ? lower : upper)++;
        }
      REQUIRE(lower + upper == rows * cols);
    }
}

TEST_CASE("triangle stat of a constant matrix has zero gap") {
  TriangleStat t = triangle_stat(const_matrix(5, 5, 0.5));
  REQUIRE(t.gap == 0.0);
  REQUIRE(t.lower_mean == 0.5);
}

TEST_CASE("triangle stat on the documented 2x2 instance") {
  SimilarityMatrix m = const_matrix(2, 2, 1.0);
  m.at(0, 1).accuracy = 0.0;
  TriangleStat t = triangle_stat(m);
  REQUIRE(t.lower_mean == 1.0);
  REQUIRE(t.strict_upper_mean == 0.0);
  REQUIRE(t.gap == 1.0);
}

TEST_CASE("triangle stat refuses holes and lists them") {
  SimilarityMatrix m = const_matrix(3, 3, 0.4);
  m.at(1, 2).accuracy.reset();
  try {
    triangle_stat(m);
    FAIL("expected IncompleteMatrixError");
  } catch (const IncompleteMatrixError& e) {
    REQUIRE(std::string(e.what()).find("(1,2)") != std::string::npos);
  }
}

TEST_CASE("matrix CSV round-trips values and holes") {
  SimilarityMatrix m = const_matrix(3, 4, 0.25);
  m.at(2, 1).accuracy = 0.9876;
  m.at(0, 3).accuracy.reset();
  fs::path p = fs::temp_directory_path() / "stitchlab_matrix.csv";
  write_matrix_csv(m, p);
  SimilarityMatrix back = read_matrix_csv(p);
  REQUIRE(back.rows == 3);
  REQUIRE(back.cols == 4);
  REQUIRE_FALSE(back.at(0, 3).accuracy);
  REQUIRE(*back.at(2, 1).accuracy == Catch::Approx(0.9876));
  REQUIRE(*back.at(0, 0).accuracy == Catch::Approx(0.25));
}

TEST_CASE("malformed matrix CSV reports the line number") {
  fs::path p = fs::temp_directory_path() / "stitchlab_bad.csv";
  {
    std::ofstream out(p);
    out << "i\\j,0,1\n0,0.5,0.5\n1,0.5\n";
  }
  try {
    read_matrix_csv(p);
    FAIL("expected Error");
  } catch (const Error& e) {
    REQUIRE(std::string(e.what()).find(":3") != std::string::npos);
  }
}

TEST_CASE("mse statistics equal a brute-force recomputation on a toy instance") {
  // 2 examples x 2 layer pairs on 4x4x4 tensors, driven through the same
  // per-sample entry points the full op uses.
  auto mk = [](uint64_t seed) {
    Tensor t(2, 4, 4, 4);
    fill_normal(t.data, 1.0f, seed);
    return t;
  };
  struct Pair {
    Tensor expected, vanilla, sim;
    bool diag;
  };
  std::vector<Pair> pairs = {{mk(1), mk(2), mk(3), true},
                             {mk(4), mk(5), mk(6), false}};
  std::vector<MseSample> samples;
  for (const auto& p : pairs)
    for (int n = 0; n < 2; ++n)
      samples.push_back({example_mse(p.expected, p.vanilla, n),
                         example_mse(p.expected, p.sim, n),
                         example_mse(p.sim, p.vanilla, n), p.diag});
  auto [all, diag] = reduce_mse_samples(samples);

  // independent nested-loop oracle over all (example, pair) combinations
  auto brute_mse = [](const Tensor& a, const Tensor& b, int n) {
    double s = 0.0;
    for (int c = 0; c < a.c; ++c)
      for (int y = 0; y < a.h; ++y)
        for (int x = 0; x < a.w; ++x) {
          double d = static_cast<double>(a.at(n, c, y, x)) - b.at(n, c, y, x);
          s += d * d;
        }
    return s / (a.c * a.h * a.w);
  };
  std::vector<double> ev, es, sv;
  for (const auto& p : pairs)
    for (int n = 0; n < 2; ++n) {
      ev.push_back(brute_mse(p.expected, p.vanilla, n));
      es.push_back(brute_mse(p.expected, p.sim, n));
      sv.push_back(brute_mse(p.sim, p.vanilla, n));
    }
  auto brute_stats = [](const std::vector<double>& v) {
    double mn = v[0], mx = v[0], sum = 0.0, sq = 0.0;
    for (double x : v) {
      mn = std::min(mn, x);
      mx = std::max(mx, x);
      sum += x;
      sq += x * x;
    }
    double mean = sum / static_cast<double>(v.size());
    double var = sq / static_cast<double>(v.size()) - mean * mean;
    return MseStats{mn, mean, mx, std::sqrt(std::max(var, 0.0))};
  };
  MseStats bev = brute_stats(ev), bes = brute_stats(es), bsv = brute_stats(sv);
  REQUIRE(all.ev.min == bev.min);
  REQUIRE(all.ev.mean == bev.mean);
  REQUIRE(all.ev.max == bev.max);
  REQUIRE(all.ev.std == bev.std);
  REQUIRE(all.es.mean == bes.mean);
  REQUIRE(all.sv.mean == bsv.mean);
  REQUIRE(all.samples == 4);
  REQUIRE(diag.samples == 2);
  // min <= mean <= max in every cell
  for (const MseStats* s : {&all.ev, &all.es, &all.sv, &diag.ev, &diag.es, &diag.sv}) {
    REQUIRE(s->min <= s->mean);
    REQUIRE(s->mean <= s->max);
  }
}

TEST_CASE("mse statistics of identical tensors are zero") {
  Tensor t(1, 2, 2, 2);
  fill_normal(t.data, 1.0f, 9);
  REQUIRE(example_mse(t, t, 0) == 0.0);
}

TEST_CASE("full mse_statistics pass matches the sample-level route") {
  SmallResNet a = build_model(ArchSpec::parse("R1111"), 81);
  SmallResNet b = build_model(ArchSpec::parse("R1111"), 82);
  DatasetSplit split = make_synthetic(4, 11);
  TensorShape sh = stitch_points(a.arch)[1].shape;
  Stitch vanilla = build_stitch(plan_stitch(sh, sh), 1);
  Stitch sim = build_stitch(plan_stitch(sh, sh), 2);
  for (auto& w : sim.conv.w) w *= 0.5f;  // make the two stitches differ
  std::vector<StitchPair> pairs = {{&a, 1, &b, 1, &vanilla, &sim}};
  auto [all, diag] = mse_statistics(pairs, split, 4);

  ImageBatch batch = split.all();
  Tensor provided = forward_prefix(a, 1, batch.images);
  Tensor expected = forward_prefix(b, 1, batch.images);
  Tensor v = vanilla.forward(provided);
  Tensor s = sim.forward(provided);
  std::vector<MseSample> samples;
  for (int n = 0; n < 4; ++n)
    samples.push_back({example_mse(expected, v, n), example_mse(expected, s, n),
                       example_mse(s, v, n), true});
  auto [all2, diag2] = reduce_mse_samples(samples);
  REQUIRE(all.ev.mean == all2.ev.mean);
  REQUIRE(all.es.std == all2.es.std);
  REQUIRE(all.sv.max == all2.sv.max);
  REQUIRE(diag.samples == diag2.samples);
}

TEST_CASE("similarity matrix sweep fills the grid and resumes") {
  SmallResNet a = build_model(ArchSpec::parse("R1111"), 91);
  SmallResNet b = build_model(ArchSpec::parse("R1111"), 92);
  DatasetSplit train = make_synthetic(16, 12);
  DatasetSplit test = make_synthetic(8, 13);
  fs::path exp = fs::temp_directory_path() / "stitchlab_sweep";
  fs::remove_all(exp);

  SimilarityJob job;
  job.sender = &a;
  job.receiver = &b;
  job.regime = Regime::random_random;
  job.train = &train;
  job.test = &test;
  job.hp.epochs = 1;
  job.hp.batch_size = 8;
  job.hp.seed = 14;
  job.paths = SweepPaths{exp};

  SimilarityMatrix m = similarity_matrix(job);
  REQUIRE(m.rows == 5);
  REQUIRE(m.cols == 5);
  REQUIRE(m.holes().empty());
  for (const auto& c : m.cells) {
    REQUIRE(*c.accuracy >= 0.0);
    REQUIRE(*c.accuracy <= 1.0);
  }
  REQUIRE(fs::exists(job.paths->matrix_csv("R1111", "R1111", "random_random")));

  // resumed run reuses every entry manifest: results identical, and entry
  // mtimes untouched
  auto entry = job.paths->entry_file("R1111", "R1111", "random_random", 2, 3);
  auto mtime = fs::last_write_time(entry);
  SimilarityMatrix again = similarity_matrix(job);
  REQUIRE(fs::last_write_time(entry) == mtime);
  for (size_t k = 0; k < m.cells.size(); ++k)
    REQUIRE(*again.cells[k].accuracy == Catch::Approx(*m.cells[k].accuracy));
}

TEST_CASE("run_full_sweep lists missing zoo checkpoints") {
  SweepConfig cfg;
  cfg.archs = {ArchSpec::parse("R1111")};
  cfg.regimes = {Regime::trained_trained};
  cfg.profile = budget_profile("smoke");
  cfg.zoo_dir = fs::temp_directory_path() / "stitchlab_empty_zoo";
  cfg.exp_dir = fs::temp_directory_path() / "stitchlab_sweep2";
  fs::remove_all(cfg.zoo_dir);
  try {
    run_full_sweep(cfg);
    FAIL("expected Error");
  } catch (const Error& e) {
    REQUIRE(std::string(e.what()).find("R1111") != std::string::npos);
  }
}

TEST_CASE("generated image pairs have input-space shape") {
  SmallResNet m = build_model(ArchSpec::parse("R1111"), 95);
  DatasetSplit data = make_synthetic(8, 15);
  Hyperparams hp;
  hp.epochs = 1;
  hp.batch_size = 8;
  hp.seed = 16;
  auto pairs = generate_images(m, 0, data, hp, 2);
  REQUIRE(pairs.size() == 2);
  REQUIRE(pairs[0].generated.shape3() == TensorShape{3, 32, 32});
  REQUIRE(pairs[0].original.shape3() == TensorShape{3, 32, 32});
  Rgb8Image img = render_pair(pairs[0]);
  REQUIRE(img.width == 64);
  REQUIRE(img.height == 32);

  // deepest point goes through an x8 upsample
  StitchSpec spec = plan_stitch(stitch_points(m.arch).back().shape, {3, 32, 32});
  REQUIRE(spec.kind == StitchKind::upsample_project);
  REQUIRE(spec.factor == 8);
}

TEST_CASE("budget profiles carry the documented scales") {
  REQUIRE(budget_profile("paper").data_fraction == 1.0);
  REQUIRE(budget_profile("paper").stitch_epochs == 4);
  REQUIRE(budget_profile("paper").similarity_epochs == 30);
  REQUIRE(budget_profile("desk").data_fraction == 0.25);
  REQUIRE(budget_profile("smoke").synthetic);
  REQUIRE_THROWS_AS(budget_profile("warp"), ArgumentError);
}
