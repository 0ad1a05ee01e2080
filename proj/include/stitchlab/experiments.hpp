#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stitchlab/data.hpp"
#include "stitchlab/png.hpp"
#include "stitchlab/resnet.hpp"
#include "stitchlab/stitch.hpp"
#include "stitchlab/train.hpp"

namespace stitchlab {

// ---------------------------------------------------------------------------
// Similarity matrices
// ---------------------------------------------------------------------------

enum class Regime { trained_trained, random_sender, random_receiver, random_random };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::trained_trained: return "trained_trained";
    case Regime::random_sender: return "random_sender";
    case Regime::random_receiver: return "random_receiver";
    case Regime::random_random: return "random_random";
  }
  return "?";
}

inline Regime parse_regime(const std::string& s) {
  for (Regime r : {Regime::trained_trained, Regime::random_sender,
                   Regime::random_receiver, Regime::random_random})
    if (s == to_string(r)) return r;
  throw ArgumentError("unknown regime: " + s);
}

// Failed entries stay as explicit holes carrying the error note.
struct MatrixEntry {
  std::optional<double> accuracy;
  std::string note;
};

struct SimilarityMatrix {
  std::string sender_name, receiver_name, regime;
  int rows = 0, cols = 0;  // (sender points) x (receiver points)
  std::vector<MatrixEntry> cells;

  MatrixEntry& at(int i, int j) { return cells[static_cast<size_t>(i) * cols + j]; }
  const MatrixEntry& at(int i, int j) const {
    return cells[static_cast<size_t>(i) * cols + j];
  }

  std::vector<std::pair<int, int>> holes() const {
    std::vector<std::pair<int, int>> h;
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        if (!at(i, j).accuracy) h.push_back({i, j});
    return h;
  }
};

// CSV layout: header row = receiver indices, first column = sender indices,
// accuracies to 4 decimals, holes as NA.
inline void write_matrix_csv(const SimilarityMatrix& m,
                             const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "i\\j";
  for (int j = 0; j < m.cols; ++j) out << "," << j;
  out << "\n";
  for (int i = 0; i < m.rows; ++i) {
    out << i;
    for (int j = 0; j < m.cols; ++j) {
      out << ",";
      if (m.at(i, j).accuracy)
        out << std::fixed << std::setprecision(4) << *m.at(i, j).accuracy;
      else
        out << "NA";
    }
    out << "\n";
  }
}

inline SimilarityMatrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  SimilarityMatrix m;
  std::string line;
  int lineno = 0;
  std::vector<std::vector<MatrixEntry>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (lineno == 1) {
      m.cols = static_cast<int>(cells.size()) - 1;
      if (m.cols < 1)
        throw Error(path.string() + ":1: malformed header");
      continue;
    }
    if (static_cast<int>(cells.size()) != m.cols + 1)
      throw Error(path.string() + ":" + std::to_string(lineno) +
                  ": expected " + std::to_string(m.cols + 1) + " cells, got " +
                  std::to_string(cells.size()));
    std::vector<MatrixEntry> row;
    for (int j = 1; j <= m.cols; ++j) {
      MatrixEntry e;
      if (cells[j] != "NA") {
        try {
          e.accuracy = std::stod(cells[j]);
        } catch (const std::exception&) {
          throw Error(path.string() + ":" + std::to_string(lineno) +
                      ": bad cell '" + cells[j] + "'");
        }
      }
      row.push_back(e);
    }
    rows.push_back(std::move(row));
  }
  m.rows = static_cast<int>(rows.size());
  for (auto& r : rows)
    for (auto& e : r) m.cells.push_back(std::move(e));
  return m;
}

// ---------------------------------------------------------------------------
// Per-entry manifests: the resumability and provenance unit
// ---------------------------------------------------------------------------

struct SweepPaths {
  std::filesystem::path root;

  std::filesystem::path matrix_csv(const std::string& s, const std::string& r,
                                   const std::string& regime) const {
    return root / "matrices" / (s + "__" + r + "__" + regime + ".csv");
  }
  std::filesystem::path entry_dir(const std::string& s, const std::string& r,
                                  const std::string& regime) const {
    return root / "manifests" / (s + "__" + r + "__" + regime);
  }
  std::filesystem::path entry_file(const std::string& s, const std::string& r,
                                   const std::string& regime, int i, int j) const {
    return entry_dir(s, r, regime) /
           ("entry_" + std::to_string(i) + "_" + std::to_string(j) + ".txt");
  }
};

// Atomic write: temp file then rename, so concurrent readers never see a
// partial entry.
inline void write_entry_manifest(const std::filesystem::path& path,
                                 const Manifest& kv) {
  std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  write_manifest(tmp, kv);
  std::filesystem::rename(tmp, path);
}

struct SimilarityJob {
  const SmallResNet* sender = nullptr;
  const SmallResNet* receiver = nullptr;
  Regime regime = Regime::trained_trained;
  const DatasetSplit* train = nullptr;
  const DatasetSplit* test = nullptr;
  Hyperparams hp;
  // When set, completed entries are skipped and new ones persisted.
  std::optional<SweepPaths> paths;
};

inline SimilarityMatrix similarity_matrix(const SimilarityJob& job) {
  const std::string sname = job.sender->arch.name();
  const std::string rname = job.receiver->arch.name();
  const std::string regime = to_string(job.regime);
  auto spts = stitch_points(job.sender->arch);
  auto rpts = stitch_points(job.receiver->arch);
  SimilarityMatrix m;
  m.sender_name = sname;
  m.receiver_name = rname;
  m.regime = regime;
  m.rows = static_cast<int>(spts.size());
  m.cols = static_cast<int>(rpts.size());
  m.cells.resize(static_cast<size_t>(m.rows) * m.cols);
  for (int i = 0; i < m.rows; ++i) {
    for (int j = 0; j < m.cols; ++j) {
      if (job.paths) {
        auto file = job.paths->entry_file(sname, rname, regime, i, j);
        if (std::filesystem::exists(file)) {
          Manifest kv = read_manifest(file);
          if (kv.count("accuracy"))
            m.at(i, j).accuracy = std::stod(kv["accuracy"]);
          else
            m.at(i, j).note = kv.count("error") ? kv["error"] : "unknown";
          continue;
        }
      }
      uint64_t entry_seed =
          mix_seed(job.hp.seed, (static_cast<uint64_t>(i) << 8) | j);
      Manifest kv;
      kv["sender"] = sname;
      kv["receiver"] = rname;
      kv["regime"] = regime;
      kv["i"] = std::to_string(i);
      kv["j"] = std::to_string(j);
      kv["seed"] = std::to_string(entry_seed);
      kv["epochs"] = std::to_string(job.hp.epochs);
      kv["sender_digest"] = std::to_string(model_digest(*job.sender));
      kv["receiver_digest"] = std::to_string(model_digest(*job.receiver));
      try {
        StitchSpec spec = plan_stitch(spts[i].shape, rpts[j].shape);
        Stitch stitch = build_stitch(spec, entry_seed);
        StitchedNetwork net =
            assemble(*job.sender, i, *job.receiver, j, std::move(stitch));
        Hyperparams hp = job.hp;
        hp.seed = entry_seed;
        TrainReport report =
            train_stitch_task(net, *job.train, *job.test, hp);
        double acc = report.epoch_eval.back();
        m.at(i, j).accuracy = acc;
        kv["accuracy"] = std::to_string(acc);
        kv["stitch_kind"] = to_string(spec.kind);
        kv["stitch_factor"] = std::to_string(spec.factor);
        kv["stitch_digest"] = std::to_string(report.final_params_digest);
      } catch (const TrainingFailure& e) {
        m.at(i, j).note = e.what();
        kv["error"] = e.what();
      }
      if (job.paths)
        write_entry_manifest(
            job.paths->entry_file(sname, rname, regime, i, j), kv);
    }
  }
  if (job.paths) write_matrix_csv(m, job.paths->matrix_csv(sname, rname, regime));
  return m;
}

// ---------------------------------------------------------------------------
// Triangle statistic: lower region is j/J <= i/I
// ---------------------------------------------------------------------------

struct TriangleStat {
  double lower_mean = 0.0;
  double strict_upper_mean = 0.0;
  double gap = 0.0;
  int I = 0, J = 0;
};

inline bool in_lower_triangle(int i, int j, int I, int J) {
  // j/J <= i/I without division
  return static_cast<long>(j) * I <= static_cast<long>(i) * J;
}

inline TriangleStat triangle_stat(const SimilarityMatrix& m) {
  auto h = m.holes();
  if (!h.empty()) {
    std::string list;
    for (auto [i, j] : h)
      list += " (" + std::to_string(i) + "," + std::to_string(j) + ")";
    throw IncompleteMatrixError("triangle_stat: matrix has holes:" + list);
  }
  TriangleStat t;
  t.I = m.rows - 1;
  t.J = m.cols - 1;
  double lo = 0.0, up = 0.0;
  int nlo = 0, nup = 0;
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) {
      if (in_lower_triangle(i, j, t.I, t.J)) {
        lo += *m.at(i, j).accuracy;
        ++nlo;
      } else {
        up += *m.at(i, j).accuracy;
        ++nup;
      }
    }
  t.lower_mean = nlo ? lo / nlo : 0.0;
  t.strict_upper_mean = nup ? up / nup : 0.0;
  t.gap = t.lower_mean - t.strict_upper_mean;
  return t;
}

// ---------------------------------------------------------------------------
// EV / ES / SV mean-squared-error statistics
// ---------------------------------------------------------------------------

struct MseStats {
  double min = 0.0, mean = 0.0, max = 0.0, std = 0.0;
};

struct MseStatsTable {
  std::string scope;  // "diagonals" or "all_stitches"
  MseStats ev, es, sv;
  size_t samples = 0;
};

struct StitchPair {
  const SmallResNet* sender = nullptr;
  int i = 0;
  const SmallResNet* receiver = nullptr;
  int j = 0;
  const Stitch* vanilla = nullptr;
  const Stitch* similarity = nullptr;
};

namespace detail {

// Per-example MSE between two activations of one example.
inline double example_mse(const Tensor& a, const Tensor& b, int n) {
  const size_t numel = a.stride_n();
  const float* pa = a.image(n);
  const float* pb = b.image(n);
  double s = 0.0;
  for (size_t e = 0; e < numel; ++e) {
    double d = static_cast<double>(pa[e]) - pb[e];
    s += d * d;
  }
  return s / static_cast<double>(numel);
}

inline MseStats reduce_stats(const std::vector<double>& v) {
  MseStats s;
  if (v.empty()) return s;
  s.min = v[0];
  s.max = v[0];
  double sum = 0.0, sq = 0.0;
  for (double x : v) {
    s.min = std::min(s.min, x);
    s.max = std::max(s.max, x);
    sum += x;
    sq += x * x;
  }
  s.mean = sum / static_cast<double>(v.size());
  double var = sq / static_cast<double>(v.size()) - s.mean * s.mean;
  s.std = std::sqrt(std::max(var, 0.0));
  return s;
}

}  // namespace detail

// Per-example MSE between two equally-shaped activations (mean over the
// tensor elements of example n).
inline double example_mse(const Tensor& a, const Tensor& b, int n) {
  if (!a.same_shape(b))
    throw ShapeError("example_mse: " + a.shape_str() + " vs " + b.shape_str());
  return detail::example_mse(a, b, n);
}

// One (example, layer pair) observation of the three pairings.
struct MseSample {
  double ev = 0.0, es = 0.0, sv = 0.0;
  bool diagonal = false;
};

// Aggregation core, shared by the full op and the toy-instance oracle path.
// Returned tables: all samples, then the corresponding-layers subset.
inline std::pair<MseStatsTable, MseStatsTable> reduce_mse_samples(
    const std::vector<MseSample>& samples) {
  std::vector<double> ev_all, es_all, sv_all;
  std::vector<double> ev_diag, es_diag, sv_diag;
  for (const auto& s : samples) {
    ev_all.push_back(s.ev);
    es_all.push_back(s.es);
    sv_all.push_back(s.sv);
    if (s.diagonal) {
      ev_diag.push_back(s.ev);
      es_diag.push_back(s.es);
      sv_diag.push_back(s.sv);
    }
  }
  MseStatsTable all{"all_stitches", detail::reduce_stats(ev_all),
                    detail::reduce_stats(es_all), detail::reduce_stats(sv_all),
                    ev_all.size()};
  MseStatsTable diag{"diagonals", detail::reduce_stats(ev_diag),
                     detail::reduce_stats(es_diag),
                     detail::reduce_stats(sv_diag), ev_diag.size()};
  return {all, diag};
}

// Aggregates over the cartesian product of dataset examples and layer pairs,
// pairs outer and examples in split order.
inline std::pair<MseStatsTable, MseStatsTable> mse_statistics(
    const std::vector<StitchPair>& pairs, const DatasetSplit& split,
    int batch_size = 64) {
  std::vector<MseSample> samples;
  for (const auto& pr : pairs) {
    const bool diag = pr.i == pr.j;
    for (int start = 0; start < split.count; start += batch_size) {
      int end = std::min(split.count, start + batch_size);
      std::vector<int> idx(end - start);
      std::iota(idx.begin(), idx.end(), start);
      ImageBatch batch = split.batch(idx);
      Tensor provided = forward_prefix(*pr.sender, pr.i, batch.images);
      Tensor expected = forward_prefix(*pr.receiver, pr.j, batch.images);
      Tensor v = pr.vanilla->forward(provided);
      Tensor s = pr.similarity->forward(provided);
      if (!v.same_shape(expected) || !s.same_shape(expected))
        throw ShapeError("mse_statistics: stitch output " + v.shape_str() +
                         " vs expected " + expected.shape_str());
      for (int n = 0; n < batch.images.n; ++n)
        samples.push_back({detail::example_mse(expected, v, n),
                           detail::example_mse(expected, s, n),
                           detail::example_mse(s, v, n), diag});
    }
  }
  return reduce_mse_samples(samples);
}

// 12 columns: EV/ES/SV x min/mean/max/std.
inline void write_stats_csv(const MseStatsTable& t,
                            const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "ev_min,ev_mean,ev_max,ev_std,"
      << "es_min,es_mean,es_max,es_std,"
      << "sv_min,sv_mean,sv_max,sv_std\n";
  out << std::scientific << std::setprecision(6);
  auto row = [&](const MseStats& s, bool last) {
    out << s.min << "," << s.mean << "," << s.max << "," << s.std
        << (last ? "\n" : ",");
  };
  row(t.ev, false);
  row(t.es, false);
  row(t.sv, true);
}

// ---------------------------------------------------------------------------
// Image generation: stitch an intermediate layer into input space
// ---------------------------------------------------------------------------

struct GeneratedPair {
  Tensor generated;  // (3, 32, 32), normalized units
  Tensor original;
};

// Builds a stitch from sender point i to the (3,32,32) input space, trains
// it with task loss through the whole frozen network consumed from its raw
// input, then emits (generated, original) pairs for the first `count`
// examples.
inline std::vector<GeneratedPair> generate_images(const SmallResNet& sender,
                                                  int i,
                                                  const DatasetSplit& data,
                                                  const Hyperparams& hp,
                                                  int count = 8) {
  hp.validate();
  TensorShape at = stitch_points(sender.arch)[i].shape;
  StitchSpec spec = plan_stitch(at, {3, 32, 32});
  Stitch stitch = build_stitch(spec, hp.seed);
  uint64_t digest_before = model_digest(sender);

  long steps_per_epoch = (data.count + hp.batch_size - 1) / hp.batch_size;
  long total_steps = steps_per_epoch * hp.epochs;
  Sgd sgd;
  std::vector<ParamRef> params = {
      {"stitch.conv.w", &stitch.conv.w, &stitch.conv.gw, true},
      {"stitch.conv.b", &stitch.conv.b, &stitch.conv.gb, false}};
  long step = 0;
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    auto order = epoch_order(data, hp.seed, epoch);
    for (long b = 0; b < steps_per_epoch; ++b) {
      size_t lo = static_cast<size_t>(b) * hp.batch_size;
      size_t hi = std::min(order.size(), lo + hp.batch_size);
      std::vector<int> idx(order.begin() + lo, order.begin() + hi);
      ImageBatch batch = data.batch(idx);
      stitch.conv.zero_grad();
      Tensor provided = forward_prefix(sender, i, batch.images);
      Stitch::Cache scache;
      Tensor gen = stitch.forward(provided, &scache);
      FullInferCache fcache;
      Tensor logits = full_forward_cached(sender, gen, fcache);
      Tensor dlogits;
      double loss = softmax_xent(logits, batch.labels, &dlogits);
      if (!std::isfinite(loss))
        throw TrainingFailure("image-generation stitch diverged at step " +
                                  std::to_string(step),
                              step);
      Tensor dgen = full_backward_input(sender, fcache, dlogits);
      stitch.backward(scache, dgen);
      sgd.step(params, lr_at(step, total_steps, hp), hp);
      ++step;
    }
  }
  if (model_digest(sender) != digest_before)
    throw Error("frozen digest changed during image-generation training");

  std::vector<GeneratedPair> out;
  count = std::min(count, data.count);
  std::vector<int> idx(count);
  std::iota(idx.begin(), idx.end(), 0);
  ImageBatch batch = data.batch(idx);
  Tensor provided = forward_prefix(sender, i, batch.images);
  Tensor gen = stitch.forward(provided);
  for (int n = 0; n < count; ++n) {
    GeneratedPair p;
    p.generated = Tensor(1, 3, 32, 32);
    p.original = Tensor(1, 3, 32, 32);
    std::copy(gen.image(n), gen.image(n) + gen.stride_n(),
              p.generated.data.begin());
    std::copy(batch.images.image(n),
              batch.images.image(n) + batch.images.stride_n(),
              p.original.data.begin());
    out.push_back(std::move(p));
  }
  return out;
}

// Side-by-side raster: generated on the left, actual on the right.
inline Rgb8Image render_pair(const GeneratedPair& p) {
  Rgb8Image img(64, 32);
  auto denorm = [](const Tensor& t, int ch, int y, int x) {
    float v = t.at(0, ch, y, x) * kCifarStd[ch] + kCifarMean[ch];
    return static_cast<uint8_t>(std::clamp(std::lround(v * 255.0f), 0L, 255L));
  };
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      img.set(x, y, denorm(p.generated, 0, y, x), denorm(p.generated, 1, y, x),
              denorm(p.generated, 2, y, x));
      img.set(32 + x, y, denorm(p.original, 0, y, x),
              denorm(p.original, 1, y, x), denorm(p.original, 2, y, x));
    }
  return img;
}

// ---------------------------------------------------------------------------
// Budget profiles and the full sweep
// ---------------------------------------------------------------------------

struct BudgetProfile {
  std::string name;
  bool synthetic = false;
  int synthetic_train = 512;
  int synthetic_test = 256;
  double data_fraction = 1.0;
  int stitch_epochs = 4;
  int similarity_epochs = 30;
  int zoo_epochs = 60;
  int batch_size = 256;
};

inline BudgetProfile budget_profile(const std::string& name) {
  if (name == "paper")
    return {"paper", false, 0, 0, 1.0, 4, 30, 60, 256};
  if (name == "desk")
    return {"desk", false, 0, 0, 0.25, 4, 30, 30, 256};
  if (name == "smoke")
    return {"smoke", true, 400, 100, 1.0, 1, 2, 1, 8};
  throw ArgumentError("unknown budget profile: " + name +
                      " (expected paper, desk, or smoke)");
}

// Train/test splits for a profile; CIFAR profiles require a data root.
inline std::pair<DatasetSplit, DatasetSplit> profile_data(
    const BudgetProfile& prof, const std::filesystem::path& data_root,
    uint64_t seed) {
  if (prof.synthetic)
    return {make_synthetic(prof.synthetic_train, seed),
            make_synthetic(prof.synthetic_test, mix_seed(seed, 0x7E57ULL))};
  if (data_root.empty())
    throw ArgumentError("profile '" + prof.name +
                        "' needs CIFAR-10: pass --data-root or set "
                        "STITCHLAB_DATA_ROOT");
  DatasetSplit train = load_cifar10(data_root, SplitRole::train);
  DatasetSplit test = load_cifar10(data_root, SplitRole::test);
  if (prof.data_fraction < 1.0)
    train = take_prefix(train,
                        static_cast<int>(train.count * prof.data_fraction));
  return {train, test};
}

struct SweepConfig {
  std::vector<ArchSpec> archs;
  std::vector<Regime> regimes;
  BudgetProfile profile;
  std::filesystem::path zoo_dir;   // trained checkpoints, one dir per arch
  std::filesystem::path exp_dir;   // experiment output
  std::filesystem::path data_root;
  uint64_t seed = 0;
};

// One SimilarityMatrix per ordered arch pair per regime; resumable through
// per-entry manifests.
inline std::vector<SimilarityMatrix> run_full_sweep(const SweepConfig& cfg) {
  bool needs_trained = false;
  for (Regime r : cfg.regimes)
    if (r != Regime::random_random) needs_trained = true;
  std::string missing;
  std::map<std::string, SmallResNet> trained;
  if (needs_trained) {
    for (const auto& a : cfg.archs) {
      auto dir = cfg.zoo_dir / a.name();
      if (!std::filesystem::exists(dir / "manifest.txt")) {
        missing += " " + dir.string();
        continue;
      }
      trained.emplace(a.name(), load_checkpoint(dir));
    }
    if (!missing.empty())
      throw Error("run_full_sweep: missing zoo checkpoints:" + missing);
  }
  std::map<std::string, SmallResNet> controls;
  for (const auto& a : cfg.archs)
    controls.emplace(a.name(),
                     build_model(a, mix_seed(cfg.seed, 0xC011ULL +
                                                          std::hash<std::string>{}(
                                                              a.name()))));

  auto [train, test] = profile_data(cfg.profile, cfg.data_root, cfg.seed);
  Hyperparams hp;
  hp.epochs = cfg.profile.stitch_epochs;
  hp.batch_size = cfg.profile.batch_size;
  hp.seed = cfg.seed;

  SweepPaths paths{cfg.exp_dir};
  std::vector<SimilarityMatrix> out;
  for (const auto& sa : cfg.archs) {
    for (const auto& ra : cfg.archs) {
      for (Regime regime : cfg.regimes) {
        bool sender_random =
            regime == Regime::random_sender || regime == Regime::random_random;
        bool recv_random = regime == Regime::random_receiver ||
                           regime == Regime::random_random;
        SimilarityJob job;
        job.sender = sender_random ? &controls.at(sa.name()) : &trained.at(sa.name());
        job.receiver = recv_random ? &controls.at(ra.name()) : &trained.at(ra.name());
        job.regime = regime;
        job.train = &train;
        job.test = &test;
        job.hp = hp;
        job.paths = paths;
        out.push_back(similarity_matrix(job));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Heatmap rendering
// ---------------------------------------------------------------------------

namespace detail {

// Fixed [0,1] accuracy scale: dark blue -> teal -> yellow.
inline void accuracy_color(double v, uint8_t& r, uint8_t& g, uint8_t& b) {
  v = std::clamp(v, 0.0, 1.0);
  if (v < 0.5) {
    double t = v / 0.5;
    r = static_cast<uint8_t>(68 + t * (33 - 68));
    g = static_cast<uint8_t>(1 + t * (144 - 1));
    b = static_cast<uint8_t>(84 + t * (140 - 84));
  } else {
    double t = (v - 0.5) / 0.5;
    r = static_cast<uint8_t>(33 + t * (253 - 33));
    g = static_cast<uint8_t>(144 + t * (231 - 144));
    b = static_cast<uint8_t>(140 + t * (37 - 140));
  }
}

}  // namespace detail

// Sender index on rows, receiver on columns, numeric annotations, hatched
// holes. Deterministic for fixed input.
inline Rgb8Image render_heatmap(const SimilarityMatrix& m) {
  constexpr int cw = 44, ch = 18, margin = 16;
  Rgb8Image img(margin + m.cols * cw, margin + m.rows * ch, 255);
  for (int j = 0; j < m.cols; ++j)
    draw_text(img, margin + j * cw + cw / 2 - 3, 4, std::to_string(j), 0, 0, 0);
  for (int i = 0; i < m.rows; ++i)
    draw_text(img, 4, margin + i * ch + ch / 2 - 3, std::to_string(i), 0, 0, 0);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) {
      int x0 = margin + j * cw, y0 = margin + i * ch;
      const MatrixEntry& e = m.at(i, j);
      if (e.accuracy) {
        uint8_t r, g, b;
        detail::accuracy_color(*e.accuracy, r, g, b);
        for (int y = 0; y < ch; ++y)
          for (int x = 0; x < cw; ++x) img.set(x0 + x, y0 + y, r, g, b);
        std::ostringstream os;
        os << std::fixed << std::setprecision(4) << *e.accuracy;
        bool bright = *e.accuracy > 0.6;
        uint8_t tc = bright ? 0 : 255;
        draw_text(img, x0 + 4, y0 + (ch - 7) / 2, os.str(), tc, tc, tc);
      } else {
        for (int y = 0; y < ch; ++y)
          for (int x = 0; x < cw; ++x) {
            bool hatch = ((x + y) % 6) < 2;
            uint8_t v = hatch ? 120 : 210;
            img.set(x0 + x, y0 + y, v, v, v);
          }
        draw_text(img, x0 + cw / 2 - 6, y0 + (ch - 7) / 2, "NA", 40, 40, 40);
      }
      for (int x = 0; x < cw; ++x) {
        img.set(x0 + x, y0, 0, 0, 0);
        img.set(x0 + x, y0 + ch - 1, 0, 0, 0);
      }
      for (int y = 0; y < ch; ++y) {
        img.set(x0, y0 + y, 0, 0, 0);
        img.set(x0 + cw - 1, y0 + y, 0, 0, 0);
      }
    }
  return img;
}

}  // namespace stitchlab
