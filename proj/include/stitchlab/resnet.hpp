#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stitchlab/data.hpp"
#include "stitchlab/ops.hpp"
#include "stitchlab/tensor.hpp"

namespace stitchlab {

// ---------------------------------------------------------------------------
// Architecture family
// ---------------------------------------------------------------------------

// Blocks per stage, each 1 or 2. R1111 = ResNet10, R2222 = ResNet18.
struct ArchSpec {
  std::array<int, 4> blocks_per_stage{1, 1, 1, 1};

  bool operator==(const ArchSpec&) const = default;

  int n_blocks() const {
    return blocks_per_stage[0] + blocks_per_stage[1] + blocks_per_stage[2] +
           blocks_per_stage[3];
  }

  std::string name() const {
    std::string s = "R";
    for (int b : blocks_per_stage) s += static_cast<char>('0' + b);
    return s;
  }

  static ArchSpec parse(const std::string& name) {
    if (name.size() != 5 || name[0] != 'R')
      throw ArgumentError("bad arch name: " + name);
    ArchSpec a;
    for (int i = 0; i < 4; ++i) {
      char c = name[1 + i];
      if (c != '1' && c != '2')
        throw ArgumentError("bad arch name: " + name +
                            " (stages must be 1 or 2)");
      a.blocks_per_stage[i] = c - '0';
    }
    return a;
  }
};

// All 16 members, lexicographic: R1111 first, R2222 last.
inline std::vector<ArchSpec> enumerate_archs() {
  std::vector<ArchSpec> out;
  for (int a = 1; a <= 2; ++a)
    for (int b = 1; b <= 2; ++b)
      for (int c = 1; c <= 2; ++c)
        for (int d = 1; d <= 2; ++d) out.push_back(ArchSpec{{a, b, c, d}});
  return out;
}

// Index 0 = stem output, index k = output of the k-th residual block.
struct StitchPoint {
  int index = 0;
  TensorShape shape;
};

// Shape table: stage s (1-based) outputs 64*2^(s-1) channels at
// 32/2^(s-1) spatial.
inline std::vector<StitchPoint> stitch_points(const ArchSpec& arch) {
  std::vector<StitchPoint> pts;
  pts.push_back({0, {64, 32, 32}});
  int idx = 1;
  for (int stage = 0; stage < 4; ++stage) {
    int ch = 64 << stage;
    int sp = 32 >> stage;
    for (int b = 0; b < arch.blocks_per_stage[stage]; ++b)
      pts.push_back({idx++, {ch, sp, sp}});
  }
  return pts;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

// conv-bn-relu-conv-bn, post-add relu; stride-2 + 1x1 projection shortcut at
// stage transitions.
struct ResBlock {
  Conv2d conv1, conv2;
  BatchNorm2d bn1, bn2;
  bool downsample = false;
  Conv2d proj;
  BatchNorm2d bnp;
};

enum class Provenance { random_control, trained };

inline const char* to_string(Provenance p) {
  return p == Provenance::trained ? "trained" : "random_control";
}

struct SmallResNet {
  ArchSpec arch;
  uint64_t seed = 0;
  Provenance provenance = Provenance::random_control;
  std::optional<double> train_accuracy;
  std::optional<double> test_accuracy;

  Conv2d stem;
  BatchNorm2d stem_bn;
  std::vector<ResBlock> blocks;
  Linear head;

  int n_points() const { return arch.n_blocks() + 1; }
};

inline SmallResNet build_model(const ArchSpec& arch, uint64_t seed) {
  SmallResNet m;
  m.arch = arch;
  m.seed = seed;
  m.stem = Conv2d(3, 64, 3, 1, 1, false);
  m.stem.init(mix_seed(seed, 1));
  m.stem_bn = BatchNorm2d(64);
  int in_ch = 64;
  uint64_t salt = 100;
  for (int stage = 0; stage < 4; ++stage) {
    int out_ch = 64 << stage;
    for (int b = 0; b < arch.blocks_per_stage[stage]; ++b) {
      ResBlock blk;
      int stride = (stage > 0 && b == 0) ? 2 : 1;
      blk.conv1 = Conv2d(in_ch, out_ch, 3, stride, 1, false);
      blk.conv1.init(mix_seed(seed, salt++));
      blk.bn1 = BatchNorm2d(out_ch);
      blk.conv2 = Conv2d(out_ch, out_ch, 3, 1, 1, false);
      blk.conv2.init(mix_seed(seed, salt++));
      blk.bn2 = BatchNorm2d(out_ch);
      if (stride != 1 || in_ch != out_ch) {
        blk.downsample = true;
        blk.proj = Conv2d(in_ch, out_ch, 1, stride, 0, false);
        blk.proj.init(mix_seed(seed, salt++));
        blk.bnp = BatchNorm2d(out_ch);
      }
      m.blocks.push_back(std::move(blk));
      in_ch = out_ch;
    }
  }
  m.head = Linear(512, kNumClasses);
  m.head.init(mix_seed(seed, 2));
  return m;
}

// ---------------------------------------------------------------------------
// Parameter visitation (checkpoints, digests, optimizers)
// ---------------------------------------------------------------------------

struct ParamRef {
  std::string name;
  std::vector<float>* value;
  std::vector<float>* grad;  // null for running statistics
  bool weight_decay;         // conv/linear weights only
};

inline std::vector<ParamRef> named_params(SmallResNet& m) {
  std::vector<ParamRef> out;
  auto conv = [&](const std::string& p, Conv2d& c) {
    out.push_back({p + ".w", &c.w, &c.gw, true});
    if (c.has_bias) out.push_back({p + ".b", &c.b, &c.gb, false});
  };
  auto bn = [&](const std::string& p, BatchNorm2d& b) {
    out.push_back({p + ".gamma", &b.gamma, &b.ggamma, false});
    out.push_back({p + ".beta", &b.beta, &b.gbeta, false});
  };
  conv("stem.conv", m.stem);
  bn("stem.bn", m.stem_bn);
  for (size_t i = 0; i < m.blocks.size(); ++i) {
    std::string p = "block" + std::to_string(i + 1);
    conv(p + ".conv1", m.blocks[i].conv1);
    bn(p + ".bn1", m.blocks[i].bn1);
    conv(p + ".conv2", m.blocks[i].conv2);
    bn(p + ".bn2", m.blocks[i].bn2);
    if (m.blocks[i].downsample) {
      conv(p + ".proj", m.blocks[i].proj);
      bn(p + ".bnp", m.blocks[i].bnp);
    }
  }
  out.push_back({"head.w", &m.head.w, &m.head.gw, true});
  out.push_back({"head.b", &m.head.b, &m.head.gb, false});
  return out;
}

// BN running statistics; part of the frozen state but never optimized.
inline std::vector<std::pair<std::string, std::vector<float>*>> named_stats(
    SmallResNet& m) {
  std::vector<std::pair<std::string, std::vector<float>*>> out;
  auto bn = [&](const std::string& p, BatchNorm2d& b) {
    out.push_back({p + ".rmean", &b.running_mean});
    out.push_back({p + ".rvar", &b.running_var});
  };
  bn("stem.bn", m.stem_bn);
  for (size_t i = 0; i < m.blocks.size(); ++i) {
    std::string p = "block" + std::to_string(i + 1);
    bn(p + ".bn1", m.blocks[i].bn1);
    bn(p + ".bn2", m.blocks[i].bn2);
    if (m.blocks[i].downsample) bn(p + ".bnp", m.blocks[i].bnp);
  }
  return out;
}

inline uint64_t model_digest(const SmallResNet& model) {
  auto& m = const_cast<SmallResNet&>(model);
  uint64_t h = kFnvOffset;
  for (const auto& p : named_params(m)) h = fnv1a(h, *p.value);
  for (const auto& s : named_stats(m)) h = fnv1a(h, *s.second);
  return h;
}

// ---------------------------------------------------------------------------
// Inference forward (never mutates the model)
// ---------------------------------------------------------------------------

namespace detail {

inline Tensor block_infer(const ResBlock& blk, const Tensor& x) {
  Tensor a = conv_forward(blk.conv1, x);
  a = bn_infer(blk.bn1, a);
  relu_inplace(a);
  a = conv_forward(blk.conv2, a);
  a = bn_infer(blk.bn2, a);
  Tensor s = blk.downsample ? bn_infer(blk.bnp, conv_forward(blk.proj, x)) : x;
  for (size_t i = 0; i < a.size(); ++i) a.data[i] += s.data[i];
  relu_inplace(a);
  return a;
}

}  // namespace detail

// A_{<=i}: stem plus the first i residual blocks.
inline Tensor forward_prefix(const SmallResNet& m, int i, const Tensor& x) {
  if (i < 0 || i > static_cast<int>(m.blocks.size()))
    throw ArgumentError("forward_prefix: index " + std::to_string(i) +
                        " out of range for " + m.arch.name());
  require_shape(x, {3, 32, 32}, "forward_prefix input");
  Tensor a = conv_forward(m.stem, x);
  a = bn_infer(m.stem_bn, a);
  relu_inplace(a);
  for (int b = 0; b < i; ++b) a = detail::block_infer(m.blocks[b], a);
  return a;
}

// B_{j<}: blocks after j plus the classifier head; returns (n, 10) logits.
inline Tensor forward_suffix(const SmallResNet& m, int j, const Tensor& act) {
  if (j < 0 || j > static_cast<int>(m.blocks.size()))
    throw ArgumentError("forward_suffix: index " + std::to_string(j) +
                        " out of range for " + m.arch.name());
  require_shape(act, stitch_points(m.arch)[j].shape, "forward_suffix input");
  Tensor a = act;
  for (size_t b = j; b < m.blocks.size(); ++b)
    a = detail::block_infer(m.blocks[b], a);
  a = global_avg_pool(a);
  return linear_forward(m.head, a);
}

inline Tensor forward_infer(const SmallResNet& m, const Tensor& x) {
  return forward_suffix(m, 0, forward_prefix(m, 0, x));
}

inline double evaluate(const SmallResNet& m, const DatasetSplit& split,
                       int batch_size = 128) {
  if (split.count == 0) throw ArgumentError("evaluate: empty split");
  int correct = 0;
  for (int start = 0; start < split.count; start += batch_size) {
    int end = std::min(split.count, start + batch_size);
    std::vector<int> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    ImageBatch b = split.batch(idx);
    Tensor logits = forward_infer(m, b.images);
    for (int i = 0; i < logits.n; ++i) {
      const float* z = logits.image(i);
      int best = 0;
      for (int k = 1; k < kNumClasses; ++k)
        if (z[k] > z[best]) best = k;
      if (best == b.labels[i]) ++correct;
    }
  }
  return static_cast<double>(correct) / split.count;
}

// ---------------------------------------------------------------------------
// Training-mode forward/backward (zoo training)
// ---------------------------------------------------------------------------

struct BlockTrainCache {
  Tensor x;       // block input
  Tensor a1;      // post-relu inner activation
  Tensor y;       // block output (post-relu)
  BnCache bn1, bn2, bnp;
};

struct ModelTrainCache {
  Tensor x;     // network input
  Tensor stem_y;
  BnCache stem_bn;
  std::vector<BlockTrainCache> blocks;
  Tensor pooled;
  int feat_h = 0, feat_w = 0;
};

inline Tensor forward_train(SmallResNet& m, const Tensor& x,
                            ModelTrainCache& cache) {
  cache.x = x;
  Tensor a = conv_forward(m.stem, x);
  a = bn_train_forward(m.stem_bn, a, cache.stem_bn);
  relu_inplace(a);
  cache.stem_y = a;
  cache.blocks.resize(m.blocks.size());
  for (size_t b = 0; b < m.blocks.size(); ++b) {
    ResBlock& blk = m.blocks[b];
    BlockTrainCache& bc = cache.blocks[b];
    bc.x = a;
    Tensor h = conv_forward(blk.conv1, a);
    h = bn_train_forward(blk.bn1, h, bc.bn1);
    relu_inplace(h);
    bc.a1 = h;
    h = conv_forward(blk.conv2, h);
    h = bn_train_forward(blk.bn2, h, bc.bn2);
    Tensor s = blk.downsample
                   ? bn_train_forward(blk.bnp, conv_forward(blk.proj, bc.x),
                                      bc.bnp)
                   : bc.x;
    for (size_t i = 0; i < h.size(); ++i) h.data[i] += s.data[i];
    relu_inplace(h);
    bc.y = h;
    a = h;
  }
  cache.feat_h = a.h;
  cache.feat_w = a.w;
  cache.pooled = global_avg_pool(a);
  return linear_forward(m.head, cache.pooled);
}

// Accumulates parameter gradients; returns nothing (input grad unused).
inline void backward_train(SmallResNet& m, const ModelTrainCache& cache,
                           const Tensor& dlogits) {
  Tensor d = linear_backward(m.head, cache.pooled, dlogits, true);
  d = global_avg_pool_backward(d, cache.feat_h, cache.feat_w);
  for (int b = static_cast<int>(m.blocks.size()) - 1; b >= 0; --b) {
    ResBlock& blk = m.blocks[b];
    const BlockTrainCache& bc = cache.blocks[b];
    Tensor dpost = relu_backward(bc.y, d);
    // main branch
    Tensor dm = bn_train_backward(blk.bn2, bc.bn2, dpost);
    conv_backward_params(blk.conv2, bc.a1, dm);
    dm = conv_backward_input(blk.conv2, dm, bc.a1.h, bc.a1.w);
    dm = relu_backward(bc.a1, dm);
    dm = bn_train_backward(blk.bn1, bc.bn1, dm);
    conv_backward_params(blk.conv1, bc.x, dm);
    dm = conv_backward_input(blk.conv1, dm, bc.x.h, bc.x.w);
    // shortcut
    if (blk.downsample) {
      Tensor ds = bn_train_backward(blk.bnp, bc.bnp, dpost);
      conv_backward_params(blk.proj, bc.x, ds);
      ds = conv_backward_input(blk.proj, ds, bc.x.h, bc.x.w);
      for (size_t i = 0; i < dm.size(); ++i) dm.data[i] += ds.data[i];
    } else {
      for (size_t i = 0; i < dm.size(); ++i) dm.data[i] += dpost.data[i];
    }
    d = std::move(dm);
  }
  d = relu_backward(cache.stem_y, d);
  d = bn_train_backward(m.stem_bn, cache.stem_bn, d);
  conv_backward_params(m.stem, cache.x, d);
}

// ---------------------------------------------------------------------------
// Frozen suffix with activation-gradient support (stitch training).
// Inference-mode BN throughout; no parameter gradients.
// ---------------------------------------------------------------------------

struct SuffixCache {
  int j = 0;
  struct Blk {
    Tensor a1, y;
    TensorShape in_shape;
  };
  std::vector<Blk> blocks;
  Tensor pooled;
  int feat_h = 0, feat_w = 0;
};

inline Tensor suffix_forward_cached(const SmallResNet& m, int j,
                                    const Tensor& act, SuffixCache& cache) {
  require_shape(act, stitch_points(m.arch)[j].shape, "forward_suffix input");
  cache.j = j;
  cache.blocks.clear();
  Tensor a = act;
  for (size_t b = j; b < m.blocks.size(); ++b) {
    const ResBlock& blk = m.blocks[b];
    SuffixCache::Blk bc;
    bc.in_shape = a.shape3();
    Tensor h = conv_forward(blk.conv1, a);
    h = bn_infer(blk.bn1, h);
    relu_inplace(h);
    bc.a1 = h;
    h = conv_forward(blk.conv2, h);
    h = bn_infer(blk.bn2, h);
    Tensor s = blk.downsample ? bn_infer(blk.bnp, conv_forward(blk.proj, a)) : a;
    for (size_t i = 0; i < h.size(); ++i) h.data[i] += s.data[i];
    relu_inplace(h);
    bc.y = h;
    cache.blocks.push_back(std::move(bc));
    a = cache.blocks.back().y;
  }
  cache.feat_h = a.h;
  cache.feat_w = a.w;
  cache.pooled = global_avg_pool(a);
  return linear_forward(m.head, cache.pooled);
}

// d(loss)/d(act) through the frozen suffix.
inline Tensor suffix_backward_input(const SmallResNet& model,
                                    const SuffixCache& cache,
                                    const Tensor& dlogits) {
  auto& m = const_cast<SmallResNet&>(model);
  Tensor d = linear_backward(m.head, cache.pooled, dlogits, false);
  d = global_avg_pool_backward(d, cache.feat_h, cache.feat_w);
  for (int k = static_cast<int>(cache.blocks.size()) - 1; k >= 0; --k) {
    const ResBlock& blk = m.blocks[cache.j + k];
    const SuffixCache::Blk& bc = cache.blocks[k];
    Tensor dpost = relu_backward(bc.y, d);
    Tensor dm = bn_infer_backward(blk.bn2, dpost);
    dm = conv_backward_input(blk.conv2, dm, bc.a1.h, bc.a1.w);
    dm = relu_backward(bc.a1, dm);
    dm = bn_infer_backward(blk.bn1, dm);
    dm = conv_backward_input(blk.conv1, dm, bc.in_shape.h, bc.in_shape.w);
    if (blk.downsample) {
      Tensor ds = bn_infer_backward(blk.bnp, dpost);
      ds = conv_backward_input(blk.proj, ds, bc.in_shape.h, bc.in_shape.w);
      for (size_t i = 0; i < dm.size(); ++i) dm.data[i] += ds.data[i];
    } else {
      for (size_t i = 0; i < dm.size(); ++i) dm.data[i] += dpost.data[i];
    }
    d = std::move(dm);
  }
  return d;
}

// Full frozen forward from the raw input, with activation-gradient support
// (used when a stitch feeds a network's input space).
struct FullInferCache {
  Tensor stem_y;
  SuffixCache suffix;
};

inline Tensor full_forward_cached(const SmallResNet& m, const Tensor& x,
                                  FullInferCache& cache) {
  require_shape(x, {3, 32, 32}, "full forward input");
  Tensor a = conv_forward(m.stem, x);
  a = bn_infer(m.stem_bn, a);
  relu_inplace(a);
  cache.stem_y = a;
  return suffix_forward_cached(m, 0, a, cache.suffix);
}

inline Tensor full_backward_input(const SmallResNet& m,
                                  const FullInferCache& cache,
                                  const Tensor& dlogits) {
  Tensor d = suffix_backward_input(m, cache.suffix, dlogits);
  d = relu_backward(cache.stem_y, d);
  d = bn_infer_backward(m.stem_bn, d);
  return conv_backward_input(m.stem, d, 32, 32);
}

// ---------------------------------------------------------------------------
// Checkpoints: directory with a plain-text manifest plus one raw
// little-endian f32 file per parameter and running statistic.
// ---------------------------------------------------------------------------

constexpr int kCheckpointSchemaVersion = 1;

namespace detail {

inline void write_f32(const std::filesystem::path& path,
                      const std::vector<float>& v) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(float)));
}

inline void read_f32(const std::filesystem::path& path, std::vector<float>& v) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("missing parameter file " + path.string());
  in.seekg(0, std::ios::end);
  auto bytes = static_cast<size_t>(in.tellg());
  if (bytes != v.size() * sizeof(float))
    throw CheckpointError(path.string() + ": expected " +
                          std::to_string(v.size() * sizeof(float)) +
                          " bytes, got " + std::to_string(bytes));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(bytes));
}

}  // namespace detail

using Manifest = std::map<std::string, std::string>;

inline void write_manifest(const std::filesystem::path& path,
                           const Manifest& kv) {
  std::ofstream out(path);
  if (!out) throw CheckpointError("cannot write " + path.string());
  for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("missing manifest " + path.string());
  Manifest kv;
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return kv;
}

inline std::string join_floats(const float* v, int n) {
  std::ostringstream os;
  for (int i = 0; i < n; ++i) os << (i ? " " : "") << v[i];
  return os.str();
}

inline void save_checkpoint(const SmallResNet& model,
                            const std::filesystem::path& dir,
                            const Manifest& extra = {}) {
  auto& m = const_cast<SmallResNet&>(model);
  std::filesystem::create_directories(dir);
  Manifest kv = extra;
  kv["schema_version"] = std::to_string(kCheckpointSchemaVersion);
  kv["arch"] = m.arch.name();
  kv["seed"] = std::to_string(m.seed);
  kv["provenance"] = to_string(m.provenance);
  kv["norm_mean"] = join_floats(kCifarMean.data(), 3);
  kv["norm_std"] = join_floats(kCifarStd.data(), 3);
  if (m.train_accuracy) kv["train_accuracy"] = std::to_string(*m.train_accuracy);
  if (m.test_accuracy) kv["test_accuracy"] = std::to_string(*m.test_accuracy);
  write_manifest(dir / "manifest.txt", kv);
  for (const auto& p : named_params(m))
    detail::write_f32(dir / (p.name + ".f32"), *p.value);
  for (const auto& s : named_stats(m))
    detail::write_f32(dir / (s.first + ".f32"), *s.second);
}

inline SmallResNet load_checkpoint(const std::filesystem::path& dir) {
  Manifest kv = read_manifest(dir / "manifest.txt");
  auto need = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end())
      throw CheckpointError(dir.string() + ": manifest missing key " + k);
    return it->second;
  };
  int version = std::stoi(need("schema_version"));
  if (version != kCheckpointSchemaVersion)
    throw CheckpointError(dir.string() + ": incompatible schema version " +
                          std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointSchemaVersion) + ")");
  SmallResNet m = build_model(ArchSpec::parse(need("arch")),
                              std::stoull(need("seed")));
  m.provenance = need("provenance") == std::string("trained")
                     ? Provenance::trained
                     : Provenance::random_control;
  if (kv.count("train_accuracy")) m.train_accuracy = std::stod(kv["train_accuracy"]);
  if (kv.count("test_accuracy")) m.test_accuracy = std::stod(kv["test_accuracy"]);
  for (const auto& p : named_params(m))
    detail::read_f32(dir / (p.name + ".f32"), *p.value);
  for (const auto& s : named_stats(m))
    detail::read_f32(dir / (s.first + ".f32"), *s.second);
  return m;
}

}  // namespace stitchlab
