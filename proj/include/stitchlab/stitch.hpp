#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stitchlab/ops.hpp"
#include "stitchlab/resnet.hpp"
#include "stitchlab/tensor.hpp"

namespace stitchlab {

enum class StitchKind { project_1x1, downsample_conv, upsample_project };

inline const char* to_string(StitchKind k) {
  switch (k) {
    case StitchKind::project_1x1: return "project_1x1";
    case StitchKind::downsample_conv: return "downsample_conv";
    case StitchKind::upsample_project: return "upsample_project";
  }
  return "?";
}

inline StitchKind parse_stitch_kind(const std::string& s) {
  if (s == "project_1x1") return StitchKind::project_1x1;
  if (s == "downsample_conv") return StitchKind::downsample_conv;
  if (s == "upsample_project") return StitchKind::upsample_project;
  throw ArgumentError("unknown stitch kind: " + s);
}

struct StitchSpec {
  StitchKind kind = StitchKind::project_1x1;
  int factor = 1;  // power-of-2 spatial ratio
  int in_channels = 0, out_channels = 0;
  TensorShape in_shape, out_shape;

  bool operator==(const StitchSpec&) const = default;
};

namespace detail {
inline bool is_pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }
}

// The unique transform between two activation geometries: k-by-k stride-k
// conv when shrinking, nearest-upsample-then-1x1 when growing, plain 1x1
// projection when equal.
inline StitchSpec plan_stitch(TensorShape sender, TensorShape receiver) {
  if (!detail::is_pow2(sender.h) || !detail::is_pow2(sender.w) ||
      !detail::is_pow2(receiver.h) || !detail::is_pow2(receiver.w))
    throw GeometryError("plan_stitch: spatial dims must be powers of 2, got " +
                        sender.str() + " -> " + receiver.str());
  if (sender.h != sender.w || receiver.h != receiver.w)
    throw GeometryError("plan_stitch: non-square activations unsupported: " +
                        sender.str() + " -> " + receiver.str());
  StitchSpec spec;
  spec.in_channels = sender.c;
  spec.out_channels = receiver.c;
  spec.in_shape = sender;
  spec.out_shape = receiver;
  if (sender.h == receiver.h) {
    spec.kind = StitchKind::project_1x1;
    spec.factor = 1;
  } else if (sender.h > receiver.h) {
    if (sender.h % receiver.h != 0)
      throw GeometryError("plan_stitch: non-integer spatial ratio " +
                          sender.str() + " -> " + receiver.str());
    spec.kind = StitchKind::downsample_conv;
    spec.factor = sender.h / receiver.h;
  } else {
    if (receiver.h % sender.h != 0)
      throw GeometryError("plan_stitch: non-integer spatial ratio " +
                          sender.str() + " -> " + receiver.str());
    spec.kind = StitchKind::upsample_project;
    spec.factor = receiver.h / sender.h;
  }
  return spec;
}

// Trainable stitch: a single conv with bias (preceded by parameter-free
// nearest upsampling for the upsample_project kind). No normalization, no
// nonlinearity.
struct Stitch {
  StitchSpec spec;
  Conv2d conv;

  struct Cache {
    Tensor conv_in;  // input to the conv (post-upsample when applicable)
    int in_h = 0, in_w = 0;
  };

  Tensor forward(const Tensor& x, Cache* cache = nullptr) const {
    require_shape(x, spec.in_shape, "stitch input");
    Tensor u = spec.kind == StitchKind::upsample_project
                   ? nearest_upsample(x, spec.factor)
                   : x;
    if (cache) {
      cache->conv_in = u;
      cache->in_h = x.h;
      cache->in_w = x.w;
    }
    return conv_forward(conv, u);
  }

  // Accumulates conv parameter gradients and returns d(loss)/d(input).
  Tensor backward(const Cache& cache, const Tensor& dy) {
    conv_backward_params(conv, cache.conv_in, dy);
    Tensor d =
        conv_backward_input(conv, dy, cache.conv_in.h, cache.conv_in.w);
    if (spec.kind == StitchKind::upsample_project)
      d = nearest_upsample_backward(d, spec.factor);
    return d;
  }

  size_t param_count() const { return conv.w.size() + conv.b.size(); }

  uint64_t param_digest() const {
    uint64_t h = kFnvOffset;
    h = fnv1a(h, conv.w);
    h = fnv1a(h, conv.b);
    return h;
  }
};

// Identity init on 1x1 projections with matching channel counts, otherwise
// fan-out random; bias always zero.
inline Stitch build_stitch(const StitchSpec& spec, uint64_t seed) {
  Stitch s;
  s.spec = spec;
  int k = spec.kind == StitchKind::downsample_conv ? spec.factor : 1;
  int stride = k;
  s.conv = Conv2d(spec.in_channels, spec.out_channels, k, stride, 0, true);
  if (spec.kind == StitchKind::project_1x1 &&
      spec.in_channels == spec.out_channels) {
    for (int c = 0; c < spec.in_channels; ++c)
      s.conv.w[static_cast<size_t>(c) * spec.in_channels + c] = 1.0f;
  } else {
    s.conv.init(mix_seed(seed, 0x57ULL));
  }
  return s;
}

// Frozen sender prefix + trainable stitch + frozen receiver suffix.
// The stitch output replaces B_{<=j}(x) and feeds the layers after j.
struct StitchedNetwork {
  const SmallResNet* sender = nullptr;
  int i = 0;
  const SmallResNet* receiver = nullptr;
  int j = 0;
  Stitch stitch;
  uint64_t frozen_digest = 0;

  Tensor forward(const Tensor& x) const {
    return forward_suffix(*receiver, j, stitch.forward(forward_prefix(*sender, i, x)));
  }

  uint64_t compute_frozen_digest() const {
    uint64_t h = model_digest(*sender);
    uint64_t r = model_digest(*receiver);
    h ^= r + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return h;
  }
};

inline StitchedNetwork assemble(const SmallResNet& sender, int i,
                                const SmallResNet& receiver, int j,
                                Stitch stitch) {
  auto spts = stitch_points(sender.arch);
  auto rpts = stitch_points(receiver.arch);
  if (i < 0 || i >= static_cast<int>(spts.size()))
    throw AssemblyError("assemble: sender index " + std::to_string(i) +
                        " out of range for " + sender.arch.name());
  if (j < 0 || j >= static_cast<int>(rpts.size()))
    throw AssemblyError("assemble: receiver index " + std::to_string(j) +
                        " out of range for " + receiver.arch.name());
  if (stitch.spec.in_shape != spts[i].shape ||
      stitch.spec.out_shape != rpts[j].shape)
    throw AssemblyError("assemble: stitch spec " +
                        stitch.spec.in_shape.str() + "->" +
                        stitch.spec.out_shape.str() +
                        " does not match stitch points " +
                        spts[i].shape.str() + "->" + rpts[j].shape.str());
  StitchedNetwork net;
  net.sender = &sender;
  net.i = i;
  net.receiver = &receiver;
  net.j = j;
  net.stitch = std::move(stitch);
  net.frozen_digest = net.compute_frozen_digest();
  return net;
}

inline double evaluate_stitched(const StitchedNetwork& net,
                                const DatasetSplit& split,
                                int batch_size = 128) {
  if (split.count == 0) throw ArgumentError("evaluate_stitched: empty split");
  int correct = 0;
  for (int start = 0; start < split.count; start += batch_size) {
    int end = std::min(split.count, start + batch_size);
    std::vector<int> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    ImageBatch b = split.batch(idx);
    Tensor logits = net.forward(b.images);
    for (int n = 0; n < logits.n; ++n) {
      const float* z = logits.image(n);
      int best = 0;
      for (int k = 1; k < kNumClasses; ++k)
        if (z[k] > z[best]) best = k;
      if (best == b.labels[n]) ++correct;
    }
  }
  return static_cast<double>(correct) / split.count;
}

}  // namespace stitchlab
