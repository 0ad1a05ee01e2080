#pragma once

#include <cstdint>
#include <cstring>
#include <random>
#include <string>
#include <vector>

#include "stitchlab/errors.hpp"

namespace stitchlab {

// Channel/height/width of one activation, batch dimension excluded.
struct TensorShape {
  int c = 0;
  int h = 0;
  int w = 0;

  bool operator==(const TensorShape&) const = default;

  std::string str() const {
    return "(" + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
  }
};

// Dense NCHW float tensor.
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        data(static_cast<size_t>(n_) * c_ * h_ * w_, 0.0f) {}

  static Tensor like(const Tensor& t) { return Tensor(t.n, t.c, t.h, t.w); }

  size_t size() const { return data.size(); }
  size_t plane() const { return static_cast<size_t>(h) * w; }
  size_t stride_n() const { return static_cast<size_t>(c) * h * w; }

  float& at(int i, int ch, int y, int x) {
    return data[((static_cast<size_t>(i) * c + ch) * h + y) * w + x];
  }
  float at(int i, int ch, int y, int x) const {
    return data[((static_cast<size_t>(i) * c + ch) * h + y) * w + x];
  }

  float* image(int i) { return data.data() + i * stride_n(); }
  const float* image(int i) const { return data.data() + i * stride_n(); }

  TensorShape shape3() const { return {c, h, w}; }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  std::string shape_str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

inline void require_shape(const Tensor& t, TensorShape want, const char* where) {
  if (t.shape3() != want) {
    throw ShapeError(std::string(where) + ": expected " + want.str() +
                     ", got " + t.shape3().str());
  }
}

// splitmix64; used to derive independent stream seeds from one root seed.
inline uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline void fill_normal(std::vector<float>& v, float stddev, uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<float> dist(0.0f, stddev);
  for (auto& x : v) x = dist(gen);
}

// FNV-1a over the raw float bytes, consumed in 64-bit words with a byte-wise
// tail; the frozen-parameter digest. Any single-bit change in any parameter
// changes the result.
inline uint64_t fnv1a(uint64_t h, const std::vector<float>& v) {
  const unsigned char* p = reinterpret_cast<const unsigned char*>(v.data());
  size_t bytes = v.size() * sizeof(float);
  size_t i = 0;
  for (; i + 8 <= bytes; i += 8) {
    uint64_t w;
    std::memcpy(&w, p + i, 8);
    h ^= w;
    h *= 0x100000001b3ULL;
  }
  for (; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

}  // namespace stitchlab
