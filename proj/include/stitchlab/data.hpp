#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "stitchlab/tensor.hpp"

namespace stitchlab {

constexpr int kImageSize = 32;
constexpr int kChannels = 3;
constexpr int kNumClasses = 10;
constexpr int kPixelsPerImage = kChannels * kImageSize * kImageSize;  // 3072
constexpr int kCifarRecordBytes = 1 + kPixelsPerImage;                // 3073

// Fixed published CIFAR-10 channel statistics; recorded in every manifest.
constexpr std::array<float, 3> kCifarMean = {0.4914f, 0.4822f, 0.4465f};
constexpr std::array<float, 3> kCifarStd = {0.2470f, 0.2435f, 0.2616f};

struct ImageBatch {
  Tensor images;  // (n, 3, 32, 32), normalized
  std::vector<int> labels;
};

enum class SplitRole { train, test };
enum class DataSource { cifar10, synthetic };

inline const char* to_string(SplitRole r) {
  return r == SplitRole::train ? "train" : "test";
}

// Immutable after construction; pixels kept as raw bytes, normalization
// applied at batch time.
struct DatasetSplit {
  SplitRole role = SplitRole::train;
  DataSource source = DataSource::synthetic;
  int count = 0;
  std::vector<uint8_t> pixels;  // count * 3072, CHW per image
  std::vector<int> labels;

  ImageBatch batch(const std::vector<int>& indices) const {
    ImageBatch out;
    out.images = Tensor(static_cast<int>(indices.size()), kChannels,
                        kImageSize, kImageSize);
    out.labels.reserve(indices.size());
    for (size_t bi = 0; bi < indices.size(); ++bi) {
      int idx = indices[bi];
      if (idx < 0 || idx >= count)
        throw ArgumentError("batch: index " + std::to_string(idx) +
                            " out of range for split of " +
                            std::to_string(count));
      const uint8_t* src = pixels.data() + static_cast<size_t>(idx) * kPixelsPerImage;
      float* dst = out.images.image(static_cast<int>(bi));
      for (int ch = 0; ch < kChannels; ++ch) {
        const float inv = 1.0f / (255.0f * kCifarStd[ch]);
        const float shift = kCifarMean[ch] / kCifarStd[ch];
        for (int p = 0; p < kImageSize * kImageSize; ++p)
          dst[ch * kImageSize * kImageSize + p] =
              src[ch * kImageSize * kImageSize + p] * inv - shift;
      }
      out.labels.push_back(labels[idx]);
    }
    return out;
  }

  ImageBatch all() const {
    std::vector<int> idx(count);
    std::iota(idx.begin(), idx.end(), 0);
    return batch(idx);
  }
};

// Shuffled index order for one epoch; a pure function of (seed, epoch).
inline std::vector<int> epoch_order(const DatasetSplit& split, uint64_t seed,
                                    int epoch) {
  std::vector<int> idx(split.count);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 gen(mix_seed(seed, 0xE70C000ULL + epoch));
  std::shuffle(idx.begin(), idx.end(), gen);
  return idx;
}

// ---------------------------------------------------------------------------
// CIFAR-10 binary ingestion
// ---------------------------------------------------------------------------

namespace detail {

inline void read_cifar_file(const std::filesystem::path& file,
                            DatasetSplit& split) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + file.string());
  in.seekg(0, std::ios::end);
  auto bytes = static_cast<long long>(in.tellg());
  in.seekg(0);
  if (bytes % kCifarRecordBytes != 0)
    throw CorruptRecordError(file.string() + ": size " + std::to_string(bytes) +
                             " is not a multiple of the 3073-byte record");
  long long records = bytes / kCifarRecordBytes;
  for (long long r = 0; r < records; ++r) {
    uint8_t label;
    in.read(reinterpret_cast<char*>(&label), 1);
    if (!in) throw IngestionError(file.string() + ": truncated read");
    if (label >= kNumClasses)
      throw CorruptRecordError(file.string() + ": record " + std::to_string(r) +
                               " has label byte " + std::to_string(label));
    split.labels.push_back(label);
    size_t off = split.pixels.size();
    split.pixels.resize(off + kPixelsPerImage);
    in.read(reinterpret_cast<char*>(split.pixels.data() + off),
            kPixelsPerImage);
    if (!in) throw IngestionError(file.string() + ": truncated read");
  }
  split.count += static_cast<int>(records);
}

}  // namespace detail

inline DatasetSplit load_cifar10(const std::filesystem::path& root,
                                 SplitRole role) {
  DatasetSplit split;
  split.role = role;
  split.source = DataSource::cifar10;
  std::vector<std::filesystem::path> files;
  if (role == SplitRole::train) {
    for (int i = 1; i <= 5; ++i)
      files.push_back(root / ("data_batch_" + std::to_string(i) + ".bin"));
  } else {
    files.push_back(root / "test_batch.bin");
  }
  for (const auto& f : files) {
    if (!std::filesystem::exists(f))
      throw IngestionError("missing CIFAR-10 file: " + f.string());
  }
  int expected = role == SplitRole::train ? 50000 : 10000;
  split.pixels.reserve(static_cast<size_t>(expected) * kPixelsPerImage);
  split.labels.reserve(expected);
  for (const auto& f : files) detail::read_cifar_file(f, split);
  if (split.count != expected)
    throw IngestionError("expected " + std::to_string(expected) +
                         " records under " + root.string() + ", got " +
                         std::to_string(split.count));
  return split;
}

// Resolve the data root: explicit argument wins, then STITCHLAB_DATA_ROOT.
inline std::filesystem::path resolve_data_root(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("STITCHLAB_DATA_ROOT")) return env;
  return {};
}

// ---------------------------------------------------------------------------
// Synthetic fixture
// ---------------------------------------------------------------------------

// Deterministic pseudo-random images whose label is recoverable from the
// image content: class c imprints a distinct low-frequency grating under
// uniform pixel noise. Labels cycle 0..9 so every split is class-balanced.
inline DatasetSplit make_synthetic(int n, uint64_t seed) {
  if (n < 1) throw ArgumentError("make_synthetic: n must be >= 1");
  DatasetSplit split;
  split.role = SplitRole::train;
  split.source = DataSource::synthetic;
  split.count = n;
  split.pixels.resize(static_cast<size_t>(n) * kPixelsPerImage);
  split.labels.resize(n);
  constexpr double kTau = 6.283185307179586;
  for (int i = 0; i < n; ++i) {
    int c = i % kNumClasses;
    split.labels[i] = c;
    std::mt19937_64 gen(mix_seed(seed, 0x5D17ULL + i));
    std::uniform_int_distribution<int> noise(-35, 35);
    double f = 0.5 + 0.5 * c;
    uint8_t* img = split.pixels.data() + static_cast<size_t>(i) * kPixelsPerImage;
    for (int ch = 0; ch < kChannels; ++ch)
      for (int y = 0; y < kImageSize; ++y)
        for (int x = 0; x < kImageSize; ++x) {
          double grating = std::sin(kTau * f * x / kImageSize) *
                           std::sin(kTau * f * (y + 2 * ch) / kImageSize);
          int v = static_cast<int>(std::lround(127.5 + 90.0 * grating)) +
                  noise(gen);
          img[(ch * kImageSize + y) * kImageSize + x] =
              static_cast<uint8_t>(std::clamp(v, 0, 255));
        }
  }
  return split;
}

// Caller-split view: first `take` examples of a split (used by budget
// profiles that train on a data fraction).
inline DatasetSplit take_prefix(const DatasetSplit& split, int take) {
  if (take >= split.count) return split;
  DatasetSplit out;
  out.role = split.role;
  out.source = split.source;
  out.count = take;
  out.pixels.assign(split.pixels.begin(),
                    split.pixels.begin() +
                        static_cast<size_t>(take) * kPixelsPerImage);
  out.labels.assign(split.labels.begin(), split.labels.begin() + take);
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

enum class AugmentPolicy { none, crop_flip };

// pad-4 random crop + horizontal flip, seeded; `none` is the identity.
inline ImageBatch augment(const ImageBatch& batch, AugmentPolicy policy,
                          uint64_t seed) {
  if (policy == AugmentPolicy::none) return batch;
  constexpr int pad = 4;
  ImageBatch out;
  out.images = Tensor::like(batch.images);
  out.labels = batch.labels;
  std::mt19937_64 gen(mix_seed(seed, 0xA06ULL));
  std::uniform_int_distribution<int> off(0, 2 * pad);
  std::uniform_int_distribution<int> coin(0, 1);
  for (int i = 0; i < batch.images.n; ++i) {
    int dy = off(gen) - pad;
    int dx = off(gen) - pad;
    bool flip = coin(gen) == 1;
    for (int ch = 0; ch < batch.images.c; ++ch)
      for (int y = 0; y < kImageSize; ++y)
        for (int x = 0; x < kImageSize; ++x) {
          int sx = flip ? kImageSize - 1 - x : x;
          int sy = y + dy, sxx = sx + dx;
          float v = 0.0f;
          if (sy >= 0 && sy < kImageSize && sxx >= 0 && sxx < kImageSize)
            v = batch.images.at(i, ch, sy, sxx);
          out.images.at(i, ch, y, x) = v;
        }
  }
  return out;
}

}  // namespace stitchlab
