#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gansearch/config.hpp"
#include "gansearch/rng.hpp"
#include "gansearch/tensor.hpp"

namespace gansearch {

uint64_t fnv1a64(const void* data, size_t bytes);
uint64_t tensor_checksum(const Tensor& t);

struct LabeledImageSet {
  Tensor images;            // [N, ch, H, W], values in [-1, 1]
  std::vector<int> labels;  // in [0, num_classes)
  int num_classes = 0;

  int size() const { return images.empty() ? 0 : images.dim(0); }
  int resolution() const { return images.empty() ? 0 : images.dim(2); }
};

// Procedurally rendered class-distinct shapes with position/scale/color
// jitter; class counts balanced within +-1 and deterministic per seed.
LabeledImageSet gen_synthetic_dataset(int n, int resolution, int num_classes, uint64_t seed);

// Standard binary batches: data_batch_1..5.bin, each 10000 records of
// 1 label byte + 3072 pixel bytes (R, G, B planes); pixels map to [-1, 1].
LabeledImageSet load_cifar10_bin(const std::string& dir);

// Gather a batch by index.
Tensor batch_images(const LabeledImageSet& data, const std::vector<int>& indices);

// Average-pool the whole set to half resolution (staged training inputs).
LabeledImageSet downsample2x(const LabeledImageSet& data);

// ---------------------------------------------------------------------------
// Checkpoints: one raw little-endian float32 data file plus a text manifest,
// written via temp-file-then-rename. Load is bitwise-exact and verifies the
// data hash, offsets and shapes.
// ---------------------------------------------------------------------------

using TensorMap = std::map<std::string, Tensor>;

struct CheckpointManifest {
  int version = 1;
  uint64_t config_hash = 0;
  uint64_t data_hash = 0;
  std::vector<std::pair<std::string, std::string>> rng_states;
  std::vector<std::pair<std::string, std::string>> meta;  // free-form key/value
  struct Entry {
    std::string name;
    std::vector<int> shape;
    uint64_t offset = 0;
  };
  std::vector<Entry> entries;

  const std::string* find_meta(const std::string& key) const;
};

CheckpointManifest save_checkpoint(const TensorMap& tensors, const CheckpointManifest& meta,
                                   const std::string& dir);
std::pair<TensorMap, CheckpointManifest> load_checkpoint(const std::string& dir);

// ---------------------------------------------------------------------------
// Images out
// ---------------------------------------------------------------------------

// Binary P6, maxval 255; pixel = round((v + 1) * 127.5) clamped to [0, 255].
// Input must be [3, H, W] (or [1, H, W], replicated) within [-1, 1].
std::string encode_ppm(const Tensor& image);
void write_ppm_file(const Tensor& image, const std::string& path);

// [N,3,H,W] -> one [3, rows*H, cols*W] grid image (blank slots at -1).
Tensor tile_images(const Tensor& batch, int cols);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace gansearch
