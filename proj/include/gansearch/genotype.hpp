#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gansearch/rng.hpp"

namespace gansearch {

// Frozen token orderings; serialized genotypes depend on these values.
enum class ConvType : int { kPre = 0, kPost = 1 };
enum class NormType : int { kBatch = 0, kInstance = 1, kNone = 2 };
enum class UpsampleType : int { kBilinear = 0, kNearest = 1, kDeconv = 2 };

constexpr int kConvTypes = 2;
constexpr int kNormTypes = 3;
constexpr int kUpsampleTypes = 3;
constexpr int kCategoricalSlots = 4;  // C, N, U, SC

// One generator cell's gene. Cell s has s skip bits; skips[j] set means the
// cell takes a skip connection from cell j's output.
struct CellGene {
  int cell_index = 0;
  std::vector<uint8_t> skips;
  ConvType conv = ConvType::kPre;
  NormType norm = NormType::kBatch;
  UpsampleType upsample = UpsampleType::kBilinear;
  bool shortcut = false;

  bool operator==(const CellGene&) const = default;
};

struct Genotype {
  std::vector<CellGene> cells;
  int base_resolution = 4;
  int base_channels = 64;
  int z_dim = 64;

  int num_cells() const { return static_cast<int>(cells.size()); }
  int output_resolution() const;

  bool operator==(const Genotype&) const = default;
};

// Per-slot vocabulary sizes for one cell: s binary skip slots, then
// |C|=2, |N|=3, |U|=3, |SC|=2.
struct TokenSpec {
  int cell_index = 0;

  int slot_count() const { return cell_index + kCategoricalSlots; }
  int vocab(int slot) const;
  std::string slot_name(int slot) const;
};

// Tokens in fixed slot order (skips..., C, N, U, SC).
std::vector<int> encode(const CellGene& gene);

// Inverse of encode; throws DataError naming the slot for out-of-range
// tokens or a wrong token count.
CellGene decode(const std::vector<int>& tokens, int cell_index);

// Structural check; returns one message per violation, empty when valid.
std::vector<std::string> validate(const Genotype& genotype);

// Number of distinct genotypes with `num_cells` cells:
// prod_{s=0}^{n-1} 2^s * 36. Throws ConfigError if the count overflows u64.
uint64_t search_space_size(int num_cells);

// Uniform draw over the whole space.
Genotype random_genotype(int num_cells, Rng& rng, int base_resolution = 4,
                         int base_channels = 64, int z_dim = 64);

// -- Layer plan -------------------------------------------------------------

// Deterministic op-graph description of a genotype: latent projection,
// per-cell upsample + conv block + merges, final 1x1 conv to image space.
struct LayerPlan {
  struct SkipIn {
    int source_cell = 0;
    UpsampleType upsample = UpsampleType::kBilinear;
    int hops = 1;  // number of x2 upsampling steps to reach this cell's resolution

    bool operator==(const SkipIn&) const = default;
  };
  struct Cell {
    int index = 0;
    UpsampleType upsample = UpsampleType::kBilinear;
    ConvType conv = ConvType::kPre;
    NormType norm = NormType::kBatch;
    bool shortcut = false;
    std::vector<SkipIn> skip_ins;
    int in_resolution = 0;
    int out_resolution = 0;

    bool operator==(const Cell&) const = default;
  };

  int z_dim = 0;
  int base_resolution = 0;
  int base_channels = 0;
  int image_channels = 3;
  int output_resolution = 0;
  std::vector<Cell> cells;

  bool operator==(const LayerPlan&) const = default;
};

// Throws DataError with the violation list if the genotype is invalid.
LayerPlan to_layer_plan(const Genotype& genotype);

// -- Serialization ------------------------------------------------------------

// One line per cell: the cell index followed by its tokens, space-separated.
std::string format_genotype(const Genotype& genotype);

// Inverse of format_genotype. Base geometry is not part of the token format
// and must be supplied by the caller.
Genotype parse_genotype(const std::string& text, int base_resolution = 4,
                        int base_channels = 64, int z_dim = 64);

}  // namespace gansearch
