#include "gansearch/genotype.hpp"

#include <sstream>

#include "gansearch/errors.hpp"

namespace gansearch {

int Genotype::output_resolution() const {
  int r = base_resolution;
  for (size_t i = 0; i < cells.size(); ++i) r *= 2;
  return r;
}

int TokenSpec::vocab(int slot) const {
  if (slot < 0 || slot >= slot_count())
    throw DataError("TokenSpec: slot " + std::to_string(slot) + " out of range for cell " +
                    std::to_string(cell_index));
  if (slot < cell_index) return 2;  // skip bits
  switch (slot - cell_index) {
    case 0: return kConvTypes;
    case 1: return kNormTypes;
    case 2: return kUpsampleTypes;
    default: return 2;  // shortcut
  }
}

std::string TokenSpec::slot_name(int slot) const {
  if (slot < cell_index) return "skip" + std::to_string(slot);
  switch (slot - cell_index) {
    case 0: return "conv_type";
    case 1: return "norm_type";
    case 2: return "upsample_type";
    default: return "shortcut";
  }
}

std::vector<int> encode(const CellGene& gene) {
  std::vector<int> tokens;
  tokens.reserve(gene.skips.size() + kCategoricalSlots);
  for (uint8_t s : gene.skips) tokens.push_back(s ? 1 : 0);
  tokens.push_back(static_cast<int>(gene.conv));
  tokens.push_back(static_cast<int>(gene.norm));
  tokens.push_back(static_cast<int>(gene.upsample));
  tokens.push_back(gene.shortcut ? 1 : 0);
  return tokens;
}

CellGene decode(const std::vector<int>& tokens, int cell_index) {
  TokenSpec spec{cell_index};
  if (static_cast<int>(tokens.size()) != spec.slot_count())
    throw DataError("decode: cell " + std::to_string(cell_index) + " expects " +
                    std::to_string(spec.slot_count()) + " tokens, got " +
                    std::to_string(tokens.size()));
  for (int t = 0; t < spec.slot_count(); ++t) {
    const int v = tokens[static_cast<size_t>(t)];
    if (v < 0 || v >= spec.vocab(t))
      throw DataError("decode: token " + std::to_string(v) + " out of range [0," +
                      std::to_string(spec.vocab(t)) + ") in slot " + spec.slot_name(t) +
                      " of cell " + std::to_string(cell_index));
  }
  CellGene gene;
  gene.cell_index = cell_index;
  gene.skips.assign(tokens.begin(), tokens.begin() + cell_index);
  gene.conv = static_cast<ConvType>(tokens[static_cast<size_t>(cell_index)]);
  gene.norm = static_cast<NormType>(tokens[static_cast<size_t>(cell_index) + 1]);
  gene.upsample = static_cast<UpsampleType>(tokens[static_cast<size_t>(cell_index) + 2]);
  gene.shortcut = tokens[static_cast<size_t>(cell_index) + 3] != 0;
  return gene;
}

std::vector<std::string> validate(const Genotype& genotype) {
  std::vector<std::string> violations;
  if (genotype.cells.empty()) violations.push_back("genotype needs at least one cell");
  if (genotype.base_resolution < 1) violations.push_back("base_resolution must be >= 1");
  if (genotype.base_channels < 1) violations.push_back("base_channels must be >= 1");
  if (genotype.z_dim < 1) violations.push_back("z_dim must be >= 1");
  for (size_t i = 0; i < genotype.cells.size(); ++i) {
    const CellGene& c = genotype.cells[i];
    const std::string tag = "cell " + std::to_string(i) + ": ";
    if (c.cell_index != static_cast<int>(i))
      violations.push_back(tag + "cell_index " + std::to_string(c.cell_index) + " != position");
    if (c.skips.size() != i)
      violations.push_back(tag + "skip length " + std::to_string(c.skips.size()) + " != " +
                           std::to_string(i));
    for (uint8_t s : c.skips)
      if (s > 1) violations.push_back(tag + "skip bit out of {0,1}");
    if (static_cast<int>(c.conv) < 0 || static_cast<int>(c.conv) >= kConvTypes)
      violations.push_back(tag + "conv_type out of range");
    if (static_cast<int>(c.norm) < 0 || static_cast<int>(c.norm) >= kNormTypes)
      violations.push_back(tag + "norm_type out of range");
    if (static_cast<int>(c.upsample) < 0 || static_cast<int>(c.upsample) >= kUpsampleTypes)
      violations.push_back(tag + "upsample_type out of range");
  }
  return violations;
}

uint64_t search_space_size(int num_cells) {
  if (num_cells < 1) throw ConfigError("search_space_size: num_cells must be >= 1");
  uint64_t total = 1;
  for (int s = 0; s < num_cells; ++s) {
    uint64_t cell = 36;  // 2 * 3 * 3 * 2
    for (int j = 0; j < s; ++j) cell *= 2;
    if (total > UINT64_MAX / cell)
      throw ConfigError("search_space_size: overflow at " + std::to_string(num_cells) + " cells");
    total *= cell;
  }
  return total;
}

Genotype random_genotype(int num_cells, Rng& rng, int base_resolution, int base_channels,
                         int z_dim) {
  if (num_cells < 1) throw ConfigError("random_genotype: num_cells must be >= 1");
  Genotype g;
  g.base_resolution = base_resolution;
  g.base_channels = base_channels;
  g.z_dim = z_dim;
  for (int s = 0; s < num_cells; ++s) {
    TokenSpec spec{s};
    std::vector<int> tokens(static_cast<size_t>(spec.slot_count()));
    for (int t = 0; t < spec.slot_count(); ++t)
      tokens[static_cast<size_t>(t)] = rng.uniform_int(spec.vocab(t));
    g.cells.push_back(decode(tokens, s));
  }
  return g;
}

LayerPlan to_layer_plan(const Genotype& genotype) {
  auto violations = validate(genotype);
  if (!violations.empty()) {
    std::string msg = "to_layer_plan: invalid genotype:";
    for (const auto& v : violations) msg += " [" + v + "]";
    throw DataError(msg);
  }
  LayerPlan plan;
  plan.z_dim = genotype.z_dim;
  plan.base_resolution = genotype.base_resolution;
  plan.base_channels = genotype.base_channels;
  int res = genotype.base_resolution;
  for (const CellGene& gene : genotype.cells) {
    LayerPlan::Cell cell;
    cell.index = gene.cell_index;
    cell.upsample = gene.upsample;
    cell.conv = gene.conv;
    cell.norm = gene.norm;
    cell.shortcut = gene.shortcut;
    cell.in_resolution = res;
    cell.out_resolution = res * 2;
    for (size_t j = 0; j < gene.skips.size(); ++j) {
      if (!gene.skips[j]) continue;
      LayerPlan::SkipIn skip;
      skip.source_cell = static_cast<int>(j);
      skip.upsample = gene.upsample;  // the cell's U also drives skip-in resizing
      skip.hops = gene.cell_index - static_cast<int>(j);
      cell.skip_ins.push_back(skip);
    }
    plan.cells.push_back(std::move(cell));
    res *= 2;
  }
  plan.output_resolution = res;
  return plan;
}

std::string format_genotype(const Genotype& genotype) {
  std::ostringstream os;
  for (const CellGene& gene : genotype.cells) {
    os << gene.cell_index;
    for (int t : encode(gene)) os << ' ' << t;
    os << '\n';
  }
  return os.str();
}

Genotype parse_genotype(const std::string& text, int base_resolution, int base_channels,
                        int z_dim) {
  Genotype g;
  g.base_resolution = base_resolution;
  g.base_channels = base_channels;
  g.z_dim = z_dim;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    int cell_index = -1;
    if (!(ls >> cell_index))
      throw DataError("parse_genotype: line " + std::to_string(line_no) + ": missing cell index");
    std::vector<int> tokens;
    int tok;
    while (ls >> tok) tokens.push_back(tok);
    if (!ls.eof())
      throw DataError("parse_genotype: line " + std::to_string(line_no) + ": malformed token");
    if (cell_index != g.num_cells())
      throw DataError("parse_genotype: line " + std::to_string(line_no) + ": cell index " +
                      std::to_string(cell_index) + ", expected " + std::to_string(g.num_cells()));
    g.cells.push_back(decode(tokens, cell_index));
  }
  if (g.cells.empty()) throw DataError("parse_genotype: no cells");
  return g;
}

}  // namespace gansearch
