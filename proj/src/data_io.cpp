#include "gansearch/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "gansearch/errors.hpp"
#include "gansearch/ops.hpp"

namespace fs = std::filesystem;

namespace gansearch {

uint64_t fnv1a64(const void* data, size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = 1469598103934665603ull;
  for (size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

uint64_t tensor_checksum(const Tensor& t) {
  return fnv1a64(t.data(), sizeof(float) * static_cast<size_t>(t.numel()));
}

// ---------------------------------------------------------------------------
// Synthetic dataset
// ---------------------------------------------------------------------------

namespace {

// Signed distance (pixels) from point (dx, dy) relative to the shape center;
// negative inside. `a` is the shape half-size.
float shape_sdf(int cls, float dx, float dy, float a) {
  const float ax = std::abs(dx), ay = std::abs(dy);
  switch (cls) {
    case 0:  // disk
      return std::sqrt(dx * dx + dy * dy) - a;
    case 1:  // square
      return std::max(ax, ay) - a;
    case 2: {  // upright cross
      const float t = 0.4f * a;
      const float bar_h = std::max(ax - a, ay - t);
      const float bar_v = std::max(ax - t, ay - a);
      return std::min(bar_h, bar_v);
    }
    case 3: {  // ring
      const float t = 0.35f * a;
      return std::abs(std::sqrt(dx * dx + dy * dy) - 0.8f * a) - t;
    }
    case 4:  // diamond
      return (ax + ay) - 1.2f * a;
    case 5:  // vertical bar
      return std::max(ax - 0.4f * a, ay - a);
    case 6:  // horizontal bar
      return std::max(ax - a, ay - 0.4f * a);
    case 7: {  // diagonal cross
      const float rx = (dx + dy) * 0.70710678f, ry = (dy - dx) * 0.70710678f;
      const float t = 0.4f * a;
      const float b1 = std::max(std::abs(rx) - 1.2f * a, std::abs(ry) - t);
      const float b2 = std::max(std::abs(rx) - t, std::abs(ry) - 1.2f * a);
      return std::min(b1, b2);
    }
    case 8: {  // square frame
      const float t = 0.3f * a;
      return std::abs(std::max(ax, ay) - 0.8f * a) - t;
    }
    default: {  // two dots
      const float r1 = std::sqrt((dx + 0.5f * a) * (dx + 0.5f * a) + dy * dy);
      const float r2 = std::sqrt((dx - 0.5f * a) * (dx - 0.5f * a) + dy * dy);
      return std::min(r1, r2) - 0.45f * a;
    }
  }
}

}  // namespace

LabeledImageSet gen_synthetic_dataset(int n, int resolution, int num_classes, uint64_t seed) {
  if (resolution != 8 && resolution != 16 && resolution != 32 && resolution != 48)
    throw ConfigError("gen_synthetic_dataset: resolution must be one of {8,16,32,48}, got " +
                      std::to_string(resolution));
  if (num_classes < 1 || num_classes > 10)
    throw ConfigError("gen_synthetic_dataset: num_classes must be in [1,10]");
  if (n < 1) throw ConfigError("gen_synthetic_dataset: n must be >= 1");

  Rng rng(seed);
  LabeledImageSet set;
  set.num_classes = num_classes;
  set.images = Tensor({n, 3, resolution, resolution});
  set.labels.resize(static_cast<size_t>(n));

  // balanced labels, then a deterministic shuffle
  for (int i = 0; i < n; ++i) set.labels[static_cast<size_t>(i)] = i % num_classes;
  for (int i = n - 1; i > 0; --i)
    std::swap(set.labels[static_cast<size_t>(i)],
              set.labels[static_cast<size_t>(rng.uniform_int(i + 1))]);

  const float r = static_cast<float>(resolution);
  for (int i = 0; i < n; ++i) {
    const int cls = set.labels[static_cast<size_t>(i)];
    const float cx = 0.5f * r + (rng.uniform() - 0.5f) * 0.25f * r;
    const float cy = 0.5f * r + (rng.uniform() - 0.5f) * 0.25f * r;
    const float a = (0.22f + 0.10f * rng.uniform()) * r;
    float fg[3], bg[3];
    for (int c = 0; c < 3; ++c) {
      fg[c] = 0.25f + 0.75f * rng.uniform();
      bg[c] = -1.0f + 0.6f * rng.uniform();
    }
    for (int y = 0; y < resolution; ++y) {
      for (int x = 0; x < resolution; ++x) {
        const float d = shape_sdf(cls, x + 0.5f - cx, y + 0.5f - cy, a);
        const float cov = std::clamp(0.5f - d, 0.0f, 1.0f);
        for (int c = 0; c < 3; ++c) {
          float v = bg[c] + (fg[c] - bg[c]) * cov;
          v += 0.03f * (2.0f * rng.uniform() - 1.0f);
          set.images.at(i, c, y, x) = std::clamp(v, -1.0f, 1.0f);
        }
      }
    }
  }
  return set;
}

// ---------------------------------------------------------------------------
// CIFAR-10 binary reader
// ---------------------------------------------------------------------------

namespace {
constexpr int kCifarRecord = 3073;  // 1 label byte + 3 * 1024 pixels
constexpr int kCifarPerFile = 10000;
}  // namespace

LabeledImageSet load_cifar10_bin(const std::string& dir) {
  LabeledImageSet set;
  set.num_classes = 10;
  set.images = Tensor({5 * kCifarPerFile, 3, 32, 32});
  set.labels.resize(static_cast<size_t>(5 * kCifarPerFile));

  std::vector<unsigned char> record(kCifarRecord);
  int out = 0;
  for (int b = 1; b <= 5; ++b) {
    const std::string path = dir + "/data_batch_" + std::to_string(b) + ".bin";
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("load_cifar10_bin: cannot open " + path);
    f.seekg(0, std::ios::end);
    const int64_t size = f.tellg();
    if (size != static_cast<int64_t>(kCifarRecord) * kCifarPerFile)
      throw DataError("load_cifar10_bin: " + path + " has " + std::to_string(size) +
                      " bytes; expected " + std::to_string(kCifarRecord * kCifarPerFile) +
                      " (truncated at byte " + std::to_string(size - size % kCifarRecord) + ")");
    f.seekg(0);
    for (int i = 0; i < kCifarPerFile; ++i, ++out) {
      f.read(reinterpret_cast<char*>(record.data()), kCifarRecord);
      if (!f)
        throw DataError("load_cifar10_bin: short read in " + path + " at byte " +
                        std::to_string(static_cast<int64_t>(i) * kCifarRecord));
      const int label = record[0];
      if (label > 9)
        throw DataError("load_cifar10_bin: label byte " + std::to_string(label) + " out of [0,9] in " +
                        path + " record " + std::to_string(i));
      set.labels[static_cast<size_t>(out)] = label;
      float* dst = set.images.data() + static_cast<int64_t>(out) * 3 * 1024;
      for (int p = 0; p < 3 * 1024; ++p)
        dst[p] = static_cast<float>(record[static_cast<size_t>(1 + p)]) / 127.5f - 1.0f;
    }
  }
  return set;
}

Tensor batch_images(const LabeledImageSet& data, const std::vector<int>& indices) {
  const int ch = data.images.dim(1), h = data.images.dim(2), w = data.images.dim(3);
  Tensor out({static_cast<int>(indices.size()), ch, h, w});
  const int64_t stride = static_cast<int64_t>(ch) * h * w;
  for (size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    if (idx < 0 || idx >= data.size())
      throw DataError("batch_images: index " + std::to_string(idx) + " out of range");
    std::memcpy(out.data() + static_cast<int64_t>(i) * stride,
                data.images.data() + idx * stride, sizeof(float) * static_cast<size_t>(stride));
  }
  return out;
}

LabeledImageSet downsample2x(const LabeledImageSet& data) {
  LabeledImageSet out;
  out.labels = data.labels;
  out.num_classes = data.num_classes;
  out.images = avg_pool2x(data.images);
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

const std::string* CheckpointManifest::find_meta(const std::string& key) const {
  for (const auto& [k, v] : meta)
    if (k == key) return &v;
  return nullptr;
}

namespace {

void atomic_write(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + tmp);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("short write to " + tmp);
  }
  fs::rename(tmp, path);
}

}  // namespace

CheckpointManifest save_checkpoint(const TensorMap& tensors, const CheckpointManifest& meta,
                                   const std::string& dir) {
  fs::create_directories(dir);
  CheckpointManifest m = meta;
  m.version = 1;
  m.entries.clear();

  std::string data;
  for (const auto& [name, t] : tensors) {
    CheckpointManifest::Entry e;
    e.name = name;
    e.shape = t.shape();
    e.offset = data.size();
    data.append(reinterpret_cast<const char*>(t.data()),
                sizeof(float) * static_cast<size_t>(t.numel()));
    m.entries.push_back(std::move(e));
  }
  m.data_hash = fnv1a64(data.data(), data.size());

  std::ostringstream mf;
  mf << "gansearch-checkpoint v" << m.version << "\n";
  mf << "config_hash " << m.config_hash << "\n";
  mf << "data_hash " << m.data_hash << "\n";
  for (const auto& [name, state] : m.rng_states) mf << "rng " << name << ' ' << state << "\n";
  for (const auto& [key, value] : m.meta) mf << "meta " << key << ' ' << value << "\n";
  for (const auto& e : m.entries) {
    mf << "tensor " << e.name << ' ' << e.shape.size();
    for (int d : e.shape) mf << ' ' << d;
    mf << ' ' << e.offset << "\n";
  }
  mf << "end\n";

  // data first, manifest last: a missing/old manifest never points at
  // half-written data
  atomic_write(dir + "/params.bin", data);
  atomic_write(dir + "/manifest.txt", mf.str());
  return m;
}

std::pair<TensorMap, CheckpointManifest> load_checkpoint(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.txt");
  if (!mf) throw DataError("load_checkpoint: cannot open " + dir + "/manifest.txt");
  CheckpointManifest m;
  std::string line;
  if (!std::getline(mf, line) || line.rfind("gansearch-checkpoint v", 0) != 0)
    throw DataError("load_checkpoint: bad manifest magic in " + dir);
  m.version = std::stoi(line.substr(22));
  bool saw_end = false;
  while (std::getline(mf, line)) {
    if (line == "end") {
      saw_end = true;
      break;
    }
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "config_hash") {
      ls >> m.config_hash;
    } else if (kind == "data_hash") {
      ls >> m.data_hash;
    } else if (kind == "rng") {
      std::string name, rest;
      ls >> name;
      std::getline(ls, rest);
      if (!rest.empty() && rest[0] == ' ') rest.erase(0, 1);
      m.rng_states.emplace_back(name, rest);
    } else if (kind == "meta") {
      std::string key, rest;
      ls >> key;
      std::getline(ls, rest);
      if (!rest.empty() && rest[0] == ' ') rest.erase(0, 1);
      m.meta.emplace_back(key, rest);
    } else if (kind == "tensor") {
      CheckpointManifest::Entry e;
      size_t rank = 0;
      ls >> e.name >> rank;
      e.shape.resize(rank);
      for (size_t i = 0; i < rank; ++i) ls >> e.shape[i];
      ls >> e.offset;
      if (!ls) throw DataError("load_checkpoint: malformed tensor line '" + line + "'");
      m.entries.push_back(std::move(e));
    } else {
      throw DataError("load_checkpoint: unknown manifest line '" + line + "'");
    }
  }
  if (!saw_end) throw DataError("load_checkpoint: truncated manifest in " + dir);

  std::ifstream df(dir + "/params.bin", std::ios::binary);
  if (!df) throw DataError("load_checkpoint: cannot open " + dir + "/params.bin");
  std::string data((std::istreambuf_iterator<char>(df)), std::istreambuf_iterator<char>());
  if (fnv1a64(data.data(), data.size()) != m.data_hash)
    throw DataError("load_checkpoint: data corruption in " + dir + "/params.bin (hash mismatch)");

  TensorMap tensors;
  uint64_t expect_offset = 0;
  for (const auto& e : m.entries) {
    if (e.offset != expect_offset)
      throw DataError("load_checkpoint: offset mismatch at tensor '" + e.name + "'");
    const uint64_t bytes = sizeof(float) * static_cast<uint64_t>(shape_numel(e.shape));
    if (e.offset + bytes > data.size())
      throw DataError("load_checkpoint: tensor '" + e.name + "' exceeds data file");
    Tensor t(e.shape);
    std::memcpy(t.data(), data.data() + e.offset, bytes);
    tensors.emplace(e.name, std::move(t));
    expect_offset += bytes;
  }
  if (expect_offset != data.size())
    throw DataError("load_checkpoint: trailing bytes in " + dir + "/params.bin");
  return {std::move(tensors), std::move(m)};
}

// ---------------------------------------------------------------------------
// PPM output
// ---------------------------------------------------------------------------

std::string encode_ppm(const Tensor& image) {
  if (image.rank() != 3 || (image.dim(0) != 3 && image.dim(0) != 1))
    throw ShapeError("encode_ppm: image must be [3,H,W] or [1,H,W], got " + image.shape_str());
  const int ch = image.dim(0), h = image.dim(1), w = image.dim(2);
  for (int64_t i = 0; i < image.numel(); ++i)
    if (image[i] < -1.0f - 1e-6f || image[i] > 1.0f + 1e-6f)
      throw NumericError("encode_ppm: pixel value " + std::to_string(image[i]) +
                         " outside [-1,1]");
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.reserve(out.size() + static_cast<size_t>(3) * h * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = ch == 3 ? image[static_cast<int64_t>(c) * h * w + y * w + x]
                                : image[static_cast<int64_t>(y) * w + x];
        const long byte = std::lround((v + 1.0f) * 127.5f);
        out.push_back(static_cast<char>(std::clamp(byte, 0L, 255L)));
      }
  return out;
}

void write_ppm_file(const Tensor& image, const std::string& path) {
  atomic_write(path, encode_ppm(image));
}

Tensor tile_images(const Tensor& batch, int cols) {
  if (batch.rank() != 4) throw ShapeError("tile_images: batch must be NCHW");
  const int n = batch.dim(0), ch = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  const int rows = (n + cols - 1) / cols;
  Tensor grid = Tensor::full({ch, rows * h, cols * w}, -1.0f);
  for (int i = 0; i < n; ++i) {
    const int ry = (i / cols) * h, rx = (i % cols) * w;
    for (int c = 0; c < ch; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          grid[static_cast<int64_t>(c) * (rows * h) * (cols * w) +
               static_cast<int64_t>(ry + y) * (cols * w) + rx + x] = batch.at(i, c, y, x);
  }
  return grid;
}

void write_text_file(const std::string& path, const std::string& text) {
  atomic_write(path, text);
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("read_text_file: cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

namespace {

struct FieldDef {
  const char* name;
  enum Kind { kInt, kInt64, kU64, kDouble, kString } kind;
  size_t offset;
};

#define FIELD(kind, member) {#member, FieldDef::kind, offsetof(SearchConfig, member)}

const FieldDef kFields[] = {
    FIELD(kInt, total_iters),
    FIELD(kInt, shared_epochs),
    FIELD(kInt, ctrl_steps),
    FIELD(kInt, num_cells),
    FIELD(kInt, u_stage),
    FIELD(kInt, k_beams),
    FIELD(kInt, m_candidates),
    FIELD(kDouble, reset_threshold),
    FIELD(kInt, window_len),
    FIELD(kString, metric),
    FIELD(kInt, retrain_steps),
    FIELD(kDouble, lr_g),
    FIELD(kDouble, lr_d),
    FIELD(kDouble, lr_ctrl),
    FIELD(kDouble, entropy_weight),
    FIELD(kDouble, baseline_decay),
    FIELD(kInt, batch_d),
    FIELD(kInt, batch_g),
    FIELD(kInt, z_dim),
    FIELD(kInt, base_channels),
    FIELD(kInt, d_channels),
    FIELD(kInt, base_resolution),
    FIELD(kInt, image_channels),
    FIELD(kInt, hidden_size),
    FIELD(kInt, data_train),
    FIELD(kInt, data_eval),
    FIELD(kInt, data_classes),
    FIELD(kU64, data_seed),
    FIELD(kInt, eval_samples_search),
    FIELD(kInt, eval_samples_final),
    FIELD(kInt, is_splits),
    FIELD(kInt, surrogate_epochs),
    FIELD(kInt, save_every),
    FIELD(kInt64, lr_zero_after),
};

#undef FIELD

void* field_ptr(SearchConfig& c, const FieldDef& f) {
  return reinterpret_cast<char*>(&c) + f.offset;
}

void set_field(SearchConfig& c, const FieldDef& f, const std::string& value, int line_no) {
  try {
    size_t pos = 0;
    switch (f.kind) {
      case FieldDef::kInt:
        *static_cast<int*>(field_ptr(c, f)) = std::stoi(value, &pos);
        break;
      case FieldDef::kInt64:
        *static_cast<int64_t*>(field_ptr(c, f)) = std::stoll(value, &pos);
        break;
      case FieldDef::kU64:
        *static_cast<uint64_t*>(field_ptr(c, f)) = std::stoull(value, &pos);
        break;
      case FieldDef::kDouble:
        *static_cast<double*>(field_ptr(c, f)) = std::stod(value, &pos);
        break;
      case FieldDef::kString:
        *static_cast<std::string*>(field_ptr(c, f)) = value;
        return;
    }
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw ConfigError("config line " + std::to_string(line_no) + ": bad value '" + value +
                      "' for key '" + f.name + "'");
  }
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

}  // namespace

SearchConfig parse_config_text(const std::string& text) {
  SearchConfig config;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool found = false;
    for (const auto& f : kFields) {
      if (key == f.name) {
        set_field(config, f, value, line_no);
        found = true;
        break;
      }
    }
    if (!found)
      throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  return config;
}

SearchConfig parse_config(const std::string& path) {
  return parse_config_text(read_text_file(path));
}

std::string config_to_string(const SearchConfig& config) {
  std::ostringstream os;
  auto& c = const_cast<SearchConfig&>(config);
  for (const auto& f : kFields) {
    os << f.name << '=';
    switch (f.kind) {
      case FieldDef::kInt: os << *static_cast<int*>(field_ptr(c, f)); break;
      case FieldDef::kInt64: os << *static_cast<int64_t*>(field_ptr(c, f)); break;
      case FieldDef::kU64: os << *static_cast<uint64_t*>(field_ptr(c, f)); break;
      case FieldDef::kDouble: {
        std::ostringstream d;
        d.precision(17);
        d << *static_cast<double*>(field_ptr(c, f));
        os << d.str();
        break;
      }
      case FieldDef::kString: os << *static_cast<std::string*>(field_ptr(c, f)); break;
    }
    os << '\n';
  }
  return os.str();
}

uint64_t config_hash(const SearchConfig& config) {
  const std::string s = config_to_string(config);
  return fnv1a64(s.data(), s.size());
}

void validate_config(const SearchConfig& c) {
  if (c.total_iters < 1) throw ConfigError("total_iters must be >= 1");
  if (c.num_cells < 1) throw ConfigError("num_cells must be >= 1");
  const int u = c.resolved_u_stage();
  if (u < 1) throw ConfigError("u_stage must resolve to >= 1");
  if (c.total_iters % u != 0)
    throw ConfigError("total_iters (" + std::to_string(c.total_iters) +
                      ") must be divisible by u_stage (" + std::to_string(u) + ")");
  if (c.k_beams < 1 || c.m_candidates < c.k_beams)
    throw ConfigError("need 1 <= K <= M (K=" + std::to_string(c.k_beams) +
                      ", M=" + std::to_string(c.m_candidates) + ")");
  if (c.metric != "is" && c.metric != "recipfid")
    throw ConfigError("metric must be 'is' or 'recipfid', got '" + c.metric + "'");
  if (c.window_len < 2) throw ConfigError("window_len must be >= 2");
  if (c.batch_d < 2 || c.batch_g < 1) throw ConfigError("batch sizes too small");
  if (c.data_classes < 2 || c.data_classes > 10)
    throw ConfigError("data_classes must be in [2,10]");
  if (c.base_resolution < 1) throw ConfigError("base_resolution must be >= 1");
  if (c.eval_samples_search < c.is_splits)
    throw ConfigError("eval_samples_search must cover the IS splits");
}

}  // namespace gansearch
