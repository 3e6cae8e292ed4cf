#include "gansearch/networks.hpp"

#include <cmath>
#include <unordered_set>

#include "gansearch/errors.hpp"

namespace gansearch {
namespace {

constexpr float kSigmaFloor = 1e-12f;

void add_param(ParamMap& m, const std::string& name, std::vector<int> shape, float stddev,
               Rng& rng) {
  m.emplace(name, Parameter(stddev > 0.0f ? Tensor::randn(std::move(shape), rng, stddev)
                                          : Tensor::zeros(std::move(shape))));
}

void add_const_param(ParamMap& m, const std::string& name, std::vector<int> shape, float v) {
  m.emplace(name, Parameter(Tensor::full(std::move(shape), v)));
}

float conv_std(int fan_in, float gain) { return gain / std::sqrt(static_cast<float>(fan_in)); }

std::string cell_prefix(int s) { return "g.cell" + std::to_string(s) + "."; }

void add_cell_params(ParamMap& m, int s, int channels, Rng& rng) {
  const std::string p = cell_prefix(s);
  const float g2 = std::sqrt(2.0f);
  add_param(m, p + "conv1.w", {channels, channels, 3, 3}, conv_std(channels * 9, g2), rng);
  add_param(m, p + "conv1.b", {channels}, 0.0f, rng);
  add_param(m, p + "conv2.w", {channels, channels, 3, 3}, conv_std(channels * 9, g2), rng);
  add_param(m, p + "conv2.b", {channels}, 0.0f, rng);
  for (int site = 1; site <= 2; ++site) {
    for (const char* kind : {"batch", "inst"}) {
      const std::string np = p + "norm" + std::to_string(site) + "." + kind + ".";
      add_const_param(m, np + "gamma", {channels}, 1.0f);
      add_const_param(m, np + "beta", {channels}, 0.0f);
    }
  }
  add_param(m, p + "up.deconv.w", {channels, channels, 4, 4}, conv_std(channels * 16, g2), rng);
  add_param(m, p + "up.deconv.b", {channels}, 0.0f, rng);
  for (int j = 0; j < s; ++j) {
    const std::string sp = p + "skip" + std::to_string(j) + ".";
    add_param(m, sp + "conv.w", {channels, channels, 1, 1}, conv_std(channels, g2), rng);
    add_param(m, sp + "conv.b", {channels}, 0.0f, rng);
    for (int h = 0; h < s - j; ++h) {
      const std::string dp = sp + "deconv" + std::to_string(h) + ".";
      add_param(m, dp + "w", {channels, channels, 4, 4}, conv_std(channels * 16, g2), rng);
      add_param(m, dp + "b", {channels}, 0.0f, rng);
    }
  }
}

Parameter& get_param(ParamMap& m, const std::string& name) {
  auto it = m.find(name);
  if (it == m.end()) throw StateError("missing parameter '" + name + "'");
  return it->second;
}

void add_sn_param(DiscriminatorNet& d, const std::string& name, std::vector<int> shape,
                  float stddev, Rng& rng) {
  add_param(d.params, name, shape, stddev, rng);
  const int rows = shape[0];
  Tensor u = Tensor::randn({rows}, rng);
  const float n = u.vec().norm();
  if (n > 0) u.vec() /= n;
  d.u[name] = std::move(u);
}

void add_d_block(DiscriminatorNet& d, const std::string& prefix, int in_ch, Rng& rng) {
  const int c = d.channels;
  const float g2 = std::sqrt(2.0f);
  add_sn_param(d, prefix + "conv1.w", {c, in_ch, 3, 3}, conv_std(in_ch * 9, g2), rng);
  add_param(d.params, prefix + "conv1.b", {c}, 0.0f, rng);
  add_sn_param(d, prefix + "conv2.w", {c, c, 3, 3}, conv_std(c * 9, g2), rng);
  add_param(d.params, prefix + "conv2.b", {c}, 0.0f, rng);
  add_sn_param(d, prefix + "sc.w", {c, in_ch, 1, 1}, conv_std(in_ch, 1.0f), rng);
  add_param(d.params, prefix + "sc.b", {c}, 0.0f, rng);
}

}  // namespace

SupernetWeights build_supernet(int num_cells, int base_resolution, int base_channels, int z_dim,
                               int image_channels, Rng& rng, int max_cells) {
  if (num_cells < 1) throw ConfigError("build_supernet: num_cells must be >= 1");
  SupernetWeights g;
  g.num_cells = num_cells;
  g.max_cells = max_cells < 0 ? num_cells : max_cells;
  if (g.max_cells < num_cells) throw ConfigError("build_supernet: max_cells < num_cells");
  g.base_resolution = base_resolution;
  g.base_channels = base_channels;
  g.z_dim = z_dim;
  g.image_channels = image_channels;

  const int proj = base_channels * base_resolution * base_resolution;
  add_param(g.params, "g.project.w", {proj, z_dim}, conv_std(z_dim, std::sqrt(2.0f)), rng);
  add_param(g.params, "g.project.b", {proj}, 0.0f, rng);
  for (int s = 0; s < num_cells; ++s) add_cell_params(g.params, s, base_channels, rng);
  add_param(g.params, "g.toimg.w", {image_channels, base_channels, 1, 1},
            conv_std(base_channels, 1.0f), rng);
  add_param(g.params, "g.toimg.b", {image_channels}, 0.0f, rng);
  return g;
}

DiscriminatorNet build_discriminator(int channels, int base_resolution, int image_channels,
                                     Rng& rng) {
  DiscriminatorNet d;
  d.stage = 0;
  d.channels = channels;
  d.base_resolution = base_resolution;
  d.image_channels = image_channels;
  add_d_block(d, "d.in0.", image_channels, rng);
  add_sn_param(d, "d.head.w", {1, channels}, conv_std(channels, 1.0f), rng);
  add_param(d.params, "d.head.b", {1}, 0.0f, rng);
  return d;
}

void grow(SupernetWeights& g, DiscriminatorNet& d, Rng& rng) {
  if (g.num_cells >= g.max_cells)
    throw StateError("grow: already at max stage " + std::to_string(g.stage()));
  add_cell_params(g.params, g.num_cells, g.base_channels, rng);
  g.num_cells += 1;
  const int t = d.stage + 1;
  add_d_block(d, "d.in" + std::to_string(t) + ".", d.image_channels, rng);
  add_d_block(d, "d.body" + std::to_string(t) + ".", d.channels, rng);
  d.stage = t;
}

void reinitialize(SupernetWeights& g, DiscriminatorNet& d, Rng& rng) {
  if (d.stage != g.stage())
    throw StateError("reinitialize: discriminator stage " + std::to_string(d.stage) +
                     " vs generator stage " + std::to_string(g.stage()));
  SupernetWeights fresh = build_supernet(1, g.base_resolution, g.base_channels, g.z_dim,
                                         g.image_channels, rng, g.max_cells);
  DiscriminatorNet fresh_d = build_discriminator(d.channels, d.base_resolution, d.image_channels,
                                                 rng);
  while (fresh.num_cells < g.num_cells) grow(fresh, fresh_d, rng);
  g.params = std::move(fresh.params);
  d.params = std::move(fresh_d.params);
  d.u = std::move(fresh_d.u);
}

std::vector<std::string> required_parameters(const Genotype& genotype) {
  std::vector<std::string> names = {"g.project.w", "g.project.b", "g.toimg.w", "g.toimg.b"};
  for (const CellGene& gene : genotype.cells) {
    const std::string p = cell_prefix(gene.cell_index);
    names.push_back(p + "conv1.w");
    names.push_back(p + "conv1.b");
    names.push_back(p + "conv2.w");
    names.push_back(p + "conv2.b");
    const char* kind = gene.norm == NormType::kBatch ? "batch"
                       : gene.norm == NormType::kInstance ? "inst" : nullptr;
    if (kind) {
      for (int site = 1; site <= 2; ++site) {
        const std::string np = p + "norm" + std::to_string(site) + "." + kind + ".";
        names.push_back(np + "gamma");
        names.push_back(np + "beta");
      }
    }
    if (gene.upsample == UpsampleType::kDeconv) {
      names.push_back(p + "up.deconv.w");
      names.push_back(p + "up.deconv.b");
    }
    for (size_t j = 0; j < gene.skips.size(); ++j) {
      if (!gene.skips[j]) continue;
      const std::string sp = p + "skip" + std::to_string(j) + ".";
      names.push_back(sp + "conv.w");
      names.push_back(sp + "conv.b");
      if (gene.upsample == UpsampleType::kDeconv) {
        for (int h = 0; h < gene.cell_index - static_cast<int>(j); ++h) {
          names.push_back(sp + "deconv" + std::to_string(h) + ".w");
          names.push_back(sp + "deconv" + std::to_string(h) + ".b");
        }
      }
    }
  }
  return names;
}

namespace {

// Upsample one step of a skip branch (or the main path) by the cell's U.
Value up_step(GradientContext& g, ParamMap& params, Value x, UpsampleType mode,
              const std::string& deconv_prefix) {
  switch (mode) {
    case UpsampleType::kBilinear: return upsample2x(g, x, UpsampleMode::kBilinear);
    case UpsampleType::kNearest: return upsample2x(g, x, UpsampleMode::kNearest);
    case UpsampleType::kDeconv:
      return transposed_conv2d(g, x, g.leaf(get_param(params, deconv_prefix + "w")),
                               g.leaf(get_param(params, deconv_prefix + "b")));
  }
  throw StateError("up_step: bad upsample mode");
}

Value norm_site(GradientContext& g, ParamMap& params, Value x, const CellGene& gene, int site,
                bool training) {
  if (gene.norm == NormType::kNone) return x;
  const char* kind = gene.norm == NormType::kBatch ? "batch" : "inst";
  const std::string np =
      cell_prefix(gene.cell_index) + "norm" + std::to_string(site) + "." + kind + ".";
  const NormMode mode = gene.norm == NormType::kBatch ? NormMode::kBatch : NormMode::kInstance;
  return normalize(g, x, mode, g.leaf(get_param(params, np + "gamma")),
                   g.leaf(get_param(params, np + "beta")), training);
}

}  // namespace

Value generator_forward(GradientContext& g, ParamMap& params, const Genotype& genotype, Value z,
                        bool training, int image_channels) {
  auto violations = validate(genotype);
  if (!violations.empty()) throw DataError("generator_forward: invalid genotype");
  const Tensor& zt = g.value(z);
  if (zt.rank() != 2 || zt.dim(1) != genotype.z_dim)
    throw ShapeError("generator_forward: z " + zt.shape_str() + " for z_dim " +
                     std::to_string(genotype.z_dim));
  const int n = zt.dim(0), C = genotype.base_channels, br = genotype.base_resolution;

  Value h = linear(g, z, g.leaf(get_param(params, "g.project.w")),
                   g.leaf(get_param(params, "g.project.b")));
  Value x = reshape(g, h, {n, C, br, br});

  std::vector<Value> cell_outs;
  for (const CellGene& gene : genotype.cells) {
    const std::string p = cell_prefix(gene.cell_index);
    Value in = gene.cell_index == 0 ? x : cell_outs.back();
    Value xu = up_step(g, params, in, gene.upsample, p + "up.deconv.");

    Value t;
    if (gene.conv == ConvType::kPre) {
      Value a = relu(g, norm_site(g, params, xu, gene, 1, training));
      Value c1 = conv2d(g, a, g.leaf(get_param(params, p + "conv1.w")),
                        g.leaf(get_param(params, p + "conv1.b")), 1, 1);
      Value a2 = relu(g, norm_site(g, params, c1, gene, 2, training));
      t = conv2d(g, a2, g.leaf(get_param(params, p + "conv2.w")),
                 g.leaf(get_param(params, p + "conv2.b")), 1, 1);
    } else {
      Value c1 = conv2d(g, xu, g.leaf(get_param(params, p + "conv1.w")),
                        g.leaf(get_param(params, p + "conv1.b")), 1, 1);
      Value a = relu(g, norm_site(g, params, c1, gene, 1, training));
      Value c2 = conv2d(g, a, g.leaf(get_param(params, p + "conv2.w")),
                        g.leaf(get_param(params, p + "conv2.b")), 1, 1);
      t = relu(g, norm_site(g, params, c2, gene, 2, training));
    }

    Value out = t;
    if (gene.shortcut) out = add(g, out, xu);
    for (size_t j = 0; j < gene.skips.size(); ++j) {
      if (!gene.skips[j]) continue;
      const std::string sp = p + "skip" + std::to_string(j) + ".";
      Value s = cell_outs[j];
      const int hops = gene.cell_index - static_cast<int>(j);
      for (int hstep = 0; hstep < hops; ++hstep)
        s = up_step(g, params, s, gene.upsample, sp + "deconv" + std::to_string(hstep) + ".");
      s = conv2d(g, s, g.leaf(get_param(params, sp + "conv.w")),
                 g.leaf(get_param(params, sp + "conv.b")), 1, 0);
      out = add(g, out, s);
    }
    cell_outs.push_back(out);
  }

  Value act = relu(g, cell_outs.back());
  Value img = conv2d(g, act, g.leaf(get_param(params, "g.toimg.w")),
                     g.leaf(get_param(params, "g.toimg.b")), 1, 0);
  return tanh(g, img);
}

Tensor forward_child(const SupernetWeights& supernet, const Genotype& genotype, const Tensor& z) {
  if (genotype.num_cells() != supernet.num_cells)
    throw StateError("forward_child: genotype has " + std::to_string(genotype.num_cells()) +
                     " cells, supernet stage expects " + std::to_string(supernet.num_cells));
  if (genotype.base_resolution != supernet.base_resolution ||
      genotype.base_channels != supernet.base_channels || genotype.z_dim != supernet.z_dim)
    throw StateError("forward_child: genotype geometry does not match the supernet");
  GradientContext g(false);
  // forward only; the map is not mutated
  auto& params = const_cast<ParamMap&>(supernet.params);
  Value img = generator_forward(g, params, genotype, g.constant(z), false,
                                supernet.image_channels);
  return g.value(img);
}

ChildModel extract_child(const SupernetWeights& supernet, const Genotype& genotype) {
  if (genotype.num_cells() != supernet.num_cells)
    throw StateError("extract_child: genotype/supernet stage mismatch");
  ChildModel child;
  child.genotype = genotype;
  child.image_channels = supernet.image_channels;
  for (const std::string& name : required_parameters(genotype)) {
    auto it = supernet.params.find(name);
    if (it == supernet.params.end()) throw StateError("extract_child: missing '" + name + "'");
    child.params.emplace(name, Parameter(it->second.value));
  }
  return child;
}

Tensor forward_child(const ChildModel& child, const Tensor& z) {
  GradientContext g(false);
  auto& params = const_cast<ParamMap&>(child.params);
  Value img = generator_forward(g, params, child.genotype, g.constant(z), false,
                                child.image_channels);
  return g.value(img);
}

namespace {

Value sn_weight(GradientContext& g, DiscriminatorNet& d, const std::string& name,
                SpectralMode mode, bool as_leaf) {
  Parameter& p = get_param(d.params, name);
  const int rows = p.value.dim(0);
  const int cols = static_cast<int>(p.value.numel() / rows);
  Tensor& u = d.u.at(name);
  auto res = spectral_power_iteration(p.value, rows, cols, u, mode == SpectralMode::kTrain ? 1 : 0);
  if (mode == SpectralMode::kTrain) u = res.u;
  if (as_leaf) {
    const float inv = 1.0f / std::max(res.sigma, kSigmaFloor);
    return affine(g, g.leaf(p), inv, 0.0f);
  }
  return g.constant(std::move(res.normalized));
}

Value d_bias(GradientContext& g, DiscriminatorNet& d, const std::string& name, bool as_leaf) {
  Parameter& p = get_param(d.params, name);
  if (as_leaf) return g.leaf(p);
  return g.constant(p.value);
}

// Residual down block: conv-relu-conv-pool plus pooled 1x1 shortcut.
Value d_block(GradientContext& g, DiscriminatorNet& d, const std::string& prefix, Value x,
              SpectralMode mode, bool as_leaf, bool pre_relu) {
  Value h = pre_relu ? relu(g, x) : x;
  h = conv2d(g, h, sn_weight(g, d, prefix + "conv1.w", mode, as_leaf),
             d_bias(g, d, prefix + "conv1.b", as_leaf), 1, 1);
  h = relu(g, h);
  h = conv2d(g, h, sn_weight(g, d, prefix + "conv2.w", mode, as_leaf),
             d_bias(g, d, prefix + "conv2.b", as_leaf), 1, 1);
  h = avg_pool2x(g, h);
  Value sc = conv2d(g, x, sn_weight(g, d, prefix + "sc.w", mode, as_leaf),
                    d_bias(g, d, prefix + "sc.b", as_leaf), 1, 0);
  sc = avg_pool2x(g, sc);
  return add(g, h, sc);
}

}  // namespace

Value discriminator_forward(GradientContext& g, DiscriminatorNet& d, Value images,
                            SpectralMode mode, bool as_leaves) {
  const Tensor& imgs = g.value(images);
  if (imgs.rank() != 4 || imgs.dim(1) != d.image_channels)
    throw ShapeError("discriminator_forward: images " + imgs.shape_str());
  if (imgs.dim(2) != d.input_resolution() || imgs.dim(3) != d.input_resolution())
    throw StateError("discriminator_forward: resolution " + std::to_string(imgs.dim(2)) +
                     " does not match stage input " + std::to_string(d.input_resolution()));
  const int n = imgs.dim(0);

  Value x = d_block(g, d, "d.in" + std::to_string(d.stage) + ".", images, mode, as_leaves, false);
  for (int j = d.stage; j >= 1; --j)
    x = d_block(g, d, "d.body" + std::to_string(j) + ".", x, mode, as_leaves, true);
  Value f = spatial_sum(g, relu(g, x));
  Value scores = linear(g, f, sn_weight(g, d, "d.head.w", mode, as_leaves),
                        d_bias(g, d, "d.head.b", as_leaves));
  return reshape(g, scores, {n});
}

Tensor discriminator_forward(DiscriminatorNet& d, const Tensor& images, SpectralMode mode) {
  GradientContext g(false);
  Value s = discriminator_forward(g, d, g.constant(images), mode, false);
  return g.value(s);
}

Value hinge_d_loss(GradientContext& g, Value real_scores, Value fake_scores) {
  if (g.value(real_scores).numel() == 0 || g.value(fake_scores).numel() == 0)
    throw ShapeError("hinge_d_loss: empty scores");
  Value lr = mean_all(g, relu(g, affine(g, real_scores, -1.0f, 1.0f)));
  Value lf = mean_all(g, relu(g, affine(g, fake_scores, 1.0f, 1.0f)));
  return add(g, lr, lf);
}

Value hinge_g_loss(GradientContext& g, Value fake_scores) {
  if (g.value(fake_scores).numel() == 0) throw ShapeError("hinge_g_loss: empty scores");
  return affine(g, mean_all(g, fake_scores), -1.0f, 0.0f);
}

float hinge_d_loss(const Tensor& real_scores, const Tensor& fake_scores) {
  GradientContext g(false);
  return g.value(hinge_d_loss(g, g.constant(real_scores), g.constant(fake_scores))).scalar();
}

float hinge_g_loss(const Tensor& fake_scores) {
  GradientContext g(false);
  return g.value(hinge_g_loss(g, g.constant(fake_scores))).scalar();
}

namespace {

void adam_touched(ParamMap& params, const std::vector<Parameter*>& touched, const AdamHp& hp) {
  std::unordered_set<const Parameter*> set(touched.begin(), touched.end());
  for (auto& [name, p] : params) {
    if (!set.count(&p)) continue;
    adam_step(name, p, hp);
    p.zero_grad();
  }
}

}  // namespace

GanStepStats gan_train_step(SupernetWeights& g, DiscriminatorNet& d, const Genotype& genotype,
                            const Tensor& real_batch, const GanHp& hp, Rng& rng) {
  if (real_batch.rank() != 4 || real_batch.dim(2) != g.output_resolution())
    throw StateError("gan_train_step: real batch " + real_batch.shape_str() +
                     " does not match stage resolution " + std::to_string(g.output_resolution()));
  const int nd = real_batch.dim(0);
  GanStepStats stats;

  // Discriminator update: real batch vs as many fresh fakes.
  Tensor fake;
  {
    GradientContext ng(false);
    Tensor z = Tensor::randn({nd, g.z_dim}, rng);
    fake = ng.value(generator_forward(ng, g.params, genotype, ng.constant(z), true,
                                      g.image_channels));
  }
  {
    GradientContext gd;
    Value rs = discriminator_forward(gd, d, gd.constant(real_batch), SpectralMode::kTrain, true);
    Value fs = discriminator_forward(gd, d, gd.constant(fake), SpectralMode::kEval, true);
    Value loss = hinge_d_loss(gd, rs, fs);
    stats.d_loss = gd.value(loss).scalar();
    if (!std::isfinite(stats.d_loss))
      throw NumericError("gan_train_step: non-finite discriminator loss");
    gd.backward(loss);
    AdamHp ahp = hp.adam;
    ahp.lr = hp.lr_d;
    adam_touched(d.params, gd.touched_parameters(), ahp);
  }

  // Generator update through the sampled child path; discriminator weights
  // enter as constants so only the genotype's slice receives gradients.
  {
    GradientContext gg;
    Tensor z = Tensor::randn({hp.g_batch, g.z_dim}, rng);
    Value img = generator_forward(gg, g.params, genotype, gg.constant(z), true, g.image_channels);
    Value fs = discriminator_forward(gg, d, img, SpectralMode::kEval, false);
    Value loss = hinge_g_loss(gg, fs);
    stats.g_loss = gg.value(loss).scalar();
    if (!std::isfinite(stats.g_loss))
      throw NumericError("gan_train_step: non-finite generator loss");
    gg.backward(loss);
    AdamHp ahp = hp.adam;
    ahp.lr = hp.lr_g;
    adam_touched(g.params, gg.touched_parameters(), ahp);
  }
  return stats;
}

}  // namespace gansearch
