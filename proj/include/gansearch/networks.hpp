#pragma once

#include <map>
#include <string>
#include <vector>

#include "gansearch/genotype.hpp"
#include "gansearch/ops.hpp"
#include "gansearch/optim.hpp"

namespace gansearch {

// Name-sorted for deterministic iteration; names double as checkpoint keys.
using ParamMap = std::map<std::string, Parameter>;

// Shared weights for every architectural choice of every cell. Naming:
//   g.project.{w,b}
//   g.cell{s}.conv1.{w,b}, g.cell{s}.conv2.{w,b}        (shared by both conv styles)
//   g.cell{s}.norm{1,2}.{batch,inst}.{gamma,beta}
//   g.cell{s}.up.deconv.{w,b}
//   g.cell{s}.skip{j}.conv.{w,b}                        (1x1 merge conv, j < s)
//   g.cell{s}.skip{j}.deconv{h}.{w,b}                   (skip-path x2 steps when U=deconv)
//   g.toimg.{w,b}
struct SupernetWeights {
  ParamMap params;
  int num_cells = 1;
  int max_cells = 1;
  int base_resolution = 4;
  int base_channels = 64;
  int z_dim = 64;
  int image_channels = 3;

  int stage() const { return num_cells - 1; }
  int output_resolution() const { return base_resolution << num_cells; }
};

// Progressively grown discriminator. Blocks:
//   d.in{t}.{conv1,conv2,sc}.{w,b}   input block created at stage t (image -> C)
//   d.body{j}.{conv1,conv2,sc}.{w,b} C -> C downsampling block, j = stage it was added
//   d.head.{w,b}
// Every conv/linear weight is spectrally normalized at use; `u` holds the
// persistent power-iteration vectors keyed by weight name.
struct DiscriminatorNet {
  ParamMap params;
  std::map<std::string, Tensor> u;
  int stage = 0;
  int channels = 32;
  int base_resolution = 4;
  int image_channels = 3;

  int input_resolution() const { return base_resolution << (stage + 1); }
};

// One genotype's standalone slice of the supernet.
struct ChildModel {
  Genotype genotype;
  ParamMap params;
  int image_channels = 3;
};

SupernetWeights build_supernet(int num_cells, int base_resolution, int base_channels, int z_dim,
                               int image_channels, Rng& rng, int max_cells = -1);

DiscriminatorNet build_discriminator(int channels, int base_resolution, int image_channels,
                                     Rng& rng);

// Appends one generator cell's parameter block (existing values preserved
// bitwise) and prepends one discriminator input block for the doubled
// resolution. Throws StateError beyond max_cells.
void grow(SupernetWeights& g, DiscriminatorNet& d, Rng& rng);

// Fresh weights, Adam state and u-vectors for G and D (dynamic reset).
// Dimensions and stage are preserved.
void reinitialize(SupernetWeights& g, DiscriminatorNet& d, Rng& rng);

// Parameter names a genotype resolves (its supernet slice).
std::vector<std::string> required_parameters(const Genotype& genotype);

// Generator forward through an arbitrary parameter map (supernet or child).
// z: [N, z_dim]; output [N, image_channels, R, R] in [-1, 1].
Value generator_forward(GradientContext& g, ParamMap& params, const Genotype& genotype, Value z,
                        bool training, int image_channels);

// Child evaluation on the shared weights. Throws StateError when the
// genotype's cell count does not match the supernet stage.
Tensor forward_child(const SupernetWeights& supernet, const Genotype& genotype, const Tensor& z);

ChildModel extract_child(const SupernetWeights& supernet, const Genotype& genotype);
Tensor forward_child(const ChildModel& child, const Tensor& z);

enum class SpectralMode { kTrain, kEval };  // run (and persist) one power iteration, or reuse u

// Scores [N]; images must match the current stage resolution. With
// `as_leaves` the (normalized) discriminator weights participate in the tape
// as trainable leaves; otherwise they enter as constants so gradients flow
// only to the images.
Value discriminator_forward(GradientContext& g, DiscriminatorNet& d, Value images,
                            SpectralMode mode, bool as_leaves);
Tensor discriminator_forward(DiscriminatorNet& d, const Tensor& images, SpectralMode mode);

// Hinge adversarial losses.
Value hinge_d_loss(GradientContext& g, Value real_scores, Value fake_scores);
Value hinge_g_loss(GradientContext& g, Value fake_scores);
float hinge_d_loss(const Tensor& real_scores, const Tensor& fake_scores);
float hinge_g_loss(const Tensor& fake_scores);

struct GanHp {
  float lr_g = 2e-4f;
  float lr_d = 2e-4f;
  int g_batch = 64;
  AdamHp adam = gan_adam(2e-4f);  // lr field overridden per step
};

struct GanStepStats {
  float d_loss = 0.0f;
  float g_loss = 0.0f;
};

// One discriminator Adam update on the real batch (plus as many fresh fakes),
// then one generator Adam update on g_batch fresh samples through the
// genotype's child path. Only parameters touched by the sampled path are
// updated. Throws NumericError on a non-finite loss.
GanStepStats gan_train_step(SupernetWeights& g, DiscriminatorNet& d, const Genotype& genotype,
                            const Tensor& real_batch, const GanHp& hp, Rng& rng);

}  // namespace gansearch
