#pragma once

#include <string>

#include "gansearch/autodiff.hpp"
#include "gansearch/tensor.hpp"

namespace gansearch {

struct AdamHp {
  float lr = 2e-4f;
  float beta1 = 0.0f;
  float beta2 = 0.9f;
  float eps = 1e-8f;
};

// Hinge-loss GAN practice: momentum off for G/D, classic betas elsewhere.
inline AdamHp gan_adam(float lr) { return AdamHp{lr, 0.0f, 0.9f, 1e-8f}; }
inline AdamHp classic_adam(float lr) { return AdamHp{lr, 0.9f, 0.999f, 1e-8f}; }

// One Adam update with bias correction; increments step_count first.
// `name` is only used in the non-finite-gradient error message.
void adam_step(const std::string& name, Parameter& p, const AdamHp& hp);

struct SpectralResult {
  float sigma = 0.0f;
  Tensor u;           // updated left vector, unit norm
  Tensor normalized;  // weight / max(sigma, eps)
};

// Power iteration on the [rows, cols] matrix view of `weight`. `u` must hold
// `rows` elements with unit norm (an all-zero u of the right size is
// reinitialized deterministically). The caller persists the returned u and
// passes it back on the next call, one iteration per training step.
SpectralResult spectral_power_iteration(const Tensor& weight, int rows, int cols, const Tensor& u,
                                        int iters);

}  // namespace gansearch
