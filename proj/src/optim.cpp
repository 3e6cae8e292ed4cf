#include "gansearch/optim.hpp"

#include <cmath>

#include "gansearch/errors.hpp"

namespace gansearch {

namespace {
constexpr float kSpectralEps = 1e-12f;
}

void adam_step(const std::string& name, Parameter& p, const AdamHp& hp) {
  if (!p.gradient.all_finite())
    throw NumericError("adam_step: non-finite gradient in parameter '" + name + "'");
  p.step_count += 1;
  const float t = static_cast<float>(p.step_count);
  const float bc1 = 1.0f - std::pow(hp.beta1, t);
  const float bc2 = 1.0f - std::pow(hp.beta2, t);
  const int64_t n = p.value.numel();
  for (int64_t i = 0; i < n; ++i) {
    const float g = p.gradient[i];
    p.adam_m[i] = hp.beta1 * p.adam_m[i] + (1.0f - hp.beta1) * g;
    p.adam_v[i] = hp.beta2 * p.adam_v[i] + (1.0f - hp.beta2) * g * g;
    const float mhat = p.adam_m[i] / bc1;
    const float vhat = p.adam_v[i] / bc2;
    p.value[i] -= hp.lr * mhat / (std::sqrt(vhat) + hp.eps);
  }
}

SpectralResult spectral_power_iteration(const Tensor& weight, int rows, int cols, const Tensor& u,
                                        int iters) {
  if (static_cast<int64_t>(rows) * cols != weight.numel())
    throw ShapeError("spectral_power_iteration: view " + std::to_string(rows) + "x" +
                     std::to_string(cols) + " on " + weight.shape_str());
  if (u.numel() != rows)
    throw ShapeError("spectral_power_iteration: u has " + std::to_string(u.numel()) +
                     " elements, expected " + std::to_string(rows));
  ConstMapMatF w = weight.mat(rows, cols);

  SpectralResult res;
  res.u = u;
  Eigen::VectorXf uv = u.vec();
  if (uv.norm() < kSpectralEps) {
    uv.setZero();
    uv(0) = 1.0f;  // deterministic restart for a degenerate u
  }
  Eigen::VectorXf v(cols);
  v.setZero();
  for (int it = 0; it < iters; ++it) {
    v.noalias() = w.transpose() * uv;
    const float vn = v.norm();
    if (vn < kSpectralEps) break;  // zero matrix: keep sigma at 0
    v /= vn;
    uv.noalias() = w * v;
    const float un = uv.norm();
    if (un < kSpectralEps) break;
    uv /= un;
  }
  // sigma from the current pair (also covers iters == 0)
  v.noalias() = w.transpose() * uv;
  res.sigma = v.norm() > kSpectralEps ? uv.dot(w * (v / v.norm())) : 0.0f;

  res.u = Tensor({rows});
  res.u.vec() = uv;
  const float denom = std::max(res.sigma, kSpectralEps);
  res.normalized = weight;
  res.normalized.vec() /= denom;
  return res;
}

}  // namespace gansearch
