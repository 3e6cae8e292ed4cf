#include "gansearch/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gansearch/errors.hpp"

namespace gansearch {

namespace {

Parameter& sparam(const SurrogateScorer& s, const std::string& name) {
  auto it = const_cast<ParamMap&>(s.params).find(name);
  if (it == s.params.end()) throw StateError("scorer: missing parameter '" + name + "'");
  return it->second;
}

// Shared trunk; returns (features [N,F], logits [N,C]).
std::pair<Value, Value> scorer_forward(GradientContext& g, const SurrogateScorer& s, Value images) {
  Value h = conv2d(g, images, g.leaf(sparam(s, "scorer.conv1.w")),
                   g.leaf(sparam(s, "scorer.conv1.b")), 1, 1);
  h = avg_pool2x(g, relu(g, h));
  h = conv2d(g, h, g.leaf(sparam(s, "scorer.conv2.w")), g.leaf(sparam(s, "scorer.conv2.b")), 1, 1);
  h = avg_pool2x(g, relu(g, h));
  h = conv2d(g, h, g.leaf(sparam(s, "scorer.conv3.w")), g.leaf(sparam(s, "scorer.conv3.b")), 1, 1);
  h = relu(g, h);
  const Tensor& hv = g.value(h);
  const float inv_hw = 1.0f / static_cast<float>(hv.dim(2) * hv.dim(3));
  Value feat = affine(g, spatial_sum(g, h), inv_hw, 0.0f);  // global average pool
  Value logits = linear(g, feat, g.leaf(sparam(s, "scorer.head.w")),
                        g.leaf(sparam(s, "scorer.head.b")));
  return {feat, logits};
}

Tensor resize_to(const Tensor& images, int target) {
  Tensor out = images;
  while (out.dim(2) < target) out = upsample2x(out, UpsampleMode::kBilinear);
  while (out.dim(2) > target) out = avg_pool2x(out);
  if (out.dim(2) != target)
    throw ShapeError("score_images: cannot resize " + images.shape_str() + " to " +
                     std::to_string(target));
  return out;
}

}  // namespace

SurrogateScorer train_surrogate(const LabeledImageSet& dataset, int epochs, Rng& rng) {
  if (dataset.num_classes < 2) throw ConfigError("train_surrogate: need >= 2 classes");
  const int n = dataset.size();
  const int held = std::max(1, n / 10);
  const int train_n = n - held;
  if (train_n < 1) throw ConfigError("train_surrogate: dataset too small");

  SurrogateScorer s;
  s.num_classes = dataset.num_classes;
  s.resolution = dataset.resolution();
  const float g2 = std::sqrt(2.0f);
  auto add = [&](const std::string& name, std::vector<int> shape, float std) {
    s.params.emplace(name, Parameter(std > 0 ? Tensor::randn(shape, rng, std) : Tensor::zeros(shape)));
  };
  add("scorer.conv1.w", {s.c1, 3, 3, 3}, g2 / std::sqrt(27.0f));
  add("scorer.conv1.b", {s.c1}, 0.0f);
  add("scorer.conv2.w", {s.c2, s.c1, 3, 3}, g2 / std::sqrt(s.c1 * 9.0f));
  add("scorer.conv2.b", {s.c2}, 0.0f);
  add("scorer.conv3.w", {s.feature_dim, s.c2, 3, 3}, g2 / std::sqrt(s.c2 * 9.0f));
  add("scorer.conv3.b", {s.feature_dim}, 0.0f);
  add("scorer.head.w", {s.num_classes, s.feature_dim}, 1.0f / std::sqrt(64.0f));
  add("scorer.head.b", {s.num_classes}, 0.0f);

  const int batch = 64;
  const AdamHp hp = classic_adam(1e-3f);
  std::vector<int> order(static_cast<size_t>(train_n));
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (int i = train_n - 1; i > 0; --i)
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(rng.uniform_int(i + 1))]);
    for (int start = 0; start + 1 < train_n; start += batch) {
      const int bsz = std::min(batch, train_n - start);
      std::vector<int> idx(order.begin() + start, order.begin() + start + bsz);
      Tensor x = batch_images(dataset, idx);
      std::vector<int> labels(static_cast<size_t>(bsz));
      for (int j = 0; j < bsz; ++j) labels[static_cast<size_t>(j)] = dataset.labels[static_cast<size_t>(idx[static_cast<size_t>(j)])];

      GradientContext g;
      auto [feat, logits] = scorer_forward(g, s, g.constant(x));
      Value lp = log_softmax_rows(g, logits);
      Value nll = affine(g, mean_all(g, gather_rows(g, lp, labels)), -1.0f, 0.0f);
      g.backward(nll);
      for (auto& [name, p] : s.params) {
        adam_step(name, p, hp);
        p.zero_grad();
      }
    }
  }

  // held-out gate
  int correct = 0;
  for (int start = train_n; start < n; start += batch) {
    const int bsz = std::min(batch, n - start);
    std::vector<int> idx(static_cast<size_t>(bsz));
    std::iota(idx.begin(), idx.end(), start);
    ScorerOutput out = score_images(s, batch_images(dataset, idx));
    for (int j = 0; j < bsz; ++j) {
      int arg = 0;
      out.probs.row(j).maxCoeff(&arg);
      if (arg == dataset.labels[static_cast<size_t>(start + j)]) ++correct;
    }
  }
  s.heldout_accuracy = static_cast<double>(correct) / held;
  if (s.heldout_accuracy < 0.9)
    throw CalibrationError("train_surrogate: held-out accuracy " +
                           std::to_string(s.heldout_accuracy) +
                           " < 0.9; increase surrogate_epochs or dataset size");
  return s;
}

ScorerOutput score_images(const SurrogateScorer& s, const Tensor& images) {
  if (images.rank() != 4 || images.dim(1) != 3)
    throw ShapeError("score_images: images must be [N,3,H,W], got " + images.shape_str());
  const int n = images.dim(0);
  ScorerOutput out;
  out.probs.resize(n, s.num_classes);
  out.features.resize(n, s.feature_dim);

  const int chunk = 128;
  for (int start = 0; start < n; start += chunk) {
    const int bsz = std::min(chunk, n - start);
    Tensor slice({bsz, 3, images.dim(2), images.dim(3)});
    std::copy(images.data() + static_cast<int64_t>(start) * 3 * images.dim(2) * images.dim(3),
              images.data() + static_cast<int64_t>(start + bsz) * 3 * images.dim(2) * images.dim(3),
              slice.data());
    Tensor resized = resize_to(slice, s.resolution);
    GradientContext g(false);
    auto [feat, logits] = scorer_forward(g, s, g.constant(resized));
    const Tensor& fv = g.value(feat);
    const Tensor& lv = g.value(logits);
    for (int i = 0; i < bsz; ++i) {
      double mx = lv.at(i, 0);
      for (int c = 1; c < s.num_classes; ++c) mx = std::max(mx, static_cast<double>(lv.at(i, c)));
      double sum = 0.0;
      for (int c = 0; c < s.num_classes; ++c) sum += std::exp(static_cast<double>(lv.at(i, c)) - mx);
      for (int c = 0; c < s.num_classes; ++c)
        out.probs(start + i, c) = std::exp(static_cast<double>(lv.at(i, c)) - mx) / sum;
      for (int f = 0; f < s.feature_dim; ++f)
        out.features(start + i, f) = static_cast<double>(fv.at(i, f));
    }
  }
  return out;
}

IsResult inception_score(const Eigen::MatrixXd& probs, int splits) {
  const int n = static_cast<int>(probs.rows());
  const int c = static_cast<int>(probs.cols());
  if (n < 1 || c < 1) throw DataError("inception_score: empty probability matrix");
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    for (int j = 0; j < c; ++j) {
      if (probs(i, j) < -1e-9)
        throw DataError("inception_score: negative probability at row " + std::to_string(i));
      sum += probs(i, j);
    }
    if (std::abs(sum - 1.0) > 1e-3)
      throw DataError("inception_score: row " + std::to_string(i) + " sums to " +
                      std::to_string(sum));
  }
  const int eff_splits = std::max(1, std::min(splits, n));
  const int base = n / eff_splits;
  std::vector<double> scores;
  for (int sidx = 0; sidx < eff_splits; ++sidx) {
    const int lo = sidx * base;
    const int hi = sidx == eff_splits - 1 ? n : lo + base;
    Eigen::VectorXd marginal = Eigen::VectorXd::Zero(c);
    for (int i = lo; i < hi; ++i) marginal += probs.row(i).transpose();
    marginal /= static_cast<double>(hi - lo);
    double kl = 0.0;
    for (int i = lo; i < hi; ++i) {
      for (int j = 0; j < c; ++j) {
        const double p = probs(i, j);
        if (p > 0.0) kl += p * (std::log(p) - std::log(marginal(j)));
      }
    }
    scores.push_back(std::exp(kl / static_cast<double>(hi - lo)));
  }
  IsResult res;
  for (double v : scores) res.mean += v;
  res.mean /= static_cast<double>(scores.size());
  double var = 0.0;
  for (double v : scores) var += (v - res.mean) * (v - res.mean);
  res.stddev = std::sqrt(var / static_cast<double>(scores.size()));
  return res;
}

Eigen::MatrixXd matrix_sqrt_psd(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw ShapeError("matrix_sqrt_psd: matrix must be square");
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw NumericError("matrix_sqrt_psd: eigendecomposition failed");
  Eigen::VectorXd lambda = es.eigenvalues();
  const double lmax = std::max(1.0, lambda.cwiseAbs().maxCoeff());
  const double tol = 1e-6 * lmax;
  for (int i = 0; i < lambda.size(); ++i) {
    if (lambda(i) < -tol)
      throw NumericError("matrix_sqrt_psd: PSD violation, eigenvalue " + std::to_string(lambda(i)));
    lambda(i) = std::max(lambda(i), 0.0);
  }
  Eigen::MatrixXd root =
      es.eigenvectors() * lambda.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (root + root.transpose());
}

GaussianStats gaussian_stats(const Eigen::MatrixXd& features) {
  const int n = static_cast<int>(features.rows());
  if (n < 2) throw DataError("gaussian_stats: need >= 2 samples");
  GaussianStats s;
  s.mean = features.colwise().mean();
  Eigen::MatrixXd centered = features.rowwise() - s.mean.transpose();
  s.cov = centered.transpose() * centered / static_cast<double>(n - 1);
  return s;
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  if (a.mean.size() != b.mean.size())
    throw ShapeError("frechet_distance: dimension mismatch " + std::to_string(a.mean.size()) +
                     " vs " + std::to_string(b.mean.size()));
  const Eigen::MatrixXd sa = matrix_sqrt_psd(a.cov);
  Eigen::MatrixXd inner = sa * b.cov * sa;
  const Eigen::MatrixXd cross = matrix_sqrt_psd(inner);
  const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() -
                   2.0 * cross.trace();
  if (d < -1e-6)
    throw NumericError("frechet_distance: negative distance " + std::to_string(d));
  return std::max(d, 0.0);
}

double compute_reward(const Tensor& images, const SurrogateScorer& scorer, RewardMetric metric,
                      const GaussianStats* reference, int min_samples, int is_splits) {
  if (images.dim(0) < min_samples)
    throw ConfigError("compute_reward: " + std::to_string(images.dim(0)) + " samples < required " +
                      std::to_string(min_samples));
  ScorerOutput out = score_images(scorer, images);
  if (metric == RewardMetric::kIS) return inception_score(out.probs, is_splits).mean;
  if (!reference) throw ConfigError("compute_reward: recipFID needs reference statistics");
  const double fid = frechet_distance(gaussian_stats(out.features), *reference);
  return 1.0 / (fid + kRecipFidEps);
}

double spearman_rank_correlation(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size())
    throw ShapeError("spearman: length mismatch " + std::to_string(xs.size()) + " vs " +
                     std::to_string(ys.size()));
  const int n = static_cast<int>(xs.size());
  if (n < 2) throw DataError("spearman: need >= 2 pairs");

  auto ranks = [n](const std::vector<double>& v) {
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return v[static_cast<size_t>(a)] < v[static_cast<size_t>(b)]; });
    std::vector<double> r(static_cast<size_t>(n));
    int i = 0;
    while (i < n) {
      int j = i;
      while (j + 1 < n &&
             v[static_cast<size_t>(order[static_cast<size_t>(j + 1)])] ==
                 v[static_cast<size_t>(order[static_cast<size_t>(i)])])
        ++j;
      const double avg = 0.5 * (i + j) + 1.0;  // average rank of the tie run
      for (int k = i; k <= j; ++k) r[static_cast<size_t>(order[static_cast<size_t>(k)])] = avg;
      i = j + 1;
    }
    return r;
  };

  const std::vector<double> rx = ranks(xs), ry = ranks(ys);
  double mx = 0, my = 0;
  for (int i = 0; i < n; ++i) {
    mx += rx[static_cast<size_t>(i)];
    my += ry[static_cast<size_t>(i)];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < n; ++i) {
    const double dx = rx[static_cast<size_t>(i)] - mx, dy = ry[static_cast<size_t>(i)] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    throw NumericError("spearman: correlation undefined for a constant vector");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace gansearch
