#pragma once

#include <Eigen/Dense>
#include <vector>

#include "gansearch/data_io.hpp"
#include "gansearch/networks.hpp"

namespace gansearch {

// Frozen desk-scale classifier standing in for a large pretrained scorer.
// Layout: three 3x3 conv + pool stages ending at feature_dim channels,
// global average pooling, then a linear class head.
//   scorer.conv{1,2,3}.{w,b}, scorer.head.{w,b}
struct SurrogateScorer {
  ParamMap params;
  int num_classes = 4;
  int feature_dim = 64;
  int resolution = 32;
  int c1 = 24;
  int c2 = 48;
  double heldout_accuracy = 0.0;
};

struct ScorerOutput {
  Eigen::MatrixXd probs;     // [N, C], rows sum to 1
  Eigen::MatrixXd features;  // [N, F], penultimate layer
};

// Trains on 90% of the set, gates on >= 0.9 accuracy over the held-out 10%
// (CalibrationError tells the caller to raise the budget). The returned
// scorer is frozen; scoring never mutates it.
SurrogateScorer train_surrogate(const LabeledImageSet& dataset, int epochs, Rng& rng);

// Images are bilinearly resized (powers of two) to the scorer resolution.
ScorerOutput score_images(const SurrogateScorer& scorer, const Tensor& images);

struct IsResult {
  double mean = 0.0;
  double stddev = 0.0;
};

// exp(mean KL(p(y|x) || p_bar)) per split; mean/std over splits. The last
// split absorbs any remainder.
IsResult inception_score(const Eigen::MatrixXd& probs, int splits);

// Symmetric PSD square root via eigendecomposition; eigenvalues below the
// small negative tolerance raise NumericError, tiny negatives clamp to zero.
Eigen::MatrixXd matrix_sqrt_psd(const Eigen::MatrixXd& m);

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // 1/(n-1) normalization
};

GaussianStats gaussian_stats(const Eigen::MatrixXd& features);

// |mu_a - mu_b|^2 + tr(Sa + Sb - 2 sqrt(Sa^1/2 Sb Sa^1/2)); tiny negative
// results clamp to 0.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

enum class RewardMetric { kIS, kRecipFID };

constexpr double kRecipFidEps = 1e-3;

// IS mode returns the IS mean; recipFID returns 1 / (FID + eps) against
// `reference` feature statistics.
double compute_reward(const Tensor& images, const SurrogateScorer& scorer, RewardMetric metric,
                      const GaussianStats* reference, int min_samples, int is_splits = 10);

// Pearson correlation of rank vectors, average ranks for ties.
double spearman_rank_correlation(const std::vector<double>& xs, const std::vector<double>& ys);

}  // namespace gansearch
