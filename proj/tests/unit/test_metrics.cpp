#include <cmath>

#include "doctest.h"
#include "gansearch/metrics.hpp"
#include "oracles.hpp"

using namespace gansearch;

namespace {

// Brute-force IS: per split, the double loop over samples and classes.
double is_oracle(const Eigen::MatrixXd& probs, int splits) {
  const int n = static_cast<int>(probs.rows()), c = static_cast<int>(probs.cols());
  const int base = n / splits;
  std::vector<double> scores;
  for (int s = 0; s < splits; ++s) {
    const int lo = s * base, hi = s == splits - 1 ? n : lo + base;
    std::vector<double> marg(static_cast<size_t>(c), 0.0);
    for (int i = lo; i < hi; ++i)
      for (int j = 0; j < c; ++j) marg[static_cast<size_t>(j)] += probs(i, j) / (hi - lo);
    double kl = 0;
    for (int i = lo; i < hi; ++i) {
      double row = 0;
      for (int j = 0; j < c; ++j)
        if (probs(i, j) > 0) row += probs(i, j) * std::log(probs(i, j) / marg[static_cast<size_t>(j)]);
      kl += row;
    }
    scores.push_back(std::exp(kl / (hi - lo)));
  }
  double m = 0;
  for (double v : scores) m += v;
  return m / static_cast<double>(scores.size());
}

Eigen::MatrixXd random_prob_rows(int n, int c, Rng& rng) {
  Eigen::MatrixXd p(n, c);
  for (int i = 0; i < n; ++i) {
    double sum = 0;
    for (int j = 0; j < c; ++j) {
      p(i, j) = 0.05 + rng.uniform();
      sum += p(i, j);
    }
    for (int j = 0; j < c; ++j) p(i, j) /= sum;
  }
  return p;
}

}  // namespace

TEST_SUITE("inception_score") {

TEST_CASE("uniform rows give exactly 1") {
  Eigen::MatrixXd p = Eigen::MatrixXd::Constant(50, 4, 0.25);
  IsResult r = inception_score(p, 10);
  CHECK(r.mean == 1.0);
  CHECK(r.stddev == 0.0);
}

TEST_CASE("balanced one-hot over 10 classes gives 10") {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(100, 10);
  for (int i = 0; i < 100; ++i) p(i, i % 10) = 1.0;
  IsResult r = inception_score(p, 10);
  CHECK(std::abs(r.mean - 10.0) < 1e-9);
}

TEST_CASE("matches the double-loop oracle on random rows") {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::MatrixXd p = random_prob_rows(57, 5, rng);  // uneven split sizes
    IsResult r = inception_score(p, 10);
    CHECK(r.mean == doctest::Approx(is_oracle(p, 10)).epsilon(1e-6));
  }
}

TEST_CASE("IS stays within [1, C]") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::MatrixXd p = random_prob_rows(40, 6, rng);
    IsResult r = inception_score(p, 8);
    CHECK(r.mean >= 1.0 - 1e-9);
    CHECK(r.mean <= 6.0 + 1e-9);
  }
}

TEST_CASE("rejects non-distribution rows") {
  Eigen::MatrixXd p = Eigen::MatrixXd::Constant(4, 3, 0.5);
  CHECK_THROWS_AS(inception_score(p, 2), DataError);
}

}  // suite

TEST_SUITE("matrix_sqrt") {

TEST_CASE("identity and diagonal cases") {
  Eigen::MatrixXd id = Eigen::MatrixXd::Identity(4, 4);
  CHECK((matrix_sqrt_psd(id) - id).cwiseAbs().maxCoeff() < 1e-12);

  Eigen::MatrixXd d = Eigen::Vector2d(4.0, 9.0).asDiagonal();
  Eigen::MatrixXd s = matrix_sqrt_psd(d);
  CHECK(s(0, 0) == doctest::Approx(2.0));
  CHECK(s(1, 1) == doctest::Approx(3.0));
  CHECK(std::abs(s(0, 1)) < 1e-12);
}

TEST_CASE("reconstruction on random PSD matrices up to F=64") {
  Rng rng(7);
  for (int f : {3, 16, 64}) {
    Eigen::MatrixXd a(f, f);
    for (int i = 0; i < f; ++i)
      for (int j = 0; j < f; ++j) a(i, j) = 2.0 * rng.uniform() - 1.0;
    Eigen::MatrixXd m = a * a.transpose();
    Eigen::MatrixXd s = matrix_sqrt_psd(m);
    CHECK((s - s.transpose()).cwiseAbs().maxCoeff() < 1e-9);
    const double err = (s * s - m).cwiseAbs().maxCoeff();
    CHECK(err < 1e-4 * m.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("strongly negative eigenvalue raises") {
  Eigen::MatrixXd m = Eigen::Vector2d(1.0, -0.5).asDiagonal();
  CHECK_THROWS_AS(matrix_sqrt_psd(m), NumericError);
}

}  // suite

TEST_SUITE("frechet") {

TEST_CASE("identical stats give zero") {
  Rng rng(11);
  Eigen::MatrixXd f(30, 8);
  for (int i = 0; i < f.size(); ++i) f.data()[i] = rng.normal();
  GaussianStats s = gaussian_stats(f);
  CHECK(frechet_distance(s, s) < 1e-6);
}

TEST_CASE("diagonal Gaussians match the closed form") {
  GaussianStats a, b;
  a.mean = Eigen::Vector3d(0.0, 1.0, -2.0);
  b.mean = Eigen::Vector3d(1.0, 1.0, 0.5);
  a.cov = Eigen::Vector3d(1.0, 4.0, 0.25).asDiagonal();
  b.cov = Eigen::Vector3d(2.25, 1.0, 0.25).asDiagonal();
  double expect = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double dm = a.mean(i) - b.mean(i);
    const double ds = std::sqrt(a.cov(i, i)) - std::sqrt(b.cov(i, i));
    expect += dm * dm + ds * ds;
  }
  CHECK(frechet_distance(a, b) == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("symmetry and non-negativity on random stats") {
  Rng rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::MatrixXd f1(40, 6), f2(40, 6);
    for (int i = 0; i < f1.size(); ++i) f1.data()[i] = rng.normal();
    for (int i = 0; i < f2.size(); ++i) f2.data()[i] = 0.5 * rng.normal() + 0.3;
    GaussianStats a = gaussian_stats(f1), b = gaussian_stats(f2);
    const double dab = frechet_distance(a, b), dba = frechet_distance(b, a);
    CHECK(dab >= 0.0);
    CHECK(dab == doctest::Approx(dba).epsilon(1e-6));
  }
}

TEST_CASE("monotone in the mean shift for fixed covariance") {
  Rng rng(17);
  Eigen::MatrixXd f(60, 5);
  for (int i = 0; i < f.size(); ++i) f.data()[i] = rng.normal();
  GaussianStats a = gaussian_stats(f);
  double prev = -1.0;
  for (double shift : {0.0, 0.5, 1.0, 2.0, 4.0}) {
    GaussianStats b = a;
    b.mean.array() += shift;
    const double d = frechet_distance(a, b);
    CHECK(d > prev);
    prev = d;
  }
}

TEST_CASE("dimension mismatch raises") {
  GaussianStats a, b;
  a.mean = Eigen::VectorXd::Zero(3);
  a.cov = Eigen::MatrixXd::Identity(3, 3);
  b.mean = Eigen::VectorXd::Zero(4);
  b.cov = Eigen::MatrixXd::Identity(4, 4);
  CHECK_THROWS_AS(frechet_distance(a, b), ShapeError);
}

}  // suite

TEST_SUITE("spearman") {

TEST_CASE("monotone sequences") {
  CHECK(spearman_rank_correlation({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman_rank_correlation({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
}

TEST_CASE("hand-computed rank example") {
  CHECK(spearman_rank_correlation({1, 2, 3}, {3, 1, 2}) == doctest::Approx(-0.5));
}

TEST_CASE("ties use average ranks") {
  // xs ranks: 1, 2.5, 2.5, 4
  const double r = spearman_rank_correlation({1, 2, 2, 3}, {1, 2, 3, 4});
  CHECK(r == doctest::Approx(0.9486832980505138).epsilon(1e-9));
}

TEST_CASE("constant vector raises") {
  CHECK_THROWS_AS(spearman_rank_correlation({1, 1, 1}, {1, 2, 3}), NumericError);
  CHECK_THROWS_AS(spearman_rank_correlation({1.0}, {2.0}), DataError);
  CHECK_THROWS_AS(spearman_rank_correlation({1, 2}, {1, 2, 3}), ShapeError);
}

TEST_CASE("bounded in [-1, 1] on random data") {
  Rng rng(19);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> xs, ys;
    for (int i = 0; i < 15; ++i) {
      xs.push_back(rng.normal());
      ys.push_back(rng.normal());
    }
    const double r = spearman_rank_correlation(xs, ys);
    CHECK(r >= -1.0 - 1e-12);
    CHECK(r <= 1.0 + 1e-12);
  }
}

}  // suite

TEST_SUITE("surrogate") {

TEST_CASE("trains to >= 0.9 held-out accuracy, frozen and deterministic") {
  LabeledImageSet data = gen_synthetic_dataset(800, 32, 4, 7);
  Rng r1(21), r2(21);
  SurrogateScorer s1 = train_surrogate(data, 2, r1);
  CHECK(s1.heldout_accuracy >= 0.9);
  SurrogateScorer s2 = train_surrogate(data, 2, r2);
  CHECK(oracle::checksum(s1.params.at("scorer.conv1.w").value) ==
        oracle::checksum(s2.params.at("scorer.conv1.w").value));

  // probabilities sum to one; scoring does not mutate the scorer
  Tensor imgs = batch_images(data, {0, 1, 2, 3});
  const uint64_t before = oracle::checksum(s1.params.at("scorer.head.w").value);
  ScorerOutput out = score_images(s1, imgs);
  CHECK(oracle::checksum(s1.params.at("scorer.head.w").value) == before);
  for (int i = 0; i < 4; ++i)
    CHECK(out.probs.row(i).sum() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("scores lower-resolution images by resizing") {
  LabeledImageSet data = gen_synthetic_dataset(300, 32, 3, 9);
  Rng rng(23);
  SurrogateScorer s = train_surrogate(data, 2, rng);
  Tensor small = Tensor::randn({5, 3, 8, 8}, rng, 0.3f);
  ScorerOutput out = score_images(s, small);
  CHECK(out.probs.rows() == 5);
  CHECK(out.features.cols() == 64);
}

}  // suite

TEST_SUITE("reward") {

TEST_CASE("recipFID of a set against its own statistics is near 1/eps") {
  LabeledImageSet data = gen_synthetic_dataset(400, 32, 4, 11);
  Rng rng(25);
  SurrogateScorer s = train_surrogate(data, 2, rng);
  std::vector<int> idx(400);
  for (int i = 0; i < 400; ++i) idx[static_cast<size_t>(i)] = i;
  Tensor imgs = batch_images(data, idx);
  GaussianStats ref = gaussian_stats(score_images(s, imgs).features);
  const double reward = compute_reward(imgs, s, RewardMetric::kRecipFID, &ref, 100);
  CHECK(reward > 0.5 / kRecipFidEps);  // FID ~ 0 within numerical noise
}

TEST_CASE("IS reward of noise images is at least 1") {
  LabeledImageSet data = gen_synthetic_dataset(300, 32, 4, 13);
  Rng rng(27);
  SurrogateScorer s = train_surrogate(data, 2, rng);
  Tensor noise({64, 3, 32, 32});
  for (int64_t i = 0; i < noise.numel(); ++i) noise[i] = 2.0f * rng.uniform() - 1.0f;
  const double reward = compute_reward(noise, s, RewardMetric::kIS, nullptr, 50);
  CHECK(reward >= 1.0 - 1e-9);
}

TEST_CASE("sample-count gate and determinism") {
  LabeledImageSet data = gen_synthetic_dataset(300, 32, 4, 15);
  Rng rng(29);
  SurrogateScorer s = train_surrogate(data, 2, rng);
  Tensor imgs = batch_images(data, {0, 1, 2});
  CHECK_THROWS_AS(compute_reward(imgs, s, RewardMetric::kIS, nullptr, 10), ConfigError);
  std::vector<int> idx(60);
  for (int i = 0; i < 60; ++i) idx[static_cast<size_t>(i)] = i;
  Tensor batch = batch_images(data, idx);
  const double a = compute_reward(batch, s, RewardMetric::kIS, nullptr, 50);
  const double b = compute_reward(batch, s, RewardMetric::kIS, nullptr, 50);
  CHECK(a == b);
}

}  // suite
