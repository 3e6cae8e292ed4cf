#include <cmath>

#include "doctest.h"
#include "gansearch/ops.hpp"
#include "gansearch/optim.hpp"
#include "oracles.hpp"

using namespace gansearch;

TEST_SUITE("tensor") {

TEST_CASE("shape and data invariants") {
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.all_finite());
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0f, 2.0f}), ShapeError);
  t[0] = std::nanf("");
  CHECK_FALSE(t.all_finite());
}

}  // suite

TEST_SUITE("conv2d") {

TEST_CASE("identity 1x1 kernel reproduces input") {
  Rng rng(7);
  Tensor x = oracle::rand_tensor({1, 1, 3, 3}, rng);
  Tensor w = Tensor::from({1, 1, 1, 1}, {1.0f});
  Tensor b({1});
  Tensor y = conv2d(x, w, b, 1, 0);
  CHECK(oracle::max_abs_diff(x, y) == 0.0f);
}

TEST_CASE("all-ones 3x3 kernel on constant input, padding 1") {
  Tensor x = Tensor::full({1, 1, 5, 5}, 1.0f);
  Tensor w = Tensor::full({1, 1, 3, 3}, 1.0f);
  Tensor b({1});
  Tensor y = conv2d(x, w, b, 1, 1);
  CHECK(y.at(0, 0, 2, 2) == doctest::Approx(9.0f));
  CHECK(y.at(0, 0, 0, 0) == doctest::Approx(4.0f));
  CHECK(y.at(0, 0, 0, 2) == doctest::Approx(6.0f));
}

TEST_CASE("zero weight and bias give zero output") {
  Rng rng(3);
  Tensor x = oracle::rand_tensor({2, 3, 4, 4}, rng);
  Tensor w({4, 3, 3, 3});
  Tensor b({4});
  Tensor y = conv2d(x, w, b, 1, 1);
  for (int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == 0.0f);
}

TEST_CASE("matches nested-loop oracle on randomized shapes") {
  Rng rng(11);
  for (int trial = 0; trial < 8; ++trial) {
    const int N = 1 + rng.uniform_int(3), C = 1 + rng.uniform_int(4);
    const int O = 1 + rng.uniform_int(4), H = 3 + rng.uniform_int(6), W = 3 + rng.uniform_int(6);
    const int k = rng.uniform_int(2) ? 3 : 1;
    const int stride = 1 + rng.uniform_int(2), pad = rng.uniform_int(2);
    Tensor x = oracle::rand_tensor({N, C, H, W}, rng);
    Tensor w = oracle::rand_tensor({O, C, k, k}, rng);
    Tensor b = oracle::rand_tensor({O}, rng);
    Tensor got = conv2d(x, w, b, stride, pad);
    Tensor ref = oracle::conv2d_loops(x, w, b, stride, pad);
    CHECK(got.same_shape(ref));
    CHECK(oracle::max_abs_diff(got, ref) < 1e-5f);
  }
}

TEST_CASE("shape mismatch names the offending axes") {
  Tensor x({1, 3, 4, 4});
  Tensor w({2, 4, 3, 3});
  Tensor b({2});
  CHECK_THROWS_AS(conv2d(x, w, b, 1, 1), ShapeError);
  CHECK_THROWS_AS(conv2d(x, Tensor({2, 3, 5, 5}), b, 1, 2), ShapeError);  // k=5 unsupported
}

}  // suite

TEST_SUITE("transposed_conv2d") {

TEST_CASE("doubles the spatial size") {
  Tensor x({1, 1, 4, 4});
  Tensor w({1, 2, 4, 4});
  Tensor b({2});
  Tensor y = transposed_conv2d(x, w, b);
  CHECK(y.shape() == std::vector<int>{1, 2, 8, 8});
}

TEST_CASE("zero input gives zero output") {
  Rng rng(5);
  Tensor x({1, 2, 3, 3});
  Tensor w = oracle::rand_tensor({2, 3, 4, 4}, rng);
  Tensor b({3});
  Tensor y = transposed_conv2d(x, w, b);
  for (int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == 0.0f);
}

TEST_CASE("matches scatter-accumulate oracle") {
  Rng rng(9);
  for (int trial = 0; trial < 6; ++trial) {
    const int N = 1 + rng.uniform_int(2), I = 1 + rng.uniform_int(3), O = 1 + rng.uniform_int(3);
    const int H = 2 + rng.uniform_int(4), W = 2 + rng.uniform_int(4);
    Tensor x = oracle::rand_tensor({N, I, H, W}, rng);
    Tensor w = oracle::rand_tensor({I, O, 4, 4}, rng);
    Tensor b = oracle::rand_tensor({O}, rng);
    Tensor got = transposed_conv2d(x, w, b);
    Tensor ref = oracle::deconv_loops(x, w, b);
    CHECK(oracle::max_abs_diff(got, ref) < 1e-5f);
  }
}

TEST_CASE("channel mismatch raises") {
  Tensor x({1, 3, 2, 2});
  Tensor w({2, 1, 4, 4});
  Tensor b({1});
  CHECK_THROWS_AS(transposed_conv2d(x, w, b), ShapeError);
}

}  // suite

TEST_SUITE("upsample2x") {

TEST_CASE("nearest replicates pixels into 2x2 blocks") {
  Tensor x = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor y = upsample2x(x, UpsampleMode::kNearest);
  const std::vector<float> want = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
  for (int i = 0; i < 16; ++i) CHECK(y[i] == want[static_cast<size_t>(i)]);
}

TEST_CASE("bilinear keeps constants constant") {
  Tensor x = Tensor::full({2, 3, 3, 3}, 0.7f);
  Tensor y = upsample2x(x, UpsampleMode::kBilinear);
  for (int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == doctest::Approx(0.7f).epsilon(1e-6));
}

TEST_CASE("bilinear matches interpolation loop oracle") {
  Tensor x = Tensor::from({1, 1, 2, 2}, {0, 2, 0, 2});
  Tensor got = upsample2x(x, UpsampleMode::kBilinear);
  Tensor ref = oracle::bilinear2x_loops(x);
  CHECK(oracle::max_abs_diff(got, ref) < 1e-6f);

  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor r = oracle::rand_tensor({2, 2, 1 + rng.uniform_int(6), 1 + rng.uniform_int(6)}, rng);
    CHECK(oracle::max_abs_diff(upsample2x(r, UpsampleMode::kBilinear),
                               oracle::bilinear2x_loops(r)) < 1e-5f);
    CHECK(oracle::max_abs_diff(upsample2x(r, UpsampleMode::kNearest),
                               upsample2x(r, UpsampleMode::kNearest)) == 0.0f);
  }
}

}  // suite

TEST_SUITE("normalize") {

TEST_CASE("mode none is the identity exactly") {
  Rng rng(13);
  Tensor x = oracle::rand_tensor({2, 3, 4, 4}, rng);
  Tensor gamma = Tensor::full({3}, 2.0f);
  Tensor beta = Tensor::full({3}, 1.0f);
  Tensor y = normalize(x, NormMode::kNone, gamma, beta, true);
  CHECK(oracle::max_abs_diff(x, y) == 0.0f);
}

TEST_CASE("batch mode with standardized input is near-identity") {
  // Construct a per-channel zero-mean unit-variance input.
  const int N = 4, C = 2, H = 4, W = 4;
  Rng rng(17);
  Tensor x = oracle::rand_tensor({N, C, H, W}, rng);
  for (int c = 0; c < C; ++c) {
    double sum = 0.0, sq = 0.0;
    for (int n = 0; n < N; ++n)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) sum += x.at(n, c, h, w);
    const double m = sum / (N * H * W);
    for (int n = 0; n < N; ++n)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) sq += (x.at(n, c, h, w) - m) * (x.at(n, c, h, w) - m);
    const double sd = std::sqrt(sq / (N * H * W));
    for (int n = 0; n < N; ++n)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w)
          x.at(n, c, h, w) = static_cast<float>((x.at(n, c, h, w) - m) / sd);
  }
  Tensor gamma = Tensor::full({C}, 1.0f);
  Tensor beta({C});
  Tensor y = normalize(x, NormMode::kBatch, gamma, beta, true);
  CHECK(oracle::max_abs_diff(x, y) < 1e-4f);
}

TEST_CASE("constant input maps to beta") {
  Tensor x = Tensor::full({3, 2, 4, 4}, 5.0f);
  Tensor gamma = Tensor::full({2}, 1.5f);
  Tensor beta({2});
  Tensor y = normalize(x, NormMode::kBatch, gamma, beta, true);
  for (int64_t i = 0; i < y.numel(); ++i) CHECK(std::abs(y[i]) < 1e-6f);
  Tensor yi = normalize(x, NormMode::kInstance, gamma, beta, true);
  for (int64_t i = 0; i < yi.numel(); ++i) CHECK(std::abs(yi[i]) < 1e-6f);
}

TEST_CASE("batch mode matches double-precision oracle") {
  Rng rng(29);
  Tensor x = oracle::rand_tensor({3, 4, 5, 5}, rng, 2.0f);
  Tensor gamma = oracle::rand_tensor({4}, rng);
  Tensor beta = oracle::rand_tensor({4}, rng);
  Tensor got = normalize(x, NormMode::kBatch, gamma, beta, true);
  Tensor ref = oracle::batch_norm_loops(x, gamma, beta);
  CHECK(oracle::max_abs_diff(got, ref) < 1e-5f);
}

TEST_CASE("degenerate batch raises in training") {
  Tensor x({1, 2, 4, 4});
  Tensor gamma = Tensor::full({2}, 1.0f);
  Tensor beta({2});
  CHECK_THROWS_AS(normalize(x, NormMode::kBatch, gamma, beta, true), ShapeError);
  CHECK_NOTHROW(normalize(x, NormMode::kBatch, gamma, beta, false));
  CHECK_NOTHROW(normalize(x, NormMode::kInstance, gamma, beta, true));
}

}  // suite

TEST_SUITE("lstm_step") {

TEST_CASE("zero weights and zero cell give zero outputs") {
  const int B = 2, In = 3, H = 4;
  Tensor x = Tensor::full({B, In}, 0.8f);
  Tensor h({B, H}), c({B, H});
  Tensor wih({4 * H, In}), whh({4 * H, H}), b({4 * H});
  auto [h2, c2] = lstm_step(x, h, c, wih, whh, b);
  for (int64_t i = 0; i < h2.numel(); ++i) {
    CHECK(h2[i] == 0.0f);
    CHECK(c2[i] == 0.0f);
  }
}

TEST_CASE("output shapes equal hidden size") {
  Rng rng(31);
  const int B = 3, In = 5, H = 6;
  Tensor x = oracle::rand_tensor({B, In}, rng);
  Tensor h = oracle::rand_tensor({B, H}, rng);
  Tensor c = oracle::rand_tensor({B, H}, rng);
  Tensor wih = oracle::rand_tensor({4 * H, In}, rng, 0.3f);
  Tensor whh = oracle::rand_tensor({4 * H, H}, rng, 0.3f);
  Tensor b = oracle::rand_tensor({4 * H}, rng, 0.1f);
  auto [h2, c2] = lstm_step(x, h, c, wih, whh, b);
  CHECK(h2.shape() == std::vector<int>{B, H});
  CHECK(c2.shape() == std::vector<int>{B, H});
  CHECK_THROWS_AS(lstm_step(x, h, Tensor({B, H + 1}), wih, whh, b), ShapeError);
}

}  // suite

TEST_SUITE("gradients") {

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(41);
  Parameter x(oracle::rand_tensor({2, 3, 5, 5}, rng));
  Parameter w(oracle::rand_tensor({4, 3, 3, 3}, rng, 0.5f));
  Parameter b(oracle::rand_tensor({4}, rng, 0.2f));
  Tensor weights = oracle::rand_tensor({2, 4, 5, 5}, rng);  // random linear functional
  auto build = [&](GradientContext& g) {
    Value y = conv2d(g, g.leaf(x), g.leaf(w), g.leaf(b), 1, 1);
    return mean_all(g, mul(g, y, g.constant(weights)));
  };
  CHECK(oracle::gradcheck({&x, &w, &b}, build) < 1e-3);
}

TEST_CASE("strided conv2d gradients match finite differences") {
  Rng rng(43);
  Parameter x(oracle::rand_tensor({1, 2, 6, 6}, rng));
  Parameter w(oracle::rand_tensor({3, 2, 3, 3}, rng, 0.5f));
  Parameter b(oracle::rand_tensor({3}, rng, 0.2f));
  Tensor weights = oracle::rand_tensor({1, 3, 3, 3}, rng);
  auto build = [&](GradientContext& g) {
    Value y = conv2d(g, g.leaf(x), g.leaf(w), g.leaf(b), 2, 1);
    return mean_all(g, mul(g, y, g.constant(weights)));
  };
  CHECK(oracle::gradcheck({&x, &w, &b}, build) < 1e-3);
}

TEST_CASE("transposed_conv2d gradients match finite differences") {
  Rng rng(47);
  Parameter x(oracle::rand_tensor({2, 2, 3, 3}, rng));
  Parameter w(oracle::rand_tensor({2, 3, 4, 4}, rng, 0.4f));
  Parameter b(oracle::rand_tensor({3}, rng, 0.2f));
  Tensor weights = oracle::rand_tensor({2, 3, 6, 6}, rng);
  auto build = [&](GradientContext& g) {
    Value y = transposed_conv2d(g, g.leaf(x), g.leaf(w), g.leaf(b));
    return mean_all(g, mul(g, y, g.constant(weights)));
  };
  CHECK(oracle::gradcheck({&x, &w, &b}, build) < 1e-3);
}

TEST_CASE("bilinear upsample gradients match finite differences") {
  Rng rng(53);
  Parameter x(oracle::rand_tensor({2, 2, 3, 3}, rng));
  Tensor weights = oracle::rand_tensor({2, 2, 6, 6}, rng);
  auto build = [&](GradientContext& g) {
    Value y = upsample2x(g, g.leaf(x), UpsampleMode::kBilinear);
    return mean_all(g, mul(g, y, g.constant(weights)));
  };
  CHECK(oracle::gradcheck({&x}, build) < 1e-3);
}

TEST_CASE("normalize gradients match finite differences") {
  Rng rng(59);
  for (auto mode : {NormMode::kBatch, NormMode::kInstance}) {
    Parameter x(oracle::rand_tensor({3, 2, 4, 4}, rng));
    Parameter gamma(oracle::rand_tensor({2}, rng, 0.5f));
    Parameter beta(oracle::rand_tensor({2}, rng, 0.5f));
    gamma.value[0] += 1.0f;  // keep away from zero
    Tensor weights = oracle::rand_tensor({3, 2, 4, 4}, rng);
    auto build = [&](GradientContext& g) {
      Value y = normalize(g, g.leaf(x), mode, g.leaf(gamma), g.leaf(beta), true);
      return mean_all(g, mul(g, y, g.constant(weights)));
    };
    CHECK(oracle::gradcheck({&x, &gamma, &beta}, build, 5e-3f) < 1e-3);
  }
}

TEST_CASE("lstm_step gradients match finite differences") {
  Rng rng(61);
  const int B = 2, In = 3, H = 4;
  Parameter x(oracle::rand_tensor({B, In}, rng));
  Parameter h(oracle::rand_tensor({B, H}, rng));
  Parameter c(oracle::rand_tensor({B, H}, rng));
  Parameter wih(oracle::rand_tensor({4 * H, In}, rng, 0.4f));
  Parameter whh(oracle::rand_tensor({4 * H, H}, rng, 0.4f));
  Parameter b(oracle::rand_tensor({4 * H}, rng, 0.2f));
  Tensor wh = oracle::rand_tensor({B, H}, rng);
  Tensor wc = oracle::rand_tensor({B, H}, rng);
  auto build = [&](GradientContext& g) {
    auto [h2, c2] = lstm_step(g, g.leaf(x), g.leaf(h), g.leaf(c), g.leaf(wih), g.leaf(whh), g.leaf(b));
    // exercise both outputs, including h2 feeding a second step
    auto [h3, c3] = lstm_step(g, g.leaf(x), h2, c2, g.leaf(wih), g.leaf(whh), g.leaf(b));
    Value s1 = mean_all(g, mul(g, h3, g.constant(wh)));
    Value s2 = mean_all(g, mul(g, c3, g.constant(wc)));
    return add(g, s1, s2);
  };
  CHECK(oracle::gradcheck({&x, &h, &c, &wih, &whh, &b}, build) < 1e-3);
}

TEST_CASE("elementwise and reduction gradients match finite differences") {
  Rng rng(67);
  Parameter a(oracle::rand_tensor({3, 4}, rng));
  Parameter b(oracle::rand_tensor({3, 4}, rng));
  auto build = [&](GradientContext& g) {
    Value t = tanh(g, mul(g, g.leaf(a), g.leaf(b)));
    Value r = relu(g, add(g, t, affine(g, g.leaf(a), 0.5f, -0.1f)));
    return mean_all(g, r);
  };
  CHECK(oracle::gradcheck({&a, &b}, build) < 1e-3);
}

TEST_CASE("log_softmax and gather gradients match finite differences") {
  Rng rng(71);
  Parameter logits(oracle::rand_tensor({4, 5}, rng));
  auto build = [&](GradientContext& g) {
    Value lp = log_softmax_rows(g, g.leaf(logits));
    Value picked = gather_rows(g, lp, {1, 0, 4, 2});
    Value p = exp(g, lp);
    Value ent = affine(g, sum_all(g, mul(g, p, lp)), -1.0f, 0.0f);
    return add(g, mean_all(g, picked), ent);
  };
  CHECK(oracle::gradcheck({&logits}, build, 5e-3f) < 1e-3);
}

TEST_CASE("linear and embedding gradients match finite differences") {
  Rng rng(73);
  Parameter table(oracle::rand_tensor({6, 4}, rng));
  Parameter w(oracle::rand_tensor({3, 4}, rng));
  Parameter b(oracle::rand_tensor({3}, rng));
  auto build = [&](GradientContext& g) {
    Value e0 = embed_row(g, g.leaf(table), 2);
    Value e1 = embed_row(g, g.leaf(table), 2);  // reuse the same row
    Value y = linear(g, add(g, e0, e1), g.leaf(w), g.leaf(b));
    return mean_all(g, y);
  };
  CHECK(oracle::gradcheck({&table, &w, &b}, build) < 1e-3);
}

TEST_CASE("deterministic forward: identical seeds give identical bits") {
  auto run = [] {
    Rng rng(99);
    Tensor x = oracle::rand_tensor({2, 3, 8, 8}, rng);
    Tensor w = oracle::rand_tensor({4, 3, 3, 3}, rng);
    Tensor b = oracle::rand_tensor({4}, rng);
    Tensor y = conv2d(x, w, b, 1, 1);
    return oracle::checksum(y);
  };
  CHECK(run() == run());
}

}  // suite

TEST_SUITE("optim") {

TEST_CASE("adam: zero gradient leaves fresh parameter unchanged") {
  Parameter p(Tensor::full({3}, 1.5f));
  adam_step("p", p, classic_adam(0.1f));
  for (int i = 0; i < 3; ++i) CHECK(p.value[i] == 1.5f);
  CHECK(p.step_count == 1);
}

TEST_CASE("adam: first step magnitude is lr for constant gradient") {
  Parameter p(Tensor::full({4}, 0.0f));
  p.gradient = Tensor::full({4}, 0.37f);
  AdamHp hp = classic_adam(0.01f);
  hp.eps = 1e-12f;
  adam_step("p", p, hp);
  for (int i = 0; i < 4; ++i) CHECK(p.value[i] == doctest::Approx(-0.01f).epsilon(1e-4));
}

TEST_CASE("adam: identical calls from identical states match bitwise") {
  Rng rng(81);
  Parameter p(oracle::rand_tensor({8}, rng));
  p.gradient = oracle::rand_tensor({8}, rng);
  Parameter q = p;
  adam_step("p", p, gan_adam(2e-4f));
  adam_step("q", q, gan_adam(2e-4f));
  CHECK(oracle::checksum(p.value) == oracle::checksum(q.value));
}

TEST_CASE("adam: non-finite gradient raises naming the parameter") {
  Parameter p(Tensor::full({2}, 1.0f));
  p.gradient[0] = std::nanf("");
  CHECK_THROWS_WITH_AS(adam_step("g.cell0.conv1.w", p, classic_adam(0.1f)),
                       doctest::Contains("g.cell0.conv1.w"), NumericError);
}

TEST_CASE("spectral: identity matrix has sigma 1") {
  Tensor w = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor u = Tensor::from({2}, {1, 0});
  auto res = spectral_power_iteration(w, 2, 2, u, 1);
  CHECK(res.sigma == doctest::Approx(1.0f));
  CHECK(oracle::max_abs_diff(res.normalized, w) < 1e-6f);
}

TEST_CASE("spectral: diag(3,1) converges to sigma 3") {
  Tensor w = Tensor::from({2, 2}, {3, 0, 0, 1});
  Tensor u = Tensor::from({2}, {0.6f, 0.8f});
  auto res = spectral_power_iteration(w, 2, 2, u, 20);
  CHECK(res.sigma == doctest::Approx(3.0f).epsilon(1e-3));
}

TEST_CASE("spectral: normalized top singular value near 1 on random matrices") {
  Rng rng(83);
  for (int trial = 0; trial < 5; ++trial) {
    const int r = 3 + rng.uniform_int(6), c = 3 + rng.uniform_int(6);
    Tensor w = oracle::rand_tensor({r, c}, rng);
    Tensor u({r});
    u.vec() = oracle::rand_tensor({r}, rng).vec().normalized();
    auto res = spectral_power_iteration(w, r, c, u, 50);
    // check against Eigen's SVD of the normalized matrix
    Eigen::MatrixXf m = res.normalized.mat(r, c);
    const float top = m.jacobiSvd().singularValues()(0);
    CHECK(top > 0.99f);
    CHECK(top < 1.01f);
  }
}

TEST_CASE("spectral: zero weight matrix floors sigma without dividing by zero") {
  Tensor w({3, 3});
  Tensor u = Tensor::from({3}, {1, 0, 0});
  auto res = spectral_power_iteration(w, 3, 3, u, 5);
  CHECK(res.sigma == 0.0f);
  CHECK(res.normalized.all_finite());
}

TEST_CASE("spectral: u persists and keeps unit norm") {
  Rng rng(89);
  Tensor w = oracle::rand_tensor({4, 4}, rng);
  Tensor u = Tensor::from({4}, {1, 0, 0, 0});
  for (int step = 0; step < 10; ++step) {
    auto res = spectral_power_iteration(w, 4, 4, u, 1);
    u = res.u;
    CHECK(u.vec().norm() == doctest::Approx(1.0f).epsilon(1e-5));
  }
}

}  // suite
