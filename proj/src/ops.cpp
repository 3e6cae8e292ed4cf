#include "gansearch/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>

namespace gansearch {
namespace {

constexpr float kNormEps = 1e-5f;

struct ConvDims {
  int n, c, h, w;       // input
  int o, k;             // filters
  int stride, pad;
  int ho, wo;           // output spatial
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad, const char* where) {
  if (x.rank() != 4) throw ShapeError(std::string(where) + ": input must be NCHW, got " + x.shape_str());
  if (w.rank() != 4) throw ShapeError(std::string(where) + ": weight must be OIKK, got " + w.shape_str());
  ConvDims d;
  d.n = x.dim(0); d.c = x.dim(1); d.h = x.dim(2); d.w = x.dim(3);
  d.o = w.dim(0); d.k = w.dim(2);
  if (w.dim(2) != w.dim(3))
    throw ShapeError(std::string(where) + ": non-square kernel " + w.shape_str());
  if (w.dim(1) != d.c)
    throw ShapeError(std::string(where) + ": input channels " + std::to_string(d.c) +
                     " vs weight in-channels " + std::to_string(w.dim(1)));
  if (stride < 1) throw ShapeError(std::string(where) + ": stride must be >= 1");
  if (pad < 0) throw ShapeError(std::string(where) + ": padding must be >= 0");
  d.stride = stride; d.pad = pad;
  d.ho = (d.h + 2 * pad - d.k) / stride + 1;
  d.wo = (d.w + 2 * pad - d.k) / stride + 1;
  if (d.h + 2 * pad < d.k || d.w + 2 * pad < d.k)
    throw ShapeError(std::string(where) + ": kernel larger than padded input");
  return d;
}

// One image plane: src [C,H,W] -> col [C*k*k, Ho*Wo].
void im2col(const float* src, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo,
            float* col) {
  const int P = Ho * Wo;
  for (int c = 0; c < C; ++c) {
    const float* chan = src + static_cast<int64_t>(c) * H * W;
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw) {
        float* row = col + static_cast<int64_t>((c * k + kh) * k + kw) * P;
        for (int ho = 0; ho < Ho; ++ho) {
          const int h = ho * stride - pad + kh;
          float* out = row + ho * Wo;
          if (h < 0 || h >= H) {
            std::memset(out, 0, sizeof(float) * static_cast<size_t>(Wo));
            continue;
          }
          const float* in = chan + h * W;
          for (int wo = 0; wo < Wo; ++wo) {
            const int ww = wo * stride - pad + kw;
            out[wo] = (ww < 0 || ww >= W) ? 0.0f : in[ww];
          }
        }
      }
    }
  }
}

// Scatter-add col [C*k*k, Ho*Wo] back into dst [C,H,W].
void col2im(const float* col, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo,
            float* dst) {
  const int P = Ho * Wo;
  for (int c = 0; c < C; ++c) {
    float* chan = dst + static_cast<int64_t>(c) * H * W;
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw) {
        const float* row = col + static_cast<int64_t>((c * k + kh) * k + kw) * P;
        for (int ho = 0; ho < Ho; ++ho) {
          const int h = ho * stride - pad + kh;
          if (h < 0 || h >= H) continue;
          float* out = chan + h * W;
          const float* in = row + ho * Wo;
          for (int wo = 0; wo < Wo; ++wo) {
            const int ww = wo * stride - pad + kw;
            if (ww >= 0 && ww < W) out[ww] += in[wo];
          }
        }
      }
    }
  }
}

void check_bias(const Tensor& b, int o, const char* where) {
  if (b.rank() != 1 || b.dim(0) != o)
    throw ShapeError(std::string(where) + ": bias shape " + b.shape_str() + " for " +
                     std::to_string(o) + " output channels");
}

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, const ConvDims& d) {
  Tensor out({d.n, d.o, d.ho, d.wo});
  const int P = d.ho * d.wo;
  const int K = d.c * d.k * d.k;
#pragma omp parallel for schedule(static)
  for (int n = 0; n < d.n; ++n) {
    const float* xn = x.data() + static_cast<int64_t>(n) * d.c * d.h * d.w;
    float* on = out.data() + static_cast<int64_t>(n) * d.o * P;
    MapMatF out_mat(on, d.o, P);
    if (d.k == 1 && d.stride == 1 && d.pad == 0) {
      out_mat.noalias() = w.mat(d.o, K) * ConstMapMatF(xn, d.c, P);
    } else {
      std::vector<float> col(static_cast<size_t>(K) * P);
      im2col(xn, d.c, d.h, d.w, d.k, d.stride, d.pad, d.ho, d.wo, col.data());
      out_mat.noalias() = w.mat(d.o, K) * ConstMapMatF(col.data(), K, P);
    }
    for (int o = 0; o < d.o; ++o) out_mat.row(o).array() += b[o];
  }
  return out;
}

Tensor deconv_dims_check(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 4) throw ShapeError("transposed_conv2d: input must be NCHW, got " + x.shape_str());
  if (w.rank() != 4 || w.dim(2) != 4 || w.dim(3) != 4)
    throw ShapeError("transposed_conv2d: weight must be [I,O,4,4], got " + w.shape_str());
  if (w.dim(0) != x.dim(1))
    throw ShapeError("transposed_conv2d: input channels " + std::to_string(x.dim(1)) +
                     " vs weight in-channels " + std::to_string(w.dim(0)));
  check_bias(b, w.dim(1), "transposed_conv2d");
  return Tensor({x.dim(0), w.dim(1), 2 * x.dim(2), 2 * x.dim(3)});
}

Tensor deconv_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor out = deconv_dims_check(x, w, b);
  const int N = x.dim(0), I = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int O = w.dim(1), Ho = 2 * H, Wo = 2 * W;
  const int P = H * W, K = O * 16;
#pragma omp parallel for schedule(static)
  for (int n = 0; n < N; ++n) {
    const float* xn = x.data() + static_cast<int64_t>(n) * I * P;
    float* on = out.data() + static_cast<int64_t>(n) * O * Ho * Wo;
    std::vector<float> col(static_cast<size_t>(K) * P);
    MapMatF(col.data(), K, P).noalias() = w.mat(I, K).transpose() * ConstMapMatF(xn, I, P);
    col2im(col.data(), O, Ho, Wo, 4, 2, 1, H, W, on);
    MapMatF out_mat(on, O, Ho * Wo);
    for (int o = 0; o < O; ++o) out_mat.row(o).array() += b[o];
  }
  return out;
}

Tensor upsample_forward(const Tensor& x, UpsampleMode mode) {
  if (x.rank() != 4) throw ShapeError("upsample2x: input must be NCHW, got " + x.shape_str());
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H < 1 || W < 1) throw ShapeError("upsample2x: empty spatial dims");
  Tensor out({N, C, 2 * H, 2 * W});
  const int planes = N * C;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const float* in = x.data() + static_cast<int64_t>(p) * H * W;
    float* o = out.data() + static_cast<int64_t>(p) * 4 * H * W;
    const int Wo = 2 * W;
    if (mode == UpsampleMode::kNearest) {
      for (int y = 0; y < 2 * H; ++y)
        for (int xx = 0; xx < Wo; ++xx) o[y * Wo + xx] = in[(y / 2) * W + xx / 2];
    } else {
      for (int y = 0; y < 2 * H; ++y) {
        const float sy = 0.5f * y - 0.25f;
        const int y0 = static_cast<int>(std::floor(sy));
        const float wy = sy - y0;
        const int y0c = std::clamp(y0, 0, H - 1), y1c = std::clamp(y0 + 1, 0, H - 1);
        for (int xx = 0; xx < Wo; ++xx) {
          const float sx = 0.5f * xx - 0.25f;
          const int x0 = static_cast<int>(std::floor(sx));
          const float wx = sx - x0;
          const int x0c = std::clamp(x0, 0, W - 1), x1c = std::clamp(x0 + 1, 0, W - 1);
          o[y * Wo + xx] = (1 - wy) * ((1 - wx) * in[y0c * W + x0c] + wx * in[y0c * W + x1c]) +
                           wy * ((1 - wx) * in[y1c * W + x0c] + wx * in[y1c * W + x1c]);
        }
      }
    }
  }
  return out;
}

Tensor avg_pool_forward(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("avg_pool2x: input must be NCHW, got " + x.shape_str());
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % 2 || W % 2) throw ShapeError("avg_pool2x: odd spatial dims " + x.shape_str());
  Tensor out({N, C, H / 2, W / 2});
  const int planes = N * C;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const float* in = x.data() + static_cast<int64_t>(p) * H * W;
    float* o = out.data() + static_cast<int64_t>(p) * (H / 2) * (W / 2);
    for (int y = 0; y < H / 2; ++y)
      for (int xx = 0; xx < W / 2; ++xx)
        o[y * (W / 2) + xx] = 0.25f * (in[(2 * y) * W + 2 * xx] + in[(2 * y) * W + 2 * xx + 1] +
                                       in[(2 * y + 1) * W + 2 * xx] + in[(2 * y + 1) * W + 2 * xx + 1]);
  }
  return out;
}

struct NormStats {
  std::vector<float> mean, inv_std;  // per group
};

// Groups: batch mode -> C groups of N*H*W elements; instance -> N*C of H*W.
NormStats norm_stats(const Tensor& x, NormMode mode) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int HW = H * W;
  NormStats st;
  if (mode == NormMode::kBatch) {
    st.mean.resize(static_cast<size_t>(C));
    st.inv_std.resize(static_cast<size_t>(C));
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
      float sum = 0.0f;
      for (int n = 0; n < N; ++n) {
        const float* p = x.data() + (static_cast<int64_t>(n) * C + c) * HW;
        for (int i = 0; i < HW; ++i) sum += p[i];
      }
      const float m = sum / (static_cast<float>(N) * HW);
      float sq = 0.0f;
      for (int n = 0; n < N; ++n) {
        const float* p = x.data() + (static_cast<int64_t>(n) * C + c) * HW;
        for (int i = 0; i < HW; ++i) sq += (p[i] - m) * (p[i] - m);
      }
      st.mean[static_cast<size_t>(c)] = m;
      st.inv_std[static_cast<size_t>(c)] =
          1.0f / std::sqrt(sq / (static_cast<float>(N) * HW) + kNormEps);
    }
  } else {
    st.mean.resize(static_cast<size_t>(N) * C);
    st.inv_std.resize(static_cast<size_t>(N) * C);
#pragma omp parallel for schedule(static)
    for (int g = 0; g < N * C; ++g) {
      const float* p = x.data() + static_cast<int64_t>(g) * HW;
      float sum = 0.0f;
      for (int i = 0; i < HW; ++i) sum += p[i];
      const float m = sum / HW;
      float sq = 0.0f;
      for (int i = 0; i < HW; ++i) sq += (p[i] - m) * (p[i] - m);
      st.mean[static_cast<size_t>(g)] = m;
      st.inv_std[static_cast<size_t>(g)] = 1.0f / std::sqrt(sq / HW + kNormEps);
    }
  }
  return st;
}

void check_norm_args(const Tensor& x, NormMode mode, const Tensor& gamma, const Tensor& beta,
                     bool training) {
  if (x.rank() != 4) throw ShapeError("normalize: input must be NCHW, got " + x.shape_str());
  if (mode == NormMode::kNone) return;
  const int C = x.dim(1);
  if (gamma.rank() != 1 || gamma.dim(0) != C || beta.rank() != 1 || beta.dim(0) != C)
    throw ShapeError("normalize: gamma/beta must be [" + std::to_string(C) + "], got " +
                     gamma.shape_str() + " / " + beta.shape_str());
  if (mode == NormMode::kBatch && training && x.dim(0) < 2)
    throw ShapeError("normalize: batch mode needs N >= 2 in training (degenerate batch)");
}

Tensor normalize_forward(const Tensor& x, NormMode mode, const Tensor& gamma, const Tensor& beta,
                         const NormStats& st) {
  const int N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor out(x.shape());
#pragma omp parallel for schedule(static)
  for (int g = 0; g < N * C; ++g) {
    const int c = g % C;
    const size_t si = mode == NormMode::kBatch ? static_cast<size_t>(c) : static_cast<size_t>(g);
    const float m = st.mean[si], is = st.inv_std[si];
    const float gm = gamma[c], bt = beta[c];
    const float* p = x.data() + static_cast<int64_t>(g) * HW;
    float* o = out.data() + static_cast<int64_t>(g) * HW;
    for (int i = 0; i < HW; ++i) o[i] = gm * (p[i] - m) * is + bt;
  }
  return out;
}

struct LstmDims {
  int b, in, hsz;
};

LstmDims lstm_check(const Tensor& x, const Tensor& h, const Tensor& c, const Tensor& w_ih,
                    const Tensor& w_hh, const Tensor& bias) {
  if (x.rank() != 2 || h.rank() != 2 || c.rank() != 2)
    throw ShapeError("lstm_step: x/h/c must be 2-D");
  LstmDims d{x.dim(0), x.dim(1), h.dim(1)};
  if (h.dim(0) != d.b || c.dim(0) != d.b || c.dim(1) != d.hsz)
    throw ShapeError("lstm_step: batch/hidden mismatch h=" + h.shape_str() + " c=" + c.shape_str());
  if (w_ih.rank() != 2 || w_ih.dim(0) != 4 * d.hsz || w_ih.dim(1) != d.in)
    throw ShapeError("lstm_step: w_ih shape " + w_ih.shape_str());
  if (w_hh.rank() != 2 || w_hh.dim(0) != 4 * d.hsz || w_hh.dim(1) != d.hsz)
    throw ShapeError("lstm_step: w_hh shape " + w_hh.shape_str());
  if (bias.rank() != 1 || bias.dim(0) != 4 * d.hsz)
    throw ShapeError("lstm_step: bias shape " + bias.shape_str());
  return d;
}

inline float sigmoid(float v) { return 1.0f / (1.0f + std::exp(-v)); }

struct LstmSaved {
  Tensor i, f, g, o, tc;  // gate activations and tanh(c'), each [B,H]
};

void lstm_forward_impl(const Tensor& x, const Tensor& h, const Tensor& c, const Tensor& w_ih,
                       const Tensor& w_hh, const Tensor& bias, const LstmDims& d, Tensor& h_out,
                       Tensor& c_out, LstmSaved& sv) {
  Tensor z({d.b, 4 * d.hsz});
  z.mat(d.b, 4 * d.hsz).noalias() = x.mat(d.b, d.in) * w_ih.mat(4 * d.hsz, d.in).transpose();
  z.mat(d.b, 4 * d.hsz).noalias() += h.mat(d.b, d.hsz) * w_hh.mat(4 * d.hsz, d.hsz).transpose();
  for (int n = 0; n < d.b; ++n)
    for (int j = 0; j < 4 * d.hsz; ++j) z.at(n, j) += bias[j];

  sv.i = Tensor({d.b, d.hsz}); sv.f = Tensor({d.b, d.hsz});
  sv.g = Tensor({d.b, d.hsz}); sv.o = Tensor({d.b, d.hsz});
  sv.tc = Tensor({d.b, d.hsz});
  h_out = Tensor({d.b, d.hsz});
  c_out = Tensor({d.b, d.hsz});
  for (int n = 0; n < d.b; ++n) {
    for (int j = 0; j < d.hsz; ++j) {
      const float zi = z.at(n, j), zf = z.at(n, d.hsz + j);
      const float zg = z.at(n, 2 * d.hsz + j), zo = z.at(n, 3 * d.hsz + j);
      const float iv = sigmoid(zi), fv = sigmoid(zf), gv = std::tanh(zg), ov = sigmoid(zo);
      const float cv = fv * c.at(n, j) + iv * gv;
      const float tv = std::tanh(cv);
      sv.i.at(n, j) = iv; sv.f.at(n, j) = fv; sv.g.at(n, j) = gv; sv.o.at(n, j) = ov;
      sv.tc.at(n, j) = tv;
      c_out.at(n, j) = cv;
      h_out.at(n, j) = ov * tv;
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Plain forwards
// ---------------------------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding) {
  ConvDims d = conv_dims(x, w, stride, padding, "conv2d");
  if (d.k != 1 && d.k != 3) throw ShapeError("conv2d: kernel must be 1 or 3, got " + std::to_string(d.k));
  check_bias(b, d.o, "conv2d");
  return conv2d_forward(x, w, b, d);
}

Tensor transposed_conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
  return deconv_forward(x, w, b);
}

Tensor upsample2x(const Tensor& x, UpsampleMode mode) { return upsample_forward(x, mode); }

Tensor avg_pool2x(const Tensor& x) { return avg_pool_forward(x); }

Tensor normalize(const Tensor& x, NormMode mode, const Tensor& gamma, const Tensor& beta,
                 bool training) {
  check_norm_args(x, mode, gamma, beta, training);
  if (mode == NormMode::kNone) return x;
  NormStats st = norm_stats(x, mode);
  return normalize_forward(x, mode, gamma, beta, st);
}

std::pair<Tensor, Tensor> lstm_step(const Tensor& x, const Tensor& h, const Tensor& c,
                                    const Tensor& w_ih, const Tensor& w_hh, const Tensor& b) {
  LstmDims d = lstm_check(x, h, c, w_ih, w_hh, b);
  Tensor ho, co;
  LstmSaved sv;
  lstm_forward_impl(x, h, c, w_ih, w_hh, b, d, ho, co, sv);
  return {std::move(ho), std::move(co)};
}

// ---------------------------------------------------------------------------
// Tape ops
// ---------------------------------------------------------------------------

Value conv2d(GradientContext& g, Value xv, Value wv, Value bv, int stride, int padding) {
  const Tensor& x = g.value(xv);
  const Tensor& w = g.value(wv);
  const Tensor& b = g.value(bv);
  ConvDims d = conv_dims(x, w, stride, padding, "conv2d");
  if (d.k != 1 && d.k != 3) throw ShapeError("conv2d: kernel must be 1 or 3, got " + std::to_string(d.k));
  check_bias(b, d.o, "conv2d");
  Tensor out = conv2d_forward(x, w, b, d);
  const bool ng = g.needs_grad(xv) || g.needs_grad(wv) || g.needs_grad(bv);
  if (!ng) return g.make(std::move(out), false, {});
  return g.make(std::move(out), true, [=](GradientContext& gg, const Tensor& gout) {
    const Tensor& xt = gg.value(xv);
    const Tensor& wt = gg.value(wv);
    const int P = d.ho * d.wo, K = d.c * d.k * d.k;
    const bool need_x = gg.needs_grad(xv), need_w = gg.needs_grad(wv), need_b = gg.needs_grad(bv);
    Tensor gx = need_x ? Tensor(xt.shape()) : Tensor();
    std::vector<Tensor> gw_part;
    if (need_w) gw_part.assign(static_cast<size_t>(d.n), Tensor());
#pragma omp parallel for schedule(static)
    for (int n = 0; n < d.n; ++n) {
      const float* gon = gout.data() + static_cast<int64_t>(n) * d.o * P;
      ConstMapMatF go_mat(gon, d.o, P);
      if (need_x) {
        float* gxn = gx.data() + static_cast<int64_t>(n) * d.c * d.h * d.w;
        if (d.k == 1 && d.stride == 1 && d.pad == 0) {
          MapMatF(gxn, d.c, P).noalias() = wt.mat(d.o, K).transpose() * go_mat;
        } else {
          std::vector<float> colg(static_cast<size_t>(K) * P);
          MapMatF(colg.data(), K, P).noalias() = wt.mat(d.o, K).transpose() * go_mat;
          col2im(colg.data(), d.c, d.h, d.w, d.k, d.stride, d.pad, d.ho, d.wo, gxn);
        }
      }
      if (need_w) {
        const float* xn = xt.data() + static_cast<int64_t>(n) * d.c * d.h * d.w;
        Tensor part({d.o, K});
        if (d.k == 1 && d.stride == 1 && d.pad == 0) {
          part.mat(d.o, K).noalias() = go_mat * ConstMapMatF(xn, d.c, P).transpose();
        } else {
          std::vector<float> col(static_cast<size_t>(K) * P);
          im2col(xn, d.c, d.h, d.w, d.k, d.stride, d.pad, d.ho, d.wo, col.data());
          part.mat(d.o, K).noalias() = go_mat * ConstMapMatF(col.data(), K, P).transpose();
        }
        gw_part[static_cast<size_t>(n)] = std::move(part);
      }
    }
    if (need_x) gg.add_grad_move(xv, std::move(gx));
    if (need_w) {
      Tensor gw(wt.shape());
      for (int n = 0; n < d.n; ++n) gw.vec() += gw_part[static_cast<size_t>(n)].vec();
      gg.add_grad_move(wv, std::move(gw));
    }
    if (need_b) {
      Tensor gb({d.o});
      for (int n = 0; n < d.n; ++n) {
        ConstMapMatF go_mat(gout.data() + static_cast<int64_t>(n) * d.o * P, d.o, P);
        for (int o = 0; o < d.o; ++o) gb[o] += go_mat.row(o).sum();
      }
      gg.add_grad_move(bv, std::move(gb));
    }
  });
}

Value transposed_conv2d(GradientContext& g, Value xv, Value wv, Value bv) {
  const Tensor& x = g.value(xv);
  const Tensor& w = g.value(wv);
  Tensor out = deconv_forward(x, w, g.value(bv));
  const bool ng = g.needs_grad(xv) || g.needs_grad(wv) || g.needs_grad(bv);
  if (!ng) return g.make(std::move(out), false, {});
  const int N = x.dim(0), I = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int O = w.dim(1);
  return g.make(std::move(out), true, [=](GradientContext& gg, const Tensor& gout) {
    const Tensor& xt = gg.value(xv);
    const Tensor& wt = gg.value(wv);
    const int P = H * W, K = O * 16;
    const bool need_x = gg.needs_grad(xv), need_w = gg.needs_grad(wv), need_b = gg.needs_grad(bv);
    Tensor gx = need_x ? Tensor(xt.shape()) : Tensor();
    std::vector<Tensor> gw_part;
    if (need_w) gw_part.assign(static_cast<size_t>(N), Tensor());
#pragma omp parallel for schedule(static)
    for (int n = 0; n < N; ++n) {
      const float* gon = gout.data() + static_cast<int64_t>(n) * O * 4 * P;
      std::vector<float> colg(static_cast<size_t>(K) * P);
      im2col(gon, O, 2 * H, 2 * W, 4, 2, 1, H, W, colg.data());
      ConstMapMatF colg_mat(colg.data(), K, P);
      if (need_x) {
        float* gxn = gx.data() + static_cast<int64_t>(n) * I * P;
        MapMatF(gxn, I, P).noalias() = wt.mat(I, K) * colg_mat;
      }
      if (need_w) {
        const float* xn = xt.data() + static_cast<int64_t>(n) * I * P;
        Tensor part({I, K});
        part.mat(I, K).noalias() = ConstMapMatF(xn, I, P) * colg_mat.transpose();
        gw_part[static_cast<size_t>(n)] = std::move(part);
      }
    }
    if (need_x) gg.add_grad_move(xv, std::move(gx));
    if (need_w) {
      Tensor gw(wt.shape());
      for (int n = 0; n < N; ++n) gw.vec() += gw_part[static_cast<size_t>(n)].vec();
      gg.add_grad_move(wv, std::move(gw));
    }
    if (need_b) {
      Tensor gb({O});
      for (int n = 0; n < N; ++n) {
        ConstMapMatF go_mat(gout.data() + static_cast<int64_t>(n) * O * 4 * P, O, 4 * P);
        for (int o = 0; o < O; ++o) gb[o] += go_mat.row(o).sum();
      }
      gg.add_grad_move(bv, std::move(gb));
    }
  });
}

Value upsample2x(GradientContext& g, Value xv, UpsampleMode mode) {
  const Tensor& x = g.value(xv);
  Tensor out = upsample_forward(x, mode);
  if (!g.needs_grad(xv)) return g.make(std::move(out), false, {});
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  return g.make(std::move(out), true, [=](GradientContext& gg, const Tensor& gout) {
    Tensor gx({N, C, H, W});
    const int planes = N * C, Wo = 2 * W;
#pragma omp parallel for schedule(static)
    for (int p = 0; p < planes; ++p) {
      const float* go = gout.data() + static_cast<int64_t>(p) * 4 * H * W;
      float* gi = gx.data() + static_cast<int64_t>(p) * H * W;
      if (mode == UpsampleMode::kNearest) {
        for (int y = 0; y < 2 * H; ++y)
          for (int xx = 0; xx < Wo; ++xx) gi[(y / 2) * W + xx / 2] += go[y * Wo + xx];
      } else {
        for (int y = 0; y < 2 * H; ++y) {
          const float sy = 0.5f * y - 0.25f;
          const int y0 = static_cast<int>(std::floor(sy));
          const float wy = sy - y0;
          const int y0c = std::clamp(y0, 0, H - 1), y1c = std::clamp(y0 + 1, 0, H - 1);
          for (int xx = 0; xx < Wo; ++xx) {
            const float sx = 0.5f * xx - 0.25f;
            const int x0 = static_cast<int>(std::floor(sx));
            const float wx = sx - x0;
            const int x0c = std::clamp(x0, 0, W - 1), x1c = std::clamp(x0 + 1, 0, W - 1);
            const float gv = go[y * Wo + xx];
            gi[y0c * W + x0c] += (1 - wy) * (1 - wx) * gv;
            gi[y0c * W + x1c] += (1 - wy) * wx * gv;
            gi[y1c * W + x0c] += wy * (1 - wx) * gv;
            gi[y1c * W + x1c] += wy * wx * gv;
          }
        }
      }
    }
    gg.add_grad_move(xv, std::move(gx));
  });
}

Value avg_pool2x(GradientContext& g, Value xv) {
  const Tensor& x = g.value(xv);
  Tensor out = avg_pool_forward(x);
  if (!g.needs_grad(xv)) return g.make(std::move(out), false, {});
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  return g.make(std::move(out), true, [=](GradientContext& gg, const Tensor& gout) {
    Tensor gx({N, C, H, W});
    const int planes = N * C;
#pragma omp parallel for schedule(static)
    for (int p = 0; p < planes; ++p) {
      const float* go = gout.data() + static_cast<int64_t>(p) * (H / 2) * (W / 2);
      float* gi = gx.data() + static_cast<int64_t>(p) * H * W;
      for (int y = 0; y < H / 2; ++y)
        for (int xx = 0; xx < W / 2; ++xx) {
          const float v = 0.25f * go[y * (W / 2) + xx];
          gi[(2 * y) * W + 2 * xx] = v;
          gi[(2 * y) * W + 2 * xx + 1] = v;
          gi[(2 * y + 1) * W + 2 * xx] = v;
          gi[(2 * y + 1) * W + 2 * xx + 1] = v;
        }
    }
    gg.add_grad_move(xv, std::move(gx));
  });
}

Value normalize(GradientContext& g, Value xv, NormMode mode, Value gammav, Value betav,
                bool training) {
  const Tensor& x = g.value(xv);
  check_norm_args(x, mode, g.value(gammav), g.value(betav), training);
  if (mode == NormMode::kNone) {
    Tensor out = x;
    if (!g.needs_grad(xv)) return g.make(std::move(out), false, {});
    return g.make(std::move(out), true, [=](GradientContext& gg, const Tensor& gout) {
      gg.add_grad(xv, gout);
    });
  }
  NormStats st = norm_stats(x, mode);
  Tensor out = normalize_forward(x, mode, g.value(gammav), g.value(betav), st);
  const bool ng = g.needs_grad(xv) || g.needs_grad(gammav) || g.needs_grad(betav);
  if (!ng) return g.make(std::move(out), false, {});
  const int N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  return g.make(std::move(out), true, [=](GradientContext& gg, const Tensor& gout) {
    const Tensor& xt = gg.value(xv);
    const Tensor& gamma = gg.value(gammav);
    const bool need_x = gg.needs_grad(xv);
    Tensor gx = need_x ? Tensor(xt.shape()) : Tensor();
    Tensor dgamma({C}), dbeta({C});
    if (mode == NormMode::kBatch) {
      const float m_count = static_cast<float>(N) * HW;
#pragma omp parallel for schedule(static)
      for (int c = 0; c < C; ++c) {
        const float mu = st.mean[static_cast<size_t>(c)], is = st.inv_std[static_cast<size_t>(c)];
        float sum_g = 0.0f, sum_gx = 0.0f;
        for (int n = 0; n < N; ++n) {
          const float* xp = xt.data() + (static_cast<int64_t>(n) * C + c) * HW;
          const float* gp = gout.data() + (static_cast<int64_t>(n) * C + c) * HW;
          for (int i = 0; i < HW; ++i) {
            sum_g += gp[i];
            sum_gx += gp[i] * (xp[i] - mu) * is;
          }
        }
        dbeta[c] = sum_g;
        dgamma[c] = sum_gx;
        if (need_x) {
          const float k1 = sum_g / m_count, k2 = sum_gx / m_count, gc = gamma[c] * is;
          for (int n = 0; n < N; ++n) {
            const float* xp = xt.data() + (static_cast<int64_t>(n) * C + c) * HW;
            const float* gp = gout.data() + (static_cast<int64_t>(n) * C + c) * HW;
            float* gxp = gx.data() + (static_cast<int64_t>(n) * C + c) * HW;
            for (int i = 0; i < HW; ++i) {
              const float xhat = (xp[i] - mu) * is;
              gxp[i] = gc * (gp[i] - k1 - xhat * k2);
            }
          }
        }
      }
    } else {
      std::vector<float> dg(static_cast<size_t>(C), 0.0f), db(static_cast<size_t>(C), 0.0f);
      for (int g2 = 0; g2 < N * C; ++g2) {
        const int c = g2 % C;
        const float mu = st.mean[static_cast<size_t>(g2)], is = st.inv_std[static_cast<size_t>(g2)];
        const float* xp = xt.data() + static_cast<int64_t>(g2) * HW;
        const float* gp = gout.data() + static_cast<int64_t>(g2) * HW;
        float sum_g = 0.0f, sum_gx = 0.0f;
        for (int i = 0; i < HW; ++i) {
          sum_g += gp[i];
          sum_gx += gp[i] * (xp[i] - mu) * is;
        }
        db[static_cast<size_t>(c)] += sum_g;
        dg[static_cast<size_t>(c)] += sum_gx;
        if (need_x) {
          const float k1 = sum_g / HW, k2 = sum_gx / HW, gc = gamma[c] * is;
          float* gxp = gx.data() + static_cast<int64_t>(g2) * HW;
          for (int i = 0; i < HW; ++i) {
            const float xhat = (xp[i] - mu) * is;
            gxp[i] = gc * (gp[i] - k1 - xhat * k2);
          }
        }
      }
      for (int c = 0; c < C; ++c) {
        dgamma[c] = dg[static_cast<size_t>(c)];
        dbeta[c] = db[static_cast<size_t>(c)];
      }
    }
    if (need_x) gg.add_grad_move(xv, std::move(gx));
    if (gg.needs_grad(gammav)) gg.add_grad_move(gammav, std::move(dgamma));
    if (gg.needs_grad(betav)) gg.add_grad_move(betav, std::move(dbeta));
  });
}

namespace {

// Shared reverse chain for the two LSTM outputs; `from_h` selects whether the
// incoming gradient is dL/dh' or dL/dc'.
void lstm_backward_path(GradientContext& gg, const Tensor& gin, bool from_h, const LstmSaved& sv,
                        Value xv, Value hv, Value cv, Value wihv, Value whhv, Value bv,
                        const LstmDims& d) {
  const Tensor& xt = gg.value(xv);
  const Tensor& ht = gg.value(hv);
  const Tensor& ct = gg.value(cv);
  const Tensor& wih = gg.value(wihv);
  const Tensor& whh = gg.value(whhv);
  Tensor gz({d.b, 4 * d.hsz});
  Tensor gc_prev({d.b, d.hsz});
  for (int n = 0; n < d.b; ++n) {
    for (int j = 0; j < d.hsz; ++j) {
      const float iv = sv.i.at(n, j), fv = sv.f.at(n, j), gvv = sv.g.at(n, j),
                  ov = sv.o.at(n, j), tv = sv.tc.at(n, j);
      float gc_total, go = 0.0f;
      if (from_h) {
        const float gh = gin.at(n, j);
        go = gh * tv;
        gc_total = gh * ov * (1.0f - tv * tv);
      } else {
        gc_total = gin.at(n, j);
      }
      gz.at(n, j) = gc_total * gvv * iv * (1.0f - iv);
      gz.at(n, d.hsz + j) = gc_total * ct.at(n, j) * fv * (1.0f - fv);
      gz.at(n, 2 * d.hsz + j) = gc_total * iv * (1.0f - gvv * gvv);
      gz.at(n, 3 * d.hsz + j) = go * ov * (1.0f - ov);
      gc_prev.at(n, j) = gc_total * fv;
    }
  }
  if (gg.needs_grad(xv)) {
    Tensor gx({d.b, d.in});
    gx.mat(d.b, d.in).noalias() = gz.mat(d.b, 4 * d.hsz) * wih.mat(4 * d.hsz, d.in);
    gg.add_grad_move(xv, std::move(gx));
  }
  if (gg.needs_grad(hv)) {
    Tensor gh({d.b, d.hsz});
    gh.mat(d.b, d.hsz).noalias() = gz.mat(d.b, 4 * d.hsz) * whh.mat(4 * d.hsz, d.hsz);
    gg.add_grad_move(hv, std::move(gh));
  }
  if (gg.needs_grad(cv)) gg.add_grad_move(cv, std::move(gc_prev));
  if (gg.needs_grad(wihv)) {
    Tensor gw({4 * d.hsz, d.in});
    gw.mat(4 * d.hsz, d.in).noalias() = gz.mat(d.b, 4 * d.hsz).transpose() * xt.mat(d.b, d.in);
    gg.add_grad_move(wihv, std::move(gw));
  }
  if (gg.needs_grad(whhv)) {
    Tensor gw({4 * d.hsz, d.hsz});
    gw.mat(4 * d.hsz, d.hsz).noalias() = gz.mat(d.b, 4 * d.hsz).transpose() * ht.mat(d.b, d.hsz);
    gg.add_grad_move(whhv, std::move(gw));
  }
  if (gg.needs_grad(bv)) {
    Tensor gb({4 * d.hsz});
    for (int n = 0; n < d.b; ++n)
      for (int j = 0; j < 4 * d.hsz; ++j) gb[j] += gz.at(n, j);
    gg.add_grad_move(bv, std::move(gb));
  }
}

}  // namespace

std::pair<Value, Value> lstm_step(GradientContext& g, Value xv, Value hv, Value cv, Value wihv,
                                  Value whhv, Value bv) {
  const Tensor& x = g.value(xv);
  const Tensor& h = g.value(hv);
  const Tensor& c = g.value(cv);
  LstmDims d = lstm_check(x, h, c, g.value(wihv), g.value(whhv), g.value(bv));
  Tensor ho, co;
  auto sv = std::make_shared<LstmSaved>();
  lstm_forward_impl(x, h, c, g.value(wihv), g.value(whhv), g.value(bv), d, ho, co, *sv);
  const bool ng = g.needs_grad(xv) || g.needs_grad(hv) || g.needs_grad(cv) ||
                  g.needs_grad(wihv) || g.needs_grad(whhv) || g.needs_grad(bv);
  if (!ng) return {g.make(std::move(ho), false, {}), g.make(std::move(co), false, {})};
  Value hval = g.make(std::move(ho), true, [=](GradientContext& gg, const Tensor& gout) {
    lstm_backward_path(gg, gout, true, *sv, xv, hv, cv, wihv, whhv, bv, d);
  });
  Value cval = g.make(std::move(co), true, [=](GradientContext& gg, const Tensor& gout) {
    lstm_backward_path(gg, gout, false, *sv, xv, hv, cv, wihv, whhv, bv, d);
  });
  return {hval, cval};
}

Value linear(GradientContext& g, Value xv, Value wv, Value bv) {
  const Tensor& x = g.value(xv);
  const Tensor& w = g.value(wv);
  const Tensor& b = g.value(bv);
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(1))
    throw ShapeError("linear: x " + x.shape_str() + " vs w " + w.shape_str());
  check_bias(b, w.dim(0), "linear");
  const int N = x.dim(0), In = x.dim(1), Out = w.dim(0);
  Tensor out({N, Out});
  out.mat(N, Out).noalias() = x.mat(N, In) * w.mat(Out, In).transpose();
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < Out; ++o) out.at(n, o) += b[o];
  const bool ng = g.needs_grad(xv) || g.needs_grad(wv) || g.needs_grad(bv);
  if (!ng) return g.make(std::move(out), false, {});
  return g.make(std::move(out), true, [=](GradientContext& gg, const Tensor& gout) {
    if (gg.needs_grad(xv)) {
      Tensor gx({N, In});
      gx.mat(N, In).noalias() = gout.mat(N, Out) * gg.value(wv).mat(Out, In);
      gg.add_grad_move(xv, std::move(gx));
    }
    if (gg.needs_grad(wv)) {
      Tensor gw({Out, In});
      gw.mat(Out, In).noalias() = gout.mat(N, Out).transpose() * gg.value(xv).mat(N, In);
      gg.add_grad_move(wv, std::move(gw));
    }
    if (gg.needs_grad(bv)) {
      Tensor gb({Out});
      for (int n = 0; n < N; ++n)
        for (int o = 0; o < Out; ++o) gb[o] += gout.at(n, o);
      gg.add_grad_move(bv, std::move(gb));
    }
  });
}

Value relu(GradientContext& g, Value xv) {
  const Tensor& x = g.value(xv);
  Tensor out(x.shape());
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
  if (!g.needs_grad(xv)) return g.make(std::move(out), false, {});
  return g.make(std::move(out), true, [=](GradientContext& gg, const Tensor& gout) {
    const Tensor& xt = gg.value(xv);
    Tensor gx(xt.shape());
    for (int64_t i = 0; i < xt.numel(); ++i) gx[i] = xt[i] > 0.0f ? gout[i] : 0.0f;
    gg.add_grad_move(xv, std::move(gx));
  });
}

Value tanh(GradientContext& g, Value xv) {
  const Tensor& x = g.value(xv);
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = std::tanh(x[i]);
  if (!g.needs_grad(xv)) return g.make(std::move(out), false, {});
  auto saved = std::make_shared<Tensor>(out);
  return g.make(std::move(out), true, [=](GradientContext& gg, const Tensor& gout) {
    Tensor gx(saved->shape());
    for (int64_t i = 0; i < saved->numel(); ++i)
      gx[i] = gout[i] * (1.0f - (*saved)[i] * (*saved)[i]);
    gg.add_grad_move(xv, std::move(gx));
  });
}

Value exp(GradientContext& g, Value xv) {
  const Tensor& x = g.value(xv);
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = std::exp(x[i]);
  if (!g.needs_grad(xv)) return g.make(std::move(out), false, {});
  auto saved = std::make_shared<Tensor>(out);
  return g.make(std::move(out), true, [=](GradientContext& gg, const Tensor& gout) {
    Tensor gx(saved->shape());
    for (int64_t i = 0; i < saved->numel(); ++i) gx[i] = gout[i] * (*saved)[i];
    gg.add_grad_move(xv, std::move(gx));
  });
}

Value affine(GradientContext& g, Value xv, float alpha, float beta) {
  const Tensor& x = g.value(xv);
  Tensor out(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = alpha * x[i] + beta;
  if (!g.needs_grad(xv)) return g.make(std::move(out), false, {});
  return g.make(std::move(out), true, [=](GradientContext& gg, const Tensor& gout) {
    Tensor gx(gout.shape());
    for (int64_t i = 0; i < gout.numel(); ++i) gx[i] = alpha * gout[i];
    gg.add_grad_move(xv, std::move(gx));
  });
}

Value add(GradientContext& g, Value av, Value bv) {
  const Tensor& a = g.value(av);
  const Tensor& b = g.value(bv);
  check_same_shape(a, b, "add");
  Tensor out(a.shape());
  out.vec() = a.vec() + b.vec();
  const bool ng = g.needs_grad(av) || g.needs_grad(bv);
  if (!ng) return g.make(std::move(out), false, {});
  return g.make(std::move(out), true, [=](GradientContext& gg, const Tensor& gout) {
    gg.add_grad(av, gout);
    gg.add_grad(bv, gout);
  });
}

Value mul(GradientContext& g, Value av, Value bv) {
  const Tensor& a = g.value(av);
  const Tensor& b = g.value(bv);
  check_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
  const bool ng = g.needs_grad(av) || g.needs_grad(bv);
  if (!ng) return g.make(std::move(out), false, {});
  return g.make(std::move(out), true, [=](GradientContext& gg, const Tensor& gout) {
    if (gg.needs_grad(av)) {
      const Tensor& bt = gg.value(bv);
      Tensor ga(bt.shape());
      for (int64_t i = 0; i < bt.numel(); ++i) ga[i] = gout[i] * bt[i];
      gg.add_grad_move(av, std::move(ga));
    }
    if (gg.needs_grad(bv)) {
      const Tensor& at = gg.value(av);
      Tensor gb(at.shape());
      for (int64_t i = 0; i < at.numel(); ++i) gb[i] = gout[i] * at[i];
      gg.add_grad_move(bv, std::move(gb));
    }
  });
}

Value reshape(GradientContext& g, Value xv, std::vector<int> shape) {
  const Tensor& x = g.value(xv);
  if (shape_numel(shape) != x.numel())
    throw ShapeError("reshape: " + x.shape_str() + " -> " + shape_to_string(shape));
  Tensor out = Tensor::from(shape, std::vector<float>(x.data(), x.data() + x.numel()));
  if (!g.needs_grad(xv)) return g.make(std::move(out), false, {});
  auto orig = x.shape();
  return g.make(std::move(out), true, [=](GradientContext& gg, const Tensor& gout) {
    Tensor gx = Tensor::from(orig, std::vector<float>(gout.data(), gout.data() + gout.numel()));
    gg.add_grad_move(xv, std::move(gx));
  });
}

Value sum_all(GradientContext& g, Value xv) {
  const Tensor& x = g.value(xv);
  float s = 0.0f;
  for (int64_t i = 0; i < x.numel(); ++i) s += x[i];
  Tensor out = Tensor::from({1}, {s});
  if (!g.needs_grad(xv)) return g.make(std::move(out), false, {});
  auto shape = x.shape();
  return g.make(std::move(out), true, [=](GradientContext& gg, const Tensor& gout) {
    gg.add_grad_move(xv, Tensor::full(shape, gout[0]));
  });
}

Value mean_all(GradientContext& g, Value xv) {
  const Tensor& x = g.value(xv);
  if (x.numel() == 0) throw ShapeError("mean_all: empty tensor");
  float s = 0.0f;
  for (int64_t i = 0; i < x.numel(); ++i) s += x[i];
  const float inv = 1.0f / static_cast<float>(x.numel());
  Tensor out = Tensor::from({1}, {s * inv});
  if (!g.needs_grad(xv)) return g.make(std::move(out), false, {});
  auto shape = x.shape();
  return g.make(std::move(out), true, [=](GradientContext& gg, const Tensor& gout) {
    gg.add_grad_move(xv, Tensor::full(shape, gout[0] * inv));
  });
}

Value spatial_sum(GradientContext& g, Value xv) {
  const Tensor& x = g.value(xv);
  if (x.rank() != 4) throw ShapeError("spatial_sum: input must be NCHW, got " + x.shape_str());
  const int N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor out({N, C});
  for (int nc = 0; nc < N * C; ++nc) {
    const float* p = x.data() + static_cast<int64_t>(nc) * HW;
    float s = 0.0f;
    for (int i = 0; i < HW; ++i) s += p[i];
    out[nc] = s;
  }
  if (!g.needs_grad(xv)) return g.make(std::move(out), false, {});
  auto shape = x.shape();
  return g.make(std::move(out), true, [=](GradientContext& gg, const Tensor& gout) {
    Tensor gx(shape);
    for (int nc = 0; nc < N * C; ++nc) {
      float* p = gx.data() + static_cast<int64_t>(nc) * HW;
      for (int i = 0; i < HW; ++i) p[i] = gout[nc];
    }
    gg.add_grad_move(xv, std::move(gx));
  });
}

Value log_softmax_rows(GradientContext& g, Value xv) {
  const Tensor& x = g.value(xv);
  if (x.rank() != 2) throw ShapeError("log_softmax_rows: input must be 2-D, got " + x.shape_str());
  const int N = x.dim(0), V = x.dim(1);
  Tensor out(x.shape());
  for (int n = 0; n < N; ++n) {
    float mx = x.at(n, 0);
    for (int v = 1; v < V; ++v) mx = std::max(mx, x.at(n, v));
    float lse = 0.0f;
    for (int v = 0; v < V; ++v) lse += std::exp(x.at(n, v) - mx);
    lse = mx + std::log(lse);
    for (int v = 0; v < V; ++v) out.at(n, v) = x.at(n, v) - lse;
  }
  if (!g.needs_grad(xv)) return g.make(std::move(out), false, {});
  auto lp = std::make_shared<Tensor>(out);
  return g.make(std::move(out), true, [=](GradientContext& gg, const Tensor& gout) {
    Tensor gx({N, V});
    for (int n = 0; n < N; ++n) {
      float gsum = 0.0f;
      for (int v = 0; v < V; ++v) gsum += gout.at(n, v);
      for (int v = 0; v < V; ++v)
        gx.at(n, v) = gout.at(n, v) - std::exp(lp->at(n, v)) * gsum;
    }
    gg.add_grad_move(xv, std::move(gx));
  });
}

Value gather_rows(GradientContext& g, Value xv, std::vector<int> idx) {
  const Tensor& x = g.value(xv);
  if (x.rank() != 2) throw ShapeError("gather_rows: input must be 2-D, got " + x.shape_str());
  const int N = x.dim(0), V = x.dim(1);
  if (static_cast<int>(idx.size()) != N)
    throw ShapeError("gather_rows: " + std::to_string(idx.size()) + " indices for " +
                     std::to_string(N) + " rows");
  for (int n = 0; n < N; ++n)
    if (idx[static_cast<size_t>(n)] < 0 || idx[static_cast<size_t>(n)] >= V)
      throw DataError("gather_rows: index " + std::to_string(idx[static_cast<size_t>(n)]) +
                      " out of range [0," + std::to_string(V) + ") at row " + std::to_string(n));
  Tensor out({N});
  for (int n = 0; n < N; ++n) out[n] = x.at(n, idx[static_cast<size_t>(n)]);
  if (!g.needs_grad(xv)) return g.make(std::move(out), false, {});
  return g.make(std::move(out), true, [=, idx = std::move(idx)](GradientContext& gg, const Tensor& gout) {
    Tensor gx({N, V});
    for (int n = 0; n < N; ++n) gx.at(n, idx[static_cast<size_t>(n)]) = gout[n];
    gg.add_grad_move(xv, std::move(gx));
  });
}

Value embed_row(GradientContext& g, Value tablev, int row) {
  const Tensor& t = g.value(tablev);
  if (t.rank() != 2) throw ShapeError("embed_row: table must be 2-D, got " + t.shape_str());
  if (row < 0 || row >= t.dim(0))
    throw DataError("embed_row: row " + std::to_string(row) + " out of range [0," +
                    std::to_string(t.dim(0)) + ")");
  const int D = t.dim(1);
  Tensor out({1, D});
  std::memcpy(out.data(), t.data() + static_cast<int64_t>(row) * D,
              sizeof(float) * static_cast<size_t>(D));
  if (!g.needs_grad(tablev)) return g.make(std::move(out), false, {});
  return g.make(std::move(out), true, [=](GradientContext& gg, const Tensor& gout) {
    Tensor* buf = gg.grad_buffer(tablev);
    if (!buf) return;
    float* dst = buf->data() + static_cast<int64_t>(row) * D;
    for (int i = 0; i < D; ++i) dst[i] += gout[i];
  });
}

}  // namespace gansearch
