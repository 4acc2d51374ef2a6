#include "resfcn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "resfcn/errors.hpp"

namespace resfcn {

namespace {

thread_local ActivationPatternProbe* g_probe = nullptr;

void require_rank4(const Tensor& x, const char* op) {
  if (x.ndim() != 4) {
    throw DimensionError(std::string(op) + ": expected NCHW input, got " +
                         shape_string(x.shape()));
  }
}

double stable_sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

struct ConvGeometry {
  std::size_t n, c_in, h, w, c_out, k, stride, pad, h_out, w_out;
  std::size_t patch() const { return c_in * k * k; }
  std::size_t plane() const { return h_out * w_out; }
  bool direct() const { return k == 1 && stride == 1 && pad == 0; }
};

// Output rows [oh0, oh1) of one sample: cols is [c_in*k*k, (oh1-oh0)*w_out].
void im2col(const ConvGeometry& g, const double* x, std::size_t oh0, std::size_t oh1, double* cols) {
  const std::size_t span = (oh1 - oh0) * g.w_out;
  for (std::size_t c = 0; c < g.c_in; ++c) {
    const double* xc = x + c * g.h * g.w;
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        double* row = cols + ((c * g.k + ki) * g.k + kj) * span;
        for (std::size_t oh = oh0; oh < oh1; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
          double* dst = row + (oh - oh0) * g.w_out;
          if (ih < 0 || ih >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.w_out, 0.0);
            continue;
          }
          const double* src = xc + ih * g.w;
          for (std::size_t ow = 0; ow < g.w_out; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
            dst[ow] = (iw < 0 || iw >= static_cast<long>(g.w)) ? 0.0 : src[iw];
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* cols, std::size_t oh0, std::size_t oh1, double* dx) {
  const std::size_t span = (oh1 - oh0) * g.w_out;
  for (std::size_t c = 0; c < g.c_in; ++c) {
    double* dxc = dx + c * g.h * g.w;
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const double* row = cols + ((c * g.k + ki) * g.k + kj) * span;
        for (std::size_t oh = oh0; oh < oh1; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
          if (ih < 0 || ih >= static_cast<long>(g.h)) continue;
          double* dst = dxc + ih * g.w;
          const double* src = row + (oh - oh0) * g.w_out;
          for (std::size_t ow = 0; ow < g.w_out; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
            if (iw >= 0 && iw < static_cast<long>(g.w)) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

// Output rows per im2col strip, so the patch matrix stays a few MB.
std::size_t strip_rows(const ConvGeometry& g) {
  constexpr std::size_t kStripColumns = 4096;
  return std::clamp<std::size_t>(kStripColumns / g.w_out, 1, g.h_out);
}

// Row-major views with an explicit row stride, so strips of a plane can be addressed in place.
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using View = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstView = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

View view(double* p, std::size_t rows, std::size_t cols, std::size_t stride) {
  return View(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols), Eigen::OuterStride<>(stride));
}
ConstView view(const double* p, std::size_t rows, std::size_t cols, std::size_t stride) {
  return ConstView(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols),
                   Eigen::OuterStride<>(stride));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] + db[i];
  return make_result(a.shape(), std::move(out), {a, b},
                     [](std::span<const double> g, const detail::GradSlots& slots) {
                       for (const auto& slot : slots) {
                         for (std::size_t i = 0; i < slot.size(); ++i) slot[i] += g[i];
                       }
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i];
  auto ia = a.impl();
  auto ib = b.impl();
  return make_result(a.shape(), std::move(out), {a, b},
                     [ia, ib](std::span<const double> g, const detail::GradSlots& slots) {
                       for (std::size_t i = 0; i < slots[0].size(); ++i) slots[0][i] += g[i] * ib->data[i];
                       for (std::size_t i = 0; i < slots[1].size(); ++i) slots[1][i] += g[i] * ia->data[i];
                     });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), {a},
                     [factor](std::span<const double> g, const detail::GradSlots& slots) {
                       for (std::size_t i = 0; i < slots[0].size(); ++i) slots[0][i] += factor * g[i];
                     });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_result(Shape{1}, {total}, {a},
                     [](std::span<const double> g, const detail::GradSlots& slots) {
                       for (double& v : slots[0]) v += g[0];
                     });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

void probe_relu_pattern(std::span<const double> input) {
  if (!g_probe) return;
  std::uint64_t h = g_probe->hash_;
  for (double v : input) {
    h ^= v > 0.0 ? 0x9e3779b97f4a7c15ULL : 0x7f4a7c159e3779b9ULL;
    h = mix_seed(h);
  }
  g_probe->hash_ = h;
}

ActivationPatternProbe::ActivationPatternProbe() : saved_(g_probe), hash_(0) { g_probe = this; }
ActivationPatternProbe::~ActivationPatternProbe() { g_probe = saved_; }
std::uint64_t ActivationPatternProbe::hash() const { return hash_; }
void ActivationPatternProbe::reset() { hash_ = 0; }

Tensor relu(const Tensor& x) {
  probe_relu_pattern(x.data());
  std::vector<double> out(x.numel());
  const auto dx = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = dx[i] > 0.0 ? dx[i] : 0.0;
  auto ix = x.impl();
  return make_result(x.shape(), std::move(out), {x},
                     [ix](std::span<const double> g, const detail::GradSlots& slots) {
                       for (std::size_t i = 0; i < slots[0].size(); ++i) {
                         if (ix->data[i] > 0.0) slots[0][i] += g[i];
                       }
                     });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.numel());
  const auto dx = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(dx[i]);
  auto values = std::make_shared<std::vector<double>>(out);
  return make_result(x.shape(), std::move(out), {x},
                     [values](std::span<const double> g, const detail::GradSlots& slots) {
                       const auto& s = *values;
                       for (std::size_t i = 0; i < slots[0].size(); ++i) {
                         slots[0][i] += g[i] * s[i] * (1.0 - s[i]);
                       }
                     });
}

Tensor activation(const Tensor& x, Activation kind) {
  return kind == Activation::kRelu ? relu(x) : sigmoid(x);
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  require_rank4(x, "conv2d");
  if (weight.ndim() != 4 || weight.dim(2) != weight.dim(3)) {
    throw DimensionError("conv2d: weight must be [C_out, C_in, k, k], got " +
                         shape_string(weight.shape()));
  }
  if (x.dim(1) != weight.dim(1)) {
    throw DimensionError("conv2d: input " + shape_string(x.shape()) + " has " +
                         std::to_string(x.dim(1)) + " channels but weight " +
                         shape_string(weight.shape()) + " expects " +
                         std::to_string(weight.dim(1)));
  }
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), weight.dim(0), weight.dim(2),
                 stride, padding, 0, 0};
  if (g.h + 2 * g.pad < g.k || g.w + 2 * g.pad < g.k) {
    throw DimensionError("conv2d: input " + shape_string(x.shape()) + " smaller than kernel " +
                         std::to_string(g.k) + " after padding " + std::to_string(g.pad));
  }
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != g.c_out)) {
    throw DimensionError("conv2d: bias " + shape_string(bias.shape()) + " does not match " +
                         std::to_string(g.c_out) + " output channels");
  }
  g.h_out = (g.h + 2 * g.pad - g.k) / g.stride + 1;
  g.w_out = (g.w + 2 * g.pad - g.k) / g.stride + 1;

  const std::size_t K = g.patch();
  const std::size_t P = g.plane();
  std::vector<double> out(g.n * g.c_out * P);
  const std::size_t strip = strip_rows(g);
  std::vector<double> cols(g.direct() ? 0 : K * strip * g.w_out);
  const double* wdata = weight.data().data();
  for (std::size_t n = 0; n < g.n; ++n) {
    const double* xn = x.data().data() + n * g.c_in * g.h * g.w;
    double* on = out.data() + n * g.c_out * P;
    for (std::size_t co = 0; co < g.c_out; ++co) {
      const double b0 = bias.defined() ? bias.data()[co] : 0.0;
      std::fill(on + co * P, on + (co + 1) * P, b0);
    }
    if (g.direct()) {
      view(on, g.c_out, P, P).noalias() += view(wdata, g.c_out, K, K) * view(xn, K, P, P);
      continue;
    }
    for (std::size_t oh0 = 0; oh0 < g.h_out; oh0 += strip) {
      const std::size_t oh1 = std::min(g.h_out, oh0 + strip);
      const std::size_t span = (oh1 - oh0) * g.w_out;
      im2col(g, xn, oh0, oh1, cols.data());
      view(on + oh0 * g.w_out, g.c_out, span, P).noalias() += view(wdata, g.c_out, K, K) * view(cols.data(), K, span, span);
    }
  }

  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  auto ix = x.impl();
  auto iw = weight.impl();
  Shape out_shape{g.n, g.c_out, g.h_out, g.w_out};
  return make_result(
      std::move(out_shape), std::move(out), std::move(inputs),
      [g, ix, iw](std::span<const double> gout, const detail::GradSlots& slots) {
        const std::size_t K = g.patch();
        const std::size_t P = g.plane();
        const std::span<double> dx = slots[0];
        const std::span<double> dw = slots[1];
        const std::span<double> db = slots.size() > 2 ? slots[2] : std::span<double>{};
        const std::size_t strip = strip_rows(g);
        std::vector<double> cols(g.direct() ? 0 : K * strip * g.w_out);
        std::vector<double> dcols(dx.empty() || g.direct() ? 0 : K * strip * g.w_out);
        const double* wdata = iw->data.data();
        for (std::size_t n = 0; n < g.n; ++n) {
          const double* gn = gout.data() + n * g.c_out * P;
          if (!db.empty()) {
            for (std::size_t co = 0; co < g.c_out; ++co) {
              double s = 0.0;
              for (std::size_t p = 0; p < P; ++p) s += gn[co * P + p];
              db[co] += s;
            }
          }
          const double* xn = ix->data.data() + n * g.c_in * g.h * g.w;
          double* dxn = dx.empty() ? nullptr : dx.data() + n * g.c_in * g.h * g.w;
          if (g.direct()) {
            if (!dw.empty()) {
              view(dw.data(), g.c_out, K, K).noalias() += view(gn, g.c_out, P, P) * view(xn, K, P, P).transpose();
            }
            if (dxn) {
              view(dxn, K, P, P).noalias() += view(wdata, g.c_out, K, K).transpose() * view(gn, g.c_out, P, P);
            }
            continue;
          }
          for (std::size_t oh0 = 0; oh0 < g.h_out; oh0 += strip) {
            const std::size_t oh1 = std::min(g.h_out, oh0 + strip);
            const std::size_t span = (oh1 - oh0) * g.w_out;
            const double* gs = gn + oh0 * g.w_out;
            if (!dw.empty()) {
              im2col(g, xn, oh0, oh1, cols.data());
              view(dw.data(), g.c_out, K, K).noalias() +=
                  view(gs, g.c_out, span, P) * view(cols.data(), K, span, span).transpose();
            }
            if (dxn) {
              view(dcols.data(), K, span, span).noalias() = view(wdata, g.c_out, K, K).transpose() * view(gs, g.c_out, span, P);
              col2im_add(g, dcols.data(), oh0, oh1, dxn);
            }
          }
        }
      });
}

BatchNormState::BatchNormState(std::size_t channels, double momentum_, double eps_)
    : gamma(Shape{channels}, 1.0),
      beta(Shape{channels}, 0.0),
      running_mean(channels, 0.0),
      running_var(channels, 1.0),
      momentum(momentum_),
      eps(eps_) {}

Tensor batch_norm(const Tensor& x, BatchNormState& state, Mode mode) {
  require_rank4(x, "batch_norm");
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (C != state.channels()) {
    throw DimensionError("batch_norm: input " + shape_string(x.shape()) + " has " +
                         std::to_string(C) + " channels, state has " +
                         std::to_string(state.channels()));
  }
  const std::size_t M = N * HW;
  if (mode == Mode::kTrain && M < 2) {
    throw DimensionError("batch_norm: degenerate batch, " + std::to_string(M) +
                         " element(s) per channel in train mode for input " +
                         shape_string(x.shape()));
  }
  const auto xd = x.data();
  const auto gamma = state.gamma.data();
  const auto beta = state.beta.data();

  std::vector<double> mean_c(C), inv_std(C);
  if (mode == Mode::kTrain) {
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double* p = xd.data() + (n * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(M);
      double v = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double* p = xd.data() + (n * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) v += (p[i] - mu) * (p[i] - mu);
      }
      v /= static_cast<double>(M);
      mean_c[c] = mu;
      inv_std[c] = 1.0 / std::sqrt(v + state.eps);
      const Precision prec = precision();
      state.running_mean[c] =
          round_to_precision((1.0 - state.momentum) * state.running_mean[c] + state.momentum * mu, prec);
      state.running_var[c] =
          round_to_precision((1.0 - state.momentum) * state.running_var[c] + state.momentum * v, prec);
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean_c[c] = state.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(state.running_var[c] + state.eps);
    }
  }

  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  std::vector<double> out(x.numel());
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t base = (n * C + c) * HW;
      for (std::size_t i = 0; i < HW; ++i) {
        const double h = (xd[base + i] - mean_c[c]) * inv_std[c];
        (*xhat)[base + i] = h;
        out[base + i] = gamma[c] * h + beta[c];
      }
    }
  }

  auto igamma = state.gamma.impl();
  return make_result(
      x.shape(), std::move(out), {x, state.gamma, state.beta},
      [=](std::span<const double> g, const detail::GradSlots& slots) {
        const auto& xh = *xhat;
        const auto& gm = igamma->data;
        std::vector<double> sum_g(C, 0.0), sum_gx(C, 0.0);
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t c = 0; c < C; ++c) {
            const std::size_t base = (n * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) {
              sum_g[c] += g[base + i];
              sum_gx[c] += g[base + i] * xh[base + i];
            }
          }
        }
        if (!slots[1].empty()) {
          for (std::size_t c = 0; c < C; ++c) slots[1][c] += sum_gx[c];
        }
        if (!slots[2].empty()) {
          for (std::size_t c = 0; c < C; ++c) slots[2][c] += sum_g[c];
        }
        if (slots[0].empty()) return;
        const double inv_m = 1.0 / static_cast<double>(M);
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t c = 0; c < C; ++c) {
            const std::size_t base = (n * C + c) * HW;
            const double k = gm[c] * inv_std[c];
            if (mode == Mode::kTrain) {
              for (std::size_t i = 0; i < HW; ++i) {
                slots[0][base + i] +=
                    k * (g[base + i] - inv_m * sum_g[c] - xh[base + i] * inv_m * sum_gx[c]);
              }
            } else {
              for (std::size_t i = 0; i < HW; ++i) slots[0][base + i] += k * g[base + i];
            }
          }
        }
      });
}

Tensor dropout(const Tensor& x, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (mode == Mode::kEval || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(x.numel());
  std::vector<double> out(x.numel());
  const auto xd = x.data();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double m = u(rng) >= rate ? keep_scale : 0.0;
    (*mask)[i] = m;
    out[i] = xd[i] * m;
  }
  return make_result(x.shape(), std::move(out), {x},
                     [mask](std::span<const double> g, const detail::GradSlots& slots) {
                       for (std::size_t i = 0; i < slots[0].size(); ++i) slots[0][i] += g[i] * (*mask)[i];
                     });
}

Tensor decimate_downsample(const Tensor& x, std::size_t factor) {
  require_rank4(x, "decimate_downsample");
  if (factor == 0) throw ConfigError("decimate_downsample: factor must be positive");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % factor != 0 || W % factor != 0) {
    throw DimensionError("decimate_downsample: spatial size of " + shape_string(x.shape()) +
                         " not divisible by " + std::to_string(factor));
  }
  if (factor == 1) return x;
  const std::size_t Ho = H / factor, Wo = W / factor;
  std::vector<double> out(N * C * Ho * Wo);
  const auto xd = x.data();
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    for (std::size_t i = 0; i < Ho; ++i) {
      for (std::size_t j = 0; j < Wo; ++j) {
        out[(nc * Ho + i) * Wo + j] = xd[(nc * H + i * factor) * W + j * factor];
      }
    }
  }
  return make_result(Shape{N, C, Ho, Wo}, std::move(out), {x},
                     [=](std::span<const double> g, const detail::GradSlots& slots) {
                       for (std::size_t nc = 0; nc < N * C; ++nc) {
                         for (std::size_t i = 0; i < Ho; ++i) {
                           for (std::size_t j = 0; j < Wo; ++j) {
                             slots[0][(nc * H + i * factor) * W + j * factor] +=
                                 g[(nc * Ho + i) * Wo + j];
                           }
                         }
                       }
                     });
}

Tensor repeat_upsample(const Tensor& x, std::size_t factor) {
  require_rank4(x, "repeat_upsample");
  if (factor == 0) throw ConfigError("repeat_upsample: factor must be positive");
  if (factor == 1) return x;
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Ho = H * factor, Wo = W * factor;
  std::vector<double> out(N * C * Ho * Wo);
  const auto xd = x.data();
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    for (std::size_t i = 0; i < Ho; ++i) {
      for (std::size_t j = 0; j < Wo; ++j) {
        out[(nc * Ho + i) * Wo + j] = xd[(nc * H + i / factor) * W + j / factor];
      }
    }
  }
  return make_result(Shape{N, C, Ho, Wo}, std::move(out), {x},
                     [=](std::span<const double> g, const detail::GradSlots& slots) {
                       for (std::size_t nc = 0; nc < N * C; ++nc) {
                         for (std::size_t i = 0; i < Ho; ++i) {
                           for (std::size_t j = 0; j < Wo; ++j) {
                             slots[0][(nc * H + i / factor) * W + j / factor] +=
                                 g[(nc * Ho + i) * Wo + j];
                           }
                         }
                       }
                     });
}

}  // namespace resfcn
