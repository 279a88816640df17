#include "polarloc/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <vector>

namespace ploc {

void Conv2dSpec::validate() const {
  expects(in_channels >= 1 && out_channels >= 1, "conv: channel counts must be positive");
  expects(kernel_h >= 1 && kernel_w >= 1 && stride_h >= 1 && stride_w >= 1,
          "conv: kernel and stride must be positive");
  if (stride_h == 1)
    expects(kernel_h % 2 == 1, "conv: stride-1 kernels must have odd extent");
  else
    expects(kernel_h == stride_h, "conv: strided kernels must equal the stride");
  if (stride_w == 1)
    expects(kernel_w % 2 == 1, "conv: stride-1 kernels must have odd extent");
  else
    expects(kernel_w == stride_w, "conv: strided kernels must equal the stride");
}

namespace {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using ConstMapRM = Eigen::Map<const MatRM<T>>;

// Geometry of a convolution applied to one C x H x W sample.
struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t kh, kw, sh, sw, ph, pw;
  std::size_t out_h, out_w;

  std::size_t rows() const { return channels * kh * kw; }
  std::size_t cols() const { return out_h * out_w; }
  bool is_pointwise() const { return kh == 1 && kw == 1 && sh == 1 && sw == 1; }
};

ConvGeometry make_geometry(std::size_t c, std::size_t h, std::size_t w, const Conv2dSpec& spec) {
  ConvGeometry g{c, h, w, spec.kernel_h, spec.kernel_w, spec.stride_h, spec.stride_w, spec.pad_h(),
                 spec.pad_w(), 0, 0};
  expects(h % spec.stride_h == 0 && w % spec.stride_w == 0,
          "conv: spatial extent " + std::to_string(h) + "x" + std::to_string(w) +
              " not divisible by stride");
  expects(h + 2 * g.ph >= g.kh && w + 2 * g.pw >= g.kw, "conv: input smaller than kernel");
  g.out_h = (h + 2 * g.ph - g.kh) / g.sh + 1;
  g.out_w = (w + 2 * g.pw - g.kw) / g.sw + 1;
  return g;
}

inline std::size_t wrap(std::ptrdiff_t i, std::size_t n) {
  const auto m = static_cast<std::ptrdiff_t>(n);
  return static_cast<std::size_t>(((i % m) + m) % m);
}

// Output columns [lo, hi) whose tap j lands inside the unpadded width.
struct ValidRange {
  std::size_t lo, hi;
};

inline ValidRange valid_columns(const ConvGeometry& g, std::size_t j) {
  // Need 0 <= ow * sw + j - pw < width.
  const auto first = static_cast<std::ptrdiff_t>(g.pw) - static_cast<std::ptrdiff_t>(j);
  const std::size_t lo = first <= 0 ? 0 : (static_cast<std::size_t>(first) + g.sw - 1) / g.sw;
  const auto limit = static_cast<std::ptrdiff_t>(g.width + g.pw) - static_cast<std::ptrdiff_t>(j);
  const std::size_t hi =
      limit <= 0 ? 0 : std::min(g.out_w, (static_cast<std::size_t>(limit) + g.sw - 1) / g.sw);
  return {std::min(lo, hi), hi};
}

// Unfold output rows [oh0, oh1) of one sample into a
// (C*kh*kw) x ((oh1-oh0)*out_w) matrix.
template <typename T>
void im2col(const T* x, T* col, const ConvGeometry& g, std::size_t oh0, std::size_t oh1) {
  const std::size_t P = (oh1 - oh0) * g.out_w;
  for (std::size_t j = 0; j < g.kw; ++j) {
    const ValidRange v = valid_columns(g, j);
    const auto offset = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(g.pw);
    for (std::size_t c = 0; c < g.channels; ++c) {
      for (std::size_t i = 0; i < g.kh; ++i) {
        T* dst_row = col + ((c * g.kh + i) * g.kw + j) * P;
        for (std::size_t oh = oh0; oh < oh1; ++oh) {
          const std::size_t ih =
              wrap(static_cast<std::ptrdiff_t>(oh * g.sh + i) - static_cast<std::ptrdiff_t>(g.ph), g.height);
          const T* src = x + (c * g.height + ih) * g.width + offset;
          T* dst = dst_row + (oh - oh0) * g.out_w;
          std::fill(dst, dst + v.lo, T(0));
          if (g.sw == 1) {
            std::copy(src + v.lo, src + v.hi, dst + v.lo);
          } else {
            for (std::size_t ow = v.lo; ow < v.hi; ++ow) dst[ow] = src[ow * g.sw];
          }
          std::fill(dst + v.hi, dst + g.out_w, T(0));
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back into a C x H x W sample.
template <typename T>
void col2im(const T* col, T* x, const ConvGeometry& g, std::size_t oh0, std::size_t oh1) {
  const std::size_t P = (oh1 - oh0) * g.out_w;
  for (std::size_t j = 0; j < g.kw; ++j) {
    const ValidRange v = valid_columns(g, j);
    const auto offset = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(g.pw);
    for (std::size_t c = 0; c < g.channels; ++c) {
      for (std::size_t i = 0; i < g.kh; ++i) {
        const T* src_row = col + ((c * g.kh + i) * g.kw + j) * P;
        for (std::size_t oh = oh0; oh < oh1; ++oh) {
          const std::size_t ih =
              wrap(static_cast<std::ptrdiff_t>(oh * g.sh + i) - static_cast<std::ptrdiff_t>(g.ph), g.height);
          T* dst = x + (c * g.height + ih) * g.width + offset;
          const T* src = src_row + (oh - oh0) * g.out_w;
          for (std::size_t ow = v.lo; ow < v.hi; ++ow) dst[ow * g.sw] += src[ow];
        }
      }
    }
  }
}

// Output rows per band so that one unfolded band stays cache-resident.
inline std::size_t band_rows(const ConvGeometry& g, std::size_t elem_size) {
  constexpr std::size_t kBandBytes = std::size_t{1} << 21;
  const std::size_t row_bytes = g.rows() * g.out_w * elem_size;
  return std::clamp<std::size_t>(kBandBytes / std::max<std::size_t>(row_bytes, 1), 1, g.out_h);
}

template <typename T>
using ConstMapCM = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>>;
template <typename T>
using StridedCM = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>, 0, Eigen::OuterStride<>>;
template <typename T>
using StridedRM = Eigen::Map<MatRM<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedRM = Eigen::Map<const MatRM<T>, 0, Eigen::OuterStride<>>;

template <typename T>
using Row = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstRow = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;

template <typename T>
void check_nchw(const Tensor<T>& x, const char* op) {
  expects(x.rank() == 4, std::string(op) + ": expected an NCHW tensor, got " + to_string(x.shape()));
}

}  // namespace

namespace ops {

template <typename T>
Tensor<T> conv2d_circular(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                          std::size_t stride_h, std::size_t stride_w) {
  check_nchw(x, "conv2d_circular");
  expects(weight.rank() == 4, "conv2d_circular: weight must be (out, in, kh, kw)");
  const Conv2dSpec spec{weight.dim(1), weight.dim(0), weight.dim(2), weight.dim(3), stride_h, stride_w};
  spec.validate();
  expects(x.dim(1) == spec.in_channels, "conv2d_circular: input has " + std::to_string(x.dim(1)) +
                                            " channels, weight expects " +
                                            std::to_string(spec.in_channels));
  expects(bias.numel() == spec.out_channels, "conv2d_circular: bias length mismatch");

  const std::size_t n = x.dim(0);
  const ConvGeometry g = make_geometry(x.dim(1), x.dim(2), x.dim(3), spec);
  const std::size_t K = g.rows(), P = g.cols(), Cout = spec.out_channels;
  const std::size_t in_stride = g.channels * g.height * g.width;
  const std::size_t band = band_rows(g, sizeof(T));

  auto out = Tensor<T>::uninitialized(Shape{n, Cout, g.out_h, g.out_w});
  ConstMapRM<T> w(weight.ptr(), Cout, K);
  std::vector<T> col(g.is_pointwise() ? 0 : K * band * g.out_w);
  for (std::size_t s = 0; s < n; ++s) {
    const T* xs = x.ptr() + s * in_stride;
    T* ys = out.ptr() + s * Cout * P;
    if (g.is_pointwise()) {
      MapRM<T>(ys, Cout, P).noalias() = w * ConstMapRM<T>(xs, K, P);
    } else {
      for (std::size_t oh0 = 0; oh0 < g.out_h; oh0 += band) {
        const std::size_t oh1 = std::min(g.out_h, oh0 + band), cols = (oh1 - oh0) * g.out_w;
        im2col(xs, col.data(), g, oh0, oh1);
        StridedRM<T>(ys + oh0 * g.out_w, Cout, cols, Eigen::OuterStride<>(P)).noalias() =
            w * ConstMapRM<T>(col.data(), K, cols);
      }
    }
    for (std::size_t c = 0; c < Cout; ++c) {
      const T b = bias.data()[c];
      for (std::size_t i = 0; i < P; ++i) ys[c * P + i] += b;
    }
  }

  if (detail::recording({&x, &weight, &bias})) {
    detail::record<T>({x, weight, bias}, out, [x, weight, bias, out, g, n, K, P, Cout, in_stride, band]() mutable {
      auto gy_all = out.grad();
      ConstMapRM<T> w(weight.ptr(), Cout, K);
      std::vector<T> col(g.is_pointwise() ? 0 : K * band * g.out_w);
      std::vector<T> dcol(g.is_pointwise() ? 0 : K * band * g.out_w);
      T* gw = weight.requires_grad() ? weight.ensure_grad().data() : nullptr;
      T* gb = bias.requires_grad() ? bias.ensure_grad().data() : nullptr;
      T* gx = x.requires_grad() ? x.ensure_grad().data() : nullptr;
      for (std::size_t s = 0; s < n; ++s) {
        const T* gys = gy_all.data() + s * Cout * P;
        const T* xs = x.ptr() + s * in_stride;
        if (gb) {
          for (std::size_t c = 0; c < Cout; ++c) gb[c] += ConstMapRM<T>(gys, Cout, P).row(c).sum();
        }
        if (g.is_pointwise()) {
          ConstMapRM<T> gy(gys, Cout, P);
          if (gw) MapRM<T>(gw, Cout, K).noalias() += gy * ConstMapRM<T>(xs, K, P).transpose();
          if (gx) MapRM<T>(gx + s * in_stride, K, P).noalias() += w.transpose() * gy;
          continue;
        }
        for (std::size_t oh0 = 0; oh0 < g.out_h; oh0 += band) {
          const std::size_t oh1 = std::min(g.out_h, oh0 + band), cols = (oh1 - oh0) * g.out_w;
          ConstStridedRM<T> gy(gys + oh0 * g.out_w, Cout, cols, Eigen::OuterStride<>(P));
          if (gw) {
            im2col(xs, col.data(), g, oh0, oh1);
            MapRM<T>(gw, Cout, K).noalias() += gy * ConstMapRM<T>(col.data(), K, cols).transpose();
          }
          if (gx) {
            MapRM<T>(dcol.data(), K, cols).noalias() = w.transpose() * gy;
            col2im(dcol.data(), gx + s * in_stride, g, oh0, oh1);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> transposed_conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                            std::size_t stride_h, std::size_t stride_w) {
  check_nchw(x, "transposed_conv2d");
  expects(weight.rank() == 4, "transposed_conv2d: weight must be (in, out, kh, kw)");
  const std::size_t cin = weight.dim(0), cout = weight.dim(1);
  const Conv2dSpec spec{cout, cin, weight.dim(2), weight.dim(3), stride_h, stride_w};
  spec.validate();
  expects(stride_h > 1 && stride_w > 1, "transposed_conv2d: only strided (kernel == stride) layers");
  expects(x.dim(1) == cin, "transposed_conv2d: input has " + std::to_string(x.dim(1)) +
                               " channels, weight expects " + std::to_string(cin));
  expects(bias.numel() == cout, "transposed_conv2d: bias length mismatch");

  const std::size_t n = x.dim(0);
  // Geometry of the forward (strided) conv that maps the big image to x.
  const ConvGeometry g = make_geometry(cout, x.dim(2) * stride_h, x.dim(3) * stride_w, spec);
  const std::size_t K = g.rows(), P = g.cols(), HW = g.height * g.width;
  const std::size_t in_stride = cin * P;

  Tensor<T> out(Shape{n, cout, g.height, g.width});
  ConstMapRM<T> w(weight.ptr(), cin, K);
  std::vector<T> col(K * P);
  for (std::size_t s = 0; s < n; ++s) {
    ConstMapRM<T> xs(x.ptr() + s * in_stride, cin, P);
    MapRM<T>(col.data(), K, P).noalias() = w.transpose() * xs;
    T* ys = out.ptr() + s * cout * HW;
    col2im(col.data(), ys, g, 0, g.out_h);
    for (std::size_t c = 0; c < cout; ++c)
      for (std::size_t i = 0; i < HW; ++i) ys[c * HW + i] += bias.data()[c];
  }

  if (detail::recording({&x, &weight, &bias})) {
    detail::record<T>({x, weight, bias}, out, [x, weight, bias, out, g, n, K, P, HW, cin, cout, in_stride]() mutable {
      auto gy_all = out.grad();
      ConstMapRM<T> w(weight.ptr(), cin, K);
      std::vector<T> dcol(K * P);
      T* gw = weight.requires_grad() ? weight.ensure_grad().data() : nullptr;
      T* gb = bias.requires_grad() ? bias.ensure_grad().data() : nullptr;
      T* gx = x.requires_grad() ? x.ensure_grad().data() : nullptr;
      for (std::size_t s = 0; s < n; ++s) {
        const T* gys = gy_all.data() + s * cout * HW;
        im2col(gys, dcol.data(), g, 0, g.out_h);
        ConstMapRM<T> dc(dcol.data(), K, P);
        if (gw) {
          ConstMapRM<T> xs(x.ptr() + s * in_stride, cin, P);
          MapRM<T>(gw, cin, K).noalias() += xs * dc.transpose();
        }
        if (gx) MapRM<T>(gx + s * in_stride, cin, P).noalias() += w * dc;
        if (gb) {
          for (std::size_t c = 0; c < cout; ++c) {
            T acc = 0;
            for (std::size_t i = 0; i < HW; ++i) acc += gys[c * HW + i];
            gb[c] += acc;
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, Mode mode, T momentum, T eps) {
  check_nchw(x, "batch_norm");
  const std::size_t n = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  expects(gamma.numel() == C && beta.numel() == C && running_mean.numel() == C &&
              running_var.numel() == C,
          "batch_norm: per-channel parameter length mismatch");
  const std::size_t M = n * HW;
  if (mode == Mode::Train)
    expects(M >= 2, "batch_norm: train mode needs at least two values per channel (batch*H*W >= 2)");

  std::vector<T> mean(C), invstd(C);
  const T* xp = x.ptr();
  if (mode == Mode::Train) {
    for (std::size_t c = 0; c < C; ++c) {
      // Per-row vectorized sums, combined across rows in double.
      double acc = 0;
      for (std::size_t s = 0; s < n; ++s) acc += ConstRow<T>(xp + (s * C + c) * HW, HW).sum();
      const double mu = acc / static_cast<double>(M);
      double sq = 0;
      for (std::size_t s = 0; s < n; ++s)
        sq += (ConstRow<T>(xp + (s * C + c) * HW, HW) - static_cast<T>(mu)).square().sum();
      const double var = sq / static_cast<double>(M);
      mean[c] = static_cast<T>(mu);
      invstd[c] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      auto rm = running_mean.data();
      auto rv = running_var.data();
      rm[c] = (T(1) - momentum) * rm[c] + momentum * static_cast<T>(mu);
      rv[c] = (T(1) - momentum) * rv[c] +
              momentum * static_cast<T>(sq / static_cast<double>(M - 1));
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = running_mean.data()[c];
      invstd[c] = T(1) / std::sqrt(running_var.data()[c] + eps);
    }
  }

  Tensor<T> out = Tensor<T>::uninitialized(x.shape());
  T* op = out.ptr();
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t c = 0; c < C; ++c) {
      const T a = gamma.data()[c] * invstd[c];
      const T b = beta.data()[c] - mean[c] * a;
      const std::size_t base = (s * C + c) * HW;
      Row<T>(op + base, HW) = ConstRow<T>(xp + base, HW) * a + b;
    }
  }

  if (detail::recording({&x, &gamma, &beta})) {
    detail::record<T>({x, gamma, beta}, out,
                      [x, gamma, beta, out, mean, invstd, n, C, HW, M, mode]() mutable {
      auto gy = out.grad();
      const T* xp = x.ptr();
      T* gg = gamma.requires_grad() ? gamma.ensure_grad().data() : nullptr;
      T* gb = beta.requires_grad() ? beta.ensure_grad().data() : nullptr;
      T* gx = x.requires_grad() ? x.ensure_grad().data() : nullptr;
      for (std::size_t c = 0; c < C; ++c) {
        double sum_dy = 0, sum_dy_xc = 0;
        for (std::size_t s = 0; s < n; ++s) {
          const std::size_t base = (s * C + c) * HW;
          ConstRow<T> g(gy.data() + base, HW);
          sum_dy += g.sum();
          sum_dy_xc += (g * (ConstRow<T>(xp + base, HW) - mean[c])).sum();
        }
        const double sum_dy_xhat = sum_dy_xc * invstd[c];
        if (gg) gg[c] += static_cast<T>(sum_dy_xhat);
        if (gb) gb[c] += static_cast<T>(sum_dy);
        if (!gx) continue;
        const double scale = static_cast<double>(gamma.data()[c]) * invstd[c];
        // Train: gx += scale * (gy - mean(gy) - xhat * mean(gy * xhat)), expanded
        // to an affine map of (gy, x).
        T ka = static_cast<T>(scale), kx = 0, k0 = 0;
        if (mode == Mode::Train) {
          const double m = static_cast<double>(M);
          kx = static_cast<T>(-scale * invstd[c] * sum_dy_xhat / m);
          k0 = static_cast<T>(-scale * sum_dy / m + scale * invstd[c] * mean[c] * sum_dy_xhat / m);
        }
        for (std::size_t s = 0; s < n; ++s) {
          const std::size_t base = (s * C + c) * HW;
          Row<T>(gx + base, HW) += ConstRow<T>(gy.data() + base, HW) * ka + ConstRow<T>(xp + base, HW) * kx + k0;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> gem_pool(const Tensor<T>& x, const Tensor<T>& p, T eps) {
  check_nchw(x, "gem_pool");
  expects(p.numel() == 1, "gem_pool: p must be a single value");
  const double pv = p.item();
  expects(pv > 0, "gem_pool: p must be positive");
  const std::size_t n = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);

  // Cached per (sample, channel): m = mean(xc^p) and sum(xc^p * ln xc) / HW.
  std::vector<double> pow_mean(n * C), pow_log_mean(n * C);
  Tensor<T> out(Shape{n, C});
  for (std::size_t k = 0; k < n * C; ++k) {
    const T* row = x.ptr() + k * HW;
    double acc = 0, acc_log = 0;
    for (std::size_t i = 0; i < HW; ++i) {
      const double v = std::max<double>(row[i], eps);
      const double vp = std::pow(v, pv);
      acc += vp;
      acc_log += vp * std::log(v);
    }
    pow_mean[k] = acc / static_cast<double>(HW);
    pow_log_mean[k] = acc_log / static_cast<double>(HW);
    out.data()[k] = static_cast<T>(std::pow(pow_mean[k], 1.0 / pv));
  }

  if (detail::recording({&x, &p})) {
    detail::record<T>({x, p}, out, [x, p, out, pow_mean, pow_log_mean, pv, eps, n, C, HW]() mutable {
      auto gy = out.grad();
      T* gx = x.requires_grad() ? x.ensure_grad().data() : nullptr;
      double gp = 0;
      for (std::size_t k = 0; k < n * C; ++k) {
        const double o = out.data()[k];
        const double m = pow_mean[k];
        if (p.requires_grad()) gp += gy[k] * o * (pow_log_mean[k] / (pv * m) - std::log(m) / (pv * pv));
        if (!gx) continue;
        const double coeff = gy[k] * o / (m * static_cast<double>(HW));
        const T* row = x.ptr() + k * HW;
        for (std::size_t i = 0; i < HW; ++i)
          if (row[i] > eps) gx[k * HW + i] += static_cast<T>(coeff * std::pow(static_cast<double>(row[i]), pv - 1.0));
      }
      if (p.requires_grad()) p.ensure_grad()[0] += static_cast<T>(gp);
    });
  }
  return out;
}

template <typename T>
Tensor<T> eca(const Tensor<T>& x, const Tensor<T>& weight) {
  check_nchw(x, "eca");
  const std::size_t k = weight.numel();
  expects(k % 2 == 1, "eca: kernel size must be odd");
  const std::size_t n = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(k / 2);
  const T* w = weight.ptr();

  std::vector<T> pooled(n * C), gate(n * C);
  for (std::size_t i = 0; i < n * C; ++i) {
    pooled[i] = ConstRow<T>(x.ptr() + i * HW, HW).sum() / static_cast<T>(HW);
  }
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t c = 0; c < C; ++c) {
      T z = 0;
      for (std::size_t j = 0; j < k; ++j)
        z += w[j] * pooled[s * C + wrap(static_cast<std::ptrdiff_t>(c + j) - r, C)];
      gate[s * C + c] = T(1) / (T(1) + std::exp(-z));
    }
  }

  auto out = Tensor<T>::uninitialized(x.shape());
  for (std::size_t i = 0; i < n * C; ++i)
    Row<T>(out.ptr() + i * HW, HW) = ConstRow<T>(x.ptr() + i * HW, HW) * gate[i];

  if (detail::recording({&x, &weight})) {
    detail::record<T>({x, weight}, out, [x, weight, out, pooled, gate, n, C, HW, k, r]() mutable {
      auto gy = out.grad();
      const T* w = weight.ptr();
      std::vector<T> dz(n * C), dpooled(n * C, T(0));
      for (std::size_t i = 0; i < n * C; ++i) {
        const T dg = (ConstRow<T>(gy.data() + i * HW, HW) * ConstRow<T>(x.ptr() + i * HW, HW)).sum();
        dz[i] = dg * gate[i] * (T(1) - gate[i]);
      }
      T* gw = weight.requires_grad() ? weight.ensure_grad().data() : nullptr;
      for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t j = 0; j < k; ++j) {
            const std::size_t src = s * C + wrap(static_cast<std::ptrdiff_t>(c + j) - r, C);
            if (gw) gw[j] += dz[s * C + c] * pooled[src];
            dpooled[src] += dz[s * C + c] * w[j];
          }
        }
      }
      if (!x.requires_grad()) return;
      auto gx = x.ensure_grad();
      for (std::size_t i = 0; i < n * C; ++i) {
        const T spread = dpooled[i] / static_cast<T>(HW);
        Row<T>(gx.data() + i * HW, HW) += ConstRow<T>(gy.data() + i * HW, HW) * gate[i] + spread;
      }
    });
  }
  return out;
}

}  // namespace ops

namespace {
template <typename T>
Tensor<T> kaiming_normal(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}
}  // namespace

template <typename T>
Conv2d<T>::Conv2d(const Conv2dSpec& spec, std::mt19937_64& rng) : spec_(spec) {
  spec.validate();
  weight = kaiming_normal<T>({spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w},
                             spec.in_channels * spec.kernel_h * spec.kernel_w, rng);
  bias = Tensor<T>(Shape{spec.out_channels});
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) const {
  return ops::conv2d_circular(x, weight, bias, spec_.stride_h, spec_.stride_w);
}

template <typename T>
void Conv2d<T>::register_parameters(ParameterStore<T>& params, const std::string& prefix) {
  params.add(prefix + ".weight", weight).set_requires_grad(true);
  params.add(prefix + ".bias", bias).set_requires_grad(true);
}

template <typename T>
TransposedConv2d<T>::TransposedConv2d(const Conv2dSpec& spec, std::mt19937_64& rng) : spec_(spec) {
  spec.validate();
  weight = kaiming_normal<T>({spec.in_channels, spec.out_channels, spec.kernel_h, spec.kernel_w},
                             spec.in_channels, rng);
  bias = Tensor<T>(Shape{spec.out_channels});
}

template <typename T>
Tensor<T> TransposedConv2d<T>::forward(const Tensor<T>& x) const {
  return ops::transposed_conv2d(x, weight, bias, spec_.stride_h, spec_.stride_w);
}

template <typename T>
void TransposedConv2d<T>::register_parameters(ParameterStore<T>& params, const std::string& prefix) {
  params.add(prefix + ".weight", weight).set_requires_grad(true);
  params.add(prefix + ".bias", bias).set_requires_grad(true);
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::size_t channels, T momentum, T eps)
    : gamma(Shape{channels}, T(1)),
      beta(Shape{channels}, T(0)),
      running_mean(Shape{channels}, T(0)),
      running_var(Shape{channels}, T(1)),
      momentum_(momentum),
      eps_(eps) {}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x, Mode mode) {
  return ops::batch_norm(x, gamma, beta, running_mean, running_var, mode, momentum_, eps_);
}

template <typename T>
void BatchNorm2d<T>::register_parameters(ParameterStore<T>& params, ParameterStore<T>& buffers,
                                         const std::string& prefix) {
  params.add(prefix + ".gamma", gamma).set_requires_grad(true);
  params.add(prefix + ".beta", beta).set_requires_grad(true);
  buffers.add(prefix + ".running_mean", running_mean);
  buffers.add(prefix + ".running_var", running_var);
}

template <typename T>
Eca<T>::Eca(const EcaSpec& spec, std::mt19937_64& rng) {
  expects(spec.kernel_size % 2 == 1, "eca: kernel size must be odd");
  const double bound = 1.0 / std::sqrt(static_cast<double>(spec.kernel_size));
  std::uniform_real_distribution<double> dist(-bound, bound);
  weight = Tensor<T>(Shape{spec.kernel_size});
  for (auto& v : weight.data()) v = static_cast<T>(dist(rng));
}

template <typename T>
void Eca<T>::register_parameters(ParameterStore<T>& params, const std::string& prefix) {
  params.add(prefix + ".weight", weight).set_requires_grad(true);
}

template <typename T>
Gem<T>::Gem(const GemSpec& spec) : p(Tensor<T>::scalar(static_cast<T>(spec.initial_p))), spec_(spec) {
  expects(spec.initial_p > 0 && spec.eps > 0, "gem: p and eps must be positive");
}

template <typename T>
void Gem<T>::register_parameters(ParameterStore<T>& params, const std::string& prefix) {
  params.add(prefix + ".p", p).set_requires_grad(true);
}

template <typename T>
void Gem<T>::clamp_p() {
  auto v = p.data();
  v[0] = std::max(v[0], static_cast<T>(spec_.min_p));
}

#define PLOC_INSTANTIATE(T)                                                                      \
  template Tensor<T> ops::conv2d_circular<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                             std::size_t, std::size_t);                          \
  template Tensor<T> ops::transposed_conv2d<T>(const Tensor<T>&, const Tensor<T>&,               \
                                               const Tensor<T>&, std::size_t, std::size_t);      \
  template Tensor<T> ops::batch_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                        Tensor<T>&, Tensor<T>&, Mode, T, T);                     \
  template Tensor<T> ops::gem_pool<T>(const Tensor<T>&, const Tensor<T>&, T);                    \
  template Tensor<T> ops::eca<T>(const Tensor<T>&, const Tensor<T>&);                            \
  template class Conv2d<T>;                                                                      \
  template class TransposedConv2d<T>;                                                            \
  template class BatchNorm2d<T>;                                                                 \
  template class Eca<T>;                                                                         \
  template class Gem<T>;

PLOC_INSTANTIATE(float)
PLOC_INSTANTIATE(double)
#undef PLOC_INSTANTIATE

}  // namespace ploc
