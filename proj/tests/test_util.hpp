#pragma once

#include <random>
#include <string>
#include <vector>

#include "polarloc/data.hpp"
#include "polarloc/tensor.hpp"

namespace testutil {

inline std::mt19937_64 rng(std::uint64_t seed) { return std::mt19937_64(seed); }

template <typename T>
ploc::Tensor<T> random_tensor(ploc::Shape shape, std::mt19937_64& g, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  ploc::Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(u(g));
  return t;
}

inline ploc::PolarScan random_scan(std::size_t a, std::size_t r, std::mt19937_64& g, std::string id = "s") {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  ploc::PolarScan s{std::move(id), 0.0, a, r, std::vector<float>(a * r)};
  for (auto& v : s.image) v = u(g);
  return s;
}

// Direct 4-loop circular convolution: wrap on H, zero pad on W.
template <typename T>
std::vector<double> direct_conv(const ploc::Tensor<T>& x, const ploc::Tensor<T>& w, const ploc::Tensor<T>& b,
                                std::size_t sh, std::size_t sw, std::size_t& oh, std::size_t& ow) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  const std::ptrdiff_t ph = sh == 1 ? std::ptrdiff_t(KH - 1) / 2 : 0;
  const std::ptrdiff_t pw = sw == 1 ? std::ptrdiff_t(KW - 1) / 2 : 0;
  oh = sh == 1 ? H : H / sh;
  ow = sw == 1 ? W : W / sw;
  std::vector<double> y(N * O * oh * ow);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = b.data()[o];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ki = 0; ki < KH; ++ki)
              for (std::size_t kj = 0; kj < KW; ++kj) {
                const std::ptrdiff_t hi = std::ptrdiff_t(i * sh + ki) - ph;
                const std::ptrdiff_t wj = std::ptrdiff_t(j * sw + kj) - pw;
                if (wj < 0 || wj >= std::ptrdiff_t(W)) continue;
                const std::size_t hh = std::size_t((hi % std::ptrdiff_t(H) + std::ptrdiff_t(H)) % std::ptrdiff_t(H));
                acc += double(x.data()[((n * C + c) * H + hh) * W + std::size_t(wj)]) *
                       double(w.data()[((o * C + c) * KH + ki) * KW + kj]);
              }
          y[((n * O + o) * oh + i) * ow + j] = acc;
        }
  return y;
}

}  // namespace testutil
