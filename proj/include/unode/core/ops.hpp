#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "unode/core/tensor.hpp"

namespace unode {

// Differentiable tensor operations. Reductions accumulate in double regardless of T.

namespace kernels {

/// C[n x m] = A[n x k] * B[k x m]
template <class T>
std::vector<T> gemm_nn(std::span<const T> a, std::span<const T> b, std::size_t n, std::size_t k,
                       std::size_t m) {
  std::vector<T> c(n * m);
  std::vector<double> acc(m);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t r = 0; r < k; ++r) {
      const double av = a[i * k + r];
      if (av == 0.0) continue;
      const T* brow = b.data() + r * m;
      for (std::size_t j = 0; j < m; ++j) acc[j] += av * brow[j];
    }
    for (std::size_t j = 0; j < m; ++j) c[i * m + j] = static_cast<T>(acc[j]);
  }
  return c;
}

/// C[n x m] = A[n x k] * B[m x k]^T
template <class T>
std::vector<T> gemm_nt(std::span<const T> a, std::span<const T> b, std::size_t n, std::size_t k,
                       std::size_t m) {
  std::vector<T> c(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    const T* arow = a.data() + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const T* brow = b.data() + j * k;
      double acc = 0.0;
      for (std::size_t r = 0; r < k; ++r) acc += static_cast<double>(arow[r]) * brow[r];
      c[i * m + j] = static_cast<T>(acc);
    }
  }
  return c;
}

/// C[n x m] = A[k x n]^T * B[k x m]
template <class T>
std::vector<T> gemm_tn(std::span<const T> a, std::span<const T> b, std::size_t k, std::size_t n,
                       std::size_t m) {
  std::vector<double> acc(n * m, 0.0);
  for (std::size_t r = 0; r < k; ++r) {
    const T* arow = a.data() + r * n;
    const T* brow = b.data() + r * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = acc.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  return std::vector<T>(acc.begin(), acc.end());
}

template <class T>
void add_into(std::span<T> dst, std::span<const T> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace kernels

namespace detail {

inline void check_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) fail_usage(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

inline void check_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    fail_usage(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(s));
  }
}

template <class T>
std::span<const T> parent_data(detail::Node<T>& self, std::size_t i) {
  return self.parents[i]->data;
}

}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a.shape(), b.shape(), "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) kernels::add_into<T>(p->grad_buffer(), self.grad);
    }
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a.shape(), b.shape(), "sub");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) kernels::add_into<T>(pa->grad_buffer(), self.grad);
    if (pb->requires_grad) {
      auto g = pb->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a.shape(), b.shape(), "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) {
      auto g = pa->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->data[i];
    }
    if (pb->requires_grad) {
      auto g = pb->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->data[i];
    }
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return Tensor<T>::make_result(a.shape(), std::move(out), {a}, [factor](detail::Node<T>& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  double acc = 0.0;
  for (T v : a.data()) acc += v;
  return Tensor<T>::make_result({}, {static_cast<T>(acc)}, {a}, [](detail::Node<T>& self) {
    auto g = self.parents[0]->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), static_cast<T>(1.0 / static_cast<double>(a.numel())));
}

template <class T>
Tensor<T> exp(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.data()[i]);
  return Tensor<T>::make_result(a.shape(), std::move(out), {a}, [](detail::Node<T>& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * self.data[i];
  });
}

template <class T>
Tensor<T> log(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(a.data()[i]);
  return Tensor<T>::make_result(a.shape(), std::move(out), {a}, [](detail::Node<T>& self) {
    auto& p = self.parents[0];
    auto g = p->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / p->data[i];
  });
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > T{0} ? a.data()[i] : T{0};
  return Tensor<T>::make_result(a.shape(), std::move(out), {a}, [](detail::Node<T>& self) {
    auto& p = self.parents[0];
    auto g = p->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (p->data[i] > T{0}) g[i] += self.grad[i];
    }
  });
}

/// a[n x k] * b[k x m]
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_rank(a.shape(), 2, "matmul");
  detail::check_rank(b.shape(), 2, "matmul");
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  if (b.dim(0) != k) fail_usage("matmul: inner dims " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  auto out = kernels::gemm_nn<T>(a.data(), b.data(), n, k, m);
  return Tensor<T>::make_result({n, m}, std::move(out), {a, b}, [n, k, m](detail::Node<T>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) {
      auto da = kernels::gemm_nt<T>(self.grad, pb->data, n, m, k);
      kernels::add_into<T>(pa->grad_buffer(), da);
    }
    if (pb->requires_grad) {
      auto db = kernels::gemm_tn<T>(pa->data, self.grad, n, k, m);
      kernels::add_into<T>(pb->grad_buffer(), db);
    }
  });
}

/// a[n x k] * b[m x k]^T; pairwise inner products of rows.
template <class T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_rank(a.shape(), 2, "matmul_nt");
  detail::check_rank(b.shape(), 2, "matmul_nt");
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(0);
  if (b.dim(1) != k) fail_usage("matmul_nt: inner dims " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  auto out = kernels::gemm_nt<T>(a.data(), b.data(), n, k, m);
  return Tensor<T>::make_result({n, m}, std::move(out), {a, b}, [n, k, m](detail::Node<T>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) {
      auto da = kernels::gemm_nn<T>(self.grad, pb->data, n, m, k);
      kernels::add_into<T>(pa->grad_buffer(), da);
    }
    if (pb->requires_grad) {
      auto db = kernels::gemm_tn<T>(self.grad, pa->data, n, m, k);
      kernels::add_into<T>(pb->grad_buffer(), db);
    }
  });
}

/// a[n x m] + bias[m] broadcast over rows.
template <class T>
Tensor<T> add_rowvec(const Tensor<T>& a, const Tensor<T>& bias) {
  detail::check_rank(a.shape(), 2, "add_rowvec");
  const std::size_t n = a.dim(0), m = a.dim(1);
  if (bias.numel() != m) fail_usage("add_rowvec: bias length mismatch");
  std::vector<T> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] += bias.data()[j];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, bias}, [n, m](detail::Node<T>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) kernels::add_into<T>(pa->grad_buffer(), self.grad);
    if (pb->requires_grad) {
      auto g = pb->grad_buffer();
      for (std::size_t j = 0; j < m; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += self.grad[i * m + j];
        g[j] += static_cast<T>(acc);
      }
    }
  });
}

template <class T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
  detail::check_rank(a.shape(), 2, "softmax_rows");
  const std::size_t n = a.dim(0), m = a.dim(1);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = a.data().data() + i * m;
    const double mx = *std::max_element(row, row + m);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = static_cast<T>(std::exp(row[j] - mx) / z);
  }
  return Tensor<T>::make_result(a.shape(), std::move(out), {a}, [n, m](detail::Node<T>& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += static_cast<double>(self.grad[i * m + j]) * self.data[i * m + j];
      for (std::size_t j = 0; j < m; ++j) {
        g[i * m + j] += static_cast<T>(self.data[i * m + j] * (self.grad[i * m + j] - dot));
      }
    }
  });
}

template <class T>
Tensor<T> log_softmax_rows(const Tensor<T>& a) {
  detail::check_rank(a.shape(), 2, "log_softmax_rows");
  const std::size_t n = a.dim(0), m = a.dim(1);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = a.data().data() + i * m;
    const double mx = *std::max_element(row, row + m);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = static_cast<T>(row[j] - lse);
  }
  return Tensor<T>::make_result(a.shape(), std::move(out), {a}, [n, m](detail::Node<T>& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < n; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < m; ++j) gsum += self.grad[i * m + j];
      for (std::size_t j = 0; j < m; ++j) {
        g[i * m + j] += static_cast<T>(self.grad[i * m + j] - std::exp(static_cast<double>(self.data[i * m + j])) * gsum);
      }
    }
  });
}

/// L2 norm of each row, shape [n].
template <class T>
Tensor<T> row_norms(const Tensor<T>& a) {
  detail::check_rank(a.shape(), 2, "row_norms");
  const std::size_t n = a.dim(0), m = a.dim(1);
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < m; ++j) ss += static_cast<double>(a.data()[i * m + j]) * a.data()[i * m + j];
    out[i] = static_cast<T>(std::sqrt(ss));
  }
  return Tensor<T>::make_result({n}, std::move(out), {a}, [n, m](detail::Node<T>& self) {
    auto& p = self.parents[0];
    auto g = p->grad_buffer();
    for (std::size_t i = 0; i < n; ++i) {
      if (self.data[i] == T{0}) continue;
      for (std::size_t j = 0; j < m; ++j) g[i * m + j] += self.grad[i] * p->data[i * m + j] / self.data[i];
    }
  });
}

/// Divides each row by (its L2 norm + floor); a zero row maps to zero.
template <class T>
Tensor<T> l2_normalize_rows(const Tensor<T>& a, double floor = 1e-12) {
  detail::check_rank(a.shape(), 2, "l2_normalize_rows");
  const std::size_t n = a.dim(0), m = a.dim(1);
  std::vector<double> norms(n);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < n; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < m; ++j) ss += static_cast<double>(a.data()[i * m + j]) * a.data()[i * m + j];
    norms[i] = std::sqrt(ss);
    const double denom = norms[i] + floor;
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = static_cast<T>(a.data()[i * m + j] / denom);
  }
  return Tensor<T>::make_result(
      a.shape(), std::move(out), {a}, [n, m, floor, norms = std::move(norms)](detail::Node<T>& self) {
        auto& p = self.parents[0];
        auto g = p->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
          const double denom = norms[i] + floor;
          double gx = 0.0;
          for (std::size_t j = 0; j < m; ++j) gx += static_cast<double>(self.grad[i * m + j]) * p->data[i * m + j];
          const double coef = norms[i] > 0.0 ? gx / (denom * denom * norms[i]) : 0.0;
          for (std::size_t j = 0; j < m; ++j) {
            g[i * m + j] += static_cast<T>(self.grad[i * m + j] / denom - coef * p->data[i * m + j]);
          }
        }
      });
}

/// Rows [begin, end) of a rank-2 tensor.
template <class T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t end) {
  detail::check_rank(a.shape(), 2, "slice_rows");
  const std::size_t m = a.dim(1);
  if (begin > end || end > a.dim(0)) fail_usage("slice_rows: range out of bounds");
  std::vector<T> out(a.data().begin() + begin * m, a.data().begin() + end * m);
  return Tensor<T>::make_result({end - begin, m}, std::move(out), {a}, [begin, m](detail::Node<T>& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * m + i] += self.grad[i];
  });
}

/// Stacks tensors along axis 0; trailing dims must agree.
template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) fail_usage("concat_rows: no inputs");
  Shape shape = parts.front().shape();
  if (shape.empty()) fail_usage("concat_rows: scalar input");
  std::size_t rows = 0;
  std::vector<T> out;
  for (const auto& p : parts) {
    if (p.rank() != shape.size() || !std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1)) {
      fail_usage("concat_rows: trailing shape mismatch");
    }
    rows += p.dim(0);
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  shape[0] = rows;
  return Tensor<T>::make_result(std::move(shape), std::move(out), parts, [](detail::Node<T>& self) {
    std::size_t offset = 0;
    for (auto& p : self.parents) {
      if (p->requires_grad) {
        auto g = p->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[offset + i];
      }
      offset += p->data.size();
    }
  });
}

/// Reinterprets storage with a new shape of equal element count.
template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) fail_usage("reshape: element count mismatch");
  std::vector<T> out(a.data().begin(), a.data().end());
  return Tensor<T>::make_result(std::move(shape), std::move(out), {a}, [](detail::Node<T>& self) {
    kernels::add_into<T>(self.parents[0]->grad_buffer(), self.grad);
  });
}

struct Conv2dGeometry {
  std::size_t batch, in_ch, height, width, out_ch, kernel, stride, pad, out_h, out_w;
};

/// NCHW convolution with square kernels. `bias` may be an undefined tensor.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t stride,
                 std::size_t pad) {
  detail::check_rank(x.shape(), 4, "conv2d");
  detail::check_rank(weight.shape(), 4, "conv2d");
  Conv2dGeometry g{};
  g.batch = x.dim(0);
  g.in_ch = x.dim(1);
  g.height = x.dim(2);
  g.width = x.dim(3);
  g.out_ch = weight.dim(0);
  g.kernel = weight.dim(2);
  g.stride = stride;
  g.pad = pad;
  if (weight.dim(1) != g.in_ch || weight.dim(3) != g.kernel) fail_usage("conv2d: weight shape mismatch");
  if (stride == 0 || g.height + 2 * pad < g.kernel || g.width + 2 * pad < g.kernel) {
    fail_usage("conv2d: input too small for kernel");
  }
  g.out_h = (g.height + 2 * pad - g.kernel) / stride + 1;
  g.out_w = (g.width + 2 * pad - g.kernel) / stride + 1;
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != g.out_ch) fail_usage("conv2d: bias length mismatch");

  const std::size_t ckk = g.in_ch * g.kernel * g.kernel;
  const std::size_t spatial = g.out_h * g.out_w;
  std::vector<T> cols(g.batch * ckk * spatial, T{0});
  for (std::size_t n = 0; n < g.batch; ++n) {
    T* col = cols.data() + n * ckk * spatial;
    for (std::size_t c = 0; c < g.in_ch; ++c) {
      const T* img = x.data().data() + (n * g.in_ch + c) * g.height * g.width;
      for (std::size_t ky = 0; ky < g.kernel; ++ky) {
        for (std::size_t kx = 0; kx < g.kernel; ++kx) {
          T* dst = col + ((c * g.kernel + ky) * g.kernel + kx) * spatial;
          for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
              dst[oy * g.out_w + ox] = img[iy * g.width + ix];
            }
          }
        }
      }
    }
  }

  std::vector<T> out(g.batch * g.out_ch * spatial);
  for (std::size_t n = 0; n < g.batch; ++n) {
    auto y = kernels::gemm_nn<T>(weight.data(), std::span<const T>(cols.data() + n * ckk * spatial, ckk * spatial),
                                 g.out_ch, ckk, spatial);
    for (std::size_t o = 0; o < g.out_ch; ++o) {
      const T b = has_bias ? bias.data()[o] : T{0};
      for (std::size_t s = 0; s < spatial; ++s) out[(n * g.out_ch + o) * spatial + s] = y[o * spatial + s] + b;
    }
  }

  std::vector<Tensor<T>> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  return Tensor<T>::make_result(
      {g.batch, g.out_ch, g.out_h, g.out_w}, std::move(out), parents,
      [g, ckk, spatial, has_bias, cols = std::move(cols)](detail::Node<T>& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        for (std::size_t n = 0; n < g.batch; ++n) {
          std::span<const T> dy(self.grad.data() + n * g.out_ch * spatial, g.out_ch * spatial);
          std::span<const T> col(cols.data() + n * ckk * spatial, ckk * spatial);
          if (pw->requires_grad) {
            auto dw = kernels::gemm_nt<T>(dy, col, g.out_ch, spatial, ckk);
            kernels::add_into<T>(pw->grad_buffer(), dw);
          }
          if (px->requires_grad) {
            auto dcol = kernels::gemm_tn<T>(pw->data, dy, g.out_ch, ckk, spatial);
            auto dx = px->grad_buffer();
            for (std::size_t c = 0; c < g.in_ch; ++c) {
              T* dimg = dx.data() + (n * g.in_ch + c) * g.height * g.width;
              for (std::size_t ky = 0; ky < g.kernel; ++ky) {
                for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                  const T* src = dcol.data() + ((c * g.kernel + ky) * g.kernel + kx) * spatial;
                  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const std::ptrdiff_t iy =
                        static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                      const std::ptrdiff_t ix =
                          static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
                      if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
                      dimg[iy * g.width + ix] += src[oy * g.out_w + ox];
                    }
                  }
                }
              }
            }
          }
        }
        if (has_bias) {
          auto& pb = self.parents[2];
          if (pb->requires_grad) {
            auto gb = pb->grad_buffer();
            for (std::size_t o = 0; o < g.out_ch; ++o) {
              double acc = 0.0;
              for (std::size_t n = 0; n < g.batch; ++n)
                for (std::size_t s = 0; s < spatial; ++s) acc += self.grad[(n * g.out_ch + o) * spatial + s];
              gb[o] += static_cast<T>(acc);
            }
          }
        }
      });
}

/// [N, C, H, W] -> [N, C]
template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  detail::check_rank(x.shape(), 4, "global_avg_pool");
  const std::size_t nc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<T> out(nc);
  for (std::size_t i = 0; i < nc; ++i) {
    double acc = 0.0;
    for (std::size_t s = 0; s < hw; ++s) acc += x.data()[i * hw + s];
    out[i] = static_cast<T>(acc / static_cast<double>(hw));
  }
  return Tensor<T>::make_result({x.dim(0), x.dim(1)}, std::move(out), {x}, [nc, hw](detail::Node<T>& self) {
    auto g = self.parents[0]->grad_buffer();
    const T inv = static_cast<T>(1.0 / static_cast<double>(hw));
    for (std::size_t i = 0; i < nc; ++i)
      for (std::size_t s = 0; s < hw; ++s) g[i * hw + s] += self.grad[i] * inv;
  });
}

/// Summed InfoNCE-style objective over the rows of a similarity matrix:
///   scale * sum_r  -(1/|P_r|) * log( sum_{c in P_r} e^{s_rc/tau} / sum_{c in V_r} e^{s_rc/tau} )
/// where P_r (positives) must be a nonempty subset of V_r (valid entries).
template <class T>
Tensor<T> masked_nce(const Tensor<T>& sims, std::span<const std::uint8_t> positive,
                     std::span<const std::uint8_t> valid, double tau, double scale_by) {
  detail::check_rank(sims.shape(), 2, "masked_nce");
  const std::size_t rows = sims.dim(0), cols = sims.dim(1);
  if (positive.size() != rows * cols || valid.size() != rows * cols) fail_usage("masked_nce: mask size mismatch");
  if (!(tau > 0.0)) fail_usage("masked_nce: temperature must be positive");
  // Per-entry d(loss)/d(sim), computed alongside the forward value.
  std::vector<double> dsim(rows * cols, 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* s = sims.data().data() + r * cols;
    double mx = -std::numeric_limits<double>::infinity();
    std::size_t npos = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t idx = r * cols + c;
      if (positive[idx] && !valid[idx]) fail_usage("masked_nce: positive entry outside valid set");
      if (valid[idx]) mx = std::max(mx, s[c] / tau);
      if (positive[idx]) ++npos;
    }
    if (npos == 0) fail_usage("masked_nce: row without positives");
    double zp = 0.0, zv = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t idx = r * cols + c;
      if (!valid[idx]) continue;
      const double e = std::exp(s[c] / tau - mx);
      zv += e;
      if (positive[idx]) zp += e;
    }
    const double inv_p = 1.0 / static_cast<double>(npos);
    total += -inv_p * (std::log(zp) - std::log(zv));
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t idx = r * cols + c;
      if (!valid[idx]) continue;
      const double e = std::exp(s[c] / tau - mx);
      const double sp = positive[idx] ? e / zp : 0.0;
      dsim[idx] = -inv_p / tau * (sp - e / zv) * scale_by;
    }
  }
  return Tensor<T>::make_result({}, {static_cast<T>(total * scale_by)}, {sims},
                                [dsim = std::move(dsim)](detail::Node<T>& self) {
                                  auto g = self.parents[0]->grad_buffer();
                                  const double up = self.grad[0];
                                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += static_cast<T>(up * dsim[i]);
                                });
}

/// scale * sum_n sum_c -targets[n,c] * log_softmax(logits)[n,c]; targets are probability rows.
template <class T>
Tensor<T> soft_cross_entropy(const Tensor<T>& logits, std::span<const double> targets, double scale_by) {
  detail::check_rank(logits.shape(), 2, "soft_cross_entropy");
  const std::size_t n = logits.dim(0), m = logits.dim(1);
  if (targets.size() != n * m) fail_usage("soft_cross_entropy: target size mismatch");
  std::vector<double> dlogit(n * m);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.data().data() + i * m;
    const double mx = *std::max_element(row, row + m);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    double tsum = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      total -= targets[i * m + j] * (row[j] - lse);
      tsum += targets[i * m + j];
    }
    for (std::size_t j = 0; j < m; ++j) {
      dlogit[i * m + j] = scale_by * (std::exp(row[j] - lse) * tsum - targets[i * m + j]);
    }
  }
  return Tensor<T>::make_result({}, {static_cast<T>(total * scale_by)}, {logits},
                                [dlogit = std::move(dlogit)](detail::Node<T>& self) {
                                  auto g = self.parents[0]->grad_buffer();
                                  const double up = self.grad[0];
                                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += static_cast<T>(up * dlogit[i]);
                                });
}

}  // namespace unode
