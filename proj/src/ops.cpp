// peftlab/ops.cpp

// Copyright 2026  The peftlab Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "peftlab/tensor.hpp"

namespace peftlab {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void require_same_shape(const Tensor &a, const Tensor &b, const char *op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()));
  }
}

void require_rank2(const Tensor &x, const char *op) {
  if (x.rank() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected rank-2 tensor, got " +
                                shape_to_string(x.shape()));
  }
}

bool needs(const detail::Node *n) { return n->requires_grad; }

}  // namespace

Tensor add(const Tensor &a, const Tensor &b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  const auto &av = a.values(), &bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return Tensor::make_op(a.shape(), std::move(out), {a, b},
                         [](detail::Node &self) {
                           for (int p = 0; p < 2; ++p) {
                             detail::Node *n = self.parents[p].get();
                             if (!needs(n)) continue;
                             for (std::size_t i = 0; i < self.size(); ++i)
                               n->adjoint[i] += self.adjoint[i];
                           }
                         });
}

Tensor sub(const Tensor &a, const Tensor &b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  const auto &av = a.values(), &bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return Tensor::make_op(a.shape(), std::move(out), {a, b},
                         [](detail::Node &self) {
                           detail::Node *an = self.parents[0].get();
                           detail::Node *bn = self.parents[1].get();
                           if (needs(an))
                             for (std::size_t i = 0; i < self.size(); ++i)
                               an->adjoint[i] += self.adjoint[i];
                           if (needs(bn))
                             for (std::size_t i = 0; i < self.size(); ++i)
                               bn->adjoint[i] -= self.adjoint[i];
                         });
}

Tensor mul(const Tensor &a, const Tensor &b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  const auto &av = a.values(), &bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return Tensor::make_op(a.shape(), std::move(out), {a, b},
                         [](detail::Node &self) {
                           detail::Node *an = self.parents[0].get();
                           detail::Node *bn = self.parents[1].get();
                           if (needs(an))
                             for (std::size_t i = 0; i < self.size(); ++i)
                               an->adjoint[i] += self.adjoint[i] * bn->value[i];
                           if (needs(bn))
                             for (std::size_t i = 0; i < self.size(); ++i)
                               bn->adjoint[i] += self.adjoint[i] * an->value[i];
                         });
}

Tensor scale(const Tensor &x, double c) {
  std::vector<double> out(x.size());
  const auto &xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * xv[i];
  return Tensor::make_op(x.shape(), std::move(out), {x},
                         [c](detail::Node &self) {
                           detail::Node *xn = self.parents[0].get();
                           if (!needs(xn)) return;
                           for (std::size_t i = 0; i < self.size(); ++i)
                             xn->adjoint[i] += c * self.adjoint[i];
                         });
}

Tensor scale_by(const Tensor &x, const Tensor &s) {
  if (s.size() != 1) {
    throw std::invalid_argument("scale_by: scale must have one element, got " +
                                shape_to_string(s.shape()));
  }
  const double c = s.values()[0];
  std::vector<double> out(x.size());
  const auto &xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * xv[i];
  return Tensor::make_op(
      x.shape(), std::move(out), {x, s}, [c](detail::Node &self) {
        detail::Node *xn = self.parents[0].get();
        detail::Node *sn = self.parents[1].get();
        if (needs(xn))
          for (std::size_t i = 0; i < self.size(); ++i)
            xn->adjoint[i] += c * self.adjoint[i];
        if (needs(sn)) {
          double acc = 0.0;
          for (std::size_t i = 0; i < self.size(); ++i)
            acc += self.adjoint[i] * xn->value[i];
          sn->adjoint[0] += acc;
        }
      });
}

Tensor matmul(const Tensor &a, const Tensor &b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t n = a.shape()[0], k = a.shape()[1];
  const std::size_t k2 = b.shape()[0], m = b.shape()[1];
  if (k != k2) {
    throw std::invalid_argument("matmul: inner dimensions disagree, " +
                                shape_to_string(a.shape()) + " x " +
                                shape_to_string(b.shape()));
  }
  std::vector<double> out(n * m, 0.0);
  const double *av = a.values().data();
  const double *bv = b.values().data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double *brow = bv + p * m;
      double *orow = out.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += aip * brow[j];
    }
  }
  return Tensor::make_op(
      {n, m}, std::move(out), {a, b}, [n, k, m](detail::Node &self) {
        detail::Node *an = self.parents[0].get();
        detail::Node *bn = self.parents[1].get();
        const double *g = self.adjoint.data();
        if (needs(an)) {
          // dA = G * B^T
          const double *bv = bn->value.data();
          double *da = an->adjoint.data();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double acc = 0.0;
              const double *grow = g + i * m;
              const double *brow = bv + p * m;
              for (std::size_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
              da[i * k + p] += acc;
            }
        }
        if (needs(bn)) {
          // dB = A^T * G
          const double *av = an->value.data();
          double *db = bn->adjoint.data();
          for (std::size_t p = 0; p < k; ++p)
            for (std::size_t i = 0; i < n; ++i) {
              const double aip = av[i * k + p];
              const double *grow = g + i * m;
              double *brow = db + p * m;
              for (std::size_t j = 0; j < m; ++j) brow[j] += aip * grow[j];
            }
        }
      });
}

Tensor transpose(const Tensor &x) {
  require_rank2(x, "transpose");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  std::vector<double> out(n * m);
  const auto &xv = x.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j * n + i] = xv[i * m + j];
  return Tensor::make_op({m, n}, std::move(out), {x},
                         [n, m](detail::Node &self) {
                           detail::Node *xn = self.parents[0].get();
                           if (!needs(xn)) return;
                           for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t j = 0; j < m; ++j)
                               xn->adjoint[i * m + j] += self.adjoint[j * n + i];
                         });
}

Tensor softmax_rows(const Tensor &x) {
  require_rank2(x, "softmax_rows");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  std::vector<double> out(n * m);
  const auto &xv = x.values();
  for (std::size_t i = 0; i < n; ++i) {
    const double *row = xv.data() + i * m;
    double mx = row[0];
    for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < m; ++j) denom += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = std::exp(row[j] - mx) / denom;
  }
  return Tensor::make_op(
      {n, m}, std::move(out), {x}, [n, m](detail::Node &self) {
        detail::Node *xn = self.parents[0].get();
        if (!needs(xn)) return;
        for (std::size_t i = 0; i < n; ++i) {
          const double *y = self.value.data() + i * m;
          const double *g = self.adjoint.data() + i * m;
          double dot = 0.0;
          for (std::size_t j = 0; j < m; ++j) dot += y[j] * g[j];
          double *dx = xn->adjoint.data() + i * m;
          for (std::size_t j = 0; j < m; ++j) dx[j] += y[j] * (g[j] - dot);
        }
      });
}

Tensor log_softmax_rows(const Tensor &x) {
  require_rank2(x, "log_softmax_rows");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  std::vector<double> out(n * m);
  const auto &xv = x.values();
  for (std::size_t i = 0; i < n; ++i) {
    const double *row = xv.data() + i * m;
    double mx = row[0];
    for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < m; ++j) denom += std::exp(row[j] - mx);
    const double lse = mx + std::log(denom);
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = row[j] - lse;
  }
  return Tensor::make_op(
      {n, m}, std::move(out), {x}, [n, m](detail::Node &self) {
        detail::Node *xn = self.parents[0].get();
        if (!needs(xn)) return;
        for (std::size_t i = 0; i < n; ++i) {
          const double *y = self.value.data() + i * m;
          const double *g = self.adjoint.data() + i * m;
          double gsum = 0.0;
          for (std::size_t j = 0; j < m; ++j) gsum += g[j];
          double *dx = xn->adjoint.data() + i * m;
          for (std::size_t j = 0; j < m; ++j)
            dx[j] += g[j] - std::exp(y[j]) * gsum;
        }
      });
}

Tensor layer_norm(const Tensor &x, const Tensor &scale_t, const Tensor &bias_t,
                  double eps) {
  require_rank2(x, "layer_norm");
  if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be > 0");
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  if (scale_t.size() != d || bias_t.size() != d) {
    throw std::invalid_argument(
        "layer_norm: scale/bias width must match feature dim " +
        std::to_string(d) + ", got " + shape_to_string(scale_t.shape()) +
        " and " + shape_to_string(bias_t.shape()));
  }
  std::vector<double> out(n * d);
  std::vector<double> xhat(n * d);
  std::vector<double> inv_std(n);
  const auto &xv = x.values();
  const auto &sv = scale_t.values();
  const auto &bv = bias_t.values();
  for (std::size_t i = 0; i < n; ++i) {
    const double *row = xv.data() + i * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = row[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[i] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mean) * inv;
      xhat[i * d + j] = h;
      out[i * d + j] = h * sv[j] + bv[j];
    }
  }
  return Tensor::make_op(
      {n, d}, std::move(out), {x, scale_t, bias_t},
      [n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node &self) {
        detail::Node *xn = self.parents[0].get();
        detail::Node *sn = self.parents[1].get();
        detail::Node *bn = self.parents[2].get();
        const double *g = self.adjoint.data();
        if (needs(bn)) {
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) bn->adjoint[j] += g[i * d + j];
        }
        if (needs(sn)) {
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j)
              sn->adjoint[j] += g[i * d + j] * xhat[i * d + j];
        }
        if (needs(xn)) {
          const double *sv = sn->value.data();
          for (std::size_t i = 0; i < n; ++i) {
            const double *grow = g + i * d;
            const double *hrow = xhat.data() + i * d;
            double mean_h = 0.0, mean_hx = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double hj = grow[j] * sv[j];
              mean_h += hj;
              mean_hx += hj * hrow[j];
            }
            mean_h /= static_cast<double>(d);
            mean_hx /= static_cast<double>(d);
            double *dx = xn->adjoint.data() + i * d;
            for (std::size_t j = 0; j < d; ++j) {
              const double hj = grow[j] * sv[j];
              dx[j] += inv_std[i] * (hj - mean_h - hrow[j] * mean_hx);
            }
          }
        }
      });
}

Tensor gelu(const Tensor &x) {
  std::vector<double> out(x.size());
  const auto &xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double cdf = 0.5 * (1.0 + std::erf(xv[i] * kInvSqrt2));
    out[i] = xv[i] * cdf;
  }
  return Tensor::make_op(
      x.shape(), std::move(out), {x}, [](detail::Node &self) {
        detail::Node *xn = self.parents[0].get();
        if (!needs(xn)) return;
        for (std::size_t i = 0; i < self.size(); ++i) {
          const double v = xn->value[i];
          const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
          const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
          xn->adjoint[i] += self.adjoint[i] * (cdf + v * pdf);
        }
      });
}

Tensor relu(const Tensor &x) {
  std::vector<double> out(x.size());
  const auto &xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return Tensor::make_op(x.shape(), std::move(out), {x},
                         [](detail::Node &self) {
                           detail::Node *xn = self.parents[0].get();
                           if (!needs(xn)) return;
                           // Subgradient at 0 is taken as 0.
                           for (std::size_t i = 0; i < self.size(); ++i)
                             if (xn->value[i] > 0.0)
                               xn->adjoint[i] += self.adjoint[i];
                         });
}

Tensor conv1d_temporal(const Tensor &x, const Tensor &kernel,
                       std::size_t stride) {
  require_rank2(x, "conv1d_temporal");
  if (kernel.rank() != 3) {
    throw std::invalid_argument("conv1d_temporal: kernel must be rank-3, got " +
                                shape_to_string(kernel.shape()));
  }
  if (stride == 0) throw std::invalid_argument("conv1d_temporal: stride must be >= 1");
  const std::size_t n = x.shape()[0], cin = x.shape()[1];
  const std::size_t k = kernel.shape()[0];
  if (kernel.shape()[1] != cin) {
    throw std::invalid_argument("conv1d_temporal: kernel input channels " +
                                std::to_string(kernel.shape()[1]) +
                                " do not match input channels " +
                                std::to_string(cin));
  }
  const std::size_t cout = kernel.shape()[2];
  if (n < k) {
    throw std::invalid_argument("conv1d_temporal: input too short, length " +
                                std::to_string(n) + " < kernel " +
                                std::to_string(k));
  }
  const std::size_t nout = (n - k) / stride + 1;
  std::vector<double> out(nout * cout, 0.0);
  const double *xv = x.values().data();
  const double *kv = kernel.values().data();
  for (std::size_t t = 0; t < nout; ++t) {
    double *orow = out.data() + t * cout;
    for (std::size_t tau = 0; tau < k; ++tau) {
      const double *xrow = xv + (t * stride + tau) * cin;
      const double *kslice = kv + tau * cin * cout;
      for (std::size_t i = 0; i < cin; ++i) {
        const double xi = xrow[i];
        const double *krow = kslice + i * cout;
        for (std::size_t o = 0; o < cout; ++o) orow[o] += xi * krow[o];
      }
    }
  }
  return Tensor::make_op(
      {nout, cout}, std::move(out), {x, kernel},
      [n, cin, k, cout, nout, stride](detail::Node &self) {
        detail::Node *xn = self.parents[0].get();
        detail::Node *kn = self.parents[1].get();
        const double *g = self.adjoint.data();
        (void)n;
        if (needs(xn)) {
          const double *kv = kn->value.data();
          for (std::size_t t = 0; t < nout; ++t) {
            const double *grow = g + t * cout;
            for (std::size_t tau = 0; tau < k; ++tau) {
              double *dxrow = xn->adjoint.data() + (t * stride + tau) * cin;
              const double *kslice = kv + tau * cin * cout;
              for (std::size_t i = 0; i < cin; ++i) {
                const double *krow = kslice + i * cout;
                double acc = 0.0;
                for (std::size_t o = 0; o < cout; ++o) acc += grow[o] * krow[o];
                dxrow[i] += acc;
              }
            }
          }
        }
        if (needs(kn)) {
          const double *xv = xn->value.data();
          for (std::size_t t = 0; t < nout; ++t) {
            const double *grow = g + t * cout;
            for (std::size_t tau = 0; tau < k; ++tau) {
              const double *xrow = xv + (t * stride + tau) * cin;
              double *dkslice = kn->adjoint.data() + tau * cin * cout;
              for (std::size_t i = 0; i < cin; ++i) {
                const double xi = xrow[i];
                double *dkrow = dkslice + i * cout;
                for (std::size_t o = 0; o < cout; ++o) dkrow[o] += xi * grow[o];
              }
            }
          }
        }
      });
}

Tensor concat_rows(const Tensor &a, const Tensor &b) {
  require_rank2(a, "concat_rows");
  require_rank2(b, "concat_rows");
  if (a.shape()[1] != b.shape()[1]) {
    throw std::invalid_argument("concat_rows: column mismatch " +
                                shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()));
  }
  const std::size_t p = a.shape()[0], q = b.shape()[0], d = a.shape()[1];
  std::vector<double> out;
  out.reserve((p + q) * d);
  out.insert(out.end(), a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  return Tensor::make_op({p + q, d}, std::move(out), {a, b},
                         [p, q, d](detail::Node &self) {
                           detail::Node *an = self.parents[0].get();
                           detail::Node *bn = self.parents[1].get();
                           if (needs(an))
                             for (std::size_t i = 0; i < p * d; ++i)
                               an->adjoint[i] += self.adjoint[i];
                           if (needs(bn))
                             for (std::size_t i = 0; i < q * d; ++i)
                               bn->adjoint[i] += self.adjoint[p * d + i];
                         });
}

Tensor slice_rows(const Tensor &x, std::size_t from, std::size_t to) {
  require_rank2(x, "slice_rows");
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  if (!(from < to && to <= n)) {
    throw std::invalid_argument("slice_rows: range [" + std::to_string(from) +
                                ", " + std::to_string(to) +
                                ") out of bounds for " +
                                shape_to_string(x.shape()));
  }
  std::vector<double> out(x.values().begin() + from * d,
                          x.values().begin() + to * d);
  return Tensor::make_op({to - from, d}, std::move(out), {x},
                         [from, d](detail::Node &self) {
                           detail::Node *xn = self.parents[0].get();
                           if (!needs(xn)) return;
                           for (std::size_t i = 0; i < self.size(); ++i)
                             xn->adjoint[from * d + i] += self.adjoint[i];
                         });
}

Tensor concat_cols(const Tensor &a, const Tensor &b) {
  require_rank2(a, "concat_cols");
  require_rank2(b, "concat_cols");
  if (a.shape()[0] != b.shape()[0]) {
    throw std::invalid_argument("concat_cols: row mismatch " +
                                shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()));
  }
  const std::size_t n = a.shape()[0], da = a.shape()[1], db = b.shape()[1];
  std::vector<double> out(n * (da + db));
  const auto &av = a.values(), &bv = b.values();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(av.begin() + i * da, av.begin() + (i + 1) * da,
              out.begin() + i * (da + db));
    std::copy(bv.begin() + i * db, bv.begin() + (i + 1) * db,
              out.begin() + i * (da + db) + da);
  }
  return Tensor::make_op(
      {n, da + db}, std::move(out), {a, b}, [n, da, db](detail::Node &self) {
        detail::Node *an = self.parents[0].get();
        detail::Node *bn = self.parents[1].get();
        const std::size_t d = da + db;
        if (needs(an))
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < da; ++j)
              an->adjoint[i * da + j] += self.adjoint[i * d + j];
        if (needs(bn))
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < db; ++j)
              bn->adjoint[i * db + j] += self.adjoint[i * d + da + j];
      });
}

Tensor slice_cols(const Tensor &x, std::size_t from, std::size_t to) {
  require_rank2(x, "slice_cols");
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  if (!(from < to && to <= d)) {
    throw std::invalid_argument("slice_cols: range [" + std::to_string(from) +
                                ", " + std::to_string(to) +
                                ") out of bounds for " +
                                shape_to_string(x.shape()));
  }
  const std::size_t w = to - from;
  std::vector<double> out(n * w);
  const auto &xv = x.values();
  for (std::size_t i = 0; i < n; ++i)
    std::copy(xv.begin() + i * d + from, xv.begin() + i * d + to,
              out.begin() + i * w);
  return Tensor::make_op({n, w}, std::move(out), {x},
                         [n, d, from, w](detail::Node &self) {
                           detail::Node *xn = self.parents[0].get();
                           if (!needs(xn)) return;
                           for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t j = 0; j < w; ++j)
                               xn->adjoint[i * d + from + j] +=
                                   self.adjoint[i * w + j];
                         });
}

Tensor mean_rows(const Tensor &x) {
  require_rank2(x, "mean_rows");
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  std::vector<double> out(d, 0.0);
  const auto &xv = x.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += xv[i * d + j];
  for (std::size_t j = 0; j < d; ++j) out[j] /= static_cast<double>(n);
  return Tensor::make_op({1, d}, std::move(out), {x},
                         [n, d](detail::Node &self) {
                           detail::Node *xn = self.parents[0].get();
                           if (!needs(xn)) return;
                           const double inv = 1.0 / static_cast<double>(n);
                           for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t j = 0; j < d; ++j)
                               xn->adjoint[i * d + j] += self.adjoint[j] * inv;
                         });
}

Tensor sum_all(const Tensor &x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  return Tensor::make_op({1}, {total}, {x}, [](detail::Node &self) {
    detail::Node *xn = self.parents[0].get();
    if (!needs(xn)) return;
    for (std::size_t i = 0; i < xn->adjoint.size(); ++i)
      xn->adjoint[i] += self.adjoint[0];
  });
}

Tensor pick(const Tensor &x, std::size_t i, std::size_t j) {
  const std::size_t d = x.cols();
  if (i >= x.rows() || j >= d) {
    throw std::invalid_argument("pick: index (" + std::to_string(i) + ", " +
                                std::to_string(j) + ") out of bounds for " +
                                shape_to_string(x.shape()));
  }
  const std::size_t flat = i * d + j;
  return Tensor::make_op({1}, {x.values()[flat]}, {x},
                         [flat](detail::Node &self) {
                           detail::Node *xn = self.parents[0].get();
                           if (!needs(xn)) return;
                           xn->adjoint[flat] += self.adjoint[0];
                         });
}

Tensor add_row_broadcast(const Tensor &x, const Tensor &bias) {
  require_rank2(x, "add_row_broadcast");
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  if (bias.size() != d) {
    throw std::invalid_argument("add_row_broadcast: bias width " +
                                shape_to_string(bias.shape()) +
                                " does not match " + shape_to_string(x.shape()));
  }
  std::vector<double> out(n * d);
  const auto &xv = x.values(), &bv = bias.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = xv[i * d + j] + bv[j];
  return Tensor::make_op({n, d}, std::move(out), {x, bias},
                         [n, d](detail::Node &self) {
                           detail::Node *xn = self.parents[0].get();
                           detail::Node *bn = self.parents[1].get();
                           if (needs(xn))
                             for (std::size_t i = 0; i < n * d; ++i)
                               xn->adjoint[i] += self.adjoint[i];
                           if (needs(bn))
                             for (std::size_t i = 0; i < n; ++i)
                               for (std::size_t j = 0; j < d; ++j)
                                 bn->adjoint[j] += self.adjoint[i * d + j];
                         });
}

Tensor reshape(const Tensor &x, Shape shape) {
  if (shape_numel(shape) != x.size()) {
    throw std::invalid_argument("reshape: cannot view " +
                                shape_to_string(x.shape()) + " as " +
                                shape_to_string(shape));
  }
  return Tensor::make_op(std::move(shape), x.values(), {x},
                         [](detail::Node &self) {
                           detail::Node *xn = self.parents[0].get();
                           if (!needs(xn)) return;
                           for (std::size_t i = 0; i < self.size(); ++i)
                             xn->adjoint[i] += self.adjoint[i];
                         });
}

Tensor linear(const Tensor &x, const Tensor &w, const Tensor &b) {
  return add_row_broadcast(matmul(x, w), b);
}

}  // namespace peftlab
