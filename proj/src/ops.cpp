#include "iprompt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "iprompt/errors.hpp"

namespace iprompt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

void check_2d(const Tensor& a, const char* op) {
  if (a.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected 2-D tensor, got " +
                         shape_str(a.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  const auto& da = a.data();
  const auto& db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] + db[i];
  return Tensor::make_op(a.shape(), std::move(out), {a.handle(), b.handle()},
                         [](TensorNode& n) {
                           for (auto& p : n.parents) {
                             if (!p->needs_grad) continue;
                             for (std::size_t i = 0; i < n.grad.size(); ++i)
                               p->grad[i] += n.grad[i];
                           }
                         });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  const auto& da = a.data();
  const auto& db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] - db[i];
  return Tensor::make_op(a.shape(), std::move(out), {a.handle(), b.handle()},
                         [](TensorNode& n) {
                           auto& pa = n.parents[0];
                           auto& pb = n.parents[1];
                           if (pa->needs_grad)
                             for (std::size_t i = 0; i < n.grad.size(); ++i)
                               pa->grad[i] += n.grad[i];
                           if (pb->needs_grad)
                             for (std::size_t i = 0; i < n.grad.size(); ++i)
                               pb->grad[i] -= n.grad[i];
                         });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  const auto& da = a.data();
  const auto& db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i];
  return Tensor::make_op(a.shape(), std::move(out), {a.handle(), b.handle()},
                         [](TensorNode& n) {
                           auto& pa = n.parents[0];
                           auto& pb = n.parents[1];
                           if (pa->needs_grad)
                             for (std::size_t i = 0; i < n.grad.size(); ++i)
                               pa->grad[i] += n.grad[i] * pb->data[i];
                           if (pb->needs_grad)
                             for (std::size_t i = 0; i < n.grad.size(); ++i)
                               pb->grad[i] += n.grad[i] * pa->data[i];
                         });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  const auto& da = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * c;
  return Tensor::make_op(a.shape(), std::move(out), {a.handle()},
                         [c](TensorNode& n) {
                           auto& pa = n.parents[0];
                           if (!pa->needs_grad) return;
                           for (std::size_t i = 0; i < n.grad.size(); ++i)
                             pa->grad[i] += n.grad[i] * c;
                         });
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  check_2d(x, "add_rowvec");
  if (v.rank() != 1 || v.dim(0) != x.dim(1)) {
    throw DimensionError("add_rowvec: vector " + shape_str(v.shape()) +
                         " incompatible with " + shape_str(x.shape()));
  }
  int m = x.dim(0), n = x.dim(1);
  std::vector<double> out(x.size());
  const auto& dx = x.data();
  const auto& dv = v.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[i * n + j] = dx[i * n + j] + dv[j];
  return Tensor::make_op(x.shape(), std::move(out), {x.handle(), v.handle()},
                         [m, n](TensorNode& nd) {
                           auto& px = nd.parents[0];
                           auto& pv = nd.parents[1];
                           if (px->needs_grad)
                             for (std::size_t i = 0; i < nd.grad.size(); ++i)
                               px->grad[i] += nd.grad[i];
                           if (pv->needs_grad)
                             for (int i = 0; i < m; ++i)
                               for (int j = 0; j < n; ++j)
                                 pv->grad[j] += nd.grad[i * n + j];
                         });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_2d(a, "matmul");
  check_2d(b, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  const double* da = a.data().data();
  const double* db = b.data().data();
  for (int i = 0; i < m; ++i) {
    double* ci = out.data() + static_cast<std::size_t>(i) * n;
    const double* ai = da + static_cast<std::size_t>(i) * k;
    for (int l = 0; l < k; ++l) {
      double av = ai[l];
      if (av == 0.0) continue;
      const double* bl = db + static_cast<std::size_t>(l) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bl[j];
    }
  }
  return Tensor::make_op(
      {m, n}, std::move(out), {a.handle(), b.handle()}, [m, k, n](TensorNode& nd) {
        auto& pa = nd.parents[0];
        auto& pb = nd.parents[1];
        const double* g = nd.grad.data();
        if (pa->needs_grad) {
          // dA[i,l] += sum_j g[i,j] * B[l,j]
          const double* bd = pb->data.data();
          double* ga = pa->grad.data();
          for (int i = 0; i < m; ++i) {
            const double* gi = g + static_cast<std::size_t>(i) * n;
            double* gai = ga + static_cast<std::size_t>(i) * k;
            for (int l = 0; l < k; ++l) {
              const double* bl = bd + static_cast<std::size_t>(l) * n;
              double acc = 0.0;
              for (int j = 0; j < n; ++j) acc += gi[j] * bl[j];
              gai[l] += acc;
            }
          }
        }
        if (pb->needs_grad) {
          // dB[l,j] += sum_i A[i,l] * g[i,j]
          const double* ad = pa->data.data();
          double* gb = pb->grad.data();
          for (int i = 0; i < m; ++i) {
            const double* ai = ad + static_cast<std::size_t>(i) * k;
            const double* gi = g + static_cast<std::size_t>(i) * n;
            for (int l = 0; l < k; ++l) {
              double av = ai[l];
              if (av == 0.0) continue;
              double* gbl = gb + static_cast<std::size_t>(l) * n;
              for (int j = 0; j < n; ++j) gbl[j] += av * gi[j];
            }
          }
        }
      });
}

Tensor transpose(const Tensor& a) {
  check_2d(a, "transpose");
  const int m = a.dim(0), n = a.dim(1);
  std::vector<double> out(a.size());
  const auto& da = a.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(j) * m + i] = da[static_cast<std::size_t>(i) * n + j];
  return Tensor::make_op({n, m}, std::move(out), {a.handle()},
                         [m, n](TensorNode& nd) {
                           auto& pa = nd.parents[0];
                           if (!pa->needs_grad) return;
                           for (int j = 0; j < n; ++j)
                             for (int i = 0; i < m; ++i)
                               pa->grad[static_cast<std::size_t>(i) * n + j] +=
                                   nd.grad[static_cast<std::size_t>(j) * m + i];
                         });
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() < 1) throw DimensionError("layernorm: rank-0 input");
  const int d = x.shape().back();
  if (d == 0) throw DimensionError("layernorm: normalized axis has size 0");
  if (eps <= 0.0) throw UsageError("layernorm: eps must be positive");
  if (gain.rank() != 1 || gain.dim(0) != d || bias.rank() != 1 || bias.dim(0) != d) {
    throw DimensionError("layernorm: gain/bias must be [d]");
  }
  const std::size_t rows = x.size() / static_cast<std::size_t>(d);
  std::vector<double> out(x.size());
  const auto& dx = x.data();
  const auto& dg = gain.data();
  const auto& db = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = dx.data() + r * d;
    double m = 0.0;
    for (int j = 0; j < d; ++j) m += row[j];
    m /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      double c = row[j] - m;
      var += c * c;
    }
    var /= d;
    double inv = 1.0 / std::sqrt(var + eps);
    double* o = out.data() + r * d;
    for (int j = 0; j < d; ++j) o[j] = (row[j] - m) * inv * dg[j] + db[j];
  }
  return Tensor::make_op(
      x.shape(), std::move(out), {x.handle(), gain.handle(), bias.handle()},
      [d, rows, eps](TensorNode& nd) {
        auto& px = nd.parents[0];
        auto& pg = nd.parents[1];
        auto& pb = nd.parents[2];
        for (std::size_t r = 0; r < rows; ++r) {
          const double* row = px->data.data() + r * d;
          const double* g = nd.grad.data() + r * d;
          double m = 0.0;
          for (int j = 0; j < d; ++j) m += row[j];
          m /= d;
          double var = 0.0;
          for (int j = 0; j < d; ++j) {
            double c = row[j] - m;
            var += c * c;
          }
          var /= d;
          double inv = 1.0 / std::sqrt(var + eps);
          if (pg->needs_grad || pb->needs_grad) {
            for (int j = 0; j < d; ++j) {
              double xhat = (row[j] - m) * inv;
              if (pg->needs_grad) pg->grad[j] += g[j] * xhat;
              if (pb->needs_grad) pb->grad[j] += g[j];
            }
          }
          if (px->needs_grad) {
            // dx = inv * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (int j = 0; j < d; ++j) {
              double xhat = (row[j] - m) * inv;
              double dxhat = g[j] * pg->data[j];
              mean_dxhat += dxhat;
              mean_dxhat_xhat += dxhat * xhat;
            }
            mean_dxhat /= d;
            mean_dxhat_xhat /= d;
            double* go = px->grad.data() + r * d;
            for (int j = 0; j < d; ++j) {
              double xhat = (row[j] - m) * inv;
              double dxhat = g[j] * pg->data[j];
              go[j] += inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
            }
          }
        }
      });
}

Tensor softmax(const Tensor& x, int axis) {
  const int r = x.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw DimensionError("softmax: axis out of range");
  const int len = x.dim(axis);
  std::size_t stride = 1;
  for (int a = axis + 1; a < r; ++a) stride *= static_cast<std::size_t>(x.dim(a));
  const std::size_t stripes = x.size() / static_cast<std::size_t>(len);
  std::vector<double> out(x.size());
  const auto& dx = x.data();
  auto stripe_base = [stride, len](std::size_t s) {
    std::size_t outer = s / stride, inner = s % stride;
    return outer * stride * static_cast<std::size_t>(len) + inner;
  };
  for (std::size_t s = 0; s < stripes; ++s) {
    std::size_t base = stripe_base(s);
    double mx = -kInf;
    for (int j = 0; j < len; ++j) mx = std::max(mx, dx[base + j * stride]);
    if (mx == -kInf) mx = 0.0;
    double sumexp = 0.0;
    for (int j = 0; j < len; ++j) {
      double e = std::exp(dx[base + j * stride] - mx);
      out[base + j * stride] = e;
      sumexp += e;
    }
    for (int j = 0; j < len; ++j) out[base + j * stride] /= sumexp;
  }
  return Tensor::make_op(
      x.shape(), std::move(out), {x.handle()},
      [len, stride, stripes, stripe_base](TensorNode& nd) {
        auto& px = nd.parents[0];
        if (!px->needs_grad) return;
        for (std::size_t s = 0; s < stripes; ++s) {
          std::size_t base = stripe_base(s);
          double dot = 0.0;
          for (int j = 0; j < len; ++j)
            dot += nd.grad[base + j * stride] * nd.data[base + j * stride];
          for (int j = 0; j < len; ++j) {
            std::size_t i = base + j * stride;
            px->grad[i] += nd.data[i] * (nd.grad[i] - dot);
          }
        }
      });
}

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto& dx = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.5 * dx[i] * (1.0 + std::erf(dx[i] * kInvSqrt2));
  }
  return Tensor::make_op(x.shape(), std::move(out), {x.handle()},
                         [](TensorNode& nd) {
                           auto& px = nd.parents[0];
                           if (!px->needs_grad) return;
                           for (std::size_t i = 0; i < nd.grad.size(); ++i) {
                             double v = px->data[i];
                             double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                             double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
                             px->grad[i] += nd.grad[i] * (cdf + v * pdf);
                           }
                         });
}

namespace {

// Shared kernel for the cosine ops: cos = <a,b> / (na * nb) with
// na = sqrt(|a|^2 + eps^2). The eps^2 term vanishes for O(1) vectors, so
// positive scaling invariance holds to machine precision while zero
// vectors map to exactly 0.
struct CosParts {
  double dot, na2, nb2, inv;
};

CosParts cos_parts(const double* a, const double* b, int d, double eps) {
  CosParts p{0.0, eps * eps, eps * eps, 0.0};
  for (int i = 0; i < d; ++i) {
    p.dot += a[i] * b[i];
    p.na2 += a[i] * a[i];
    p.nb2 += b[i] * b[i];
  }
  p.inv = 1.0 / std::sqrt(p.na2 * p.nb2);
  return p;
}

}  // namespace

Tensor cosine_similarity(const Tensor& a, const Tensor& b, double eps) {
  if (a.rank() != 1 || b.rank() != 1 || a.dim(0) != b.dim(0) || a.dim(0) < 1) {
    throw DimensionError("cosine_similarity: expects two equal-length vectors");
  }
  if (eps <= 0.0) throw UsageError("cosine_similarity: eps must be positive");
  const int d = a.dim(0);
  CosParts p = cos_parts(a.data().data(), b.data().data(), d, eps);
  double c = p.dot * p.inv;
  return Tensor::make_op({1}, {c}, {a.handle(), b.handle()},
                         [d, eps, c](TensorNode& nd) {
                           auto& pa = nd.parents[0];
                           auto& pb = nd.parents[1];
                           CosParts p = cos_parts(pa->data.data(), pb->data.data(), d, eps);
                           double g = nd.grad[0];
                           if (pa->needs_grad) {
                             for (int i = 0; i < d; ++i)
                               pa->grad[i] += g * (pb->data[i] * p.inv - c * pa->data[i] / p.na2);
                           }
                           if (pb->needs_grad) {
                             for (int i = 0; i < d; ++i)
                               pb->grad[i] += g * (pa->data[i] * p.inv - c * pb->data[i] / p.nb2);
                           }
                         });
}

Tensor cosine_matrix(const Tensor& x, const Tensor& k, double eps) {
  check_2d(x, "cosine_matrix");
  check_2d(k, "cosine_matrix");
  if (x.dim(1) != k.dim(1)) {
    throw DimensionError("cosine_matrix: feature dimensions disagree, " +
                         shape_str(x.shape()) + " vs " + shape_str(k.shape()));
  }
  if (eps <= 0.0) throw UsageError("cosine_matrix: eps must be positive");
  const int n = x.dim(0), s = k.dim(0), d = x.dim(1);
  const double eps2 = eps * eps;
  const auto& dx = x.data();
  const auto& dk = k.data();
  std::vector<double> nx(n), nk(s);
  for (int i = 0; i < n; ++i) {
    double acc = eps2;
    for (int j = 0; j < d; ++j) acc += dx[i * d + j] * dx[i * d + j];
    nx[i] = std::sqrt(acc);
  }
  for (int i = 0; i < s; ++i) {
    double acc = eps2;
    for (int j = 0; j < d; ++j) acc += dk[i * d + j] * dk[i * d + j];
    nk[i] = std::sqrt(acc);
  }
  std::vector<double> out(static_cast<std::size_t>(n) * s);
  for (int i = 0; i < n; ++i) {
    for (int l = 0; l < s; ++l) {
      double dot = 0.0;
      const double* xi = dx.data() + i * d;
      const double* kl = dk.data() + l * d;
      for (int j = 0; j < d; ++j) dot += xi[j] * kl[j];
      out[static_cast<std::size_t>(i) * s + l] = dot / (nx[i] * nk[l]);
    }
  }
  return Tensor::make_op(
      {n, s}, std::move(out), {x.handle(), k.handle()},
      [n, s, d, eps2](TensorNode& nd) {
        auto& px = nd.parents[0];
        auto& pk = nd.parents[1];
        std::vector<double> nx2(n), nk2(s);
        for (int i = 0; i < n; ++i) {
          double acc = eps2;
          for (int j = 0; j < d; ++j) acc += px->data[i * d + j] * px->data[i * d + j];
          nx2[i] = acc;
        }
        for (int i = 0; i < s; ++i) {
          double acc = eps2;
          for (int j = 0; j < d; ++j) acc += pk->data[i * d + j] * pk->data[i * d + j];
          nk2[i] = acc;
        }
        for (int i = 0; i < n; ++i) {
          const double* xi = px->data.data() + i * d;
          for (int l = 0; l < s; ++l) {
            double g = nd.grad[static_cast<std::size_t>(i) * s + l];
            if (g == 0.0) continue;
            double c = nd.data[static_cast<std::size_t>(i) * s + l];
            const double* kl = pk->data.data() + l * d;
            double inv = 1.0 / std::sqrt(nx2[i] * nk2[l]);
            if (px->needs_grad) {
              double* gx = px->grad.data() + i * d;
              for (int j = 0; j < d; ++j) gx[j] += g * (kl[j] * inv - c * xi[j] / nx2[i]);
            }
            if (pk->needs_grad) {
              double* gk = pk->grad.data() + l * d;
              for (int j = 0; j < d; ++j) gk[j] += g * (xi[j] * inv - c * kl[j] / nk2[l]);
            }
          }
        }
      });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  check_2d(logits, "cross_entropy");
  const int b = logits.dim(0), c = logits.dim(1);
  if (static_cast<int>(labels.size()) != b) {
    throw DimensionError("cross_entropy: batch size " + std::to_string(b) + " but " +
                         std::to_string(labels.size()) + " labels");
  }
  const auto& dl = logits.data();
  double total = 0.0;
  for (int i = 0; i < b; ++i) {
    int y = labels[i];
    if (y < 0 || y >= c) throw UsageError("cross_entropy: label out of range");
    const double* row = dl.data() + static_cast<std::size_t>(i) * c;
    if (row[y] == -kInf) throw MaskError("cross_entropy: label sits on a masked logit");
    double mx = -kInf;
    for (int j = 0; j < c; ++j) mx = std::max(mx, row[j]);
    double sumexp = 0.0;
    for (int j = 0; j < c; ++j) sumexp += std::exp(row[j] - mx);
    double lse = mx + std::log(sumexp);
    total += lse - row[y];
  }
  double loss = total / b;
  auto labels_copy = labels;
  return Tensor::make_op(
      {1}, {loss}, {logits.handle()}, [b, c, labels_copy](TensorNode& nd) {
        auto& pl = nd.parents[0];
        if (!pl->needs_grad) return;
        double g = nd.grad[0] / b;
        for (int i = 0; i < b; ++i) {
          const double* row = pl->data.data() + static_cast<std::size_t>(i) * c;
          double* grow = pl->grad.data() + static_cast<std::size_t>(i) * c;
          double mx = -kInf;
          for (int j = 0; j < c; ++j) mx = std::max(mx, row[j]);
          double sumexp = 0.0;
          for (int j = 0; j < c; ++j) sumexp += std::exp(row[j] - mx);
          double lse = mx + std::log(sumexp);
          for (int j = 0; j < c; ++j) {
            // exp(-inf - lse) == 0 exactly, so masked entries stay untouched
            double p = row[j] == -kInf ? 0.0 : std::exp(row[j] - lse);
            grow[j] += g * (p - (j == labels_copy[i] ? 1.0 : 0.0));
          }
        }
      });
}

Tensor mask_logits(const Tensor& logits, const std::vector<uint8_t>& allowed) {
  check_2d(logits, "mask_logits");
  const int b = logits.dim(0), c = logits.dim(1);
  if (static_cast<int>(allowed.size()) != c) {
    throw DimensionError("mask_logits: mask length must equal the class count");
  }
  std::vector<double> out(logits.size());
  const auto& dl = logits.data();
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < c; ++j)
      out[static_cast<std::size_t>(i) * c + j] =
          allowed[j] ? dl[static_cast<std::size_t>(i) * c + j] : -kInf;
  auto allowed_copy = allowed;
  return Tensor::make_op({b, c}, std::move(out), {logits.handle()},
                         [b, c, allowed_copy](TensorNode& nd) {
                           auto& pl = nd.parents[0];
                           if (!pl->needs_grad) return;
                           for (int i = 0; i < b; ++i)
                             for (int j = 0; j < c; ++j)
                               if (allowed_copy[j])
                                 pl->grad[static_cast<std::size_t>(i) * c + j] +=
                                     nd.grad[static_cast<std::size_t>(i) * c + j];
                         });
}

Tensor slice_rows(const Tensor& x, int begin, int end) {
  if (x.rank() < 1) throw DimensionError("slice_rows: rank-0 input");
  const int rows = x.dim(0);
  if (begin < 0 || end > rows || begin > end) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") out of bounds for " +
                         shape_str(x.shape()));
  }
  std::size_t row_sz = x.size() / static_cast<std::size_t>(std::max(rows, 1));
  std::vector<int> shape = x.shape();
  shape[0] = end - begin;
  std::vector<double> out(x.data().begin() + begin * row_sz,
                          x.data().begin() + end * row_sz);
  return Tensor::make_op(std::move(shape), std::move(out), {x.handle()},
                         [begin, row_sz](TensorNode& nd) {
                           auto& px = nd.parents[0];
                           if (!px->needs_grad) return;
                           std::size_t off = begin * row_sz;
                           for (std::size_t i = 0; i < nd.grad.size(); ++i)
                             px->grad[off + i] += nd.grad[i];
                         });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw UsageError("concat_rows: no parts");
  std::vector<int> shape = parts[0].shape();
  if (shape.empty()) throw DimensionError("concat_rows: rank-0 part");
  int rows = 0;
  for (const auto& p : parts) {
    auto s = p.shape();
    if (s.size() != shape.size() ||
        !std::equal(s.begin() + 1, s.end(), shape.begin() + 1)) {
      throw DimensionError("concat_rows: incompatible part shapes");
    }
    rows += s[0];
  }
  shape[0] = rows;
  std::vector<double> out;
  out.reserve(numel(shape));
  std::vector<NodePtr> parents;
  parents.reserve(parts.size());
  for (const auto& p : parts) {
    out.insert(out.end(), p.data().begin(), p.data().end());
    parents.push_back(p.handle());
  }
  return Tensor::make_op(std::move(shape), std::move(out), std::move(parents),
                         [](TensorNode& nd) {
                           std::size_t off = 0;
                           for (auto& p : nd.parents) {
                             std::size_t sz = p->data.size();
                             if (p->needs_grad)
                               for (std::size_t i = 0; i < sz; ++i)
                                 p->grad[i] += nd.grad[off + i];
                             off += sz;
                           }
                         });
}

Tensor slice_cols(const Tensor& x, int begin, int end) {
  check_2d(x, "slice_cols");
  const int m = x.dim(0), n = x.dim(1);
  if (begin < 0 || end > n || begin > end) {
    throw DimensionError("slice_cols: range out of bounds");
  }
  const int w = end - begin;
  std::vector<double> out(static_cast<std::size_t>(m) * w);
  const auto& dx = x.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < w; ++j)
      out[static_cast<std::size_t>(i) * w + j] = dx[static_cast<std::size_t>(i) * n + begin + j];
  return Tensor::make_op({m, w}, std::move(out), {x.handle()},
                         [m, n, w, begin](TensorNode& nd) {
                           auto& px = nd.parents[0];
                           if (!px->needs_grad) return;
                           for (int i = 0; i < m; ++i)
                             for (int j = 0; j < w; ++j)
                               px->grad[static_cast<std::size_t>(i) * n + begin + j] +=
                                   nd.grad[static_cast<std::size_t>(i) * w + j];
                         });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw UsageError("concat_cols: no parts");
  const int m = parts[0].dim(0);
  int n = 0;
  for (const auto& p : parts) {
    check_2d(p, "concat_cols");
    if (p.dim(0) != m) throw DimensionError("concat_cols: row counts disagree");
    n += p.dim(1);
  }
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  std::vector<NodePtr> parents;
  std::vector<int> widths;
  int off = 0;
  for (const auto& p : parts) {
    const int w = p.dim(1);
    const auto& dp = p.data();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j)
        out[static_cast<std::size_t>(i) * n + off + j] = dp[static_cast<std::size_t>(i) * w + j];
    parents.push_back(p.handle());
    widths.push_back(w);
    off += w;
  }
  return Tensor::make_op({m, n}, std::move(out), std::move(parents),
                         [m, n, widths](TensorNode& nd) {
                           int off = 0;
                           for (std::size_t pi = 0; pi < nd.parents.size(); ++pi) {
                             auto& p = nd.parents[pi];
                             const int w = widths[pi];
                             if (p->needs_grad)
                               for (int i = 0; i < m; ++i)
                                 for (int j = 0; j < w; ++j)
                                   p->grad[static_cast<std::size_t>(i) * w + j] +=
                                       nd.grad[static_cast<std::size_t>(i) * n + off + j];
                             off += w;
                           }
                         });
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: element count mismatch, " + shape_str(x.shape()) +
                         " -> " + shape_str(shape));
  }
  return Tensor::make_op(std::move(shape), x.data(), {x.handle()},
                         [](TensorNode& nd) {
                           auto& px = nd.parents[0];
                           if (!px->needs_grad) return;
                           for (std::size_t i = 0; i < nd.grad.size(); ++i)
                             px->grad[i] += nd.grad[i];
                         });
}

Tensor zero_row(const Tensor& x, int row) {
  if (x.rank() < 1 || row < 0 || row >= x.dim(0)) {
    throw DimensionError("zero_row: row index out of range");
  }
  std::size_t row_sz = x.size() / static_cast<std::size_t>(x.dim(0));
  std::vector<double> out = x.data();
  std::fill(out.begin() + row * row_sz, out.begin() + (row + 1) * row_sz, 0.0);
  return Tensor::make_op(x.shape(), std::move(out), {x.handle()},
                         [row, row_sz](TensorNode& nd) {
                           auto& px = nd.parents[0];
                           if (!px->needs_grad) return;
                           std::size_t lo = row * row_sz, hi = lo + row_sz;
                           for (std::size_t i = 0; i < nd.grad.size(); ++i)
                             if (i < lo || i >= hi) px->grad[i] += nd.grad[i];
                         });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return Tensor::make_op({1}, {acc}, {x.handle()},
                         [](TensorNode& nd) {
                           auto& px = nd.parents[0];
                           if (!px->needs_grad) return;
                           for (auto& g : px->grad) g += nd.grad[0];
                         });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw UsageError("mean: empty tensor");
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  double inv = 1.0 / static_cast<double>(x.size());
  return Tensor::make_op({1}, {acc * inv}, {x.handle()},
                         [inv](TensorNode& nd) {
                           auto& px = nd.parents[0];
                           if (!px->needs_grad) return;
                           for (auto& g : px->grad) g += nd.grad[0] * inv;
                         });
}

Tensor sum_rows_range(const Tensor& x, int begin, int end) {
  if (x.rank() != 3) throw DimensionError("sum_rows_range: expected [n x r x d]");
  const int n = x.dim(0), r = x.dim(1), d = x.dim(2);
  if (begin < 0 || end > r || begin > end) {
    throw DimensionError("sum_rows_range: range out of bounds");
  }
  std::vector<double> out(static_cast<std::size_t>(n) * d, 0.0);
  const auto& dx = x.data();
  for (int i = 0; i < n; ++i)
    for (int row = begin; row < end; ++row)
      for (int j = 0; j < d; ++j)
        out[static_cast<std::size_t>(i) * d + j] +=
            dx[(static_cast<std::size_t>(i) * r + row) * d + j];
  return Tensor::make_op({n, d}, std::move(out), {x.handle()},
                         [n, r, d, begin, end](TensorNode& nd) {
                           auto& px = nd.parents[0];
                           if (!px->needs_grad) return;
                           for (int i = 0; i < n; ++i)
                             for (int row = begin; row < end; ++row)
                               for (int j = 0; j < d; ++j)
                                 px->grad[(static_cast<std::size_t>(i) * r + row) * d + j] +=
                                     nd.grad[static_cast<std::size_t>(i) * d + j];
                         });
}

}  // namespace iprompt
