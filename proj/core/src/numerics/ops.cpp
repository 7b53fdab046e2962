#include "grapht5/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "grapht5/error.hpp"

namespace grapht5::numerics {

std::size_t count_true(const Mask &mask) {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

namespace {

template <typename T>
using ImplPtr = std::shared_ptr<TensorImpl<T>>;

// C[M×N] += A[M×K] · B[K×N]
template <typename T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T *a, const T *b, T *c) {
  for (std::size_t i = 0; i < m; ++i) {
    T *crow = c + i * n;
    const T *arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      const T *brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[M×N] += A[M×K] · B[N×K]ᵀ
template <typename T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const T *a, const T *b, T *c) {
  for (std::size_t i = 0; i < m; ++i) {
    const T *arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T *brow = b + j * k;
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// C[M×N] += A[K×M]ᵀ · B[K×N]
template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const T *a, const T *b, T *c) {
  for (std::size_t p = 0; p < k; ++p) {
    const T *arow = a + p * m;
    const T *brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = arow[i];
      if (av == T(0)) continue;
      T *crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
bool tracking(std::initializer_list<const Tensor<T> *> inputs) {
  if (active_tape<T>() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor<T> *t) { return t->requires_grad(); });
}

template <typename T>
bool tracking_all(const std::vector<Tensor<T>> &inputs) {
  if (active_tape<T>() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor<T> &t) { return t.requires_grad(); });
}

// Gradient buffer of an input, or null when the input does not need one.
template <typename T>
T *grad_of(const ImplPtr<T> &impl) {
  if (!impl->requires_grad) return nullptr;
  if (impl->grad.empty()) impl->grad.assign(impl->data.size(), T(0));
  return impl->grad.data();
}

template <typename T>
void check_finite(const std::vector<T> &values, const char *op) {
  for (const T v : values) {
    if (!std::isfinite(v)) {
      throw EvaluationError(std::string("non-finite value produced by ") + op);
    }
  }
}

template <typename T>
Tensor<T> finish(Tensor<T> out, const char *op) {
  check_finite(out.impl()->data, op);
  return out;
}

template <typename T>
void require_matrix(const Tensor<T> &x, const char *op) {
  if (!x.defined() || x.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got " +
                         (x.defined() ? shape_string(x.shape()) : std::string("<undefined>")));
  }
}

template <typename T>
void require_same_shape(const Tensor<T> &a, const Tensor<T> &b, const char *op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

std::size_t last_dim(const Shape &shape) { return shape.empty() ? 1 : shape.back(); }

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T> &a, const Tensor<T> &b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const auto m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ for " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()));
  }
  const bool track = tracking({&a, &b});
  Tensor<T> out = Tensor<T>::zeros({m, n}, track);
  gemm_nn(m, k, n, a.values().data(), b.values().data(), out.mutable_values().data());
  if (track) {
    active_tape<T>()->record(out, [ai = a.impl(), bi = b.impl(), m, k, n](const std::vector<T> &g) {
      if (T *da = grad_of(ai)) gemm_nt(m, n, k, g.data(), bi->data.data(), da);
      if (T *db = grad_of(bi)) gemm_tn(k, m, n, ai->data.data(), g.data(), db);
    });
  }
  return finish(std::move(out), "matmul");
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T> &a, const Tensor<T> &b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const auto m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_nt: inner dimensions differ for " + shape_string(a.shape()) +
                         " and transposed " + shape_string(b.shape()));
  }
  const bool track = tracking({&a, &b});
  Tensor<T> out = Tensor<T>::zeros({m, n}, track);
  gemm_nt(m, k, n, a.values().data(), b.values().data(), out.mutable_values().data());
  if (track) {
    active_tape<T>()->record(out, [ai = a.impl(), bi = b.impl(), m, k, n](const std::vector<T> &g) {
      if (T *da = grad_of(ai)) gemm_nn(m, n, k, g.data(), bi->data.data(), da);
      if (T *db = grad_of(bi)) gemm_tn(n, m, k, g.data(), ai->data.data(), db);
    });
  }
  return finish(std::move(out), "matmul_nt");
}

template <typename T>
Tensor<T> transpose(const Tensor<T> &a) {
  require_matrix(a, "transpose");
  const auto m = a.rows(), n = a.cols();
  const bool track = tracking({&a});
  Tensor<T> out = Tensor<T>::zeros({n, m}, track);
  auto src = a.values();
  auto dst = out.mutable_values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
  if (track) {
    active_tape<T>()->record(out, [ai = a.impl(), m, n](const std::vector<T> &g) {
      if (T *da = grad_of(ai))
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) da[i * n + j] += g[j * m + i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T> &a, const Tensor<T> &b) {
  require_same_shape(a, b, "add");
  const bool track = tracking({&a, &b});
  Tensor<T> out(a.shape(), std::vector<T>(a.size()), track);
  auto x = a.values(), y = b.values();
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  if (track) {
    active_tape<T>()->record(out, [ai = a.impl(), bi = b.impl()](const std::vector<T> &g) {
      if (T *da = grad_of(ai))
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
      if (T *db = grad_of(bi))
        for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
    });
  }
  return finish(std::move(out), "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T> &a, const Tensor<T> &b) {
  require_same_shape(a, b, "sub");
  const bool track = tracking({&a, &b});
  Tensor<T> out(a.shape(), std::vector<T>(a.size()), track);
  auto x = a.values(), y = b.values();
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  if (track) {
    active_tape<T>()->record(out, [ai = a.impl(), bi = b.impl()](const std::vector<T> &g) {
      if (T *da = grad_of(ai))
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
      if (T *db = grad_of(bi))
        for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
    });
  }
  return finish(std::move(out), "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T> &a, const Tensor<T> &b) {
  require_same_shape(a, b, "mul");
  const bool track = tracking({&a, &b});
  Tensor<T> out(a.shape(), std::vector<T>(a.size()), track);
  auto x = a.values(), y = b.values();
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  if (track) {
    active_tape<T>()->record(out, [ai = a.impl(), bi = b.impl()](const std::vector<T> &g) {
      if (T *da = grad_of(ai))
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bi->data[i];
      if (T *db = grad_of(bi))
        for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * ai->data[i];
    });
  }
  return finish(std::move(out), "mul");
}

template <typename T>
Tensor<T> scale(const Tensor<T> &a, T factor) {
  const bool track = tracking({&a});
  Tensor<T> out(a.shape(), std::vector<T>(a.size()), track);
  auto x = a.values();
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * factor;
  if (track) {
    active_tape<T>()->record(out, [ai = a.impl(), factor](const std::vector<T> &g) {
      if (T *da = grad_of(ai))
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * factor;
    });
  }
  return finish(std::move(out), "scale");
}

template <typename T>
Tensor<T> add_row(const Tensor<T> &x, const Tensor<T> &row) {
  require_matrix(x, "add_row");
  const auto m = x.rows(), n = x.cols();
  if (row.size() != n) {
    throw DimensionError("add_row: row " + shape_string(row.shape()) + " does not broadcast over " +
                         shape_string(x.shape()));
  }
  const bool track = tracking({&x, &row});
  Tensor<T> out(x.shape(), std::vector<T>(x.size()), track);
  auto xv = x.values(), rv = row.values();
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) o[i * n + j] = xv[i * n + j] + rv[j];
  if (track) {
    active_tape<T>()->record(out, [xi = x.impl(), ri = row.impl(), m, n](const std::vector<T> &g) {
      if (T *dx = grad_of(xi))
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
      if (T *dr = grad_of(ri))
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) dr[j] += g[i * n + j];
    });
  }
  return finish(std::move(out), "add_row");
}

template <typename T>
Tensor<T> relu(const Tensor<T> &x) {
  const bool track = tracking({&x});
  Tensor<T> out(x.shape(), std::vector<T>(x.size()), track);
  auto xv = x.values();
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] > T(0) ? xv[i] : T(0);
  if (track) {
    active_tape<T>()->record(out, [xi = x.impl()](const std::vector<T> &g) {
      if (T *dx = grad_of(xi))
        for (std::size_t i = 0; i < g.size(); ++i)
          if (xi->data[i] > T(0)) dx[i] += g[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T> &x) {
  const bool track = tracking({&x});
  T total = T(0);
  for (const T v : x.values()) total += v;
  Tensor<T> out = Tensor<T>::scalar(total, track);
  if (track) {
    active_tape<T>()->record(out, [xi = x.impl()](const std::vector<T> &g) {
      if (T *dx = grad_of(xi))
        for (std::size_t i = 0; i < xi->data.size(); ++i) dx[i] += g[0];
    });
  }
  return finish(std::move(out), "sum");
}

template <typename T>
Tensor<T> mean(const Tensor<T> &x) {
  if (x.size() == 0) throw ContractError("mean of an empty tensor is undefined");
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

template <typename T>
Tensor<T> softmax(const Tensor<T> &x) {
  if (!x.defined() || x.rank() == 0 || last_dim(x.shape()) == 0) {
    throw DimensionError("softmax needs a non-empty last axis, got " +
                         (x.defined() ? shape_string(x.shape()) : std::string("<undefined>")));
  }
  const std::size_t n = last_dim(x.shape());
  const std::size_t rows = x.size() / n;
  const bool track = tracking({&x});
  Tensor<T> out(x.shape(), std::vector<T>(x.size()), track);
  auto xv = x.values();
  auto o = out.mutable_values();
  for (std::size_t r = 0; r < rows; ++r) {
    const T *in = xv.data() + r * n;
    T *y = o.data() + r * n;
    const T hi = *std::max_element(in, in + n);
    T z = T(0);
    for (std::size_t j = 0; j < n; ++j) {
      y[j] = std::exp(in[j] - hi);
      z += y[j];
    }
    for (std::size_t j = 0; j < n; ++j) y[j] /= z;
  }
  if (track) {
    active_tape<T>()->record(out, [xi = x.impl(), oi = out.impl(), rows, n](const std::vector<T> &g) {
      T *dx = grad_of(xi);
      if (!dx) return;
      for (std::size_t r = 0; r < rows; ++r) {
        const T *y = oi->data.data() + r * n;
        const T *gr = g.data() + r * n;
        T dot = T(0);
        for (std::size_t j = 0; j < n; ++j) dot += gr[j] * y[j];
        for (std::size_t j = 0; j < n; ++j) dx[r * n + j] += y[j] * (gr[j] - dot);
      }
    });
  }
  return finish(std::move(out), "softmax");
}

template <typename T>
Tensor<T> masked_softmax(const Tensor<T> &scores, const Mask &key_valid, bool causal) {
  require_matrix(scores, "masked_softmax");
  const auto q = scores.rows(), k = scores.cols();
  if (key_valid.size() != k) {
    throw DimensionError("masked_softmax: key mask of length " + std::to_string(key_valid.size()) +
                         " for " + std::to_string(k) + " keys");
  }
  const bool track = tracking({&scores});
  Tensor<T> out = Tensor<T>::zeros({q, k}, track);
  auto sv = scores.values();
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < q; ++i) {
    const std::size_t limit = causal ? std::min(k, i + 1) : k;
    T hi = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < limit; ++j)
      if (key_valid[j]) hi = std::max(hi, sv[i * k + j]);
    if (hi == -std::numeric_limits<T>::infinity()) continue;
    T z = T(0);
    for (std::size_t j = 0; j < limit; ++j) {
      if (!key_valid[j]) continue;
      o[i * k + j] = std::exp(sv[i * k + j] - hi);
      z += o[i * k + j];
    }
    for (std::size_t j = 0; j < limit; ++j) o[i * k + j] /= z;
  }
  if (track) {
    active_tape<T>()->record(out, [si = scores.impl(), oi = out.impl(), q, k](const std::vector<T> &g) {
      T *ds = grad_of(si);
      if (!ds) return;
      for (std::size_t i = 0; i < q; ++i) {
        const T *y = oi->data.data() + i * k;
        const T *gr = g.data() + i * k;
        T dot = T(0);
        for (std::size_t j = 0; j < k; ++j) dot += gr[j] * y[j];
        for (std::size_t j = 0; j < k; ++j)
          if (y[j] != T(0)) ds[i * k + j] += y[j] * (gr[j] - dot);
      }
    });
  }
  return finish(std::move(out), "masked_softmax");
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T> &x, const Tensor<T> &gamma, const Tensor<T> &beta, T eps) {
  if (!x.defined() || x.rank() == 0) throw DimensionError("layer_norm needs rank >= 1");
  const std::size_t d = last_dim(x.shape());
  if (d == 0) throw DimensionError("layer_norm over an empty axis");
  if (gamma.size() != d || beta.size() != d) {
    throw DimensionError("layer_norm: gamma " + shape_string(gamma.shape()) + " / beta " +
                         shape_string(beta.shape()) + " do not match width " + std::to_string(d));
  }
  if (!(eps > T(0))) throw ContractError("layer_norm eps must be positive");
  const std::size_t rows = x.size() / d;
  const bool track = tracking({&x, &gamma, &beta});
  Tensor<T> out(x.shape(), std::vector<T>(x.size()), track);
  std::vector<T> normed(x.size());
  std::vector<T> rstd(rows);
  auto xv = x.values(), gv = gamma.values(), bv = beta.values();
  auto o = out.mutable_values();
  for (std::size_t r = 0; r < rows; ++r) {
    const T *in = xv.data() + r * d;
    T mu = T(0);
    for (std::size_t j = 0; j < d; ++j) mu += in[j];
    mu /= static_cast<T>(d);
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<T>(d);
    rstd[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      normed[r * d + j] = (in[j] - mu) * rstd[r];
      o[r * d + j] = normed[r * d + j] * gv[j] + bv[j];
    }
  }
  if (track) {
    active_tape<T>()->record(out, [xi = x.impl(), gi = gamma.impl(), bi = beta.impl(),
                                   normed = std::move(normed), rstd = std::move(rstd), rows,
                                   d](const std::vector<T> &g) {
      T *dx = grad_of(xi);
      T *dg = grad_of(gi);
      T *db = grad_of(bi);
      for (std::size_t r = 0; r < rows; ++r) {
        const T *gr = g.data() + r * d;
        const T *xh = normed.data() + r * d;
        if (dg)
          for (std::size_t j = 0; j < d; ++j) dg[j] += gr[j] * xh[j];
        if (db)
          for (std::size_t j = 0; j < d; ++j) db[j] += gr[j];
        if (!dx) continue;
        T mean_g = T(0), mean_gx = T(0);
        for (std::size_t j = 0; j < d; ++j) {
          const T gh = gr[j] * gi->data[j];
          mean_g += gh;
          mean_gx += gh * xh[j];
        }
        mean_g /= static_cast<T>(d);
        mean_gx /= static_cast<T>(d);
        for (std::size_t j = 0; j < d; ++j) {
          const T gh = gr[j] * gi->data[j];
          dx[r * d + j] += rstd[r] * (gh - mean_g - xh[j] * mean_gx);
        }
      }
    });
  }
  return finish(std::move(out), "layer_norm");
}

template <typename T>
Tensor<T> embedding(const Tensor<T> &table, std::span<const TokenId> ids) {
  require_matrix(table, "embedding");
  const auto v = table.rows(), d = table.cols();
  for (const auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw DimensionError("embedding: id " + std::to_string(id) + " outside table of " +
                           std::to_string(v) + " rows");
    }
  }
  const bool track = tracking({&table});
  Tensor<T> out = Tensor<T>::zeros({ids.size(), d}, track);
  auto tv = table.values();
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d, o.data() + i * d);
  if (track) {
    active_tape<T>()->record(out, [ti = table.impl(), idv = std::vector<TokenId>(ids.begin(), ids.end()),
                                   d](const std::vector<T> &g) {
      T *dt = grad_of(ti);
      if (!dt) return;
      for (std::size_t i = 0; i < idv.size(); ++i) {
        T *row = dt + static_cast<std::size_t>(idv[i]) * d;
        for (std::size_t j = 0; j < d; ++j) row[j] += g[i * d + j];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>> &parts) {
  if (parts.empty()) throw DimensionError("concat_rows of zero tensors");
  std::size_t cols = 0, rows = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    require_matrix(parts[i], "concat_rows");
    if (i == 0) cols = parts[i].cols();
    if (parts[i].cols() != cols) {
      throw DimensionError("concat_rows: width " + std::to_string(parts[i].cols()) +
                           " does not match " + std::to_string(cols));
    }
    rows += parts[i].rows();
  }
  const bool track = tracking_all(parts);
  Tensor<T> out = Tensor<T>::zeros({rows, cols}, track);
  auto o = out.mutable_values();
  std::size_t offset = 0;
  std::vector<ImplPtr<T>> impls;
  for (const auto &p : parts) {
    std::copy(p.values().begin(), p.values().end(), o.begin() + static_cast<std::ptrdiff_t>(offset));
    offset += p.size();
    impls.push_back(p.impl());
  }
  if (track) {
    active_tape<T>()->record(out, [impls = std::move(impls)](const std::vector<T> &g) {
      std::size_t off = 0;
      for (const auto &impl : impls) {
        const std::size_t n = impl->data.size();
        if (T *dp = grad_of(impl))
          for (std::size_t i = 0; i < n; ++i) dp[i] += g[off + i];
        off += n;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>> &parts) {
  if (parts.empty()) throw DimensionError("concat_cols of zero tensors");
  std::size_t rows = 0, cols = 0;
  std::vector<std::size_t> widths;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    require_matrix(parts[i], "concat_cols");
    if (i == 0) rows = parts[i].rows();
    if (parts[i].rows() != rows) {
      throw DimensionError("concat_cols: height " + std::to_string(parts[i].rows()) +
                           " does not match " + std::to_string(rows));
    }
    widths.push_back(parts[i].cols());
    cols += parts[i].cols();
  }
  const bool track = tracking_all(parts);
  Tensor<T> out = Tensor<T>::zeros({rows, cols}, track);
  auto o = out.mutable_values();
  std::vector<ImplPtr<T>> impls;
  std::size_t col0 = 0;
  for (const auto &p : parts) {
    const auto w = p.cols();
    auto pv = p.values();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(pv.data() + r * w, w, o.data() + r * cols + col0);
    col0 += w;
    impls.push_back(p.impl());
  }
  if (track) {
    active_tape<T>()->record(out, [impls = std::move(impls), widths = std::move(widths), rows,
                                   cols](const std::vector<T> &g) {
      std::size_t c0 = 0;
      for (std::size_t k = 0; k < impls.size(); ++k) {
        const auto w = widths[k];
        if (T *dp = grad_of(impls[k]))
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < w; ++j) dp[r * w + j] += g[r * cols + c0 + j];
        c0 += w;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T> &x, std::size_t begin, std::size_t end) {
  require_matrix(x, "slice_rows");
  if (begin > end || end > x.rows()) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + shape_string(x.shape()));
  }
  const auto cols = x.cols();
  const bool track = tracking({&x});
  auto xv = x.values();
  Tensor<T> out({end - begin, cols},
                std::vector<T>(xv.begin() + static_cast<std::ptrdiff_t>(begin * cols),
                               xv.begin() + static_cast<std::ptrdiff_t>(end * cols)),
                track);
  if (track) {
    active_tape<T>()->record(out, [xi = x.impl(), begin, cols](const std::vector<T> &g) {
      if (T *dx = grad_of(xi))
        for (std::size_t i = 0; i < g.size(); ++i) dx[begin * cols + i] += g[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T> &x, std::size_t begin, std::size_t end) {
  require_matrix(x, "slice_cols");
  if (begin > end || end > x.cols()) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + shape_string(x.shape()));
  }
  const auto rows = x.rows(), cols = x.cols(), w = end - begin;
  const bool track = tracking({&x});
  Tensor<T> out = Tensor<T>::zeros({rows, w}, track);
  auto xv = x.values();
  auto o = out.mutable_values();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(xv.data() + r * cols + begin, w, o.data() + r * w);
  if (track) {
    active_tape<T>()->record(out, [xi = x.impl(), rows, cols, begin, w](const std::vector<T> &g) {
      if (T *dx = grad_of(xi))
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < w; ++j) dx[r * cols + begin + j] += g[r * w + j];
    });
  }
  return out;
}

template <typename T>
Tensor<T> zero_rows(const Tensor<T> &x, const Mask &keep) {
  require_matrix(x, "zero_rows");
  if (keep.size() != x.rows()) {
    throw DimensionError("zero_rows: mask of length " + std::to_string(keep.size()) + " for " +
                         std::to_string(x.rows()) + " rows");
  }
  const auto rows = x.rows(), cols = x.cols();
  const bool track = tracking({&x});
  Tensor<T> out = Tensor<T>::zeros({rows, cols}, track);
  auto xv = x.values();
  auto o = out.mutable_values();
  for (std::size_t r = 0; r < rows; ++r)
    if (keep[r]) std::copy_n(xv.data() + r * cols, cols, o.data() + r * cols);
  if (track) {
    active_tape<T>()->record(out, [xi = x.impl(), keep, cols](const std::vector<T> &g) {
      T *dx = grad_of(xi);
      if (!dx) return;
      for (std::size_t r = 0; r < keep.size(); ++r)
        if (keep[r])
          for (std::size_t j = 0; j < cols; ++j) dx[r * cols + j] += g[r * cols + j];
    });
  }
  return out;
}

template <typename T>
Tensor<T> masked_mean_rows(const Tensor<T> &x, const Mask &mask) {
  require_matrix(x, "masked_mean_rows");
  if (mask.size() != x.rows()) {
    throw DimensionError("masked_mean_rows: mask of length " + std::to_string(mask.size()) +
                         " for " + std::to_string(x.rows()) + " rows");
  }
  const std::size_t count = count_true(mask);
  if (count == 0) throw ContractError("mean over an empty row mask is undefined");
  const auto cols = x.cols();
  const bool track = tracking({&x});
  Tensor<T> out = Tensor<T>::zeros({1, cols}, track);
  auto xv = x.values();
  auto o = out.mutable_values();
  for (std::size_t r = 0; r < mask.size(); ++r)
    if (mask[r])
      for (std::size_t j = 0; j < cols; ++j) o[j] += xv[r * cols + j];
  const T inv = T(1) / static_cast<T>(count);
  for (auto &v : o) v *= inv;
  if (track) {
    active_tape<T>()->record(out, [xi = x.impl(), mask, cols, inv](const std::vector<T> &g) {
      T *dx = grad_of(xi);
      if (!dx) return;
      for (std::size_t r = 0; r < mask.size(); ++r)
        if (mask[r])
          for (std::size_t j = 0; j < cols; ++j) dx[r * cols + j] += g[j] * inv;
    });
  }
  return finish(std::move(out), "masked_mean_rows");
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T> &logits, std::span<const TokenId> targets, TokenId ignore_id) {
  require_matrix(logits, "cross_entropy");
  const auto steps = logits.rows(), v = logits.cols();
  if (targets.size() != steps) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(steps) + " logit rows");
  }
  std::size_t counted = 0;
  for (const auto t : targets) {
    if (t == ignore_id) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= v) {
      throw DimensionError("cross_entropy: target " + std::to_string(t) + " outside " +
                           std::to_string(v) + " classes");
    }
    ++counted;
  }
  if (counted == 0) throw ContractError("cross_entropy: every position is ignored; mean undefined");

  const bool track = tracking({&logits});
  auto lv = logits.values();
  std::vector<T> probs(track ? lv.size() : 0);
  T total = T(0);
  for (std::size_t t = 0; t < steps; ++t) {
    if (targets[t] == ignore_id) continue;
    const T *row = lv.data() + t * v;
    const T hi = *std::max_element(row, row + v);
    T z = T(0);
    for (std::size_t j = 0; j < v; ++j) z += std::exp(row[j] - hi);
    const T log_z = std::log(z) + hi;
    total += log_z - row[targets[t]];
    if (track)
      for (std::size_t j = 0; j < v; ++j) probs[t * v + j] = std::exp(row[j] - log_z);
  }
  const T inv = T(1) / static_cast<T>(counted);
  Tensor<T> out = Tensor<T>::scalar(total * inv, track);
  if (track) {
    active_tape<T>()->record(out, [li = logits.impl(), probs = std::move(probs),
                                   tv = std::vector<TokenId>(targets.begin(), targets.end()), ignore_id,
                                   v, inv](const std::vector<T> &g) {
      T *dl = grad_of(li);
      if (!dl) return;
      const T gs = g[0] * inv;
      for (std::size_t t = 0; t < tv.size(); ++t) {
        if (tv[t] == ignore_id) continue;
        for (std::size_t j = 0; j < v; ++j) dl[t * v + j] += gs * probs[t * v + j];
        dl[t * v + static_cast<std::size_t>(tv[t])] -= gs;
      }
    });
  }
  return finish(std::move(out), "cross_entropy");
}

template <typename T>
Tensor<T> dropout(const Tensor<T> &x, T p, std::mt19937_64 &rng) {
  if (p < T(0) || p >= T(1)) throw ConfigError("dropout ratio must lie in [0, 1)");
  if (p == T(0)) return x;
  std::bernoulli_distribution keep_dist(1.0 - static_cast<double>(p));
  const T keep_scale = T(1) / (T(1) - p);
  std::vector<T> factors(x.size());
  for (auto &f : factors) f = keep_dist(rng) ? keep_scale : T(0);
  const bool track = tracking({&x});
  Tensor<T> out(x.shape(), std::vector<T>(x.size()), track);
  auto xv = x.values();
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] * factors[i];
  if (track) {
    active_tape<T>()->record(out, [xi = x.impl(), factors = std::move(factors)](const std::vector<T> &g) {
      if (T *dx = grad_of(xi))
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * factors[i];
    });
  }
  return out;
}

#define GRAPHT5_INSTANTIATE_OPS(T)                                                            \
  template Tensor<T> matmul(const Tensor<T> &, const Tensor<T> &);                            \
  template Tensor<T> matmul_nt(const Tensor<T> &, const Tensor<T> &);                         \
  template Tensor<T> transpose(const Tensor<T> &);                                            \
  template Tensor<T> add(const Tensor<T> &, const Tensor<T> &);                               \
  template Tensor<T> sub(const Tensor<T> &, const Tensor<T> &);                               \
  template Tensor<T> mul(const Tensor<T> &, const Tensor<T> &);                               \
  template Tensor<T> scale(const Tensor<T> &, T);                                             \
  template Tensor<T> add_row(const Tensor<T> &, const Tensor<T> &);                           \
  template Tensor<T> relu(const Tensor<T> &);                                                 \
  template Tensor<T> sum(const Tensor<T> &);                                                  \
  template Tensor<T> mean(const Tensor<T> &);                                                 \
  template Tensor<T> softmax(const Tensor<T> &);                                              \
  template Tensor<T> masked_softmax(const Tensor<T> &, const Mask &, bool);                   \
  template Tensor<T> layer_norm(const Tensor<T> &, const Tensor<T> &, const Tensor<T> &, T);  \
  template Tensor<T> embedding(const Tensor<T> &, std::span<const TokenId>);                  \
  template Tensor<T> concat_rows(const std::vector<Tensor<T>> &);                             \
  template Tensor<T> concat_cols(const std::vector<Tensor<T>> &);                             \
  template Tensor<T> slice_rows(const Tensor<T> &, std::size_t, std::size_t);                 \
  template Tensor<T> slice_cols(const Tensor<T> &, std::size_t, std::size_t);                 \
  template Tensor<T> zero_rows(const Tensor<T> &, const Mask &);                              \
  template Tensor<T> masked_mean_rows(const Tensor<T> &, const Mask &);                       \
  template Tensor<T> cross_entropy(const Tensor<T> &, std::span<const TokenId>, TokenId);     \
  template Tensor<T> dropout(const Tensor<T> &, T, std::mt19937_64 &);

GRAPHT5_INSTANTIATE_OPS(float)
GRAPHT5_INSTANTIATE_OPS(double)

#undef GRAPHT5_INSTANTIATE_OPS

}  // namespace grapht5::numerics
