// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "factorforge/parallel.hpp"

namespace factorforge {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Largest number of elements full() and dense matricize() will materialize.
inline constexpr std::size_t kDefaultElementBudget = 100'000'000;

namespace detail {

inline std::size_t checked_product(std::span<const std::size_t> dims) {
  std::size_t p = 1;
  for (std::size_t n : dims) {
    if (n != 0 && p > std::numeric_limits<std::size_t>::max() / n)
      throw std::overflow_error("tensor element count overflows size_t");
    p *= n;
  }
  return p;
}

inline void check_dims(std::span<const std::size_t> dims) {
  if (dims.size() < 2) throw std::invalid_argument("tensor order must be at least 2");
  for (std::size_t n : dims)
    if (n == 0) throw std::invalid_argument("tensor dimensions must be positive");
}

inline void check_mode(std::size_t mode, std::size_t order) {
  if (mode >= order)
    throw std::out_of_range("mode " + std::to_string(mode) + " out of range for order-" +
                            std::to_string(order) + " tensor");
}

}  // namespace detail

/// Dense N-way array. Element (i_1, ..., i_N) lives at linear position
/// i_1 + n_1 * (i_2 + n_2 * (i_3 + ...)), i.e. the first index varies fastest.
class DenseTensor {
 public:
  DenseTensor() = default;

  explicit DenseTensor(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    detail::check_dims(dims_);
    values_.assign(detail::checked_product(dims_), 0.0);
  }

  DenseTensor(std::vector<std::size_t> dims, std::vector<double> values)
      : dims_(std::move(dims)), values_(std::move(values)) {
    detail::check_dims(dims_);
    if (values_.size() != detail::checked_product(dims_))
      throw std::invalid_argument("value count does not match tensor dimensions");
  }

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t order() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept { return values_.size(); }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  const double* data() const noexcept { return values_.data(); }
  double* data() noexcept { return values_.data(); }

  double operator[](std::size_t linear) const { return values_[linear]; }
  double& operator[](std::size_t linear) { return values_[linear]; }

  std::size_t linear_index(std::span<const std::size_t> idx) const {
    if (idx.size() != dims_.size()) throw std::invalid_argument("index arity mismatch");
    std::size_t lin = 0;
    for (std::size_t m = dims_.size(); m-- > 0;) {
      if (idx[m] >= dims_[m]) throw std::out_of_range("tensor index out of range");
      lin = lin * dims_[m] + idx[m];
    }
    return lin;
  }

  double at(std::span<const std::size_t> idx) const { return values_[linear_index(idx)]; }
  double& at(std::span<const std::size_t> idx) { return values_[linear_index(idx)]; }

  double squared_norm() const {
    double s = 0.0;
    for (double v : values_) s += v * v;
    return s;
  }
  double norm() const { return std::sqrt(squared_norm()); }

  friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<double> values_;
};

/// Coordinate-format sparse tensor in canonical form: entries sorted by
/// linear index (same order as DenseTensor), no duplicates.
class SparseTensor {
 public:
  SparseTensor() = default;

  /// `indices` holds nnz * N zero-based indices, entry-major. Entries are
  /// sorted on construction; a duplicate index tuple throws DuplicateEntry
  /// naming the two original positions.
  SparseTensor(std::vector<std::size_t> dims, std::vector<std::size_t> indices,
               std::vector<double> values)
      : dims_(std::move(dims)) {
    detail::check_dims(dims_);
    const std::size_t n = dims_.size();
    if (indices.size() != values.size() * n)
      throw std::invalid_argument("sparse index array length must be nnz * order");
    const std::size_t nnz = values.size();
    for (std::size_t e = 0; e < nnz; ++e)
      for (std::size_t m = 0; m < n; ++m)
        if (indices[e * n + m] >= dims_[m])
          throw std::out_of_range("sparse entry " + std::to_string(e) + " index out of range in mode " +
                                  std::to_string(m));

    std::vector<std::size_t> perm(nnz);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    auto less = [&](std::size_t a, std::size_t b) {
      for (std::size_t m = n; m-- > 0;) {
        std::size_t ia = indices[a * n + m], ib = indices[b * n + m];
        if (ia != ib) return ia < ib;
      }
      return false;
    };
    std::stable_sort(perm.begin(), perm.end(), less);
    for (std::size_t e = 1; e < nnz; ++e)
      if (!less(perm[e - 1], perm[e])) throw DuplicateEntry(perm[e - 1], perm[e]);

    indices_.resize(indices.size());
    values_.resize(nnz);
    for (std::size_t e = 0; e < nnz; ++e) {
      std::copy_n(indices.begin() + static_cast<std::ptrdiff_t>(perm[e] * n), n,
                  indices_.begin() + static_cast<std::ptrdiff_t>(e * n));
      values_[e] = values[perm[e]];
    }
  }

  struct DuplicateEntry : std::invalid_argument {
    DuplicateEntry(std::size_t a, std::size_t b)
        : std::invalid_argument("duplicate sparse index tuple at entries " + std::to_string(a) + " and " +
                                std::to_string(b)),
          first(a),
          second(b) {}
    std::size_t first, second;
  };

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t order() const noexcept { return dims_.size(); }
  std::size_t nnz() const noexcept { return values_.size(); }

  std::span<const std::size_t> index(std::size_t e) const {
    return {indices_.data() + e * dims_.size(), dims_.size()};
  }
  std::size_t index(std::size_t e, std::size_t mode) const { return indices_[e * dims_.size() + mode]; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  const std::vector<std::size_t>& raw_indices() const noexcept { return indices_; }

  std::size_t linear_index(std::size_t e) const {
    std::size_t lin = 0;
    for (std::size_t m = dims_.size(); m-- > 0;) lin = lin * dims_[m] + index(e, m);
    return lin;
  }

  /// Same index set, different values (used for the observed-entry parts of
  /// split variables).
  SparseTensor with_values(std::vector<double> values) const {
    if (values.size() != values_.size()) throw std::invalid_argument("value count mismatch");
    SparseTensor out;
    out.dims_ = dims_;
    out.indices_ = indices_;
    out.values_ = std::move(values);
    return out;
  }

  double squared_norm() const {
    double s = 0.0;
    for (double v : values_) s += v * v;
    return s;
  }
  double norm() const { return std::sqrt(squared_norm()); }

  DenseTensor to_dense(std::size_t budget = kDefaultElementBudget) const {
    if (detail::checked_product(dims_) > budget)
      throw std::length_error("densifying sparse tensor exceeds element budget");
    DenseTensor out(dims_);
    for (std::size_t e = 0; e < nnz(); ++e) out[linear_index(e)] = values_[e];
    return out;
  }

  static SparseTensor from_dense(const DenseTensor& t, bool keep_zeros = false) {
    const std::size_t n = t.order();
    std::vector<std::size_t> idx;
    std::vector<double> vals;
    std::vector<std::size_t> cur(n, 0);
    for (std::size_t lin = 0; lin < t.size(); ++lin) {
      if (keep_zeros || t[lin] != 0.0) {
        idx.insert(idx.end(), cur.begin(), cur.end());
        vals.push_back(t[lin]);
      }
      for (std::size_t m = 0; m < n; ++m) {
        if (++cur[m] < t.dims()[m]) break;
        cur[m] = 0;
      }
    }
    return SparseTensor(t.dims(), std::move(idx), std::move(vals));
  }

  friend bool operator==(const SparseTensor&, const SparseTensor&) = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<std::size_t> indices_;
  std::vector<double> values_;
};

/// Checks that the factor list describes a tensor of the given dims with a
/// common column count; returns that rank.
inline std::size_t check_factors(std::span<const Matrix> factors, std::span<const std::size_t> dims) {
  if (factors.size() != dims.size())
    throw std::invalid_argument("factor count " + std::to_string(factors.size()) + " does not match order " +
                                std::to_string(dims.size()));
  const auto k = static_cast<std::size_t>(factors[0].cols());
  for (std::size_t m = 0; m < factors.size(); ++m) {
    if (static_cast<std::size_t>(factors[m].rows()) != dims[m])
      throw std::invalid_argument("factor " + std::to_string(m) + " has " + std::to_string(factors[m].rows()) +
                                  " rows, expected " + std::to_string(dims[m]));
    if (static_cast<std::size_t>(factors[m].cols()) != k)
      throw std::invalid_argument("factor column counts differ");
  }
  return k;
}

inline std::vector<std::size_t> factor_dims(std::span<const Matrix> factors) {
  std::vector<std::size_t> dims;
  dims.reserve(factors.size());
  for (const auto& f : factors) dims.push_back(static_cast<std::size_t>(f.rows()));
  return dims;
}

/// Mode-d unfolding: element (i_1..i_N) goes to column i_d; the row index
/// runs over the remaining indices with i_N fastest and the lowest remaining
/// mode slowest. With this layout matricize(full(H), d) == kr_skip(H, d) * H_d^T.
inline Matrix matricize(const DenseTensor& t, std::size_t mode, std::size_t budget = kDefaultElementBudget) {
  detail::check_mode(mode, t.order());
  if (t.size() > budget) throw std::length_error("matricize exceeds element budget");
  const auto& dims = t.dims();
  const std::size_t n = dims.size();
  std::vector<std::size_t> stride(n, 0);
  std::size_t s = 1;
  for (std::size_t m = n; m-- > 0;) {
    if (m == mode) continue;
    stride[m] = s;
    s *= dims[m];
  }
  Matrix out(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(dims[mode]));
  std::vector<std::size_t> cur(n, 0);
  for (std::size_t lin = 0; lin < t.size(); ++lin) {
    std::size_t row = 0;
    for (std::size_t m = 0; m < n; ++m) row += cur[m] * stride[m];
    out(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(cur[mode])) = t[lin];
    for (std::size_t m = 0; m < n; ++m) {
      if (++cur[m] < dims[m]) break;
      cur[m] = 0;
    }
  }
  return out;
}

/// Inverse of matricize for the given dims.
inline DenseTensor unmatricize(const Matrix& unfolded, std::size_t mode, std::vector<std::size_t> dims) {
  DenseTensor t(std::move(dims));
  detail::check_mode(mode, t.order());
  const auto& d = t.dims();
  const std::size_t n = d.size();
  std::vector<std::size_t> stride(n, 0);
  std::size_t s = 1;
  for (std::size_t m = n; m-- > 0;) {
    if (m == mode) continue;
    stride[m] = s;
    s *= d[m];
  }
  if (unfolded.rows() != static_cast<Eigen::Index>(s) || unfolded.cols() != static_cast<Eigen::Index>(d[mode]))
    throw std::invalid_argument("unfolded matrix shape does not match dims");
  std::vector<std::size_t> cur(n, 0);
  for (std::size_t lin = 0; lin < t.size(); ++lin) {
    std::size_t row = 0;
    for (std::size_t m = 0; m < n; ++m) row += cur[m] * stride[m];
    t[lin] = unfolded(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(cur[mode]));
    for (std::size_t m = 0; m < n; ++m) {
      if (++cur[m] < d[m]) break;
      cur[m] = 0;
    }
  }
  return t;
}

namespace detail {

inline Matrix khatri_rao_of(const std::vector<const Matrix*>& mats, Eigen::Index k) {
  Matrix acc = Matrix::Ones(1, k);
  for (const Matrix* b : mats) {
    if (b->cols() != k) throw std::invalid_argument("Khatri-Rao operands must share the column count");
    Matrix next(acc.rows() * b->rows(), k);
    for (Eigen::Index j = 0; j < k; ++j)
      for (Eigen::Index i = 0; i < acc.rows(); ++i)
        next.col(j).segment(i * b->rows(), b->rows()) = acc(i, j) * b->col(j);
    acc = std::move(next);
  }
  return acc;
}

}  // namespace detail

/// Column-wise Kronecker product A_1 ⊙ A_2 ⊙ ... ; the first matrix varies
/// slowest across rows.
inline Matrix khatri_rao(std::span<const Matrix> mats) {
  if (mats.empty()) throw std::invalid_argument("khatri_rao needs at least one matrix");
  std::vector<const Matrix*> ptrs;
  for (const auto& m : mats) ptrs.push_back(&m);
  return detail::khatri_rao_of(ptrs, mats[0].cols());
}

/// Khatri-Rao product of every factor except `mode`, ascending mode order.
inline Matrix kr_skip(std::span<const Matrix> factors, std::size_t mode) {
  detail::check_mode(mode, factors.size());
  if (factors.size() < 2) throw std::invalid_argument("kr_skip needs at least two factors");
  std::vector<const Matrix*> ptrs;
  for (std::size_t m = 0; m < factors.size(); ++m)
    if (m != mode) ptrs.push_back(&factors[m]);
  return detail::khatri_rao_of(ptrs, factors[0].cols());
}

/// Hadamard product of A_j^T B_j over j != mode. With A == B this is the
/// Gram matrix of kr_skip(A, mode), obtained without forming it.
inline Matrix gram_hadamard_cross(std::span<const Matrix> a, std::span<const Matrix> b, std::size_t mode) {
  detail::check_mode(mode, a.size());
  if (a.size() != b.size()) throw std::invalid_argument("factor lists differ in length");
  const Eigen::Index k = a[0].cols();
  Matrix g = Matrix::Ones(k, k);
  for (std::size_t m = 0; m < a.size(); ++m) {
    if (m == mode) continue;
    if (a[m].rows() != b[m].rows() || a[m].cols() != k || b[m].cols() != k)
      throw std::invalid_argument("factors are not conformable");
    g.array() *= (a[m].transpose() * b[m]).array();
  }
  return g;
}

inline Matrix gram_hadamard(std::span<const Matrix> factors, std::size_t mode) {
  return gram_hadamard_cross(factors, factors, mode);
}

/// Value of the CP model at one index tuple.
inline double model_entry(std::span<const Matrix> factors, std::span<const std::size_t> idx) {
  const Eigen::Index k = factors[0].cols();
  double s = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    double p = 1.0;
    for (std::size_t m = 0; m < factors.size(); ++m) p *= factors[m](static_cast<Eigen::Index>(idx[m]), j);
    s += p;
  }
  return s;
}

/// Model values at the stored entries of `t`.
inline std::vector<double> model_at(const SparseTensor& t, std::span<const Matrix> factors) {
  check_factors(factors, t.dims());
  const std::size_t n = t.order();
  // transposed copies make each factor row a contiguous column
  std::vector<Matrix> rows(n);
  for (std::size_t m = 0; m < n; ++m) rows[m] = factors[m].transpose();
  const auto k = static_cast<std::size_t>(factors[0].cols());
  std::vector<double> out(t.nnz());
  std::vector<double> prod(k);
  for (std::size_t e = 0; e < t.nnz(); ++e) {
    const double* r0 = rows[0].data() + t.index(e, 0) * k;
    std::copy(r0, r0 + k, prod.begin());
    for (std::size_t m = 1; m < n; ++m) {
      const double* rm = rows[m].data() + t.index(e, m) * k;
      for (std::size_t j = 0; j < k; ++j) prod[j] *= rm[j];
    }
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += prod[j];
    out[e] = s;
  }
  return out;
}

/// F = kr_skip(H, mode)^T * matricize(t, mode), returned k x n_mode. The
/// tensor is walked as (left, n_mode, right) slabs so neither the unfolding
/// nor the full Khatri-Rao product is formed.
inline Matrix mttkrp(const DenseTensor& t, std::span<const Matrix> factors, std::size_t mode,
                     std::size_t threads = 1) {
  detail::check_mode(mode, t.order());
  const auto k = static_cast<Eigen::Index>(check_factors(factors, t.dims()));
  const auto& dims = t.dims();

  std::vector<const Matrix*> lo, hi;
  for (std::size_t m = mode; m-- > 0;) lo.push_back(&factors[m]);
  for (std::size_t m = dims.size(); m-- > mode + 1;) hi.push_back(&factors[m]);
  const Matrix left = detail::khatri_rao_of(lo, k);
  const Matrix right = detail::khatri_rao_of(hi, k);

  const Eigen::Index nl = left.rows();
  const auto nd = static_cast<Eigen::Index>(dims[mode]);
  const auto nr = static_cast<std::size_t>(right.rows());

  std::vector<Matrix> partial(std::max<std::size_t>(1, std::min(resolve_threads(threads), nr)));
  const std::size_t used = parallel_chunks(nr, resolve_threads(threads), [&](std::size_t c, std::size_t b, std::size_t e) {
    Matrix acc = Matrix::Zero(nd, k);
    for (std::size_t r = b; r < e; ++r) {
      Eigen::Map<const Matrix> slab(t.data() + r * static_cast<std::size_t>(nl * nd), nl, nd);
      Matrix tmp = slab.transpose() * left;
      acc.array() += tmp.array().rowwise() * right.row(static_cast<Eigen::Index>(r)).array();
    }
    partial[c] = std::move(acc);
  });
  Matrix out = partial[0];
  for (std::size_t c = 1; c < used; ++c) out += partial[c];
  return out.transpose();
}

/// MTTKRP over the index pattern of `t` with substituted `values`.
inline Matrix mttkrp_values(const SparseTensor& t, std::span<const double> values, std::span<const Matrix> factors,
                            std::size_t mode, std::size_t threads = 1) {
  detail::check_mode(mode, t.order());
  if (values.size() != t.nnz()) throw std::invalid_argument("value count does not match sparse pattern");
  const auto k = static_cast<Eigen::Index>(check_factors(factors, t.dims()));
  const auto nd = static_cast<Eigen::Index>(t.dims()[mode]);
  const std::size_t n = t.order();
  const std::size_t nnz = t.nnz();
  if (nnz == 0) return Matrix::Zero(k, nd);

  // transposed copies make each factor row a contiguous column
  std::vector<Matrix> rows(n);
  for (std::size_t m = 0; m < n; ++m)
    if (m != mode) rows[m] = factors[m].transpose();
  std::vector<Matrix> partial(std::max<std::size_t>(1, std::min(resolve_threads(threads), nnz)));
  const std::size_t used = parallel_chunks(nnz, resolve_threads(threads), [&](std::size_t c, std::size_t b, std::size_t e) {
    Matrix acc = Matrix::Zero(k, nd);
    const auto ku = static_cast<std::size_t>(k);
    std::vector<double> row(ku);
    for (std::size_t i = b; i < e; ++i) {
      std::fill(row.begin(), row.end(), values[i]);
      for (std::size_t m = 0; m < n; ++m) {
        if (m == mode) continue;
        const double* rm = rows[m].data() + t.index(i, m) * ku;
        for (std::size_t j = 0; j < ku; ++j) row[j] *= rm[j];
      }
      double* a = acc.data() + t.index(i, mode) * ku;
      for (std::size_t j = 0; j < ku; ++j) a[j] += row[j];
    }
    partial[c] = std::move(acc);
  });
  Matrix out = partial[0];
  for (std::size_t c = 1; c < used; ++c) out += partial[c];
  return out;
}

/// Sparse MTTKRP: only stored entries contribute.
inline Matrix mttkrp(const SparseTensor& t, std::span<const Matrix> factors, std::size_t mode,
                     std::size_t threads = 1) {
  return mttkrp_values(t, t.values(), factors, mode, threads);
}

/// Dense reconstruction sum_j prod_d H_d(i_d, j).
inline DenseTensor full(std::span<const Matrix> factors, std::size_t budget = kDefaultElementBudget) {
  if (factors.size() < 2) throw std::invalid_argument("full needs at least two factors");
  const auto dims = factor_dims(factors);
  check_factors(factors, dims);
  detail::check_dims(dims);
  if (detail::checked_product(dims) > budget) throw std::length_error("full() exceeds element budget");
  std::vector<const Matrix*> rest;
  for (std::size_t m = factors.size(); m-- > 1;) rest.push_back(&factors[m]);
  const Matrix kr = detail::khatri_rao_of(rest, factors[0].cols());
  DenseTensor out(dims);
  Eigen::Map<Matrix> view(out.data(), factors[0].rows(), kr.rows());
  view.noalias() = factors[0] * kr.transpose();
  return out;
}

/// <Y, [H]> for sparse Y.
inline double inner_with_model(const SparseTensor& t, std::span<const Matrix> factors) {
  const std::vector<double> m = model_at(t, factors);
  double s = 0.0;
  for (std::size_t e = 0; e < t.nnz(); ++e) s += t.values()[e] * m[e];
  return s;
}

/// ||[H]||_F^2 = sum of all entries of the Hadamard product of all Grams.
inline double model_squared_norm(std::span<const Matrix> factors) {
  const Eigen::Index k = factors[0].cols();
  Matrix g = Matrix::Ones(k, k);
  for (const auto& f : factors) g.array() *= (f.transpose() * f).array();
  return g.sum();
}

/// ||Y - [H]||_F / ||Y||_F. `mask` (same layout as t, nonzero = observed)
/// restricts both norms to observed entries.
inline double relative_error(const DenseTensor& t, std::span<const Matrix> factors,
                             const std::vector<std::uint8_t>* mask = nullptr) {
  check_factors(factors, t.dims());
  if (mask && mask->size() != t.size()) throw std::invalid_argument("mask size does not match tensor");
  const DenseTensor model = full(factors);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (mask && !(*mask)[i]) continue;
    const double r = t[i] - model[i];
    num += r * r;
    den += t[i] * t[i];
  }
  if (den == 0.0) throw std::domain_error("relative error undefined for zero-norm data");
  return std::sqrt(num / den);
}

/// Sparse variant. With `observed_only` the unlisted entries are missing;
/// otherwise they count as zeros and the residual norm is obtained through
/// ||Y||^2 - 2<Y,M> + ||M||^2 without densifying.
inline double relative_error(const SparseTensor& t, std::span<const Matrix> factors, bool observed_only) {
  check_factors(factors, t.dims());
  const double den = t.squared_norm();
  if (den == 0.0) throw std::domain_error("relative error undefined for zero-norm data");
  double num = 0.0;
  if (observed_only) {
    const std::vector<double> m = model_at(t, factors);
    for (std::size_t e = 0; e < t.nnz(); ++e) {
      const double r = t.values()[e] - m[e];
      num += r * r;
    }
  } else {
    num = std::max(0.0, den - 2.0 * inner_with_model(t, factors) + model_squared_norm(factors));
  }
  return std::sqrt(num / den);
}

}  // namespace factorforge
