// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "factorforge/tensor.hpp"

namespace factorforge {

enum class RegKind { none, nonneg, box, l1, simplex, smooth, tikhonov, unit_norm_columns, nonneg_composed };
enum class Axis { rows, columns };

inline std::string_view to_string(RegKind k) {
  switch (k) {
    case RegKind::none: return "none";
    case RegKind::nonneg: return "nonneg";
    case RegKind::box: return "box";
    case RegKind::l1: return "l1";
    case RegKind::simplex: return "simplex";
    case RegKind::smooth: return "smooth";
    case RegKind::tikhonov: return "tikhonov";
    case RegKind::unit_norm_columns: return "unit-norm-columns";
    case RegKind::nonneg_composed: return "nonneg-composed";
  }
  return "none";
}

inline RegKind reg_kind_from_string(std::string_view s) {
  for (RegKind k : {RegKind::none, RegKind::nonneg, RegKind::box, RegKind::l1, RegKind::simplex, RegKind::smooth,
                    RegKind::tikhonov, RegKind::unit_norm_columns, RegKind::nonneg_composed})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown regularizer kind '" + std::string(s) + "'");
}

/// Regularizer r(H) on one factor matrix (rows index the mode, columns the
/// rank). `ones_columns` pins the listed columns to the all-ones vector after
/// the main operator; this is how bias terms are expressed.
struct RegularizerSpec {
  RegKind kind = RegKind::none;
  double lambda = 0.0;
  Axis axis = Axis::columns;
  double lo = 0.0;
  double hi = 1.0;
  std::vector<RegularizerSpec> inner;  // exactly one element for nonneg_composed
  std::vector<std::size_t> ones_columns;

  static RegularizerSpec none() { return {}; }
  static RegularizerSpec nonneg() { return make(RegKind::nonneg); }
  static RegularizerSpec box(double lo, double hi) {
    auto s = make(RegKind::box);
    s.lo = lo;
    s.hi = hi;
    return s;
  }
  static RegularizerSpec l1(double lambda) { return make(RegKind::l1, lambda); }
  static RegularizerSpec simplex(Axis axis) {
    auto s = make(RegKind::simplex);
    s.axis = axis;
    return s;
  }
  static RegularizerSpec smooth(double lambda) { return make(RegKind::smooth, lambda); }
  static RegularizerSpec tikhonov(double lambda) { return make(RegKind::tikhonov, lambda); }
  static RegularizerSpec unit_norm_columns() { return make(RegKind::unit_norm_columns); }
  static RegularizerSpec nonneg_composed(RegularizerSpec inner) {
    auto s = make(RegKind::nonneg_composed);
    s.inner.push_back(std::move(inner));
    return s;
  }

  void validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("regularizer lambda must be >= 0");
    if (kind == RegKind::box && !(lo <= hi)) throw std::invalid_argument("box bounds require lo <= hi");
    if (kind == RegKind::nonneg_composed) {
      if (inner.size() != 1) throw std::invalid_argument("nonneg-composed needs exactly one inner regularizer");
      const RegularizerSpec& in = inner.front();
      switch (in.kind) {
        case RegKind::none:
        case RegKind::l1:
        case RegKind::tikhonov:
        case RegKind::unit_norm_columns:
        case RegKind::nonneg:
          break;
        case RegKind::box:
          if (in.hi < 0.0) throw std::invalid_argument("nonneg-composed box needs hi >= 0");
          break;
        default:
          // clamping first is only the exact prox when the inner operator
          // commutes with the nonnegative projection
          throw std::invalid_argument("nonneg-composed does not support inner kind " +
                                      std::string(to_string(in.kind)));
      }
      in.validate();
      if (!in.ones_columns.empty()) throw std::invalid_argument("ones_columns belong on the outer regularizer");
    } else if (!inner.empty()) {
      throw std::invalid_argument("only nonneg-composed takes an inner regularizer");
    }
    if (!ones_columns.empty() && kind == RegKind::simplex && axis == Axis::rows)
      throw std::invalid_argument("ones_columns cannot be combined with a row simplex");
  }

  friend bool operator==(const RegularizerSpec&, const RegularizerSpec&) = default;

 private:
  static RegularizerSpec make(RegKind k, double lambda = 0.0) {
    RegularizerSpec s;
    s.kind = k;
    s.lambda = lambda;
    return s;
  }
};

namespace detail {

/// Euclidean projection of v onto {x >= 0, sum x = 1} by sort-and-threshold.
inline void project_simplex(Eigen::Ref<Vector> v) {
  const Eigen::Index n = v.size();
  if (n == 0) return;
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    cum += u[static_cast<std::size_t>(j)];
    const double t = (cum - 1.0) / static_cast<double>(j + 1);
    if (u[static_cast<std::size_t>(j)] - t > 0.0) theta = t;
  }
  for (Eigen::Index j = 0; j < n; ++j) v(j) = std::max(v(j) - theta, 0.0);
}

/// Solves (lambda T^T T + rho I) X = rho * B column by column, T the n x n
/// second-difference matrix (2 on the diagonal, -1 off it). The system is
/// pentadiagonal, so a banded Cholesky keeps this O(n k).
inline Matrix smooth_solve(const Matrix& b, double lambda, double rho) {
  const Eigen::Index n = b.rows();
  if (n == 0) return b;
  // band(i, 2) = A(i,i), band(i, 1) = A(i,i-1), band(i, 0) = A(i,i-2)
  Eigen::Matrix<double, Eigen::Dynamic, 3> a(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int neighbours = (i > 0) + (i + 1 < n);
    a(i, 2) = lambda * (4.0 + neighbours) + rho;
    a(i, 1) = i >= 1 ? -4.0 * lambda : 0.0;
    a(i, 0) = i >= 2 ? lambda : 0.0;
  }
  Eigen::Matrix<double, Eigen::Dynamic, 3> l = Eigen::Matrix<double, Eigen::Dynamic, 3>::Zero(n, 3);
  auto lval = [&](Eigen::Index i, Eigen::Index j) -> double {  // L(i, j), |i - j| <= 2
    if (j < 0 || i - j > 2 || j > i) return 0.0;
    return l(i, 2 - (i - j));
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = std::max<Eigen::Index>(0, i - 2); j <= i; ++j) {
      double s = a(i, 2 - (i - j));
      for (Eigen::Index q = std::max<Eigen::Index>(0, i - 2); q < j; ++q) s -= lval(i, q) * lval(j, q);
      if (i == j) {
        if (!(s > 0.0)) throw std::runtime_error("smoothness system is not positive definite");
        l(i, 2) = std::sqrt(s);
      } else {
        l(i, 2 - (i - j)) = s / l(j, 2);
      }
    }
  }
  Matrix x = rho * b;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    auto col = x.col(c);
    for (Eigen::Index i = 0; i < n; ++i) {
      double s = col(i);
      for (Eigen::Index q = std::max<Eigen::Index>(0, i - 2); q < i; ++q) s -= lval(i, q) * col(q);
      col(i) = s / l(i, 2);
    }
    for (Eigen::Index i = n; i-- > 0;) {
      double s = col(i);
      for (Eigen::Index q = i + 1; q <= std::min<Eigen::Index>(n - 1, i + 2); ++q) s -= lval(q, i) * col(q);
      col(i) = s / l(i, 2);
    }
  }
  return x;
}

inline Matrix second_difference(Eigen::Index n) {
  Matrix t = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    t(i, i) = 2.0;
    if (i > 0) t(i, i - 1) = -1.0;
    if (i + 1 < n) t(i, i + 1) = -1.0;
  }
  return t;
}

inline Matrix prox_core(const RegularizerSpec& spec, const Matrix& hbar, double rho) {
  switch (spec.kind) {
    case RegKind::none:
      return hbar;
    case RegKind::nonneg:
      return hbar.cwiseMax(0.0);
    case RegKind::box:
      return hbar.cwiseMax(spec.lo).cwiseMin(spec.hi);
    case RegKind::l1: {
      const double t = spec.lambda / rho;
      return hbar.unaryExpr([t](double h) { return std::copysign(std::max(std::abs(h) - t, 0.0), h); })
          .unaryExpr([](double h) { return h == 0.0 ? 0.0 : h; });
    }
    case RegKind::simplex: {
      Matrix out = hbar;
      if (spec.axis == Axis::columns) {
        for (Eigen::Index c = 0; c < out.cols(); ++c) {
          Vector v = out.col(c);
          project_simplex(v);
          out.col(c) = v;
        }
      } else {
        for (Eigen::Index r = 0; r < out.rows(); ++r) {
          Vector v = out.row(r).transpose();
          project_simplex(v);
          out.row(r) = v.transpose();
        }
      }
      return out;
    }
    case RegKind::smooth:
      if (spec.lambda == 0.0) return hbar;
      return smooth_solve(hbar, spec.lambda, rho);
    case RegKind::tikhonov:
      return (rho / (spec.lambda + rho)) * hbar;
    case RegKind::unit_norm_columns: {
      Matrix out = hbar;
      for (Eigen::Index c = 0; c < out.cols(); ++c) out.col(c) /= std::max(1.0, out.col(c).norm());
      return out;
    }
    case RegKind::nonneg_composed:
      return prox_core(spec.inner.front(), hbar.cwiseMax(0.0), rho);
  }
  return hbar;
}

}  // namespace detail

/// argmin_H r(H) + (rho/2) ||H - Hbar||_F^2.
inline Matrix prox_apply(const RegularizerSpec& spec, const Matrix& hbar, double rho) {
  if (!(rho > 0.0) || !std::isfinite(rho)) throw std::invalid_argument("prox requires rho > 0");
  if (!hbar.allFinite()) throw std::invalid_argument("prox input contains non-finite values");
  spec.validate();
  Matrix out = detail::prox_core(spec, hbar, rho);
  for (std::size_t c : spec.ones_columns) {
    if (c >= static_cast<std::size_t>(out.cols()))
      throw std::out_of_range("ones column " + std::to_string(c) + " out of range");
    out.col(static_cast<Eigen::Index>(c)).setOnes();
  }
  return out;
}

/// r(H) split into the finite penalty and a separate constraint violation
/// (Frobenius distance to the feasible set) for indicator-type parts.
struct RegValue {
  double value = 0.0;
  double violation = 0.0;
};

namespace detail {

inline RegValue reg_value_core(const RegularizerSpec& spec, const Matrix& h) {
  switch (spec.kind) {
    case RegKind::none:
      return {};
    case RegKind::nonneg:
      return {0.0, h.cwiseMin(0.0).norm()};
    case RegKind::box:
      return {0.0, (h - h.cwiseMax(spec.lo).cwiseMin(spec.hi)).norm()};
    case RegKind::l1:
      return {spec.lambda * h.cwiseAbs().sum(), 0.0};
    case RegKind::simplex:
      return {0.0, (h - prox_core(spec, h, 1.0)).norm()};
    case RegKind::smooth: {
      if (spec.lambda == 0.0) return {};
      return {0.5 * spec.lambda * (second_difference(h.rows()) * h).squaredNorm(), 0.0};
    }
    case RegKind::tikhonov:
      return {0.5 * spec.lambda * h.squaredNorm(), 0.0};
    case RegKind::unit_norm_columns:
      return {0.0, (h - prox_core(spec, h, 1.0)).norm()};
    case RegKind::nonneg_composed: {
      RegValue in = reg_value_core(spec.inner.front(), h);
      const double neg = h.cwiseMin(0.0).norm();
      return {in.value, std::hypot(in.violation, neg)};
    }
  }
  return {};
}

}  // namespace detail

inline RegValue regularizer_value(const RegularizerSpec& spec, const Matrix& h) {
  RegValue v = detail::reg_value_core(spec, h);
  double pin = 0.0;
  for (std::size_t c : spec.ones_columns)
    if (c < static_cast<std::size_t>(h.cols()))
      pin += (h.col(static_cast<Eigen::Index>(c)).array() - 1.0).square().sum();
  v.violation = std::hypot(v.violation, std::sqrt(pin));
  return v;
}

}  // namespace factorforge
