// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "factorforge/tensor.hpp"

namespace factorforge {

enum class LossKind { least_squares, missing, l1, huber, kl };

/// Where the observed set A comes from. `unlisted_entries` means the stored
/// entries of a SparseTensor; `bitmask` is an explicit mask for dense data.
enum class MaskSource { none, unlisted_entries, bitmask };

inline std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::least_squares: return "least-squares";
    case LossKind::missing: return "missing";
    case LossKind::l1: return "l1";
    case LossKind::huber: return "huber";
    case LossKind::kl: return "kl";
  }
  return "least-squares";
}

inline LossKind loss_kind_from_string(std::string_view s) {
  for (LossKind k : {LossKind::least_squares, LossKind::missing, LossKind::l1, LossKind::huber, LossKind::kl})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown loss kind '" + std::string(s) + "'");
}

inline std::string_view to_string(MaskSource m) {
  switch (m) {
    case MaskSource::none: return "none";
    case MaskSource::unlisted_entries: return "unlisted-entries";
    case MaskSource::bitmask: return "bitmask";
  }
  return "none";
}

inline MaskSource mask_source_from_string(std::string_view s) {
  for (MaskSource m : {MaskSource::none, MaskSource::unlisted_entries, MaskSource::bitmask})
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown mask source '" + std::string(s) + "'");
}

/// Data-fidelity term l(Y - M). Any kind may be restricted to an observed
/// set; `missing` is least squares on the observed set. Off the observed set
/// the loss is zero.
struct LossSpec {
  LossKind kind = LossKind::least_squares;
  double lambda = 1.0;  // Huber threshold
  MaskSource mask_source = MaskSource::none;
  std::vector<std::uint8_t> mask;  // used when mask_source == bitmask

  bool masked() const noexcept { return mask_source != MaskSource::none; }

  void validate() const {
    if (kind == LossKind::huber && !(lambda > 0.0)) throw std::invalid_argument("huber lambda must be > 0");
    if (mask_source == MaskSource::bitmask && mask.empty())
      throw std::invalid_argument("bitmask mask source needs a mask");
  }

  friend bool operator==(const LossSpec&, const LossSpec&) = default;
};

namespace detail {

inline double kl_prox(double y, double ybar) {
  const double b = ybar - 1.0;
  const double disc = std::sqrt(b * b + 4.0 * y);
  // positive root of t^2 - b t - y = 0; the second form avoids cancellation
  return b >= 0.0 ? 0.5 * (b + disc) : (y == 0.0 ? 0.0 : 2.0 * y / (disc - b));
}

}  // namespace detail

/// Scalar minimizer of l(y - t) + (1/2)(t - ybar)^2 for an observed entry.
inline double y_update_scalar(const LossSpec& spec, double y, double ybar) {
  switch (spec.kind) {
    case LossKind::least_squares:
    case LossKind::missing:
      return 0.5 * (y + ybar);
    case LossKind::l1: {
      const double d = ybar - y;
      if (d > 1.0) return ybar - 1.0;
      if (d < -1.0) return ybar + 1.0;
      return y;
    }
    case LossKind::huber: {
      if (!(spec.lambda > 0.0)) throw std::invalid_argument("huber lambda must be > 0");
      const double d = ybar - y;
      if (d > 2.0 * spec.lambda) return ybar - spec.lambda;
      if (d < -2.0 * spec.lambda) return ybar + spec.lambda;
      return 0.5 * (ybar + y);
    }
    case LossKind::kl:
      if (y < 0.0) throw std::domain_error("KL loss requires nonnegative data");
      return detail::kl_prox(y, ybar);
  }
  return ybar;
}

/// Elementwise Ytilde update. `observed` (nullable) marks entries inside A;
/// entries outside take ytilde = ybar.
inline void y_update(const LossSpec& spec, std::span<const double> y, std::span<const double> ybar,
                     std::span<double> out, const std::uint8_t* observed = nullptr) {
  if (y.size() != ybar.size() || out.size() != y.size()) throw std::invalid_argument("y_update shape mismatch");
  for (std::size_t i = 0; i < y.size(); ++i)
    out[i] = (observed && !observed[i]) ? ybar[i] : y_update_scalar(spec, y[i], ybar[i]);
}

/// Scaled dual ascent V <- V + Ytilde - W Htilde.
inline void v_update(std::span<double> v, std::span<const double> ytilde, std::span<const double> model) {
  if (v.size() != ytilde.size() || model.size() != v.size()) throw std::invalid_argument("v_update shape mismatch");
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += ytilde[i] - model[i];
}

/// l(y - m) for one observed entry. Returns +inf for KL when m <= 0 < y;
/// callers report that as a constraint violation.
inline double loss_scalar(const LossSpec& spec, double y, double m) {
  const double z = y - m;
  switch (spec.kind) {
    case LossKind::least_squares:
    case LossKind::missing:
      return 0.5 * z * z;
    case LossKind::l1:
      return std::abs(z);
    case LossKind::huber: {
      const double a = std::abs(z);
      return a <= spec.lambda ? 0.5 * z * z : spec.lambda * a - 0.5 * spec.lambda * spec.lambda;
    }
    case LossKind::kl:
      if (y == 0.0) return m >= 0.0 ? m : std::numeric_limits<double>::infinity();
      if (m <= 0.0) return std::numeric_limits<double>::infinity();
      return y * std::log(y / m) - y + m;
  }
  return 0.0;
}

/// Auxiliary variable Ytilde and its scaled dual V for the general-loss
/// solver, stored in the data tensor's linear order.
///
/// Dense form keeps both arrays in full. The sparse-structured form is used
/// for masked losses on SparseTensor data: off the observed set ytilde equals
/// the current model W Htilde and V is zero, so only the observed values are
/// stored together with the factor snapshot that produced the model.
struct SplitState {
  bool sparse_structured = false;

  DenseTensor ytilde;  // dense form
  DenseTensor v;

  std::vector<double> ytilde_obs;  // sparse form, aligned with SparseTensor entries
  std::vector<double> v_obs;
  std::vector<Matrix> lowrank;  // empty until the first inner iteration

  /// Ytilde <- Y, V <- 0.
  static SplitState dense_from(const DenseTensor& y) {
    SplitState s;
    s.ytilde = y;
    s.v = DenseTensor(y.dims());
    return s;
  }

  static SplitState sparse_from(const SparseTensor& y) {
    SplitState s;
    s.sparse_structured = true;
    s.ytilde_obs.assign(y.values().begin(), y.values().end());
    s.v_obs.assign(y.nnz(), 0.0);
    return s;
  }
};

}  // namespace factorforge
