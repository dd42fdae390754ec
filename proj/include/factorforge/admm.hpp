// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Cholesky>

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <variant>
#include <vector>

#include "factorforge/loss.hpp"
#include "factorforge/prox.hpp"
#include "factorforge/tensor.hpp"

namespace factorforge {

using TensorData = std::variant<DenseTensor, SparseTensor>;

inline const std::vector<std::size_t>& dims_of(const TensorData& t) {
  return std::visit([](const auto& x) -> const std::vector<std::size_t>& { return x.dims(); }, t);
}

inline Matrix mttkrp(const TensorData& t, std::span<const Matrix> factors, std::size_t mode, std::size_t threads = 1) {
  return std::visit([&](const auto& x) { return mttkrp(x, factors, mode, threads); }, t);
}

/// Work counters reported to the driver's convergence log.
struct Counters {
  std::size_t factorizations = 0;
  std::size_t inner_iterations = 0;
  std::size_t mttkrp_calls = 0;
};

enum class LemmaPolicy { automatic, always, never };

struct CacheOptions {
  /// Extra ridge added next to rho + mu (Frobenius safeguard weight).
  double ridge = 0.0;
  LemmaPolicy lemma = LemmaPolicy::automatic;
  /// Automatic policy switches to the inversion-lemma path when the row
  /// count of W is below lemma_ratio * k.
  double lemma_ratio = 0.5;
  std::size_t threads = 1;
};

/// Quantities shared by every inner iteration of one subproblem: the Gram
/// matrix, rho, and the Cholesky factor of G + (rho + mu + ridge) I (or of
/// (rho + mu + ridge) I + W W^T on the inversion-lemma path).
struct KernelCache {
  Matrix gram;
  double rho = 0.0;
  double mu = 0.0;
  double ridge = 0.0;
  Matrix chol_lower;
  Matrix mttkrp;  // W^T Y, least-squares path only
  bool has_mttkrp = false;
  bool lemma_mode = false;
  Matrix w;  // explicit W, inversion-lemma path only

  double shift() const noexcept { return rho + mu + ridge; }
  Eigen::Index rank() const noexcept { return gram.rows(); }
};

struct InitializationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Builds the cache for updating factor `mode` of `factors` against `data`.
/// `with_mttkrp` computes F = W^T Y once (least-squares loss); the general
/// loss path recomputes W^T (Ytilde + V) every iteration instead.
inline KernelCache build_cache(std::span<const Matrix> factors, std::size_t mode, const TensorData& data, double mu,
                               bool with_mttkrp, const CacheOptions& opts = {}, Counters* counters = nullptr) {
  const auto& dims = dims_of(data);
  const auto k = static_cast<Eigen::Index>(check_factors(factors, dims));
  if (mu < 0.0 || opts.ridge < 0.0) throw std::invalid_argument("mu and ridge must be nonnegative");

  KernelCache c;
  c.gram = gram_hadamard(factors, mode);
  const double tr = c.gram.trace();
  if (!(tr > 0.0) || !std::isfinite(tr))
    throw InitializationError("Gram matrix has zero trace (all-zero factors); re-draw the initialization");
  c.rho = tr / static_cast<double>(k);
  c.mu = mu;
  c.ridge = opts.ridge;

  std::size_t m = 1;
  for (std::size_t j = 0; j < dims.size(); ++j)
    if (j != mode) m *= dims[j];
  switch (opts.lemma) {
    case LemmaPolicy::always: c.lemma_mode = true; break;
    case LemmaPolicy::never: c.lemma_mode = false; break;
    case LemmaPolicy::automatic:
      c.lemma_mode = static_cast<double>(m) < opts.lemma_ratio * static_cast<double>(k);
      break;
  }

  Matrix system;
  if (c.lemma_mode) {
    c.w = kr_skip(factors, mode);
    system = c.w * c.w.transpose();
  } else {
    system = c.gram;
  }
  system.diagonal().array() += c.shift();
  Eigen::LLT<Matrix> llt(system);
  if (llt.info() != Eigen::Success) throw std::runtime_error("Cholesky factorization failed");
  c.chol_lower = llt.matrixL();
  if (counters) ++counters->factorizations;

  if (with_mttkrp) {
    c.mttkrp = factorforge::mttkrp(data, factors, mode, opts.threads);
    c.has_mttkrp = true;
    if (counters) ++counters->mttkrp_calls;
  }
  return c;
}

/// (G + (rho + mu + ridge) I)^{-1} rhs by one forward and one backward
/// substitution, or through the inversion lemma when the cache says so.
inline Matrix solve_ls_system(const KernelCache& cache, const Matrix& rhs) {
  if (rhs.rows() != cache.rank()) throw std::invalid_argument("right-hand side has wrong row count");
  if (!rhs.allFinite()) throw std::invalid_argument("right-hand side contains non-finite values");
  const auto lower = cache.chol_lower.triangularView<Eigen::Lower>();
  const auto upper = cache.chol_lower.transpose().triangularView<Eigen::Upper>();
  if (!cache.lemma_mode) {
    Matrix x = lower.solve(rhs);
    upper.solveInPlace(x);
    return x;
  }
  Matrix t = lower.solve(cache.w * rhs);
  upper.solveInPlace(t);
  return (rhs - cache.w.transpose() * t) / cache.shift();
}

struct AdmmReport {
  std::size_t iterations = 0;
  double r = std::numeric_limits<double>::infinity();
  double s = std::numeric_limits<double>::infinity();
  bool converged = false;
};

namespace detail {

inline double safe_ratio(double num, double den) {
  if (den > 0.0) return num / den;
  return num > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
}

}  // namespace detail

/// Relative primal residual r = ||H - Ht^T||^2 / ||H||^2 and relative dual
/// residual s = ||H - H0||^2 / ||U||^2. x/0 is +inf, 0/0 is 0.
/// Squared norms below (64 eps_mach)^2 ||H||^2 count as zero in s, so a
/// step that only moves H by rounding error does not read as s ~ 1.
inline std::pair<double, double> residuals(const Matrix& h, const Matrix& htilde, const Matrix& u, const Matrix& h0) {
  if (htilde.rows() != h.cols() || htilde.cols() != h.rows() || u.rows() != h.rows() || u.cols() != h.cols() ||
      h0.rows() != h.rows() || h0.cols() != h.cols())
    throw std::invalid_argument("residual operands have mismatched shapes");
  const double hn = h.squaredNorm();
  const double r = detail::safe_ratio((h - htilde.transpose()).squaredNorm(), hn);
  const double tiny = std::pow(64.0 * std::numeric_limits<double>::epsilon(), 2) * hn;
  auto floored = [tiny](double x) { return x <= tiny ? 0.0 : x; };
  const double s = detail::safe_ratio(floored((h - h0).squaredNorm()), floored(u.squaredNorm()));
  return {r, s};
}

struct InnerOptions {
  double eps = 0.01;
  std::size_t max_iter = 10;
  std::size_t threads = 1;
};

namespace detail {

inline void check_inner(const InnerOptions& o) {
  if (!(o.eps > 0.0)) throw std::invalid_argument("inner tolerance must be > 0");
}

inline Matrix proximal_rhs(const KernelCache& cache, const Matrix& base, const Matrix& h, const Matrix& u,
                           const Matrix* h_prev) {
  Matrix rhs = base + cache.rho * (h + u).transpose();
  if (cache.mu > 0.0 && h_prev) rhs += cache.mu * h_prev->transpose();
  return rhs;
}

}  // namespace detail

/// ADMM for min_H (1/2)||Y - W H^T||^2 + r(H) + (mu/2)||H - H_prev||^2 with
/// the cached F = W^T Y. H (n x k) and U are updated in place from their
/// warm-start values. `h_prev` defaults to the incoming H.
inline AdmmReport admm_ls(const KernelCache& cache, Matrix& h, Matrix& u, const RegularizerSpec& spec,
                          const InnerOptions& opts, const Matrix* h_prev = nullptr, Counters* counters = nullptr) {
  detail::check_inner(opts);
  if (opts.max_iter < 1) throw std::invalid_argument("inner max_iter must be >= 1");
  if (!cache.has_mttkrp) throw std::invalid_argument("least-squares ADMM needs the cached MTTKRP");
  if (h.cols() != cache.rank() || cache.mttkrp.cols() != h.rows() || u.rows() != h.rows() || u.cols() != h.cols())
    throw std::invalid_argument("factor, dual and cache shapes disagree");
  const Matrix anchor = (cache.mu > 0.0 && !h_prev) ? h : Matrix();
  const Matrix* prev = h_prev ? h_prev : &anchor;

  AdmmReport rep;
  for (std::size_t it = 0; it < opts.max_iter; ++it) {
    const Matrix h0 = h;
    const Matrix htilde = solve_ls_system(cache, detail::proximal_rhs(cache, cache.mttkrp, h, u, prev));
    h = prox_apply(spec, htilde.transpose() - u, cache.rho);
    u += h - htilde.transpose();
    std::tie(rep.r, rep.s) = residuals(h, htilde, u, h0);
    rep.iterations = it + 1;
    if (counters) ++counters->inner_iterations;
    if (rep.r < opts.eps && rep.s < opts.eps) {
      rep.converged = true;
      break;
    }
  }
  return rep;
}

namespace detail {

/// W^T (Ytilde + V) for the current split state.
inline Matrix split_mttkrp(const TensorData& data, const SplitState& split, std::span<const Matrix> factors,
                           std::size_t mode, std::size_t threads) {
  if (!split.sparse_structured) {
    DenseTensor sum = split.ytilde;
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += split.v[i];
    return mttkrp(sum, factors, mode, threads);
  }
  const auto& y = std::get<SparseTensor>(data);
  std::vector<double> corr = split.lowrank.empty() ? std::vector<double>(y.nnz(), 0.0) : model_at(y, split.lowrank);
  for (std::size_t e = 0; e < y.nnz(); ++e) corr[e] = split.ytilde_obs[e] + split.v_obs[e] - corr[e];
  Matrix f = mttkrp_values(y, corr, factors, mode, threads);
  if (!split.lowrank.empty())
    f += gram_hadamard_cross(factors, split.lowrank, mode) * split.lowrank[mode].transpose();
  return f;
}

inline void check_split(const TensorData& data, const SplitState& split, const LossSpec& loss) {
  if (split.sparse_structured) {
    const auto* y = std::get_if<SparseTensor>(&data);
    if (!y) throw std::invalid_argument("sparse-structured split state needs SparseTensor data");
    if (loss.mask_source != MaskSource::unlisted_entries)
      throw std::invalid_argument("sparse-structured split state needs a loss masked to the listed entries");
    if (split.ytilde_obs.size() != y->nnz() || split.v_obs.size() != y->nnz())
      throw std::invalid_argument("split state does not match the data pattern");
  } else {
    const auto* y = std::get_if<DenseTensor>(&data);
    if (!y) throw std::invalid_argument("dense split state needs DenseTensor data");
    if (split.ytilde.dims() != y->dims() || split.v.dims() != y->dims())
      throw std::invalid_argument("split state shape does not match the data");
    if (loss.mask_source == MaskSource::unlisted_entries)
      throw std::invalid_argument("unlisted-entries mask needs SparseTensor data");
    if (loss.mask_source == MaskSource::bitmask && loss.mask.size() != y->size())
      throw std::invalid_argument("loss mask size does not match the data");
  }
}

}  // namespace detail

/// ADMM for min_H l(Y - W H^T) + r(H) with the split Ytilde = W Htilde and
/// unit penalty on that constraint. `factors` supplies W (its entry at
/// `mode` is ignored); H, U and the split state are updated in place.
inline AdmmReport admm_general(const KernelCache& cache, const TensorData& data, std::span<const Matrix> factors,
                               std::size_t mode, Matrix& h, Matrix& u, SplitState& split, const RegularizerSpec& spec,
                               const LossSpec& loss, const InnerOptions& opts, const Matrix* h_prev = nullptr,
                               Counters* counters = nullptr) {
  detail::check_inner(opts);
  loss.validate();
  detail::check_split(data, split, loss);
  check_factors(factors, dims_of(data));
  if (h.cols() != cache.rank() || h.rows() != factors[mode].rows() || u.rows() != h.rows() || u.cols() != h.cols())
    throw std::invalid_argument("factor, dual and cache shapes disagree");
  const Matrix anchor = (cache.mu > 0.0 && !h_prev) ? h : Matrix();
  const Matrix* prev = h_prev ? h_prev : &anchor;

  std::vector<Matrix> trial(factors.begin(), factors.end());
  AdmmReport rep;
  for (std::size_t it = 0; it < opts.max_iter; ++it) {
    const Matrix h0 = h;
    const Matrix f = detail::split_mttkrp(data, split, factors, mode, opts.threads);
    if (counters) ++counters->mttkrp_calls;
    const Matrix htilde = solve_ls_system(cache, detail::proximal_rhs(cache, f, h, u, prev));
    h = prox_apply(spec, htilde.transpose() - u, cache.rho);
    trial[mode] = htilde.transpose();

    if (!split.sparse_structured) {
      const auto& y = std::get<DenseTensor>(data);
      const DenseTensor model = full(trial);
      std::vector<double> ybar(model.size());
      for (std::size_t i = 0; i < ybar.size(); ++i) ybar[i] = model[i] - split.v[i];
      const std::uint8_t* observed = loss.mask_source == MaskSource::bitmask ? loss.mask.data() : nullptr;
      y_update(loss, y.values(), ybar, split.ytilde.values(), observed);
      v_update(split.v.values(), split.ytilde.values(), model.values());
    } else {
      const auto& y = std::get<SparseTensor>(data);
      const std::vector<double> model = model_at(y, trial);
      for (std::size_t e = 0; e < y.nnz(); ++e) {
        const double m = model[e];
        split.ytilde_obs[e] = y_update_scalar(loss, y.values()[e], m - split.v_obs[e]);
        split.v_obs[e] += split.ytilde_obs[e] - m;
      }
      split.lowrank = trial;
    }
    u += h - htilde.transpose();

    std::tie(rep.r, rep.s) = residuals(h, htilde, u, h0);
    rep.iterations = it + 1;
    if (counters) ++counters->inner_iterations;
    if (rep.r < opts.eps && rep.s < opts.eps) {
      rep.converged = true;
      break;
    }
  }
  return rep;
}

}  // namespace factorforge
