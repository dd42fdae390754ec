// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "factorforge/admm.hpp"
#include "factorforge/loss.hpp"
#include "factorforge/prox.hpp"
#include "factorforge/tensor.hpp"

namespace factorforge {

enum class MuPolicy { automatic, zero, fixed, adaptive };
enum class InitKind { uniform01, abs_gaussian, provided };

struct ProblemConfig {
  std::size_t rank = 1;
  LossSpec loss;
  /// One regularizer per mode, or a single entry applied to every mode.
  std::vector<RegularizerSpec> regs;
  double inner_eps = 0.01;
  std::size_t inner_max_iter = 10;
  std::size_t outer_max_iter = 200;
  double outer_tol = 1e-7;
  /// automatic resolves to adaptive for N >= 3 and zero for N = 2.
  MuPolicy mu_policy = MuPolicy::automatic;
  double mu_value = 0.0;
  double frobenius_safeguard = 0.0;
  std::uint64_t seed = 0;
  bool deterministic = false;
  InitKind init = InitKind::uniform01;
  std::vector<Matrix> initial_factors;  // InitKind::provided
  std::vector<Matrix> initial_duals;    // optional warm duals, provided init only
  /// Share one (Ytilde, V) pair across modes instead of one per mode.
  bool shared_split = false;
  /// Use the observed-entries-only split state when the data allow it.
  bool sparse_state = true;
  LemmaPolicy lemma = LemmaPolicy::automatic;
  /// Per-mode override of `lemma`; empty means `lemma` for every mode.
  std::vector<LemmaPolicy> lemma_modes;
  double lemma_ratio = 0.5;
  /// Route least squares through the general-loss solver.
  bool force_general = false;
  std::size_t threads = 0;  // 0 = default_threads()
  double two_stage_fraction = 0.2;

  const RegularizerSpec& reg(std::size_t mode) const { return regs.size() == 1 ? regs.front() : regs.at(mode); }
  LemmaPolicy lemma_for(std::size_t mode) const { return lemma_modes.empty() ? lemma : lemma_modes.at(mode); }
};

struct TraceRecord {
  std::size_t iter = 0;
  double objective = 0.0;
  double rel_error = 0.0;
  std::vector<std::size_t> inner_iters;  // per mode
  double elapsed_s = 0.0;
  double mu = 0.0;
  double violation = 0.0;
  std::size_t mttkrp_calls = 0;  // cumulative
};

struct FitResult {
  std::vector<Matrix> factors;
  std::vector<Matrix> duals;
  std::vector<TraceRecord> trace;
  bool converged = false;
  double final_mu = 0.0;
  Counters counters;
};

/// Read-only view handed to the per-iteration callback.
struct IterationView {
  const std::vector<TraceRecord>& trace;
  std::span<const Matrix> factors;
};
using IterationCallback = std::function<void(const IterationView&)>;

struct ObjectiveValue {
  double loss = 0.0;
  double reg = 0.0;
  double safeguard = 0.0;
  double violation = 0.0;        // distance to the constraint sets
  std::size_t infinite_terms = 0;  // KL entries with model <= 0 < data, excluded from `loss`
  double total() const noexcept { return loss + reg + safeguard; }
};

namespace detail {

inline std::size_t effective_threads(const ProblemConfig& cfg) {
  return cfg.deterministic ? 1 : resolve_threads(cfg.threads);
}

inline MuPolicy resolve_mu_policy(const ProblemConfig& cfg, std::size_t order) {
  if (cfg.mu_policy != MuPolicy::automatic) return cfg.mu_policy;
  return order >= 3 ? MuPolicy::adaptive : MuPolicy::zero;
}

inline void add_loss(ObjectiveValue& out, const LossSpec& loss, double y, double m) {
  const double v = loss_scalar(loss, y, m);
  if (std::isinf(v))
    ++out.infinite_terms;
  else
    out.loss += v;
}

}  // namespace detail

/// l(Y - [H]) + sum_d r_d(H_d) (+ the Frobenius safeguard), with indicator
/// constraints reported through `violation` rather than as +inf.
inline ObjectiveValue objective(const TensorData& data, std::span<const Matrix> factors, const ProblemConfig& cfg) {
  check_factors(factors, dims_of(data));
  ObjectiveValue out;
  const LossSpec& loss = cfg.loss;
  if (const auto* y = std::get_if<SparseTensor>(&data)) {
    if (loss.mask_source == MaskSource::unlisted_entries) {
      const std::vector<double> m = model_at(*y, factors);
      for (std::size_t e = 0; e < y->nnz(); ++e) detail::add_loss(out, loss, y->values()[e], m[e]);
    } else if (loss.kind == LossKind::least_squares || loss.kind == LossKind::missing) {
      out.loss = 0.5 * std::max(0.0, y->squared_norm() - 2.0 * inner_with_model(*y, factors) +
                                          model_squared_norm(factors));
    } else {
      const DenseTensor dense = y->to_dense();
      const DenseTensor model = full(factors);
      for (std::size_t i = 0; i < dense.size(); ++i) detail::add_loss(out, loss, dense[i], model[i]);
    }
  } else {
    const auto& t = std::get<DenseTensor>(data);
    const DenseTensor model = full(factors);
    const bool use_mask = loss.mask_source == MaskSource::bitmask;
    if (use_mask && loss.mask.size() != t.size()) throw std::invalid_argument("loss mask size does not match data");
    for (std::size_t i = 0; i < t.size(); ++i)
      if (!use_mask || loss.mask[i]) detail::add_loss(out, loss, t[i], model[i]);
  }
  double viol2 = 0.0;
  for (std::size_t d = 0; d < factors.size(); ++d) {
    const RegValue rv = regularizer_value(cfg.reg(d), factors[d]);
    out.reg += rv.value;
    viol2 += rv.violation * rv.violation;
    out.safeguard += 0.5 * cfg.frobenius_safeguard * factors[d].squaredNorm();
  }
  out.violation = std::sqrt(viol2);
  return out;
}

/// Relative fit error, restricted to the observed set for masked losses.
inline double fit_relative_error(const TensorData& data, std::span<const Matrix> factors, const LossSpec& loss) {
  if (const auto* y = std::get_if<SparseTensor>(&data))
    return relative_error(*y, factors, loss.mask_source == MaskSource::unlisted_entries);
  const auto& y = std::get<DenseTensor>(data);
  return relative_error(y, factors, loss.mask_source == MaskSource::bitmask ? &loss.mask : nullptr);
}

/// mu <- 1e-7 + 0.01 ||Y - [H]|| / ||Y|| for the adaptive policy; other
/// policies pass `current_mu` (zero policy: 0) through.
inline double update_mu(const TensorData& data, std::span<const Matrix> factors, double current_mu, MuPolicy policy,
                        const LossSpec& loss = {}) {
  switch (policy) {
    case MuPolicy::zero: return 0.0;
    case MuPolicy::fixed:
    case MuPolicy::automatic: return current_mu;
    case MuPolicy::adaptive: return 1e-7 + 0.01 * fit_relative_error(data, factors, loss);
  }
  return current_mu;
}

namespace detail {

inline void validate_config(const TensorData& data, const ProblemConfig& cfg) {
  const auto& dims = dims_of(data);
  if (cfg.rank < 1) throw std::invalid_argument("rank must be >= 1");
  if (!cfg.lemma_modes.empty() && cfg.lemma_modes.size() != dims.size())
    throw std::invalid_argument("need one lemma policy per mode");
  if (cfg.regs.size() != 1 && cfg.regs.size() != dims.size())
    throw std::invalid_argument("need one regularizer per mode (or a single shared one)");
  for (const auto& r : cfg.regs) {
    r.validate();
    for (std::size_t c : r.ones_columns)
      if (c >= cfg.rank) throw std::invalid_argument("ones column index exceeds rank");
  }
  if (!(cfg.inner_eps > 0.0) || !(cfg.outer_tol > 0.0)) throw std::invalid_argument("tolerances must be > 0");
  if (cfg.inner_max_iter < 1) throw std::invalid_argument("inner_max_iter must be >= 1");
  if (cfg.frobenius_safeguard < 0.0) throw std::invalid_argument("safeguard weight must be >= 0");
  if (cfg.mu_policy == MuPolicy::fixed && cfg.mu_value < 0.0) throw std::invalid_argument("mu must be >= 0");
  cfg.loss.validate();
  const bool sparse = std::holds_alternative<SparseTensor>(data);
  if (cfg.loss.mask_source == MaskSource::unlisted_entries && !sparse)
    throw std::invalid_argument("unlisted-entries mask requires sparse (COO) input");
  if (cfg.loss.mask_source == MaskSource::bitmask) {
    if (sparse) throw std::invalid_argument("bitmask mask requires dense input");
    if (cfg.loss.mask.size() != std::get<DenseTensor>(data).size())
      throw std::invalid_argument("loss mask size does not match data");
  }
  if (cfg.loss.kind == LossKind::kl) {
    auto vals = std::visit([](const auto& t) { return t.values(); }, data);
    for (double v : vals)
      if (v < 0.0) throw std::invalid_argument("KL loss requires nonnegative data");
  }
  if (cfg.init == InitKind::provided) {
    if (cfg.initial_factors.size() != dims.size()) throw std::invalid_argument("provided init needs one factor per mode");
    for (std::size_t d = 0; d < dims.size(); ++d)
      if (static_cast<std::size_t>(cfg.initial_factors[d].rows()) != dims[d] ||
          static_cast<std::size_t>(cfg.initial_factors[d].cols()) != cfg.rank)
        throw std::invalid_argument("provided factor " + std::to_string(d) + " has the wrong shape");
    if (!cfg.initial_duals.empty()) {
      if (cfg.initial_duals.size() != dims.size()) throw std::invalid_argument("provided duals need one per mode");
      for (std::size_t d = 0; d < dims.size(); ++d)
        if (cfg.initial_duals[d].rows() != cfg.initial_factors[d].rows() ||
            cfg.initial_duals[d].cols() != cfg.initial_factors[d].cols())
          throw std::invalid_argument("provided dual " + std::to_string(d) + " has the wrong shape");
    }
  }
}

inline bool grams_usable(std::span<const Matrix> factors) {
  for (std::size_t d = 0; d < factors.size(); ++d) {
    const double tr = gram_hadamard(factors, d).trace();
    if (!(tr > 0.0) || !std::isfinite(tr)) return false;
  }
  return true;
}

inline std::vector<Matrix> initialize_factors(const std::vector<std::size_t>& dims, const ProblemConfig& cfg) {
  if (cfg.init == InitKind::provided) {
    if (!grams_usable(cfg.initial_factors))
      throw InitializationError("provided factors give a zero-trace Gram matrix");
    return cfg.initial_factors;
  }
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto k = static_cast<Eigen::Index>(cfg.rank);
  for (int attempt = 0; attempt < 5; ++attempt) {
    std::vector<Matrix> h;
    for (std::size_t d = 0; d < dims.size(); ++d) {
      Matrix m(static_cast<Eigen::Index>(dims[d]), k);
      // column-major fill keeps the draw order independent of Eigen internals
      for (Eigen::Index j = 0; j < k; ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i)
          m(i, j) = cfg.init == InitKind::uniform01 ? uni(rng) : std::abs(gauss(rng));
      for (std::size_t c : cfg.reg(d).ones_columns) m.col(static_cast<Eigen::Index>(c)).setOnes();
      h.push_back(std::move(m));
    }
    if (grams_usable(h)) return h;
  }
  throw InitializationError("initialization produced a zero-trace Gram matrix after 5 draws");
}

/// Data and loss as seen by the general-loss solver, plus the split states.
struct GeneralWorkspace {
  TensorData data;
  LossSpec loss;
  std::vector<SplitState> splits;
};

inline GeneralWorkspace make_general_workspace(const TensorData& data, const ProblemConfig& cfg) {
  GeneralWorkspace ws;
  ws.loss = cfg.loss;
  const std::size_t copies = cfg.shared_split ? 1 : dims_of(data).size();
  if (const auto* y = std::get_if<SparseTensor>(&data)) {
    if (cfg.loss.mask_source == MaskSource::unlisted_entries && cfg.sparse_state) {
      ws.data = *y;
      ws.splits.assign(copies, SplitState::sparse_from(*y));
      return ws;
    }
    DenseTensor dense = y->to_dense();
    if (cfg.loss.mask_source == MaskSource::unlisted_entries) {
      ws.loss.mask_source = MaskSource::bitmask;
      ws.loss.mask.assign(dense.size(), 0);
      for (std::size_t e = 0; e < y->nnz(); ++e) ws.loss.mask[y->linear_index(e)] = 1;
    }
    ws.data = std::move(dense);
  } else {
    ws.data = data;
  }
  ws.splits.assign(copies, SplitState::dense_from(std::get<DenseTensor>(ws.data)));
  return ws;
}

}  // namespace detail

/// Alternating optimization over the factor matrices, each update solved by
/// the cached, warm-started ADMM. Modes are visited in ascending order.
inline FitResult fit(const TensorData& data, const ProblemConfig& cfg, const IterationCallback& callback = {}) {
  detail::validate_config(data, cfg);
  const auto& dims = dims_of(data);
  const std::size_t order = dims.size();
  const auto start = std::chrono::steady_clock::now();

  FitResult res;
  res.factors = detail::initialize_factors(dims, cfg);
  if (cfg.init == InitKind::provided && !cfg.initial_duals.empty()) {
    res.duals = cfg.initial_duals;
  } else {
    for (const auto& f : res.factors) res.duals.push_back(Matrix::Zero(f.rows(), f.cols()));
  }
  const MuPolicy policy = detail::resolve_mu_policy(cfg, order);
  double mu = policy == MuPolicy::fixed ? cfg.mu_value : 0.0;
  if (cfg.outer_max_iter == 0) {
    res.final_mu = mu;
    return res;
  }
  if (policy == MuPolicy::adaptive) mu = update_mu(data, res.factors, mu, policy, cfg.loss);

  const std::size_t threads = detail::effective_threads(cfg);
  const bool general = cfg.loss.kind != LossKind::least_squares || cfg.loss.masked() || cfg.force_general;
  std::optional<detail::GeneralWorkspace> ws;
  if (general) ws = detail::make_general_workspace(data, cfg);

  CacheOptions copts;
  copts.ridge = cfg.frobenius_safeguard;
  copts.lemma = cfg.lemma;
  copts.lemma_ratio = cfg.lemma_ratio;
  copts.threads = threads;
  InnerOptions iopts{cfg.inner_eps, cfg.inner_max_iter, threads};

  double prev_obj = objective(data, res.factors, cfg).total();
  std::size_t streak = 0;
  for (std::size_t it = 1; it <= cfg.outer_max_iter; ++it) {
    TraceRecord rec;
    rec.iter = it;
    rec.mu = mu;
    for (std::size_t d = 0; d < order; ++d) {
      copts.lemma = cfg.lemma_for(d);
      const Matrix h_prev = res.factors[d];
      AdmmReport rep;
      if (!(gram_hadamard(res.factors, d).trace() > 0.0)) {
        // the other factors are all zero, so the loss does not depend on
        // H_d; keep it, projected onto its constraint set
        res.factors[d] = prox_apply(cfg.reg(d), res.factors[d], 1.0);
        res.duals[d].setZero();
      } else if (!general) {
        const KernelCache cache = build_cache(res.factors, d, data, mu, true, copts, &res.counters);
        rep = admm_ls(cache, res.factors[d], res.duals[d], cfg.reg(d), iopts, &h_prev, &res.counters);
      } else {
        const KernelCache cache = build_cache(res.factors, d, ws->data, mu, false, copts, &res.counters);
        SplitState& split = ws->splits[cfg.shared_split ? 0 : d];
        rep = admm_general(cache, ws->data, res.factors, d, res.factors[d], res.duals[d], split, cfg.reg(d), ws->loss,
                           iopts, &h_prev, &res.counters);
      }
      rec.inner_iters.push_back(rep.iterations);
    }
    const ObjectiveValue ov = objective(data, res.factors, cfg);
    rec.objective = ov.total();
    rec.violation = ov.violation;
    rec.rel_error = fit_relative_error(data, res.factors, cfg.loss);
    rec.mttkrp_calls = res.counters.mttkrp_calls;
    rec.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    res.trace.push_back(std::move(rec));
    if (callback) callback(IterationView{res.trace, res.factors});

    if (policy == MuPolicy::adaptive) mu = 1e-7 + 0.01 * res.trace.back().rel_error;

    const double change = std::abs(prev_obj - res.trace.back().objective) / std::max(std::abs(prev_obj), 1e-300);
    prev_obj = res.trace.back().objective;
    streak = change < cfg.outer_tol ? streak + 1 : 0;
    if (streak >= 2) {
      res.converged = true;
      break;
    }
  }
  res.final_mu = mu;
  return res;
}

/// Least-squares warm-up for a fraction of the outer budget, then the true
/// loss from those factors (and duals). Unobserved entries are zeros during
/// the warm-up.
inline FitResult fit_two_stage(const TensorData& data, const ProblemConfig& cfg, const IterationCallback& callback = {}) {
  if (cfg.loss.kind == LossKind::least_squares) throw std::invalid_argument("two-stage fit needs a non-least-squares loss");
  if (!(cfg.two_stage_fraction >= 0.0 && cfg.two_stage_fraction <= 1.0))
    throw std::invalid_argument("two-stage fraction must lie in [0, 1]");
  const auto stage1_iters =
      static_cast<std::size_t>(std::llround(cfg.two_stage_fraction * static_cast<double>(cfg.outer_max_iter)));
  if (stage1_iters == 0) return fit(data, cfg, callback);

  TensorData ls_data = data;
  if (auto* dense = std::get_if<DenseTensor>(&ls_data); dense && cfg.loss.mask_source == MaskSource::bitmask) {
    for (std::size_t i = 0; i < dense->size(); ++i)
      if (!cfg.loss.mask.at(i)) (*dense)[i] = 0.0;
  }
  ProblemConfig c1 = cfg;
  c1.loss = LossSpec{};
  c1.force_general = false;
  c1.outer_max_iter = stage1_iters;
  FitResult r1 = fit(ls_data, c1, callback);
  if (stage1_iters >= cfg.outer_max_iter) return r1;

  ProblemConfig c2 = cfg;
  c2.init = InitKind::provided;
  c2.initial_factors = r1.factors;
  c2.initial_duals = r1.duals;
  c2.outer_max_iter = cfg.outer_max_iter - stage1_iters;
  const std::size_t offset = r1.trace.size();
  const double t_offset = r1.trace.empty() ? 0.0 : r1.trace.back().elapsed_s;
  const std::size_t calls_offset = r1.counters.mttkrp_calls;

  std::vector<TraceRecord> combined = r1.trace;
  auto relay = [&](const IterationView& view) {
    if (!callback) return;
    combined.push_back(view.trace.back());
    auto& rec = combined.back();
    rec.iter += offset;
    rec.elapsed_s += t_offset;
    rec.mttkrp_calls += calls_offset;
    callback(IterationView{combined, view.factors});
  };
  FitResult r2 = fit(data, c2, relay);
  for (auto& rec : r2.trace) {
    rec.iter += offset;
    rec.elapsed_s += t_offset;
    rec.mttkrp_calls += calls_offset;
  }
  r1.trace.insert(r1.trace.end(), r2.trace.begin(), r2.trace.end());
  r2.trace = std::move(r1.trace);
  r2.counters.factorizations += r1.counters.factorizations;
  r2.counters.inner_iterations += r1.counters.inner_iterations;
  r2.counters.mttkrp_calls += r1.counters.mttkrp_calls;
  return r2;
}

}  // namespace factorforge
