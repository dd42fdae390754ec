// SPDX-License-Identifier: Apache-2.0
// Synthetic data, factor matching, completion cross-validation and
// dictionary learning drivers.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "factorforge/driver.hpp"
#include "factorforge/tensor.hpp"

namespace factorforge {

// ---------------------------------------------------------------- synthetic data

struct SynthSpec {
  std::vector<std::size_t> dims;
  std::size_t k_true = 1;
  double sparsify = 0.0;        // fraction of factor entries set to zero
  double noise_variance = 0.0;  // i.i.d. Gaussian noise added to the tensor
  std::uint64_t seed = 0;
  bool nonneg = true;  // exponential(mean 1) factors; standard Gaussian otherwise

  void validate() const {
    if (dims.size() < 2) throw std::invalid_argument("synthetic data needs at least 2 modes");
    for (std::size_t d : dims)
      if (d == 0) throw std::invalid_argument("synthetic dimensions must be positive");
    if (k_true < 1) throw std::invalid_argument("k_true must be >= 1");
    if (!(sparsify >= 0.0 && sparsify <= 1.0)) throw std::invalid_argument("sparsify must lie in [0, 1]");
    if (!(noise_variance >= 0.0)) throw std::invalid_argument("noise variance must be >= 0");
  }
};

struct SynthData {
  DenseTensor data;
  std::vector<Matrix> factors;
  double noise_norm = 0.0;  // ||N||_F of the added noise
};

/// Factors are drawn mode by mode in column-major order, then each entry is
/// zeroed with probability `sparsify`, then noise is drawn entry by entry.
inline SynthData gen_synthetic(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::exponential_distribution<double> expo(1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::bernoulli_distribution drop(spec.sparsify);
  SynthData out;
  const auto k = static_cast<Eigen::Index>(spec.k_true);
  for (std::size_t n : spec.dims) {
    Matrix h(static_cast<Eigen::Index>(n), k);
    for (Eigen::Index j = 0; j < k; ++j)
      for (Eigen::Index i = 0; i < h.rows(); ++i) h(i, j) = spec.nonneg ? expo(rng) : gauss(rng);
    out.factors.push_back(std::move(h));
  }
  for (auto& h : out.factors)
    for (Eigen::Index j = 0; j < k; ++j)
      for (Eigen::Index i = 0; i < h.rows(); ++i)
        if (drop(rng)) h(i, j) = 0.0;
  out.data = full(out.factors);
  if (spec.noise_variance > 0.0) {
    const double sd = std::sqrt(spec.noise_variance);
    double ss = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      const double e = sd * gauss(rng);
      out.data[i] += e;
      ss += e * e;
    }
    out.noise_norm = std::sqrt(ss);
  }
  return out;
}

/// Desk-scale recipes: NMF 200 x 200 with k = 10 and NTF 30 x 30 x 30 with
/// k = 5, half the factor entries zeroed, noise variance 0.01.
inline SynthSpec nmf_recipe(std::uint64_t seed) { return {{200, 200}, 10, 0.5, 0.01, seed, true}; }
inline SynthSpec ntf_recipe(std::uint64_t seed) { return {{30, 30, 30}, 5, 0.5, 0.01, seed, true}; }

// ---------------------------------------------------------------- congruence

namespace detail {

inline Matrix normalized_columns(const Matrix& h, const char* what) {
  Matrix out = h;
  for (Eigen::Index j = 0; j < h.cols(); ++j) {
    const double n = h.col(j).norm();
    if (!(n > 0.0)) throw std::invalid_argument(std::string(what) + " has a zero column");
    out.col(j) /= n;
  }
  return out;
}

/// Greedy assignment on a score matrix (rows: true, cols: estimated): take
/// the largest remaining entry, retire its row and column, repeat. Returns
/// the estimated column matched to each true column.
inline std::vector<Eigen::Index> greedy_match(const Matrix& score) {
  const Eigen::Index k = score.rows();
  std::vector<Eigen::Index> match(static_cast<std::size_t>(k), -1);
  std::vector<bool> used_row(static_cast<std::size_t>(k)), used_col(static_cast<std::size_t>(score.cols()));
  for (Eigen::Index step = 0; step < std::min(k, score.cols()); ++step) {
    double best = -1.0;
    Eigen::Index bi = -1, bj = -1;
    for (Eigen::Index i = 0; i < k; ++i) {
      if (used_row[static_cast<std::size_t>(i)]) continue;
      for (Eigen::Index j = 0; j < score.cols(); ++j)
        if (!used_col[static_cast<std::size_t>(j)] && score(i, j) > best) {
          best = score(i, j);
          bi = i;
          bj = j;
        }
    }
    used_row[static_cast<std::size_t>(bi)] = used_col[static_cast<std::size_t>(bj)] = true;
    match[static_cast<std::size_t>(bi)] = bj;
  }
  return match;
}

}  // namespace detail

/// Mean |cosine| between each true column and its greedily matched estimate.
/// Sign, scale and column order do not matter.
inline double congruence(const Matrix& est, const Matrix& truth) {
  if (est.rows() != truth.rows() || est.cols() != truth.cols())
    throw std::invalid_argument("congruence needs matrices of the same shape");
  const Matrix a = detail::normalized_columns(est, "estimate"), b = detail::normalized_columns(truth, "truth");
  const Matrix score = (b.transpose() * a).cwiseAbs();
  const auto match = detail::greedy_match(score);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < score.rows(); ++i) sum += score(i, match[static_cast<std::size_t>(i)]);
  return sum / static_cast<double>(score.rows());
}

/// Per-mode congruence under one shared column matching, chosen greedily on
/// the product of the per-mode |cosines|.
inline std::vector<double> congruence_per_mode(std::span<const Matrix> est, std::span<const Matrix> truth) {
  if (est.size() != truth.size() || est.empty()) throw std::invalid_argument("congruence needs matching factor lists");
  const Eigen::Index k = truth.front().cols();
  Matrix joint = Matrix::Ones(k, k);
  std::vector<Matrix> per;
  for (std::size_t d = 0; d < est.size(); ++d) {
    if (est[d].rows() != truth[d].rows() || est[d].cols() != k || truth[d].cols() != k)
      throw std::invalid_argument("congruence needs matrices of the same shape");
    const Matrix a = detail::normalized_columns(est[d], "estimate"), b = detail::normalized_columns(truth[d], "truth");
    per.push_back((b.transpose() * a).cwiseAbs());
    joint = joint.cwiseProduct(per.back());
  }
  const auto match = detail::greedy_match(joint);
  std::vector<double> out;
  for (const auto& s : per) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) sum += s(i, match[static_cast<std::size_t>(i)]);
    out.push_back(sum / static_cast<double>(k));
  }
  return out;
}

// ---------------------------------------------------------------- completion

struct SplitSpec {
  double train_fraction = 0.8;
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  /// Add bias columns (W column 0 and H column 1 fixed to ones) to every variant.
  bool bias = false;

  void validate() const {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw std::invalid_argument("train fraction must lie in (0, 1)");
    if (folds < 1) throw std::invalid_argument("need at least one fold");
  }
};

enum class CompletionReg { none, tikhonov, nonneg, nonneg_bias };

inline std::string_view to_string(CompletionReg r) {
  switch (r) {
    case CompletionReg::none: return "none";
    case CompletionReg::tikhonov: return "tikhonov";
    case CompletionReg::nonneg: return "nonneg";
    case CompletionReg::nonneg_bias: return "nonneg-bias";
  }
  return "?";
}

inline CompletionReg completion_reg_from_string(std::string_view s) {
  for (auto r : {CompletionReg::none, CompletionReg::tikhonov, CompletionReg::nonneg, CompletionReg::nonneg_bias})
    if (to_string(r) == s) return r;
  throw std::invalid_argument("unknown completion variant '" + std::string(s) + "'");
}

struct CompletionVariant {
  LossKind loss = LossKind::least_squares;  // least-squares (on the observed set) or kl
  CompletionReg reg = CompletionReg::none;
  double tikhonov_lambda = 0.1;

  std::string name() const {
    return std::string(loss == LossKind::kl ? "kl" : "ls") + "/" + std::string(to_string(reg));
  }
};

struct CompletionOptions {
  ProblemConfig base;  // rank, iteration limits, seed; loss and regularizers are set per variant
  /// Predictions are clamped to [lo, hi] before scoring when set.
  std::optional<std::pair<double, double>> clamp;
};

struct MaeRow {
  std::size_t fold = 0;
  std::string config;
  double train_mae = 0.0;
  double test_mae = 0.0;
  double train_objective = 0.0;
  double train_loss = 0.0;  // data term of the objective at the returned factors
};

struct CompletionResult {
  std::vector<MaeRow> rows;
  /// Fold averages, one per variant in input order.
  std::vector<MaeRow> averages;
};

/// Fold f shuffles the observed entries with seed `split.seed + f` and trains
/// on the first round(train_fraction * nnz) of them.
inline std::pair<SparseTensor, SparseTensor> split_fold(const SparseTensor& data, const SplitSpec& split,
                                                        std::size_t fold) {
  split.validate();
  const std::size_t nnz = data.nnz();
  const auto n_train = static_cast<std::size_t>(std::llround(split.train_fraction * static_cast<double>(nnz)));
  if (n_train == 0 || n_train == nnz) throw std::invalid_argument("split leaves an empty train or test mask");
  std::vector<std::size_t> perm(nnz);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(split.seed + fold);
  std::shuffle(perm.begin(), perm.end(), rng);
  auto take = [&](std::size_t b, std::size_t e) {
    std::vector<std::size_t> idx;
    std::vector<double> vals;
    for (std::size_t p = b; p < e; ++p) {
      const auto ix = data.index(perm[p]);
      idx.insert(idx.end(), ix.begin(), ix.end());
      vals.push_back(data.values()[perm[p]]);
    }
    return SparseTensor(data.dims(), std::move(idx), std::move(vals));
  };
  return {take(0, n_train), take(n_train, nnz)};
}

inline ProblemConfig completion_config(const CompletionVariant& v, const ProblemConfig& base, bool bias) {
  ProblemConfig cfg = base;
  cfg.loss = LossSpec{};
  cfg.loss.kind = v.loss == LossKind::kl ? LossKind::kl : LossKind::missing;
  cfg.loss.mask_source = MaskSource::unlisted_entries;
  RegularizerSpec w, h;
  switch (v.reg) {
    case CompletionReg::none: break;
    case CompletionReg::tikhonov: w = h = RegularizerSpec::tikhonov(v.tikhonov_lambda); break;
    case CompletionReg::nonneg:
    case CompletionReg::nonneg_bias: w = h = RegularizerSpec::nonneg(); break;
  }
  if (bias || v.reg == CompletionReg::nonneg_bias) {
    if (cfg.rank < 2) throw std::invalid_argument("bias columns need rank >= 2");
    w.ones_columns = {0};
    h.ones_columns = {1};
  }
  cfg.regs = {w, h};
  return cfg;
}

/// Mean absolute error of W H^T over the entries of `y`.
inline double mae(const SparseTensor& y, std::span<const Matrix> factors,
                  const std::optional<std::pair<double, double>>& clamp = {}) {
  if (y.nnz() == 0) throw std::invalid_argument("MAE over an empty mask");
  double sum = 0.0;
  for (std::size_t e = 0; e < y.nnz(); ++e) {
    double p = model_entry(factors, y.index(e));
    if (clamp) p = std::clamp(p, clamp->first, clamp->second);
    sum += std::abs(y.values()[e] - p);
  }
  return sum / static_cast<double>(y.nnz());
}

inline CompletionResult run_completion_cv(const SparseTensor& data, const SplitSpec& split,
                                          std::span<const CompletionVariant> variants, const CompletionOptions& opt) {
  if (data.order() != 2) throw std::invalid_argument("completion cross-validation takes a matrix");
  if (variants.empty()) throw std::invalid_argument("no completion variants given");
  split.validate();
  CompletionResult res;
  res.averages.resize(variants.size());
  for (std::size_t f = 0; f < split.folds; ++f) {
    const auto [train, test] = split_fold(data, split, f);
    for (std::size_t v = 0; v < variants.size(); ++v) {
      const ProblemConfig cfg = completion_config(variants[v], opt.base, split.bias);
      const FitResult r = variants[v].loss == LossKind::kl ? fit_two_stage(train, cfg) : fit(train, cfg);
      MaeRow row;
      row.fold = f;
      row.config = variants[v].name();
      row.train_mae = mae(train, r.factors, opt.clamp);
      row.test_mae = mae(test, r.factors, opt.clamp);
      const ObjectiveValue ov = objective(train, r.factors, cfg);
      row.train_objective = ov.total();
      row.train_loss = ov.loss;
      res.rows.push_back(row);
      auto& avg = res.averages[v];
      avg.config = row.config;
      avg.train_mae += row.train_mae / static_cast<double>(split.folds);
      avg.test_mae += row.test_mae / static_cast<double>(split.folds);
      avg.train_objective += row.train_objective / static_cast<double>(split.folds);
      avg.train_loss += row.train_loss / static_cast<double>(split.folds);
    }
  }
  return res;
}

// ---------------------------------------------------------------- dictionary learning

struct DictLearnSpec {
  std::size_t atoms = 1;  // k
  double lambda = 0.5;
  bool nonneg = false;
  std::size_t iters = 100;
  std::uint64_t seed = 0;
  LemmaPolicy lemma = LemmaPolicy::automatic;  // code update only
  double inner_eps = 0.01;
  std::size_t inner_max_iter = 10;
  bool deterministic = false;
  std::size_t threads = 0;
  std::optional<Matrix> initial_dictionary;  // m x k
};

struct DictLearnStats {
  double atoms_per_sample = 0.0;  // mean count of nonzero codes per column of S
  double energy_fraction = 0.0;   // 1 - ||Y - D S||^2 / ||Y||^2
  double objective = 0.0;         // (1/2)||Y - D S||^2 + lambda ||S||_1
  double max_atom_norm_seen = 0.0;  // over every outer iteration
  std::vector<TraceRecord> trace;
};

struct DictLearnResult {
  Matrix dictionary;  // D, m x k
  Matrix codes;       // S, k x n
  DictLearnStats stats;
};

inline ProblemConfig dictlearn_config(const DictLearnSpec& spec) {
  ProblemConfig cfg;
  cfg.rank = spec.atoms;
  RegularizerSpec codes = RegularizerSpec::l1(spec.lambda), atoms = RegularizerSpec::unit_norm_columns();
  if (spec.nonneg) {
    codes = RegularizerSpec::nonneg_composed(codes);
    atoms = RegularizerSpec::nonneg_composed(atoms);
  }
  cfg.regs = {codes, atoms};
  cfg.outer_max_iter = spec.iters;
  cfg.outer_tol = 1e-12;
  cfg.inner_eps = spec.inner_eps;
  cfg.inner_max_iter = spec.inner_max_iter;
  cfg.seed = spec.seed;
  // the lemma policy governs the code update; the dictionary update has a
  // tall W (one row per sample) and always uses the direct factorization
  cfg.lemma_modes = {spec.lemma, LemmaPolicy::never};
  cfg.deterministic = spec.deterministic;
  cfg.threads = spec.threads;
  return cfg;
}

/// Learns Y (m x n, one sample per column) ~ D S. The problem is solved as a
/// two-way factorization of Y^T with mode 0 holding S^T and mode 1 holding D,
/// so the codes are updated first in every cycle.
inline DictLearnResult run_dictlearn(const Matrix& y, const DictLearnSpec& spec) {
  if (spec.atoms < 1) throw std::invalid_argument("need at least one atom");
  const auto m = static_cast<std::size_t>(y.rows()), n = static_cast<std::size_t>(y.cols());
  const Matrix yt = y.transpose();
  const DenseTensor data({n, m}, std::vector<double>(yt.data(), yt.data() + yt.size()));
  ProblemConfig cfg = dictlearn_config(spec);
  if (spec.initial_dictionary) {
    const Matrix& d0 = *spec.initial_dictionary;
    if (static_cast<std::size_t>(d0.rows()) != m || static_cast<std::size_t>(d0.cols()) != spec.atoms)
      throw std::invalid_argument("initial dictionary has the wrong shape");
    cfg.init = InitKind::provided;
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    Matrix s0(static_cast<Eigen::Index>(n), d0.cols());
    for (Eigen::Index j = 0; j < s0.cols(); ++j)
      for (Eigen::Index i = 0; i < s0.rows(); ++i) s0(i, j) = uni(rng);
    cfg.initial_factors = {s0, d0};
  }
  DictLearnResult out;
  double max_norm = 0.0;
  auto watch = [&](const IterationView& v) {
    for (Eigen::Index j = 0; j < v.factors[1].cols(); ++j) max_norm = std::max(max_norm, v.factors[1].col(j).norm());
  };
  FitResult r = fit(data, cfg, watch);
  out.dictionary = r.factors[1];
  out.codes = r.factors[0].transpose();
  const double resid = (y - out.dictionary * out.codes).squaredNorm();
  out.stats.energy_fraction = 1.0 - resid / y.squaredNorm();
  out.stats.atoms_per_sample =
      static_cast<double>((out.codes.array() != 0.0).count()) / static_cast<double>(std::max<std::size_t>(n, 1));
  out.stats.objective = 0.5 * resid + spec.lambda * out.codes.cwiseAbs().sum();
  out.stats.max_atom_norm_seen = max_norm;
  out.stats.trace = std::move(r.trace);
  return out;
}

/// Planted dictionary problem: D_true (m x k) with unit-norm Gaussian
/// columns, `sparsity`-sparse Gaussian codes on random supports, and noise
/// scaled to the requested SNR in dB.
struct PlantedDictionary {
  Matrix y, dictionary, codes;
};

inline PlantedDictionary planted_dictionary(std::size_t m, std::size_t k, std::size_t n, std::size_t sparsity,
                                            double snr_db, std::uint64_t seed, bool nonneg = false) {
  if (sparsity > k) throw std::invalid_argument("sparsity exceeds the number of atoms");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  PlantedDictionary p;
  p.dictionary.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
  for (Eigen::Index j = 0; j < p.dictionary.cols(); ++j) {
    for (Eigen::Index i = 0; i < p.dictionary.rows(); ++i)
      p.dictionary(i, j) = nonneg ? std::abs(gauss(rng)) : gauss(rng);
    p.dictionary.col(j).normalize();
  }
  p.codes = Matrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
  std::vector<std::size_t> atoms(k);
  for (Eigen::Index c = 0; c < p.codes.cols(); ++c) {
    std::iota(atoms.begin(), atoms.end(), 0);
    for (std::size_t s = 0; s < sparsity; ++s) {
      std::uniform_int_distribution<std::size_t> pick(s, k - 1);
      std::swap(atoms[s], atoms[pick(rng)]);
      const double g = gauss(rng);
      p.codes(static_cast<Eigen::Index>(atoms[s]), c) = nonneg ? std::abs(g) : g;
    }
  }
  const Matrix clean = p.dictionary * p.codes;
  Matrix noise(clean.rows(), clean.cols());
  for (Eigen::Index j = 0; j < noise.cols(); ++j)
    for (Eigen::Index i = 0; i < noise.rows(); ++i) noise(i, j) = gauss(rng);
  const double scale = clean.norm() / noise.norm() * std::pow(10.0, -snr_db / 20.0);
  p.y = clean + scale * noise;
  return p;
}

}  // namespace factorforge
