// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "factorforge/admm.hpp"
#include "oracles.hpp"

using namespace factorforge;

namespace {

// Matrix data Y (m x n) as a 2-way tensor; mode 1 is then the H of Y ~ W H^T.
DenseTensor as_tensor(const Matrix& y) {
  return DenseTensor({static_cast<std::size_t>(y.rows()), static_cast<std::size_t>(y.cols())},
                     std::vector<double>(y.data(), y.data() + y.size()));
}

InnerOptions tight(std::size_t iters = 3000, double eps = 1e-14) {
  InnerOptions o;
  o.eps = eps;
  o.max_iter = iters;
  return o;
}

struct Problem {
  Matrix w, h_true, y;
  std::vector<Matrix> factors;
  TensorData data;
};

Problem random_problem(std::uint64_t seed, Eigen::Index m, Eigen::Index n, Eigen::Index k, bool nonneg = false) {
  std::mt19937_64 rng(seed);
  Problem p;
  p.w = oracle::random_matrix(rng, m, k, nonneg ? 0.0 : -1.0, 1.0);
  p.h_true = oracle::random_matrix(rng, n, k, nonneg ? 0.0 : -1.0, 1.0);
  p.y = p.w * p.h_true.transpose();
  p.factors = {p.w, oracle::random_matrix(rng, n, k)};
  p.data = as_tensor(p.y);
  return p;
}

double ls_objective(const Matrix& y, const Matrix& w, const Matrix& h) {
  return 0.5 * (y - w * h.transpose()).squaredNorm();
}

}  // namespace

TEST(Cache, RhoAndCholeskyExamples) {
  const Eigen::Index k = 4;
  std::vector<Matrix> two{Matrix::Identity(k, k), Matrix::Identity(k, k)};
  TensorData d2 = DenseTensor({4, 4});
  auto c = build_cache(two, 1, d2, 0.0, false);
  EXPECT_DOUBLE_EQ(c.rho, 1.0);

  std::vector<Matrix> three(3, Matrix::Identity(k, k));
  TensorData d3 = DenseTensor({4, 4, 4});
  auto c3 = build_cache(three, 0, d3, 0.0, true);
  EXPECT_LT((c3.chol_lower - std::sqrt(2.0) * Matrix::Identity(k, k)).norm(), 1e-15);
  EXPECT_TRUE(c3.has_mttkrp);
  EXPECT_EQ(c3.mttkrp.rows(), k);
}

TEST(Cache, FactorReproducesShiftedGram) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto p = random_problem(seed, 12, 7, 4);
    const double mu = 0.1 * static_cast<double>(seed);
    auto c = build_cache(p.factors, 1, p.data, mu, true);
    Matrix g = p.w.transpose() * p.w;
    EXPECT_NEAR(c.rho, g.trace() / 4.0, 1e-12);
    Matrix want = g + (c.rho + mu) * Matrix::Identity(4, 4);
    EXPECT_LT((c.chol_lower * c.chol_lower.transpose() - want).norm(), 1e-10);
    EXPECT_LT(oracle::rel_diff(c.mttkrp, p.w.transpose() * p.y), 1e-12);
  }
}

TEST(Cache, ZeroFactorsRaiseInitializationError) {
  std::vector<Matrix> f{Matrix::Zero(3, 2), Matrix::Ones(4, 2)};
  TensorData d = DenseTensor({3, 4});
  EXPECT_THROW(build_cache(f, 1, d, 0.0, true), InitializationError);
  EXPECT_THROW(build_cache(f, 0, d, -1.0, true), std::invalid_argument);
}

TEST(Solve, InverseRoundTripAndZero) {
  auto p = random_problem(3, 9, 6, 3);
  auto c = build_cache(p.factors, 1, p.data, 0.25, true);
  std::mt19937_64 rng(30);
  Matrix x = oracle::random_matrix(rng, 3, 6);
  Matrix a = p.w.transpose() * p.w + (c.rho + 0.25) * Matrix::Identity(3, 3);
  EXPECT_LT((solve_ls_system(c, a * x) - x).norm(), 1e-9);
  EXPECT_EQ(solve_ls_system(c, Matrix::Zero(3, 6)).norm(), 0.0);
  Matrix bad = x;
  bad(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(solve_ls_system(c, bad), std::invalid_argument);
  EXPECT_THROW(solve_ls_system(c, Matrix::Zero(2, 6)), std::invalid_argument);
}

TEST(Solve, InversionLemmaMatchesCholesky) {
  auto p = random_problem(4, 3, 5, 8);  // m = 3 < k/2
  CacheOptions automatic;
  auto lemma = build_cache(p.factors, 1, p.data, 0.1, true, automatic);
  EXPECT_TRUE(lemma.lemma_mode);
  EXPECT_EQ(lemma.chol_lower.rows(), 3);
  CacheOptions never;
  never.lemma = LemmaPolicy::never;
  auto chol = build_cache(p.factors, 1, p.data, 0.1, true, never);
  EXPECT_FALSE(chol.lemma_mode);
  std::mt19937_64 rng(40);
  Matrix rhs = oracle::random_matrix(rng, 8, 5);
  EXPECT_LT((solve_ls_system(lemma, rhs) - solve_ls_system(chol, rhs)).norm(), 1e-8);

  auto big = random_problem(5, 20, 5, 8);
  EXPECT_FALSE(build_cache(big.factors, 1, big.data, 0.0, true).lemma_mode);
}

TEST(Residuals, Conventions) {
  Matrix h = Matrix::Ones(3, 2), u = Matrix::Zero(3, 2);
  auto [r, s] = residuals(h, h.transpose(), u, h);
  EXPECT_EQ(r, 0.0);
  EXPECT_EQ(s, 0.0);  // 0/0
  Matrix h0 = Matrix::Zero(3, 2);
  EXPECT_TRUE(std::isinf(residuals(h, h.transpose(), u, h0).second));
  EXPECT_TRUE(std::isinf(residuals(Matrix::Zero(3, 2), h.transpose(), h, h).first));

  std::mt19937_64 rng(50);
  Matrix a = oracle::random_matrix(rng, 4, 3), b = oracle::random_matrix(rng, 3, 4), uu = oracle::random_matrix(rng, 4, 3),
         c = oracle::random_matrix(rng, 4, 3);
  auto [r2, s2] = residuals(a, b, uu, c);
  double num = 0, den = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) {
      num += (a(i, j) - b(j, i)) * (a(i, j) - b(j, i));
      den += a(i, j) * a(i, j);
    }
  EXPECT_NEAR(r2, num / den, 1e-14);
  EXPECT_NEAR(s2, (a - c).squaredNorm() / uu.squaredNorm(), 1e-14);
  EXPECT_THROW(residuals(a, a, uu, c), std::invalid_argument);
}

TEST(AdmmLs, ExactDataUnconstrained) {
  auto p = random_problem(6, 10, 8, 3);
  auto c = build_cache(p.factors, 1, p.data, 0.0, true);
  Matrix h = p.factors[1], u = Matrix::Zero(8, 3);
  auto rep = admm_ls(c, h, u, RegularizerSpec::none(), tight());
  EXPECT_TRUE(rep.converged);
  EXPECT_LE((p.w * h.transpose() - p.y).norm() / p.y.norm(), 1e-6);
  // normal-equations oracle
  Matrix hstar = (p.w.transpose() * p.w).ldlt().solve(p.w.transpose() * p.y).transpose();
  EXPECT_LT(oracle::rel_diff(h, hstar), 1e-6);
}

TEST(AdmmLs, NonnegToyClampsAtZero) {
  Matrix w = Matrix::Ones(2, 1);
  Matrix y(2, 1);
  y << -1, -1;
  std::vector<Matrix> f{w, Matrix::Ones(1, 1)};
  TensorData data = as_tensor(y);
  auto c = build_cache(f, 1, data, 0.0, true);
  Matrix h = Matrix::Ones(1, 1), u = Matrix::Zero(1, 1);
  admm_ls(c, h, u, RegularizerSpec::nonneg(), tight(200));
  EXPECT_EQ(h(0, 0), 0.0);
}

TEST(AdmmLs, WarmStartAtSolutionStopsAfterOneIteration) {
  auto p = random_problem(7, 10, 8, 3);
  auto c = build_cache(p.factors, 1, p.data, 0.0, true);
  Matrix h = (p.w.transpose() * p.w).ldlt().solve(p.w.transpose() * p.y).transpose();
  Matrix u = Matrix::Zero(8, 3);
  InnerOptions o;
  auto rep = admm_ls(c, h, u, RegularizerSpec::none(), o);
  EXPECT_EQ(rep.iterations, 1u);
  EXPECT_TRUE(rep.converged);
  EXPECT_LT(rep.r, o.eps);
  EXPECT_LT(rep.s, o.eps);
}

TEST(AdmmLs, FactorsOnceAndCountsIterations) {
  auto p = random_problem(8, 10, 8, 3, true);
  Counters cnt;
  auto c = build_cache(p.factors, 1, p.data, 0.0, true, {}, &cnt);
  Matrix h = p.factors[1], u = Matrix::Zero(8, 3);
  InnerOptions o;
  o.eps = 1e-15;
  o.max_iter = 10;
  auto rep = admm_ls(c, h, u, RegularizerSpec::nonneg(), o, nullptr, &cnt);
  EXPECT_EQ(cnt.factorizations, 1u);
  EXPECT_EQ(cnt.mttkrp_calls, 1u);
  EXPECT_EQ(cnt.inner_iterations, rep.iterations);
  EXPECT_EQ(rep.iterations, 10u);
}

TEST(AdmmLs, UnconstrainedConvergesLinearly) {
  auto p = random_problem(9, 30, 8, 3);
  std::mt19937_64 noise(90);
  p.y += 0.1 * oracle::random_matrix(noise, 30, 8);
  p.data = as_tensor(p.y);
  auto c = build_cache(p.factors, 1, p.data, 0.0, true);
  Matrix hstar = (p.w.transpose() * p.w).ldlt().solve(p.w.transpose() * p.y).transpose();
  Matrix h = p.factors[1], u = Matrix::Zero(8, 3);
  InnerOptions one;
  one.eps = 1e-300;
  one.max_iter = 1;
  double prev_err = (h - hstar).norm(), prev_r = std::numeric_limits<double>::infinity();
  double worst_ratio = 0.0;
  for (int it = 0; it < 8; ++it) {
    auto rep = admm_ls(c, h, u, RegularizerSpec::none(), one, &h);
    const double err = (h - hstar).norm();
    EXPECT_LT(err, prev_err);
    EXPECT_LE(rep.r, prev_r);
    worst_ratio = std::max(worst_ratio, err / prev_err);
    prev_err = err;
    prev_r = rep.r;
  }
  EXPECT_LT(worst_ratio, 0.95);
}

TEST(AdmmLs, KktAtConvergenceForNonneg) {
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    auto p = random_problem(seed, 10, 8, 3);
    std::mt19937_64 rng(seed);
    p.y += 0.5 * oracle::random_matrix(rng, 10, 8);
    p.data = as_tensor(p.y);
    auto c = build_cache(p.factors, 1, p.data, 0.0, true);
    Matrix h = p.factors[1].cwiseAbs(), u = Matrix::Zero(8, 3);
    // r and s are squared ratios, so stopping at eps^2 puts the unsquared
    // residuals below eps.
    const double eps = 1e-4;
    auto rep = admm_ls(c, h, u, RegularizerSpec::nonneg(), tight(20000, eps * eps));
    EXPECT_TRUE(rep.converged);
    Matrix grad = (c.gram * h.transpose() - c.mttkrp).transpose();
    EXPECT_LE(h.cwiseMin(grad).norm(), 10 * eps * h.norm()) << "seed " << seed;
    EXPECT_GE(h.minCoeff(), 0.0);
  }
}

TEST(AdmmLs, ErrorPaths) {
  auto p = random_problem(16, 6, 5, 2);
  auto c = build_cache(p.factors, 1, p.data, 0.0, true);
  Matrix h = p.factors[1], u = Matrix::Zero(5, 2);
  InnerOptions o;
  o.max_iter = 0;
  EXPECT_THROW(admm_ls(c, h, u, RegularizerSpec::none(), o), std::invalid_argument);
  o.max_iter = 3;
  o.eps = 0.0;
  EXPECT_THROW(admm_ls(c, h, u, RegularizerSpec::none(), o), std::invalid_argument);
  auto nof = build_cache(p.factors, 1, p.data, 0.0, false);
  EXPECT_THROW(admm_ls(nof, h, u, RegularizerSpec::none(), InnerOptions{}), std::invalid_argument);
}

TEST(AdmmGeneral, LeastSquaresLossMatchesAdmmLsFixedPoint) {
  for (std::uint64_t seed = 20; seed < 25; ++seed) {
    auto p = random_problem(seed, 10, 8, 3);
    std::mt19937_64 rng(seed);
    p.y += 0.3 * oracle::random_matrix(rng, 10, 8);
    DenseTensor y = as_tensor(p.y);
    p.data = y;
    auto cls = build_cache(p.factors, 1, p.data, 0.0, true);
    Matrix h1 = p.factors[1], u1 = Matrix::Zero(8, 3);
    admm_ls(cls, h1, u1, RegularizerSpec::nonneg(), tight());

    for (LossKind kind : {LossKind::least_squares, LossKind::missing}) {
      LossSpec loss;
      loss.kind = kind;
      if (kind == LossKind::missing) {
        loss.mask_source = MaskSource::bitmask;
        loss.mask.assign(y.size(), 1);
      }
      auto cg = build_cache(p.factors, 1, p.data, 0.0, false);
      Matrix h2 = p.factors[1], u2 = Matrix::Zero(8, 3);
      auto split = SplitState::dense_from(y);
      admm_general(cg, p.data, p.factors, 1, h2, u2, split, RegularizerSpec::nonneg(), loss, tight(20000));
      EXPECT_NEAR(ls_objective(p.y, p.w, h1), ls_objective(p.y, p.w, h2), 1e-6) << to_string(kind);
    }
  }
}

TEST(AdmmGeneral, SparseStructuredStateMatchesDense) {
  std::mt19937_64 rng(60);
  const std::vector<std::size_t> dims{5, 4, 3};
  std::vector<Matrix> f{oracle::random_matrix(rng, 5, 2), oracle::random_matrix(rng, 4, 2),
                        oracle::random_matrix(rng, 3, 2)};
  std::vector<std::size_t> idx;
  std::vector<double> vals;
  std::bernoulli_distribution keep(0.5);
  std::uniform_real_distribution<double> val(-2, 2);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t a = 0; a < 5; ++a)
        if (keep(rng)) {
          idx.insert(idx.end(), {a, b, c});
          vals.push_back(val(rng));
        }
  SparseTensor ys(dims, idx, vals);
  DenseTensor yd = ys.to_dense();
  std::vector<std::uint8_t> mask(yd.size(), 0);
  for (std::size_t e = 0; e < ys.nnz(); ++e) mask[ys.linear_index(e)] = 1;

  for (LossKind kind : {LossKind::missing, LossKind::l1, LossKind::huber}) {
    LossSpec ls, ld;
    ls.kind = ld.kind = kind;
    ls.lambda = ld.lambda = 0.3;
    ls.mask_source = MaskSource::unlisted_entries;
    ld.mask_source = MaskSource::bitmask;
    ld.mask = mask;
    TensorData ds = ys, dd = yd;
    auto s_sparse = SplitState::sparse_from(ys);
    auto s_dense = SplitState::dense_from(yd);
    std::vector<Matrix> fs = f, fd = f;
    std::vector<Matrix> us(3, Matrix()), ud;
    for (std::size_t m = 0; m < 3; ++m) us[m] = Matrix::Zero(f[m].rows(), 2);
    ud = us;
    for (int outer = 0; outer < 4; ++outer)
      for (std::size_t m = 0; m < 3; ++m) {
        auto cs = build_cache(fs, m, ds, 0.0, false);
        auto cd = build_cache(fd, m, dd, 0.0, false);
        InnerOptions o;
        o.max_iter = 5;
        o.eps = 1e-300;
        admm_general(cs, ds, fs, m, fs[m], us[m], s_sparse, RegularizerSpec::none(), ls, o);
        admm_general(cd, dd, fd, m, fd[m], ud[m], s_dense, RegularizerSpec::none(), ld, o);
      }
    for (std::size_t m = 0; m < 3; ++m) EXPECT_LT(oracle::rel_diff(fs[m], fd[m]), 1e-9) << to_string(kind);
    // observed V entries agree; unobserved dense V stays zero for the missing loss
    for (std::size_t e = 0; e < ys.nnz(); ++e)
      EXPECT_NEAR(s_sparse.v_obs[e], s_dense.v[ys.linear_index(e)], 1e-9);
    if (kind == LossKind::missing) {
      for (std::size_t i = 0; i < yd.size(); ++i) {
        if (!mask[i]) {
          EXPECT_NEAR(s_dense.v[i], 0.0, 1e-12);
        }
      }
    }
  }
}

TEST(AdmmGeneral, L1RecoversCorruptedEntry) {
  Eigen::VectorXd a(4), b(4);
  a << 1.0, 2.0, 1.5, 0.5;
  b << 2.0, 1.0, 0.5, 1.5;
  Matrix clean = a * b.transpose();
  Matrix y = clean;
  y(1, 2) += 10.0;
  DenseTensor t = as_tensor(y);
  TensorData data = t;
  std::vector<Matrix> f{Matrix::Constant(4, 1, 1.0), Matrix::Constant(4, 1, 1.0)};
  std::vector<Matrix> u{Matrix::Zero(4, 1), Matrix::Zero(4, 1)};
  std::vector<SplitState> split{SplitState::dense_from(t), SplitState::dense_from(t)};
  LossSpec l1;
  l1.kind = LossKind::l1;
  InnerOptions o;
  o.eps = 1e-14;
  o.max_iter = 50;
  for (int outer = 0; outer < 2000; ++outer)
    for (std::size_t m = 0; m < 2; ++m) {
      auto c = build_cache(f, m, data, 0.0, false);
      admm_general(c, data, f, m, f[m], u[m], split[m], RegularizerSpec::none(), l1, o);
    }
  const Matrix fit = f[0] * f[1].transpose();
  EXPECT_LE(std::abs(fit(1, 2) - clean(1, 2)), 1e-3);
  EXPECT_LE((fit - clean).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(AdmmGeneral, ZeroIterationsLeaveStateUnchanged) {
  auto p = random_problem(70, 6, 5, 2);
  DenseTensor y = std::get<DenseTensor>(p.data);
  auto c = build_cache(p.factors, 1, p.data, 0.0, false);
  Matrix h = p.factors[1], u = Matrix::Constant(5, 2, 0.3);
  auto split = SplitState::dense_from(y);
  split.v[0] = 0.7;
  const Matrix h0 = h, u0 = u;
  const auto v0 = split.v;
  LossSpec loss;
  loss.kind = LossKind::huber;
  InnerOptions o;
  o.max_iter = 0;
  auto rep = admm_general(c, p.data, p.factors, 1, h, u, split, RegularizerSpec::nonneg(), loss, o);
  EXPECT_EQ(rep.iterations, 0u);
  EXPECT_EQ(h, h0);
  EXPECT_EQ(u, u0);
  EXPECT_EQ(split.v, v0);
  EXPECT_EQ(split.ytilde, y);
}

TEST(AdmmGeneral, ShapeAndStateErrors) {
  auto p = random_problem(71, 6, 5, 2);
  auto c = build_cache(p.factors, 1, p.data, 0.0, false);
  Matrix h = p.factors[1], u = Matrix::Zero(5, 2);
  SparseTensor s = SparseTensor::from_dense(std::get<DenseTensor>(p.data));
  auto wrong = SplitState::sparse_from(s);
  LossSpec loss;
  EXPECT_THROW(admm_general(c, p.data, p.factors, 1, h, u, wrong, RegularizerSpec::none(), loss, InnerOptions{}),
               std::invalid_argument);
  auto split = SplitState::dense_from(std::get<DenseTensor>(p.data));
  Matrix badu = Matrix::Zero(4, 2);
  EXPECT_THROW(admm_general(c, p.data, p.factors, 1, h, badu, split, RegularizerSpec::none(), loss, InnerOptions{}),
               std::invalid_argument);
}

TEST(AdmmGeneral, CountsOneMttkrpPerIteration) {
  auto p = random_problem(72, 6, 5, 2);
  Counters cnt;
  auto c = build_cache(p.factors, 1, p.data, 0.0, false, {}, &cnt);
  EXPECT_EQ(cnt.mttkrp_calls, 0u);
  Matrix h = p.factors[1], u = Matrix::Zero(5, 2);
  auto split = SplitState::dense_from(std::get<DenseTensor>(p.data));
  InnerOptions o;
  o.eps = 1e-300;
  o.max_iter = 7;
  admm_general(c, p.data, p.factors, 1, h, u, split, RegularizerSpec::none(), LossSpec{}, o, nullptr, &cnt);
  EXPECT_EQ(cnt.mttkrp_calls, 7u);
  EXPECT_EQ(cnt.factorizations, 1u);
  EXPECT_EQ(cnt.inner_iterations, 7u);
}
