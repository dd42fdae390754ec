// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "factorforge/harness.hpp"
#include "oracles.hpp"

using namespace factorforge;

namespace {

Matrix permuted_rescaled(const Matrix& h, const std::vector<Eigen::Index>& perm, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  std::bernoulli_distribution flip(0.5);
  Matrix out(h.rows(), h.cols());
  for (Eigen::Index j = 0; j < h.cols(); ++j)
    out.col(j) = h.col(perm[static_cast<std::size_t>(j)]) * scale(rng) * (flip(rng) ? -1.0 : 1.0);
  return out;
}

SparseTensor observe_all(const Matrix& y) {
  return SparseTensor::from_dense(
      DenseTensor({static_cast<std::size_t>(y.rows()), static_cast<std::size_t>(y.cols())},
                  std::vector<double>(y.data(), y.data() + y.size())),
      true);
}

}  // namespace

TEST(Synthetic, NoiselessDenseDataIsExactlyTheModel) {
  const auto s = gen_synthetic({{6, 5, 4}, 3, 0.0, 0.0, 1, true});
  EXPECT_EQ(s.data, full(s.factors));
  EXPECT_EQ(s.noise_norm, 0.0);
  for (const auto& h : s.factors) EXPECT_GT(h.minCoeff(), 0.0);
  const auto g = gen_synthetic({{6, 5}, 2, 0.0, 0.0, 1, false});
  EXPECT_LT(g.factors[0].minCoeff(), 0.0);
}

TEST(Synthetic, FullSparsifyGivesTheZeroTensor) {
  const auto s = gen_synthetic({{5, 4, 3}, 2, 1.0, 0.0, 2, true});
  EXPECT_EQ(s.data.squared_norm(), 0.0);
}

TEST(Synthetic, FactorMeanMatchesTheRecipe) {
  for (double sp : {0.0, 0.5}) {
    const auto s = gen_synthetic({{50000, 2}, 1, sp, 0.0, 3, true});
    const Matrix& h = s.factors[0];
    const double n = static_cast<double>(h.size());
    const double mean = h.sum() / n;
    // entry = Bernoulli(1-sp) * Exp(1): mean 1-sp, second moment 2(1-sp)
    const double sd = std::sqrt((2.0 * (1.0 - sp) - (1.0 - sp) * (1.0 - sp)) / n);
    EXPECT_NEAR(mean, 1.0 - sp, 3.0 * sd) << "sparsify " << sp;
    const double zeros = static_cast<double>((h.array() == 0.0).count()) / n;
    EXPECT_NEAR(zeros, sp, 3.0 * std::sqrt(sp * (1 - sp) / n) + 1e-12);
  }
}

TEST(Synthetic, NoiseVarianceAndDeterminism) {
  const SynthSpec spec{{40, 50}, 3, 0.5, 0.01, 4, true};
  const auto a = gen_synthetic(spec), b = gen_synthetic(spec);
  EXPECT_EQ(a.data, b.data);
  const DenseTensor clean = full(a.factors);
  double ss = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) ss += (a.data[i] - clean[i]) * (a.data[i] - clean[i]);
  EXPECT_NEAR(std::sqrt(ss), a.noise_norm, 1e-12 * a.noise_norm);
  // 2000 draws of variance 0.01: sample variance within 4 standard errors
  EXPECT_NEAR(ss / 2000.0, 0.01, 4.0 * 0.01 * std::sqrt(2.0 / 2000.0));
  auto other = spec;
  other.seed = 5;
  EXPECT_NE(gen_synthetic(other).data, a.data);
}

TEST(Synthetic, InvalidSpecs) {
  EXPECT_THROW(gen_synthetic({{5}, 1}), std::invalid_argument);
  EXPECT_THROW(gen_synthetic({{5, 0}, 1}), std::invalid_argument);
  EXPECT_THROW(gen_synthetic({{5, 5}, 1, 1.5}), std::invalid_argument);
  EXPECT_THROW(gen_synthetic({{5, 5}, 1, 0.0, -1.0}), std::invalid_argument);
}

TEST(Congruence, IdentityPermutationAndScaling) {
  std::mt19937_64 rng(30);
  const Matrix h = oracle::random_matrix(rng, 20, 5);
  EXPECT_NEAR(congruence(h, h), 1.0, 1e-15);
  const Matrix p = permuted_rescaled(h, {3, 0, 4, 1, 2}, rng);
  EXPECT_NEAR(congruence(p, h), 1.0, 1e-12);
  const std::vector<Matrix> est{p, permuted_rescaled(h, {3, 0, 4, 1, 2}, rng)}, truth{h, h};
  for (double c : congruence_per_mode(est, truth)) EXPECT_NEAR(c, 1.0, 1e-12);
}

TEST(Congruence, OrthogonalAndIndependentPairsScoreNearZero) {
  std::mt19937_64 rng(31);
  const Matrix q = oracle::random_matrix(rng, 50, 8).householderQr().householderQ() * Matrix::Identity(50, 8);
  EXPECT_LT(congruence(q.leftCols(4), q.rightCols(4)), 1e-12);
  // independent Gaussian columns: E|cos| ~ sqrt(2 / (pi n)) ~ 0.008 at n = 10^4
  const Matrix a = oracle::random_matrix(rng, 10000, 3), b = oracle::random_matrix(rng, 10000, 3);
  EXPECT_LT(congruence(a, b), 0.05);
}

TEST(Congruence, GreedyMatchingIsDocumentedBehaviour) {
  // the greedy rule takes the 0.9 pair first even though the other
  // assignment has the larger total
  Matrix t = Matrix::Identity(3, 2);
  Matrix e(3, 2);
  e << 0.9, 0.8, std::sqrt(1 - 0.81), 0.0, 0.0, 0.6;
  e.col(1).normalize();
  const double c01 = std::abs(t.col(0).dot(e.col(1))), c11 = std::abs(t.col(1).dot(e.col(1)));
  EXPECT_NEAR(congruence(e, t), 0.5 * (0.9 + c11), 1e-12);
  EXPECT_GT(c01, 0.0);
}

TEST(Congruence, Errors) {
  Matrix z = Matrix::Zero(3, 2), h = Matrix::Ones(3, 2);
  EXPECT_THROW(congruence(z, h), std::invalid_argument);
  EXPECT_THROW(congruence(h, z), std::invalid_argument);
  EXPECT_THROW(congruence(h, Matrix::Ones(4, 2)), std::invalid_argument);
}

TEST(Completion, FoldsPartitionTheObservations) {
  const auto s = gen_synthetic({{12, 10}, 2, 0.0, 0.0, 6, true});
  const SparseTensor y = SparseTensor::from_dense(s.data, true);
  SplitSpec split;
  split.seed = 3;
  const auto [train, test] = split_fold(y, split, 0);
  EXPECT_EQ(train.nnz(), 96u);
  EXPECT_EQ(test.nnz(), 24u);
  std::set<std::size_t> seen;
  for (std::size_t e = 0; e < train.nnz(); ++e) seen.insert(train.linear_index(e));
  for (std::size_t e = 0; e < test.nnz(); ++e) EXPECT_TRUE(seen.insert(test.linear_index(e)).second);
  EXPECT_EQ(seen.size(), 120u);
  const auto again = split_fold(y, split, 0);
  EXPECT_TRUE(std::ranges::equal(again.second.values(), test.values()));
  const auto other = split_fold(y, split, 1);
  EXPECT_FALSE(std::ranges::equal(other.second.values(), test.values()));

  const SparseTensor two({2, 2}, {0, 0, 1, 1}, {1.0, 2.0});
  split.train_fraction = 0.9;
  EXPECT_THROW(split_fold(two, split, 0), std::invalid_argument);
  split.train_fraction = 1.0;
  EXPECT_THROW(split_fold(y, split, 0), std::invalid_argument);
}

TEST(Completion, ExactRecoveryWhenTrainEqualsTest) {
  const auto s = gen_synthetic({{15, 12}, 2, 0.0, 0.0, 7, true});
  const SparseTensor y = SparseTensor::from_dense(s.data, true);
  ProblemConfig base;
  base.rank = 2;
  base.outer_max_iter = 2000;
  base.outer_tol = 1e-14;
  base.seed = 1;
  const ProblemConfig cfg = completion_config({LossKind::least_squares, CompletionReg::nonneg}, base, false);
  const FitResult r = fit(y, cfg);
  EXPECT_LE(mae(y, r.factors), 1e-4);
}

TEST(Completion, BiasColumnsAloneFitAConstant) {
  const SparseTensor y = observe_all(Matrix::Constant(8, 6, 3.5));
  ProblemConfig base;
  base.rank = 2;
  base.outer_max_iter = 500;
  base.outer_tol = 1e-15;
  const ProblemConfig cfg = completion_config({LossKind::least_squares, CompletionReg::nonneg_bias}, base, false);
  const FitResult r = fit(y, cfg);
  EXPECT_TRUE((r.factors[0].col(0).array() == 1.0).all());
  EXPECT_TRUE((r.factors[1].col(1).array() == 1.0).all());
  EXPECT_LE(mae(y, r.factors), 1e-9);
  EXPECT_THROW(completion_config({LossKind::least_squares, CompletionReg::nonneg_bias}, ProblemConfig{}, false),
               std::invalid_argument);
}

TEST(Completion, BeatsTheZeroModelAndStaysConsistent) {
  auto s = gen_synthetic({{100, 120}, 4, 0.0, 0.25, 8, true});
  const SparseTensor y = SparseTensor::from_dense(s.data, true);
  SplitSpec split;
  split.folds = 1;
  split.seed = 8;
  ProblemConfig base;
  base.rank = 4;
  base.outer_max_iter = 100;
  const std::vector<CompletionVariant> variants{{LossKind::least_squares, CompletionReg::nonneg},
                                                {LossKind::least_squares, CompletionReg::tikhonov}};
  CompletionOptions opt;
  opt.base = base;
  const auto res = run_completion_cv(y, split, variants, opt);
  ASSERT_EQ(res.rows.size(), 2u);
  const auto test = split_fold(y, split, 0).second;
  double zero_mae = 0.0;
  for (double v : test.values()) zero_mae += std::abs(v);
  zero_mae /= static_cast<double>(test.nnz());
  for (const auto& row : res.rows) {
    EXPECT_LT(row.test_mae, zero_mae) << row.config;
    // the data term at the returned factors never exceeds the full objective
    EXPECT_LE(row.train_loss, row.train_objective) << row.config;
  }
  EXPECT_EQ(res.rows[0].config, "ls/nonneg");
  EXPECT_EQ(res.averages[1].config, "ls/tikhonov");
  EXPECT_DOUBLE_EQ(res.averages[0].test_mae, res.rows[0].test_mae);
}

TEST(Completion, ClampingAndKlVariant) {
  Matrix m(2, 2);
  m << 1, 5, 3, 2;
  const SparseTensor y = observe_all(m);
  std::vector<Matrix> f{Matrix::Constant(2, 1, 3.0), Matrix::Constant(2, 1, 3.0)};  // predicts 9
  EXPECT_DOUBLE_EQ(mae(y, f), (8 + 4 + 6 + 7) / 4.0);
  EXPECT_DOUBLE_EQ(mae(y, f, std::pair{1.0, 5.0}), (4 + 0 + 2 + 3) / 4.0);

  const auto s = gen_synthetic({{20, 18}, 2, 0.0, 0.0, 9, true});
  const SparseTensor yy = SparseTensor::from_dense(s.data, true);
  SplitSpec split;
  split.folds = 2;
  CompletionOptions opt;
  opt.base.rank = 2;
  opt.base.outer_max_iter = 100;
  const std::vector<CompletionVariant> kl{{LossKind::kl, CompletionReg::nonneg}};
  const auto res = run_completion_cv(yy, split, kl, opt);
  ASSERT_EQ(res.rows.size(), 2u);
  EXPECT_EQ(res.rows[1].fold, 1u);
  EXPECT_EQ(res.rows[0].config, "kl/nonneg");
  for (const auto& r : res.rows) EXPECT_LT(r.test_mae, 0.1 * s.data.values()[0] + 1.0);
  EXPECT_THROW(run_completion_cv(yy, split, {}, opt), std::invalid_argument);
  EXPECT_THROW(run_completion_cv(SparseTensor({2, 2, 2}, {0, 0, 0}, {1.0}), split, kl, opt), std::invalid_argument);
}

TEST(DictLearn, IdentityDictionaryWithoutPenaltyReproducesTheData) {
  std::mt19937_64 rng(40);
  const Matrix y = oracle::random_matrix(rng, 6, 40);
  DictLearnSpec spec;
  spec.atoms = 6;
  spec.lambda = 0.0;
  spec.iters = 300;
  spec.inner_eps = 1e-8;
  spec.inner_max_iter = 200;
  spec.initial_dictionary = Matrix::Identity(6, 6);
  const auto r = run_dictlearn(y, spec);
  EXPECT_LT((r.codes - y).norm() / y.norm(), 1e-6);
  EXPECT_NEAR(r.stats.energy_fraction, 1.0, 1e-10);
}

TEST(DictLearn, LargePenaltyZeroesTheCodes) {
  std::mt19937_64 rng(41);
  const Matrix y = oracle::random_matrix(rng, 6, 40);
  DictLearnSpec spec;
  spec.atoms = 4;
  spec.lambda = 1e6;
  spec.iters = 20;
  const auto r = run_dictlearn(y, spec);
  EXPECT_EQ(r.codes.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(r.stats.energy_fraction, 0.0);
  EXPECT_EQ(r.stats.atoms_per_sample, 0.0);
}

TEST(DictLearn, PlantedDictionaryIsRecoveredOnBothSolvePaths) {
  const auto p = planted_dictionary(20, 30, 1000, 3, 20.0, 0);
  for (Eigen::Index j = 0; j < 30; ++j) EXPECT_NEAR(p.dictionary.col(j).norm(), 1.0, 1e-12);
  for (Eigen::Index c = 0; c < p.codes.cols(); ++c) EXPECT_EQ((p.codes.col(c).array() != 0.0).count(), 3);
  const Matrix clean = p.dictionary * p.codes;
  EXPECT_NEAR(20.0 * std::log10(clean.norm() / (p.y - clean).norm()), 20.0, 1e-9);

  DictLearnSpec spec;
  spec.atoms = 30;
  spec.lambda = 0.2;
  spec.iters = 100;
  spec.seed = 100;
  spec.lemma = LemmaPolicy::never;
  const auto chol = run_dictlearn(p.y, spec);
  spec.lemma = LemmaPolicy::always;
  const auto lemma = run_dictlearn(p.y, spec);
  EXPECT_GE(congruence(chol.dictionary, p.dictionary), 0.9);
  EXPECT_NEAR(chol.stats.objective, lemma.stats.objective, 1e-6);
  EXPECT_LE(chol.stats.max_atom_norm_seen, 1.0 + 1e-12);
  EXPECT_LE(lemma.stats.max_atom_norm_seen, 1.0 + 1e-12);
  EXPECT_GT(chol.stats.energy_fraction, 0.9);
  EXPECT_GT(chol.stats.atoms_per_sample, 0.0);
  EXPECT_EQ(chol.stats.trace.size(), 100u);
}

TEST(DictLearn, NonnegativeVariantKeepsSigns) {
  const auto p = planted_dictionary(12, 8, 200, 2, 30.0, 1, true);
  DictLearnSpec spec;
  spec.atoms = 8;
  spec.lambda = 0.05;
  spec.iters = 50;
  spec.nonneg = true;
  const auto r = run_dictlearn(p.y, spec);
  EXPECT_GE(r.dictionary.minCoeff(), 0.0);
  EXPECT_GE(r.codes.minCoeff(), 0.0);
  EXPECT_LE(r.stats.max_atom_norm_seen, 1.0 + 1e-12);
  spec.initial_dictionary = Matrix::Identity(3, 3);
  EXPECT_THROW(run_dictlearn(p.y, spec), std::invalid_argument);
}
