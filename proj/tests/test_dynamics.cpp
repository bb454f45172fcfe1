#include "nzk/dynamics.hpp"
#include "nzk/datasets.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace nzk;

namespace {

Mat random_spd(std::size_t n, std::uint64_t seed) {
  Engine rng = make_stream(seed, Purpose::check);
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
  Mat k = a * a.transpose() / static_cast<double>(n) + 0.1 * Mat::Identity(a.rows(), a.cols());
  return 0.5 * (k + k.transpose());
}

Vec random_vec(std::size_t n, std::uint64_t seed) {
  Engine rng = make_stream(seed, Purpose::check, 1);
  return sample(DirectionSpec::gaussian(1.0, n), rng);
}

}  // namespace

TEST(Dynamics, NormalizeKernel) {
  KernelMatrix k{Mat::Identity(4, 4), KernelKind::ntk, false, {}};
  const KernelMatrix kb = normalize_kernel(k);
  EXPECT_TRUE(kb.values.isApprox(Mat::Identity(4, 4) / 4.0));
  EXPECT_TRUE(kb.normalized);
  EXPECT_THROW(normalize_kernel(kb), PreconditionError);
  KernelMatrix circle{Mat(2, 2), KernelKind::ntk, false, {}};
  circle.values << 1, 0.3, 0.3, 1;
  EXPECT_EQ(normalize_kernel(circle).values, Mat(circle.values / 2.0));
}

TEST(Dynamics, SpectralExamples) {
  EXPECT_TRUE(spectral(Mat::Identity(3, 3)).eigenvalues.isOnes(1e-15));
  Vec x(3);
  x << 0.6, 0.0, 0.8;
  const Vec ev = spectral(x * x.transpose()).eigenvalues;
  EXPECT_NEAR(ev[0], 1.0, 1e-15);
  EXPECT_NEAR(ev[1], 0.0, 1e-15);
  EXPECT_NEAR(ev[2], 0.0, 1e-15);
  Mat k(2, 2);
  k << 2, 1, 1, 2;
  const SpectralDecomposition s = spectral(k);
  // Characteristic polynomial l^2 - 4l + 3 has roots 3 and 1.
  EXPECT_NEAR(s.eigenvalues[0], 3.0, 1e-14);
  EXPECT_NEAR(s.eigenvalues[1], 1.0, 1e-14);
  Mat bad = k;
  bad(0, 1) += 1e-6;
  EXPECT_THROW(spectral(bad), ContractError);
}

TEST(Dynamics, SpectralInvariants) {
  for (std::size_t n : {1u, 5u, 20u}) {
    const Mat k = random_spd(n, n);
    const SpectralDecomposition s = spectral(k);
    const Mat& v = s.eigenvectors;
    EXPECT_LE((v * s.eigenvalues.asDiagonal() * v.transpose() - k).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE((v.transpose() * v - Mat::Identity(v.rows(), v.cols())).cwiseAbs().maxCoeff(), 1e-10);
    for (Eigen::Index i = 1; i < s.eigenvalues.size(); ++i) EXPECT_GE(s.eigenvalues[i - 1], s.eigenvalues[i]);
  }
}

TEST(Dynamics, ScalarRecursion) {
  Mat k(1, 1);
  k << 0.7;
  const Vec f0 = Vec::Constant(1, 3.0), fs = Vec::Constant(1, -1.0);
  const double eta = 0.2;
  const ClosedFormTrajectory cf = closed_form_trajectory(k, f0, fs, eta, 50);
  double f = 3.0;
  for (std::size_t t = 0; t <= 50; ++t) {
    EXPECT_NEAR(cf.fvals(static_cast<Eigen::Index>(t), 0), f, 1e-14);
    f = -1.0 + (1.0 - eta * 0.7) * (f + 1.0);
  }
  EXPECT_EQ(cf.fvals(0, 0), 3.0);
  EXPECT_NEAR(cf.decay_factors[0], 1.0 - 0.14, 1e-15);
  EXPECT_FALSE(cf.diverging);
}

TEST(Dynamics, RecursionMatchesSpectralForm) {
  for (std::size_t n : {3u, 10u, 20u}) {
    const Mat k = random_spd(n, 100 + n);
    const SpectralDecomposition s = spectral(k);
    const double eta = 0.9 / s.eigenvalues[0];
    const Vec f0 = random_vec(n, 1), fs = random_vec(n, 2);
    const std::size_t T = 10000;
    const ClosedFormTrajectory cf = closed_form_trajectory(k, f0, fs, eta, T, 1000);
    for (std::size_t r = 0; r < cf.record_steps.size(); ++r) {
      const Vec pred = spectral_prediction(s, f0, fs, eta, cf.record_steps[r]);
      EXPECT_LE((cf.fvals.row(static_cast<Eigen::Index>(r)).transpose() - pred).cwiseAbs().maxCoeff(), 1e-9);
    }
  }
}

TEST(Dynamics, ModalDecayIsMonotone) {
  const std::size_t n = 8;
  const Mat k = random_spd(n, 3);
  const SpectralDecomposition s = spectral(k);
  const double eta = 0.99 / s.eigenvalues[0];
  const Vec f0 = random_vec(n, 4), fs = random_vec(n, 5);
  const ClosedFormTrajectory cf = closed_form_trajectory(k, f0, fs, eta, 500);
  const Mat modal = modal_coefficients(s, cf.fvals, fs);
  for (Eigen::Index t = 1; t < modal.rows(); ++t)
    for (Eigen::Index i = 0; i < modal.cols(); ++i) EXPECT_LE(modal(t, i), modal(t - 1, i) + 1e-15);
}

TEST(Dynamics, ConvergesWithinModalBound) {
  const std::size_t n = 6;
  const Mat k = random_spd(n, 7);
  const SpectralDecomposition s = spectral(k);
  const double eta = 0.5 / s.eigenvalues[0];
  const Vec f0 = random_vec(n, 8), fs = random_vec(n, 9);
  const std::size_t T = 2000;
  const ClosedFormTrajectory cf = closed_form_trajectory(k, f0, fs, eta, T, T);
  const double lmin = s.eigenvalues[static_cast<Eigen::Index>(n) - 1];
  const double bound = std::pow(1.0 - eta * lmin, static_cast<double>(T)) * (f0 - fs).norm();
  EXPECT_LE((cf.fvals.row(1).transpose() - fs).cwiseAbs().maxCoeff(), bound + 1e-15);
}

TEST(Dynamics, DivergenceIsFlagged) {
  Mat k(1, 1);
  k << 1.0;
  const ClosedFormTrajectory cf = closed_form_trajectory(k, Vec::Ones(1), Vec::Zero(1), 2.5, 3);
  EXPECT_TRUE(cf.diverging);
  EXPECT_FALSE(cf.warning.empty());
  EXPECT_NEAR(cf.fvals(3, 0), -3.375, 1e-12);
}

TEST(Dynamics, FixedPoint) {
  const Mat k = random_spd(4, 1);
  const Vec f = random_vec(4, 2);
  const ClosedFormTrajectory cf = closed_form_trajectory(k, f, f, 0.1, 100);
  for (Eigen::Index r = 0; r < cf.fvals.rows(); ++r) EXPECT_EQ(Vec(cf.fvals.row(r).transpose()), f);
}

TEST(Dynamics, FoTrainingMatchesClosedForm) {
  const Dataset ds = gen_teacher_student(2, 8, {Vec::Map(std::vector<double>{7, 2}.data(), 2), 0.02}, 0);
  const LinearModel m = LinearModel::random(2, 0);
  TrainConfig cfg;
  cfg.eta = 1e-3;
  cfg.steps = 1000;
  const Trajectory tr = train(m, ds, cfg);
  const Mat kb = normalize_kernel(ntk_linear(ds.inputs)).values;
  const ClosedFormTrajectory cf = closed_form_trajectory(kb, m.eval_batch(m.params(), ds.inputs), ds.targets, cfg.eta, cfg.steps);
  EXPECT_LE(compare(tr, cf).max_abs_err, 1e-10);
  EXPECT_EQ(compare(tr.record_steps, tr.fvals, tr.record_steps, tr.fvals).max_abs_err, 0.0);
  EXPECT_THROW(compare({0, 1}, Mat::Zero(2, 8), {0, 2}, Mat::Zero(2, 8)), ShapeError);
}

TEST(Dynamics, LinearizedReducesToLinear) {
  const Dataset ds = gen_teacher_student(2, 6, {Vec::Map(std::vector<double>{7, 2}.data(), 2), 0.0}, 1);
  const Mlp base = Mlp::random({2, 1}, Activation::relu(), 5, false);
  const std::size_t m_u = 1000000;
  const LinearizedModel lin = linearize(base, base.params(), 1e-3, m_u, DirectionSpec::gaussian(1.0, 1), ds.inputs, 6);
  const Vec f0 = base.eval_batch(base.params(), ds.inputs);
  const double eta = 0.5;
  const std::size_t T = 20;
  const Mat ka = normalize_kernel(expected_nzk_linearized(lin, ds.inputs)).values;
  const Mat kb = normalize_kernel(ntk_linear(ds.inputs)).values;
  // Tangent entries on unit inputs have SE at most sqrt(2 / m_u); allow 5 SE
  // per factor in each Gram entry, divided by N after normalisation.
  const double entry_tol = 2.0 * 5.0 * std::sqrt(2.0) * std::sqrt(2.0 / static_cast<double>(m_u)) / 6.0;
  EXPECT_LE((ka - kb).cwiseAbs().maxCoeff(), entry_tol);
  const auto a = closed_form_trajectory(ka, f0, ds.targets, eta, T, 5);
  const auto b = closed_form_trajectory(kb, f0, ds.targets, eta, T, 5);
  // Both maps are contractions here, so |f_a(t) - f_b(t)| <= eta t |dK_bar|_2 |r0|.
  const double dk = Eigen::JacobiSVD<Mat>(ka - kb).singularValues()[0];
  const double tol = eta * static_cast<double>(T) * dk * (f0 - ds.targets).norm();
  EXPECT_LE(compare(a.record_steps, a.fvals, b.record_steps, b.fvals).max_abs_err, tol);
  // The bound is informative: the trajectory itself moves much further.
  EXPECT_GT((b.fvals.row(b.fvals.rows() - 1) - b.fvals.row(0)).cwiseAbs().maxCoeff(), 5.0 * tol);
}

TEST(Dynamics, EnsembleAgreesWithKernelPrediction) {
  const Dataset ds = gen_teacher_student(2, 8, {Vec::Map(std::vector<double>{7, 2}.data(), 2), 0.02}, 0);
  const LinearModel m = LinearModel::random(2, 0);
  TrainConfig cfg;
  cfg.mode = TrainMode::zo_kernel;
  cfg.sample_mode = SampleMode::shared;
  cfg.direction_z = cfg.direction_zeta = DirectionSpec::gaussian(1.0, 2);
  cfg.eta = 1e-3;
  cfg.steps = 1000;
  cfg.record_every = 100;
  const EnsembleResult e = train_ensemble(m, ds, cfg, 100, 2);
  const Mat kb = normalize_kernel(expected_training_kernel(cfg.mode, cfg.direction_z, ds.inputs)).values;
  const auto cf = closed_form_trajectory(kb, m.eval_batch(m.params(), ds.inputs), ds.targets, cfg.eta, cfg.steps, 100);
  const EnsembleComparison c = compare_ensemble(e, cf);
  // 80 entries are compared at once, so allow a family-wise margin above 3 SE.
  EXPECT_LE(c.max_z, 4.5);
  EXPECT_EQ(c.per_step_z.front(), 0.0);
}

TEST(Dynamics, EnsembleIsIndependentOfThreadCount) {
  const Dataset ds = gen_teacher_student(2, 4, {Vec::Map(std::vector<double>{1, 2}.data(), 2), 0.0}, 0);
  const LinearModel m = LinearModel::random(2, 1);
  TrainConfig cfg;
  cfg.mode = TrainMode::zo_parametric;
  cfg.direction_z = cfg.direction_zeta = DirectionSpec::gaussian(1.0, 2);
  cfg.steps = 100;
  const EnsembleResult a = train_ensemble(m, ds, cfg, 9, 1);
  const EnsembleResult b = train_ensemble(m, ds, cfg, 9, 3);
  EXPECT_EQ(a.loss_mean, b.loss_mean);
  EXPECT_EQ(a.fvals_se, b.fvals_se);
  EXPECT_EQ(max_pooled_z(a, b, {0, 50, 100}), 0.0);
}

TEST(Dynamics, FoEnsembleEqualsSingleRun) {
  const Dataset ds = gen_teacher_student(2, 4, {Vec::Map(std::vector<double>{1, 2}.data(), 2), 0.0}, 0);
  const LinearModel m = LinearModel::random(2, 1);
  TrainConfig cfg;
  cfg.steps = 50;
  cfg.seed = 7;
  const EnsembleResult e = train_ensemble(m, ds, cfg, 5);
  TrainConfig other = cfg;
  other.seed = 11;
  const Trajectory t = train(m, ds, other);
  EXPECT_EQ(e.fvals_mean, t.fvals);
  EXPECT_TRUE(e.loss_se.isZero(0.0));
  EXPECT_EQ(e.seeds, 5u);
}
