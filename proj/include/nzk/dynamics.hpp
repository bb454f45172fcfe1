#pragma once

// Closed-form function-space trajectories under kernel gradient descent,
// spectral analysis of the normalised kernel, and empirical comparisons.

#include "nzk/common.hpp"
#include "nzk/kernels.hpp"
#include "nzk/stats.hpp"
#include "nzk/zo_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace nzk {

/// K / N, tagged so it cannot be normalised twice.
inline KernelMatrix normalize_kernel(const KernelMatrix& k) {
  if (k.normalized) throw PreconditionError("kernel is already normalized");
  require_shape(k.values.rows() == k.values.cols() && k.values.rows() > 0, "normalize_kernel: K must be square");
  KernelMatrix out = k;
  out.values /= static_cast<double>(k.values.rows());
  out.normalized = true;
  return out;
}

struct SpectralDecomposition {
  Vec eigenvalues;   // descending
  Mat eigenvectors;  // columns, orthonormal
};

inline double asymmetry(const Mat& k) { return (k - k.transpose()).cwiseAbs().maxCoeff(); }

inline SpectralDecomposition spectral(const Mat& k_bar) {
  require_shape(k_bar.rows() == k_bar.cols(), "spectral: matrix must be square");
  if (asymmetry(k_bar) > 1e-8) throw ContractError("spectral: matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(k_bar);
  if (es.info() != Eigen::Success) throw ContractError("spectral: eigendecomposition failed");
  SpectralDecomposition s;
  s.eigenvalues = es.eigenvalues().reverse();
  s.eigenvectors = es.eigenvectors().rowwise().reverse();
  return s;
}

struct ClosedFormTrajectory {
  std::vector<std::size_t> record_steps;
  Mat fvals;           // records x N
  Vec decay_factors;   // 1 - eta * lambda_i, eigenvalues descending
  Vec eigenvalues;
  bool diverging = false;  // eta * lambda_1 >= 2
  std::string warning;
};

/// f_t = f* + (I - eta K_bar)^t (f0 - f*), by iterating the residual.
inline ClosedFormTrajectory closed_form_trajectory(const Mat& k_bar, const Vec& f0, const Vec& f_star, double eta,
                                                   std::size_t steps, std::size_t record_every = 1) {
  require_shape(k_bar.rows() == k_bar.cols() && k_bar.rows() == f0.size() && f0.size() == f_star.size(),
                "closed_form_trajectory: K_bar, f0 and f* must agree in size");
  if (!(eta > 0.0)) throw ConfigError("eta must be > 0");
  const SpectralDecomposition s = spectral(k_bar);
  ClosedFormTrajectory cf;
  cf.eigenvalues = s.eigenvalues;
  cf.decay_factors = (1.0 - eta * s.eigenvalues.array()).matrix();
  if (s.eigenvalues.size() > 0 && eta * s.eigenvalues[0] >= 2.0) {
    cf.diverging = true;
    cf.warning = "eta * lambda_1 = " + format_double(eta * s.eigenvalues[0]) + " >= 2; residual grows";
  }
  cf.record_steps = recorded_steps(steps, record_every);
  cf.fvals.resize(static_cast<Eigen::Index>(cf.record_steps.size()), f0.size());
  const Mat step = Mat::Identity(k_bar.rows(), k_bar.cols()) - eta * k_bar;
  Vec r = f0 - f_star;
  std::size_t next = 0;
  for (std::size_t t = 0;; ++t) {
    if (cf.record_steps[next] == t) {
      cf.fvals.row(static_cast<Eigen::Index>(next)) = (t == 0 ? f0 : Vec(f_star + r)).transpose();
      ++next;
    }
    if (t == steps) break;
    r = step * r;
  }
  return cf;
}

/// Same trajectory via V (I - eta Lambda)^t V^T (f0 - f*) + f*, for cross-checks.
inline Vec spectral_prediction(const SpectralDecomposition& s, const Vec& f0, const Vec& f_star, double eta,
                               std::size_t t) {
  const Vec c = s.eigenvectors.transpose() * (f0 - f_star);
  Vec scaled(c.size());
  for (Eigen::Index i = 0; i < c.size(); ++i)
    scaled[i] = std::pow(1.0 - eta * s.eigenvalues[i], static_cast<double>(t)) * c[i];
  return f_star + s.eigenvectors * scaled;
}

/// |<v_i, f_t - f*>| per recorded row and mode.
inline Mat modal_coefficients(const SpectralDecomposition& s, const Mat& fvals, const Vec& f_star) {
  Mat out(fvals.rows(), s.eigenvalues.size());
  for (Eigen::Index r = 0; r < fvals.rows(); ++r)
    out.row(r) = (s.eigenvectors.transpose() * (fvals.row(r).transpose() - f_star)).cwiseAbs().transpose();
  return out;
}

struct Comparison {
  double max_abs_err = 0.0;
  std::vector<double> per_step_err;  // max over points, per recorded step
};

inline Comparison compare(const std::vector<std::size_t>& steps_a, const Mat& a,
                          const std::vector<std::size_t>& steps_b, const Mat& b) {
  if (steps_a != steps_b) throw ShapeError("compare: recording cadence differs");
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "compare: fvals shape mismatch");
  Comparison c;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double e = (a.row(r) - b.row(r)).cwiseAbs().maxCoeff();
    c.per_step_err.push_back(e);
    c.max_abs_err = std::max(c.max_abs_err, e);
  }
  return c;
}

inline Comparison compare(const Trajectory& empirical, const ClosedFormTrajectory& analytic) {
  return compare(empirical.record_steps, empirical.fvals, analytic.record_steps, analytic.fvals);
}

// ---------------------------------------------------------------------------
// Seed ensembles

struct EnsembleResult {
  std::size_t seeds = 0;
  std::vector<std::size_t> record_steps;
  Vec loss_mean;  // T + 1
  Vec loss_se;
  Mat fvals_mean;  // records x N
  Mat fvals_se;
};

/// Runs `seeds` copies of train() with cfg.seed + k, k = 0..seeds-1, from the
/// same initial parameters; reduced in seed order.
template <ScalarModel M>
EnsembleResult train_ensemble(const M& model, const Dataset& data, const TrainConfig& cfg, std::size_t seeds,
                              unsigned threads = 1) {
  if (seeds == 0) throw ConfigError("ensemble needs at least one seed");
  std::vector<Trajectory> runs(seeds);
  if (cfg.mode == TrainMode::fo) {
    // FO training draws nothing from the seed; every member is the same run.
    TrainConfig c = cfg;
    c.keep_thetas = false;
    const Trajectory t = train(model, data, c);
    std::fill(runs.begin(), runs.end(), t);
  } else {
    parallel_for(seeds, threads, [&](std::size_t k) {
      TrainConfig c = cfg;
      c.seed = cfg.seed + k;
      c.keep_thetas = false;
      runs[k] = train(model, data, c);
    });
  }
  MatrixStats f;
  MatrixStats l;
  for (const Trajectory& t : runs) {
    f.add(t.fvals);
    l.add(Eigen::Map<const Vec>(t.losses.data(), static_cast<Eigen::Index>(t.losses.size())));
  }
  EnsembleResult e;
  e.seeds = seeds;
  e.record_steps = runs.front().record_steps;
  e.loss_mean = l.mean().col(0);
  e.loss_se = l.std_error().col(0);
  e.fvals_mean = f.mean();
  e.fvals_se = f.std_error();
  return e;
}

struct EnsembleComparison {
  double max_abs_err = 0.0;
  double max_z = 0.0;          // largest |mean - analytic| / SE over all recorded entries
  std::size_t worst_step = 0;  // recorded step where max_z occurs
  std::vector<double> per_step_z;
};

/// Entrywise deviation of the seed mean from an analytic trajectory, in
/// standard errors of the seed mean. Zero-SE entries count only if they differ.
inline EnsembleComparison compare_ensemble(const EnsembleResult& e, const ClosedFormTrajectory& analytic) {
  if (e.record_steps != analytic.record_steps) throw ShapeError("compare_ensemble: recording cadence differs");
  require_shape(e.fvals_mean.rows() == analytic.fvals.rows() && e.fvals_mean.cols() == analytic.fvals.cols(),
                "compare_ensemble: fvals shape mismatch");
  EnsembleComparison c;
  for (Eigen::Index r = 0; r < analytic.fvals.rows(); ++r) {
    double row_z = 0.0;
    for (Eigen::Index j = 0; j < analytic.fvals.cols(); ++j) {
      const double dev = std::abs(e.fvals_mean(r, j) - analytic.fvals(r, j));
      const double se = e.fvals_se(r, j);
      c.max_abs_err = std::max(c.max_abs_err, dev);
      const double z = se > 0.0 ? dev / se : (dev <= 1e-12 ? 0.0 : std::numeric_limits<double>::infinity());
      row_z = std::max(row_z, z);
    }
    c.per_step_z.push_back(row_z);
    if (row_z > c.max_z) {
      c.max_z = row_z;
      c.worst_step = analytic.record_steps[static_cast<std::size_t>(r)];
    }
  }
  return c;
}

/// Largest |mean_a - mean_b| / sqrt(se_a^2 + se_b^2) over the given steps.
inline double max_pooled_z(const EnsembleResult& a, const EnsembleResult& b, const std::vector<std::size_t>& steps) {
  double worst = 0.0;
  for (std::size_t t : steps) {
    const auto i = static_cast<Eigen::Index>(t);
    if (i >= a.loss_mean.size() || i >= b.loss_mean.size()) throw ShapeError("max_pooled_z: step out of range");
    const double se = std::hypot(a.loss_se[i], b.loss_se[i]);
    const double dev = std::abs(a.loss_mean[i] - b.loss_mean[i]);
    worst = std::max(worst, se > 0.0 ? dev / se : (dev == 0.0 ? 0.0 : std::numeric_limits<double>::infinity()));
  }
  return worst;
}

}  // namespace nzk
