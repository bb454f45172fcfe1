#pragma once

// Per-sample and expected zeroth-order kernels, the linear NTK, and the
// analytic expected kernels that drive each training mode.

#include "nzk/common.hpp"
#include "nzk/directions.hpp"
#include "nzk/models.hpp"
#include "nzk/stats.hpp"
#include "nzk/zo_core.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <string_view>

namespace nzk {

enum class KernelKind { ntk, nzk_sample, nzk_expected_mc, nzk_expected_closed, nzk_linearized };

inline std::string_view to_string(KernelKind k) {
  switch (k) {
    case KernelKind::ntk: return "ntk";
    case KernelKind::nzk_sample: return "nzk_sample";
    case KernelKind::nzk_expected_mc: return "nzk_expected_mc";
    case KernelKind::nzk_expected_closed: return "nzk_expected_closed";
    case KernelKind::nzk_linearized: return "nzk_linearized";
  }
  return "?";
}

struct KernelMatrix {
  Mat values;
  KernelKind kind = KernelKind::ntk;
  bool normalized = false;  // values already divided by N
  std::map<std::string, std::string> meta;

  Eigen::Index size() const { return values.rows(); }
};

/// <FD(x_i; zeta) zeta, FD(x_j; z) z>
template <ScalarModel M>
double nzk_entry(const M& model, const Vec& theta, double epsilon, const Vec& zeta, const Vec& z,
                 const Vec& xi, const Vec& xj) {
  return fd_factor(model, theta, epsilon, zeta, xi) * fd_factor(model, theta, epsilon, z, xj) * zeta.dot(z);
}

/// Full N x N single-draw kernel. Rank one for any model.
template <ScalarModel M>
KernelMatrix nzk_matrix(const M& model, const Vec& theta, double epsilon, const Vec& zeta, const Vec& z,
                        const Mat& X) {
  const Vec a = fd_factors(model, theta, epsilon, zeta, X);
  const Vec b = fd_factors(model, theta, epsilon, z, X);
  KernelMatrix k;
  k.values = (zeta.dot(z)) * a * b.transpose();
  k.kind = KernelKind::nzk_sample;
  k.meta["epsilon"] = format_double(epsilon);
  return k;
}

struct McKernel {
  KernelMatrix kernel;  // symmetrised mean
  Mat std_error;        // per entry, of the symmetrised mean
  double raw_asymmetry = 0.0;  // max |K - K^T| of the unsymmetrised mean
  std::size_t samples = 0;

  /// Largest |kernel - reference| measured in standard errors. Entries whose
  /// SE is zero count as infinitely far unless they match exactly.
  double max_z(const Mat& reference) const {
    require_shape(reference.rows() == kernel.values.rows() && reference.cols() == kernel.values.cols(),
                  "McKernel::max_z: shape mismatch");
    double worst = 0.0;
    for (Eigen::Index i = 0; i < reference.rows(); ++i)
      for (Eigen::Index j = 0; j < reference.cols(); ++j) {
        const double dev = std::abs(kernel.values(i, j) - reference(i, j));
        const double se = std_error(i, j);
        const double zscore = se > 0.0 ? dev / se : (dev == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
        worst = std::max(worst, zscore);
      }
    return worst;
  }
};

inline constexpr std::size_t kMcChunk = 256;

/// Monte Carlo expected NZK over M independent (zeta, z) draws. Draw m uses
/// streams (seed, kernel_z, m) and (seed, kernel_zeta, m); draws are grouped
/// into fixed-size chunks reduced in chunk order, so the result does not
/// depend on the thread count.
template <ScalarModel M>
McKernel expected_nzk_mc(const M& model, const Vec& theta, double epsilon, const DirectionSpec& spec_zeta,
                         const DirectionSpec& spec_z, SampleMode mode, std::size_t m, const Mat& X,
                         std::uint64_t seed, unsigned threads = 1) {
  if (m < 2) throw ConfigError("expected_nzk_mc needs M >= 2");
  const DirectionSpec sz = spec_z.with_dim(model.num_params());
  const DirectionSpec szeta = spec_zeta.with_dim(model.num_params());
  sz.validate();
  szeta.validate();
  const std::size_t chunks = (m + kMcChunk - 1) / kMcChunk;
  std::vector<MatrixStats> sym(chunks);
  std::vector<Mat> raw(chunks);
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t lo = c * kMcChunk;
    const std::size_t hi = std::min(m, lo + kMcChunk);
    raw[c] = Mat::Zero(X.rows(), X.rows());
    for (std::size_t s = lo; s < hi; ++s) {
      Engine zrng = make_stream(seed, Purpose::kernel_z, s);
      Engine zeta_rng = make_stream(seed, Purpose::kernel_zeta, s);
      const DirectionPair p = sample_pair(szeta, sz, mode, zeta_rng, zrng);
      const Mat k = nzk_matrix(model, theta, epsilon, p.zeta, p.z, X).values;
      raw[c] += k;
      sym[c].add(0.5 * (k + k.transpose()));
    }
  });
  MatrixStats total;
  Mat raw_sum = Mat::Zero(X.rows(), X.rows());
  for (std::size_t c = 0; c < chunks; ++c) {
    total.merge(sym[c]);
    raw_sum += raw[c];
  }
  McKernel out;
  out.samples = m;
  out.kernel.values = total.mean();
  out.kernel.kind = KernelKind::nzk_expected_mc;
  out.std_error = total.std_error();
  const Mat raw_mean = raw_sum / static_cast<double>(m);
  out.raw_asymmetry = (raw_mean - raw_mean.transpose()).cwiseAbs().maxCoeff();
  out.kernel.meta = {{"M", std::to_string(m)},
                     {"epsilon", format_double(epsilon)},
                     {"seed", std::to_string(seed)},
                     {"sample_mode", std::string(to_string(mode))},
                     {"spec_z", spec_z.describe()},
                     {"spec_zeta", spec_zeta.describe()},
                     {"raw_asymmetry", format_double(out.raw_asymmetry)}};
  return out;
}

/// X X^T
inline KernelMatrix ntk_linear(const Mat& X) {
  KernelMatrix k;
  k.values = X * X.transpose();
  k.kind = KernelKind::ntk;
  return k;
}

/// Expected NZK of a linear model for independent Gaussian zeta and z:
/// s_zeta^2 s_z^2 <x_i,x_j> + (s_zeta^2 m_z^2 + m_zeta^2 s_z^2 + d m_zeta^2 m_z^2) <x_i,1><1,x_j>.
inline KernelMatrix expected_nzk_closed(const DirectionSpec& spec_zeta, const DirectionSpec& spec_z, const Mat& X) {
  if (spec_zeta.family != Family::gaussian || spec_z.family != Family::gaussian)
    throw UnsupportedError("expected_nzk_closed is defined for Gaussian directions only");
  spec_zeta.validate();
  spec_z.validate();
  const double vz = spec_z.scale * spec_z.scale;
  const double vzeta = spec_zeta.scale * spec_zeta.scale;
  const double mz2 = spec_z.mean * spec_z.mean;
  const double mzeta2 = spec_zeta.mean * spec_zeta.mean;
  const double d = static_cast<double>(X.cols());
  KernelMatrix k;
  k.values = X * X.transpose();
  if (vzeta * vz != 1.0) k.values *= vzeta * vz;
  const double c = vzeta * mz2 + mzeta2 * vz + d * mzeta2 * mz2;
  if (c != 0.0) {
    const Vec s = X.rowwise().sum();
    k.values += c * s * s.transpose();
  }
  k.kind = KernelKind::nzk_expected_closed;
  k.meta = {{"spec_z", spec_z.describe()}, {"spec_zeta", spec_zeta.describe()}, {"sample_mode", "independent"}};
  return k;
}

/// E[z z^T] for i.i.d. components: (m2 - m1^2) I + m1^2 1 1^T.
inline Mat second_moment_matrix(const DirectionSpec& spec, std::size_t d) {
  const Moments m = exact_moments(spec);
  const auto n = static_cast<Eigen::Index>(d);
  return (m.m2 - m.m1 * m.m1) * Mat::Identity(n, n) + Mat::Constant(n, n, m.m1 * m.m1);
}

/// Expected NZK for independent zeta and z of any family, for a model linear
/// in theta with feature rows F: F E[zeta zeta^T] E[z z^T] F^T.
inline KernelMatrix expected_nzk_independent(const DirectionSpec& spec_zeta, const DirectionSpec& spec_z, const Mat& F) {
  const auto d = static_cast<std::size_t>(F.cols());
  KernelMatrix k;
  k.values = F * second_moment_matrix(spec_zeta, d) * second_moment_matrix(spec_z, d) * F.transpose();
  k.kind = KernelKind::nzk_expected_closed;
  k.meta = {{"spec_z", spec_z.describe()}, {"spec_zeta", spec_zeta.describe()}, {"sample_mode", "independent"}};
  return k;
}

/// Expected NZK of a linear model when zeta = z (zero mean): kernel_scale * Gram.
inline KernelMatrix expected_nzk_identical(const DirectionSpec& spec, const Mat& X) {
  const double scale = kernel_scale(spec, static_cast<std::size_t>(X.cols()));
  KernelMatrix k;
  k.values = scale * (X * X.transpose());
  k.kind = KernelKind::nzk_expected_closed;
  k.meta = {{"spec", spec.describe()}, {"sample_mode", "shared"}, {"kernel_scale", format_double(scale)}};
  return k;
}

/// <g(x_i), g(x_j)> from the cached tangent features.
inline KernelMatrix expected_nzk_linearized(const LinearizedModel& lin, const Mat& X) {
  const Mat G = lin.tangents_for(X);
  KernelMatrix k;
  k.values = G * G.transpose();
  k.kind = KernelKind::nzk_linearized;
  k.meta = {{"m_u", std::to_string(lin.m_u())}, {"epsilon", format_double(lin.epsilon())}};
  return k;
}

/// Expected function-space kernel of one training step for a model whose
/// outputs are linear in theta with feature rows F (X for a linear model,
/// cached tangents for a linearized one).
///   fo:            F F^T
///   zo_parametric: F E[z z^T] F^T, E[z z^T] = (m2 - m1^2) I + m1^2 1 1^T
///   zo_kernel:     kernel_scale * F F^T (zero-mean shared directions)
inline KernelMatrix expected_training_kernel(TrainMode mode, const DirectionSpec& spec, const Mat& F) {
  KernelMatrix k;
  k.kind = KernelKind::nzk_expected_closed;
  k.meta["mode"] = std::string(to_string(mode));
  switch (mode) {
    case TrainMode::fo:
      k.values = F * F.transpose();
      k.kind = KernelKind::ntk;
      break;
    case TrainMode::zo_parametric: {
      const Moments m = exact_moments(spec);
      const Vec s = F.rowwise().sum();
      k.values = (m.m2 - m.m1 * m.m1) * (F * F.transpose()) + m.m1 * m.m1 * s * s.transpose();
      break;
    }
    case TrainMode::zo_kernel: {
      const double scale = kernel_scale(spec, static_cast<std::size_t>(F.cols()));
      k.values = scale * (F * F.transpose());
      k.meta["kernel_scale"] = format_double(scale);
      break;
    }
  }
  return k;
}

struct ConstancyReport {
  double max_deviation = 0.0;
  std::vector<double> per_snapshot;  // max |K(theta_t) - K(theta_0)| for each t
};

inline ConstancyReport constancy_report(const std::vector<Vec>& thetas,
                                        const std::function<Mat(const Vec&)>& kernel_fn) {
  if (thetas.size() < 2) throw PreconditionError("constancy_report needs at least two snapshots");
  const Mat k0 = kernel_fn(thetas.front());
  ConstancyReport r;
  for (const Vec& th : thetas) {
    const Mat k = kernel_fn(th);
    require_shape(k.rows() == k0.rows() && k.cols() == k0.cols(), "constancy_report: kernel shape changed");
    const double dev = (k - k0).cwiseAbs().maxCoeff();
    r.per_snapshot.push_back(dev);
    r.max_deviation = std::max(r.max_deviation, dev);
  }
  return r;
}

/// |mean_k Tr(M_k) - Tr(mean_k M_k)| over `count` random n x n matrices
/// with standard normal entries.
inline double trace_commutation_gap(std::size_t count, std::size_t n, std::uint64_t seed) {
  if (count == 0 || n == 0) throw ConfigError("trace_commutation_gap needs count, n >= 1");
  Mat sum = Mat::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  double trace_sum = 0.0;
  for (std::size_t k = 0; k < count; ++k) {
    Engine rng = make_stream(seed, Purpose::check, k);
    std::normal_distribution<double> normal(0.0, 1.0);
    Mat m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    sum += m;
    trace_sum += m.trace();
  }
  const double c = static_cast<double>(count);
  return std::abs(trace_sum / c - (sum / c).trace());
}

/// Smallest eigenvalue relative to the trace; PSD within tolerance when >= -tol.
inline double min_eigen_over_trace(const Mat& k) {
  const Mat sym = 0.5 * (k + k.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
  const double tr = std::max(std::abs(sym.trace()), std::numeric_limits<double>::min());
  return es.eigenvalues().minCoeff() / tr;
}

}  // namespace nzk
