#pragma once

// Random direction distributions (z, zeta, u) and their exact moments.

#include "nzk/common.hpp"

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <string_view>

namespace nzk {

enum class Family { gaussian, laplace, student_t };

inline std::string_view to_string(Family f) {
  switch (f) {
    case Family::gaussian: return "gaussian";
    case Family::laplace: return "laplace";
    case Family::student_t: return "student_t";
  }
  return "?";
}

inline Family parse_family(std::string_view s) {
  if (s == "gaussian" || s == "normal") return Family::gaussian;
  if (s == "laplace") return Family::laplace;
  if (s == "student_t" || s == "student" || s == "t") return Family::student_t;
  throw ConfigError("unknown direction family '" + std::string(s) + "'");
}

/// Per-coordinate i.i.d. distribution of a d-dimensional direction vector.
///
/// `scale` is sigma for gaussian and b for laplace. Student-t always has unit
/// scale and is controlled only through `dof`.
struct DirectionSpec {
  Family family = Family::gaussian;
  double mean = 0.0;
  double scale = 1.0;
  std::optional<double> dof;
  std::size_t dim = 1;

  static DirectionSpec gaussian(double sigma, std::size_t dim, double mean = 0.0) {
    return {Family::gaussian, mean, sigma, std::nullopt, dim};
  }
  static DirectionSpec laplace(double b, std::size_t dim, double mean = 0.0) {
    return {Family::laplace, mean, b, std::nullopt, dim};
  }
  static DirectionSpec student_t(double nu, std::size_t dim, double mean = 0.0) {
    return {Family::student_t, mean, 1.0, nu, dim};
  }

  DirectionSpec with_dim(std::size_t d) const {
    DirectionSpec s = *this;
    s.dim = d;
    return s;
  }

  void validate() const {
    if (dim == 0) throw ConfigError("direction dimension must be positive");
    if (!(scale > 0.0) || !std::isfinite(scale))
      throw ConfigError("direction scale must be > 0, got " + std::to_string(scale));
    if (!std::isfinite(mean)) throw ConfigError("direction mean must be finite");
    if (family == Family::student_t) {
      if (!dof || !(*dof > 4.0))
        throw ConfigError("student_t directions need dof > 4 (finite fourth moment)");
      if (scale != 1.0) throw ConfigError("student_t directions have unit scale; set dof instead");
    }
  }

  std::string describe() const {
    std::string s = std::string(to_string(family)) + "(mean=" + std::to_string(mean);
    if (family == Family::student_t)
      s += ", dof=" + std::to_string(dof.value_or(0.0));
    else
      s += ", scale=" + std::to_string(scale);
    return s + ", dim=" + std::to_string(dim) + ")";
  }
};

/// Raw per-coordinate moments of a direction component z_i.
struct Moments {
  double m1 = 0.0;      // E[z]
  double m2 = 0.0;      // E[z^2]
  double m4 = 0.0;      // E[z^4]
  double var_sq = 0.0;  // V[z^2] = m4 - m2^2
};

/// Draw one direction vector. Components are i.i.d.; the same engine state
/// always produces the same vector.
inline Vec sample(const DirectionSpec& spec, Engine& rng) {
  spec.validate();
  Vec z(static_cast<Eigen::Index>(spec.dim));
  switch (spec.family) {
    case Family::gaussian: {
      std::normal_distribution<double> normal(0.0, 1.0);
      for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = spec.mean + spec.scale * normal(rng);
      break;
    }
    case Family::laplace: {
      // Inverse CDF on u in (-1/2, 1/2); u = -1/2 has probability zero but is
      // excluded explicitly so log never sees 0.
      std::uniform_real_distribution<double> uniform(-0.5, 0.5);
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        double u = uniform(rng);
        while (u == -0.5) u = uniform(rng);
        const double mag = -spec.scale * std::log1p(-2.0 * std::abs(u));
        z[i] = spec.mean + (u < 0.0 ? -mag : mag);
      }
      break;
    }
    case Family::student_t: {
      std::student_t_distribution<double> t(*spec.dof);
      for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = spec.mean + t(rng);
      break;
    }
  }
  return z;
}

/// Closed-form raw moments. Central moments per family, shifted by the mean:
/// gaussian (sigma^2, 3 sigma^4), laplace (2b^2, 24b^4),
/// student_t (nu/(nu-2), 3nu^2/((nu-2)(nu-4))).
inline Moments exact_moments(const DirectionSpec& spec) {
  if (spec.family == Family::student_t && (!spec.dof || !(*spec.dof > 4.0)))
    throw PreconditionError("student_t fourth moment undefined for dof <= 4");
  spec.validate();
  double c2 = 0.0;
  double c4 = 0.0;
  switch (spec.family) {
    case Family::gaussian: {
      const double s2 = spec.scale * spec.scale;
      c2 = s2;
      c4 = 3.0 * s2 * s2;
      break;
    }
    case Family::laplace: {
      const double b2 = spec.scale * spec.scale;
      c2 = 2.0 * b2;
      c4 = 24.0 * b2 * b2;
      break;
    }
    case Family::student_t: {
      const double nu = *spec.dof;
      c2 = nu / (nu - 2.0);
      c4 = 3.0 * nu * nu / ((nu - 2.0) * (nu - 4.0));
      break;
    }
  }
  const double mu = spec.mean;
  const double mu2 = mu * mu;
  Moments m;
  m.m1 = mu;
  m.m2 = mu2 + c2;
  m.m4 = mu2 * mu2 + 6.0 * mu2 * c2 + c4;  // symmetric families: odd central moments vanish
  m.var_sq = m.m4 - m.m2 * m.m2;
  return m;
}

/// V[z_i^2] + d * E[z_i^2]^2, the factor multiplying the Gram matrix when the
/// same zero-mean vector perturbs the loss and estimates the tangent.
inline double kernel_scale(const DirectionSpec& spec, std::size_t d) {
  if (spec.mean != 0.0)
    throw PreconditionError("kernel_scale assumes zero-mean directions, got mean " +
                            std::to_string(spec.mean));
  const Moments m = exact_moments(spec);
  return m.var_sq + static_cast<double>(d) * m.m2 * m.m2;
}

inline double kernel_scale(const DirectionSpec& spec) { return kernel_scale(spec, spec.dim); }

/// Zero-mean spec of the given family whose kernel_scale equals `target`.
inline DirectionSpec match_scale(double target, Family family, std::size_t d) {
  if (!(target > 0.0)) throw PreconditionError("match_scale target must be > 0");
  if (d == 0) throw PreconditionError("match_scale dimension must be positive");
  const double dd = static_cast<double>(d);
  switch (family) {
    case Family::gaussian:
      // (d + 2) sigma^4 = target
      return DirectionSpec::gaussian(std::pow(target / (dd + 2.0), 0.25), d);
    case Family::laplace:
      // 20 b^4 + d (2 b^2)^2 = (20 + 4d) b^4 = target
      return DirectionSpec::laplace(std::pow(target / (20.0 + 4.0 * dd), 0.25), d);
    case Family::student_t:
      break;
  }
  throw UnsupportedError("match_scale: student_t has no scale parameter to solve for");
}

/// How zeta relates to z when both are needed.
enum class SampleMode { independent, shared };

inline std::string_view to_string(SampleMode m) {
  return m == SampleMode::shared ? "shared" : "independent";
}

inline SampleMode parse_sample_mode(std::string_view s) {
  if (s == "shared" || s == "identical") return SampleMode::shared;
  if (s == "independent") return SampleMode::independent;
  throw ConfigError("unknown sample mode '" + std::string(s) + "'");
}

/// A (zeta, z) pair. In shared mode zeta is a copy of z; in independent mode
/// the two come from separate streams.
struct DirectionPair {
  Vec zeta;
  Vec z;
};

inline DirectionPair sample_pair(const DirectionSpec& spec_zeta, const DirectionSpec& spec_z,
                                 SampleMode mode, Engine& zeta_rng, Engine& z_rng) {
  DirectionPair p;
  p.z = sample(spec_z, z_rng);
  p.zeta = mode == SampleMode::shared ? p.z : sample(spec_zeta, zeta_rng);
  return p;
}

}  // namespace nzk
