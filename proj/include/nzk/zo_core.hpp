#pragma once

// Gradient estimators and the training loop.
//
// All zeroth-order paths touch the loss only through Loss::operator(), which
// evaluates a value. No loss derivative is ever taken except in fo mode.

#include "nzk/common.hpp"
#include "nzk/datasets.hpp"
#include "nzk/directions.hpp"
#include "nzk/models.hpp"

#include <cmath>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace nzk {

enum class LossKind { squared, absolute };

struct Loss {
  LossKind kind = LossKind::squared;

  double operator()(double f, double y) const {
    const double r = f - y;
    return kind == LossKind::squared ? 0.5 * r * r : std::abs(r);
  }

  Vec values(const Vec& f, const Vec& y) const {
    return f.binaryExpr(y, [this](double a, double b) { return (*this)(a, b); });
  }

  double mean(const Vec& f, const Vec& y) const { return values(f, y).mean(); }
};

inline std::string_view to_string(LossKind k) { return k == LossKind::squared ? "squared" : "absolute"; }

inline LossKind parse_loss(std::string_view s) {
  if (s == "squared") return LossKind::squared;
  if (s == "absolute") return LossKind::absolute;
  throw ConfigError("unknown loss '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Estimators

/// (1/N) sum_i [L(f(x_i; theta + eps z)) - L(f(x_i; theta - eps z))] / (2 eps) * z
template <ScalarModel M>
Vec zo_gradient(const M& model, const Dataset& data, const Vec& theta, double epsilon, const Vec& z,
                const Loss& loss, std::size_t step = 0) {
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
  require_shape(static_cast<std::size_t>(z.size()) == model.num_params(),
                "zo_gradient: direction dimension must equal parameter count");
  const Vec fp = model.eval_batch(theta + epsilon * z, data.inputs);
  const Vec fm = model.eval_batch(theta - epsilon * z, data.inputs);
  const double c = (loss.values(fp, data.targets) - loss.values(fm, data.targets)).mean() / (2.0 * epsilon);
  if (!std::isfinite(c)) throw DivergenceError("zo_gradient: non-finite loss difference", step);
  return c * z;
}

template <ScalarModel M>
Vec zo_gradient_batch(const M& model, const Dataset& data, const Vec& theta, double epsilon,
                      const std::vector<Vec>& directions, const Loss& loss, std::size_t step = 0) {
  if (directions.empty()) throw ConfigError("zo_gradient_batch: B must be >= 1");
  Vec g = Vec::Zero(static_cast<Eigen::Index>(model.num_params()));
  for (const Vec& z : directions) g += zo_gradient(model, data, theta, epsilon, z, loss, step);
  return g / static_cast<double>(directions.size());
}

/// Direction j of step `step` comes from stream (seed, perturbation, step, j).
template <ScalarModel M>
Vec zo_gradient_batch(const M& model, const Dataset& data, const Vec& theta, double epsilon,
                      const DirectionSpec& spec, std::size_t batch, const Loss& loss, std::uint64_t seed,
                      std::size_t step = 0) {
  if (batch == 0) throw ConfigError("zo_gradient_batch: B must be >= 1");
  const DirectionSpec s = spec.with_dim(model.num_params());
  std::vector<Vec> dirs;
  dirs.reserve(batch);
  for (std::size_t j = 0; j < batch; ++j) {
    Engine rng = make_stream(seed, Purpose::perturbation, step, j);
    dirs.push_back(sample(s, rng));
  }
  return zo_gradient_batch(model, data, theta, epsilon, dirs, loss, step);
}

struct MagnitudeDirectionSplit {
  Vec magnitudes;               // [L(f+) - L(f-)] / (f+ - f-)
  Mat directions;               // row i: (f+ - f-) / (2 eps) * z
  std::vector<bool> degenerate; // |f+ - f-| < 1e-12
  Vec degenerate_contribution;  // sum over degenerate rows of the direct two-point term

  /// (1/N) sum_i magnitudes_i * directions_i, with degenerate rows taken directly.
  Vec contract() const {
    Vec g = degenerate_contribution;
    for (Eigen::Index i = 0; i < magnitudes.size(); ++i)
      if (!degenerate[static_cast<std::size_t>(i)]) g += magnitudes[i] * directions.row(i).transpose();
    return g / static_cast<double>(magnitudes.size());
  }
};

template <ScalarModel M>
MagnitudeDirectionSplit magnitude_direction_split(const M& model, const Dataset& data, const Vec& theta,
                                                  double epsilon, const Vec& z, const Loss& loss) {
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
  require_shape(static_cast<std::size_t>(z.size()) == model.num_params(),
                "magnitude_direction_split: direction dimension must equal parameter count");
  const Vec fp = model.eval_batch(theta + epsilon * z, data.inputs);
  const Vec fm = model.eval_batch(theta - epsilon * z, data.inputs);
  const Eigen::Index n = fp.size();
  MagnitudeDirectionSplit s;
  s.magnitudes = Vec::Zero(n);
  s.directions = Mat::Zero(n, z.size());
  s.degenerate.assign(static_cast<std::size_t>(n), false);
  s.degenerate_contribution = Vec::Zero(z.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double df = fp[i] - fm[i];
    const double dl = loss(fp[i], data.targets[i]) - loss(fm[i], data.targets[i]);
    if (std::abs(df) < 1e-12) {
      s.degenerate[static_cast<std::size_t>(i)] = true;
      s.degenerate_contribution += dl / (2.0 * epsilon) * z;
      continue;
    }
    s.magnitudes[i] = dl / df;
    s.directions.row(i) = (df / (2.0 * epsilon)) * z.transpose();
  }
  return s;
}

/// Exact gradient of the mean squared loss: (1/N) sum_i (f_i - y_i) df/dtheta(x_i).
template <ScalarModel M>
Vec fo_gradient(const M& model, const Dataset& data, const Vec& theta, const Loss& loss) {
  if (loss.kind != LossKind::squared) throw UnsupportedError("fo_gradient supports squared loss only");
  const Vec r = model.eval_batch(theta, data.inputs) - data.targets;
  const double n = static_cast<double>(r.size());
  if constexpr (std::is_same_v<M, LinearModel>) {
    return data.inputs.transpose() * r / n;
  } else if constexpr (std::is_same_v<M, LinearizedModel>) {
    return model.tangents_for(data.inputs).transpose() * r / n;
  } else {
    Vec g = Vec::Zero(static_cast<Eigen::Index>(model.num_params()));
    for (Eigen::Index i = 0; i < r.size(); ++i)
      g += r[i] * model.param_gradient(theta, data.inputs.row(i).transpose());
    return g / n;
  }
}

// ---------------------------------------------------------------------------
// Training

/// fo: theta -= eta * exact gradient.
/// zo_parametric: theta -= eta * G(z), the two-point estimate.
/// zo_kernel: theta += zeta <zeta, -eta G(z)> with zeta = z, so that every
///   model output moves by its finite-difference tangent along zeta; in
///   function space this is kernel gradient descent with the per-step NZK.
enum class TrainMode { fo, zo_parametric, zo_kernel };

inline std::string_view to_string(TrainMode m) {
  switch (m) {
    case TrainMode::fo: return "fo";
    case TrainMode::zo_parametric: return "zo_parametric";
    case TrainMode::zo_kernel: return "zo_kernel";
  }
  return "?";
}

inline TrainMode parse_train_mode(std::string_view s) {
  if (s == "fo") return TrainMode::fo;
  if (s == "zo_parametric" || s == "parametric") return TrainMode::zo_parametric;
  if (s == "zo_kernel" || s == "kernel") return TrainMode::zo_kernel;
  throw ConfigError("unknown training mode '" + std::string(s) + "'");
}

struct TrainConfig {
  double eta = 1e-3;
  double epsilon = 1e-3;
  std::size_t steps = 1000;
  TrainMode mode = TrainMode::fo;
  SampleMode sample_mode = SampleMode::independent;
  std::size_t batch = 1;
  DirectionSpec direction_z = DirectionSpec::gaussian(1.0, 1);
  DirectionSpec direction_zeta = DirectionSpec::gaussian(1.0, 1);
  Loss loss{};
  std::uint64_t seed = 0;
  std::size_t record_every = 1;
  bool keep_thetas = false;

  void validate() const {
    if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("eta must be > 0");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
    if (batch == 0) throw ConfigError("batch must be >= 1");
    if (record_every == 0) throw ConfigError("record_every must be >= 1");
    if (mode == TrainMode::zo_kernel && sample_mode != SampleMode::shared)
      throw ConfigError("zo_kernel mode requires sample_mode = shared");
    if (mode == TrainMode::fo && loss.kind != LossKind::squared)
      throw ConfigError("fo mode supports squared loss only");
    if (mode != TrainMode::fo) {
      direction_z.validate();
      direction_zeta.validate();
    }
  }
};

/// Steps at which function values are recorded: multiples of `every`, plus T.
inline std::vector<std::size_t> recorded_steps(std::size_t steps, std::size_t every) {
  if (every == 0) throw ConfigError("record_every must be >= 1");
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t <= steps; t += every) out.push_back(t);
  if (out.back() != steps) out.push_back(steps);
  return out;
}

struct Trajectory {
  std::vector<double> losses;             // T + 1 entries
  std::vector<std::size_t> record_steps;  // rows of fvals
  Mat fvals;                              // records x N
  std::vector<Vec> thetas;                // parallel to record_steps when kept
};

namespace detail {

inline void check_loss(double l, std::size_t step) {
  if (!std::isfinite(l) || l > 1e12) throw DivergenceError("training diverged (loss " + std::to_string(l) + ")", step);
}

}  // namespace detail

/// One parameter update of the given mode at step t.
template <ScalarModel M>
Vec train_update(const M& model, const Dataset& data, const Vec& theta, const TrainConfig& cfg, std::size_t t) {
  if (cfg.mode == TrainMode::fo) return -cfg.eta * fo_gradient(model, data, theta, cfg.loss);

  const DirectionSpec sz = cfg.direction_z.with_dim(model.num_params());
  const DirectionSpec szeta = cfg.direction_zeta.with_dim(model.num_params());
  Vec step = Vec::Zero(theta.size());
  for (std::size_t j = 0; j < cfg.batch; ++j) {
    Engine zrng = make_stream(cfg.seed, Purpose::perturbation, t, j);
    Engine zeta_rng = make_stream(cfg.seed, Purpose::tangent, t, j);
    const DirectionPair p = sample_pair(szeta, sz, cfg.sample_mode, zeta_rng, zrng);
    const Vec g = zo_gradient(model, data, theta, cfg.epsilon, p.z, cfg.loss, t);
    if (cfg.mode == TrainMode::zo_parametric)
      step -= cfg.eta * g;
    else
      step -= cfg.eta * p.zeta.dot(g) * p.zeta;
  }
  return step / static_cast<double>(cfg.batch);
}

template <ScalarModel M>
Trajectory train(const M& model, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  data.validate();
  detail::check_input(data.inputs.cols(), model.input_dim(), "train");

  const auto steps = recorded_steps(cfg.steps, cfg.record_every);
  Trajectory tr;
  tr.record_steps = steps;
  tr.fvals.resize(static_cast<Eigen::Index>(steps.size()), data.inputs.rows());
  tr.losses.reserve(cfg.steps + 1);

  Vec theta = model.params();
  std::size_t next = 0;
  for (std::size_t t = 0;; ++t) {
    const Vec f = model.eval_batch(theta, data.inputs);
    const double l = cfg.loss.mean(f, data.targets);
    detail::check_loss(l, t);
    tr.losses.push_back(l);
    if (next < steps.size() && steps[next] == t) {
      tr.fvals.row(static_cast<Eigen::Index>(next)) = f.transpose();
      if (cfg.keep_thetas) tr.thetas.push_back(theta);
      ++next;
    }
    if (t == cfg.steps) break;
    theta += train_update(model, data, theta, cfg, t);
  }
  return tr;
}

}  // namespace nzk
