#pragma once

// Config-driven experiment commands: train, kernel, dynamics, check, sweep.
// Each writes its CSV artifacts into an output directory and finishes by
// writing `manifest` there.

#include "nzk/config.hpp"
#include "nzk/datasets.hpp"
#include "nzk/directions.hpp"
#include "nzk/dynamics.hpp"
#include "nzk/io.hpp"
#include "nzk/kernels.hpp"
#include "nzk/models.hpp"
#include "nzk/stats.hpp"
#include "nzk/zo_core.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace nzk::cli {

namespace fs = std::filesystem;

struct Options {
  std::string config_path;  // empty: all defaults
  fs::path out_dir = "run";
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
};

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "seed",
      "data.source", "data.d", "data.n", "data.teacher", "data.noise", "data.seed", "data.images",
      "data.labels", "data.digits", "data.max_per_class", "data.side", "data.path",
      "model.kind", "model.widths", "model.activation", "model.alpha", "model.seed", "model.bias",
      "model.width",
      "linearize.epsilon", "linearize.m_u", "linearize.seed",
      "direction.family", "direction.mean", "direction.scale", "direction.dof",
      "zeta.family", "zeta.mean", "zeta.scale", "zeta.dof",
      "train.mode", "train.sample_mode", "train.eta", "train.eta_factor", "train.epsilon", "train.steps",
      "train.batch", "train.loss", "train.record_every", "train.seeds",
      "kernel.m", "kernel.sample_mode", "kernel.epsilon", "kernel.n_se", "kernel.min_samples",
      "dynamics.seeds", "dynamics.n_se", "dynamics.tolerance", "dynamics.min_seeds",
      "sweep.axis", "sweep.values", "sweep.seeds", "sweep.checkpoint", "sweep.checkpoint_every",
      "sweep.n_se", "sweep.baseline", "sweep.baseline_scale", "sweep.laplace_b", "sweep.student_dof",
      "sweep.gaussian_scale",
      "check.seed", "check.instances", "check.points", "check.chi2_samples",
  };
  return keys;
}

inline Config load_config(const Options& opt) {
  Config cfg = opt.config_path.empty() ? Config{} : Config::load(opt.config_path);
  for (const auto& k : cfg.unused())
    if (!known_keys().count(k)) throw ConfigError("unknown config key '" + k + "'");
  if (opt.seed) cfg.set("seed", std::to_string(*opt.seed));
  return cfg;
}

inline std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Builders

inline DirectionSpec direction_from(const Config& cfg, const std::string& prefix, std::size_t dim,
                                    std::optional<double> scale = std::nullopt) {
  const std::string fallback_prefix = "direction";
  auto key = [&](const std::string& k) {
    const std::string own = prefix + "." + k;
    return cfg.has(own) || prefix == fallback_prefix ? own : fallback_prefix + "." + k;
  };
  DirectionSpec s;
  s.family = parse_family(cfg.get_string(key("family"), "gaussian"));
  s.mean = cfg.get_double(key("mean"), 0.0);
  if (s.family == Family::student_t) {
    s.scale = 1.0;
    s.dof = cfg.get_double(key("dof"), 1000.0);
  } else {
    s.scale = scale ? *scale : cfg.get_doubles(key("scale"), "1").front();
  }
  s.dim = dim;
  s.validate();
  return s;
}

inline Dataset dataset_from(const Config& cfg, std::optional<std::size_t> d_override = std::nullopt) {
  const std::uint64_t seed = cfg.get_u64("seed", 0);
  const std::string source = cfg.get_string("data.source", "teacher");
  Dataset ds;
  if (source == "teacher") {
    const auto t = cfg.get_doubles("data.teacher", "7, 2");
    TeacherSpec teacher{Eigen::Map<const Vec>(t.data(), static_cast<Eigen::Index>(t.size())),
                        cfg.get_double("data.noise", 0.02)};
    const std::size_t d = d_override ? *d_override : cfg.get_size("data.d", 2);
    ds = gen_teacher_student(d, cfg.get_size("data.n", 8), teacher, cfg.get_u64("data.seed", seed));
  } else if (source == "mnist") {
    std::set<int> digits;
    for (auto v : cfg.get_sizes("data.digits", "0, 1")) digits.insert(static_cast<int>(v));
    ds = load_mnist_idx(cfg.require_string("data.images"), cfg.require_string("data.labels"), digits,
                        cfg.get_size("data.max_per_class", 100), cfg.get_size("data.side", 8));
  } else if (source == "csv") {
    ds = load_csv_dataset(cfg.require_string("data.path"));
  } else {
    throw ConfigError("unknown data.source '" + source + "'");
  }
  ds.validate();
  return ds;
}

inline AnyModel model_from(const Config& cfg, const Dataset& data) {
  const std::uint64_t seed = cfg.get_u64("model.seed", cfg.get_u64("seed", 0));
  const std::string kind = cfg.get_string("model.kind", "linear");
  const std::size_t d = data.dim();
  if (kind == "linear") return LinearModel::random(d, seed);
  if (kind == "two_layer") return TwoLayerLinear::random(d, cfg.get_size("model.width", 3), seed);

  auto widths = cfg.get_sizes("model.widths", std::to_string(d) + ", 10, 5, 1");
  if (widths.front() != d)
    throw ConfigError("model.widths must start with the input dimension " + std::to_string(d));
  const Activation act = parse_activation(cfg.get_string("model.activation", "relu"), cfg.get_double("model.alpha", 0.1));
  Mlp mlp = Mlp::random(widths, act, seed, cfg.get_bool("model.bias", true));
  if (kind == "mlp") return mlp;
  if (kind == "linearized") {
    const DirectionSpec u = DirectionSpec::gaussian(1.0, mlp.num_params());
    return linearize(mlp, mlp.params(), cfg.get_double("linearize.epsilon", 1e-3), cfg.get_size("linearize.m_u", 1000),
                     u, data.inputs, cfg.get_u64("linearize.seed", cfg.get_u64("seed", 0)));
  }
  throw ConfigError("unknown model.kind '" + kind + "'");
}

inline std::size_t param_count(const AnyModel& m) {
  return std::visit([](const auto& x) { return x.num_params(); }, m);
}

inline Vec outputs(const AnyModel& m, const Mat& X) {
  return std::visit([&](const auto& x) { return Vec(x.eval_batch(x.params(), X)); }, m);
}

/// Rows whose inner products give the constant kernel of a model that is
/// linear in its parameters.
inline Mat features(const AnyModel& m, const Mat& X) {
  if (std::holds_alternative<LinearModel>(m)) return X;
  if (const auto* lin = std::get_if<LinearizedModel>(&m)) return lin->tangents_for(X);
  throw UnsupportedError("closed-form kernels need a linear or linearized model");
}

inline TrainConfig train_config_from(const Config& cfg, TrainMode mode, std::size_t d,
                                     std::optional<double> scale = std::nullopt) {
  TrainConfig tc;
  tc.mode = mode;
  tc.epsilon = cfg.get_double("train.epsilon", 1e-3);
  tc.steps = cfg.get_size("train.steps", 1000);
  tc.batch = cfg.get_size("train.batch", 1);
  tc.loss.kind = parse_loss(cfg.get_string("train.loss", "squared"));
  tc.seed = cfg.get_u64("seed", 0);
  tc.record_every = cfg.get_size("train.record_every", 1);
  tc.direction_z = direction_from(cfg, "direction", d, scale);
  tc.direction_zeta = direction_from(cfg, "zeta", d, scale);
  // zo_kernel is defined with a shared vector; the key applies to zo_parametric.
  tc.sample_mode = mode == TrainMode::zo_kernel ? SampleMode::shared
                                                : parse_sample_mode(cfg.get_string("train.sample_mode", "independent"));
  return tc;
}

/// train.eta: a number, or `auto` for train.eta_factor / lambda_max over the
/// analytic normalised kernels of the given modes.
inline double resolve_eta(const Config& cfg, const AnyModel& model, const Dataset& data,
                          const std::vector<TrainMode>& modes, const DirectionSpec& spec) {
  const std::string v = cfg.get_string("train.eta", "1e-3");
  if (v != "auto") {
    double eta = 0.0;
    if (!detail::parse_double(v, eta) || !(eta > 0.0)) throw ConfigError("train.eta must be > 0 or 'auto'");
    return eta;
  }
  const Mat F = features(model, data.inputs);
  double lmax = 0.0;
  for (TrainMode m : modes) {
    const Mat k = expected_training_kernel(m, spec, F).values / static_cast<double>(data.size());
    lmax = std::max(lmax, spectral(0.5 * (k + k.transpose())).eigenvalues[0]);
  }
  if (!(lmax > 0.0)) throw ConfigError("train.eta = auto needs a kernel with a positive eigenvalue");
  return cfg.get_double("train.eta_factor", 0.5) / lmax;
}

inline std::vector<TrainMode> modes_from(const Config& cfg, const std::string& fallback) {
  std::vector<TrainMode> modes;
  for (const auto& s : cfg.get_list("train.mode", fallback)) modes.push_back(parse_train_mode(s));
  return modes;
}

// ---------------------------------------------------------------------------

class Run {
 public:
  Run(std::string command, const Options& opt, const Config& cfg)
      : opt_(opt), cfg_(cfg), start_(std::chrono::steady_clock::now()) {
    manifest.command = std::move(command);
    manifest.seed = cfg.get_u64("seed", 0);
    fs::create_directories(opt.out_dir);
  }

  fs::path file(const std::string& name) {
    manifest.artifacts.push_back(name);
    return opt_.out_dir / name;
  }

  RunManifest finish() {
    manifest.config = cfg_.resolved();
    manifest.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    manifest.write(opt_.out_dir / "manifest");
    return manifest;
  }

  RunManifest manifest;

 private:
  const Options& opt_;
  const Config& cfg_;
  std::chrono::steady_clock::time_point start_;
};

/// Three-way verdict for "a < b" from means and standard errors: pass when
/// b - a exceeds n_se pooled SE, fail when a - b does, inconclusive otherwise.
inline Verdict ordered_verdict(const std::string& name, double a, double se_a, double b, double se_b, double n_se) {
  const double se = std::hypot(se_a, se_b);
  const double gap = b - a;
  Verdict v{name, Status::inconclusive, se > 0.0 ? gap / se : (gap > 0.0 ? 1e300 : (gap < 0.0 ? -1e300 : 0.0)), n_se, ""};
  if (gap > 0.0 && gap >= n_se * se) v.status = Status::pass;
  if (gap < 0.0 && -gap >= n_se * se) v.status = Status::fail;
  v.note = "gap " + format_double(gap) + ", pooled SE " + format_double(se);
  return v;
}

// ---------------------------------------------------------------------------
// train

inline RunManifest cmd_train(const Options& opt) {
  const Config cfg = load_config(opt);
  Run run("train", opt, cfg);
  const Dataset data = dataset_from(cfg);
  const AnyModel model = model_from(cfg, data);
  const std::size_t d = param_count(model);
  const auto modes = modes_from(cfg, "fo");
  const auto scales = cfg.get_doubles("direction.scale", "1");
  const std::size_t seeds = cfg.get_size("train.seeds", 1);
  const double eta = resolve_eta(cfg, model, data, modes, direction_from(cfg, "direction", d, scales.front()));
  run.manifest.extra["eta"] = format_double(eta);

  for (TrainMode mode : modes) {
    const bool scaled = mode != TrainMode::fo && scales.size() > 1;
    for (double s : (mode == TrainMode::fo ? std::vector<double>{scales.front()} : scales)) {
      TrainConfig tc = train_config_from(cfg, mode, d, s);
      tc.eta = eta;
      const std::string label = std::string(to_string(mode)) + (scaled ? "_s" + fmt_g(s) : "");
      std::visit(
          [&](const auto& m) {
            if (seeds <= 1 || mode == TrainMode::fo) {
              write_trajectory_csv(run.file("trajectory_" + label + ".csv"), train(m, data, tc));
            } else {
              write_ensemble_csv(run.file("ensemble_" + label + ".csv"), train_ensemble(m, data, tc, seeds, opt.threads));
            }
          },
          model);
    }
  }
  return run.finish();
}

// ---------------------------------------------------------------------------
// kernel

inline RunManifest cmd_kernel(const Options& opt) {
  const Config cfg = load_config(opt);
  Run run("kernel", opt, cfg);
  const Dataset data = dataset_from(cfg);
  const AnyModel model = model_from(cfg, data);
  const std::size_t d = param_count(model);
  const DirectionSpec sz = direction_from(cfg, "direction", d);
  const DirectionSpec szeta = direction_from(cfg, "zeta", d);
  const SampleMode mode = parse_sample_mode(cfg.get_string("kernel.sample_mode", "independent"));
  const std::size_t m = cfg.get_size("kernel.m", 10000);
  const double eps = cfg.get_double("kernel.epsilon", 1e-3);
  const double n_se = cfg.get_double("kernel.n_se", 5.0);
  const std::size_t min_samples = cfg.get_size("kernel.min_samples", 30);
  const std::uint64_t seed = cfg.get_u64("seed", 0);

  const McKernel mc = std::visit(
      [&](const auto& mm) { return expected_nzk_mc(mm, mm.params(), eps, szeta, sz, mode, m, data.inputs, seed, opt.threads); },
      model);
  write_kernel(run.file("kernel_mc.csv"), mc.kernel);
  run.manifest.artifacts.push_back("kernel_mc.csv.meta");
  write_matrix_csv(run.file("kernel_se.csv"), mc.std_error);

  std::optional<KernelMatrix> reference;
  std::string why_none;
  try {
    const Mat F = features(model, data.inputs);
    KernelMatrix ntk;
    ntk.values = F * F.transpose();
    ntk.kind = std::holds_alternative<LinearModel>(model) ? KernelKind::ntk : KernelKind::nzk_linearized;
    write_kernel(run.file("ntk.csv"), ntk);
    run.manifest.artifacts.push_back("ntk.csv.meta");
    if (mode == SampleMode::shared) {
      if (sz.mean != 0.0) {
        why_none = "no closed form for shared directions with nonzero mean";
      } else {
        const double scale = kernel_scale(sz, d);
        run.manifest.extra["kernel_scale"] = format_double(scale);
        reference = KernelMatrix{scale * ntk.values, KernelKind::nzk_expected_closed, false,
                                 {{"kernel_scale", format_double(scale)}, {"sample_mode", "shared"}}};
      }
    } else if (std::holds_alternative<LinearModel>(model) && sz.family == Family::gaussian &&
               szeta.family == Family::gaussian) {
      reference = expected_nzk_closed(szeta, sz, data.inputs);
    } else {
      reference = expected_nzk_independent(szeta, sz, F);
    }
  } catch (const UnsupportedError& e) {
    why_none = e.what();
  }

  if (reference) {
    write_kernel(run.file("kernel_closed.csv"), *reference);
    run.manifest.artifacts.push_back("kernel_closed.csv.meta");
    const double z = mc.max_z(reference->values);
    Verdict v{"mc_vs_closed_form", z <= n_se ? Status::pass : Status::fail, z, n_se,
              "max |MC - closed| in standard errors"};
    if (m < min_samples) {
      v.status = Status::inconclusive;
      v.note = "M = " + std::to_string(m) + " below " + std::to_string(min_samples) + "; standard errors unreliable";
    }
    run.manifest.verdicts.push_back(v);
  } else {
    run.manifest.verdicts.push_back({"mc_vs_closed_form", Status::inconclusive, 0.0, n_se, why_none});
  }
  run.manifest.extra["raw_asymmetry"] = format_double(mc.raw_asymmetry);
  run.manifest.extra["min_eigen_over_trace"] = format_double(min_eigen_over_trace(mc.kernel.values));
  return run.finish();
}

// ---------------------------------------------------------------------------
// dynamics

inline RunManifest cmd_dynamics(const Options& opt) {
  const Config cfg = load_config(opt);
  Run run("dynamics", opt, cfg);
  const Dataset data = dataset_from(cfg);
  const AnyModel model = model_from(cfg, data);
  const std::size_t d = param_count(model);
  const auto modes = modes_from(cfg, "fo");
  if (modes.size() != 1) throw ConfigError("dynamics takes exactly one train.mode");
  const TrainMode mode = modes.front();
  TrainConfig tc = train_config_from(cfg, mode, d);
  if (tc.loss.kind != LossKind::squared) throw ConfigError("closed-form dynamics need squared loss");
  tc.eta = resolve_eta(cfg, model, data, modes, tc.direction_z);
  tc.record_every = cfg.get_size("train.record_every", mode == TrainMode::fo ? 1 : 100);
  run.manifest.extra["eta"] = format_double(tc.eta);

  const Mat F = features(model, data.inputs);
  KernelMatrix k = expected_training_kernel(mode, tc.direction_z, F);
  if (mode == TrainMode::zo_parametric && tc.sample_mode == SampleMode::shared)
    run.manifest.extra["note"] = "zo_parametric update does not use zeta; sample mode has no effect";
  const KernelMatrix kb = normalize_kernel(k);
  const Vec f0 = outputs(model, data.inputs);
  const ClosedFormTrajectory cf = closed_form_trajectory(kb.values, f0, data.targets, tc.eta, tc.steps, tc.record_every);
  if (cf.diverging) run.manifest.extra["warning"] = cf.warning;

  write_fvals_csv(run.file("closed_form_fvals.csv"), cf.record_steps, cf.fvals);
  write_spectrum_csv(run.file("spectrum.csv"), cf);
  write_dynamics_csv(run.file("dynamics.csv"), cf.record_steps,
                     modal_coefficients(spectral(kb.values), cf.fvals, data.targets));

  if (mode == TrainMode::fo) {
    const double tol = cfg.get_double("dynamics.tolerance", 1e-10);
    const Trajectory tr = std::visit([&](const auto& m) { return train(m, data, tc); }, model);
    write_trajectory_csv(run.file("trajectory_fo.csv"), tr);
    const Comparison c = compare(tr, cf);
    run.manifest.add_verdict("fo_vs_closed_form", c.max_abs_err <= tol, c.max_abs_err, tol, "max |f_t - closed form|");
  } else {
    const std::size_t seeds = cfg.get_size("dynamics.seeds", 200);
    const double n_se = cfg.get_double("dynamics.n_se", 3.0);
    const EnsembleResult e = std::visit([&](const auto& m) { return train_ensemble(m, data, tc, seeds, opt.threads); }, model);
    const std::string label = std::string(to_string(mode));
    write_ensemble_csv(run.file("ensemble_" + label + ".csv"), e);
    write_fvals_csv(run.file("ensemble_fvals_mean.csv"), e.record_steps, e.fvals_mean);
    write_fvals_csv(run.file("ensemble_fvals_se.csv"), e.record_steps, e.fvals_se);
    const EnsembleComparison c = compare_ensemble(e, cf);
    Verdict v{"ensemble_vs_closed_form", c.max_z <= n_se ? Status::pass : Status::fail, c.max_z, n_se,
              "max |seed mean - closed form| / SE, worst at step " + std::to_string(c.worst_step)};
    if (seeds < cfg.get_size("dynamics.min_seeds", 30)) {
      v.status = Status::inconclusive;
      v.note = std::to_string(seeds) + " seeds are too few for a standard-error test";
    }
    run.manifest.verdicts.push_back(v);
  }
  return run.finish();
}

// ---------------------------------------------------------------------------
// check

struct ChiSquareResult {
  double variance = 0.0;
  double std_error = 0.0;
};

/// Empirical variance of (z / sigma)^2 for Gaussian z, with the standard error
/// of the variance estimate from the sample fourth central moment.
inline ChiSquareResult chi_square_variance(std::size_t n, double sigma, std::uint64_t seed) {
  const DirectionSpec spec = DirectionSpec::gaussian(sigma, n);
  Engine rng = make_stream(seed, Purpose::check, 0, 1);
  const Vec z = sample(spec, rng);
  const Vec q = (z / sigma).array().square().matrix();
  const double mean = q.mean();
  const Vec c = (q.array() - mean).matrix();
  const double nn = static_cast<double>(n);
  const double var = c.squaredNorm() / (nn - 1.0);
  const double m4 = c.array().pow(4).sum() / nn;
  return {var, std::sqrt(std::max(0.0, m4 - var * var) / nn)};
}

inline RunManifest cmd_check(const Options& opt) {
  const Config cfg = load_config(opt);
  Run run("check", opt, cfg);
  const std::uint64_t seed = cfg.get_u64("check.seed", cfg.get_u64("seed", 0));
  const std::size_t instances = cfg.get_size("check.instances", 100);
  const std::size_t points = cfg.get_size("check.points", 100);
  const std::size_t chi_n = cfg.get_size("check.chi2_samples", 1000000);

  // Layer decomposition on random two-layer linear networks.
  double worst_rel = 0.0;
  for (std::size_t k = 0; k < instances; ++k) {
    Engine rng = make_stream(seed, Purpose::check, k, 2);
    std::uniform_int_distribution<std::size_t> dim(1, 6);
    const std::size_t n = dim(rng), w = dim(rng);
    const TwoLayerLinear net = TwoLayerLinear::random(n, w, splitmix64(seed + k));
    const Vec x = sample(DirectionSpec::gaussian(1.0, n), rng);
    const Vec z = sample(DirectionSpec::gaussian(1.0, net.num_params()), rng);
    const LayerDecomposition r = check_layer_decomposition(net, x, 1e-3, z);
    worst_rel = std::max(worst_rel, r.discrepancy / std::max(1.0, r.magnitude()));
  }
  run.manifest.add_verdict("layer_decomposition", worst_rel <= 1e-10, worst_rel, 1e-10,
                           "max relative discrepancy over " + std::to_string(instances) + " instances");

  // Zeroth-order homogeneity.
  const double eps = 1e-3;
  const std::vector<std::pair<std::string, Activation>> acts = {{"relu", Activation::relu()},
                                                                {"leaky_relu_0.1", Activation::leaky_relu(0.1)},
                                                                {"leaky_relu_0.5", Activation::leaky_relu(0.5)},
                                                                {"linear_2", Activation::linear(2.0)}};
  for (const auto& [name, act] : acts) {
    Engine rng = make_stream(seed, Purpose::check, 0, 3);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < points; ++i) {
      double x = 0.0;
      while (std::abs(x) <= eps) x = u(rng);
      ok += check_zo_homogeneous(act, x, eps);
    }
    run.manifest.add_verdict("homogeneous_" + name, ok == points, static_cast<double>(ok), static_cast<double>(points),
                             "points passing out of " + std::to_string(points));
  }
  const bool tanh_homogeneous = check_zo_homogeneous(Activation::tanh(), 2.0, eps);
  run.manifest.add_verdict("tanh_negative_control", !tanh_homogeneous, tanh_homogeneous ? 1.0 : 0.0, 0.0,
                           "tanh must fail the homogeneity check at x = 2");

  const double gap = trace_commutation_gap(500, 5, seed);
  run.manifest.add_verdict("trace_commutation", gap <= 1e-12, gap, 1e-12, "|mean Tr(M) - Tr(mean M)|, 500 5x5 matrices");

  const ChiSquareResult chi = chi_square_variance(chi_n, 1.5, seed);
  const double zc = std::abs(chi.variance - 2.0) / chi.std_error;
  run.manifest.add_verdict("chi_square_variance", zc <= 5.0, chi.variance, 2.0,
                           "within " + format_double(zc) + " SE of 2 (limit 5)");
  return run.finish();
}

// ---------------------------------------------------------------------------
// sweep

struct SweepCell {
  std::string label;
  double param = 0.0;
  double kernel_scale = 0.0;  // 0 when undefined
  EnsembleResult result;
};

inline void write_summary(const fs::path& path, const std::vector<SweepCell>& cells, std::size_t checkpoint) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << "cell,label,param,kernel_scale,checkpoint,checkpoint_loss_mean,checkpoint_loss_se,final_loss_mean,final_loss_se\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& r = cells[i].result;
    const auto c = static_cast<Eigen::Index>(checkpoint);
    const Eigen::Index f = r.loss_mean.size() - 1;
    out << i << ',' << cells[i].label << ',' << format_double(cells[i].param) << ','
        << format_double(cells[i].kernel_scale) << ',' << checkpoint << ',' << format_double(r.loss_mean[c]) << ','
        << format_double(r.loss_se[c]) << ',' << format_double(r.loss_mean[f]) << ',' << format_double(r.loss_se[f])
        << '\n';
  }
  if (!out) throw ConfigError("write failed for '" + path.string() + "'");
}

/// Verdicts that the checkpoint losses of consecutive cells are strictly
/// decreasing (`descending` = true) or increasing.
inline void ordering_verdicts(RunManifest& m, const std::vector<SweepCell>& cells, std::size_t checkpoint, double n_se,
                              bool descending, const std::string& prefix) {
  const auto c = static_cast<Eigen::Index>(checkpoint);
  for (std::size_t i = 0; i + 1 < cells.size(); ++i) {
    const auto& a = cells[i].result;
    const auto& b = cells[i + 1].result;
    const std::string name = prefix + cells[i + 1].label + (descending ? "_below_" : "_above_") + cells[i].label;
    m.verdicts.push_back(descending
                             ? ordered_verdict(name, b.loss_mean[c], b.loss_se[c], a.loss_mean[c], a.loss_se[c], n_se)
                             : ordered_verdict(name, a.loss_mean[c], a.loss_se[c], b.loss_mean[c], b.loss_se[c], n_se));
  }
}

inline RunManifest cmd_sweep(const Options& opt) {
  Config cfg = load_config(opt);
  Run run("sweep", opt, cfg);
  const std::string axis = cfg.get_string("sweep.axis", "sigma");
  const std::size_t seeds = cfg.get_size("sweep.seeds", 200);
  const std::size_t checkpoint = cfg.get_size("sweep.checkpoint", 2000);
  const double n_se = cfg.get_double("sweep.n_se", 3.0);
  if (!cfg.has("train.steps")) cfg.set("train.steps", std::to_string(checkpoint));
  const std::size_t steps = cfg.get_size("train.steps", checkpoint);
  if (checkpoint > steps) throw ConfigError("sweep.checkpoint exceeds train.steps");
  if (!cfg.has("train.record_every")) cfg.set("train.record_every", std::to_string(std::max<std::size_t>(1, steps)));

  std::vector<SweepCell> cells;
  auto run_cell = [&](const std::string& label, double param, double kscale, const AnyModel& model,
                      const Dataset& data, const TrainConfig& tc) {
    SweepCell cell{label, param, kscale, {}};
    cell.result = std::visit([&](const auto& m) { return train_ensemble(m, data, tc, seeds, opt.threads); }, model);
    write_ensemble_csv(run.file("ensemble_" + label + ".csv"), cell.result);
    cells.push_back(std::move(cell));
  };

  if (axis == "sigma") {
    const Dataset data = dataset_from(cfg);
    const AnyModel model = model_from(cfg, data);
    const std::size_t d = param_count(model);
    const auto values = cfg.get_doubles("sweep.values", "0.5, 1, 1.5");
    for (double s : values) {
      TrainConfig tc = train_config_from(cfg, TrainMode::zo_kernel, d, s);
      tc.eta = cfg.get_double("train.eta", 1e-3);
      run_cell("shared_s" + fmt_g(s), s, kernel_scale(tc.direction_z), model, data, tc);
    }
    std::vector<SweepCell> sorted = cells;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.kernel_scale < b.kernel_scale; });
    ordering_verdicts(run.manifest, sorted, checkpoint, n_se, true, "");
    if (cfg.get_bool("sweep.baseline", true)) {
      const double bs = cfg.get_double("sweep.baseline_scale", 1.0);
      TrainConfig tc = train_config_from(cfg, TrainMode::zo_parametric, d, bs);
      tc.sample_mode = SampleMode::independent;
      tc.eta = cfg.get_double("train.eta", 1e-3);
      run_cell("independent_s" + fmt_g(bs), bs, 0.0, model, data, tc);
      const auto shared = std::find_if(cells.begin(), cells.end(), [&](const auto& c) { return c.label == "shared_s" + fmt_g(bs); });
      if (shared != cells.end()) {
        const auto c = static_cast<Eigen::Index>(checkpoint);
        const auto& a = shared->result;
        const auto& b = cells.back().result;
        run.manifest.verdicts.push_back(ordered_verdict("shared_beats_independent", a.loss_mean[c], a.loss_se[c],
                                                        b.loss_mean[c], b.loss_se[c], n_se));
      }
    }
  } else if (axis == "d") {
    const auto values = cfg.get_sizes("sweep.values", "10, 30, 50");
    for (std::size_t d : values) {
      const Dataset data = dataset_from(cfg, d);
      const AnyModel model = model_from(cfg, data);
      TrainConfig tc = train_config_from(cfg, TrainMode::zo_kernel, param_count(model));
      tc.eta = cfg.get_double("train.eta", 1e-3);
      run_cell("d" + std::to_string(d), static_cast<double>(d), kernel_scale(tc.direction_z), model, data, tc);
    }
    ordering_verdicts(run.manifest, cells, checkpoint, n_se, true, "");
  } else if (axis == "distribution") {
    const Dataset data = dataset_from(cfg);
    const AnyModel model = model_from(cfg, data);
    const std::size_t d = param_count(model);
    const double eta = cfg.get_double("train.eta", 1e-3);
    TrainConfig tc = train_config_from(cfg, TrainMode::zo_kernel, d);
    tc.eta = eta;
    const DirectionSpec gauss = DirectionSpec::gaussian(cfg.get_double("sweep.gaussian_scale", 1.0), d);
    const double target = kernel_scale(gauss);
    run.manifest.extra["kernel_scale_target"] = format_double(target);

    tc.direction_z = tc.direction_zeta = gauss;
    run_cell("gaussian", gauss.scale, target, model, data, tc);
    const DirectionSpec lap = cfg.has("sweep.laplace_b") ? DirectionSpec::laplace(cfg.get_double("sweep.laplace_b", 0.0), d)
                                                         : match_scale(target, Family::laplace, d);
    tc.direction_z = tc.direction_zeta = lap;
    run_cell("laplace", lap.scale, kernel_scale(lap), model, data, tc);
    if (cfg.has("sweep.student_dof")) {
      const DirectionSpec st = DirectionSpec::student_t(cfg.get_double("sweep.student_dof", 1000.0), d);
      tc.direction_z = tc.direction_zeta = st;
      run_cell("student_t", *st.dof, kernel_scale(st), model, data, tc);
    }
    const std::size_t every = cfg.get_size("sweep.checkpoint_every", 100);
    const auto cps = recorded_steps(steps, every);
    for (std::size_t i = 1; i < cells.size(); ++i) {
      const double z = max_pooled_z(cells[0].result, cells[i].result, cps);
      run.manifest.add_verdict(cells[i].label + "_matches_gaussian", z <= n_se, z, n_se,
                               "max pooled z of seed-mean loss over " + std::to_string(cps.size()) + " checkpoints");
    }
  } else if (axis == "mode") {
    const Dataset data = dataset_from(cfg);
    const AnyModel model = model_from(cfg, data);
    const std::size_t d = param_count(model);
    const auto modes = modes_from(cfg, "zo_kernel, fo, zo_parametric");
    const double eta = resolve_eta(cfg, model, data, modes, direction_from(cfg, "direction", d));
    run.manifest.extra["eta"] = format_double(eta);
    for (TrainMode mode : modes) {
      TrainConfig tc = train_config_from(cfg, mode, d);
      tc.eta = eta;
      run_cell(std::string(to_string(mode)), 0.0, 0.0, model, data, tc);
    }
    ordering_verdicts(run.manifest, cells, checkpoint, n_se, false, "");
  } else {
    throw ConfigError("unknown sweep.axis '" + axis + "' (sigma, d, distribution, mode)");
  }

  write_summary(run.file("summary.csv"), cells, checkpoint);
  return run.finish();
}

// ---------------------------------------------------------------------------

inline RunManifest dispatch(const std::string& command, const Options& opt) {
  if (command == "train") return cmd_train(opt);
  if (command == "kernel") return cmd_kernel(opt);
  if (command == "dynamics") return cmd_dynamics(opt);
  if (command == "check") return cmd_check(opt);
  if (command == "sweep") return cmd_sweep(opt);
  throw ConfigError("unknown command '" + command + "'");
}

}  // namespace nzk::cli
