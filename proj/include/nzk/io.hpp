#pragma once

// CSV artifacts and the run manifest.

#include "nzk/datasets.hpp"
#include "nzk/dynamics.hpp"
#include "nzk/kernels.hpp"
#include "nzk/zo_core.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace nzk {

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  return out;
}

inline void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw ConfigError("write failed for '" + path.string() + "'");
}

}  // namespace detail

/// step,loss[,f_0..f_{N-1}] with one row per step; f cells are filled on
/// recorded steps and left empty elsewhere.
inline void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& tr, bool with_f = true) {
  auto out = detail::open_out(path);
  const Eigen::Index n = with_f ? tr.fvals.cols() : 0;
  out << "step,loss";
  for (Eigen::Index j = 0; j < n; ++j) out << ",f_" << j;
  out << '\n';
  std::size_t next = 0;
  for (std::size_t t = 0; t < tr.losses.size(); ++t) {
    out << t << ',' << format_double(tr.losses[t]);
    const bool rec = next < tr.record_steps.size() && tr.record_steps[next] == t;
    for (Eigen::Index j = 0; j < n; ++j) {
      out << ',';
      if (rec) out << format_double(tr.fvals(static_cast<Eigen::Index>(next), j));
    }
    if (rec) ++next;
    out << '\n';
  }
  detail::finish(out, path);
}

/// step,loss_mean,loss_se
inline void write_ensemble_csv(const std::filesystem::path& path, const EnsembleResult& e) {
  auto out = detail::open_out(path);
  out << "step,loss_mean,loss_se\n";
  for (Eigen::Index t = 0; t < e.loss_mean.size(); ++t)
    out << t << ',' << format_double(e.loss_mean[t]) << ',' << format_double(e.loss_se[t]) << '\n';
  detail::finish(out, path);
}

/// step,f_0..f_{N-1} for recorded steps only.
inline void write_fvals_csv(const std::filesystem::path& path, const std::vector<std::size_t>& steps, const Mat& f) {
  auto out = detail::open_out(path);
  out << "step";
  for (Eigen::Index j = 0; j < f.cols(); ++j) out << ",f_" << j;
  out << '\n';
  for (Eigen::Index r = 0; r < f.rows(); ++r) {
    out << steps[static_cast<std::size_t>(r)];
    for (Eigen::Index j = 0; j < f.cols(); ++j) out << ',' << format_double(f(r, j));
    out << '\n';
  }
  detail::finish(out, path);
}

/// Bare matrix, no header, 17 significant digits.
inline void write_matrix_csv(const std::filesystem::path& path, const Mat& m) {
  auto out = detail::open_out(path);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
    out << '\n';
  }
  detail::finish(out, path);
}

inline void write_key_values(const std::filesystem::path& path, const std::map<std::string, std::string>& kv) {
  auto out = detail::open_out(path);
  for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
  detail::finish(out, path);
}

/// Kernel values plus a `<name>.meta` companion.
inline void write_kernel(const std::filesystem::path& path, const KernelMatrix& k) {
  write_matrix_csv(path, k.values);
  auto meta = k.meta;
  meta["kind"] = std::string(to_string(k.kind));
  meta["normalized"] = k.normalized ? "true" : "false";
  meta["N"] = std::to_string(k.values.rows());
  write_key_values(path.string() + ".meta", meta);
}

/// step,mode_index,residual_coeff
inline void write_dynamics_csv(const std::filesystem::path& path, const std::vector<std::size_t>& steps,
                               const Mat& coeffs) {
  auto out = detail::open_out(path);
  out << "step,mode_index,residual_coeff\n";
  for (Eigen::Index r = 0; r < coeffs.rows(); ++r)
    for (Eigen::Index i = 0; i < coeffs.cols(); ++i)
      out << steps[static_cast<std::size_t>(r)] << ',' << i << ',' << format_double(coeffs(r, i)) << '\n';
  detail::finish(out, path);
}

/// mode_index,eigenvalue,decay_factor
inline void write_spectrum_csv(const std::filesystem::path& path, const ClosedFormTrajectory& cf) {
  auto out = detail::open_out(path);
  out << "mode_index,eigenvalue,decay_factor\n";
  for (Eigen::Index i = 0; i < cf.eigenvalues.size(); ++i)
    out << i << ',' << format_double(cf.eigenvalues[i]) << ',' << format_double(cf.decay_factors[i]) << '\n';
  detail::finish(out, path);
}

// ---------------------------------------------------------------------------

enum class Status { pass, fail, inconclusive };

inline std::string_view to_string(Status s) {
  switch (s) {
    case Status::pass: return "pass";
    case Status::fail: return "fail";
    case Status::inconclusive: return "inconclusive";
  }
  return "?";
}

struct Verdict {
  std::string name;
  Status status = Status::pass;
  double measured = 0.0;
  double tolerance = 0.0;
  std::string note;
};

/// Record of one CLI run. Written last: its presence means the run finished.
struct RunManifest {
  std::string command;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> config;
  std::vector<std::string> artifacts;  // file names relative to the run directory
  double wall_clock_s = 0.0;
  std::vector<Verdict> verdicts;
  std::map<std::string, std::string> extra;

  bool ok() const {
    for (const auto& v : verdicts)
      if (v.status == Status::fail) return false;
    return true;
  }

  void add_verdict(std::string name, bool passed, double measured, double tolerance, std::string note = {}) {
    verdicts.push_back({std::move(name), passed ? Status::pass : Status::fail, measured, tolerance, std::move(note)});
  }

  void write(const std::filesystem::path& path) const {
    auto out = detail::open_out(path);
    out << "command = " << command << '\n';
    out << "seed = " << seed << '\n';
    out << "wall_clock_s = " << format_double(wall_clock_s) << '\n';
    out << "status = " << (ok() ? "ok" : "failed") << '\n';
    for (const auto& [k, v] : config) out << "config." << k << " = " << v << '\n';
    for (std::size_t i = 0; i < artifacts.size(); ++i) out << "artifact." << i << " = " << artifacts[i] << '\n';
    for (const auto& [k, v] : extra) out << "info." << k << " = " << v << '\n';
    for (const auto& v : verdicts) {
      out << "verdict." << v.name << " = " << to_string(v.status) << '\n';
      out << "verdict." << v.name << ".measured = " << format_double(v.measured) << '\n';
      out << "verdict." << v.name << ".tolerance = " << format_double(v.tolerance) << '\n';
      if (!v.note.empty()) out << "verdict." << v.name << ".note = " << v.note << '\n';
    }
    detail::finish(out, path);
  }
};

}  // namespace nzk
