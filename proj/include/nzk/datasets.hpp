#pragma once

// Teacher-student sphere data, MNIST IDX ingestion, and CSV import/export.

#include "nzk/common.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace nzk {

struct Dataset {
  Mat inputs;   // N x d, one sample per row
  Vec targets;  // N
  std::map<std::string, std::string> meta;

  std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(inputs.cols()); }

  void validate() const {
    if (inputs.rows() == 0) throw ConfigError("dataset is empty");
    require_shape(targets.size() == inputs.rows(), "dataset: target count must equal row count");
    if (!inputs.allFinite() || !targets.allFinite()) throw ConfigError("dataset has non-finite entries");
  }
};

struct TeacherSpec {
  Vec theta_star;
  double noise_sigma = 0.0;  // standard deviation of the additive target noise
};

/// Inputs uniform on the unit sphere in R^d (normalised Gaussians); targets
/// <theta*, x> + delta. A teacher shorter than d is zero-padded.
inline Dataset gen_teacher_student(std::size_t d, std::size_t n, const TeacherSpec& teacher,
                                   std::uint64_t seed) {
  if (d < 2) throw ConfigError("teacher-student data needs d >= 2");
  if (n == 0) throw ConfigError("teacher-student data needs N >= 1");
  if (teacher.noise_sigma < 0.0) throw ConfigError("noise sigma must be >= 0");
  if (static_cast<std::size_t>(teacher.theta_star.size()) > d)
    throw ConfigError("teacher has more weights than the input dimension");
  Vec theta = Vec::Zero(static_cast<Eigen::Index>(d));
  theta.head(teacher.theta_star.size()) = teacher.theta_star;

  Dataset ds;
  ds.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  ds.targets.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    // One distribution per stream: normal_distribution caches its second draw.
    std::normal_distribution<double> normal(0.0, 1.0);
    Engine rng = make_stream(seed, Purpose::data, i);
    Vec x(static_cast<Eigen::Index>(d));
    double norm = 0.0;
    while (norm == 0.0) {
      for (Eigen::Index k = 0; k < x.size(); ++k) x[k] = normal(rng);
      norm = x.norm();
    }
    x /= norm;
    const auto r = static_cast<Eigen::Index>(i);
    ds.inputs.row(r) = x.transpose();
    double noise = 0.0;
    if (teacher.noise_sigma > 0.0) {
      Engine nrng = make_stream(seed, Purpose::data, i, 1);
      noise = teacher.noise_sigma * std::normal_distribution<double>(0.0, 1.0)(nrng);
    }
    ds.targets[r] = theta.dot(x) + noise;
  }
  ds.meta = {{"source", "teacher_student"},
             {"d", std::to_string(d)},
             {"N", std::to_string(n)},
             {"normalization", "unit_sphere"},
             {"noise_sigma", std::to_string(teacher.noise_sigma)},
             {"seed", std::to_string(seed)}};
  return ds;
}

// ---------------------------------------------------------------------------
// IDX

namespace detail {

inline std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t offset,
                               const std::string& what) {
  if (offset + 4 > b.size()) throw ParseError(what + ": truncated header", b.size());
  return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) |
         (std::uint32_t{b[offset + 2]} << 8) | std::uint32_t{b[offset + 3]};
}

/// Bilinear resize of a row-major square image using pixel-centre alignment.
inline std::vector<double> resize_bilinear(const double* src, std::size_t side, std::size_t target) {
  std::vector<double> out(target * target);
  const double ratio = static_cast<double>(side) / static_cast<double>(target);
  auto coord = [&](std::size_t i, std::size_t& lo, std::size_t& hi, double& w) {
    double s = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(side - 1));
    lo = static_cast<std::size_t>(std::floor(s));
    hi = std::min(lo + 1, side - 1);
    w = s - static_cast<double>(lo);
  };
  for (std::size_t r = 0; r < target; ++r) {
    std::size_t r0, r1;
    double wr;
    coord(r, r0, r1, wr);
    for (std::size_t c = 0; c < target; ++c) {
      std::size_t c0, c1;
      double wc;
      coord(c, c0, c1, wc);
      const double top = (1.0 - wc) * src[r0 * side + c0] + wc * src[r0 * side + c1];
      const double bottom = (1.0 - wc) * src[r1 * side + c0] + wc * src[r1 * side + c1];
      out[r * target + c] = (1.0 - wr) * top + wr * bottom;
    }
  }
  return out;
}

}  // namespace detail

/// Raw IDX content: images as 0..255 bytes, labels as digits.
struct IdxData {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<unsigned char> pixels;  // count * rows * cols
  std::vector<unsigned char> labels;
};

inline IdxData parse_idx(const std::vector<unsigned char>& images, const std::vector<unsigned char>& labels) {
  IdxData d;
  const std::uint32_t img_magic = detail::read_be32(images, 0, "images");
  if (img_magic != 0x00000803u) throw ParseError("images: bad IDX magic", 0);
  d.count = detail::read_be32(images, 4, "images");
  d.rows = detail::read_be32(images, 8, "images");
  d.cols = detail::read_be32(images, 12, "images");
  const std::size_t need = 16 + d.count * d.rows * d.cols;
  if (images.size() < need) throw ParseError("images: truncated pixel data", images.size());

  const std::uint32_t lab_magic = detail::read_be32(labels, 0, "labels");
  if (lab_magic != 0x00000801u) throw ParseError("labels: bad IDX magic", 0);
  const std::size_t nlab = detail::read_be32(labels, 4, "labels");
  if (nlab != d.count) throw ParseError("labels: count does not match image count", 4);
  if (labels.size() < 8 + nlab) throw ParseError("labels: truncated label data", labels.size());

  d.pixels.assign(images.begin() + 16, images.begin() + static_cast<std::ptrdiff_t>(need));
  d.labels.assign(labels.begin() + 8, labels.begin() + static_cast<std::ptrdiff_t>(8 + nlab));
  return d;
}

/// Resolve a data path: relative paths are looked up under $NZK_DATA_DIR when set.
inline std::filesystem::path resolve_data_path(const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative()) {
    if (const char* root = std::getenv("NZK_DATA_DIR"); root && *root) return std::filesystem::path(root) / path;
  }
  return path;
}

/// Filter to `digits`, keep at most `max_per_class` per digit in file order,
/// scale to [0,1], bilinearly resize to target_side^2 and flatten row-major.
/// With exactly two digits the smaller maps to -1 and the larger to +1;
/// otherwise the target is the digit value.
inline Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path,
                              const std::set<int>& digits, std::size_t max_per_class,
                              std::size_t target_side = 8) {
  if (digits.empty()) throw ConfigError("load_mnist_idx: no digits selected");
  if (target_side == 0) throw ConfigError("load_mnist_idx: target side must be positive");
  const IdxData raw = parse_idx(detail::read_bytes(resolve_data_path(images_path)),
                                detail::read_bytes(resolve_data_path(labels_path)));
  if (raw.rows != raw.cols) throw ParseError("images: only square images are supported", 8);

  std::map<int, std::size_t> taken;
  std::vector<std::size_t> chosen;
  for (std::size_t i = 0; i < raw.count; ++i) {
    const int label = raw.labels[i];
    if (!digits.count(label)) continue;
    if (taken[label] >= max_per_class) continue;
    ++taken[label];
    chosen.push_back(i);
  }
  if (chosen.empty()) throw ConfigError("load_mnist_idx: no images match the selected digits");

  const std::size_t side = raw.rows;
  const std::size_t dim = target_side * target_side;
  Dataset ds;
  ds.inputs.resize(static_cast<Eigen::Index>(chosen.size()), static_cast<Eigen::Index>(dim));
  ds.targets.resize(static_cast<Eigen::Index>(chosen.size()));
  std::vector<double> img(side * side);
  const bool binary = digits.size() == 2;
  for (std::size_t k = 0; k < chosen.size(); ++k) {
    const std::size_t i = chosen[k];
    for (std::size_t p = 0; p < side * side; ++p) img[p] = raw.pixels[i * side * side + p] / 255.0;
    const auto small = detail::resize_bilinear(img.data(), side, target_side);
    for (std::size_t p = 0; p < dim; ++p)
      ds.inputs(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p)) = small[p];
    const int label = raw.labels[i];
    ds.targets[static_cast<Eigen::Index>(k)] =
        binary ? (label == *digits.begin() ? -1.0 : 1.0) : static_cast<double>(label);
  }
  std::string dl;
  for (int d : digits) dl += (dl.empty() ? "" : " ") + std::to_string(d);
  ds.meta = {{"source", images_path},
             {"d", std::to_string(dim)},
             {"N", std::to_string(chosen.size())},
             {"normalization", "pixels/255, bilinear " + std::to_string(side) + "->" + std::to_string(target_side)},
             {"digits", dl},
             {"encoding", binary ? "pm1" : "digit"}};
  return ds;
}

// ---------------------------------------------------------------------------
// CSV

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline bool parse_double(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  const char* first = t.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), out);
  return ec == std::errc() && ptr == t.data() + t.size();
}

}  // namespace detail

/// CSV with header `x_0,...,x_{d-1},y`. Errors report 1-based line numbers.
inline Dataset load_csv_dataset(const std::string& path) {
  std::ifstream in(resolve_data_path(path));
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty file", 1);
  const auto header = detail::split_csv(line);
  if (header.size() < 2) throw ParseError("header needs at least one input column and y", 1);
  const std::size_t d = header.size() - 1;
  for (std::size_t k = 0; k < d; ++k)
    if (detail::trim(header[k]) != "x_" + std::to_string(k)) throw ParseError("unexpected header column '" + header[k] + "'", 1);
  if (detail::trim(header.back()) != "y") throw ParseError("last header column must be 'y'", 1);

  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != d + 1)
      throw ParseError("expected " + std::to_string(d + 1) + " columns, got " + std::to_string(cells.size()), lineno);
    std::vector<double> row(d + 1);
    for (std::size_t k = 0; k <= d; ++k)
      if (!detail::parse_double(cells[k], row[k]) || !std::isfinite(row[k]))
        throw ParseError("non-numeric cell '" + cells[k] + "'", lineno);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("no data rows", lineno);

  Dataset ds;
  ds.inputs.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  ds.targets.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t k = 0; k < d; ++k) ds.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    ds.targets[static_cast<Eigen::Index>(i)] = rows[i][d];
  }
  ds.meta = {{"source", path}, {"d", std::to_string(d)}, {"N", std::to_string(rows.size())}, {"normalization", "none"}};
  return ds;
}

inline void save_csv_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  for (std::size_t k = 0; k < ds.dim(); ++k) out << "x_" << k << ',';
  out << "y\n";
  for (Eigen::Index i = 0; i < ds.inputs.rows(); ++i) {
    for (Eigen::Index k = 0; k < ds.inputs.cols(); ++k) out << format_double(ds.inputs(i, k)) << ',';
    out << format_double(ds.targets[i]) << '\n';
  }
  if (!out) throw ConfigError("write failed for '" + path + "'");
}

}  // namespace nzk
