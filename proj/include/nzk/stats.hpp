#pragma once

#include "nzk/common.hpp"

#include <cmath>
#include <limits>

namespace nzk {

/// Streaming mean / unbiased variance (Welford), mergeable in a fixed order.
class RunningStats {
 public:
  void add(double x) {
    ++n_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
  }

  /// Chan et al. pairwise merge.
  void merge(const RunningStats& other) {
    if (other.n_ == 0) return;
    if (n_ == 0) {
      *this = other;
      return;
    }
    const double n = static_cast<double>(n_ + other.n_);
    const double delta = other.mean_ - mean_;
    mean_ += delta * static_cast<double>(other.n_) / n;
    m2_ += other.m2_ + delta * delta * static_cast<double>(n_) * static_cast<double>(other.n_) / n;
    n_ += other.n_;
  }

  std::size_t count() const noexcept { return n_; }
  double mean() const noexcept { return mean_; }
  double variance() const noexcept {
    return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : std::numeric_limits<double>::infinity();
  }
  double std_error() const noexcept { return std::sqrt(variance() / static_cast<double>(n_)); }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

/// Elementwise Welford over equally-shaped matrices.
class MatrixStats {
 public:
  MatrixStats() = default;
  MatrixStats(Eigen::Index rows, Eigen::Index cols)
      : mean_(Mat::Zero(rows, cols)), m2_(Mat::Zero(rows, cols)) {}

  void add(const Mat& x) {
    if (n_ == 0 && mean_.size() == 0) {
      mean_ = Mat::Zero(x.rows(), x.cols());
      m2_ = Mat::Zero(x.rows(), x.cols());
    }
    require_shape(x.rows() == mean_.rows() && x.cols() == mean_.cols(),
                  "MatrixStats::add: shape mismatch");
    ++n_;
    const Mat delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_.array() += delta.array() * (x - mean_).array();
  }

  void merge(const MatrixStats& other) {
    if (other.n_ == 0) return;
    if (n_ == 0) {
      *this = other;
      return;
    }
    require_shape(other.mean_.rows() == mean_.rows() && other.mean_.cols() == mean_.cols(),
                  "MatrixStats::merge: shape mismatch");
    const double n = static_cast<double>(n_ + other.n_);
    const Mat delta = other.mean_ - mean_;
    mean_ += delta * (static_cast<double>(other.n_) / n);
    m2_ += other.m2_ +
           (delta.array().square() * (static_cast<double>(n_) * static_cast<double>(other.n_) / n))
               .matrix();
    n_ += other.n_;
  }

  std::size_t count() const noexcept { return n_; }
  const Mat& mean() const noexcept { return mean_; }

  Mat variance() const {
    if (n_ < 2) return Mat::Constant(mean_.rows(), mean_.cols(), std::numeric_limits<double>::infinity());
    return m2_ / static_cast<double>(n_ - 1);
  }

  Mat std_error() const { return (variance() / static_cast<double>(n_)).array().sqrt().matrix(); }

 private:
  std::size_t n_ = 0;
  Mat mean_;
  Mat m2_;
};

}  // namespace nzk
