#pragma once

// Scalar-valued models, finite-difference tangent estimates, and the
// structural checks (layer decomposition, zeroth-order homogeneity).
//
// A model is an architecture plus a reference parameter vector. Evaluation
// always takes the parameter vector explicitly so estimators can probe
// theta +/- eps * z without copying the model.

#include "nzk/common.hpp"
#include "nzk/directions.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace nzk {

template <class M>
concept ScalarModel = requires(const M& m, const Vec& theta, const Vec& x, const Mat& X) {
  { m.num_params() } -> std::convertible_to<std::size_t>;
  { m.input_dim() } -> std::convertible_to<std::size_t>;
  { m.params() } -> std::convertible_to<const Vec&>;
  { m.eval(theta, x) } -> std::convertible_to<double>;
  { m.eval_batch(theta, X) } -> std::convertible_to<Vec>;
  { m.param_gradient(theta, x) } -> std::convertible_to<Vec>;
};

namespace detail {

inline void check_theta(const Vec& theta, std::size_t d, const char* who) {
  if (static_cast<std::size_t>(theta.size()) != d)
    throw ShapeError(std::string(who) + ": expected " + std::to_string(d) + " parameters, got " +
                     std::to_string(theta.size()));
}

inline void check_input(Eigen::Index got, std::size_t want, const char* who) {
  if (static_cast<std::size_t>(got) != want)
    throw ShapeError(std::string(who) + ": expected input dimension " + std::to_string(want) +
                     ", got " + std::to_string(got));
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace detail

/// i.i.d. standard normal vector, used for all weight initialisation.
inline Vec standard_normal(std::size_t n, std::uint64_t seed) {
  Engine rng = make_stream(seed, Purpose::init);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  return v;
}

// ---------------------------------------------------------------------------

/// f(x; theta) = <theta, x>.
class LinearModel {
 public:
  explicit LinearModel(Vec theta) : theta_(std::move(theta)) {
    if (!theta_.allFinite()) throw ConfigError("LinearModel: non-finite weights");
  }
  static LinearModel random(std::size_t d, std::uint64_t seed) {
    return LinearModel(standard_normal(d, seed));
  }

  std::size_t num_params() const { return static_cast<std::size_t>(theta_.size()); }
  std::size_t input_dim() const { return num_params(); }
  const Vec& params() const { return theta_; }

  double eval(const Vec& theta, const Vec& x) const {
    detail::check_theta(theta, num_params(), "LinearModel");
    detail::check_input(x.size(), input_dim(), "LinearModel");
    return theta.dot(x);
  }
  Vec eval_batch(const Vec& theta, const Mat& X) const {
    detail::check_theta(theta, num_params(), "LinearModel");
    detail::check_input(X.cols(), input_dim(), "LinearModel");
    return X * theta;
  }
  Vec param_gradient(const Vec& theta, const Vec& x) const {
    detail::check_theta(theta, num_params(), "LinearModel");
    detail::check_input(x.size(), input_dim(), "LinearModel");
    return x;
  }

 private:
  Vec theta_;
};

// ---------------------------------------------------------------------------

/// f(x; theta) = <W1 * w2, x> with W1 of shape n x width and w2 of length
/// width. Flattened parameters: W1 row-major, then w2 (d = width * (n + 1)).
class TwoLayerLinear {
 public:
  TwoLayerLinear(std::size_t n, std::size_t width, Vec theta)
      : n_(n), width_(width), theta_(std::move(theta)) {
    if (n_ == 0 || width_ == 0) throw ConfigError("TwoLayerLinear: empty layer");
    detail::check_theta(theta_, num_params(), "TwoLayerLinear");
  }
  TwoLayerLinear(const Mat& w1, const Vec& w2)
      : TwoLayerLinear(static_cast<std::size_t>(w1.rows()), static_cast<std::size_t>(w1.cols()),
                       flatten(w1, w2)) {
    require_shape(w2.size() == w1.cols(), "TwoLayerLinear: w2 length must equal width");
  }
  static TwoLayerLinear random(std::size_t n, std::size_t width, std::uint64_t seed) {
    return TwoLayerLinear(n, width, standard_normal(width * (n + 1), seed));
  }

  static Vec flatten(const Mat& w1, const Vec& w2) {
    Vec theta(w1.size() + w2.size());
    Eigen::Map<detail::RowMajor>(theta.data(), w1.rows(), w1.cols()) = w1;
    theta.tail(w2.size()) = w2;
    return theta;
  }

  std::size_t num_params() const { return width_ * (n_ + 1); }
  std::size_t input_dim() const { return n_; }
  std::size_t width() const { return width_; }
  /// Number of entries belonging to the first layer.
  std::size_t first_layer_size() const { return n_ * width_; }
  const Vec& params() const { return theta_; }

  double eval(const Vec& theta, const Vec& x) const {
    detail::check_theta(theta, num_params(), "TwoLayerLinear");
    detail::check_input(x.size(), input_dim(), "TwoLayerLinear");
    return x.dot(w1(theta) * w2(theta));
  }
  Vec eval_batch(const Vec& theta, const Mat& X) const {
    detail::check_theta(theta, num_params(), "TwoLayerLinear");
    detail::check_input(X.cols(), input_dim(), "TwoLayerLinear");
    const Vec v = w1(theta) * w2(theta);
    return X * v;
  }
  Vec param_gradient(const Vec& theta, const Vec& x) const {
    detail::check_theta(theta, num_params(), "TwoLayerLinear");
    detail::check_input(x.size(), input_dim(), "TwoLayerLinear");
    Vec g(theta.size());
    // d/dW1[a][b] = x_a * w2_b ; d/dw2_b = (W1^T x)_b
    Eigen::Map<detail::RowMajor>(g.data(), static_cast<Eigen::Index>(n_),
                                 static_cast<Eigen::Index>(width_)) = x * w2(theta).transpose();
    g.tail(static_cast<Eigen::Index>(width_)) = w1(theta).transpose() * x;
    return g;
  }

 private:
  Eigen::Map<const detail::RowMajor> w1(const Vec& theta) const {
    return {theta.data(), static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(width_)};
  }
  Eigen::Map<const Vec> w2(const Vec& theta) const {
    return {theta.data() + first_layer_size(), static_cast<Eigen::Index>(width_)};
  }

  std::size_t n_;
  std::size_t width_;
  Vec theta_;
};

// ---------------------------------------------------------------------------

struct Activation {
  enum class Kind { relu, leaky_relu, linear, tanh };
  Kind kind = Kind::relu;
  double param = 0.0;  // alpha for leaky_relu, slope k for linear

  static Activation relu() { return {Kind::relu, 0.0}; }
  static Activation leaky_relu(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("leaky_relu alpha must lie in (0, 1)");
    return {Kind::leaky_relu, alpha};
  }
  static Activation linear(double k = 1.0) { return {Kind::linear, k}; }
  static Activation tanh() { return {Kind::tanh, 0.0}; }

  double operator()(double x) const {
    switch (kind) {
      case Kind::relu: return x > 0.0 ? x : 0.0;
      case Kind::leaky_relu: return x > 0.0 ? x : param * x;
      case Kind::linear: return param * x;
      case Kind::tanh: return std::tanh(x);
    }
    return x;
  }

  double derivative(double x) const {
    switch (kind) {
      case Kind::relu: return x > 0.0 ? 1.0 : 0.0;
      case Kind::leaky_relu: return x > 0.0 ? 1.0 : param;
      case Kind::linear: return param;
      case Kind::tanh: {
        const double t = std::tanh(x);
        return 1.0 - t * t;
      }
    }
    return 1.0;
  }

  std::string name() const {
    switch (kind) {
      case Kind::relu: return "relu";
      case Kind::leaky_relu: return "leaky_relu";
      case Kind::linear: return "linear";
      case Kind::tanh: return "tanh";
    }
    return "?";
  }
};

inline Activation parse_activation(std::string_view name, double param) {
  if (name == "relu") return Activation::relu();
  if (name == "leaky_relu") return Activation::leaky_relu(param);
  if (name == "linear") return Activation::linear(param == 0.0 ? 1.0 : param);
  if (name == "tanh") return Activation::tanh();
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

/// Fully connected network with scalar output.
///
/// widths = {input, hidden..., 1}. The activation follows every hidden layer;
/// the output layer is affine. Flattened parameters are layer-major: for each
/// layer the (out x in) weight matrix row-major, then its bias (if enabled).
class Mlp {
 public:
  Mlp(std::vector<std::size_t> widths, Activation act, Vec theta, bool bias = true)
      : widths_(std::move(widths)), act_(act), bias_(bias), theta_(std::move(theta)) {
    if (widths_.size() < 2) throw ConfigError("Mlp needs at least input and output widths");
    if (widths_.back() != 1) throw ConfigError("Mlp output width must be 1");
    for (auto w : widths_)
      if (w == 0) throw ConfigError("Mlp layer width must be positive");
    offsets_.push_back(0);
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l)
      offsets_.push_back(offsets_.back() + widths_[l + 1] * widths_[l] + (bias_ ? widths_[l + 1] : 0));
    detail::check_theta(theta_, num_params(), "Mlp");
  }

  static std::size_t count_params(const std::vector<std::size_t>& widths, bool bias = true) {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l)
      n += widths[l + 1] * widths[l] + (bias ? widths[l + 1] : 0);
    return n;
  }

  static Mlp random(std::vector<std::size_t> widths, Activation act, std::uint64_t seed,
                    bool bias = true) {
    const std::size_t d = count_params(widths, bias);
    return Mlp(std::move(widths), act, standard_normal(d, seed), bias);
  }

  std::size_t num_params() const { return offsets_.back(); }
  std::size_t input_dim() const { return widths_.front(); }
  std::size_t num_layers() const { return widths_.size() - 1; }
  const std::vector<std::size_t>& widths() const { return widths_; }
  const Activation& activation() const { return act_; }
  bool has_bias() const { return bias_; }
  const Vec& params() const { return theta_; }
  /// Offset of layer `l` in the flattened parameter vector.
  std::size_t layer_offset(std::size_t l) const { return offsets_.at(l); }

  /// Weight matrix and bias of layer l, viewed inside a flat parameter vector.
  Eigen::Map<const detail::RowMajor> weights(const Vec& theta, std::size_t l) const {
    return {theta.data() + offsets_[l], rows(l), cols(l)};
  }
  Eigen::Map<const Vec> bias(const Vec& theta, std::size_t l) const {
    return {theta.data() + offsets_[l] + rows(l) * cols(l), bias_ ? rows(l) : 0};
  }

  /// Split a flat vector into per-layer (weights, bias) copies.
  std::vector<std::pair<Mat, Vec>> unflatten(const Vec& theta) const {
    detail::check_theta(theta, num_params(), "Mlp::unflatten");
    std::vector<std::pair<Mat, Vec>> layers;
    for (std::size_t l = 0; l < num_layers(); ++l) layers.emplace_back(weights(theta, l), bias(theta, l));
    return layers;
  }

  Vec flatten(const std::vector<std::pair<Mat, Vec>>& layers) const {
    require_shape(layers.size() == num_layers(), "Mlp::flatten: wrong layer count");
    Vec theta(static_cast<Eigen::Index>(num_params()));
    for (std::size_t l = 0; l < num_layers(); ++l) {
      const auto& [w, b] = layers[l];
      require_shape(w.rows() == rows(l) && w.cols() == cols(l) && b.size() == (bias_ ? rows(l) : 0),
                    "Mlp::flatten: layer shape mismatch");
      Eigen::Map<detail::RowMajor>(theta.data() + offsets_[l], rows(l), cols(l)) = w;
      if (bias_) theta.segment(static_cast<Eigen::Index>(offsets_[l]) + rows(l) * cols(l), rows(l)) = b;
    }
    return theta;
  }

  double eval(const Vec& theta, const Vec& x) const {
    detail::check_theta(theta, num_params(), "Mlp");
    detail::check_input(x.size(), input_dim(), "Mlp");
    Vec h = x;
    for (std::size_t l = 0; l < num_layers(); ++l) {
      Vec a = weights(theta, l) * h;
      if (bias_) a += bias(theta, l);
      if (l + 1 < num_layers()) a = a.unaryExpr([this](double v) { return act_(v); });
      h = std::move(a);
    }
    return h[0];
  }

  Vec eval_batch(const Vec& theta, const Mat& X) const {
    detail::check_theta(theta, num_params(), "Mlp");
    detail::check_input(X.cols(), input_dim(), "Mlp");
    Mat h = X;
    for (std::size_t l = 0; l < num_layers(); ++l) {
      Mat a = h * weights(theta, l).transpose();
      if (bias_) a.rowwise() += bias(theta, l).transpose();
      if (l + 1 < num_layers()) a = a.unaryExpr([this](double v) { return act_(v); });
      h = std::move(a);
    }
    return h.col(0);
  }

  /// Exact reverse-mode gradient of the scalar output w.r.t. all parameters.
  Vec param_gradient(const Vec& theta, const Vec& x) const {
    detail::check_theta(theta, num_params(), "Mlp");
    detail::check_input(x.size(), input_dim(), "Mlp");
    std::vector<Vec> inputs;  // input to each layer
    std::vector<Vec> pre;     // pre-activation of each layer
    Vec h = x;
    for (std::size_t l = 0; l < num_layers(); ++l) {
      inputs.push_back(h);
      Vec a = weights(theta, l) * h;
      if (bias_) a += bias(theta, l);
      pre.push_back(a);
      h = l + 1 < num_layers() ? a.unaryExpr([this](double v) { return act_(v); }).eval() : a;
    }
    Vec grad = Vec::Zero(static_cast<Eigen::Index>(num_params()));
    Vec delta = Vec::Ones(1);
    for (std::size_t l = num_layers(); l-- > 0;) {
      Eigen::Map<detail::RowMajor>(grad.data() + offsets_[l], rows(l), cols(l)) =
          delta * inputs[l].transpose();
      if (bias_) grad.segment(static_cast<Eigen::Index>(offsets_[l]) + rows(l) * cols(l), rows(l)) = delta;
      if (l == 0) break;
      Vec back = weights(theta, l).transpose() * delta;
      delta = back.cwiseProduct(pre[l - 1].unaryExpr([this](double v) { return act_.derivative(v); }));
    }
    return grad;
  }

 private:
  Eigen::Index rows(std::size_t l) const { return static_cast<Eigen::Index>(widths_[l + 1]); }
  Eigen::Index cols(std::size_t l) const { return static_cast<Eigen::Index>(widths_[l]); }

  std::vector<std::size_t> widths_;
  Activation act_;
  bool bias_;
  Vec theta_;
  std::vector<std::size_t> offsets_;
};

// ---------------------------------------------------------------------------

struct Perturbation {
  double epsilon = 1e-3;
  Vec direction;
};

/// Two-point estimate of how f changes along a direction:
/// factor = (f(theta + eps d) - f(theta - eps d)) / (2 eps), vector = factor * d.
struct TangentEstimate {
  double factor = 0.0;
  Vec vector;
};

template <ScalarModel M>
double fd_factor(const M& model, const Vec& theta, double epsilon, const Vec& direction, const Vec& x) {
  if (!(epsilon > 0.0)) throw ConfigError("finite-difference epsilon must be > 0");
  require_shape(static_cast<std::size_t>(direction.size()) == model.num_params(),
                "fd_factor: direction dimension must equal parameter count");
  const Vec plus = theta + epsilon * direction;
  const Vec minus = theta - epsilon * direction;
  return (model.eval(plus, x) - model.eval(minus, x)) / (2.0 * epsilon);
}

/// Batched fd_factor over the rows of X: two forward passes per row.
template <ScalarModel M>
Vec fd_factors(const M& model, const Vec& theta, double epsilon, const Vec& direction, const Mat& X) {
  if (!(epsilon > 0.0)) throw ConfigError("finite-difference epsilon must be > 0");
  require_shape(static_cast<std::size_t>(direction.size()) == model.num_params(),
                "fd_factors: direction dimension must equal parameter count");
  const Vec plus = theta + epsilon * direction;
  const Vec minus = theta - epsilon * direction;
  return (model.eval_batch(plus, X) - model.eval_batch(minus, X)) / (2.0 * epsilon);
}

template <ScalarModel M>
TangentEstimate zo_tangent(const M& model, const Vec& theta, const Perturbation& p, const Vec& x) {
  TangentEstimate t;
  t.factor = fd_factor(model, theta, p.epsilon, p.direction, x);
  t.vector = t.factor * p.direction;
  return t;
}

template <ScalarModel M>
double eval(const M& model, const Vec& x) {
  return model.eval(model.params(), x);
}

// ---------------------------------------------------------------------------

/// First-order Taylor surrogate of an Mlp around theta0 whose tangent feature
/// g(x) is a Monte Carlo two-point estimate, cached for a fixed input set:
///   f_lin(x; theta) = f(x; theta0) + <g(x), theta - theta0>.
class LinearizedModel {
 public:
  LinearizedModel(Mlp base, Vec theta0, double epsilon, std::size_t m_u, Mat inputs, Mat tangents,
                  Vec f0)
      : base_(std::move(base)),
        theta0_(std::move(theta0)),
        epsilon_(epsilon),
        m_u_(m_u),
        inputs_(std::move(inputs)),
        tangents_(std::move(tangents)),
        f0_(std::move(f0)) {
    detail::check_theta(theta0_, base_.num_params(), "LinearizedModel");
    require_shape(tangents_.rows() == inputs_.rows() && f0_.size() == inputs_.rows() &&
                      static_cast<std::size_t>(tangents_.cols()) == base_.num_params(),
                  "LinearizedModel: cache shape mismatch");
  }

  std::size_t num_params() const { return base_.num_params(); }
  std::size_t input_dim() const { return base_.input_dim(); }
  const Vec& params() const { return theta0_; }
  const Mlp& base() const { return base_; }
  double epsilon() const { return epsilon_; }
  std::size_t m_u() const { return m_u_; }
  const Mat& inputs() const { return inputs_; }
  /// Row i holds the cached tangent feature of inputs().row(i).
  const Mat& tangents() const { return tangents_; }
  const Vec& initial_outputs() const { return f0_; }

  std::optional<Eigen::Index> find(const Vec& x) const {
    if (static_cast<std::size_t>(x.size()) != input_dim()) return std::nullopt;
    for (Eigen::Index i = 0; i < inputs_.rows(); ++i)
      if (inputs_.row(i).transpose() == x) return i;
    return std::nullopt;
  }

  Eigen::Index index_of(const Vec& x) const {
    detail::check_input(x.size(), input_dim(), "LinearizedModel");
    auto i = find(x);
    if (!i) throw PreconditionError("LinearizedModel: input has no cached tangent");
    return *i;
  }

  Vec tangent(const Vec& x) const { return tangents_.row(index_of(x)).transpose(); }

  double eval(const Vec& theta, const Vec& x) const {
    detail::check_theta(theta, num_params(), "LinearizedModel");
    const Eigen::Index i = index_of(x);
    return f0_[i] + tangents_.row(i).dot(theta - theta0_);
  }

  Vec eval_batch(const Vec& theta, const Mat& X) const {
    detail::check_theta(theta, num_params(), "LinearizedModel");
    if (is_cached_set(X)) return f0_ + tangents_ * (theta - theta0_);
    Vec out(X.rows());
    const Vec delta = theta - theta0_;
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
      const Eigen::Index i = index_of(X.row(r).transpose());
      out[r] = f0_[i] + tangents_.row(i).dot(delta);
    }
    return out;
  }

  Vec param_gradient(const Vec& theta, const Vec& x) const {
    detail::check_theta(theta, num_params(), "LinearizedModel");
    return tangent(x);
  }

  /// Gather cached tangents for the rows of X (throws for unknown rows).
  Mat tangents_for(const Mat& X) const {
    if (is_cached_set(X)) return tangents_;
    Mat G(X.rows(), tangents_.cols());
    for (Eigen::Index r = 0; r < X.rows(); ++r) G.row(r) = tangents_.row(index_of(X.row(r).transpose()));
    return G;
  }

 private:
  bool is_cached_set(const Mat& X) const {
    if (X.rows() != inputs_.rows() || X.cols() != inputs_.cols()) return false;
    return X.data() == inputs_.data() || X == inputs_;
  }

  Mlp base_;
  Vec theta0_;
  double epsilon_;
  std::size_t m_u_;
  Mat inputs_;
  Mat tangents_;
  Vec f0_;
};

/// Build a linearized model from an explicit list of u directions.
inline LinearizedModel linearize_with(const Mlp& base, const Vec& theta0, double epsilon,
                                      const std::vector<Vec>& directions, const Mat& X) {
  if (directions.empty()) throw ConfigError("linearize: m_u must be >= 1");
  Mat G = Mat::Zero(X.rows(), static_cast<Eigen::Index>(base.num_params()));
  for (const Vec& u : directions) {
    const Vec c = fd_factors(base, theta0, epsilon, u, X);
    G.noalias() += c * u.transpose();
  }
  G /= static_cast<double>(directions.size());
  return LinearizedModel(base, theta0, epsilon, directions.size(), X, std::move(G),
                         base.eval_batch(theta0, X));
}

/// Build a linearized model with m_u random directions drawn from `spec`,
/// which must have zero mean and unit variance.
inline LinearizedModel linearize(const Mlp& base, const Vec& theta0, double epsilon, std::size_t m_u,
                                 const DirectionSpec& spec, const Mat& X, std::uint64_t seed) {
  if (m_u == 0) throw ConfigError("linearize: m_u must be >= 1");
  const Moments m = exact_moments(spec);
  if (m.m1 != 0.0 || std::abs(m.m2 - 1.0) > 1e-12)
    throw PreconditionError("linearize: directions must have zero mean and unit variance");
  const DirectionSpec u_spec = spec.with_dim(base.num_params());
  Mat G = Mat::Zero(X.rows(), static_cast<Eigen::Index>(base.num_params()));
  for (std::size_t k = 0; k < m_u; ++k) {
    Engine rng = make_stream(seed, Purpose::linearize, k);
    const Vec u = sample(u_spec, rng);
    const Vec c = fd_factors(base, theta0, epsilon, u, X);
    G.noalias() += c * u.transpose();
  }
  G /= static_cast<double>(m_u);
  return LinearizedModel(base, theta0, epsilon, m_u, X, std::move(G), base.eval_batch(theta0, X));
}

// ---------------------------------------------------------------------------

/// Full-vector finite difference against the sum of per-layer finite
/// differences for a two-layer linear network.
struct LayerDecomposition {
  double full = 0.0;
  double layer1 = 0.0;
  double layer2 = 0.0;
  double discrepancy = 0.0;

  double magnitude() const {
    return std::max({std::abs(full), std::abs(layer1), std::abs(layer2)});
  }
  bool holds(double rel_tol = 1e-10) const { return discrepancy <= rel_tol * std::max(1.0, magnitude()); }
};

inline LayerDecomposition check_layer_decomposition(const TwoLayerLinear& model, const Vec& x,
                                                    double epsilon, const Vec& z) {
  require_shape(static_cast<std::size_t>(z.size()) == model.num_params(),
                "check_layer_decomposition: z must cover both layers");
  const auto split = static_cast<Eigen::Index>(model.first_layer_size());
  Vec z1 = Vec::Zero(z.size());
  Vec z2 = Vec::Zero(z.size());
  z1.head(split) = z.head(split);
  z2.tail(z.size() - split) = z.tail(z.size() - split);

  const Vec& theta = model.params();
  LayerDecomposition r;
  r.full = fd_factor(model, theta, epsilon, z, x);
  r.layer1 = fd_factor(model, theta, epsilon, z1, x);
  r.layer2 = fd_factor(model, theta, epsilon, z2, x);
  r.discrepancy = std::abs(r.full - (r.layer1 + r.layer2));
  return r;
}

/// phi(x) == [(phi(x + eps) - phi(x - eps)) / (2 eps)] * x within tol.
inline bool check_zo_homogeneous(const Activation& phi, double x, double epsilon, double tol = 1e-10) {
  if (!(epsilon > 0.0)) throw ConfigError("check_zo_homogeneous: epsilon must be > 0");
  const double slope = (phi(x + epsilon) - phi(x - epsilon)) / (2.0 * epsilon);
  return std::abs(phi(x) - slope * x) <= tol;
}

using AnyModel = std::variant<LinearModel, TwoLayerLinear, Mlp, LinearizedModel>;

}  // namespace nzk
