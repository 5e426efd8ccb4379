#include "pssim/problems.hpp"

#include "pssim/rng.hpp"

#include <Eigen/QR>

#include <cmath>

namespace pssim {

namespace {

// Problem-generation lanes inside rng::stream_problem.
enum : std::uint64_t {
  lane_matrix = 0,
  lane_noise = 1,
  lane_data = 2,
  lane_labels = 3,
  lane_teacher = 4,
  lane_init = 5,
  lane_power = 6,
};

std::uint64_t lane(std::uint64_t which) { return rng::stream_id(rng::stream_problem, which); }

Mat gaussian_mat(std::uint64_t seed, std::uint64_t stream, Index rows, Index cols) {
  Mat m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r)
      m(r, c) = rng::normal(seed, stream, static_cast<std::uint64_t>(c * rows + r));
  return m;
}

Vec gaussian_vec(std::uint64_t seed, std::uint64_t stream, Index n) {
  Vec v(n);
  for (Index i = 0; i < n; ++i) v(i) = rng::normal(seed, stream, static_cast<std::uint64_t>(i));
  return v;
}

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) {
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

class NoisyQuadratic final : public Problem {
 public:
  explicit NoisyQuadratic(const ProblemSpec& s) : Problem(s) {
    const Index d = s.dim;
    // Random rotation from the QR factorization of a Gaussian matrix,
    // eigenvalues spread linearly over [L/cond, L].
    Mat q = Eigen::HouseholderQR<Mat>(gaussian_mat(s.seed, lane(lane_matrix), d, d)).householderQ();
    Vec evals(d);
    const double lo = s.smoothness / s.cond;
    for (Index i = 0; i < d; ++i)
      evals(i) = d == 1 ? s.smoothness : lo + (s.smoothness - lo) * double(i) / double(d - 1);
    a_ = q * evals.asDiagonal() * q.transpose();
    a_ = 0.5 * (a_ + a_.transpose()).eval();  // keep A exactly symmetric

    // Instance noise: centered exactly (so the full gradient is exactly Aw)
    // and scaled so the mean squared norm is exactly noise_sigma^2.
    eps_ = Mat::Zero(d, s.n);
    if (s.noise_sigma > 0.0) {
      eps_ = gaussian_mat(s.seed, lane(lane_noise), d, s.n);
      eps_.colwise() -= eps_.rowwise().mean().eval();
      const double ms = eps_.squaredNorm() / double(s.n);
      if (ms <= 0.0) throw ProblemError("degenerate noise draw; use a different problem seed");
      eps_ *= s.noise_sigma / std::sqrt(ms);
    }
  }

  double full_loss(const Vec& w) const override {
    check_param(w);
    return 0.5 * w.dot(a_ * w) + 0.5 * spec_.lambda * w.squaredNorm();
  }

  Vec full_gradient(const Vec& w) const override {
    check_param(w);
    return a_ * w + spec_.lambda * w;
  }

  Vec stochastic_grad(const Vec& w, std::span<const std::int32_t> sample) const override {
    check_param(w);
    check_sample(sample);
    Vec noise = Vec::Zero(spec_.dim);
    for (const auto i : sample) noise += eps_.col(i);
    noise /= double(sample.size());
    return a_ * w + noise + spec_.lambda * w;
  }

  Vec initial_param() const override {
    Vec z = gaussian_vec(spec_.seed, lane(lane_init), spec_.dim);
    const double nrm = z.norm();
    if (nrm < 1e-12) return Vec::Constant(spec_.dim, 10.0 / std::sqrt(double(spec_.dim)));
    return (10.0 / nrm) * z;
  }

  double smoothness() const override { return spec_.smoothness + spec_.lambda; }

  std::vector<double> dataset_row(Index i) const override {
    std::vector<double> row(static_cast<std::size_t>(spec_.dim));
    for (Index j = 0; j < spec_.dim; ++j) row[static_cast<std::size_t>(j)] = eps_(j, i);
    return row;
  }

  std::vector<std::string> dataset_columns() const override {
    std::vector<std::string> cols;
    for (Index j = 0; j < spec_.dim; ++j) cols.push_back("eps" + std::to_string(j));
    return cols;
  }

  const Mat& matrix() const { return a_; }

 private:
  Mat a_;
  Mat eps_;  // one noise column per instance
};

class LogisticRegression final : public Problem {
 public:
  explicit LogisticRegression(const ProblemSpec& s) : Problem(s) {
    x_ = gaussian_mat(s.seed, lane(lane_data), s.n, s.dim);
    x_.rowwise().normalize();
    Vec separator = gaussian_vec(s.seed, lane(lane_teacher), s.dim).normalized();
    y_ = Vec(s.n);
    for (Index i = 0; i < s.n; ++i) {
      double label = x_.row(i).dot(separator) >= 0.0 ? 1.0 : -1.0;
      if (rng::uniform(s.seed, lane(lane_labels), static_cast<std::uint64_t>(i)) < s.label_flip)
        label = -label;
      y_(i) = label;
    }
  }

  double full_loss(const Vec& w) const override {
    check_param(w);
    const Vec margins = x_ * w;
    double acc = 0.0;
    for (Index i = 0; i < spec_.n; ++i) acc += softplus(-y_(i) * margins(i));
    return acc / double(spec_.n) + 0.5 * spec_.lambda * w.squaredNorm();
  }

  Vec full_gradient(const Vec& w) const override {
    check_param(w);
    const Vec margins = x_ * w;
    Vec coeff(spec_.n);
    for (Index i = 0; i < spec_.n; ++i) coeff(i) = -y_(i) * stable_sigmoid(-y_(i) * margins(i));
    return x_.transpose() * coeff / double(spec_.n) + spec_.lambda * w;
  }

  Vec stochastic_grad(const Vec& w, std::span<const std::int32_t> sample) const override {
    check_param(w);
    check_sample(sample);
    Vec g = Vec::Zero(spec_.dim);
    for (const auto i : sample) {
      const double margin = x_.row(i).dot(w);
      g += (-y_(i) * stable_sigmoid(-y_(i) * margin)) * x_.row(i).transpose();
    }
    return g / double(sample.size()) + spec_.lambda * w;
  }

  Vec initial_param() const override { return Vec::Zero(spec_.dim); }

  /// Instance Hessians are s'(z) x x' + lambda I with s' <= 1/4 and
  /// unit-norm rows, so L <= 1/4 + lambda.
  double smoothness() const override { return 0.25 + spec_.lambda; }

  std::vector<double> dataset_row(Index i) const override {
    std::vector<double> row;
    for (Index j = 0; j < spec_.dim; ++j) row.push_back(x_(i, j));
    row.push_back(y_(i));
    return row;
  }

  std::vector<std::string> dataset_columns() const override {
    std::vector<std::string> cols;
    for (Index j = 0; j < spec_.dim; ++j) cols.push_back("x" + std::to_string(j));
    cols.push_back("y");
    return cols;
  }

 private:
  Mat x_;  // n x dim, unit-norm rows
  Vec y_;  // labels in {-1, +1}
};

// Scalar regression through y = w2' tanh(W1 x + b1) + b2 against a random
// teacher network of the same shape. Parameters are packed as
// [vec(W1) | b1 | w2 | b2] (W1 column-major).
class TwoLayerNet final : public Problem {
 public:
  explicit TwoLayerNet(const ProblemSpec& s) : Problem(s), p_(s.net_input), h_(s.net_hidden) {
    x_ = gaussian_mat(s.seed, lane(lane_data), s.n, p_);
    Vec teacher = 0.7 * gaussian_vec(s.seed, lane(lane_teacher), s.dim);
    y_ = Vec(s.n);
    for (Index i = 0; i < s.n; ++i) {
      y_(i) = predict(teacher, x_.row(i).transpose()) +
              s.target_noise * rng::normal(s.seed, lane(lane_labels), static_cast<std::uint64_t>(i));
    }
  }

  double full_loss(const Vec& w) const override {
    check_param(w);
    double acc = 0.0;
    for (Index i = 0; i < spec_.n; ++i) {
      const double r = predict(w, x_.row(i).transpose()) - y_(i);
      acc += 0.5 * r * r;
    }
    return acc / double(spec_.n) + 0.5 * spec_.lambda * w.squaredNorm();
  }

  Vec full_gradient(const Vec& w) const override {
    check_param(w);
    Vec g = Vec::Zero(spec_.dim);
    for (Index i = 0; i < spec_.n; ++i) add_instance_grad(w, i, g);
    return g / double(spec_.n) + spec_.lambda * w;
  }

  Vec stochastic_grad(const Vec& w, std::span<const std::int32_t> sample) const override {
    check_param(w);
    check_sample(sample);
    Vec g = Vec::Zero(spec_.dim);
    for (const auto i : sample) add_instance_grad(w, i, g);
    return g / double(sample.size()) + spec_.lambda * w;
  }

  Vec initial_param() const override {
    return (0.5 / std::sqrt(double(p_))) * gaussian_vec(spec_.seed, lane(lane_init), spec_.dim);
  }

  /// Largest Hessian eigenvalue at the initial point, by power iteration on
  /// central-difference Hessian-vector products.
  double smoothness() const override {
    if (l_cache_ < 0.0) {
      const Vec w0 = initial_param();
      Vec v = gaussian_vec(spec_.seed, lane(lane_power), spec_.dim).normalized();
      const double step = 1e-5;
      double l_est = 0.0;
      for (int it = 0; it < 60; ++it) {
        const Vec hv = (full_gradient(w0 + step * v) - full_gradient(w0 - step * v)) / (2.0 * step);
        const double nrm = hv.norm();
        if (nrm < 1e-12) break;
        if (std::abs(nrm - l_est) <= 1e-9 * std::max(1.0, nrm)) {
          l_est = nrm;
          break;
        }
        l_est = nrm;
        v = hv / nrm;
      }
      l_cache_ = std::max(l_est, spec_.lambda);
    }
    return l_cache_;
  }

  std::vector<double> dataset_row(Index i) const override {
    std::vector<double> row;
    for (Index j = 0; j < p_; ++j) row.push_back(x_(i, j));
    row.push_back(y_(i));
    return row;
  }

  std::vector<std::string> dataset_columns() const override {
    std::vector<std::string> cols;
    for (Index j = 0; j < p_; ++j) cols.push_back("x" + std::to_string(j));
    cols.push_back("y");
    return cols;
  }

 private:
  double predict(const Vec& w, const Vec& x) const {
    const auto w1 = Eigen::Map<const Mat>(w.data(), h_, p_);
    const auto b1 = w.segment(h_ * p_, h_);
    const auto w2 = w.segment(h_ * p_ + h_, h_);
    const double b2 = w(spec_.dim - 1);
    return w2.dot(((w1 * x + b1).array().tanh()).matrix()) + b2;
  }

  void add_instance_grad(const Vec& w, Index i, Vec& g) const {
    const auto w1 = Eigen::Map<const Mat>(w.data(), h_, p_);
    const auto b1 = w.segment(h_ * p_, h_);
    const auto w2 = w.segment(h_ * p_ + h_, h_);
    const double b2 = w(spec_.dim - 1);
    const Vec x = x_.row(i).transpose();
    const Vec a = ((w1 * x + b1).array().tanh()).matrix();
    const double r = w2.dot(a) + b2 - y_(i);
    const Vec dz = r * (w2.array() * (1.0 - a.array().square())).matrix();
    Eigen::Map<Mat>(g.data(), h_, p_) += dz * x.transpose();
    g.segment(h_ * p_, h_) += dz;
    g.segment(h_ * p_ + h_, h_) += r * a;
    g(spec_.dim - 1) += r;
  }

  Index p_;  // input width
  Index h_;  // hidden width
  Mat x_;
  Vec y_;
  mutable double l_cache_ = -1.0;
};

}  // namespace

std::string to_string(ProblemKind k) {
  switch (k) {
    case ProblemKind::noisy_quadratic: return "noisy_quadratic";
    case ProblemKind::logistic_regression: return "logistic_regression";
    case ProblemKind::two_layer_net: return "two_layer_net";
  }
  throw Error("unreachable problem kind");
}

ProblemKind problem_kind_from_string(const std::string& name) {
  if (name == "noisy_quadratic") return ProblemKind::noisy_quadratic;
  if (name == "logistic_regression") return ProblemKind::logistic_regression;
  if (name == "two_layer_net") return ProblemKind::two_layer_net;
  throw ConfigError("unknown problem '" + name +
                    "' (expected noisy_quadratic|logistic_regression|two_layer_net)");
}

void validate(const ProblemSpec& s) {
  if (s.n < 1) throw ConfigError("dataset size n must be >= 1");
  if (!(s.lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  switch (s.kind) {
    case ProblemKind::noisy_quadratic:
      if (s.dim < 1) throw ConfigError("dim must be >= 1");
      if (!(s.noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
      if (s.noise_sigma > 0.0 && s.n < 2)
        throw ConfigError("noisy_quadratic with noise_sigma > 0 needs n >= 2 (noise is centered)");
      if (!(s.smoothness > 0.0)) throw ConfigError("smoothness must be > 0");
      if (!(s.cond >= 1.0)) throw ConfigError("cond must be >= 1");
      break;
    case ProblemKind::logistic_regression:
      if (s.dim < 1) throw ConfigError("dim must be >= 1");
      if (!(s.label_flip >= 0.0 && s.label_flip < 0.5))
        throw ConfigError("label_flip must be in [0, 0.5)");
      break;
    case ProblemKind::two_layer_net:
      if (s.net_input < 1 || s.net_hidden < 1)
        throw ConfigError("net_input and net_hidden must be >= 1");
      if (s.dim != s.net_hidden * (s.net_input + 2) + 1)
        throw ConfigError("two_layer_net dim must equal net_hidden*(net_input+2)+1");
      if (!(s.target_noise >= 0.0)) throw ConfigError("target_noise must be >= 0");
      break;
  }
}

void Problem::check_param(const Vec& w) const {
  if (w.size() != spec_.dim)
    throw ProblemError("parameter has dimension " + std::to_string(w.size()) + ", expected " +
                       std::to_string(spec_.dim));
}

void Problem::check_sample(std::span<const std::int32_t> sample) const {
  if (sample.empty()) throw ProblemError("sample must contain at least one index");
  for (const auto i : sample) {
    if (i < 0 || i >= spec_.n)
      throw ProblemError("sample index " + std::to_string(i) + " out of range [0," +
                         std::to_string(spec_.n) + ")");
  }
}

std::unique_ptr<Problem> make_problem(const ProblemSpec& spec) {
  validate(spec);
  switch (spec.kind) {
    case ProblemKind::noisy_quadratic: return std::make_unique<NoisyQuadratic>(spec);
    case ProblemKind::logistic_regression: return std::make_unique<LogisticRegression>(spec);
    case ProblemKind::two_layer_net: return std::make_unique<TwoLayerNet>(spec);
  }
  throw Error("unreachable problem kind");
}

AssumptionEstimates assumption_constants(const Problem& p,
                                         std::span<const std::pair<Vec, Vec>> observations) {
  AssumptionEstimates est;
  est.smoothness = p.smoothness();
  for (const auto& [w, g] : observations) {
    est.g2_hat = std::max(est.g2_hat, g.squaredNorm());
    est.sigma2_hat = std::max(est.sigma2_hat, (g - p.full_gradient(w)).squaredNorm());
  }
  return est;
}

}  // namespace pssim
