#include "models.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>

#include "errors.hpp"
#include "rng.hpp"

namespace cnml {

void Classifier::check_theta(const Vec& theta) const {
  require(theta.size() == param_count(),
          "parameter vector length " + std::to_string(theta.size()) +
              " does not match model param_count " + std::to_string(param_count()));
}

void Classifier::check_input(const Vec& x) const {
  require(x.size() == input_dim(), "input dimension mismatch");
}

double Classifier::example_log_likelihood(const Vec& theta, const Vec& x,
                                          int y) const {
  require(y >= 0 && y < num_classes(), "label out of range");
  return std::log(predict(theta, x)[y]);
}

Mat Classifier::example_hessian(const Vec& theta, const Vec& x, int y) const {
  // Central finite difference of the analytic gradient, column by column.
  const Eigen::Index p = param_count();
  const double h = 1e-4;
  Mat hess(p, p);
  Vec probe = theta;
  for (Eigen::Index j = 0; j < p; ++j) {
    probe[j] = theta[j] + h;
    Vec gp = example_grad(probe, x, y);
    probe[j] = theta[j] - h;
    Vec gm = example_grad(probe, x, y);
    probe[j] = theta[j];
    hess.col(j) = (gp - gm) / (2.0 * h);
  }
  return 0.5 * (hess + hess.transpose());
}

void Classifier::example_grad_into(const Vec& theta, const Vec& x, int y,
                                   Vec& out) const {
  out = example_grad(theta, x, y);
}

void Classifier::example_hessian_into(const Vec& theta, const Vec& x, int y,
                                      Mat& out) const {
  out = example_hessian(theta, x, y);
}

double Classifier::log_likelihood(const Vec& theta, const Dataset& data) const {
  check_theta(theta);
  long double total = 0.0L;
  for (Eigen::Index i = 0; i < data.size(); ++i)
    total += example_log_likelihood(theta, data.inputs.row(i), data.labels[i]);
  return static_cast<double>(total);
}

Vec Classifier::grad_log_likelihood(const Vec& theta, const Dataset& data) const {
  check_theta(theta);
  Vec g = Vec::Zero(param_count());
  for (Eigen::Index i = 0; i < data.size(); ++i)
    g += example_grad(theta, data.inputs.row(i), data.labels[i]);
  return g;
}

Mat Classifier::hessian_log_likelihood(const Vec& theta, const Dataset& data) const {
  check_theta(theta);
  const Eigen::Index p = param_count();
  const double h = 1e-4;
  Mat hess(p, p);
  Vec probe = theta;
  for (Eigen::Index j = 0; j < p; ++j) {
    probe[j] = theta[j] + h;
    Vec gp = grad_log_likelihood(probe, data);
    probe[j] = theta[j] - h;
    Vec gm = grad_log_likelihood(probe, data);
    probe[j] = theta[j];
    hess.col(j) = (gp - gm) / (2.0 * h);
  }
  hess = 0.5 * (hess + hess.transpose()).eval();
  if (!hess.allFinite())
    throw Error(ErrorKind::NumericalFailure, "hessian has non-finite entries");
  return hess;
}

Vec Classifier::default_init(std::uint64_t) const {
  return Vec::Zero(param_count());
}

// ---------------------------------------------------------------------------
// Logistic regression

LogisticRegression::LogisticRegression(Eigen::Index input_dim, int num_classes)
    : d_(input_dim), k_(num_classes) {
  require(d_ >= 1, "input_dim must be >= 1");
  require(k_ >= 2, "num_classes must be >= 2");
}

// theta layout: class-major rows of (w_0..w_{d-1}, b).
Vec LogisticRegression::log_softmax(const Vec& theta, const Vec& x) const {
  Vec logits(k_);
  const Eigen::Index stride = d_ + 1;
  for (int c = 0; c < k_; ++c) {
    logits[c] = theta.segment(c * stride, d_).dot(x) + theta[c * stride + d_];
  }
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

Vec LogisticRegression::predict(const Vec& theta, const Vec& x) const {
  check_theta(theta);
  check_input(x);
  return log_softmax(theta, x).array().exp();
}

double LogisticRegression::example_log_likelihood(const Vec& theta, const Vec& x,
                                                  int y) const {
  check_theta(theta);
  check_input(x);
  require(y >= 0 && y < k_, "label out of range");
  return log_softmax(theta, x)[y];
}

Vec LogisticRegression::example_grad(const Vec& theta, const Vec& x, int y) const {
  Vec g(param_count());
  example_grad_into(theta, x, y, g);
  return g;
}

void LogisticRegression::example_grad_into(const Vec& theta, const Vec& x, int y,
                                           Vec& g) const {
  check_theta(theta);
  check_input(x);
  require(y >= 0 && y < k_, "label out of range");
  g.resize(param_count());
  Vec probs = predict(theta, x);
  const Eigen::Index stride = d_ + 1;
  for (int c = 0; c < k_; ++c) {
    const double coeff = (c == y ? 1.0 : 0.0) - probs[c];
    g.segment(c * stride, d_) = coeff * x;
    g[c * stride + d_] = coeff;
  }
}

Mat LogisticRegression::example_hessian(const Vec& theta, const Vec& x, int y) const {
  Mat hess(param_count(), param_count());
  example_hessian_into(theta, x, y, hess);
  return hess;
}

void LogisticRegression::example_hessian_into(const Vec& theta, const Vec& x,
                                              int /*y*/, Mat& hess) const {
  check_theta(theta);
  check_input(x);
  hess.resize(param_count(), param_count());
  Vec probs = predict(theta, x);
  // d^2/dlogits^2 log softmax = -(diag(p) - p p^T), independent of the label;
  // the parameter-space Hessian is its Kronecker product with xt xt^T where
  // xt = (x, 1).
  Vec xt(d_ + 1);
  xt.head(d_) = x;
  xt[d_] = 1.0;
  Mat s = probs.asDiagonal();
  s -= probs * probs.transpose();
  Mat block = xt * xt.transpose();
  const Eigen::Index stride = d_ + 1;
  for (int a = 0; a < k_; ++a)
    for (int b = 0; b < k_; ++b)
      hess.block(a * stride, b * stride, stride, stride) = -s(a, b) * block;
}

double LogisticRegression::log_likelihood(const Vec& theta, const Dataset& data) const {
  check_theta(theta);
  require(data.dim() == d_ && data.num_classes == k_, "dataset does not match model");
  // Batched logits, then a sequential extended-precision fold so that the
  // value over concatenated datasets is the sum of the parts.
  const Eigen::Index stride = d_ + 1;
  Mat w(k_, d_);
  Vec b(k_);
  for (int c = 0; c < k_; ++c) {
    w.row(c) = theta.segment(c * stride, d_).transpose();
    b[c] = theta[c * stride + d_];
  }
  Mat logits = (data.inputs * w.transpose()).rowwise() + b.transpose();
  long double total = 0.0L;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const double m = logits.row(i).maxCoeff();
    const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    total += logits(i, data.labels[i]) - lse;
  }
  return static_cast<double>(total);
}

Vec LogisticRegression::grad_log_likelihood(const Vec& theta, const Dataset& data) const {
  check_theta(theta);
  require(data.dim() == d_ && data.num_classes == k_, "dataset does not match model");
  const Eigen::Index stride = d_ + 1;
  Mat w(k_, d_);
  Vec b(k_);
  for (int c = 0; c < k_; ++c) {
    w.row(c) = theta.segment(c * stride, d_).transpose();
    b[c] = theta[c * stride + d_];
  }
  Mat logits = (data.inputs * w.transpose()).rowwise() + b.transpose();
  Mat resid(data.size(), k_);  // one-hot(y) - softmax(logits)
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const double m = logits.row(i).maxCoeff();
    Vec e = (logits.row(i).array() - m).exp();
    resid.row(i) = -(e / e.sum()).transpose();
    resid(i, data.labels[i]) += 1.0;
  }
  Mat wgrad = resid.transpose() * data.inputs;  // k x d
  Vec bgrad = resid.colwise().sum();
  Vec g(param_count());
  for (int c = 0; c < k_; ++c) {
    g.segment(c * stride, d_) = wgrad.row(c).transpose();
    g[c * stride + d_] = bgrad[c];
  }
  return g;
}

Mat LogisticRegression::hessian_log_likelihood(const Vec& theta, const Dataset& data) const {
  check_theta(theta);
  require(data.dim() == d_ && data.num_classes == k_, "dataset does not match model");
  const Eigen::Index stride = d_ + 1;
  Mat hess = Mat::Zero(param_count(), param_count());
  Vec xt(stride);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    Vec probs = predict(theta, data.inputs.row(i));
    xt.head(d_) = data.inputs.row(i).transpose();
    xt[d_] = 1.0;
    Mat block = xt * xt.transpose();
    for (int a = 0; a < k_; ++a) {
      for (int b = 0; b < k_; ++b) {
        const double s = (a == b ? probs[a] : 0.0) - probs[a] * probs[b];
        hess.block(a * stride, b * stride, stride, stride) -= s * block;
      }
    }
  }
  if (!hess.allFinite())
    throw Error(ErrorKind::NumericalFailure, "hessian has non-finite entries");
  return hess;
}

// ---------------------------------------------------------------------------
// MLP

Mlp::Mlp(Eigen::Index input_dim, int num_classes, std::vector<int> hidden_sizes)
    : d_(input_dim), k_(num_classes), hidden_(std::move(hidden_sizes)) {
  require(d_ >= 1, "input_dim must be >= 1");
  require(k_ >= 2, "num_classes must be >= 2");
  layer_sizes_.push_back(static_cast<int>(d_));
  for (int h : hidden_) {
    require(h >= 1, "hidden size must be >= 1");
    layer_sizes_.push_back(h);
  }
  layer_sizes_.push_back(k_);
  param_count_ = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes_.size(); ++l)
    param_count_ += static_cast<Eigen::Index>(layer_sizes_[l + 1]) * (layer_sizes_[l] + 1);
}

Vec Mlp::forward(const Vec& theta, const Vec& x, std::vector<Vec>* activations) const {
  Vec a = x;
  if (activations) activations->push_back(a);
  Eigen::Index off = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes_.size(); ++l) {
    const int in = layer_sizes_[l];
    const int out = layer_sizes_[l + 1];
    Eigen::Map<const Mat> w(theta.data() + off, out, in);
    Eigen::Map<const Vec> b(theta.data() + off + static_cast<Eigen::Index>(out) * in, out);
    off += static_cast<Eigen::Index>(out) * (in + 1);
    Vec z = w * a + b;
    const bool last = (l + 2 == layer_sizes_.size());
    a = last ? z : z.array().tanh().matrix();
    if (activations) activations->push_back(a);
  }
  return a;  // logits
}

Vec Mlp::predict(const Vec& theta, const Vec& x) const {
  check_theta(theta);
  check_input(x);
  Vec logits = forward(theta, x, nullptr);
  const double m = logits.maxCoeff();
  Vec e = (logits.array() - m).exp();
  return e / e.sum();
}

double Mlp::example_log_likelihood(const Vec& theta, const Vec& x, int y) const {
  check_theta(theta);
  check_input(x);
  require(y >= 0 && y < k_, "label out of range");
  Vec logits = forward(theta, x, nullptr);
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits[y] - lse;
}

Vec Mlp::example_grad(const Vec& theta, const Vec& x, int y) const {
  check_theta(theta);
  check_input(x);
  require(y >= 0 && y < k_, "label out of range");
  std::vector<Vec> acts;
  acts.reserve(layer_sizes_.size());
  Vec logits = forward(theta, x, &acts);

  const double m = logits.maxCoeff();
  Vec e = (logits.array() - m).exp();
  Vec delta = -e / e.sum();  // d logL / d logits
  delta[y] += 1.0;

  Vec g(param_count_);
  // Walk layers backwards; acts[l] is the input of layer l.
  std::vector<Eigen::Index> offsets(layer_sizes_.size() - 1);
  Eigen::Index off = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes_.size(); ++l) {
    offsets[l] = off;
    off += static_cast<Eigen::Index>(layer_sizes_[l + 1]) * (layer_sizes_[l] + 1);
  }
  for (std::size_t l = layer_sizes_.size() - 1; l-- > 0;) {
    const int in = layer_sizes_[l];
    const int out = layer_sizes_[l + 1];
    Eigen::Map<const Mat> w(theta.data() + offsets[l], out, in);
    Eigen::Map<Mat> gw(g.data() + offsets[l], out, in);
    Eigen::Map<Vec> gb(g.data() + offsets[l] + static_cast<Eigen::Index>(out) * in, out);
    gw = delta * acts[l].transpose();
    gb = delta;
    if (l > 0) {
      Vec back = w.transpose() * delta;
      // tanh'(z) = 1 - a^2 where a is the layer output.
      delta = back.array() * (1.0 - acts[l].array().square());
    }
  }
  return g;
}

Vec Mlp::default_init(std::uint64_t seed) const {
  RandomStream rng(seed);
  Vec theta(param_count_);
  Eigen::Index off = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes_.size(); ++l) {
    const int in = layer_sizes_[l];
    const int out = layer_sizes_[l + 1];
    const double scale = std::sqrt(2.0 / (in + out));
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(out) * in; ++j)
      theta[off + j] = scale * rng.normal();
    for (int j = 0; j < out; ++j) theta[off + static_cast<Eigen::Index>(out) * in + j] = 0.0;
    off += static_cast<Eigen::Index>(out) * (in + 1);
  }
  return theta;
}

// ---------------------------------------------------------------------------
// MAP fitting

double map_objective(const Classifier& model, const Dataset& data,
                     const L2Prior& prior, const Vec& theta) {
  return model.log_likelihood(theta, data) / static_cast<double>(data.size()) -
         prior.lambda * theta.squaredNorm();
}

namespace {

Vec objective_grad(const Classifier& model, const Dataset& data,
                   const L2Prior& prior, const Vec& theta) {
  return model.grad_log_likelihood(theta, data) / static_cast<double>(data.size()) -
         2.0 * prior.lambda * theta;
}

Vec fit_map_newton(const Classifier& model, const Dataset& data,
                   const L2Prior& prior, Vec theta, double tol, int max_iters,
                   FitInfo* info) {
  const double n = static_cast<double>(data.size());
  const Eigen::Index p = model.param_count();
  double gnorm = 0.0;
  for (int iter = 0; iter < max_iters; ++iter) {
    Vec g = objective_grad(model, data, prior, theta);
    gnorm = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
    if (!std::isfinite(gnorm))
      throw Error(ErrorKind::NumericalFailure, "non-finite gradient in fit_map");
    if (gnorm <= tol) {
      if (info) *info = {iter, gnorm, true};
      return theta;
    }
    Mat hess = model.hessian_log_likelihood(theta, data) / n;
    hess.diagonal().array() -= 2.0 * prior.lambda;
    Mat neg = -hess;
    // Escalating ridge until the Newton system factors.
    double ridge = 0.0;
    Eigen::LLT<Mat> llt;
    for (int attempt = 0; attempt < 60; ++attempt) {
      Mat damped = neg;
      damped.diagonal().array() += ridge;
      llt.compute(damped);
      if (llt.info() == Eigen::Success) break;
      ridge = (ridge == 0.0) ? 1e-10 : ridge * 10.0;
    }
    if (llt.info() != Eigen::Success)
      throw Error(ErrorKind::NumericalFailure, "Newton system not positive definite");
    Vec step = llt.solve(g);

    // Backtracking on the objective; the Newton direction is an ascent
    // direction for the damped system.
    const double f0 = map_objective(model, data, prior, theta);
    double t = 1.0;
    const double slope = g.dot(step);
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      Vec cand = theta + t * step;
      const double f1 = map_objective(model, data, prior, cand);
      if (std::isfinite(f1) && f1 >= f0 + 1e-4 * t * slope) {
        theta = std::move(cand);
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // No progress possible beyond numerical noise; report where we are.
      Vec g2 = objective_grad(model, data, prior, theta);
      gnorm = g2.size() ? g2.cwiseAbs().maxCoeff() : 0.0;
      if (gnorm <= tol) {
        if (info) *info = {max_iters, gnorm, true};
        return theta;
      }
      throw ConvergenceError("fit_map line search stalled; gradient inf-norm " +
                                 std::to_string(gnorm),
                             gnorm);
    }
  }
  Vec g = objective_grad(model, data, prior, theta);
  gnorm = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
  if (gnorm <= tol) {
    if (info) *info = {max_iters, gnorm, true};
    return theta;
  }
  if (info) *info = {max_iters, gnorm, false};
  throw ConvergenceError("fit_map did not converge in " + std::to_string(max_iters) +
                             " Newton iterations; gradient inf-norm " +
                             std::to_string(gnorm),
                         gnorm);
}

Vec fit_map_gradient_ascent(const Classifier& model, const Dataset& data,
                            const L2Prior& prior, Vec theta, double tol,
                            int max_iters, FitInfo* info) {
  double step = 0.1;
  double f0 = map_objective(model, data, prior, theta);
  double gnorm = 0.0;
  for (int iter = 0; iter < max_iters; ++iter) {
    Vec g = objective_grad(model, data, prior, theta);
    gnorm = g.cwiseAbs().maxCoeff();
    if (!std::isfinite(gnorm))
      throw Error(ErrorKind::NumericalFailure, "non-finite gradient in fit_map");
    if (gnorm <= tol) {
      if (info) *info = {iter, gnorm, true};
      return theta;
    }
    bool accepted = false;
    const double slope = g.squaredNorm();
    for (int ls = 0; ls < 40; ++ls) {
      Vec cand = theta + step * g;
      const double f1 = map_objective(model, data, prior, cand);
      if (std::isfinite(f1) && f1 >= f0 + 1e-4 * step * slope) {
        theta = std::move(cand);
        f0 = f1;
        accepted = true;
        step *= 1.5;  // cautious growth after a good step
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      throw ConvergenceError(
          "fit_map gradient ascent stalled; gradient inf-norm " + std::to_string(gnorm),
          gnorm);
    }
  }
  if (info) *info = {max_iters, gnorm, false};
  throw ConvergenceError("fit_map did not converge in " + std::to_string(max_iters) +
                             " iterations; gradient inf-norm " + std::to_string(gnorm),
                         gnorm);
}

}  // namespace

Vec fit_map(const Classifier& model, const Dataset& data, const L2Prior& prior,
            const Vec& init, const OptimizerConfig& opt, FitInfo* info) {
  require(data.size() >= 1, "fit_map needs a nonempty dataset");
  require(prior.lambda >= 0.0, "prior lambda must be nonnegative");
  model.check_theta(init);
  const double tol = opt.tolerance > 0.0 ? opt.tolerance : model.default_tolerance();
  const int max_iters = opt.max_iters > 0 ? opt.max_iters : model.default_max_iters();
  if (model.param_count() == 0) {
    if (info) *info = {0, 0.0, true};
    return init;
  }
  if (model.has_exact_hessian())
    return fit_map_newton(model, data, prior, init, tol, max_iters, info);
  return fit_map_gradient_ascent(model, data, prior, init, tol, max_iters, info);
}

}  // namespace cnml
