#include "predict.hpp"

#include <Eigen/Cholesky>
#include <cmath>

#include "errors.hpp"

namespace cnml {

CnmlResult cnml_from_params(const Classifier& model,
                            std::vector<Vec> per_label_params, const Vec& x) {
  const int k = model.num_classes();
  require(static_cast<int>(per_label_params.size()) == k,
          "need one parameter vector per label");
  CnmlResult r;
  r.per_label_log_prob.resize(k);
  for (int y = 0; y < k; ++y)
    r.per_label_log_prob[y] = model.example_log_likelihood(per_label_params[y], x, y);
  const double m = r.per_label_log_prob.maxCoeff();
  r.log_normalizer_phi =
      m + std::log((r.per_label_log_prob.array() - m).exp().sum());
  r.probs = (r.per_label_log_prob.array() - r.log_normalizer_phi).exp();
  r.per_label_params = std::move(per_label_params);
  return r;
}

CnmlResult exact_cnml(const Classifier& model, const Dataset& train, const Vec& x,
                      const L2Prior& prior, const OptimizerConfig& opt) {
  require(train.size() >= 1, "exact_cnml needs a nonempty train set");
  require(train.num_classes == model.num_classes(), "dataset does not match model");
  model.check_input(x);

  const Vec warm = fit_map(model, train, prior, model.default_init(0), opt);

  const int k = model.num_classes();
  std::vector<Vec> params;
  params.reserve(static_cast<std::size_t>(k));
  Dataset augmented = train.with_appended(x, 0);
  const Eigen::Index last = augmented.size() - 1;
  for (int y = 0; y < k; ++y) {
    augmented.labels[last] = y;
    try {
      params.push_back(fit_map(model, augmented, prior, warm, opt));
    } catch (const ConvergenceError& e) {
      throw ConvergenceError("per-label refit failed for label " + std::to_string(y) +
                                 ": " + e.what(),
                             e.grad_inf_norm());
    }
  }
  return cnml_from_params(model, std::move(params), x);
}

CnmlResult acnml(const Classifier& model, const GaussianPosterior& q, const Vec& x,
                 const AcnmlConfig& cfg) {
  require(q.dim() == model.param_count(), "posterior dimension does not match model");
  require(cfg.num_steps >= 1, "num_steps must be >= 1");
  require(cfg.step_size >= 0.0, "step_size must be nonnegative");
  model.check_input(x);

  const double alpha =
      cfg.alpha_override > 0.0 ? cfg.alpha_override : q.temperature_alpha();
  const int k = model.num_classes();
  std::vector<Vec> params;
  params.reserve(static_cast<std::size_t>(k));
  for (int y = 0; y < k; ++y) {
    Vec theta = q.mean();
    for (int step = 0; step < cfg.num_steps; ++step) {
      Vec direction = alpha * model.example_grad(theta, x, y) + q.grad_log_density(theta);
      theta += cfg.step_size * q.apply_covariance(direction);
      if (!theta.allFinite())
        throw Error(ErrorKind::NumericalFailure,
                    "acnml iterate non-finite at label " + std::to_string(y) +
                        ", step " + std::to_string(step));
    }
    params.push_back(std::move(theta));
  }
  return cnml_from_params(model, std::move(params), x);
}

Vec influence_shift(const Classifier& model, const Vec& theta_hat,
                    const Mat& mean_hessian, const Vec& x, int y, double n) {
  model.check_theta(theta_hat);
  require(mean_hessian.rows() == theta_hat.size() &&
              mean_hessian.cols() == theta_hat.size(),
          "hessian shape mismatch");
  require(n >= 1.0, "n must be at least 1");
  Vec g = model.example_grad(theta_hat, x, y);
  Eigen::LLT<Mat> llt(Mat(-mean_hessian));
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::NumericalFailure,
                "influence_shift: -H is not positive definite");
  // theta_hat - (1/n) H^{-1} g  ==  theta_hat + (1/n) (-H)^{-1} g
  return theta_hat + llt.solve(g) / n;
}

Vec map_predict(const Classifier& model, const GaussianPosterior& q, const Vec& x) {
  require(q.dim() == model.param_count(), "posterior dimension does not match model");
  return model.predict(q.mean(), x);
}

Vec bma_predict(const Classifier& model, const GaussianPosterior& q, const Vec& x,
                int num_samples, RandomStream& rng) {
  require(q.dim() == model.param_count(), "posterior dimension does not match model");
  require(num_samples >= 1, "num_samples must be >= 1");
  Vec acc = Vec::Zero(model.num_classes());
  for (int s = 0; s < num_samples; ++s)
    acc += model.predict(q.sample(rng), x);
  return acc / static_cast<double>(num_samples);
}

}  // namespace cnml
