#ifndef CNML_CORE_PREDICT_HPP
#define CNML_CORE_PREDICT_HPP

#include <vector>

#include "models.hpp"
#include "posterior.hpp"

namespace cnml {

// Per-query result of a normalized-over-labels predictor: the adapted
// parameters per candidate label, each label's likelihood under its own
// adapted model, the normalized distribution, and the log-normalizer phi
// (which doubles as a confidence statistic; larger means less confident).
struct CnmlResult {
  std::vector<Vec> per_label_params;
  Vec per_label_log_prob;
  Vec probs;
  double log_normalizer_phi = 0.0;
};

// Normalizes per-label adapted parameters into a CnmlResult. Log-sum-exp
// with max subtraction; probs[y] = exp(log_prob[y] - phi) exactly.
CnmlResult cnml_from_params(const Classifier& model,
                            std::vector<Vec> per_label_params, const Vec& x);

// Exact conditional NML/NMAP by per-label retraining: for each label y the
// model is refit on train + {(x, y)} starting from the train-only MAP, and
// the label is scored under its own refit. With lambda > 0 the refits are
// MAP estimates. Throws naming the offending label if a refit fails.
CnmlResult exact_cnml(const Classifier& model, const Dataset& train, const Vec& x,
                      const L2Prior& prior, const OptimizerConfig& opt = {});

struct AcnmlConfig {
  int num_steps = 5;
  double step_size = 0.5;
  double alpha_override = 0.0;  // <= 0 uses the posterior's temperature
};

// Amortized CNML: per label, num_steps covariance-preconditioned ascent steps
//   theta <- theta + eps * Sigma * (alpha * grad log p_theta(y|x) + grad log q(theta))
// from theta_0 = q.mean. Only the query point is touched.
CnmlResult acnml(const Classifier& model, const GaussianPosterior& q, const Vec& x,
                 const AcnmlConfig& cfg = {});

// First-order estimate of the retrained parameters after adding (x, y) to a
// train set of size n whose mean log-likelihood Hessian at theta_hat is
// mean_hessian:  theta_hat - (1/n) H^{-1} grad log p_theta_hat(y|x).
// Internally factors -H, which must be positive definite.
Vec influence_shift(const Classifier& model, const Vec& theta_hat,
                    const Mat& mean_hessian, const Vec& x, int y, double n);

// Prediction at the posterior mean.
Vec map_predict(const Classifier& model, const GaussianPosterior& q, const Vec& x);

// Bayesian model averaging over posterior samples.
Vec bma_predict(const Classifier& model, const GaussianPosterior& q, const Vec& x,
                int num_samples, RandomStream& rng);

}  // namespace cnml

#endif
