#ifndef CNML_CORE_POSTERIOR_HPP
#define CNML_CORE_POSTERIOR_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "models.hpp"
#include "rng.hpp"

namespace cnml {

// Gaussian approximate posterior q(theta). Full covariance is represented by
// the lower Cholesky factor of the covariance; that factor is the single
// source of truth for densities, sampling, and serialization, so a saved and
// reloaded posterior behaves bit-identically.
class GaussianPosterior {
public:
  enum class Shape { Diagonal, Full };

  static GaussianPosterior diagonal(Vec mean, Vec variances, double alpha = 1.0);
  static GaussianPosterior full(Vec mean, const Mat& covariance, double alpha = 1.0);
  static GaussianPosterior full_from_cholesky(Vec mean, Mat chol_lower,
                                              double alpha = 1.0);

  Shape shape() const { return shape_; }
  Eigen::Index dim() const { return mean_.size(); }
  const Vec& mean() const { return mean_; }
  const Vec& diagonal_variances() const { return diag_var_; }
  const Mat& cholesky_lower() const { return chol_; }
  Mat covariance() const;

  double temperature_alpha() const { return alpha_; }
  void set_temperature_alpha(double alpha);

  // Exact normalized Gaussian log-density and its gradient.
  double log_density(const Vec& theta) const;
  Vec grad_log_density(const Vec& theta) const;

  // Sigma * v; the preconditioner applied by the amortized predictor.
  Vec apply_covariance(const Vec& v) const;

  Vec sample(RandomStream& rng) const;

private:
  GaussianPosterior() = default;

  Shape shape_ = Shape::Diagonal;
  Vec mean_;
  Vec diag_var_;  // Diagonal shape
  Mat chol_;      // Full shape: lower triangular L with L L^T = covariance
  double alpha_ = 1.0;
};

// Laplace approximation at the MAP: precision is the negative Hessian of the
// summed log posterior (n times the mean objective) plus damping. Diagonal
// shape keeps only the precision diagonal before inverting. damping < 0
// selects the default 1e-4 * max precision diagonal.
GaussianPosterior laplace_fit(const Classifier& model, const Dataset& data,
                              const L2Prior& prior, GaussianPosterior::Shape shape,
                              double damping = -1.0, FitInfo* fit_info = nullptr,
                              const OptimizerConfig& opt = {});

struct SgdTrajectoryConfig {
  double learning_rate = 0.01;
  int num_epochs = 100;
  Eigen::Index batch_size = 32;
  int collect_start_epoch = 50;
  int collection_interval = 1;
  std::uint64_t seed = 0;
};

// Diagonal posterior from first and second moments of SGD iterates collected
// once per epoch after the warmup. Variances are floored at 1e-8.
GaussianPosterior swag_diag_fit(const Classifier& model, const Dataset& data,
                                const L2Prior& prior, const SgdTrajectoryConfig& cfg);

struct ViConfig {
  double prior_std = 0.1;
  int num_elbo_samples = 4;
  double learning_rate = 0.01;
  int num_steps = 2000;
  std::uint64_t seed = 0;
};

struct ViInfo {
  std::vector<double> elbo_trace;
  double best_smoothed_elbo = 0.0;
  int best_step = 0;
};

// Mean-field Gaussian fit by stochastic maximization of
//   ELBO = E_q[sum_i log p_theta(y_i|x_i)] - KL(q || N(0, prior_std^2 I))
// with reparameterized samples. Returns the iterate with the best smoothed
// ELBO (window of 100 steps).
GaussianPosterior vi_diag_fit(const Classifier& model, const Dataset& data,
                              const ViConfig& cfg, ViInfo* info = nullptr);

// Binary posterior file: magic, version, shape, dimension, temperature,
// mean, then either the variance vector or the lower Cholesky triangle
// row-major. Raw little-endian doubles; round trips are bit-exact.
void save_posterior(const GaussianPosterior& q, const std::string& path);
GaussianPosterior load_posterior(const std::string& path);

constexpr double kVarianceFloor = 1e-8;

}  // namespace cnml

#endif
