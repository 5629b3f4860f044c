#ifndef CNML_CORE_MODELS_HPP
#define CNML_CORE_MODELS_HPP

#include <cstdint>
#include <memory>
#include <vector>

#include "data.hpp"

namespace cnml {

// Per-parameter L2 penalty added to the mean per-example objective:
// fit_map maximizes (1/n) sum_i log p_theta(y_i|x_i) - lambda * |theta|^2.
struct L2Prior {
  double lambda = 0.0;
};

struct OptimizerConfig {
  double tolerance = 0.0;  // <= 0 picks the model default
  int max_iters = 0;       // <= 0 picks the model default
};

struct FitInfo {
  int iterations = 0;
  double grad_inf_norm = 0.0;
  bool converged = false;
};

// Differentiable conditional model p_theta(y|x) over k classes. Derivatives
// are with respect to the flat parameter vector; dataset-level quantities use
// the sum-over-examples convention so they compose over concatenation.
class Classifier {
public:
  virtual ~Classifier() = default;

  virtual Eigen::Index input_dim() const = 0;
  virtual int num_classes() const = 0;
  virtual Eigen::Index param_count() const = 0;

  // True when hessian_log_likelihood is analytic rather than a finite
  // difference of the gradient.
  virtual bool has_exact_hessian() const { return false; }

  // Probabilities over the k classes; strictly positive, sums to 1.
  virtual Vec predict(const Vec& theta, const Vec& x) const = 0;

  virtual double example_log_likelihood(const Vec& theta, const Vec& x,
                                        int y) const;
  virtual Vec example_grad(const Vec& theta, const Vec& x, int y) const = 0;
  virtual Mat example_hessian(const Vec& theta, const Vec& x, int y) const;

  // In-place variants for tight sampling loops; defaults fall back to the
  // allocating versions.
  virtual void example_grad_into(const Vec& theta, const Vec& x, int y, Vec& out) const;
  virtual void example_hessian_into(const Vec& theta, const Vec& x, int y, Mat& out) const;

  // Sum over examples; accumulated in extended precision so the value over a
  // concatenation equals the sum of the parts.
  virtual double log_likelihood(const Vec& theta, const Dataset& data) const;
  virtual Vec grad_log_likelihood(const Vec& theta, const Dataset& data) const;
  virtual Mat hessian_log_likelihood(const Vec& theta, const Dataset& data) const;

  // Starting point for optimizers: zeros where the objective is well behaved
  // there, small seeded randoms otherwise.
  virtual Vec default_init(std::uint64_t seed) const;

  // Default optimizer settings for this model family.
  virtual double default_tolerance() const = 0;
  virtual int default_max_iters() const = 0;

  void check_theta(const Vec& theta) const;
  void check_input(const Vec& x) const;
};

// Multiclass logistic regression with one logit row per class (k*(d+1)
// parameters including biases). Overparameterized on purpose; a positive
// prior removes the gauge freedom. Exact gradients and Hessians.
class LogisticRegression : public Classifier {
public:
  LogisticRegression(Eigen::Index input_dim, int num_classes);

  Eigen::Index input_dim() const override { return d_; }
  int num_classes() const override { return k_; }
  Eigen::Index param_count() const override { return static_cast<Eigen::Index>(k_) * (d_ + 1); }
  bool has_exact_hessian() const override { return true; }

  Vec predict(const Vec& theta, const Vec& x) const override;
  double example_log_likelihood(const Vec& theta, const Vec& x, int y) const override;
  Vec example_grad(const Vec& theta, const Vec& x, int y) const override;
  Mat example_hessian(const Vec& theta, const Vec& x, int y) const override;
  void example_grad_into(const Vec& theta, const Vec& x, int y, Vec& out) const override;
  void example_hessian_into(const Vec& theta, const Vec& x, int y, Mat& out) const override;

  double log_likelihood(const Vec& theta, const Dataset& data) const override;
  Vec grad_log_likelihood(const Vec& theta, const Dataset& data) const override;
  Mat hessian_log_likelihood(const Vec& theta, const Dataset& data) const override;

  double default_tolerance() const override { return 1e-8; }
  int default_max_iters() const override { return 200; }

private:
  // Stable log-softmax of the k logits for one input.
  Vec log_softmax(const Vec& theta, const Vec& x) const;

  Eigen::Index d_;
  int k_;
};

// Fully connected tanh network with a softmax head. Gradients by
// backpropagation; the Hessian is a central finite difference of the
// gradient (h = 1e-4), symmetrized, and flagged approximate.
class Mlp : public Classifier {
public:
  Mlp(Eigen::Index input_dim, int num_classes, std::vector<int> hidden_sizes);

  Eigen::Index input_dim() const override { return d_; }
  int num_classes() const override { return k_; }
  Eigen::Index param_count() const override { return param_count_; }

  Vec predict(const Vec& theta, const Vec& x) const override;
  double example_log_likelihood(const Vec& theta, const Vec& x, int y) const override;
  Vec example_grad(const Vec& theta, const Vec& x, int y) const override;

  Vec default_init(std::uint64_t seed) const override;

  double default_tolerance() const override { return 1e-5; }
  int default_max_iters() const override { return 20000; }

  const std::vector<int>& hidden_sizes() const { return hidden_; }

private:
  // Logits plus per-layer activations for backprop.
  Vec forward(const Vec& theta, const Vec& x, std::vector<Vec>* activations) const;

  Eigen::Index d_;
  int k_;
  std::vector<int> hidden_;
  std::vector<int> layer_sizes_;  // d, hidden..., k
  Eigen::Index param_count_;
};

// MAP fit of the mean objective (1/n) log-likelihood - lambda*|theta|^2.
// Newton with backtracking line search when the model has exact Hessians,
// otherwise gradient ascent with backtracking. Throws ConvergenceError
// carrying the final gradient infinity norm when max_iters is exhausted.
Vec fit_map(const Classifier& model, const Dataset& data, const L2Prior& prior,
            const Vec& init, const OptimizerConfig& opt = {},
            FitInfo* info = nullptr);

// Mean objective value, for diagnostics and tests.
double map_objective(const Classifier& model, const Dataset& data,
                     const L2Prior& prior, const Vec& theta);

}  // namespace cnml

#endif
