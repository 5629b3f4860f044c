#ifndef CNML_CORE_VERIFICATION_HPP
#define CNML_CORE_VERIFICATION_HPP

#include <cstdint>
#include <vector>

#include "posterior.hpp"
#include "predict.hpp"

namespace cnml {

// Compact parameter region for constant estimation: a ball around the train
// MAP sized to contain every per-label retrain.
struct ThetaBox {
  Vec center;
  double radius = 0.0;
};

// Sampled estimates of the regularity constants behind the first-order
// retraining bound, for one training set and query point. The weighted
// formulation appends the query point twice with opposite signs (N = n + 2),
// so the uniform weighting reproduces the train-only estimator.
//
// All suprema are raw sample maxima over the box (no inflation applied here):
//   c_op  : sup ||H(theta, 1_w)^{-1}||_op
//   c_g   : sup ||stacked per-point gradients||_2 / sqrt(N)
//   c_h   : sup ||stacked per-point Hessians||_2 / sqrt(N)
//   l_h   : sup ||stacked Hessians - at center||_2 / (sqrt(N) ||theta - center||)
//   delta : sup max(||query grad||_1, ||query Hessian||_1) / (n + 2)
// Per-point losses fold in the per-example share of the L2 prior, so MAP
// fits are stationary points of the weighted objective.
struct ConstantEstimates {
  double c_op = 0.0;
  double c_g = 0.0;
  double c_h = 0.0;
  double l_h = 0.0;
  double delta = 0.0;
  double c_w = 0.0;              // sqrt((n+5)/(n+2)), exact
  double c_ij = 0.0;             // 1 + D c_w l_h c_op
  double delta_threshold = 0.0;  // min(radius / c_op, 1 / (n c_ij c_op))
  int num_samples = 0;
};

ConstantEstimates measure_constants(const Classifier& model, const Dataset& train,
                                    const L2Prior& prior, const Vec& query_x,
                                    int query_y, const ThetaBox& box,
                                    int num_samples = 10000, std::uint64_t seed = 0);

// One parameter-error certificate: lhs is the distance between the exact
// retrain on train + {(x, y)} and its first-order estimate; rhs is
// 2 c_op^2 c_ij delta^2 with constants inflated by `inflation` to cover
// sampling slack. applicable flags delta <= delta_threshold.
struct BoundCertificate {
  Eigen::Index n = 0;
  double delta = 0.0;
  double c_op = 0.0;
  double c_g = 0.0;
  double c_h = 0.0;
  double l_h = 0.0;
  double c_ij = 0.0;
  double delta_threshold = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
  bool applicable = false;
  double inflation = 1.2;
  double box_radius = 0.0;
};

struct CertifyOptions {
  int num_samples = 10000;
  std::uint64_t seed = 0;
  double inflation = 1.2;
  double fit_tolerance = 1e-10;
};

BoundCertificate certify_parameter_bound(const Classifier& model, const Dataset& train,
                                         const L2Prior& prior, const Vec& x, int y,
                                         const CertifyOptions& opts = {});

// Distribution-level certificate: sup_y |log p_exact(y) - log p_amortized(y)|
// against (k+1) L delta, with L the largest query gradient norm along each
// segment between exact and amortized per-label parameters (50 points per
// segment, times the safety factor) and delta the largest parameter error.
struct DistBoundCertificate {
  int k = 0;
  double lipschitz = 0.0;
  double delta = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
  double inflation = 1.2;
};

DistBoundCertificate certify_distribution_bound(const Classifier& model,
                                                const Dataset& train,
                                                const L2Prior& prior,
                                                const GaussianPosterior& q,
                                                const Vec& x,
                                                const AcnmlConfig& cfg = {},
                                                double inflation = 1.2,
                                                double fit_tolerance = 1e-10);

// Finite model class over a finite outcome space: each grid entry is a full
// distribution over the outcomes.
struct DiscreteModelClass {
  int num_outcomes = 0;
  std::vector<Vec> grid;

  void validate() const;
};

// Generative normalized maximum likelihood over sequences of length m,
// enumerated exhaustively (capped at 10^6 sequences). probs[s] is
// proportional to the grid-maximized likelihood of sequence s; sequences are
// indexed base-|X| with the first symbol as the most significant digit.
struct NmlDistribution {
  Vec probs;
  Vec max_log_lik;            // per-sequence maximized log-likelihood
  double log_normalizer = 0;  // log sum of maximized likelihoods
};

NmlDistribution brute_force_nml(const DiscreteModelClass& model_class, int seq_len);

// Coding regret of distribution q at sequence index s relative to the class:
// max_log_lik[s] - log q[s].
double nml_regret(const NmlDistribution& nml, const Vec& q, Eigen::Index s);

}  // namespace cnml

#endif
