#include "verification.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>

#include "errors.hpp"
#include "rng.hpp"

namespace cnml {

namespace {

// Uniform draw from the ball of the box; u^(1/p) radius correction.
Vec sample_in_ball(const ThetaBox& box, RandomStream& rng) {
  const Eigen::Index p = box.center.size();
  Vec dir(p);
  for (Eigen::Index i = 0; i < p; ++i) dir[i] = rng.normal();
  const double norm = dir.norm();
  if (norm == 0.0) return box.center;
  const double r =
      box.radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(p));
  return box.center + (r / norm) * dir;
}

double entrywise_l1(const Mat& m) { return m.cwiseAbs().sum(); }

}  // namespace

ConstantEstimates measure_constants(const Classifier& model, const Dataset& train,
                                    const L2Prior& prior, const Vec& query_x,
                                    int query_y, const ThetaBox& box,
                                    int num_samples, std::uint64_t seed) {
  require(box.center.size() == model.param_count(), "box center dimension mismatch");
  require(box.radius > 0.0, "box radius must be positive");
  require(num_samples >= 1, "need at least one sample");
  model.check_input(query_x);

  const Eigen::Index n = train.size();
  const Eigen::Index p = model.param_count();
  const double N = static_cast<double>(n) + 2.0;
  const double lam = prior.lambda;
  RandomStream rng(seed);

  // Per-point Hessians at the center, for the local-smoothness ratio. The
  // prior contribution -2 lambda I is constant and cancels in differences.
  std::vector<Mat> center_hess(static_cast<std::size_t>(n), Mat(p, p));
  Mat center_query_hess(p, p);
  for (Eigen::Index i = 0; i < n; ++i)
    model.example_hessian_into(box.center, train.inputs.row(i), train.labels[i],
                               center_hess[static_cast<std::size_t>(i)]);
  model.example_hessian_into(box.center, query_x, query_y, center_query_hess);

  ConstantEstimates est;
  est.num_samples = num_samples;

  Mat hess_buf(p, p);
  Mat hess_sum(p, p);
  Vec grad_buf(p);
  Eigen::SelfAdjointEigenSolver<Mat> eig;

  // Deterministic probes (center and ball-boundary axis points) ahead of the
  // random draws, so nested boxes behave monotonically.
  const Eigen::Index num_probes = 2 * p + 1;
  for (Eigen::Index s = 0; s < num_probes + num_samples; ++s) {
    Vec theta;
    if (s == 0) {
      theta = box.center;
    } else if (s < num_probes) {
      theta = box.center;
      const Eigen::Index axis = (s - 1) / 2;
      theta[axis] += ((s - 1) % 2 == 0 ? box.radius : -box.radius);
    } else {
      theta = sample_in_ball(box, rng);
    }

    hess_sum.setZero();
    double grad_sq = 0.0;   // sum of squared per-point gradient norms
    double hess_sq = 0.0;   // sum of squared per-point Hessian Frobenius norms
    double diff_sq = 0.0;   // same for Hessian differences from the center
    for (Eigen::Index i = 0; i < n; ++i) {
      model.example_grad_into(theta, train.inputs.row(i), train.labels[i], grad_buf);
      grad_buf -= 2.0 * lam * theta;
      grad_sq += grad_buf.squaredNorm();

      model.example_hessian_into(theta, train.inputs.row(i), train.labels[i], hess_buf);
      hess_sum += hess_buf;
      diff_sq += (hess_buf - center_hess[static_cast<std::size_t>(i)]).squaredNorm();
      hess_buf.diagonal().array() -= 2.0 * lam;
      hess_sq += hess_buf.squaredNorm();
    }

    // Query-point loss, appearing twice (opposite signs) in the weighting.
    model.example_grad_into(theta, query_x, query_y, grad_buf);
    grad_buf -= 2.0 * lam * theta;
    grad_sq += 2.0 * grad_buf.squaredNorm();
    const double query_grad_l1 = grad_buf.cwiseAbs().sum();

    model.example_hessian_into(theta, query_x, query_y, hess_buf);
    diff_sq += 2.0 * (hess_buf - center_query_hess).squaredNorm();
    hess_buf.diagonal().array() -= 2.0 * lam;
    hess_sq += 2.0 * hess_buf.squaredNorm();
    const double query_hess_l1 = entrywise_l1(hess_buf);

    // H(theta, 1_w): the +-query pair cancels, leaving the train average.
    Mat h1w = hess_sum;
    h1w.diagonal().array() -= 2.0 * lam * static_cast<double>(n);
    h1w /= N;
    eig.compute(h1w, Eigen::EigenvaluesOnly);
    const double min_abs_eig = eig.eigenvalues().cwiseAbs().minCoeff();
    if (!(min_abs_eig > 1e-300))
      throw Error(ErrorKind::NumericalFailure,
                  "non-degeneracy violated: singular weighted Hessian in the box");
    est.c_op = std::max(est.c_op, 1.0 / min_abs_eig);
    est.c_g = std::max(est.c_g, std::sqrt(grad_sq / N));
    est.c_h = std::max(est.c_h, std::sqrt(hess_sq / N));
    est.delta = std::max(est.delta, std::max(query_grad_l1, query_hess_l1) / (n + 2.0));

    const double dist = (theta - box.center).norm();
    if (dist > 0.0)
      est.l_h = std::max(est.l_h, std::sqrt(diff_sq / N) / dist);
  }

  est.c_w = std::sqrt((static_cast<double>(n) + 5.0) / (static_cast<double>(n) + 2.0));
  est.c_ij = 1.0 + static_cast<double>(p) * est.c_w * est.l_h * est.c_op;
  est.delta_threshold = std::min(box.radius / est.c_op,
                                 1.0 / (static_cast<double>(n) * est.c_ij * est.c_op));
  return est;
}

BoundCertificate certify_parameter_bound(const Classifier& model, const Dataset& train,
                                         const L2Prior& prior, const Vec& x, int y,
                                         const CertifyOptions& opts) {
  require(y >= 0 && y < model.num_classes(), "label out of range");
  const Eigen::Index n = train.size();
  OptimizerConfig tight{opts.fit_tolerance, 0};

  const Vec theta_hat = fit_map(model, train, prior, model.default_init(0), tight);

  // Exact per-label retrains; the largest displacement sizes the box.
  const int k = model.num_classes();
  std::vector<Vec> retrained(static_cast<std::size_t>(k));
  Dataset augmented = train.with_appended(x, 0);
  const Eigen::Index last = augmented.size() - 1;
  double max_disp = 0.0;
  for (int label = 0; label < k; ++label) {
    augmented.labels[last] = label;
    retrained[static_cast<std::size_t>(label)] =
        fit_map(model, augmented, prior, theta_hat, tight);
    max_disp = std::max(
        max_disp, (retrained[static_cast<std::size_t>(label)] - theta_hat).norm());
  }

  ThetaBox box;
  box.center = theta_hat;
  box.radius = std::max(1.5 * max_disp, 1e-6 * (1.0 + theta_hat.norm()));

  ConstantEstimates est = measure_constants(model, train, prior, x, y, box,
                                            opts.num_samples, opts.seed);

  BoundCertificate cert;
  cert.n = n;
  cert.inflation = opts.inflation;
  cert.box_radius = box.radius;
  cert.c_op = est.c_op * opts.inflation;
  cert.c_g = est.c_g * opts.inflation;
  cert.c_h = est.c_h * opts.inflation;
  cert.l_h = est.l_h * opts.inflation;
  cert.delta = est.delta * opts.inflation;
  cert.c_ij = 1.0 + static_cast<double>(model.param_count()) * est.c_w * cert.l_h * cert.c_op;
  cert.delta_threshold =
      std::min(box.radius / cert.c_op,
               1.0 / (static_cast<double>(n) * cert.c_ij * cert.c_op));

  // First-order estimate with the per-example share of the prior folded into
  // the query-point loss gradient, matching the weighted formulation.
  Mat mean_hess = model.hessian_log_likelihood(theta_hat, train) / static_cast<double>(n);
  mean_hess.diagonal().array() -= 2.0 * prior.lambda;
  Vec query_grad = model.example_grad(theta_hat, x, y) - 2.0 * prior.lambda * theta_hat;
  Eigen::LLT<Mat> llt(Mat(-mean_hess));
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::NumericalFailure,
                "mean objective Hessian is not negative definite");
  Vec theta_tilde = theta_hat + llt.solve(query_grad) / static_cast<double>(n);

  cert.lhs = (retrained[static_cast<std::size_t>(y)] - theta_tilde).norm();
  cert.rhs = 2.0 * cert.c_op * cert.c_op * cert.c_ij * cert.delta * cert.delta;
  cert.holds = cert.lhs <= cert.rhs;
  cert.applicable = cert.delta <= cert.delta_threshold;
  return cert;
}

DistBoundCertificate certify_distribution_bound(const Classifier& model,
                                                const Dataset& train,
                                                const L2Prior& prior,
                                                const GaussianPosterior& q,
                                                const Vec& x, const AcnmlConfig& cfg,
                                                double inflation,
                                                double fit_tolerance) {
  OptimizerConfig tight{fit_tolerance, 0};
  const CnmlResult exact = exact_cnml(model, train, x, prior, tight);
  const CnmlResult approx = acnml(model, q, x, cfg);
  const int k = model.num_classes();

  DistBoundCertificate cert;
  cert.k = k;
  cert.inflation = inflation;

  double delta = 0.0;
  double lip = 0.0;
  const int segment_points = 50;
  for (int y = 0; y < k; ++y) {
    const Vec& a = exact.per_label_params[static_cast<std::size_t>(y)];
    const Vec& b = approx.per_label_params[static_cast<std::size_t>(y)];
    delta = std::max(delta, (a - b).norm());
    for (int t = 0; t < segment_points; ++t) {
      const double w = static_cast<double>(t) / (segment_points - 1);
      Vec theta = (1.0 - w) * a + w * b;
      lip = std::max(lip, model.example_grad(theta, x, y).norm());
    }
  }
  cert.delta = delta;
  cert.lipschitz = lip * inflation;

  double lhs = 0.0;
  for (int y = 0; y < k; ++y) {
    const double log_exact = exact.per_label_log_prob[y] - exact.log_normalizer_phi;
    const double log_approx = approx.per_label_log_prob[y] - approx.log_normalizer_phi;
    lhs = std::max(lhs, std::abs(log_exact - log_approx));
  }
  cert.lhs = lhs;
  cert.rhs = (k + 1.0) * cert.lipschitz * cert.delta;
  cert.holds = cert.lhs <= cert.rhs;
  return cert;
}

// ---------------------------------------------------------------------------
// Brute-force NML on finite spaces

void DiscreteModelClass::validate() const {
  require(num_outcomes >= 2, "need at least 2 outcomes");
  require(!grid.empty(), "model grid is empty");
  for (const auto& dist : grid) {
    require(dist.size() == num_outcomes, "grid entry arity mismatch");
    require((dist.array() >= 0.0).all(), "grid entry has negative probability");
    require(std::abs(dist.sum() - 1.0) <= 1e-9, "grid entry does not sum to 1");
  }
}

NmlDistribution brute_force_nml(const DiscreteModelClass& model_class, int seq_len) {
  model_class.validate();
  require(seq_len >= 1, "sequence length must be >= 1");
  const double count =
      std::pow(static_cast<double>(model_class.num_outcomes), seq_len);
  if (count > 1e6)
    throw Error(ErrorKind::CapExceeded,
                "sequence space too large to enumerate (cap 10^6)");
  const Eigen::Index num_seq = static_cast<Eigen::Index>(count);

  NmlDistribution out;
  out.probs.resize(num_seq);
  out.max_log_lik.resize(num_seq);

  std::vector<int> digits(static_cast<std::size_t>(seq_len));
  long double normalizer = 0.0L;
  for (Eigen::Index s = 0; s < num_seq; ++s) {
    Eigen::Index rem = s;
    for (int pos = seq_len - 1; pos >= 0; --pos) {
      digits[static_cast<std::size_t>(pos)] =
          static_cast<int>(rem % model_class.num_outcomes);
      rem /= model_class.num_outcomes;
    }
    double best = 0.0;
    for (const auto& dist : model_class.grid) {
      double lik = 1.0;
      for (int pos = 0; pos < seq_len; ++pos)
        lik *= dist[digits[static_cast<std::size_t>(pos)]];
      best = std::max(best, lik);
    }
    out.probs[s] = best;  // unnormalized for now
    out.max_log_lik[s] = std::log(best);
    normalizer += best;
  }
  require(normalizer > 0.0L, "all sequences have zero maximized likelihood");
  out.probs /= static_cast<double>(normalizer);
  out.log_normalizer = std::log(static_cast<double>(normalizer));
  return out;
}

double nml_regret(const NmlDistribution& nml, const Vec& q, Eigen::Index s) {
  require(q.size() == nml.probs.size(), "distribution arity mismatch");
  require(s >= 0 && s < nml.probs.size(), "sequence index out of range");
  return nml.max_log_lik[s] - std::log(q[s]);
}

}  // namespace cnml
