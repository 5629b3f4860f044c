#include "posterior.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "errors.hpp"

namespace cnml {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

GaussianPosterior GaussianPosterior::diagonal(Vec mean, Vec variances, double alpha) {
  require(mean.size() == variances.size(), "mean/variance size mismatch");
  require((variances.array() > 0.0).all(), "diagonal variances must be positive");
  require(alpha > 0.0, "temperature alpha must be positive");
  GaussianPosterior q;
  q.shape_ = Shape::Diagonal;
  q.mean_ = std::move(mean);
  q.diag_var_ = std::move(variances);
  q.alpha_ = alpha;
  return q;
}

GaussianPosterior GaussianPosterior::full(Vec mean, const Mat& covariance, double alpha) {
  require(covariance.rows() == covariance.cols(), "covariance must be square");
  require(mean.size() == covariance.rows(), "mean/covariance size mismatch");
  Eigen::LLT<Mat> llt(covariance);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::NumericalFailure,
                "covariance is not positive definite (Cholesky failed)");
  return full_from_cholesky(std::move(mean), llt.matrixL(), alpha);
}

GaussianPosterior GaussianPosterior::full_from_cholesky(Vec mean, Mat chol_lower,
                                                        double alpha) {
  require(chol_lower.rows() == chol_lower.cols(), "cholesky factor must be square");
  require(mean.size() == chol_lower.rows(), "mean/cholesky size mismatch");
  require((chol_lower.diagonal().array() > 0.0).all(),
          "cholesky factor needs positive diagonal");
  require(alpha > 0.0, "temperature alpha must be positive");
  GaussianPosterior q;
  q.shape_ = Shape::Full;
  q.mean_ = std::move(mean);
  q.chol_ = std::move(chol_lower);
  q.alpha_ = alpha;
  return q;
}

Mat GaussianPosterior::covariance() const {
  if (shape_ == Shape::Diagonal) return diag_var_.asDiagonal();
  return chol_ * chol_.transpose();
}

void GaussianPosterior::set_temperature_alpha(double alpha) {
  require(alpha > 0.0, "temperature alpha must be positive");
  alpha_ = alpha;
}

double GaussianPosterior::log_density(const Vec& theta) const {
  require(theta.size() == dim(), "dimension mismatch in log_density");
  const Vec delta = theta - mean_;
  if (shape_ == Shape::Diagonal) {
    double quad = (delta.array().square() / diag_var_.array()).sum();
    double logdet = diag_var_.array().log().sum();
    return -0.5 * (quad + logdet + dim() * kLog2Pi);
  }
  Vec z = chol_.triangularView<Eigen::Lower>().solve(delta);
  double logdet = 2.0 * chol_.diagonal().array().log().sum();
  return -0.5 * (z.squaredNorm() + logdet + dim() * kLog2Pi);
}

Vec GaussianPosterior::grad_log_density(const Vec& theta) const {
  require(theta.size() == dim(), "dimension mismatch in grad_log_density");
  const Vec delta = theta - mean_;
  if (shape_ == Shape::Diagonal)
    return -(delta.array() / diag_var_.array()).matrix();
  Vec z = chol_.triangularView<Eigen::Lower>().solve(delta);
  return -chol_.transpose().triangularView<Eigen::Upper>().solve(z);
}

Vec GaussianPosterior::apply_covariance(const Vec& v) const {
  require(v.size() == dim(), "dimension mismatch in apply_covariance");
  if (shape_ == Shape::Diagonal) return (diag_var_.array() * v.array()).matrix();
  return chol_ * (chol_.transpose() * v);
}

Vec GaussianPosterior::sample(RandomStream& rng) const {
  Vec z(dim());
  for (Eigen::Index i = 0; i < dim(); ++i) z[i] = rng.normal();
  if (shape_ == Shape::Diagonal)
    return mean_ + (diag_var_.array().sqrt() * z.array()).matrix();
  return mean_ + chol_ * z;
}

// ---------------------------------------------------------------------------

GaussianPosterior laplace_fit(const Classifier& model, const Dataset& data,
                              const L2Prior& prior, GaussianPosterior::Shape shape,
                              double damping, FitInfo* fit_info,
                              const OptimizerConfig& opt) {
  require(data.size() >= 1, "laplace_fit needs a nonempty dataset");
  Vec mean = fit_map(model, data, prior, model.default_init(0), opt, fit_info);

  const double n = static_cast<double>(data.size());
  // Precision of the summed log posterior: -(H_sum - 2 n lambda I).
  Mat precision = -model.hessian_log_likelihood(mean, data);
  precision.diagonal().array() += 2.0 * n * prior.lambda;

  const double max_diag = precision.diagonal().maxCoeff();
  if (damping < 0.0) damping = 1e-4 * std::max(max_diag, 0.0);
  precision.diagonal().array() += damping;

  if (shape == GaussianPosterior::Shape::Diagonal) {
    Vec pd = precision.diagonal();
    if (!(pd.array() > 0.0).all()) {
      const double smallest = pd.minCoeff();
      throw Error(ErrorKind::NumericalFailure,
                  "laplace precision diagonal not positive after damping; smallest " +
                      std::to_string(smallest));
    }
    return GaussianPosterior::diagonal(std::move(mean), pd.cwiseInverse());
  }

  Eigen::LLT<Mat> llt(precision);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Mat> es(precision, Eigen::EigenvaluesOnly);
    const double smallest = es.eigenvalues().minCoeff();
    throw Error(ErrorKind::NumericalFailure,
                "laplace precision indefinite after damping; smallest eigenvalue " +
                    std::to_string(smallest));
  }
  Mat cov = llt.solve(Mat::Identity(precision.rows(), precision.cols()));
  cov = 0.5 * (cov + cov.transpose()).eval();
  return GaussianPosterior::full(std::move(mean), cov);
}

GaussianPosterior swag_diag_fit(const Classifier& model, const Dataset& data,
                                const L2Prior& prior, const SgdTrajectoryConfig& cfg) {
  require(cfg.num_epochs >= 1, "num_epochs must be >= 1");
  require(cfg.collect_start_epoch < cfg.num_epochs,
          "collect_start_epoch must be below num_epochs");
  require(cfg.batch_size >= 1 && cfg.batch_size <= data.size(),
          "batch_size must be in [1, n]");
  require(cfg.collection_interval >= 1, "collection_interval must be >= 1");
  require(cfg.learning_rate >= 0.0, "learning_rate must be nonnegative");

  const Eigen::Index n = data.size();
  const Eigen::Index p = model.param_count();
  RandomStream rng(cfg.seed);
  Vec theta = model.default_init(cfg.seed);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  Vec sum = Vec::Zero(p);
  Vec sum_sq = Vec::Zero(p);
  long collected = 0;

  for (int epoch = 0; epoch < cfg.num_epochs; ++epoch) {
    // Fisher-Yates with the deterministic stream.
    for (Eigen::Index i = n - 1; i > 0; --i) {
      const Eigen::Index j =
          static_cast<Eigen::Index>(rng.next_below(static_cast<std::uint64_t>(i + 1)));
      std::swap(order[i], order[j]);
    }
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index count = std::min(cfg.batch_size, n - start);
      Vec g = Vec::Zero(p);
      for (Eigen::Index b = 0; b < count; ++b) {
        const Eigen::Index idx = order[static_cast<std::size_t>(start + b)];
        g += model.example_grad(theta, data.inputs.row(idx), data.labels[idx]);
      }
      g /= static_cast<double>(count);
      g -= 2.0 * prior.lambda * theta;
      theta += cfg.learning_rate * g;
      if (!theta.allFinite())
        throw Error(ErrorKind::NumericalFailure, "SGD iterate became non-finite");
    }
    if (epoch >= cfg.collect_start_epoch &&
        (epoch - cfg.collect_start_epoch) % cfg.collection_interval == 0) {
      sum += theta;
      sum_sq += theta.cwiseProduct(theta);
      ++collected;
    }
  }

  if (collected < 2)
    throw Error(ErrorKind::InsufficientData,
                "SGD trajectory collected " + std::to_string(collected) +
                    " iterates; need at least 2");
  Vec mean = sum / static_cast<double>(collected);
  Vec var = sum_sq / static_cast<double>(collected) - mean.cwiseProduct(mean);
  var = var.cwiseMax(kVarianceFloor);
  return GaussianPosterior::diagonal(std::move(mean), std::move(var));
}

GaussianPosterior vi_diag_fit(const Classifier& model, const Dataset& data,
                              const ViConfig& cfg, ViInfo* info) {
  require(cfg.prior_std > 0.0, "prior_std must be positive");
  require(cfg.num_elbo_samples >= 1, "num_elbo_samples must be >= 1");
  require(cfg.num_steps >= 1, "num_steps must be >= 1");

  const Eigen::Index p = model.param_count();
  const double prior_var = cfg.prior_std * cfg.prior_std;
  RandomStream rng(cfg.seed);

  Vec m = model.default_init(cfg.seed);
  Vec rho = Vec::Constant(p, std::log(0.5 * cfg.prior_std));  // rho = log s

  // Adam state for (m, rho).
  Vec m1 = Vec::Zero(2 * p), m2 = Vec::Zero(2 * p);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;

  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(cfg.num_steps));
  const int window = 100;
  double best_smoothed = -std::numeric_limits<double>::infinity();
  int best_step = 0;
  Vec best_m = m, best_rho = rho;

  Vec eps_draw(p);
  for (int step = 0; step < cfg.num_steps; ++step) {
    Vec s = rho.array().exp();
    Vec grad_m = Vec::Zero(p);
    Vec grad_rho = Vec::Zero(p);
    double like_acc = 0.0;
    for (int smp = 0; smp < cfg.num_elbo_samples; ++smp) {
      for (Eigen::Index i = 0; i < p; ++i) eps_draw[i] = rng.normal();
      Vec theta = m + s.cwiseProduct(eps_draw);
      double ll = model.log_likelihood(theta, data);
      Vec gll = model.grad_log_likelihood(theta, data);
      like_acc += ll;
      grad_m += gll;
      grad_rho += gll.cwiseProduct(s.cwiseProduct(eps_draw));
    }
    const double inv_s = 1.0 / cfg.num_elbo_samples;
    grad_m *= inv_s;
    grad_rho *= inv_s;
    like_acc *= inv_s;

    // KL(q || N(0, prior_var I)) and its gradient.
    Vec s2 = s.cwiseProduct(s);
    const double kl = (0.5 * (s2.array() + m.array().square()) / prior_var -
                       rho.array() + std::log(cfg.prior_std) - 0.5)
                          .sum();
    grad_m -= m / prior_var;
    grad_rho += (1.0 - s2.array() / prior_var).matrix();

    const double elbo = like_acc - kl;
    if (!std::isfinite(elbo))
      throw Error(ErrorKind::NumericalFailure, "ELBO became non-finite");
    trace.push_back(elbo);

    // Adam ascent step on the stacked parameters.
    const double corr1 = 1.0 - std::pow(b1, step + 1);
    const double corr2 = 1.0 - std::pow(b2, step + 1);
    for (Eigen::Index i = 0; i < 2 * p; ++i) {
      const double g = (i < p) ? grad_m[i] : grad_rho[i - p];
      m1[i] = b1 * m1[i] + (1 - b1) * g;
      m2[i] = b2 * m2[i] + (1 - b2) * g * g;
      const double upd = cfg.learning_rate * (m1[i] / corr1) /
                         (std::sqrt(m2[i] / corr2) + eps);
      if (i < p)
        m[i] += upd;
      else
        rho[i - p] += upd;
    }

    const int have = std::min<int>(window, static_cast<int>(trace.size()));
    double smoothed = 0.0;
    for (int w = 0; w < have; ++w) smoothed += trace[trace.size() - 1 - w];
    smoothed /= have;
    if (smoothed > best_smoothed) {
      best_smoothed = smoothed;
      best_step = step;
      best_m = m;
      best_rho = rho;
    }
  }

  if (info) {
    info->elbo_trace = std::move(trace);
    info->best_smoothed_elbo = best_smoothed;
    info->best_step = best_step;
  }
  Vec var = best_rho.array().exp().square().max(kVarianceFloor);
  return GaussianPosterior::diagonal(std::move(best_m), std::move(var));
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr char kMagic[8] = {'C', 'N', 'M', 'L', 'P', 'O', 'S', 'T'};
constexpr std::uint32_t kVersion = 1;

void write_bytes(std::ofstream& out, const void* data, std::size_t len) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
}

void read_bytes(std::ifstream& in, void* data, std::size_t len, const std::string& path) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(len));
  if (static_cast<std::size_t>(in.gcount()) != len)
    throw Error(ErrorKind::ParseError, path + ": truncated posterior file");
}

}  // namespace

void save_posterior(const GaussianPosterior& q, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write posterior file: " + path);
  write_bytes(out, kMagic, sizeof(kMagic));
  std::uint32_t version = kVersion;
  std::uint32_t kind = (q.shape() == GaussianPosterior::Shape::Diagonal) ? 0u : 1u;
  std::uint64_t p = static_cast<std::uint64_t>(q.dim());
  double alpha = q.temperature_alpha();
  write_bytes(out, &version, sizeof(version));
  write_bytes(out, &kind, sizeof(kind));
  write_bytes(out, &p, sizeof(p));
  write_bytes(out, &alpha, sizeof(alpha));
  write_bytes(out, q.mean().data(), sizeof(double) * p);
  if (kind == 0) {
    write_bytes(out, q.diagonal_variances().data(), sizeof(double) * p);
  } else {
    const Mat& chol = q.cholesky_lower();
    for (std::uint64_t i = 0; i < p; ++i)
      for (std::uint64_t j = 0; j <= i; ++j) {
        double v = chol(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        write_bytes(out, &v, sizeof(v));
      }
  }
  if (!out) throw Error(ErrorKind::IoError, "failed writing posterior file: " + path);
}

GaussianPosterior load_posterior(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open posterior file: " + path);
  char magic[8];
  read_bytes(in, magic, sizeof(magic), path);
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw Error(ErrorKind::ParseError, path + ": not a posterior file");
  std::uint32_t version = 0, kind = 0;
  std::uint64_t p = 0;
  double alpha = 1.0;
  read_bytes(in, &version, sizeof(version), path);
  if (version != kVersion)
    throw Error(ErrorKind::ParseError, path + ": unsupported posterior version");
  read_bytes(in, &kind, sizeof(kind), path);
  read_bytes(in, &p, sizeof(p), path);
  read_bytes(in, &alpha, sizeof(alpha), path);
  Vec mean(static_cast<Eigen::Index>(p));
  read_bytes(in, mean.data(), sizeof(double) * p, path);
  if (kind == 0) {
    Vec var(static_cast<Eigen::Index>(p));
    read_bytes(in, var.data(), sizeof(double) * p, path);
    return GaussianPosterior::diagonal(std::move(mean), std::move(var), alpha);
  }
  Mat chol = Mat::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  for (std::uint64_t i = 0; i < p; ++i)
    for (std::uint64_t j = 0; j <= i; ++j) {
      double v;
      read_bytes(in, &v, sizeof(v), path);
      chol(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
  return GaussianPosterior::full_from_cholesky(std::move(mean), std::move(chol), alpha);
}

}  // namespace cnml
