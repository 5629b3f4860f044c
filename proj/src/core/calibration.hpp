#ifndef CNML_CORE_CALIBRATION_HPP
#define CNML_CORE_CALIBRATION_HPP

#include <optional>
#include <vector>

#include "data.hpp"

namespace cnml {

struct EvaluationRecord {
  Vec probs;
  int true_label = 0;
  std::optional<double> phi;
};

struct CalibrationBin {
  double mean_confidence = 0.0;
  double mean_accuracy = 0.0;
  Eigen::Index count = 0;
};

struct CalibrationReport {
  double ece = 0.0;
  double nll = 0.0;       // mean negative log-likelihood of the true labels
  double accuracy = 0.0;  // argmax accuracy, lowest index wins ties
  std::vector<CalibrationBin> bins;
};

// Equal-mass confidence binning: records sorted by (max prob, index), split
// into num_bins bins whose counts differ by at most one, with the remainder
// going one-each to the lowest-confidence bins.
// ECE = sum_i (count_i / n) * |accuracy_i - confidence_i|.
CalibrationReport evaluate(const std::vector<EvaluationRecord>& records,
                           int num_bins = 20);

double nll_of(const std::vector<EvaluationRecord>& records);
double accuracy_of(const std::vector<EvaluationRecord>& records);

struct PhiBin {
  double mean_phi = 0.0;
  double accuracy = 0.0;
  Eigen::Index count = 0;
};

struct PhiHistogram {
  double lo = 0.0;
  double hi = 0.0;  // uniform-width bins over [lo, hi]; degenerate range uses bin 0
  std::vector<Eigen::Index> correct;
  std::vector<Eigen::Index> incorrect;
};

struct PhiDiagnostics {
  std::vector<PhiBin> accuracy_bins;  // equal-mass in phi
  PhiHistogram histogram;             // shared binning for correct/incorrect
};

// Confidence diagnostics on the log-normalizer phi: accuracy over equal-mass
// phi bins, plus correct/incorrect histograms over a shared uniform binning.
// Every record must carry phi. When all phi values coincide the equal-mass
// curve collapses to a single bin at the overall accuracy.
PhiDiagnostics phi_diagnostics(const std::vector<EvaluationRecord>& records,
                               int num_bins = 20);

}  // namespace cnml

#endif
