#include "calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "errors.hpp"

namespace cnml {

namespace {

int argmax_label(const Vec& probs) {
  int best = 0;
  for (Eigen::Index c = 1; c < probs.size(); ++c)
    if (probs[c] > probs[best]) best = static_cast<int>(c);
  return best;
}

void check_records(const std::vector<EvaluationRecord>& records) {
  require(!records.empty(), "empty record list");
  const Eigen::Index k = records.front().probs.size();
  require(k >= 2, "records need k >= 2 probabilities");
  for (const auto& r : records) {
    require(r.probs.size() == k, "inconsistent record arity");
    require(r.true_label >= 0 && r.true_label < k, "true_label out of range");
  }
}

// Equal-mass bin sizes: counts differ by at most one and the remainder goes
// one-each into the lowest bins.
std::vector<Eigen::Index> bin_sizes(Eigen::Index n, int num_bins) {
  const Eigen::Index base = n / num_bins;
  const Eigen::Index rem = n % num_bins;
  std::vector<Eigen::Index> sizes(static_cast<std::size_t>(num_bins), base);
  for (Eigen::Index i = 0; i < rem; ++i) ++sizes[static_cast<std::size_t>(i)];
  return sizes;
}

}  // namespace

CalibrationReport evaluate(const std::vector<EvaluationRecord>& records, int num_bins) {
  check_records(records);
  require(num_bins >= 1, "num_bins must be >= 1");
  const Eigen::Index n = static_cast<Eigen::Index>(records.size());

  std::vector<Eigen::Index> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> confidence(records.size());
  std::vector<int> correct(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    confidence[i] = records[i].probs.maxCoeff();
    correct[i] = (argmax_label(records[i].probs) == records[i].true_label) ? 1 : 0;
  }
  // Stable in the original record order for ties.
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return confidence[static_cast<std::size_t>(a)] < confidence[static_cast<std::size_t>(b)];
  });

  CalibrationReport report;
  report.bins.resize(static_cast<std::size_t>(num_bins));
  const auto sizes = bin_sizes(n, num_bins);
  Eigen::Index pos = 0;
  double ece = 0.0;
  for (int b = 0; b < num_bins; ++b) {
    auto& bin = report.bins[static_cast<std::size_t>(b)];
    bin.count = sizes[static_cast<std::size_t>(b)];
    double conf_sum = 0.0, acc_sum = 0.0;
    for (Eigen::Index j = 0; j < bin.count; ++j, ++pos) {
      const std::size_t idx = static_cast<std::size_t>(order[static_cast<std::size_t>(pos)]);
      conf_sum += confidence[idx];
      acc_sum += correct[idx];
    }
    if (bin.count > 0) {
      bin.mean_confidence = conf_sum / static_cast<double>(bin.count);
      bin.mean_accuracy = acc_sum / static_cast<double>(bin.count);
      ece += (static_cast<double>(bin.count) / static_cast<double>(n)) *
             std::abs(bin.mean_accuracy - bin.mean_confidence);
    }
  }
  report.ece = ece;
  report.nll = nll_of(records);
  report.accuracy = accuracy_of(records);
  return report;
}

double nll_of(const std::vector<EvaluationRecord>& records) {
  check_records(records);
  long double total = 0.0L;
  for (const auto& r : records) total += -std::log(r.probs[r.true_label]);
  return static_cast<double>(total / static_cast<long double>(records.size()));
}

double accuracy_of(const std::vector<EvaluationRecord>& records) {
  check_records(records);
  Eigen::Index hits = 0;
  for (const auto& r : records)
    if (argmax_label(r.probs) == r.true_label) ++hits;
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

PhiDiagnostics phi_diagnostics(const std::vector<EvaluationRecord>& records,
                               int num_bins) {
  check_records(records);
  require(num_bins >= 1, "num_bins must be >= 1");
  for (const auto& r : records)
    if (!r.phi)
      throw Error(ErrorKind::ContractViolation, "record is missing phi");

  std::vector<Eigen::Index> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return *records[static_cast<std::size_t>(a)].phi <
           *records[static_cast<std::size_t>(b)].phi;
  });

  PhiDiagnostics diag;
  const double lo = *records[static_cast<std::size_t>(order.front())].phi;
  const double hi = *records[static_cast<std::size_t>(order.back())].phi;

  // Equal-mass accuracy curve; a constant phi collapses to one bin.
  if (lo == hi) {
    PhiBin bin;
    bin.count = static_cast<Eigen::Index>(records.size());
    bin.mean_phi = lo;
    bin.accuracy = accuracy_of(records);
    diag.accuracy_bins.push_back(bin);
  } else {
    const auto sizes = bin_sizes(static_cast<Eigen::Index>(records.size()), num_bins);
    Eigen::Index pos = 0;
    for (int b = 0; b < num_bins; ++b) {
      PhiBin bin;
      bin.count = sizes[static_cast<std::size_t>(b)];
      double phi_sum = 0.0, acc_sum = 0.0;
      for (Eigen::Index j = 0; j < bin.count; ++j, ++pos) {
        const auto& r = records[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])];
        phi_sum += *r.phi;
        acc_sum += (argmax_label(r.probs) == r.true_label) ? 1.0 : 0.0;
      }
      if (bin.count > 0) {
        bin.mean_phi = phi_sum / static_cast<double>(bin.count);
        bin.accuracy = acc_sum / static_cast<double>(bin.count);
      }
      diag.accuracy_bins.push_back(bin);
    }
  }

  // Shared uniform-width histogram over [lo, hi].
  diag.histogram.lo = lo;
  diag.histogram.hi = hi;
  diag.histogram.correct.assign(static_cast<std::size_t>(num_bins), 0);
  diag.histogram.incorrect.assign(static_cast<std::size_t>(num_bins), 0);
  for (const auto& r : records) {
    int b = 0;
    if (hi > lo) {
      b = static_cast<int>((*r.phi - lo) / (hi - lo) * num_bins);
      b = std::min(b, num_bins - 1);
    }
    if (argmax_label(r.probs) == r.true_label)
      ++diag.histogram.correct[static_cast<std::size_t>(b)];
    else
      ++diag.histogram.incorrect[static_cast<std::size_t>(b)];
  }
  return diag;
}

}  // namespace cnml
