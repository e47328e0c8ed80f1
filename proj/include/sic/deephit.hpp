#pragma once

// Discrete-time survival head mathematics: PMF/survival reconstruction and
// the likelihood + ranking loss over admissible pairs.

#include <vector>

#include "sic/common.hpp"
#include "sic/survstats.hpp"

namespace sic {

struct DiscreteSurvival {
  BinEdges bins;
  Mat pmf;  // n_subjects x n_bins, rows sum to 1

  // S_k = 1 - sum_{j<=k} p_j for one subject
  Vec survival_row(Index i) const {
    Vec s(pmf.cols());
    double cum = 0.0;
    for (Index k = 0; k < pmf.cols(); ++k) {
      cum += pmf(i, k);
      s[k] = 1.0 - cum;
    }
    return s;
  }

  // step-function survival lookup over the bin edges (right-continuous)
  double survival_at(Index i, double t) const {
    int k = bins.bin_of(t);
    double cum = 0.0;
    for (int j = 0; j <= k; ++j) cum += pmf(i, j);
    return 1.0 - cum;
  }

  // Step curve consistent with survival_at: on bin k the value is 1 - F(k).
  StepFunction curve(Index i) const {
    StepFunction s;
    Vec sr = survival_row(i);
    s.left_value = sr[0];
    for (int k = 1; k < bins.n_bins(); ++k) {
      s.times.push_back(bins.edges[static_cast<std::size_t>(k)]);
      s.values.push_back(sr[k]);
    }
    return s;
  }
};

constexpr double kProbClamp = 1e-7;

inline Mat pmf_from_logits(const Mat& logits) {
  Mat pmf(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    double m = logits.row(i).maxCoeff();
    double z = 0.0;
    for (Index k = 0; k < logits.cols(); ++k) {
      pmf(i, k) = std::exp(logits(i, k) - m);
      z += pmf(i, k);
    }
    pmf.row(i) /= z;
  }
  return pmf;
}

inline Vec survival_curve(const Vec& pmf_row) {
  Vec s(pmf_row.size());
  double cum = 0.0;
  for (Index k = 0; k < pmf_row.size(); ++k) {
    cum += pmf_row[k];
    s[k] = 1.0 - cum;
  }
  return s;
}

// -mean_i [ e_i log p_{i,t_i} + (1-e_i) log(1 - F_i(t_i)) ], probabilities
// clamped at kProbClamp before the log. The censored CDF sum includes the
// censoring bin itself.
inline double nll_loss(const Mat& pmf, const IVec& bin_idx, const IVec& event) {
  const Index n = pmf.rows();
  if (n == 0) throw DomainError("nll_loss: empty input");
  double loss = 0.0;
  for (Index i = 0; i < n; ++i) {
    int k = bin_idx[i];
    if (k < 0 || k >= pmf.cols()) throw DomainError("nll_loss: bin index out of range");
    if (event[i]) {
      loss -= std::log(std::max(pmf(i, k), kProbClamp));
    } else {
      double cum = 0.0;
      for (int j = 0; j <= k; ++j) cum += pmf(i, j);
      loss -= std::log(std::max(1.0 - cum, kProbClamp));
    }
  }
  return loss / static_cast<double>(n);
}

// Admissible pairs: subject i had an event in bin t_i and subject j outlived
// it (t_j > t_i, or censored at t_i).
inline bool admissible_pair(int bin_i, int event_i, int bin_j, int event_j) {
  if (!event_i) return false;
  return bin_j > bin_i || (bin_j == bin_i && !event_j);
}

inline double rank_loss(const Mat& pmf, const IVec& bin_idx, const IVec& event, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("rank_loss: sigma must be > 0");
  const Index n = pmf.rows();
  Vec cdf_at(n);
  for (Index i = 0; i < n; ++i) {
    double cum = 0.0;
    for (int j = 0; j <= bin_idx[i]; ++j) cum += pmf(i, j);
    cdf_at[i] = cum;
  }
  double sum = 0.0;
  std::int64_t pairs = 0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (i == j || !admissible_pair(bin_idx[i], event[i], bin_idx[j], event[j])) continue;
      double cum_j = 0.0;
      for (int k = 0; k <= bin_idx[i]; ++k) cum_j += pmf(j, k);
      sum += std::exp(-(cdf_at[i] - cum_j) / sigma);
      ++pairs;
    }
  }
  if (pairs == 0) return 0.0;  // all-censored minibatch: pure-NLL fallback
  return sum / static_cast<double>(pairs);
}

inline double deephit_loss(const Mat& pmf, const IVec& bin_idx, const IVec& event, double alpha,
                           double sigma) {
  if (alpha < 0.0 || alpha > 1.0) throw DomainError("deephit_loss: alpha must lie in [0,1]");
  return alpha * nll_loss(pmf, bin_idx, event) + (1.0 - alpha) * rank_loss(pmf, bin_idx, event, sigma);
}

}  // namespace sic
