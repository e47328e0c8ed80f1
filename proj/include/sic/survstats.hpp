#pragma once

// Model-agnostic survival statistics: Kaplan-Meier, quantile time bins,
// time-dependent concordance and diagnostics helpers.

#include <algorithm>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "sic/dataset.hpp"

namespace sic {

// Right-continuous piecewise-constant curve; before the first jump the value
// is left_value (1.0 for survival curves).
struct StepFunction {
  std::vector<double> times;   // strictly increasing
  std::vector<double> values;  // value on [times[k], times[k+1])
  double left_value = 1.0;

  double operator()(double t) const {
    auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return left_value;
    return values[static_cast<std::size_t>(it - times.begin()) - 1];
  }
};

struct BinEdges {
  std::vector<double> edges;  // n_bins+1 entries; edges[0]=0, last = +inf
  int merged_bins = 0;        // duplicate quantiles collapsed during construction

  int n_bins() const { return static_cast<int>(edges.size()) - 1; }

  // right-open intervals [e_k, e_{k+1}); total over positive reals
  int bin_of(double t) const {
    auto it = std::upper_bound(edges.begin(), edges.end(), t);
    int k = static_cast<int>(it - edges.begin()) - 1;
    return std::clamp(k, 0, n_bins() - 1);
  }
};

// Empirical quantile with linear interpolation of the empirical CDF
// (h = p*n over the order statistics), so p = k/n lands exactly on x_(k).
inline double empirical_quantile(std::vector<double> sorted, double p) {
  const Index n = static_cast<Index>(sorted.size());
  if (n == 0) throw DomainError("empirical_quantile: empty sample");
  double h = p * static_cast<double>(n);
  if (h <= 1.0) return sorted.front();
  if (h >= static_cast<double>(n)) return sorted.back();
  Index i = static_cast<Index>(std::floor(h));  // 1-based lower order statistic
  double frac = h - static_cast<double>(i);
  return sorted[i - 1] + frac * (sorted[i] - sorted[i - 1]);
}

inline BinEdges quantile_bins(const Vec& time, int n_bins) {
  if (n_bins < 2) throw DomainError("quantile_bins: n_bins must be >= 2");
  if (time.size() == 0) throw DomainError("quantile_bins: empty time vector");
  std::vector<double> sorted(time.data(), time.data() + time.size());
  std::sort(sorted.begin(), sorted.end());

  BinEdges be;
  be.edges.push_back(0.0);
  double prev = 0.0;
  for (int k = 1; k < n_bins; ++k) {
    double q = empirical_quantile(sorted, static_cast<double>(k) / n_bins);
    if (q <= prev) {
      ++be.merged_bins;  // duplicate-heavy times: effective bins merge
      continue;
    }
    be.edges.push_back(q);
    prev = q;
  }
  be.edges.push_back(std::numeric_limits<double>::infinity());
  return be;
}

inline StepFunction kaplan_meier(const Vec& time, const IVec& event) {
  const Index n = time.size();
  if (n == 0) throw DomainError("kaplan_meier: empty input");
  if (event.size() != n) throw DomainError("kaplan_meier: length mismatch");

  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return time[a] < time[b]; });

  StepFunction s;
  double surv = 1.0;
  Index i = 0;
  Index at_risk = n;
  while (i < n) {
    double t = time[order[i]];
    Index d = 0, c = 0;
    while (i < n && time[order[i]] == t) {
      (event[order[i]] ? d : c) += 1;
      ++i;
    }
    if (d > 0) {
      surv *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
      s.times.push_back(t);
      s.values.push_back(surv);
    }
    at_risk -= d + c;
  }
  return s;
}

// Time-dependent concordance (Antolini). surv(j, t) must return the predicted
// survival of subject j at time t. Pairs (i, j) with t_i < t_j and e_i = 1
// are comparable; survival ties count one half.
inline double c_index_td(const std::function<double(Index, double)>& surv, const Vec& time,
                         const IVec& event) {
  const Index n = time.size();
  if (event.size() != n) throw DomainError("c_index_td: length mismatch");
  double num = 0.0;
  std::int64_t pairs = 0;
  for (Index i = 0; i < n; ++i) {
    if (!event[i]) continue;
    double si = surv(i, time[i]);
    for (Index j = 0; j < n; ++j) {
      if (time[j] <= time[i]) continue;
      double sj = surv(j, time[i]);
      ++pairs;
      if (si < sj)
        num += 1.0;
      else if (si == sj)
        num += 0.5;
    }
  }
  if (pairs == 0) throw DomainError("c_index_td: no comparable pairs");
  return num / static_cast<double>(pairs);
}

inline double c_index_td(const std::vector<StepFunction>& curves, const Vec& time,
                         const IVec& event) {
  return c_index_td([&](Index j, double t) { return curves[static_cast<std::size_t>(j)](t); },
                    time, event);
}

// Divide times by the maximum observed time (diagnostics display only).
inline SurvivalDataset standardize_times(const SurvivalDataset& ds) {
  if (ds.time.size() == 0) return ds;
  double tmax = ds.time.maxCoeff();
  if (!(tmax > 0.0)) throw DomainError("standardize_times: max time must be > 0");
  SurvivalDataset out = ds;
  out.time /= tmax;
  return out;
}

// Two-sided Kolmogorov-Smirnov test of a sample against a continuous CDF.
inline double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    double f = cdf(sample[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
  }
  return d;
}

inline double ks_pvalue(double d, std::size_t n) {
  double sqn = std::sqrt(static_cast<double>(n));
  double lambda = (sqn + 0.12 + 0.11 / sqn) * d;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    double term = 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-12) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

}  // namespace sic
