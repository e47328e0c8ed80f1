#include "sic/coxph.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>

namespace sic {

namespace {

struct SortedData {
  std::vector<Index> order;  // ascending by time
};

SortedData sort_by_time(const Vec& time) {
  SortedData s;
  s.order.resize(static_cast<std::size_t>(time.size()));
  std::iota(s.order.begin(), s.order.end(), Index{0});
  std::stable_sort(s.order.begin(), s.order.end(),
                   [&](Index a, Index b) { return time[a] < time[b]; });
  return s;
}

// Breslow-ties log partial likelihood, gradient and information, evaluated by
// sweeping the risk set from the largest time downward.
void loglik_grad_info(const Mat& X, const Vec& time, const IVec& event, const Vec& beta,
                      const std::vector<Index>& order, double* ll_out, Vec* grad_out,
                      Mat* info_out) {
  const Index n = X.rows(), p = X.cols();
  Vec eta = X * beta;
  Vec w = eta.array().exp();

  double ll = 0.0;
  Vec grad = Vec::Zero(p);
  Mat info = Mat::Zero(p, p);

  double s0 = 0.0;
  Vec s1 = Vec::Zero(p);
  Mat s2 = Mat::Zero(p, p);

  Index i = n;
  while (i > 0) {
    // add everyone at this time to the risk set
    double t = time[order[static_cast<std::size_t>(i - 1)]];
    Index j = i;
    while (j > 0 && time[order[static_cast<std::size_t>(j - 1)]] == t) --j;
    for (Index k = j; k < i; ++k) {
      Index idx = order[static_cast<std::size_t>(k)];
      s0 += w[idx];
      s1 += w[idx] * X.row(idx).transpose();
      s2.noalias() += w[idx] * X.row(idx).transpose() * X.row(idx);
    }
    // process the tied events at t against the full risk set
    Index d = 0;
    for (Index k = j; k < i; ++k) {
      Index idx = order[static_cast<std::size_t>(k)];
      if (!event[idx]) continue;
      ++d;
      ll += eta[idx];
      grad += X.row(idx).transpose();
    }
    if (d > 0) {
      ll -= static_cast<double>(d) * std::log(s0);
      Vec mean = s1 / s0;
      grad -= static_cast<double>(d) * mean;
      info.noalias() += static_cast<double>(d) * (s2 / s0 - mean * mean.transpose());
    }
    i = j;
  }
  if (ll_out) *ll_out = ll;
  if (grad_out) *grad_out = grad;
  if (info_out) *info_out = info;
}

}  // namespace

double cox_partial_loglik(const Mat& X, const Vec& time, const IVec& event, const Vec& beta) {
  auto s = sort_by_time(time);
  double ll;
  loglik_grad_info(X, time, event, beta, s.order, &ll, nullptr, nullptr);
  return ll;
}

CoxModel cox_fit(const Mat& X, const Vec& time, const IVec& event, const CoxOptions& opts) {
  const Index n = X.rows(), p = X.cols();
  if (time.size() != n || event.size() != n) throw DomainError("cox_fit: length mismatch");
  if (event.sum() == 0) throw DomainError("cox_fit: no events");

  // internal standardization; constant columns get scale 1 and stay at beta 0
  Vec mu(p), sd(p);
  for (Index j = 0; j < p; ++j) {
    mu[j] = X.col(j).mean();
    double var = (X.col(j).array() - mu[j]).square().sum() / static_cast<double>(n);
    sd[j] = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  Mat Z = (X.rowwise() - mu.transpose()).array().rowwise() / sd.transpose().array();

  auto s = sort_by_time(time);

  Vec beta = Vec::Zero(p);
  double ll;
  Vec grad(p);
  Mat info(p, p);
  loglik_grad_info(Z, time, event, beta, s.order, &ll, &grad, &info);
  double pll = ll - 0.5 * opts.ridge * beta.squaredNorm();
  Vec pgrad = grad - opts.ridge * beta;

  CoxFitReport report;
  int it = 0;
  for (; it < opts.max_iter; ++it) {
    if (pgrad.cwiseAbs().maxCoeff() < opts.grad_tol) {
      report.converged = true;
      break;
    }
    Mat pinfo = info + opts.ridge * Mat::Identity(p, p);
    Vec step = pinfo.ldlt().solve(pgrad);

    // step-halving: accept only an increase of the penalized likelihood
    double scale = 1.0;
    Vec beta_new;
    double ll_new = 0.0, pll_new = 0.0;
    bool accepted = false;
    for (int h = 0; h < 40; ++h) {
      beta_new = beta + scale * step;
      loglik_grad_info(Z, time, event, beta_new, s.order, &ll_new, nullptr, nullptr);
      pll_new = ll_new - 0.5 * opts.ridge * beta_new.squaredNorm();
      // tolerate rounding noise in the likelihood sum so the final Newton
      // steps near the optimum are not rejected
      if (std::isfinite(pll_new) && pll_new >= pll - 1e-10 * (1.0 + std::abs(pll))) {
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) break;

    beta = beta_new;
    if (beta.cwiseAbs().maxCoeff() > opts.beta_cap) {
      beta = beta.cwiseMax(-opts.beta_cap).cwiseMin(opts.beta_cap);
      report.separation = true;
      loglik_grad_info(Z, time, event, beta, s.order, &ll, &grad, &info);
      pll = ll - 0.5 * opts.ridge * beta.squaredNorm();
      pgrad = grad - opts.ridge * beta;
      break;
    }
    loglik_grad_info(Z, time, event, beta, s.order, &ll, &grad, &info);
    pll = ll - 0.5 * opts.ridge * beta.squaredNorm();
    pgrad = grad - opts.ridge * beta;
  }

  CoxModel model;
  model.beta = (beta.array() / sd.array()).matrix();  // restore original scale
  report.iterations = it;
  report.grad_max_norm = pgrad.cwiseAbs().maxCoeff();
  report.log_partial_likelihood = ll;
  model.fit_report = report;

  // Breslow baseline on the original scale: H0(t) = sum_{t_k <= t} d_k / S0(t_k)
  Vec w = (X * model.beta).array().exp();
  StepFunction h0;
  h0.left_value = 0.0;
  double s0 = 0.0, cum = 0.0;
  Index i = n;
  std::vector<std::pair<double, double>> jumps;  // (time, increment)
  while (i > 0) {
    double t = time[s.order[static_cast<std::size_t>(i - 1)]];
    Index j = i;
    Index d = 0;
    while (j > 0 && time[s.order[static_cast<std::size_t>(j - 1)]] == t) --j;
    for (Index k = j; k < i; ++k) {
      Index idx = s.order[static_cast<std::size_t>(k)];
      s0 += w[idx];
      d += event[idx];
    }
    if (d > 0) jumps.emplace_back(t, static_cast<double>(d) / s0);
    i = j;
  }
  std::reverse(jumps.begin(), jumps.end());
  for (auto& [t, inc] : jumps) {
    cum += inc;
    h0.times.push_back(t);
    h0.values.push_back(cum);
  }
  model.baseline_cum_hazard = std::move(h0);
  return model;
}

StepFunction cox_predict_survival(const CoxModel& model, const Vec& x) {
  double risk = std::exp(model.beta.dot(x));
  StepFunction s;
  s.left_value = 1.0;
  s.times = model.baseline_cum_hazard.times;
  s.values.resize(s.times.size());
  for (std::size_t k = 0; k < s.times.size(); ++k)
    s.values[k] = std::exp(-model.baseline_cum_hazard.values[k] * risk);
  return s;
}

}  // namespace sic
