#pragma once

// Newton-Raphson Cox proportional-hazards fitter with Breslow ties and a
// Breslow baseline cumulative hazard.

#include "sic/dataset.hpp"
#include "sic/survstats.hpp"

namespace sic {

struct CoxFitReport {
  int iterations = 0;
  double grad_max_norm = 0.0;
  double log_partial_likelihood = 0.0;
  bool converged = false;
  bool separation = false;
};

struct CoxModel {
  Vec beta;                          // original covariate scale
  StepFunction baseline_cum_hazard;  // Breslow estimate, left_value 0
  CoxFitReport fit_report;
};

struct CoxOptions {
  double ridge = 1e-6;     // applied on the standardized scale
  double grad_tol = 1e-8;
  int max_iter = 100;
  double beta_cap = 20.0;  // standardized-scale cap; exceeding flags separation
};

CoxModel cox_fit(const Mat& X, const Vec& time, const IVec& event,
                 const CoxOptions& opts = {});

// S(t|x) = exp(-H0(t) * exp(beta'x)); evaluated on the baseline jump times.
StepFunction cox_predict_survival(const CoxModel& model, const Vec& x);

// Breslow-ties partial log-likelihood at beta (original scale, no penalty);
// shared by the fitter and by test oracles.
double cox_partial_loglik(const Mat& X, const Vec& time, const IVec& event, const Vec& beta);

}  // namespace sic
