#pragma once

// Nested k-fold cross-validation harness with a seeded fold assignment, a
// tuning reserve carved from each training fold (unused by the in-scope
// models), and per-fold time-dependent concordance.

#include <string>
#include <vector>

#include "sic/coxph.hpp"
#include "sic/sic_model.hpp"

namespace sic {

struct CvPlan {
  int n_folds = 5;
  double tuning_fraction = 0.10;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_folds < 2) throw ConfigError("cv: n_folds must be >= 2");
    if (tuning_fraction < 0.0 || tuning_fraction >= 1.0)
      throw ConfigError("cv: tuning_fraction must lie in [0,1)");
  }
};

// fold of each row; depends only on (n, n_folds, seed)
std::vector<int> cv_fold_assignment(Index n, int n_folds, std::uint64_t seed);

enum class CvModelKind { CoxPH, Sic };

struct CvFoldResult {
  int fold = 0;
  double c_index = 0.0;
  Index n_test = 0;
  Index n_events = 0;
  bool undefined = false;  // zero test events or no comparable pairs
};

struct CvReport {
  std::vector<CvFoldResult> folds;
  double mean = 0.0;
  double stddev = 0.0;
  int n_defined = 0;
  std::vector<std::string> warnings;
};

// SIC path: one forward pass per fold with the training fold as context;
// sic_model must be non-null for CvModelKind::Sic. Missing numeric values are
// imputed by the training-fold median inside each fold.
CvReport run_cv(const SurvivalDataset& ds, CvModelKind kind, const CvPlan& plan,
                SicModel* sic_model = nullptr, int threads = 1);

// columns fold,c_index_td,n_test,n_events; summary rows last
void write_cv_report_csv(const CvReport& report, const std::string& path);

}  // namespace sic
