#pragma once

// Prior diagnostics: fit CoxPH on a batch of generated datasets, collect the
// held-out time-dependent concordance distribution and standardized KM curves.

#include <string>
#include <vector>

#include "sic/coxph.hpp"
#include "sic/prior.hpp"

namespace sic {

struct DiagnosticsRow {
  std::uint64_t seed = 0;
  double c_index = 0.0;
  bool fit_failed = false;
  std::string regime;
  std::string family;
  double mean_curvature = 0.0;  // of the standardized KM curve
};

struct DiagnosticsReport {
  std::vector<DiagnosticsRow> rows;
  std::vector<StepFunction> km_curves;  // standardized time scale, per dataset
  int failures = 0;
};

struct DiagnoseOptions {
  Index rows_per_dataset = 256;
  double test_fraction = 0.2;
  int threads = 1;
};

DiagnosticsReport diagnose_prior(const PriorConfig& config, int n_datasets, std::uint64_t seed,
                                 const DiagnoseOptions& opts = {});

void write_cindex_csv(const DiagnosticsReport& report, const std::string& path);
void write_km_bundle_csv(const DiagnosticsReport& report, const std::string& path);

}  // namespace sic
