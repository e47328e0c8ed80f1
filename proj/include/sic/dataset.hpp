#pragma once

#include <string>

#include "sic/common.hpp"
#include "sic/hazard.hpp"
#include "sic/prior_config.hpp"

namespace sic {

// Generation record (or ingestion record for real data); serialized as the
// JSON sidecar next to each dataset CSV.
struct Manifest {
  std::string source = "generated";  // "generated" | "real" | "unknown"
  Family family = Family::Weibull;
  double alpha = 1.0, beta = 1.0;
  Regime regime = Regime::EH;
  double signal_strength = 1.0;
  double censoring_scale = 0.0;  // 0 = censoring disabled
  double admin_quantile = 1.0;
  std::uint64_t seed = 0;
  Index n_rows = 0;
  Index n_features = 0;
};

struct SurvivalDataset {
  Mat X;        // n x d covariates
  Vec time;     // observed times, > 0
  IVec event;   // 1 = event, 0 = censored
  Manifest manifest;

  Index rows() const { return X.rows(); }
  Index features() const { return X.cols(); }

  void validate() const {
    if (time.size() != X.rows() || event.size() != X.rows())
      throw DataError("dataset: inconsistent row counts");
    for (Index i = 0; i < time.size(); ++i) {
      if (!(time[i] > 0.0) || !std::isfinite(time[i]))
        throw DataError("dataset: time must be positive and finite at row " + std::to_string(i));
      if (event[i] != 0 && event[i] != 1)
        throw DataError("dataset: event must be 0 or 1 at row " + std::to_string(i));
    }
  }

  Index n_events() const {
    Index k = 0;
    for (Index i = 0; i < event.size(); ++i) k += event[i];
    return k;
  }
};

}  // namespace sic
