#pragma once

// End-to-end survival dataset generation: SCM covariates and risk scores,
// extended-hazard event times, independent and administrative censoring.

#include <algorithm>

#include "sic/dataset.hpp"
#include "sic/hazard.hpp"
#include "sic/scm.hpp"

namespace sic {

struct SurvivalParams {
  BaselineFamily baseline;
  Regime regime = Regime::EH;
  double censoring_scale = 1.0;
  double admin_quantile = 1.0;
};

inline SurvivalParams sample_survival_params(const PriorConfig& config, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x5a9d));
  SurvivalParams p;
  p.baseline.family = static_cast<Family>(rng.uniform_int(0, 4));
  p.baseline.alpha = rng.log_uniform(config.alpha_min, config.alpha_max);
  p.baseline.beta = rng.log_uniform(config.beta_min, config.beta_max);
  if (p.baseline.family == Family::Gompertz && rng.bernoulli(config.gompertz_neg_prob)) {
    p.baseline.beta = -p.baseline.beta;
    if (std::abs(p.baseline.beta) < 0.05) p.baseline.beta = -0.05;
  }
  if (config.fixed_regime)
    p.regime = *config.fixed_regime;
  else
    p.regime = static_cast<Regime>(rng.categorical(
        {config.regime_probs[0], config.regime_probs[1], config.regime_probs[2], config.regime_probs[3]}));
  p.censoring_scale = config.censoring
                          ? rng.log_uniform(config.cens_scale_min, config.cens_scale_max)
                          : 0.0;
  p.admin_quantile = rng.uniform(config.admin_q_min, config.admin_q_max);
  return p;
}

// Map the two extracted SCM targets onto the regime's (eta1, eta2) pair.
inline void apply_regime(Regime regime, const Vec& a, const Vec& b, Vec& eta1, Vec& eta2) {
  switch (regime) {
    case Regime::PH: eta1 = Vec::Zero(b.size()); eta2 = b; break;
    case Regime::AFT: eta1 = b; eta2 = b; break;
    case Regime::AH: eta1 = a; eta2 = Vec::Zero(a.size()); break;
    case Regime::EH: eta1 = a; eta2 = b; break;
  }
}

inline double sample_signal_strength(const PriorConfig& config, Rng& rng) {
  if (config.signal_max <= 0.0) return 0.0;
  if (config.signal_min == config.signal_max) return config.signal_min;
  if (config.signal_min <= 0.0) return rng.uniform(config.signal_min, config.signal_max);
  return rng.log_uniform(config.signal_min, config.signal_max);
}

inline SurvivalDataset generate_dataset(const PriorConfig& config, Index n_rows,
                                        std::uint64_t seed) {
  config.validate();
  if (n_rows < 8) throw DomainError("generate_dataset: n_rows must be >= 8");

  for (int attempt = 0; attempt < config.max_resample; ++attempt) {
    std::uint64_t s = derive_seed(seed, 0xda7a, static_cast<std::uint64_t>(attempt));
    try {
      ScmProgram prog = sample_program(config, s);
      RawTable table = execute(prog, n_rows, derive_seed(s, 1));
      Rng rng(derive_seed(s, 2));
      double signal = sample_signal_strength(config, rng);
      ExtractedDataset ex = extract_dataset(table, prog, signal);
      SurvivalParams params = sample_survival_params(config, derive_seed(s, 3));

      Vec eta1, eta2;
      apply_regime(params.regime, ex.eta1, ex.eta2, eta1, eta2);

      Vec t_event(n_rows);
      for (Index i = 0; i < n_rows; ++i)
        t_event[i] = sample_event_time(eta1[i], eta2[i], params.baseline, rng.uniform());

      SurvivalDataset ds;
      ds.X = std::move(ex.X);
      ds.time.resize(n_rows);
      ds.event.resize(n_rows);

      if (config.censoring) {
        Vec t_cens(n_rows);
        for (Index i = 0; i < n_rows; ++i)
          t_cens[i] = params.censoring_scale *
                      sample_event_time(0.0, 0.0, params.baseline, rng.uniform());
        // administrative cutoff at a random quantile of the simulated follow-up
        Vec sorted = t_event;
        std::sort(sorted.data(), sorted.data() + sorted.size());
        Index k = std::min<Index>(n_rows - 1,
                                  static_cast<Index>(params.admin_quantile * double(n_rows)));
        double t_admin = sorted[k];
        for (Index i = 0; i < n_rows; ++i) {
          auto [t, e] = apply_censoring(t_event[i], t_cens[i], t_admin);
          ds.time[i] = t;
          ds.event[i] = e;
        }
      } else {
        ds.time = t_event;
        ds.event.setOnes();
      }

      if (ds.n_events() == 0) continue;  // resample: losses undefined without events

      ds.manifest.source = "generated";
      ds.manifest.family = params.baseline.family;
      ds.manifest.alpha = params.baseline.alpha;
      ds.manifest.beta = params.baseline.beta;
      ds.manifest.regime = params.regime;
      ds.manifest.signal_strength = signal;
      ds.manifest.censoring_scale = params.censoring_scale;
      ds.manifest.admin_quantile = params.admin_quantile;
      ds.manifest.seed = seed;
      ds.manifest.n_rows = n_rows;
      ds.manifest.n_features = ds.X.cols();
      ds.validate();
      return ds;
    } catch (const NumericError&) {
      continue;  // overflow in a pathological draw: resample
    } catch (const GenerationError&) {
      continue;
    }
  }
  throw GenerationError("generate_dataset: retries exhausted");
}

}  // namespace sic
