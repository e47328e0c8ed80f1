#pragma once

#include <array>
#include <optional>

#include "sic/common.hpp"

namespace sic {

enum class Regime { PH, AFT, AH, EH };

inline const char* regime_name(Regime r) {
  switch (r) {
    case Regime::PH: return "ph";
    case Regime::AFT: return "aft";
    case Regime::AH: return "ah";
    case Regime::EH: return "eh";
  }
  return "?";
}

inline Regime regime_from_name(const std::string& s) {
  if (s == "ph") return Regime::PH;
  if (s == "aft") return Regime::AFT;
  if (s == "ah") return Regime::AH;
  if (s == "eh") return Regime::EH;
  throw DataError("unknown regime: " + s);
}

// Knobs for the whole synthetic pipeline: SCM structure, node functions,
// target scaling, baseline-distribution ranges and censoring intensity.
struct PriorConfig {
  // SCM structure
  int n_features_min = 3;
  int n_features_max = 8;
  int n_nodes_min = 5;
  int n_nodes_max = 32;
  double p_edge_min = 0.1;
  double p_edge_max = 0.5;
  double tree_prob = 0.5;  // per-node probability of a tree-kind function
  double noise_min = 1e-3;
  double noise_max = 0.3;

  // target post-processing
  double signal_min = 0.25;
  double signal_max = 2.0;

  // baseline families
  double alpha_min = 0.5, alpha_max = 5.0;
  double beta_min = 0.5, beta_max = 3.0;
  double gompertz_neg_prob = 0.2;

  // regimes: PH, AFT, AH, EH
  std::array<double, 4> regime_probs = {0.25, 0.25, 0.25, 0.25};
  std::optional<Regime> fixed_regime;  // overrides regime_probs when set

  // censoring
  bool censoring = true;
  double cens_scale_min = 0.5, cens_scale_max = 4.0;
  double admin_q_min = 0.3, admin_q_max = 1.0;

  int max_resample = 16;

  void validate() const {
    if (n_features_min < 1 || n_features_max < n_features_min || n_features_max > 100)
      throw ConfigError("prior: feature count must satisfy 1 <= min <= max <= 100");
    if (n_nodes_min < n_features_min + 2)
      throw ConfigError("prior: node count must be at least features + 2");
    if (n_nodes_max < n_nodes_min) throw ConfigError("prior: n_nodes_max < n_nodes_min");
    if (!(p_edge_min > 0.0) || p_edge_max > 1.0 || p_edge_max < p_edge_min)
      throw ConfigError("prior: edge probability range invalid");
    if (!(noise_min > 0.0) || noise_max < noise_min)
      throw ConfigError("prior: noise range invalid");
    if (signal_min < 0.0 || signal_max < signal_min)
      throw ConfigError("prior: signal range invalid");
    if (!(alpha_min > 0.0) || alpha_max < alpha_min || !(beta_min > 0.0) || beta_max < beta_min)
      throw ConfigError("prior: alpha/beta range invalid");
    double psum = regime_probs[0] + regime_probs[1] + regime_probs[2] + regime_probs[3];
    if (std::abs(psum - 1.0) > 1e-9) throw ConfigError("prior: regime probabilities must sum to 1");
  }
};

}  // namespace sic
