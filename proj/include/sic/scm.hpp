#pragma once

// Structural causal model sampling and execution. A program is a DAG whose
// nodes are computed in topological order as g(parents) + noise; selected
// columns become covariates X and the two risk-score targets (eta1, eta2).

#include <algorithm>
#include <numeric>
#include <vector>

#include "sic/common.hpp"
#include "sic/prior_config.hpp"

namespace sic {

struct DagSpec {
  int n_nodes = 0;
  std::vector<std::pair<int, int>> edges;  // (parent, child), parent < child
  enum class NodeKind { Mlp, Tree };
  std::vector<NodeKind> node_kinds;

  bool acyclic() const {
    for (auto [p, c] : edges)
      if (!(p >= 0 && p < c && c < n_nodes)) return false;
    return true;
  }
};

enum class Activation { Identity, Tanh, Rectifier, Sine };

struct MlpFunction {
  // 1-2 layers of random weights over the parent vector
  std::vector<Mat> weights;
  std::vector<Vec> biases;
  Activation act = Activation::Identity;
};

struct TreeSplit {
  int parent_slot = 0;  // index into the node's parent list
  double threshold = 0.0;
  double leaf_lo = 0.0, leaf_hi = 0.0;
};

enum class RootKind { Normal, Uniform, Categorical };

struct ScmNode {
  std::vector<int> parents;
  DagSpec::NodeKind kind = DagSpec::NodeKind::Mlp;
  MlpFunction mlp;                // kind == Mlp
  std::vector<TreeSplit> splits;  // kind == Tree
  double noise_scale = 0.0;
  RootKind root_kind = RootKind::Normal;  // used when parents empty
  int root_categories = 2;                // Categorical roots
};

struct ScmProgram {
  DagSpec dag;
  std::vector<ScmNode> nodes;
  std::vector<int> feature_indices;
  std::vector<int> target_indices;  // exactly two: (eta1, eta2)
  std::uint64_t program_seed = 0;
};

struct RawTable {
  Mat values;  // n_rows x n_nodes
  std::uint64_t program_seed = 0;
};

inline double apply_activation(Activation a, double x) {
  switch (a) {
    case Activation::Identity: return x;
    case Activation::Tanh: return std::tanh(x);
    case Activation::Rectifier: return x > 0.0 ? x : 0.05 * x;
    case Activation::Sine: return std::sin(x);
  }
  return x;
}

namespace detail {
constexpr double kNodeClamp = 100.0;

inline MlpFunction sample_mlp(Rng& rng, int n_parents) {
  MlpFunction f;
  int n_layers = static_cast<int>(rng.uniform_int(1, 2));
  int hidden = static_cast<int>(rng.uniform_int(2, 4));
  f.act = static_cast<Activation>(rng.uniform_int(0, 3));
  int in = n_parents;
  for (int l = 0; l < n_layers; ++l) {
    int out = (l == n_layers - 1) ? 1 : hidden;
    Mat w(out, in);
    Vec b(out);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal() / std::sqrt(double(in));
    for (Index i = 0; i < out; ++i) b[i] = 0.2 * rng.normal();
    f.weights.push_back(std::move(w));
    f.biases.push_back(std::move(b));
    in = out;
  }
  return f;
}

inline std::vector<TreeSplit> sample_splits(Rng& rng, int n_parents) {
  int n_splits = static_cast<int>(rng.uniform_int(2, 4));
  std::vector<TreeSplit> splits(n_splits);
  for (auto& s : splits) {
    s.parent_slot = static_cast<int>(rng.uniform_int(0, n_parents - 1));
    s.threshold = rng.normal();
    s.leaf_lo = rng.normal();
    s.leaf_hi = rng.normal();
  }
  return splits;
}
}  // namespace detail

inline ScmProgram sample_program(const PriorConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(derive_seed(seed, 0x5c31));

  ScmProgram prog;
  prog.program_seed = seed;
  int n_features = static_cast<int>(rng.uniform_int(config.n_features_min, config.n_features_max));
  int n_nodes_lo = std::max(config.n_nodes_min, n_features + 2);
  int n_nodes = static_cast<int>(rng.uniform_int(n_nodes_lo, std::max(n_nodes_lo, config.n_nodes_max)));
  double p_edge = rng.uniform(config.p_edge_min, config.p_edge_max);

  prog.dag.n_nodes = n_nodes;
  prog.nodes.resize(n_nodes);
  for (int c = 1; c < n_nodes; ++c)
    for (int p = 0; p < c; ++p)
      if (rng.bernoulli(p_edge)) {
        prog.dag.edges.emplace_back(p, c);
        prog.nodes[c].parents.push_back(p);
      }

  for (int i = 0; i < n_nodes; ++i) {
    ScmNode& node = prog.nodes[i];
    node.noise_scale = rng.log_uniform(config.noise_min, config.noise_max);
    if (node.parents.empty()) {
      int rk = static_cast<int>(rng.uniform_int(0, 2));
      node.root_kind = static_cast<RootKind>(rk);
      if (node.root_kind == RootKind::Categorical)
        node.root_categories = static_cast<int>(rng.uniform_int(2, 8));
      node.kind = DagSpec::NodeKind::Mlp;
    } else {
      node.kind = rng.bernoulli(config.tree_prob) ? DagSpec::NodeKind::Tree : DagSpec::NodeKind::Mlp;
      int np = static_cast<int>(node.parents.size());
      if (node.kind == DagSpec::NodeKind::Mlp)
        node.mlp = detail::sample_mlp(rng, np);
      else
        node.splits = detail::sample_splits(rng, np);
    }
    prog.dag.node_kinds.push_back(node.kind);
  }

  // features: random subset; targets: two further nodes, non-root preferred
  std::vector<int> order(n_nodes);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  prog.feature_indices.assign(order.begin(), order.begin() + n_features);
  std::sort(prog.feature_indices.begin(), prog.feature_indices.end());

  std::vector<int> rest(order.begin() + n_features, order.end());
  std::stable_partition(rest.begin(), rest.end(),
                        [&](int i) { return !prog.nodes[i].parents.empty(); });
  prog.target_indices = {rest[0], rest[1]};
  return prog;
}

inline RawTable execute(const ScmProgram& program, Index n_rows, std::uint64_t seed) {
  if (n_rows < 1) throw DomainError("execute: n_rows must be >= 1");
  Rng rng(derive_seed(seed, 0xe8ec));

  const int n_nodes = program.dag.n_nodes;
  Mat values(n_rows, n_nodes);
  Vec pvals;
  for (int c = 0; c < n_nodes; ++c) {
    const ScmNode& node = program.nodes[c];
    for (Index r = 0; r < n_rows; ++r) {
      double v;
      if (node.parents.empty()) {
        switch (node.root_kind) {
          case RootKind::Normal: v = rng.normal(); break;
          case RootKind::Uniform: v = rng.uniform(-1.0, 1.0); break;
          case RootKind::Categorical:
            v = static_cast<double>(rng.uniform_int(0, node.root_categories - 1));
            break;
          default: v = 0.0;
        }
      } else {
        pvals.resize(static_cast<Index>(node.parents.size()));
        for (std::size_t k = 0; k < node.parents.size(); ++k)
          pvals[static_cast<Index>(k)] = values(r, node.parents[k]);
        if (node.kind == DagSpec::NodeKind::Mlp) {
          Vec h = pvals;
          for (std::size_t l = 0; l < node.mlp.weights.size(); ++l) {
            h = (node.mlp.weights[l] * h + node.mlp.biases[l]).eval();
            for (Index i = 0; i < h.size(); ++i) h[i] = apply_activation(node.mlp.act, h[i]);
          }
          v = h[0];
        } else {
          v = 0.0;
          for (const auto& s : node.splits)
            v += (pvals[s.parent_slot] <= s.threshold) ? s.leaf_lo : s.leaf_hi;
        }
      }
      v += node.noise_scale * rng.normal();
      v = std::clamp(v, -detail::kNodeClamp, detail::kNodeClamp);
      if (!std::isfinite(v)) throw GenerationError("execute: non-finite node value");
      values(r, c) = v;
    }
  }
  return RawTable{std::move(values), program.program_seed};
}

struct ExtractedDataset {
  Mat X;
  Vec eta1, eta2;
};

// Standardize a target column to zero mean / unit variance, then scale by the
// per-dataset signal strength. Constant columns map to all zeros.
inline Vec standardize_target(const Vec& col, double signal_strength) {
  double mean = col.mean();
  double var = (col.array() - mean).square().sum() / static_cast<double>(col.size());
  if (var <= 1e-24) return Vec::Zero(col.size());
  return signal_strength * ((col.array() - mean) / std::sqrt(var)).matrix();
}

inline ExtractedDataset extract_dataset(const RawTable& table, const ScmProgram& program,
                                        double signal_strength = 1.0) {
  ExtractedDataset out;
  const Index n = table.values.rows();
  out.X.resize(n, static_cast<Index>(program.feature_indices.size()));
  for (std::size_t j = 0; j < program.feature_indices.size(); ++j)
    out.X.col(static_cast<Index>(j)) = table.values.col(program.feature_indices[j]);
  out.eta1 = standardize_target(table.values.col(program.target_indices[0]), signal_strength);
  out.eta2 = standardize_target(table.values.col(program.target_indices[1]), signal_strength);
  return out;
}

}  // namespace sic
