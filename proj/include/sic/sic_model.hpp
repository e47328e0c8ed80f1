#pragma once

// Toy-scale Survival In-Context model: shared per-cell embedder, row-wise
// attention encoder with a pooled CLS token, multiplicative time-event
// embedding on context rows, query-to-context attention and a discrete
// survival head. Plus the curriculum pretraining loop and checkpointing.

#include <map>
#include <string>
#include <vector>

#include "sic/autodiff.hpp"
#include "sic/dataset.hpp"
#include "sic/deephit.hpp"
#include "sic/prior_config.hpp"

namespace sic {

using FTensor = ad::Tensor<float>;

enum class TimeEventVariant { Prose, Formula };

struct ModelConfig {
  int d_model = 32;
  int n_heads = 4;
  int n_row_layers = 1;
  int n_dataset_layers = 2;
  int n_bins = 10;
  int max_features = 100;
  int d_ff = 0;  // 0 -> 2 * d_model
  double dropout = 0.0;
  TimeEventVariant time_event_variant = TimeEventVariant::Prose;

  int ff_width() const { return d_ff > 0 ? d_ff : 2 * d_model; }
  void validate() const {
    if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0)
      throw ConfigError("model: d_model must be a positive multiple of n_heads");
    if (n_bins < 2) throw ConfigError("model: n_bins must be >= 2");
    if (n_row_layers < 0 || n_dataset_layers < 1)
      throw ConfigError("model: layer counts invalid");
    if (max_features < 1 || max_features > 100)
      throw ConfigError("model: max_features must lie in [1,100]");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model: dropout must lie in [0,1)");
  }
};

class SicModel {
 public:
  SicModel() = default;
  static SicModel init(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  FTensor& param(const std::string& name);
  const std::vector<std::string>& param_names() const { return names_; }
  std::vector<FTensor> parameters();
  bool is_encoder_param(const std::string& name) const;

  void set_encoder_frozen(bool frozen);

 private:
  ModelConfig config_;
  std::vector<std::string> names_;
  std::map<std::string, FTensor> params_;
  void add_param(const std::string& name, const ad::Shape& shape);
};

// Checkpoint wire format: magic "SICK", u32 version, u32 JSON config length,
// JSON config block, u32 tensor count, manifest of (name, dtype, shape),
// then raw little-endian f32 payloads in manifest order.
void save_checkpoint(const SicModel& model, const std::string& path);
SicModel load_checkpoint(const std::string& path);

struct SicForward {
  FTensor logits;  // n_query x n_bins
  BinEdges bins;   // quantile bins of context times only
};

// Runs the network. Context labels feed the time-event embedding; query rows
// carry no label information. Column and context-row order are canonicalized
// internally, so predictions are invariant to both permutations.
SicForward sic_forward(SicModel& model, const Mat& X_ctx, const Vec& t_ctx, const IVec& e_ctx,
                       const Mat& X_qry, bool training = false, Rng* dropout_rng = nullptr);

DiscreteSurvival sic_predict(SicModel& model, const SurvivalDataset& context, const Mat& X_qry);

struct AdamWState {
  double beta1 = 0.9, beta2 = 0.95, eps = 1e-8;
  double weight_decay = 0.01;
  double grad_clip = 1.0;
  std::int64_t t = 0;
  std::vector<std::vector<float>> m, v;

  // decoupled-weight-decay adaptive update from accumulated gradients;
  // gradients are zeroed afterwards
  void step(std::vector<FTensor>& params, const std::vector<bool>& trainable, double lr);
};

struct TrainStepResult {
  double loss = 0.0;  // pre-step mean loss over the batch
  bool skipped = false;
};

TrainStepResult sic_train_step(SicModel& model, const std::vector<SurvivalDataset>& batch,
                               AdamWState& opt, double lr, double alpha, double sigma,
                               std::uint64_t step_seed, bool encoder_frozen = false);

struct LrSchedule {
  enum class Kind { Cosine, Polynomial, Constant };
  Kind kind = Kind::Cosine;
  double peak = 1e-4;  // Cosine
  double from = 2e-5, to = 5e-6;  // Polynomial
  double value = 2e-6;  // Constant

  double at(int step, int total_steps) const;
};

struct CurriculumStage {
  int steps = 1;
  Index samples_min = 256, samples_max = 256;
  int datasets_per_step = 8;
  LrSchedule lr;
  bool encoder_frozen = false;

  void validate() const {
    if (steps < 1) throw ConfigError("stage: steps must be >= 1");
    if (samples_min < 8 || samples_max < samples_min)
      throw ConfigError("stage: sample range invalid");
    if (datasets_per_step < 1) throw ConfigError("stage: datasets_per_step must be >= 1");
  }
};

// Default three-stage schedule at desk scale.
std::vector<CurriculumStage> desk_scale_curriculum();

struct PretrainOptions {
  double alpha = 0.5, sigma = 0.1;
  std::string checkpoint_path;  // empty = no periodic checkpoints
  int checkpoint_every = 200;
  bool verbose = false;
  int resume_stage = 0;  // filled by load_train_state
  int resume_step = 0;
};

struct TrainState {
  int stage = 0;
  int step = 0;  // within stage
  AdamWState opt;
};

void save_train_state(const TrainState& state, const std::string& path);
TrainState load_train_state(const std::string& path);

// Runs the stages in order; fully determined by (configs, seed). Returns the
// final model; with a checkpoint_path set, writes model + train state
// periodically so an interrupted run resumes bit-for-bit.
SicModel pretrain(const ModelConfig& mc, const std::vector<CurriculumStage>& stages,
                  const PriorConfig& prior, std::uint64_t seed, const PretrainOptions& opts,
                  SicModel* warm_start = nullptr, TrainState* resume = nullptr);

}  // namespace sic
