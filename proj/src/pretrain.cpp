#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>

#include "sic/prior.hpp"
#include "sic/sic_model.hpp"

namespace sic {

double LrSchedule::at(int step, int total_steps) const {
  if (total_steps < 1) throw DomainError("LrSchedule::at: total_steps must be >= 1");
  double progress =
      total_steps > 1 ? std::clamp(double(step) / double(total_steps - 1), 0.0, 1.0) : 0.0;
  switch (kind) {
    case Kind::Cosine:
      return peak * 0.5 * (1.0 + std::cos(M_PI * progress));
    case Kind::Polynomial:
      return from + (to - from) * progress;
    case Kind::Constant:
      return value;
  }
  throw DomainError("LrSchedule::at: unknown kind");
}

std::vector<CurriculumStage> desk_scale_curriculum() {
  CurriculumStage s1;
  s1.steps = 2000;
  s1.samples_min = s1.samples_max = 256;
  s1.datasets_per_step = 8;
  s1.lr.kind = LrSchedule::Kind::Cosine;
  s1.lr.peak = 8e-4;

  CurriculumStage s2;
  s2.steps = 400;
  s2.samples_min = 256;
  s2.samples_max = 2048;
  s2.datasets_per_step = 8;
  s2.lr.kind = LrSchedule::Kind::Polynomial;
  s2.lr.from = 5e-5;
  s2.lr.to = 5e-6;

  CurriculumStage s3 = s2;
  s3.steps = 100;
  s3.lr.kind = LrSchedule::Kind::Constant;
  s3.lr.value = 2e-6;
  s3.encoder_frozen = true;

  return {s1, s2, s3};
}

// ---------------------------------------------------------------------------
// train-state sidecar

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw DataError("train state: truncated file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_u64(std::ostream& os, std::uint64_t v) {
  write_u32(os, static_cast<std::uint32_t>(v));
  write_u32(os, static_cast<std::uint32_t>(v >> 32));
}

std::uint64_t read_u64(std::istream& is) {
  std::uint64_t lo = read_u32(is);
  std::uint64_t hi = read_u32(is);
  return lo | (hi << 32);
}

void write_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(os, bits);
}

double read_f64(std::istream& is) {
  std::uint64_t bits = read_u64(is);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

void write_f32s(std::ostream& os, const std::vector<float>& v) {
  write_u32(os, static_cast<std::uint32_t>(v.size()));
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(float)));
}

std::vector<float> read_f32s(std::istream& is) {
  std::uint32_t n = read_u32(is);
  std::vector<float> v(n);
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(float)));
  if (!is) throw DataError("train state: truncated payload");
  return v;
}

constexpr std::uint32_t kTrainStateVersion = 1;

}  // namespace

void save_train_state(const TrainState& state, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for writing: " + path);
  os.write("SICT", 4);
  write_u32(os, kTrainStateVersion);
  write_u32(os, static_cast<std::uint32_t>(state.stage));
  write_u32(os, static_cast<std::uint32_t>(state.step));
  write_f64(os, state.opt.beta1);
  write_f64(os, state.opt.beta2);
  write_f64(os, state.opt.eps);
  write_f64(os, state.opt.weight_decay);
  write_f64(os, state.opt.grad_clip);
  write_u64(os, static_cast<std::uint64_t>(state.opt.t));
  write_u32(os, static_cast<std::uint32_t>(state.opt.m.size()));
  for (std::size_t i = 0; i < state.opt.m.size(); ++i) {
    write_f32s(os, state.opt.m[i]);
    write_f32s(os, state.opt.v[i]);
  }
  if (!os) throw DataError("train state: write failed: " + path);
}

TrainState load_train_state(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open train state: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SICT", 4) != 0)
    throw DataError("train state: bad magic in " + path);
  std::uint32_t version = read_u32(is);
  if (version != kTrainStateVersion)
    throw DataError("train state: unsupported version " + std::to_string(version));
  TrainState st;
  st.stage = static_cast<int>(read_u32(is));
  st.step = static_cast<int>(read_u32(is));
  st.opt.beta1 = read_f64(is);
  st.opt.beta2 = read_f64(is);
  st.opt.eps = read_f64(is);
  st.opt.weight_decay = read_f64(is);
  st.opt.grad_clip = read_f64(is);
  st.opt.t = static_cast<std::int64_t>(read_u64(is));
  std::uint32_t n = read_u32(is);
  st.opt.m.resize(n);
  st.opt.v.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    st.opt.m[i] = read_f32s(is);
    st.opt.v[i] = read_f32s(is);
  }
  return st;
}

// ---------------------------------------------------------------------------
// curriculum loop

SicModel pretrain(const ModelConfig& mc, const std::vector<CurriculumStage>& stages,
                  const PriorConfig& prior, std::uint64_t seed, const PretrainOptions& opts,
                  SicModel* warm_start, TrainState* resume) {
  if (stages.empty()) throw ConfigError("pretrain: no curriculum stages");
  for (const auto& st : stages) st.validate();
  prior.validate();
  mc.validate();

  SicModel model = warm_start ? *warm_start : SicModel::init(mc, seed);
  TrainState state;
  if (resume) state = *resume;
  if (state.stage < 0 || state.stage > static_cast<int>(stages.size()))
    throw ConfigError("pretrain: resume stage out of range");

  auto checkpoint = [&](int stage_i, int next_step) {
    if (opts.checkpoint_path.empty()) return;
    save_checkpoint(model, opts.checkpoint_path);
    TrainState snap = state;
    snap.stage = stage_i;
    snap.step = next_step;
    save_train_state(snap, opts.checkpoint_path + ".state");
  };

  int consecutive_skips = 0;
  std::int64_t global_step = 0;
  for (int stage_i = state.stage; stage_i < static_cast<int>(stages.size()); ++stage_i) {
    const CurriculumStage& st = stages[static_cast<std::size_t>(stage_i)];
    int start_step = (stage_i == state.stage) ? state.step : 0;
    for (int step = start_step; step < st.steps; ++step, ++global_step) {
      // stateless per-step seed: resume regenerates identical data
      std::uint64_t step_seed =
          derive_seed(seed, 0x57e0 + static_cast<std::uint64_t>(stage_i),
                      static_cast<std::uint64_t>(step));
      Rng srng(derive_seed(step_seed, 0x5a6e));
      Index n_samples = st.samples_min == st.samples_max
                            ? st.samples_min
                            : static_cast<Index>(srng.uniform_int(st.samples_min, st.samples_max));

      std::vector<SurvivalDataset> batch;
      batch.reserve(static_cast<std::size_t>(st.datasets_per_step));
      for (int k = 0; k < st.datasets_per_step; ++k) {
        bool got = false;
        for (std::uint64_t attempt = 0; attempt < 8 && !got; ++attempt) {
          try {
            batch.push_back(generate_dataset(
                prior, n_samples,
                derive_seed(step_seed, 0xd5ee + attempt, static_cast<std::uint64_t>(k))));
            got = true;
          } catch (const GenerationError&) {
          }
        }
      }
      if (batch.empty()) {
        if (++consecutive_skips >= 3)
          throw NumericError("pretrain: dataset generation failed on 3 consecutive steps");
        continue;
      }

      double lr = st.lr.at(step, st.steps);
      TrainStepResult r = sic_train_step(model, batch, state.opt, lr, opts.alpha, opts.sigma,
                                         step_seed, st.encoder_frozen);
      if (r.skipped) {
        if (++consecutive_skips >= 3) {
          checkpoint(stage_i, step);
          throw NumericError("pretrain: non-finite loss on 3 consecutive steps");
        }
        continue;
      }
      consecutive_skips = 0;

      if (opts.verbose)
        std::cerr << "stage " << (stage_i + 1) << " step " << (step + 1) << "/" << st.steps
                  << " lr " << lr << " loss " << r.loss << "\n";
      if (!opts.checkpoint_path.empty() && opts.checkpoint_every > 0 &&
          (global_step + 1) % opts.checkpoint_every == 0)
        checkpoint(stage_i, step + 1);
    }
  }
  model.set_encoder_frozen(false);
  checkpoint(static_cast<int>(stages.size()), 0);
  return model;
}

}  // namespace sic
