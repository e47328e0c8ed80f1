// Command-line surface: generate / diagnose / pretrain / predict / cv /
// evaluate. Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "sic/cv.hpp"
#include "sic/dataio.hpp"
#include "sic/diagnose.hpp"
#include "sic/prior.hpp"
#include "sic/sic_model.hpp"

using json = nlohmann::json;
using namespace sic;

namespace {

struct GlobalOpts {
  std::uint64_t seed = 0;
  std::string config_path;
  int threads = 1;
  bool deterministic = false;

  int effective_threads() const { return deterministic ? 1 : std::max(1, threads); }
};

json load_config(const GlobalOpts& g) {
  if (g.config_path.empty()) return json::object();
  std::ifstream in(g.config_path);
  if (!in) throw DataError("cannot open config: " + g.config_path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(g.config_path + ": malformed config JSON: " + e.what());
  }
}

template <class T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

PriorConfig prior_from_config(const json& cfg) {
  PriorConfig p;
  if (!cfg.contains("prior")) return p;
  const json& j = cfg.at("prior");
  maybe(j, "n_features_min", p.n_features_min);
  maybe(j, "n_features_max", p.n_features_max);
  maybe(j, "n_nodes_min", p.n_nodes_min);
  maybe(j, "n_nodes_max", p.n_nodes_max);
  maybe(j, "p_edge_min", p.p_edge_min);
  maybe(j, "p_edge_max", p.p_edge_max);
  maybe(j, "tree_prob", p.tree_prob);
  maybe(j, "noise_min", p.noise_min);
  maybe(j, "noise_max", p.noise_max);
  maybe(j, "signal_min", p.signal_min);
  maybe(j, "signal_max", p.signal_max);
  maybe(j, "alpha_min", p.alpha_min);
  maybe(j, "alpha_max", p.alpha_max);
  maybe(j, "beta_min", p.beta_min);
  maybe(j, "beta_max", p.beta_max);
  maybe(j, "gompertz_neg_prob", p.gompertz_neg_prob);
  maybe(j, "censoring", p.censoring);
  maybe(j, "cens_scale_min", p.cens_scale_min);
  maybe(j, "cens_scale_max", p.cens_scale_max);
  maybe(j, "admin_q_min", p.admin_q_min);
  maybe(j, "admin_q_max", p.admin_q_max);
  maybe(j, "max_resample", p.max_resample);
  if (j.contains("regime_probs")) {
    auto v = j.at("regime_probs").get<std::vector<double>>();
    if (v.size() != 4) throw DataError("config: regime_probs needs 4 entries (ph,aft,ah,eh)");
    for (int i = 0; i < 4; ++i) p.regime_probs[static_cast<std::size_t>(i)] = v[static_cast<std::size_t>(i)];
  }
  if (j.contains("fixed_regime"))
    p.fixed_regime = regime_from_name(j.at("fixed_regime").get<std::string>());
  p.validate();
  return p;
}

ModelConfig model_from_config(const json& cfg) {
  ModelConfig m;
  if (!cfg.contains("model")) return m;
  const json& j = cfg.at("model");
  maybe(j, "d_model", m.d_model);
  maybe(j, "n_heads", m.n_heads);
  maybe(j, "n_row_layers", m.n_row_layers);
  maybe(j, "n_dataset_layers", m.n_dataset_layers);
  maybe(j, "n_bins", m.n_bins);
  maybe(j, "max_features", m.max_features);
  maybe(j, "d_ff", m.d_ff);
  maybe(j, "dropout", m.dropout);
  if (j.contains("time_event_variant")) {
    std::string v = j.at("time_event_variant").get<std::string>();
    if (v == "prose")
      m.time_event_variant = TimeEventVariant::Prose;
    else if (v == "formula")
      m.time_event_variant = TimeEventVariant::Formula;
    else
      throw DataError("config: unknown time_event_variant " + v);
  }
  m.validate();
  return m;
}

LrSchedule lr_from_json(const json& j) {
  LrSchedule lr;
  std::string kind = j.value("kind", "cosine");
  if (kind == "cosine") {
    lr.kind = LrSchedule::Kind::Cosine;
    maybe(j, "peak", lr.peak);
  } else if (kind == "polynomial") {
    lr.kind = LrSchedule::Kind::Polynomial;
    maybe(j, "from", lr.from);
    maybe(j, "to", lr.to);
  } else if (kind == "constant") {
    lr.kind = LrSchedule::Kind::Constant;
    maybe(j, "value", lr.value);
  } else {
    throw DataError("config: unknown lr schedule kind " + kind);
  }
  return lr;
}

std::vector<CurriculumStage> stages_from_config(const json& cfg) {
  if (!cfg.contains("stages")) return desk_scale_curriculum();
  std::vector<CurriculumStage> stages;
  for (const json& j : cfg.at("stages")) {
    CurriculumStage st;
    maybe(j, "steps", st.steps);
    maybe(j, "samples_min", st.samples_min);
    maybe(j, "samples_max", st.samples_max);
    maybe(j, "datasets_per_step", st.datasets_per_step);
    maybe(j, "encoder_frozen", st.encoder_frozen);
    if (j.contains("lr")) st.lr = lr_from_json(j.at("lr"));
    st.validate();
    stages.push_back(st);
  }
  if (stages.empty()) throw DataError("config: stages list is empty");
  return stages;
}

CvPlan cv_plan_from_config(const json& cfg, std::uint64_t seed) {
  CvPlan plan;
  plan.seed = seed;
  if (cfg.contains("cv")) {
    const json& j = cfg.at("cv");
    maybe(j, "n_folds", plan.n_folds);
    maybe(j, "tuning_fraction", plan.tuning_fraction);
  }
  plan.validate();
  return plan;
}

std::string dataset_filename(const std::string& dir, int k) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "dataset_%05d.csv", k);
  std::string out = dir;
  if (!out.empty() && out.back() != '/') out.push_back('/');
  return out + buf;
}

SurvivalDataset load_labeled(const std::string& data_path, const std::string& schema_path) {
  if (schema_path.empty()) return read_dataset(data_path);
  DatasetSchema schema = schema_from_json_file(schema_path);
  IngestReport rep;
  SurvivalDataset ds = ingest_real(data_path, schema, &rep);
  std::cerr << data_path << ": " << rep.n_rows << " rows, " << rep.n_input_columns
            << " input columns -> " << rep.feature_names.size() << " features\n";
  return ds;
}

// long-format prediction table: one row per (query, bin)
void write_predictions(const DiscreteSurvival& pred, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  out.precision(17);
  out << "row,bin,t_lo,t_hi,pmf,survival\n";
  const auto& edges = pred.bins.edges;
  for (Index i = 0; i < pred.pmf.rows(); ++i) {
    Vec surv = survival_curve(pred.pmf.row(i).transpose());
    for (Index k = 0; k < pred.pmf.cols(); ++k) {
      out << i << ',' << k << ',' << edges[static_cast<std::size_t>(k)] << ',';
      if (static_cast<std::size_t>(k + 1) < edges.size() &&
          std::isfinite(edges[static_cast<std::size_t>(k + 1)]))
        out << edges[static_cast<std::size_t>(k + 1)];
      else
        out << "inf";
      out << ',' << pred.pmf(i, k) << ',' << surv[k] << '\n';
    }
  }
}

std::vector<StepFunction> read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("row,bin,t_lo,t_hi,pmf,survival", 0) != 0)
    throw DataError(path + ": malformed prediction header");
  std::vector<std::vector<std::pair<double, double>>> per_row;  // (t_lo, survival)
  Index lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6)
      throw DataError(path + ": row " + std::to_string(lineno) + ": expected 6 cells");
    Index row = static_cast<Index>(std::stoll(cells[0]));
    double t_lo = std::stod(cells[2]);
    double surv = std::stod(cells[5]);
    if (row < 0) throw DataError(path + ": negative row index");
    if (static_cast<std::size_t>(row) >= per_row.size())
      per_row.resize(static_cast<std::size_t>(row) + 1);
    per_row[static_cast<std::size_t>(row)].emplace_back(t_lo, surv);
  }
  std::vector<StepFunction> curves;
  for (auto& bins : per_row) {
    if (bins.empty()) throw DataError(path + ": row with no bins");
    StepFunction f;
    f.left_value = bins[0].second;
    for (std::size_t k = 1; k < bins.size(); ++k) {
      f.times.push_back(bins[k].first);
      f.values.push_back(bins[k].second);
    }
    curves.push_back(std::move(f));
  }
  return curves;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"survival in-context learning toolkit"};
  app.require_subcommand(1);
  app.fallthrough(true);  // accept global flags after the subcommand too
  GlobalOpts g;
  app.add_option("--seed", g.seed, "global RNG seed");
  app.add_option("--config", g.config_path, "JSON config file");
  app.add_option("--threads", g.threads, "worker threads");
  app.add_flag("--deterministic", g.deterministic, "single-threaded bit-reproducible mode");

  // generate
  auto* gen = app.add_subcommand("generate", "sample datasets from the prior");
  int gen_n = 1;
  Index gen_rows = 256;
  std::string gen_out;
  gen->add_option("--n", gen_n, "number of datasets")->check(CLI::PositiveNumber);
  gen->add_option("--rows", gen_rows, "rows per dataset")->check(CLI::PositiveNumber);
  gen->add_option("--out", gen_out, "output directory")->required();

  // diagnose
  auto* diag = app.add_subcommand("diagnose", "prior diagnostics: CoxPH C^td and KM bundles");
  int diag_n = 512;
  Index diag_rows = 256;
  std::string diag_out = ".";
  diag->add_option("--n", diag_n, "number of datasets")->check(CLI::PositiveNumber);
  diag->add_option("--rows", diag_rows, "rows per dataset")->check(CLI::PositiveNumber);
  diag->add_option("--out", diag_out, "output directory");

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "run the pretraining curriculum");
  std::string pre_out;
  bool pre_resume = false, pre_verbose = false;
  int pre_ckpt_every = 200;
  pre->add_option("--out", pre_out, "checkpoint path")->required();
  pre->add_flag("--resume", pre_resume, "resume from --out and its .state sidecar");
  pre->add_flag("--verbose", pre_verbose, "log each step");
  pre->add_option("--checkpoint-every", pre_ckpt_every, "steps between checkpoints");

  // predict
  auto* prd = app.add_subcommand("predict", "survival curves for query rows");
  std::string prd_ckpt, prd_ctx, prd_qry, prd_out;
  prd->add_option("--checkpoint", prd_ckpt, "model checkpoint")->required();
  prd->add_option("--context", prd_ctx, "labeled context dataset CSV")->required();
  prd->add_option("--query", prd_qry, "query dataset CSV (labels ignored)")->required();
  prd->add_option("--out", prd_out, "prediction CSV")->required();

  // cv
  auto* cvc = app.add_subcommand("cv", "nested cross-validation");
  std::string cv_model = "coxph", cv_data, cv_schema, cv_ckpt, cv_out;
  cvc->add_option("--model", cv_model, "coxph | sic")
      ->check(CLI::IsMember({"coxph", "sic"}));
  cvc->add_option("--data", cv_data, "dataset CSV")->required();
  cvc->add_option("--schema", cv_schema, "schema JSON for real-data ingestion");
  cvc->add_option("--checkpoint", cv_ckpt, "model checkpoint (sic)");
  cvc->add_option("--out", cv_out, "report CSV path");

  // evaluate
  auto* evl = app.add_subcommand("evaluate", "C^td of a prediction file against labels");
  std::string ev_pred, ev_data;
  evl->add_option("--pred", ev_pred, "prediction CSV from `predict`")->required();
  evl->add_option("--data", ev_data, "labeled dataset CSV")->required();

  CLI11_PARSE(app, argc, argv);
  json cfg = load_config(g);

  if (gen->parsed()) {
    PriorConfig prior = prior_from_config(cfg);
    for (int k = 0; k < gen_n; ++k) {
      SurvivalDataset ds =
          generate_dataset(prior, gen_rows, derive_seed(g.seed, 0x6e4a, static_cast<std::uint64_t>(k)));
      write_dataset(ds, dataset_filename(gen_out, k));
    }
    std::cout << "wrote " << gen_n << " dataset file pairs to " << gen_out << "\n";
  } else if (diag->parsed()) {
    PriorConfig prior = prior_from_config(cfg);
    DiagnoseOptions opts;
    opts.rows_per_dataset = diag_rows;
    opts.threads = g.effective_threads();
    DiagnosticsReport report = diagnose_prior(prior, diag_n, g.seed, opts);
    std::string dir = diag_out;
    if (!dir.empty() && dir.back() != '/') dir.push_back('/');
    write_cindex_csv(report, dir + "cindex.csv");
    write_km_bundle_csv(report, dir + "km_bundle.csv");
    std::cout << "diagnosed " << diag_n << " datasets (" << report.failures
              << " fit failures); wrote " << dir << "cindex.csv and " << dir << "km_bundle.csv\n";
  } else if (pre->parsed()) {
    ModelConfig mc = model_from_config(cfg);
    PriorConfig prior = prior_from_config(cfg);
    std::vector<CurriculumStage> stages = stages_from_config(cfg);
    PretrainOptions opts;
    opts.checkpoint_path = pre_out;
    opts.checkpoint_every = pre_ckpt_every;
    opts.verbose = pre_verbose;
    SicModel warm;
    TrainState resume;
    SicModel* warm_ptr = nullptr;
    TrainState* resume_ptr = nullptr;
    if (pre_resume) {
      warm = load_checkpoint(pre_out);
      resume = load_train_state(pre_out + ".state");
      warm_ptr = &warm;
      resume_ptr = &resume;
    }
    SicModel model = pretrain(mc, stages, prior, g.seed, opts, warm_ptr, resume_ptr);
    save_checkpoint(model, pre_out);
    std::cout << "pretrained model saved to " << pre_out << "\n";
  } else if (prd->parsed()) {
    SicModel model = load_checkpoint(prd_ckpt);
    SurvivalDataset ctx = read_dataset(prd_ctx);
    SurvivalDataset qry = read_dataset(prd_qry);
    if (qry.features() != ctx.features())
      throw DataError("predict: context and query feature counts differ");
    DiscreteSurvival pred = sic_predict(model, ctx, qry.X);
    write_predictions(pred, prd_out);
    std::cout << "wrote predictions for " << qry.rows() << " rows to " << prd_out << "\n";
  } else if (cvc->parsed()) {
    SurvivalDataset ds = load_labeled(cv_data, cv_schema);
    CvPlan plan = cv_plan_from_config(cfg, g.seed);
    CvReport report;
    if (cv_model == "coxph") {
      report = run_cv(ds, CvModelKind::CoxPH, plan, nullptr, g.effective_threads());
    } else {
      if (cv_ckpt.empty()) throw DataError("cv: --checkpoint is required with --model sic");
      SicModel model = load_checkpoint(cv_ckpt);
      report = run_cv(ds, CvModelKind::Sic, plan, &model, g.effective_threads());
    }
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
    if (!cv_out.empty()) write_cv_report_csv(report, cv_out);
    std::cout << "c_index_td mean " << report.mean << " stddev " << report.stddev << " over "
              << report.n_defined << "/" << plan.n_folds << " folds\n";
  } else if (evl->parsed()) {
    std::vector<StepFunction> curves = read_predictions(ev_pred);
    SurvivalDataset labels = read_dataset(ev_data);
    if (static_cast<Index>(curves.size()) != labels.rows())
      throw DataError("evaluate: prediction rows do not match label rows");
    double c = c_index_td(curves, labels.time, labels.event);
    std::cout << "c_index_td " << c << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const GenerationError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const DomainError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
