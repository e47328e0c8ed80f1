#include "sic/diagnose.hpp"

#include <atomic>
#include <fstream>
#include <numeric>
#include <thread>

namespace sic {

namespace {

// signed mean second difference of the KM curve sampled on a uniform grid in
// standardized time; positive = convex, negative = concave
double km_mean_curvature(const StepFunction& km) {
  const int g = 21;
  std::vector<double> s(g);
  for (int i = 0; i < g; ++i) s[static_cast<std::size_t>(i)] = km(static_cast<double>(i) / (g - 1));
  double acc = 0.0;
  for (int i = 1; i + 1 < g; ++i)
    acc += s[static_cast<std::size_t>(i + 1)] - 2.0 * s[static_cast<std::size_t>(i)] +
           s[static_cast<std::size_t>(i - 1)];
  return acc / (g - 2);
}

DiagnosticsRow run_one(const PriorConfig& config, std::uint64_t ds_seed,
                       const DiagnoseOptions& opts, StepFunction* km_out) {
  DiagnosticsRow row;
  row.seed = ds_seed;
  SurvivalDataset ds = generate_dataset(config, opts.rows_per_dataset, ds_seed);
  row.regime = regime_name(ds.manifest.regime);
  row.family = family_name(ds.manifest.family);

  SurvivalDataset std_ds = standardize_times(ds);
  *km_out = kaplan_meier(std_ds.time, std_ds.event);
  row.mean_curvature = km_mean_curvature(*km_out);

  // 80/20 split, seeded by the dataset seed
  const Index n = ds.rows();
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  Rng rng(derive_seed(ds_seed, 0xd1a6));
  rng.shuffle(idx);
  Index n_test = std::max<Index>(1, static_cast<Index>(opts.test_fraction * double(n)));
  std::vector<Index> test(idx.begin(), idx.begin() + n_test);
  std::vector<Index> train(idx.begin() + n_test, idx.end());

  auto subset = [&](const std::vector<Index>& rows) {
    SurvivalDataset out;
    out.X.resize(static_cast<Index>(rows.size()), ds.X.cols());
    out.time.resize(static_cast<Index>(rows.size()));
    out.event.resize(static_cast<Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.X.row(static_cast<Index>(i)) = ds.X.row(rows[i]);
      out.time[static_cast<Index>(i)] = ds.time[rows[i]];
      out.event[static_cast<Index>(i)] = ds.event[rows[i]];
    }
    return out;
  };
  SurvivalDataset tr = subset(train), te = subset(test);

  try {
    if (tr.n_events() == 0 || te.n_events() == 0)
      throw DomainError("split without events");
    CoxModel model = cox_fit(tr.X, tr.time, tr.event);
    std::vector<StepFunction> curves;
    curves.reserve(static_cast<std::size_t>(te.rows()));
    for (Index i = 0; i < te.rows(); ++i)
      curves.push_back(cox_predict_survival(model, te.X.row(i).transpose()));
    row.c_index = c_index_td(curves, te.time, te.event);
  } catch (const std::exception&) {
    row.fit_failed = true;
  }
  return row;
}

}  // namespace

DiagnosticsReport diagnose_prior(const PriorConfig& config, int n_datasets, std::uint64_t seed,
                                 const DiagnoseOptions& opts) {
  if (n_datasets < 1) throw DomainError("diagnose_prior: n_datasets must be >= 1");
  config.validate();

  DiagnosticsReport report;
  report.rows.resize(static_cast<std::size_t>(n_datasets));
  report.km_curves.resize(static_cast<std::size_t>(n_datasets));

  auto work = [&](int k) {
    std::uint64_t ds_seed = derive_seed(seed, 0xba7c, static_cast<std::uint64_t>(k));
    report.rows[static_cast<std::size_t>(k)] =
        run_one(config, ds_seed, opts, &report.km_curves[static_cast<std::size_t>(k)]);
  };

  int threads = std::max(1, opts.threads);
  if (threads == 1) {
    for (int k = 0; k < n_datasets; ++k) work(k);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (int k = next.fetch_add(1); k < n_datasets; k = next.fetch_add(1)) work(k);
      });
    for (auto& th : pool) th.join();
  }

  for (auto& r : report.rows) report.failures += r.fit_failed ? 1 : 0;
  return report;
}

void write_cindex_csv(const DiagnosticsReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << "dataset,seed,family,regime,c_index_td,mean_curvature,fit_failed\n";
  for (std::size_t k = 0; k < report.rows.size(); ++k) {
    const auto& r = report.rows[k];
    out << k << ',' << r.seed << ',' << r.family << ',' << r.regime << ',';
    if (r.fit_failed)
      out << "nan";
    else
      out << r.c_index;
    out << ',' << r.mean_curvature << ',' << (r.fit_failed ? 1 : 0) << '\n';
  }
}

void write_km_bundle_csv(const DiagnosticsReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << "dataset,time,survival\n";
  for (std::size_t k = 0; k < report.km_curves.size(); ++k) {
    const auto& km = report.km_curves[k];
    out << k << ",0,1\n";
    for (std::size_t i = 0; i < km.times.size(); ++i)
      out << k << ',' << km.times[i] << ',' << km.values[i] << '\n';
  }
}

}  // namespace sic
