#include "sic/cv.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

namespace sic {

std::vector<int> cv_fold_assignment(Index n, int n_folds, std::uint64_t seed) {
  if (n < n_folds) throw DomainError("cv: fewer rows than folds");
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  Rng rng(derive_seed(seed, 0xcf01));
  rng.shuffle(idx);
  std::vector<int> fold(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < idx.size(); ++i)
    fold[static_cast<std::size_t>(idx[i])] = static_cast<int>(i % static_cast<std::size_t>(n_folds));
  return fold;
}

namespace {

SurvivalDataset subset(const SurvivalDataset& ds, const std::vector<Index>& rows) {
  SurvivalDataset out;
  out.X.resize(static_cast<Index>(rows.size()), ds.X.cols());
  out.time.resize(static_cast<Index>(rows.size()));
  out.event.resize(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.X.row(static_cast<Index>(i)) = ds.X.row(rows[i]);
    out.time[static_cast<Index>(i)] = ds.time[rows[i]];
    out.event[static_cast<Index>(i)] = ds.event[rows[i]];
  }
  out.manifest = ds.manifest;
  out.manifest.n_rows = static_cast<Index>(rows.size());
  return out;
}

// training-fold median imputation of NaN cells, applied to train and test
void impute_by_train_median(SurvivalDataset& train, SurvivalDataset& test) {
  for (Index j = 0; j < train.X.cols(); ++j) {
    std::vector<double> vals;
    for (Index i = 0; i < train.X.rows(); ++i)
      if (!std::isnan(train.X(i, j))) vals.push_back(train.X(i, j));
    double med = 0.0;
    if (!vals.empty()) {
      std::sort(vals.begin(), vals.end());
      std::size_t n = vals.size();
      med = n % 2 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
    }
    for (Index i = 0; i < train.X.rows(); ++i)
      if (std::isnan(train.X(i, j))) train.X(i, j) = med;
    for (Index i = 0; i < test.X.rows(); ++i)
      if (std::isnan(test.X(i, j))) test.X(i, j) = med;
  }
}

}  // namespace

CvReport run_cv(const SurvivalDataset& ds, CvModelKind kind, const CvPlan& plan,
                SicModel* sic_model, int threads) {
  plan.validate();
  if (kind == CvModelKind::Sic && !sic_model)
    throw ConfigError("cv: SIC model kind needs a loaded checkpoint");
  const Index n = ds.rows();
  std::vector<int> fold = cv_fold_assignment(n, plan.n_folds, plan.seed);

  CvReport report;
  report.folds.resize(static_cast<std::size_t>(plan.n_folds));
  std::vector<std::string> warnings(static_cast<std::size_t>(plan.n_folds));

  auto run_fold = [&](int f) {
    CvFoldResult& res = report.folds[static_cast<std::size_t>(f)];
    res.fold = f;
    std::vector<Index> train_rows, test_rows;
    for (Index i = 0; i < n; ++i)
      (fold[static_cast<std::size_t>(i)] == f ? test_rows : train_rows).push_back(i);

    // tuning reserve: carved out of the training fold, deliberately unused
    if (plan.tuning_fraction > 0.0 && train_rows.size() > 1) {
      std::vector<Index> shuffled = train_rows;
      Rng rng(derive_seed(plan.seed, 0x707e, static_cast<std::uint64_t>(f)));
      rng.shuffle(shuffled);
      std::size_t n_tune = std::min(
          shuffled.size() - 1,
          static_cast<std::size_t>(std::ceil(plan.tuning_fraction * double(shuffled.size()))));
      shuffled.erase(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_tune));
      std::sort(shuffled.begin(), shuffled.end());
      train_rows = std::move(shuffled);
    }

    SurvivalDataset train = subset(ds, train_rows);
    SurvivalDataset test = subset(ds, test_rows);
    impute_by_train_median(train, test);
    res.n_test = test.rows();
    res.n_events = test.n_events();

    if (res.n_events == 0 || train.n_events() == 0) {
      res.undefined = true;
      warnings[static_cast<std::size_t>(f)] =
          "fold " + std::to_string(f) + ": zero events, excluded from the mean";
      return;
    }

    try {
      if (kind == CvModelKind::CoxPH) {
        CoxModel model = cox_fit(train.X, train.time, train.event);
        std::vector<StepFunction> curves;
        curves.reserve(static_cast<std::size_t>(test.rows()));
        for (Index i = 0; i < test.rows(); ++i)
          curves.push_back(cox_predict_survival(model, test.X.row(i).transpose()));
        res.c_index = c_index_td(curves, test.time, test.event);
      } else {
        DiscreteSurvival pred = sic_predict(*sic_model, train, test.X);
        res.c_index = c_index_td(
            [&](Index i, double t) { return pred.survival_at(i, t); }, test.time, test.event);
      }
    } catch (const std::exception& e) {
      res.undefined = true;
      warnings[static_cast<std::size_t>(f)] =
          "fold " + std::to_string(f) + ": " + e.what() + ", excluded from the mean";
    }
  };

  threads = std::max(1, threads);
  if (threads == 1) {
    for (int f = 0; f < plan.n_folds; ++f) run_fold(f);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < std::min(threads, plan.n_folds); ++t)
      pool.emplace_back([&] {
        for (int f = next.fetch_add(1); f < plan.n_folds; f = next.fetch_add(1)) run_fold(f);
      });
    for (auto& th : pool) th.join();
  }

  double s = 0.0, s2 = 0.0;
  for (const auto& r : report.folds) {
    if (r.undefined) continue;
    s += r.c_index;
    s2 += r.c_index * r.c_index;
    ++report.n_defined;
  }
  if (report.n_defined > 0) {
    report.mean = s / report.n_defined;
    double var = s2 / report.n_defined - report.mean * report.mean;
    report.stddev = var > 0.0 ? std::sqrt(var) : 0.0;
  }
  for (auto& w : warnings)
    if (!w.empty()) report.warnings.push_back(w);
  return report;
}

void write_cv_report_csv(const CvReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << "fold,c_index_td,n_test,n_events\n";
  for (const auto& r : report.folds) {
    out << r.fold << ',';
    if (r.undefined)
      out << "nan";
    else
      out << r.c_index;
    out << ',' << r.n_test << ',' << r.n_events << '\n';
  }
  out << "mean," << report.mean << ",,\n";
  out << "stddev," << report.stddev << ",,\n";
}

}  // namespace sic
