#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <vector>

#include "doctest.h"
#include "sic/survstats.hpp"

using namespace sic;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec x(static_cast<Index>(v.size()));
  Index i = 0;
  for (double t : v) x[i++] = t;
  return x;
}

IVec ivec(std::initializer_list<int> v) {
  IVec x(static_cast<Index>(v.size()));
  Index i = 0;
  for (int t : v) x[i++] = t;
  return x;
}

// Independent quantile oracle: full sort plus direct h = p*n interpolation,
// written without reusing empirical_quantile.
double quantile_oracle(std::vector<double> x, double p) {
  std::sort(x.begin(), x.end());
  double h = p * static_cast<double>(x.size());
  if (h <= 1.0) return x.front();
  if (h >= static_cast<double>(x.size())) return x.back();
  auto lo = static_cast<std::size_t>(h);
  return x[lo - 1] + (h - static_cast<double>(lo)) * (x[lo] - x[lo - 1]);
}

}  // namespace

TEST_CASE("step function evaluation is right-continuous") {
  StepFunction s;
  s.times = {1.0, 2.0};
  s.values = {0.5, 0.25};
  CHECK(s(0.5) == 1.0);
  CHECK(s(1.0) == 0.5);
  CHECK(s(1.5) == 0.5);
  CHECK(s(2.0) == 0.25);
  CHECK(s(100.0) == 0.25);
}

TEST_CASE("kaplan-meier hand examples") {
  StepFunction s = kaplan_meier(vec({1, 2, 3}), ivec({1, 1, 1}));
  REQUIRE(s.times.size() == 3);
  CHECK(s(1.0) == doctest::Approx(2.0 / 3.0));
  CHECK(s(2.0) == doctest::Approx(1.0 / 3.0));
  CHECK(s(3.0) == doctest::Approx(0.0));

  // censoring only shrinks the risk set: (1-1/3)*(1-1/1)
  StepFunction c = kaplan_meier(vec({1, 2, 3}), ivec({1, 0, 1}));
  CHECK(c(1.0) == doctest::Approx(2.0 / 3.0));
  CHECK(c(3.0) == doctest::Approx(0.0));

  // all censored: flat at one
  StepFunction f = kaplan_meier(vec({1, 2, 3}), ivec({0, 0, 0}));
  CHECK(f.times.empty());
  CHECK(f(10.0) == 1.0);

  CHECK_THROWS_AS(kaplan_meier(Vec(), IVec()), DomainError);
}

TEST_CASE("kaplan-meier equals empirical survival without censoring") {
  Rng rng(17);
  Vec t(40);
  for (Index i = 0; i < t.size(); ++i) t[i] = rng.log_uniform(0.1, 20.0);
  IVec e = IVec::Ones(40);
  StepFunction s = kaplan_meier(t, e);
  for (double q : {0.2, 0.9, 3.0, 8.0, 25.0}) {
    double emp = 0.0;
    for (Index i = 0; i < t.size(); ++i) emp += (t[i] > q) ? 1.0 : 0.0;
    CHECK(s(q) == doctest::Approx(emp / 40.0).epsilon(1e-12));
  }
  // permutation invariance
  Vec t2 = t.reverse();
  StepFunction s2 = kaplan_meier(t2, e);
  CHECK(s.times == s2.times);
  CHECK(s.values == s2.values);
}

TEST_CASE("c_index_td hand enumeration") {
  Vec t = vec({1, 2, 3});
  IVec e = ivec({1, 1, 1});
  // comparable pairs: (1,2), (1,3), (2,3). Survival-at-t_i values chosen so
  // the pair outcomes are concordant, discordant, concordant.
  Mat s_at(3, 3);  // s_at(j, i) = S(t_i | x_j)
  s_at << 0.2, 0.0, 0.0,   // subject 1
          0.5, 0.3, 0.0,   // subject 2
          0.1, 0.6, 0.1;   // subject 3
  auto surv = [&](Index j, double time) {
    int i = static_cast<int>(time) - 1;
    return s_at(j, i);
  };
  CHECK(c_index_td(surv, t, e) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("c_index_td boundary behaviors") {
  Vec t = vec({1, 2, 3, 4});
  IVec e = ivec({1, 1, 1, 1});
  // later subjects predicted to survive longer -> perfect concordance
  auto good = [&](Index j, double time) { return std::exp(-time / (1.0 + double(j))); };
  CHECK(c_index_td(good, t, e) == doctest::Approx(1.0));
  // identical curves for everyone -> all ties at 0.5
  auto flat = [&](Index, double time) { return std::exp(-time); };
  CHECK(c_index_td(flat, t, e) == doctest::Approx(0.5));
  // flipping the ordering flips the score when there are no ties
  auto bad = [&](Index j, double time) { return std::exp(-time * (1.0 + double(j))); };
  CHECK(c_index_td(bad, t, e) == doctest::Approx(1.0 - c_index_td(good, t, e)));
  // no comparable pairs -> explicit error, never silent 0
  CHECK_THROWS_AS(c_index_td(flat, vec({1, 2}), ivec({0, 0})), DomainError);
  CHECK_THROWS_AS(c_index_td(flat, vec({2, 2}), ivec({1, 1})), DomainError);  // time tie
}

TEST_CASE("c_index_td invariant to increasing transforms of survival") {
  Rng rng(23);
  Vec t(20);
  IVec e(20);
  Mat risk(20, 1);
  for (Index i = 0; i < 20; ++i) {
    t[i] = rng.log_uniform(0.5, 10.0);
    e[i] = rng.bernoulli(0.7) ? 1 : 0;
    risk(i, 0) = rng.normal();
  }
  auto surv = [&](Index j, double time) { return std::exp(-time * std::exp(risk(j, 0))); };
  auto warped = [&](Index j, double time) {
    double s = surv(j, time);
    return std::tanh(3.0 * s) + 0.1 * s;  // strictly increasing warp
  };
  CHECK(c_index_td(surv, t, e) == doctest::Approx(c_index_td(warped, t, e)).epsilon(1e-12));
}

TEST_CASE("quantile bins against the independent oracle") {
  Vec t(100);
  for (Index i = 0; i < 100; ++i) t[i] = double(i + 1);
  BinEdges be = quantile_bins(t, 10);
  REQUIRE(be.n_bins() == 10);
  CHECK(be.edges.front() == 0.0);
  CHECK(std::isinf(be.edges.back()));
  std::vector<double> raw(t.data(), t.data() + t.size());
  for (int k = 1; k < 10; ++k) {
    CHECK(be.edges[static_cast<std::size_t>(k)] ==
          doctest::Approx(quantile_oracle(raw, k / 10.0)).epsilon(1e-12));
    CHECK(be.edges[static_cast<std::size_t>(k)] == doctest::Approx(10.0 * k));
  }
  // edges bracket every finite observation and bin_of is total
  for (Index i = 0; i < 100; ++i) {
    int b = be.bin_of(t[i]);
    CHECK(b >= 0);
    CHECK(b < 10);
    CHECK(t[i] >= be.edges[static_cast<std::size_t>(b)]);
  }
  CHECK(be.bin_of(0.5) == 0);
  CHECK(be.bin_of(1e9) == 9);
}

TEST_CASE("quantile bins degenerate cases") {
  BinEdges two = quantile_bins(vec({1, 2}), 2);
  CHECK(two.n_bins() == 2);
  CHECK(two.edges[1] == doctest::Approx(1.0));  // h = p*n convention median
  // duplicate-heavy times merge bins with a recorded count
  BinEdges dup = quantile_bins(Vec::Constant(50, 4.0), 10);
  CHECK(dup.n_bins() < 10);
  CHECK(dup.merged_bins > 0);
  CHECK_THROWS_AS(quantile_bins(vec({1, 2, 3}), 1), DomainError);
  CHECK_THROWS_AS(quantile_bins(Vec(), 4), DomainError);
}

TEST_CASE("standardize_times examples and idempotence") {
  SurvivalDataset ds;
  ds.X = Mat::Zero(2, 1);
  ds.time = vec({2, 4});
  ds.event = ivec({1, 1});
  SurvivalDataset out = standardize_times(ds);
  CHECK(out.time[0] == doctest::Approx(0.5));
  CHECK(out.time[1] == doctest::Approx(1.0));
  SurvivalDataset again = standardize_times(out);
  CHECK(again.time == out.time);
  SurvivalDataset one;
  one.X = Mat::Zero(1, 1);
  one.time = vec({7});
  one.event = ivec({1});
  CHECK(standardize_times(one).time[0] == doctest::Approx(1.0));
}

TEST_CASE("kolmogorov-smirnov helpers sanity") {
  // exact uniform grid sample against the uniform CDF: tiny statistic
  std::vector<double> s;
  for (int i = 0; i < 1000; ++i) s.push_back((i + 0.5) / 1000.0);
  double d = ks_statistic(s, [](double x) { return std::clamp(x, 0.0, 1.0); });
  CHECK(d < 0.001);
  CHECK(ks_pvalue(d, s.size()) > 0.99);
  // grossly wrong CDF: huge statistic, vanishing p
  double d2 = ks_statistic(s, [](double) { return 0.0; });
  CHECK(d2 > 0.9);
  CHECK(ks_pvalue(d2, s.size()) < 1e-6);
}
