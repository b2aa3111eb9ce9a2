#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "asynclc/curve.hpp"
#include "asynclc/error.hpp"
#include "asynclc/rng.hpp"
#include "asynclc/simulation.hpp"

using namespace asynclc;

namespace {

double exp_cov(double s, double t) { return std::exp(-std::fabs(s - t)); }
double zero_mean(double) { return 0.0; }

McConfig small_mc(std::size_t reps) {
  McConfig mc;
  mc.replicates = reps;
  mc.seed = 3;
  mc.scb_replicates = 100;
  mc.grid = uniform_grid(0.1, 0.9, 17);
  EstimatorSpec two;
  two.scb = true;
  EstimatorSpec one;
  one.method = Method::OneStep;
  one.h1 = one.h2 = Bandwidth::rule(0.45);
  mc.estimators = {two, one};
  return mc;
}

DgpConfig small_dgp() {
  DgpConfig d;
  d.n = 120;
  d.seed = 3;
  return d;
}

}  // namespace

TEST_SUITE("simulation") {

TEST_CASE("gaussian process draws have the target moments") {
  Rng rng(11);
  const std::vector<double> one{0.5};
  const std::vector<double> two{0.2, 0.7};
  const int draws = 10000;
  double s1 = 0, s2 = 0, a2 = 0, b2 = 0, ab = 0, sa = 0, sb = 0;
  for (int r = 0; r < draws; ++r) {
    const double v = sample_gp(one, zero_mean, exp_cov, rng).values(0);
    s1 += v;
    s2 += v * v;
    const auto w = sample_gp(two, zero_mean, exp_cov, rng).values;
    sa += w(0);
    sb += w(1);
    a2 += w(0) * w(0);
    b2 += w(1) * w(1);
    ab += w(0) * w(1);
  }
  const double mean = s1 / draws;
  const double var = s2 / draws - mean * mean;
  CHECK(std::fabs(mean) < 0.04);
  CHECK(var > 0.94);
  CHECK(var < 1.06);
  const double ma = sa / draws, mb = sb / draws;
  const double corr = (ab / draws - ma * mb) /
                      std::sqrt((a2 / draws - ma * ma) * (b2 / draws - mb * mb));
  CHECK(std::fabs(corr - std::exp(-0.5)) < 0.03);
}

TEST_CASE("gaussian process edge cases") {
  Rng rng(1);
  const std::vector<double> tied{0.3, 0.3, 0.6};
  const auto g = sample_gp(tied, zero_mean, exp_cov, rng);
  CHECK(g.jittered);
  CHECK(std::fabs(g.values(0) - g.values(1)) < 1e-4);
  const std::vector<double> plain{0.3, 0.6};
  CHECK_FALSE(sample_gp(plain, zero_mean, exp_cov, rng).jittered);
  const auto bad = [](double s, double t) { return s == t ? -1.0 : 0.0; };
  try {
    sample_gp(plain, zero_mean, bad, rng);
    FAIL("expected CovarianceNotPD");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CovarianceNotPD);
  }
  const auto mean2 = [](double t) { return 2.0 * (t - 0.5) * (t - 0.5); };
  const std::vector<double> edge{0.0};
  double s = 0;
  for (int r = 0; r < 4000; ++r) s += sample_gp(edge, mean2, exp_cov, rng).values(0);
  CHECK(std::fabs(s / 4000 - 0.5) < 0.06);
}

TEST_CASE("generated datasets follow the design") {
  DgpConfig cfg;
  cfg.n = 10000;
  cfg.seed = 5;
  Rng rng(9);
  const auto d = generate_dataset(cfg, rng);
  CHECK(d.size() == 10000);
  CHECK(d.p() == 1);
  CHECK(d.q() == 1);
  double l = 0, m = 0;
  for (const auto& s : d.subjects()) {
    l += static_cast<double>(s.sync_count());
    m += static_cast<double>(s.async_count());
    CHECK(s.sync_count() >= 1);
    CHECK(std::is_sorted(s.sync_times.begin(), s.sync_times.end()));
    CHECK(std::is_sorted(s.async_times.begin(), s.async_times.end()));
  }
  CHECK(std::fabs(l / 10000 - 6.0) < 0.1);
  CHECK(std::fabs(m / 10000 - 6.0) < 0.1);

  DgpConfig small;
  small.n = 30;
  small.seed = 5;
  const auto a = generate_replicate(small, 2);
  const auto b = generate_replicate(small, 2);
  const auto c = generate_replicate(small, 3);
  CHECK(a.subject(7).responses == b.subject(7).responses);
  CHECK(a.subject(7).async_times == b.subject(7).async_times);
  CHECK(a.subject(0).sync_times != c.subject(0).sync_times);

  DgpConfig bad;
  bad.n = 0;
  CHECK_THROWS_AS(bad.check(), Error);
  bad = DgpConfig{};
  bad.setting = Setting::Custom;
  CHECK_THROWS_AS(bad.check(), Error);
  CHECK(parse_setting("ii") == Setting::II);
  CHECK(parse_setting("1") == Setting::I);
  CHECK_THROWS_AS(parse_setting("iii"), Error);
}

TEST_CASE("noise-free data are recovered up to smoothing bias") {
  DgpConfig cfg;
  cfg.n = 400;
  cfg.noise_scale = 0.0;
  cfg.setting = Setting::Custom;
  cfg.beta = [](double t) { return 3.0 * (t - 0.4) * (t - 0.4); };
  cfg.gamma = [](double) { return 0.0; };
  const auto d = generate_replicate(cfg, 0);
  const auto c = center(d, 0.05);
  for (double t : {0.3, 0.5, 0.7}) {
    CHECK(std::fabs(fit_centering(c, t, 0.05).coef(0) - cfg.beta_at(t)) < 0.02);
  }
}

TEST_CASE("rase examples") {
  const std::vector<double> a{1.0, 2.0, 3.0};
  CHECK(rase(a, a) == 0.0);
  const std::vector<double> b{1.5, 2.5, 3.5};
  CHECK(rase(a, b) == doctest::Approx(0.5).epsilon(1e-15));
  const std::vector<double> c{0.0, 0.0};
  const std::vector<double> e{3.0, 4.0};
  CHECK(rase(c, e) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-15));
}

TEST_CASE("truth hook gives zero error and full coverage") {
  auto mc = small_mc(4);
  mc.use_truth = true;
  const auto rep = run_monte_carlo(mc, small_dgp());
  for (const auto& p : rep.points) {
    CHECK(p.bias == 0.0);
    CHECK(p.sd == 0.0);
    CHECK(p.cp == 100.0);
    CHECK(p.count == 4);
  }
  REQUIRE_FALSE(rep.curves.empty());
  for (const auto& c : rep.curves) {
    CHECK(c.rase_mean == 0.0);
    CHECK(c.ci_coverage == 100.0);
    if (!std::isnan(c.scb_coverage)) CHECK(c.scb_coverage == 100.0);
  }
}

TEST_CASE("shrinking standard errors lowers coverage") {
  auto mc = small_mc(30);
  mc.curve_metrics = false;
  const auto full = run_monte_carlo(mc, small_dgp());
  mc.se_scale = 0.5;
  const auto shrunk = run_monte_carlo(mc, small_dgp());
  double a = 0, b = 0;
  REQUIRE(full.points.size() == shrunk.points.size());
  for (std::size_t k = 0; k < full.points.size(); ++k) {
    CHECK(shrunk.points[k].cp <= full.points[k].cp);
    CHECK(shrunk.points[k].bias == full.points[k].bias);
    a += full.points[k].cp;
    b += shrunk.points[k].cp;
  }
  CHECK(b < a);
}

TEST_CASE("reports are identical for any thread count") {
  auto mc = small_mc(6);
  mc.threads = 1;
  const auto a = run_monte_carlo(mc, small_dgp());
  mc.threads = 3;
  const auto b = run_monte_carlo(mc, small_dgp());
  REQUIRE(a.points.size() == b.points.size());
  for (std::size_t k = 0; k < a.points.size(); ++k) {
    CHECK(a.points[k].bias == b.points[k].bias);
    CHECK(a.points[k].sd == b.points[k].sd);
    CHECK(a.points[k].mean_se == b.points[k].mean_se);
    CHECK(a.points[k].cp == b.points[k].cp);
  }
  REQUIRE(a.curves.size() == b.curves.size());
  for (std::size_t k = 0; k < a.curves.size(); ++k) {
    CHECK(a.curves[k].rase_mean == b.curves[k].rase_mean);
    CHECK((a.curves[k].scb_coverage == b.curves[k].scb_coverage ||
           (std::isnan(a.curves[k].scb_coverage) && std::isnan(b.curves[k].scb_coverage))));
  }
  REQUIRE(a.find_point("two-step h=n^-0.6 h1=n^-0.5 h2=n^-0.5", "beta", 0.6) != nullptr);
  REQUIRE(a.find_point("one-step h1=n^-0.45 h2=n^-0.45", "gamma", 0.3) != nullptr);
  CHECK(a.find_point("one-step h1=n^-0.45 h2=n^-0.45", "beta", 0.45) == nullptr);
}

TEST_CASE("failing replicates are excluded and counted") {
  McConfig mc;
  mc.replicates = 5;
  mc.curve_metrics = false;
  EstimatorSpec tiny;
  tiny.method = Method::OneStep;
  tiny.h1 = tiny.h2 = Bandwidth::fixed(0.002);
  mc.estimators = {tiny};
  DgpConfig d;
  d.n = 20;
  const auto rep = run_monte_carlo(mc, d);
  REQUIRE(rep.failures.size() == 1);
  CHECK(rep.failures[0].failures > 0);
  CHECK_FALSE(rep.failures[0].messages.empty());
  REQUIRE(rep.warnings.size() == 1);
  CHECK(rep.warnings[0].rfind("DEGENERATE_STUDY", 0) == 0);

  McConfig bad = small_mc(5);
  bad.alpha = 1.5;
  CHECK_THROWS_AS(bad.check(), Error);
  bad = small_mc(0);
  CHECK_THROWS_AS(bad.check(), Error);
}

TEST_CASE("a constant gamma with time-invariant Z is unbiased") {
  DgpConfig cfg;
  cfg.n = 400;
  cfg.seed = 21;
  cfg.setting = Setting::Custom;
  cfg.beta = [](double t) { return 3.0 * (t - 0.4) * (t - 0.4); };
  cfg.gamma = [](double) { return 0.5; };
  cfg.z_time_constant = true;
  const double h = std::pow(400.0, -0.6), h2 = std::pow(400.0, -0.5);
  std::vector<double> est;
  for (std::size_t r = 0; r < 200; ++r) {
    const auto d = generate_replicate(cfg, r);
    const auto c = center(d, h);
    const auto curve = first_stage_curve(d, Method::TwoStepCentering, h, &c);
    const CurveFunction beta = [&](double t) { return curve(t); };
    est.push_back(fit_constant_coefficients(c, {false, true}, h2, &beta).gamma(0));
  }
  const double mean = std::accumulate(est.begin(), est.end(), 0.0) / est.size();
  double ss = 0;
  for (double v : est) ss += (v - mean) * (v - mean);
  const double mcse = std::sqrt(ss / (est.size() - 1) / est.size());
  CHECK(std::fabs(mean - 0.5) < 3.0 * mcse);
}

}
