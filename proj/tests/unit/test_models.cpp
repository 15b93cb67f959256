#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "cdekit/appendix_d.hpp"
#include "cdekit/error.hpp"
#include "cdekit/models.hpp"
#include "oracles.hpp"

using namespace cdekit;
namespace ad = cdekit::appendix_d;

namespace {

// Literal transcriptions of the piecewise definitions, evaluated independently.
double f_ref(double x) {
  if (x >= -0.5 && x <= -0.375) return -2 * x - 1;
  if (x >= -0.375 && x <= -0.125) return -0.25;
  if (x >= -0.125 && x <= 0.125) return 2 * x;
  if (x >= 0.125 && x <= 0.375) return 0.25;
  return -2 * x + 1;
}
double omega_ref(double eta, double x) {
  if (x >= -eta && x <= -eta / 2) return 1 + x / eta;
  if (x >= -eta / 2 && x <= eta / 2) return -x / eta;
  if (x >= eta / 2 && x <= eta) return x / eta - 1;
  return 0.0;
}

// Random admissible single-component parameters: centers packed left to right
// inside both plateaus with random gaps.
ad::Component random_component(std::mt19937_64& rng, double gamma, double lambda) {
  std::uniform_real_distribution<double> u(0, 1);
  double eta = ad::eta_from_lambda(gamma, lambda);
  ad::Component c;
  c.weight = 1.0;
  c.lambda = lambda;
  for (double base : {-0.375, 0.125}) {
    double z = base + eta + u(rng) * 4 * eta;
    while (z + eta <= base + 0.25 && c.centers.size() < 400) {
      c.centers.push_back(z);
      c.signs.push_back(u(rng) < 0.5 ? -1 : 1);
      z += 2 * eta + u(rng) * 6 * eta;
    }
  }
  return c;
}

ad::Params random_params(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  ad::Params p;
  p.gamma = 0.2 + 0.29 * u(rng);
  int comps = 1 + static_cast<int>(u(rng) * 3);
  double total = 0;
  for (int l = 0; l < comps; ++l) {
    // keeps eta above 1e-7 so centers stay distinct in floating point
    double lambda = 0.15 + 0.1 * u(rng);
    auto c = random_component(rng, p.gamma, lambda);
    c.weight = 0.1 + u(rng);
    total += c.weight;
    p.components.push_back(std::move(c));
  }
  for (auto& c : p.components) c.weight /= total;
  return p;
}

double bern_h2_ref(double a, double b) {
  return 1 - std::sqrt(a * b) - std::sqrt((1 - a) * (1 - b));
}

}  // namespace

TEST_CASE("offset function and tent bump") {
  CHECK(ad::f(-0.5) == doctest::Approx(0.0));
  CHECK(ad::f(0.25) == doctest::Approx(0.25));
  CHECK_THROWS_AS(ad::f(0.6), DomainError);
  for (double x = -0.5; x <= 0.5; x += 1.0 / 997) CHECK(ad::f(x) == doctest::Approx(f_ref(x)).epsilon(1e-15));

  double integral = oracle::simpson([](double x) { return f_ref(x) * f_ref(x); }, -0.5, 0.5, 80000);
  CHECK(std::abs(integral - 1.0 / 24) < 1e-9);

  double eta = 0.01;
  CHECK(ad::omega(eta, 0) == 0.0);
  CHECK(ad::omega(eta, -eta / 2) == doctest::Approx(0.5));
  CHECK(ad::omega(eta, 2 * eta) == 0.0);
  for (double x = -eta; x <= eta; x += eta / 37) {
    CHECK(ad::omega(eta, x) == doctest::Approx(omega_ref(eta, x)).epsilon(1e-14));
    CHECK(ad::omega(eta, -x) == doctest::Approx(-ad::omega(eta, x)).epsilon(1e-14));
  }
}

TEST_CASE("orthogonality of offset and tents") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  for (int rep = 0; rep < 100; ++rep) {
    double eta = 1e-4 + u(rng) * 0.1;
    double base = u(rng) < 0.5 ? -0.375 : 0.125;
    double z = base + eta + u(rng) * (0.25 - 2 * eta);
    double v = oracle::simpson([&](double x) { return f_ref(x) * omega_ref(eta, z - x); }, z - eta, z + eta, 4000);
    CHECK(std::abs(v) < 1e-9);
  }
}

TEST_CASE("admissible centers and parameter validation") {
  double eta = 0.01;
  std::vector<double> ok = {-0.3, -0.2, 0.2};
  CHECK(ad::in_admissible_set(eta, ok));
  std::vector<double> overlap = {0.2, 0.215};
  CHECK_FALSE(ad::in_admissible_set(eta, overlap));
  std::vector<double> outside = {0.0};
  CHECK_FALSE(ad::in_admissible_set(eta, outside));
  std::vector<double> edge = {0.13};
  CHECK_FALSE(ad::in_admissible_set(eta, edge));

  ad::Params p;
  p.gamma = 0.6;
  CHECK_THROWS_AS(ad::validate(p), DomainError);
  p.gamma = 0.25;
  p.components.push_back({1.0, 0.3, {}, {}});
  CHECK_THROWS_AS(ad::validate(p), DomainError);
}

TEST_CASE("appendix mean examples") {
  ad::Params zero;
  zero.gamma = 0.25;
  zero.components.push_back({1.0, 0.0, {}, {}});
  for (double x : {-0.5, -0.2, 0.0, 0.3, 0.5}) CHECK(ad::mean(zero, x) == 0.5);

  double lambda = 0.2;
  ad::Params one;
  one.gamma = 0.25;
  one.components.push_back({1.0, lambda, {}, {}});
  CHECK(ad::mean(one, 0.25) == doctest::Approx(0.5 + lambda / 8).epsilon(1e-15));

  // Direct formula with an active bump, against the literal definitions.
  double eta = ad::eta_from_lambda(0.25, lambda);
  CHECK(std::pow(eta, 0.25) == doctest::Approx(std::pow(2.0, 0.75) * lambda * lambda));
  one.components[0].centers = {0.25};
  one.components[0].signs = {-1};
  for (double x : {0.25 - eta / 2, 0.25 + eta / 3, 0.25 - eta}) {
    double ref = 0.5 + lambda / 2 * f_ref(x) - lambda * lambda * omega_ref(eta, 0.25 - x);
    CHECK(ad::mean(one, x) == doctest::Approx(ref).epsilon(1e-15));
  }
}

TEST_CASE("appendix class properties on random parameters") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int rep = 0; rep < 1000; ++rep) {
    auto p = random_params(rng);
    ad::validate(p);
    double lb = p.lambda_bar();
    // a) |mean - 1/2| <= lambda_bar |f| <= 1/16
    for (int i = 0; i < 20; ++i) {
      double x = u(rng);
      double dev = std::abs(ad::mean(p, x) - 0.5);
      CHECK(dev <= lb * std::abs(f_ref(x)) + 1e-15);
      CHECK(lb * std::abs(f_ref(x)) <= 1.0 / 16 + 1e-15);
    }
    // c) Hoelder-gamma with constant 1, mixing far and near pairs
    for (int i = 0; i < 10; ++i) {
      double x = u(rng);
      double xp = i % 2 ? u(rng) : std::clamp(x + 1e-4 * u(rng), -0.5, 0.5);
      CHECK(std::abs(ad::mean(p, x) - ad::mean(p, xp)) <= std::pow(std::abs(x - xp), p.gamma) + 1e-15);
    }
    if (rep % 10 == 0) {
      // b) E d_H^2(1/2, mean(x)) >= lambda_bar^2 / 192, integrated piecewise.
      auto br = ad::breakpoints(p);
      br.insert(br.begin(), -0.5);
      br.push_back(0.5);
      double e = 0;
      for (std::size_t k = 0; k + 1 < br.size(); ++k) {
        double a = std::max(-0.5, br[k]), b = std::min(0.5, br[k + 1]);
        if (b <= a) continue;
        e += oracle::simpson([&](double x) { return bern_h2_ref(0.5, ad::mean(p, x)); }, a, b, 8);
      }
      CHECK(e >= lb * lb / 192);
    }
  }
}

TEST_CASE("separated subset yields admissible witness centers") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<double> xs(2000);
  for (double& x : xs) x = u(rng);
  std::sort(xs.begin(), xs.end());
  double eta = 0.2 / 2001;
  auto idx = ad::separated_subset(xs, eta);
  std::vector<double> centers;
  for (auto i : idx) centers.push_back(xs[i] - eta / 2);
  CHECK(ad::in_admissible_set(eta, centers));
  CHECK(idx.size() > xs.size() / 8);
  for (auto i : idx) CHECK(ad::omega(eta, xs[i] - eta / 2 - xs[i]) == doctest::Approx(0.5));
}

TEST_CASE("covariate samplers") {
  Rng rng(42);
  auto unif = CovariateDistribution::uniform_interval(-0.5, 0.5);
  auto xs = unif.sample(100000, rng);
  double mean = 0;
  for (double v : xs.data) {
    CHECK(unif.contains(std::span<const double>(&v, 1)));
    mean += v;
  }
  CHECK(std::abs(mean / 1e5) < 0.005);

  auto fin = CovariateDistribution::uniform_finite(Covariates(1, {-1.0, 0.0, 2.0}));
  auto fs = fin.sample(100, rng);
  std::set<double> seen(fs.data.begin(), fs.data.end());
  CHECK(seen.size() == 3);

  auto ball = CovariateDistribution::uniform_ball(3, 2.0);
  auto bs = ball.sample(1000, rng);
  CHECK(bs.size() == 1000);
  for (std::size_t i = 0; i < bs.size(); ++i) CHECK(ball.contains(bs[i]));

  auto norm = CovariateDistribution::normal(0, 1);
  CHECK(norm.sample(10, rng).size() == 10);

  Rng a(7), b(7);
  CHECK(unif.sample(50, a).data == unif.sample(50, b).data);

  auto grid = CovariateDistribution::weighted_grid(Covariates(1, {0.0, 1.0}), {1.0, 3.0});
  CHECK(grid.weights()[1] == doctest::Approx(0.75));
}

TEST_CASE("discretization counts") {
  ClassSpec thr;
  thr.kind = ClassKind::BernoulliThreshold;
  thr.theta_step = 0.5;
  Covariates x4(1, {0.3, -1.2, 0.9, 2.5});
  auto pool = discretize(thr, 0.1, &x4);
  CHECK(pool.members().size() == 45);  // (4 + 1) cut points x 3 x 3

  ClassSpec gl;
  gl.kind = ClassKind::GaussianLinear;
  gl.grid_step = 1.0;
  auto gp = discretize(gl, 0.1);
  REQUIRE(gp.members().size() == 3);
  std::vector<double> ws;
  for (const auto& m : gp.members()) ws.push_back(std::get<GaussianLinearParams>(m.params()).w[0]);
  CHECK(ws == std::vector<double>{-1, 0, 1});

  ClassSpec hb;
  hb.kind = ClassKind::HolderBump;
  hb.cells = 3;
  hb.lambda_grid = {0.1, 0.2};
  CHECK(discretize(hb, 0.1).members().size() == 16);

  // Dyadic GaussianLinear grid contains w = 1/2 when fine enough.
  gl.grid_step.reset();
  auto fine = discretize(gl, 0.05);
  bool has_half = false;
  for (const auto& m : fine.members()) has_half |= std::get<GaussianLinearParams>(m.params()).w[0] == 0.5;
  CHECK(has_half);

  gl.max_pool = 5;
  CHECK_THROWS_AS(discretize(gl, 0.001), CapacityError);
  CHECK_THROWS_AS(discretize(thr, 0.1), ConfigurationError);
}

TEST_CASE("linear grids meet the resolution") {
  Rng rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto kind : {ClassKind::GaussianLinear, ClassKind::PoissonLogLinear, ClassKind::GammaInverseLink}) {
    ClassSpec s;
    s.kind = kind;
    s.dim = 2;
    s.x_bound = 1.0;
    s.w_bound = 1.0;
    s.shape = 2.0;
    double r = 0.1;
    auto pool = discretize(s, r);
    for (int rep = 0; rep < 50; ++rep) {
      std::vector<double> w = {u(rng) * 0.7, u(rng) * 0.7};
      ConditionalModel truth = kind == ClassKind::GaussianLinear ? ConditionalModel(GaussianLinearParams{w, 1.0})
                               : kind == ClassKind::PoissonLogLinear
                                   ? ConditionalModel(PoissonLogLinearParams{w})
                                   : ConditionalModel(GammaInverseLinkParams{w, 2.0, 1.0, 1.0});
      double best = 1e9;
      for (const auto& m : pool.members()) {
        double worst = 0;
        for (double a : {-1.0, 1.0})
          for (double b : {-1.0, 1.0}) {
            double x[2] = {a / std::sqrt(2.0), b / std::sqrt(2.0)};
            worst = std::max(worst, point_hellinger_sq(truth.evaluate(x), m.evaluate(x)));
          }
        best = std::min(best, worst);
      }
      CHECK(std::sqrt(best) <= r);
    }
  }
}

TEST_CASE("cell-level pool covers Hoelder members") {
  ClassSpec s;
  s.kind = ClassKind::HolderBump;
  s.holder_scheme = HolderScheme::CellLevels;
  s.holder_gamma = 1.0;
  s.lambda_max = 0.2;
  double r = 0.05;
  auto pool = discretize(s, r);
  CHECK(pool.product());
  HolderBumpParams truth{1.0, 0.2, {1}};
  for (double x = 0; x <= 1; x += 1.0 / 503) {
    const auto& block = pool.blocks[pool.block_of(x)];
    CHECK(block.contains(x));
    double m = holder_bump_mean(truth, x), best = 1;
    for (const auto& g : block.members) best = std::min(best, std::abs(g.evaluate_scalar_mean(x) - m));
    CHECK(std::sqrt(bern_h2_ref(m, m + best)) <= r);
  }
}

TEST_CASE("models produce valid densities") {
  Rng rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  ClassSpec g;
  g.kind = ClassKind::GammaInverseLink;
  g.dim = 3;
  g.grid_step = 0.5;
  auto pool = discretize(g, 0.1);
  auto ball = CovariateDistribution::uniform_ball(3, 1.0);
  auto xs = ball.sample(100, rng);
  for (const auto& m : pool.members())
    for (std::size_t i = 0; i < xs.size(); ++i) {
      auto d = std::get<Gamma>(m.evaluate(xs[i]));
      CHECK(d.scale > 0);
    }
  ConditionalModel bump(HolderBumpParams{1.0, 0.2, {1}});
  CHECK(bump.evaluate_scalar_mean(0.5) == doctest::Approx(0.7));
  CHECK(bump.evaluate_scalar_mean(0.0) == 0.5);
  CHECK(list_classes().size() == 6);
  CHECK(parse_class_kind("appendix_d") == ClassKind::AppendixD);
  CHECK_THROWS_AS(parse_class_kind("nope"), ConfigurationError);
  CHECK(g.density_bound() == doctest::Approx(std::pow(3.0, 1.0)));
}
