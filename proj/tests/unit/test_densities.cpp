#include <cmath>
#include <numbers>
#include <random>

#include "cdekit/densities.hpp"
#include "cdekit/error.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace cdekit;

namespace {

const ReferenceMeasure kReal = ReferenceMeasure::cauchy_real();
const ReferenceMeasure kBin = ReferenceMeasure::binary();
const ReferenceMeasure kNat = ReferenceMeasure::cauchy_naturals();

double h2_bernoulli_bruteforce(double a, double b) {
  double s = 0;
  for (int y = 0; y < 2; ++y) {
    double pa = y ? a : 1 - a, pb = y ? b : 1 - b;
    s += 0.5 * std::pow(std::sqrt(pa) - std::sqrt(pb), 2);
  }
  return s;
}

}  // namespace

TEST_CASE("hellinger examples") {
  CHECK(hellinger_sq(Gaussian{0, 1}, Gaussian{0, 1}, kReal).value == 0.0);
  auto v = hellinger_sq(Gaussian{0, 1}, Gaussian{2, 1}, kReal);
  CHECK(v.method == DivergenceMethod::ClosedForm);
  CHECK(std::abs(v.value - (1 - std::exp(-0.5))) < 1e-12);

  double beta = 0.1;
  auto b = hellinger_sq(Bernoulli{0.5}, Bernoulli{0.5 + beta}, kBin);
  CHECK(b.value >= beta * beta / 2);
  CHECK(std::abs(b.value - h2_bernoulli_bruteforce(0.5, 0.6)) < 1e-14);
  auto bq = hellinger_sq(Bernoulli{0.5}, Bernoulli{0.5 + beta}, kBin, {.force_numeric = true});
  CHECK(bq.method == DivergenceMethod::Quadrature);
  CHECK(std::abs(bq.value - b.value) < 1e-14);
}

TEST_CASE("closed forms agree with independent Simpson quadrature") {
  // Gaussian with unequal variances.
  Gaussian a{0.3, 0.8}, b{-0.4, 1.3};
  double h2 = oracle::simpson([&](double y) {
    double r = std::sqrt(oracle::normal_pdf(y, a.mean, a.stddev)) - std::sqrt(oracle::normal_pdf(y, b.mean, b.stddev));
    return 0.5 * r * r;
  }, -20, 20);
  double klv = oracle::simpson([&](double y) {
    double p = oracle::normal_pdf(y, a.mean, a.stddev);
    return p * std::log(p / oracle::normal_pdf(y, b.mean, b.stddev));
  }, -20, 20);
  CHECK(std::abs(hellinger_sq(a, b, kReal).value - h2) < 1e-10);
  CHECK(std::abs(kl(a, b, kReal).value - klv) < 1e-10);
  CHECK(std::abs(hellinger_sq(a, b, kReal, {.force_numeric = true}).value - h2) < 1e-9);

  // Gamma pair.
  Gamma g{2.5, 0.7}, h{1.5, 1.4};
  auto nu = ReferenceMeasure::gamma_weighted(2.0, 0.5);
  double gh2 = oracle::simpson([&](double y) {
    double r = std::sqrt(oracle::gamma_pdf(y, g.shape, g.scale)) - std::sqrt(oracle::gamma_pdf(y, h.shape, h.scale));
    return 0.5 * r * r;
  }, 0, 60, 2000000);
  CHECK(std::abs(hellinger_sq(g, h, nu).value - gh2) < 1e-8);
  CHECK(std::abs(hellinger_sq(g, h, nu, {.force_numeric = true}).value - gh2) < 1e-8);

  // Poisson pair against a plain sum.
  double s = 0, sk = 0;
  for (int y = 0; y < 200; ++y) {
    double p = oracle::poisson_pmf(y, 2.2), q = oracle::poisson_pmf(y, 4.1);
    s += 0.5 * std::pow(std::sqrt(p) - std::sqrt(q), 2);
    sk += p * std::log(p / q);
  }
  CHECK(std::abs(hellinger_sq(Poisson{2.2}, Poisson{4.1}, kNat).value - s) < 1e-12);
  CHECK(std::abs(kl(Poisson{2.2}, Poisson{4.1}, kNat).value - sk) < 1e-12);
}

TEST_CASE("closed forms match the exponential-family parametrisations") {
  // Gaussian with common sigma: 1 - exp(-(t - t')^2 / (8 sigma^2)).
  double t = 0.7, u = -1.1, sig = 1.7;
  CHECK(std::abs(hellinger_sq(Gaussian{t, sig}, Gaussian{u, sig}, kReal).value -
                 (1 - std::exp(-(t - u) * (t - u) / (8 * sig * sig)))) < 1e-14);
  // Poisson in natural parameter theta = log(rate).
  double v = hellinger_sq(Poisson{std::exp(t)}, Poisson{std::exp(u)}, kNat).value;
  CHECK(std::abs(v - (1 - std::exp(std::exp((t + u) / 2) - 0.5 * (std::exp(t) + std::exp(u))))) < 1e-14);
  // Gamma with p_theta = Gamma(alpha, -1/(alpha theta)), theta < 0.
  double al = 2.3, th = -0.8, th2 = -1.9;
  double g = hellinger_sq(Gamma{al, -1 / (al * th)}, Gamma{al, -1 / (al * th2)},
                          ReferenceMeasure::gamma_weighted(al, 0.5)).value;
  double ref = 1 - std::exp(al * std::log(-2 / (th + th2)) -
                            0.5 * al * (std::log(-1 / th) + std::log(-1 / th2)));
  CHECK(std::abs(g - ref) < 1e-13);
}

TEST_CASE("kl and l1 examples") {
  Bernoulli p{0.37};
  CHECK(kl(p, p, kBin).value == 0.0);
  CHECK(std::abs(kl(Gaussian{0, 1}, Gaussian{1, 1}, kReal).value - 0.5) < 1e-15);
  double ln2 = 1.0 * std::log(1.0 / 0.5);
  CHECK(std::abs(kl(Bernoulli{1}, Bernoulli{0.5}, kBin).value - ln2) < 1e-15);
  CHECK(std::isinf(kl(Bernoulli{0.5}, Bernoulli{1}, kBin).value));

  CHECK(l1_distance(p, p, kBin).value == 0.0);
  CHECK(std::abs(l1_distance(Bernoulli{0.2}, Bernoulli{0.7}, kBin).value -
                 (std::abs(0.2 - 0.7) + std::abs(0.8 - 0.3))) < 1e-15);
  auto two = ReferenceMeasure::counting({0.0, 1.0});
  Tabulated uni{{0, 1}, {0.5, 0.5}, true}, point{{0, 1}, {1.0, 0.0}, true};
  CHECK(std::abs(l1_distance(uni, point, two).value - (0.5 + 0.5)) < 1e-15);
}

TEST_CASE("smoothing") {
  ResponseDensity q = Gaussian{0.4, 0.9};
  auto s0 = smooth(q, 0.0, kReal);
  CHECK(std::get<Gaussian>(s0.family()).mean == 0.4);

  // nu/K is a fixed point of T_alpha.
  auto uni = kBin.normalized();
  auto su = smooth(uni, 0.7, kBin);
  CHECK(std::abs(std::get<Bernoulli>(su.family()).p - 0.5) < 1e-15);

  Tabulated one{{0, 1}, {0.0, 1.0}, true};
  auto st = smooth(one, 1.0, kBin);
  const auto& tab = std::get<Tabulated>(st.family());
  // (q + alpha/K)/(1 + alpha) per atom with K = 2, alpha = 1.
  CHECK(std::abs(tab.values[0] - (0.0 + 0.5) / 2) < 1e-15);
  CHECK(std::abs(tab.values[1] - (1.0 + 0.5) / 2) < 1e-15);

  // Pointwise lower bound alpha/(K(1+alpha)) w.r.t. nu.
  double alpha = 0.05;
  auto sg = smooth(ResponseDensity(Gaussian{3, 0.2}), alpha, kReal);
  for (double y = -50; y <= 50; y += 0.37) {
    double wrt_nu = sg.density(y) / kReal.density(y);
    CHECK(wrt_nu >= alpha / (kReal.total_mass() * (1 + alpha)) - 1e-15);
  }
  // Bernoulli smoothing collapses to Ber((p + alpha/2)/(1+alpha)).
  auto sb = smooth(ResponseDensity(Bernoulli{0.9}), 0.25, kBin);
  CHECK(std::abs(std::get<Bernoulli>(sb.family()).p - (0.9 + 0.125) / 1.25) < 1e-15);
}

TEST_CASE("normalization of constructed densities") {
  auto total = [](const ResponseDensity& r, double lo, double hi) {
    return oracle::simpson([&](double y) { return r.density(y); }, lo, hi, 400000);
  };
  CHECK(std::abs(total(Gaussian{1, 0.5}, -10, 12) - 1) < 1e-8);
  CHECK(std::abs(total(Gamma{3, 0.5}, 1e-12, 60) - 1) < 1e-8);
  auto sm = smooth(ResponseDensity(Gaussian{0, 1}), 0.3, kReal);
  double cauchy_tail = 2 * (0.5 - std::atan(1e4) / std::numbers::pi);
  CHECK(std::abs(total(sm, -1e4, 1e4) + 0.3 / 1.3 * cauchy_tail - 1) < 1e-6);
  double s = 0;
  for (int y = 0; y < 100; ++y) s += ResponseDensity(Poisson{7}).density(y);
  CHECK(std::abs(s - 1) < 1e-12);
  CHECK_THROWS_AS(ResponseDensity(Multinomial{{0.2, 0.2}}), DomainError);
  CHECK_THROWS_AS(ResponseDensity(Tabulated{{0, 1, 2}, {0.5, 0.4}, false}), DomainError);
}

TEST_CASE("log density and sampling") {
  CHECK(log_density(Bernoulli{0.5}, 1) == std::log(0.5));
  CHECK(std::abs(log_density(Gaussian{0, 1}, 0) + 0.5 * std::log(2 * std::numbers::pi)) < 1e-15);
  CHECK_THROWS_AS(log_density(Bernoulli{0.5}, 2), DomainError);
  CHECK_THROWS_AS(log_density(Poisson{1}, 0.5), DomainError);

  Rng rng(7);
  const int n = 100000;
  double m = 0;
  for (int i = 0; i < n; ++i) m += sample_response(Poisson{3}, rng);
  m /= n;
  CHECK(std::abs(m - 3) <= 3 * std::sqrt(3.0 / n));

  // Discrete Cauchy sampler against its pmf on the first few atoms.
  ResponseDensity dc = DiscreteCauchy{};
  std::vector<int> hits(4, 0);
  for (int i = 0; i < n; ++i) {
    double y = dc.sample(rng);
    if (y < 4) ++hits[static_cast<int>(y)];
  }
  for (int y = 0; y < 4; ++y) {
    double p = dc.density(y);
    CHECK(std::abs(hits[y] / double(n) - p) < 4 * std::sqrt(p * (1 - p) / n));
  }
}

TEST_CASE("reference measure mismatch is a configuration error") {
  CHECK_THROWS_AS(hellinger_sq(Gaussian{0, 1}, Gaussian{1, 1}, kBin), ConfigurationError);
  CHECK_THROWS_AS(kl(Poisson{1}, Poisson{2}, kBin), ConfigurationError);
  CHECK_THROWS_AS(hellinger_sq(Bernoulli{0.3}, Gaussian{0, 1}, kReal), ConfigurationError);
  CHECK(kNat.total_mass() <= 1 + 2 / std::numbers::pi);
}

TEST_CASE("mixtures against smoothed members use numeric routes") {
  auto q = smooth(ResponseDensity(Gaussian{1, 1}), 0.1, kReal);
  ResponseDensity p = Gaussian{0, 1};
  auto v = hellinger_sq(p, q, kReal);
  CHECK(v.method == DivergenceMethod::Quadrature);
  double ref = oracle::simpson([&](double y) {
    double a = oracle::normal_pdf(y, 0, 1);
    double b = (oracle::normal_pdf(y, 1, 1) + 0.1 * oracle::cauchy_pdf(y)) / 1.1;
    return 0.5 * std::pow(std::sqrt(a) - std::sqrt(b), 2);
  }, -3000, 3000, 6000000);
  // Beyond |y| = 3000 only the Cauchy part of q remains.
  ref += 0.5 * (0.1 / 1.1) * (1 - 2 * std::atan(3000.0) / std::numbers::pi);
  CHECK(std::abs(v.value - ref) < 1e-7);
  // Smoothing lemma on this instance.
  CHECK(v.value <= hellinger_sq(p, Gaussian{1, 1}, kReal).value + 0.1);
  // Poisson smoothed against the discrete Cauchy reference: finite KL.
  auto ps = smooth(ResponseDensity(Poisson{2}), 0.01, kNat);
  double k = kl(Poisson{5}, ps, kNat).value;
  CHECK(std::isfinite(k));
  CHECK(k > 0);
}

TEST_CASE("yang bound") {
  ResponseDensity p = Bernoulli{0.9}, q = Bernoulli{0.5};
  CHECK(yang_kl_bound(p, p, kBin) == 0.0);
  double h2 = hellinger_sq(p, q, kBin).value;
  double bound = 2 * (2 + std::log(0.9 / 0.5)) * h2;
  CHECK(std::abs(yang_kl_bound(p, q, kBin) - bound) < 1e-15);
  CHECK(kl(p, q, kBin).value <= bound);

  // q = T_{1/n} g has log ratio at most log(2 B K n).
  const int n = 200;
  auto qs = smooth(ResponseDensity(Bernoulli{0.0}), 1.0 / n, kBin);
  double s = sup_log_ratio(ResponseDensity(Bernoulli{1.0}), qs, kBin);
  CHECK(s <= std::log(2.0 * 1.0 * 2.0 * n));
  CHECK(std::isfinite(yang_kl_bound(ResponseDensity(Bernoulli{1.0}), qs, kBin)));

  // Mixture route: Gaussian against a smoothed Gaussian.
  auto qg = smooth(ResponseDensity(Gaussian{0.5, 1}), 0.02, kReal);
  ResponseDensity pg = Gaussian{0, 1};
  CHECK(kl(pg, qg, kReal).value <= yang_kl_bound(pg, qg, kReal) + 1e-10);
  CHECK(std::isinf(sup_log_ratio(pg, ResponseDensity(Gaussian{1, 1}), kReal)));
}

TEST_CASE("hellinger is a bounded symmetric metric on random triples") {
  Rng rng(11);
  std::uniform_real_distribution<double> u(-2, 2), s(0.3, 2.0);
  for (int i = 0; i < 200; ++i) {
    ResponseDensity a = Gaussian{u(rng), s(rng)}, b = Gaussian{u(rng), s(rng)}, c = Gaussian{u(rng), s(rng)};
    double ab = std::sqrt(hellinger_sq(a, b, kReal).value);
    double ba = std::sqrt(hellinger_sq(b, a, kReal).value);
    double bc = std::sqrt(hellinger_sq(b, c, kReal).value);
    double ac = std::sqrt(hellinger_sq(a, c, kReal).value);
    CHECK(std::abs(ab - ba) < 1e-15);
    CHECK(ab <= 1.0);
    CHECK(ac <= ab + bc + 1e-12);
  }
}
