// Acceptance suite: one PASS/FAIL line per criterion. Exit status 0 only when
// every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "cdekit/appendix_d.hpp"
#include "cdekit/config.hpp"
#include "cdekit/densities.hpp"
#include "cdekit/entropy.hpp"
#include "cdekit/error.hpp"
#include "cdekit/harness.hpp"
#include "cdekit/quadrature.hpp"
#include "cdekit/runner.hpp"

using namespace cdekit;
namespace ad = cdekit::appendix_d;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double limit_seconds;  // 0: no runtime limit
  std::function<Verdict()> run;
};

// Sweep results kept for the determinism rerun.
struct Ran {
  std::string config;
  std::string csv;
};
std::vector<Ran> g_ran;
fs::path g_out_dir;
std::size_t g_workers = 0;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// ---------------------------------------------------------------------------
// Random same-family pairs

struct Pair {
  ResponseDensity p, q;
  ReferenceMeasure nu;
};

const ReferenceMeasure& real_line() {
  static const ReferenceMeasure nu = ReferenceMeasure::cauchy_real();
  return nu;
}
const ReferenceMeasure& naturals() {
  static const ReferenceMeasure nu = ReferenceMeasure::cauchy_naturals();
  return nu;
}
const ReferenceMeasure& positive_line() {
  static const ReferenceMeasure nu = ReferenceMeasure::gamma_weighted(2.0, 0.5);
  return nu;
}

std::vector<double> simplex(Rng& rng, std::size_t k, double floor) {
  std::vector<double> v(k);
  double s = 0;
  for (auto& x : v) s += (x = floor + std::exponential_distribution<double>(1.0)(rng));
  for (auto& x : v) x /= s;
  return v;
}

ReferenceMeasure atoms_ref(std::size_t k) {
  std::vector<double> a(k);
  for (std::size_t i = 0; i < k; ++i) a[i] = static_cast<double>(i);
  return ReferenceMeasure::counting(a);
}

enum class Fam { Gaussian, Poisson, Gamma, Bernoulli, Multinomial };
const std::vector<std::pair<Fam, std::string>> kFamilies = {{Fam::Gaussian, "gaussian"},
                                                            {Fam::Poisson, "poisson"},
                                                            {Fam::Gamma, "gamma"},
                                                            {Fam::Bernoulli, "bernoulli"},
                                                            {Fam::Multinomial, "multinomial"}};

// `count` densities of one family sharing a reference measure.
std::pair<std::vector<ResponseDensity>, ReferenceMeasure> draw_family(Fam f, std::size_t count, Rng& rng) {
  std::vector<ResponseDensity> out;
  switch (f) {
    case Fam::Gaussian:
      for (std::size_t i = 0; i < count; ++i) out.emplace_back(Gaussian{uniform(rng, -3, 3), uniform(rng, 0.3, 3)});
      return {out, real_line()};
    case Fam::Poisson:
      for (std::size_t i = 0; i < count; ++i) out.emplace_back(Poisson{uniform(rng, 0.1, 20)});
      return {out, naturals()};
    case Fam::Gamma:
      for (std::size_t i = 0; i < count; ++i) out.emplace_back(Gamma{uniform(rng, 0.5, 6), uniform(rng, 0.2, 3)});
      return {out, positive_line()};
    case Fam::Bernoulli:
      for (std::size_t i = 0; i < count; ++i) out.emplace_back(Bernoulli{uniform(rng, 0.01, 0.99)});
      return {out, ReferenceMeasure::binary()};
    case Fam::Multinomial: {
      const auto k = static_cast<std::size_t>(std::uniform_int_distribution<int>(2, 6)(rng));
      for (std::size_t i = 0; i < count; ++i) out.emplace_back(Multinomial{simplex(rng, k, 0.0)});
      return {out, atoms_ref(k)};
    }
  }
  return {out, ReferenceMeasure::binary()};
}

// ---------------------------------------------------------------------------
// Criteria

Verdict divergence_correctness() {
  Rng rng(101);
  std::string detail;
  bool ok = true;
  const DivergenceOptions numeric{.force_numeric = true};
  for (const auto& [fam, name] : kFamilies) {
    double worst = 0;
    std::size_t closed = 0;
    for (int i = 0; i < 1000; ++i) {
      auto [d, nu] = draw_family(fam, 2, rng);
      const auto& p = d[0];
      const auto& q = d[1];
      for (auto div : {hellinger_sq, kl, l1_distance}) {
        const DivergenceValue a = div(p, q, nu, {});
        const DivergenceValue b = div(p, q, nu, numeric);
        if (a.method == DivergenceMethod::ClosedForm) ++closed;
        worst = std::max(worst, std::abs(a.value - b.value));
      }
    }
    ok = ok && worst <= 1e-6 && closed >= 2000;
    detail += fmt::format("{} max|closed-quad|={:.1e} ({} closed); ", name, worst, closed);
  }
  const double spot = hellinger_sq(Gaussian{0, 1}, Gaussian{2, 1}, real_line()).value;
  const double err = std::abs(spot - (1 - std::exp(-0.5)));
  ok = ok && err <= 1e-12;
  detail += fmt::format("gaussian spot |err|={:.1e}", err);
  return {ok, detail};
}

Verdict inequality_suites() {
  Rng rng(202);
  const int instances = 10000;
  const double slack = 1e-10;
  std::uniform_int_distribution<int> pick(0, 4);
  auto family = [&](bool bounded_ratio) {
    Fam f = kFamilies[static_cast<std::size_t>(pick(rng))].first;
    if (bounded_ratio && (f == Fam::Poisson || f == Fam::Gamma)) f = Fam::Bernoulli;
    return f;
  };

  // Smoothing lemma.
  double smooth_worst = -kInf;
  for (int i = 0; i < instances; ++i) {
    auto [d, nu] = draw_family(family(false), 2, rng);
    const double alpha = uniform(rng, 0, 1);
    const double lhs = hellinger_sq(d[0], smooth(d[1], alpha, nu), nu).value;
    smooth_worst = std::max(smooth_worst, lhs - hellinger_sq(d[0], d[1], nu).value - alpha);
  }

  // Yang bound on pairs with a bounded log ratio: discrete families with
  // interior probabilities, Gaussians with p narrower than q.
  double yang_worst = -kInf;
  for (int i = 0; i < instances; ++i) {
    const Fam f = family(true);
    ResponseDensity p = Bernoulli{0.5}, q = Bernoulli{0.5};
    ReferenceMeasure nu = ReferenceMeasure::binary();
    if (f == Fam::Gaussian) {
      const double sp = uniform(rng, 0.3, 2), sq = sp * uniform(rng, 1.01, 3);
      p = Gaussian{uniform(rng, -2, 2), sp};
      q = Gaussian{uniform(rng, -2, 2), sq};
      nu = real_line();
    } else if (f == Fam::Multinomial) {
      const std::size_t k = static_cast<std::size_t>(std::uniform_int_distribution<int>(2, 6)(rng));
      p = Multinomial{simplex(rng, k, 0.01)};
      q = Multinomial{simplex(rng, k, 0.01)};
      nu = atoms_ref(k);
    } else {
      p = Bernoulli{uniform(rng, 0.001, 0.999)};
      q = Bernoulli{uniform(rng, 0.001, 0.999)};
    }
    yang_worst = std::max(yang_worst, kl(p, q, nu).value - yang_kl_bound(p, q, nu));
  }

  // Hellinger triangle inequality on same-family triples.
  double tri_worst = -kInf;
  for (int i = 0; i < instances; ++i) {
    auto [d, nu] = draw_family(family(false), 3, rng);
    auto h = [&, &nu = nu](const ResponseDensity& a, const ResponseDensity& b) {
      return std::sqrt(hellinger_sq(a, b, nu).value);
    };
    tri_worst = std::max(tri_worst, h(d[0], d[2]) - h(d[0], d[1]) - h(d[1], d[2]));
  }

  // TV = L1/2: d_H^2 <= TV <= sqrt(2) d_H.
  double tv_lo_worst = -kInf, tv_hi_worst = -kInf;
  for (int i = 0; i < instances; ++i) {
    auto [d, nu] = draw_family(family(false), 2, rng);
    const double h2 = hellinger_sq(d[0], d[1], nu).value;
    const double tv = 0.5 * l1_distance(d[0], d[1], nu).value;
    tv_lo_worst = std::max(tv_lo_worst, h2 - tv);
    tv_hi_worst = std::max(tv_hi_worst, tv - std::sqrt(2 * h2));
  }

  const bool ok = smooth_worst <= slack && yang_worst <= slack && tri_worst <= slack && tv_lo_worst <= slack &&
                  tv_hi_worst <= slack;
  return {ok, fmt::format("max excess: smoothing {:.1e}, yang {:.1e}, triangle {:.1e}, h2-tv {:.1e}, "
                          "tv-sqrt2h {:.1e}",
                          smooth_worst, yang_worst, tri_worst, tv_lo_worst, tv_hi_worst)};
}

// Exhaustive subset enumeration, independent of the library's brute-force routines.
struct Exhaustive {
  std::vector<double> d;
  std::size_t m;
  double at(std::size_t i, std::size_t j) const { return d[i * m + j]; }
  std::size_t min_cover(double eps) const {
    std::size_t best = m;
    for (std::uint32_t s = 1; s < (1U << m); ++s) {
      bool ok = true;
      for (std::size_t i = 0; i < m && ok; ++i) {
        bool hit = false;
        for (std::size_t j = 0; j < m && !hit; ++j) hit = (s >> j & 1U) && at(i, j) <= eps;
        ok = hit;
      }
      if (ok) best = std::min<std::size_t>(best, static_cast<std::size_t>(__builtin_popcount(s)));
    }
    return best;
  }
  template <class Rel>
  std::size_t max_subset(Rel rel, std::uint32_t allowed) const {
    std::size_t best = 0;
    for (std::uint32_t s = 0; s < (1U << m); ++s) {
      if ((s & ~allowed) != 0) continue;
      bool ok = true;
      for (std::size_t i = 0; i < m && ok; ++i)
        for (std::size_t j = i + 1; j < m && ok; ++j)
          if ((s >> i & 1U) && (s >> j & 1U) && !rel(at(i, j))) ok = false;
      if (ok) best = std::max<std::size_t>(best, static_cast<std::size_t>(__builtin_popcount(s)));
    }
    return best;
  }
  std::size_t max_pack(double eps) const {
    return max_subset([&](double v) { return v > eps; }, (1U << m) - 1);
  }
  std::size_t max_local(std::size_t ref, double eps) const {
    std::uint32_t ball = 0;
    for (std::size_t j = 0; j < m; ++j)
      if (at(ref, j) <= eps) ball |= 1U << j;
    return max_subset([&](double v) { return v >= eps / 2; }, ball);
  }
};

Verdict cover_packing_sandwich() {
  Rng rng(303);
  std::size_t failures = 0, oracle_mismatch = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const auto m = static_cast<std::size_t>(std::uniform_int_distribution<int>(1, 12)(rng));
    const auto n = static_cast<std::size_t>(std::uniform_int_distribution<int>(1, 8)(rng));
    std::vector<ConditionalModel> pool;
    std::vector<std::array<double, 2>> ws;
    for (std::size_t i = 0; i < m; ++i) {
      ws.push_back({uniform(rng, -2, 2), uniform(rng, -2, 2)});
      pool.emplace_back(GaussianLinearParams{{ws.back()[0], ws.back()[1]}, 1.0});
    }
    Covariates x(2);
    for (std::size_t t = 0; t < n; ++t) {
      const double v[2] = {uniform(rng, -1, 1), uniform(rng, -1, 1)};
      x.push_back(v);
    }
    Exhaustive ex{std::vector<double>(m * m), m};
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        double s = 0;
        for (std::size_t t = 0; t < n; ++t) {
          const double dm = x[t][0] * (ws[i][0] - ws[j][0]) + x[t][1] * (ws[i][1] - ws[j][1]);
          s += 1 - std::exp(-dm * dm / 8);
        }
        ex.d[i * m + j] = std::sqrt(s / static_cast<double>(n));
      }
    PointwiseOracle oracle(pool, EmpiricalMetricSpec{BaseMetric::Hellinger, 2.0, x});
    const double dmax = *std::max_element(ex.d.begin(), ex.d.end());
    const double eps = uniform(rng, 0.05, 1.05) * std::max(dmax, 1e-3) * 0.8;

    const std::size_t n_eps = brute_min_cover(oracle, eps).members.size();
    const std::size_t m_eps = brute_max_pack(oracle, eps).size();
    const std::size_t m_2eps = brute_max_pack(oracle, 2 * eps).size();
    const std::size_t m_half = brute_max_pack(oracle, eps / 2).size();
    if (n_eps != ex.min_cover(eps) || m_eps != ex.max_pack(eps)) ++oracle_mismatch;
    bool ok = m_2eps <= n_eps && n_eps <= m_eps;

    const EmpiricalCover greedy = greedy_pack_cover(oracle, eps);
    ok = ok && greedy.certificate <= eps && cover_certificate(oracle, greedy.members) <= eps;

    std::size_t loc = 0;
    for (std::size_t f = 0; f < m; ++f) {
      const std::size_t exact = brute_local_pack(oracle, f, eps).size();
      if (exact != ex.max_local(f, eps)) ++oracle_mismatch;
      loc = std::max(loc, exact);
    }
    ok = ok && std::log(double(m_half)) - std::log(double(m_eps)) <= std::log(double(loc)) && loc <= m_half;
    if (!ok) ++failures;
  }
  return {failures == 0 && oracle_mismatch == 0,
          fmt::format("200 pools: {} sandwich violations, {} brute-force/exhaustive mismatches", failures,
                      oracle_mismatch)};
}

ad::Params random_appendix_params(Rng& rng) {
  ad::Params p;
  p.gamma = uniform(rng, 0.01, 0.49);
  const int comps = std::uniform_int_distribution<int>(1, 3)(rng);
  double total = 0;
  for (int l = 0; l < comps; ++l) {
    ad::Component c;
    c.lambda = uniform(rng, 0, 0.25);
    c.weight = uniform(rng, 0.1, 1);
    total += c.weight;
    const double eta = ad::eta_from_lambda(p.gamma, c.lambda);
    // Bumps only where the centers stay distinct in double precision.
    if (eta >= 1e-9) {
      for (double base : {-0.375, 0.125}) {
        double z = base + eta + uniform(rng, 0, 4) * eta;
        while (z + eta <= base + 0.25 && c.centers.size() < 40) {
          c.centers.push_back(z);
          c.signs.push_back(uniform(rng, 0, 1) < 0.5 ? -1 : 1);
          z += 2 * eta + uniform(rng, 0, 6) * eta;
        }
      }
    }
    p.components.push_back(std::move(c));
  }
  for (auto& c : p.components) c.weight /= total;
  return p;
}

Verdict appendix_construction() {
  Rng rng(404);
  const std::vector<double> offset_kinks = {-0.375, -0.125, 0.125, 0.375};
  const double f2 = integrate_piecewise([](double x) { return ad::f(x) * ad::f(x); }, -0.5, 0.5, offset_kinks, 1e-13).value;
  const double f2_err = std::abs(f2 - 1.0 / 24);

  double ortho = 0;
  for (int i = 0; i < 100; ++i) {
    const double eta = uniform(rng, 1e-4, 0.1);
    const double base = uniform(rng, 0, 1) < 0.5 ? -0.375 : 0.125;
    const double z = base + eta + uniform(rng, 0, 1) * (0.25 - 2 * eta);
    const std::vector<double> kinks = {z - eta / 2, z, z + eta / 2};
    const double v = integrate_piecewise([&](double x) { return ad::f(x) * ad::omega(eta, z - x); }, z - eta, z + eta,
                                         kinks, 1e-13)
                         .value;
    ortho = std::max(ortho, std::abs(v));
  }

  std::size_t fail_a = 0, fail_b = 0, fail_c = 0;
  double min_ratio_b = kInf;
  for (int rep = 0; rep < 1000; ++rep) {
    const ad::Params p = random_appendix_params(rng);
    ad::validate(p);
    const double lb = p.lambda_bar();
    for (int i = 0; i < 20; ++i) {
      const double x = uniform(rng, -0.5, 0.5);
      const double dev = std::abs(ad::mean(p, x) - 0.5);
      if (dev > lb * std::abs(ad::f(x)) + 1e-15 || lb * std::abs(ad::f(x)) > 1.0 / 16 + 1e-15) ++fail_a;
      const double xp = i % 2 ? uniform(rng, -0.5, 0.5) : std::clamp(x + 1e-4 * uniform(rng, -1, 1), -0.5, 0.5);
      if (std::abs(ad::mean(p, x) - ad::mean(p, xp)) > std::pow(std::abs(x - xp), p.gamma) + 1e-15) ++fail_c;
    }
    const auto kinks = ad::breakpoints(p);
    const double e = integrate_piecewise(
                         [&](double x) { return point_hellinger_sq(Bernoulli{0.5}, Bernoulli{ad::mean(p, x)}); }, -0.5,
                         0.5, kinks, 1e-14)
                         .value;
    if (lb > 0) min_ratio_b = std::min(min_ratio_b, e / (lb * lb / 192));
    if (e < lb * lb / 192) ++fail_b;
  }
  const bool ok = f2_err <= 1e-9 && ortho <= 1e-9 && fail_a == 0 && fail_b == 0 && fail_c == 0;
  return {ok, fmt::format("|int f^2 - 1/24|={:.1e}, max |<f,omega>|={:.1e}, violations a/b/c = {}/{}/{}, "
                          "min E d_H^2 / (lambda^2/192) = {:.3f}",
                          f2_err, ortho, fail_a, fail_b, fail_c, min_ratio_b)};
}

// ---------------------------------------------------------------------------
// Sweeps driven by the shipped configs

ExperimentConfig load(const std::string& name) {
  ExperimentConfig cfg = parse_config(load_document((fs::path(CDEKIT_SOURCE_DIR) / "configs" / name).string()));
  if (g_workers) {
    cfg.workers = g_workers;
    if (cfg.sweep) cfg.sweep->workers = g_workers;
    if (cfg.mle_gap) cfg.mle_gap->workers = g_workers;
    if (cfg.adaptive) cfg.adaptive->workers = g_workers;
  }
  return cfg;
}

SweepResult run_sweep(const ExperimentConfig& cfg) {
  switch (cfg.kind) {
    case ExperimentKind::RiskSweep: return risk_sweep(*cfg.sweep);
    case ExperimentKind::RegretSweep: return regret_sweep(*cfg.sweep);
    case ExperimentKind::MleGap: return mle_gap_experiment(*cfg.mle_gap);
    case ExperimentKind::Adaptive: return adaptive_experiment(*cfg.adaptive);
    default: throw ConfigurationError("not a sweep config");
  }
}

std::string csv_of(const SweepResult& r) {
  std::ostringstream s;
  write_risk_csv(r.records, s);
  return s.str();
}

// Runs a config, keeps its CSV for the determinism check and writes the artifacts.
SweepResult run_config(const std::string& name) {
  const ExperimentConfig cfg = load(name);
  SweepResult r = run_sweep(cfg);
  const std::string csv = csv_of(r);
  g_ran.push_back({name, csv});
  if (!g_out_dir.empty()) {
    write_atomic(g_out_dir / (cfg.id + ".csv"), csv);
    Json summary = sweep_summary(r, experiment_kind_name(cfg.kind));
    summary["csv"] = cfg.id + ".csv";
    summary["config"] = cfg.document;
    write_atomic(g_out_dir / (cfg.id + ".summary.json"), summary.dump(2) + "\n");
  }
  return r;
}

std::string slope_text(const RateFit& f) { return fmt::format("{:.3f}", f.slope); }

Verdict rate_criterion(const std::string& config, double lo, double hi) {
  const SweepResult r = run_config(config);
  const auto& [label, fit] = *r.kl_fits.begin();
  std::size_t failures = 0;
  for (const auto& rep : r.reports) failures += rep.failures;
  const bool ok = fit.slope >= lo && fit.slope <= hi && failures == 0;
  return {ok, fmt::format("{} KL slope {} in [{}, {}], {} failed fits", label, slope_text(fit), lo, hi, failures)};
}

Verdict mle_gap() {
  const SweepResult r = run_config("mle-gap.toml");
  const std::size_t m = r.n_grid.size();
  bool ordered = true;
  std::string detail;
  for (std::size_t k = m - 2; k < m; ++k) {
    const RiskReport& mle = r.report("grid-mle", r.n_grid[k]);
    const RiskReport& agg = r.report("aggregation", r.n_grid[k]);
    const bool sep = mle.hellinger.mean - mle.hellinger.halfwidth > agg.hellinger.mean + agg.hellinger.halfwidth;
    ordered = ordered && sep;
    detail += fmt::format("n={}: mle {:.3g}±{:.2g} vs agg {:.3g}±{:.2g}; ", r.n_grid[k], mle.hellinger.mean,
                          mle.hellinger.halfwidth, agg.hellinger.mean, agg.hellinger.halfwidth);
  }
  const double s_mle = r.hellinger_fits.at("grid-mle").slope;
  const double s_agg = r.hellinger_fits.at("aggregation").slope;
  const bool shallower = s_mle - s_agg >= 0.03;
  detail += fmt::format("slopes mle {:.3f}, agg {:.3f}, gap {:.3f} >= 0.03", s_mle, s_agg, s_mle - s_agg);
  return {ordered && shallower, detail};
}

// Paired per-replication differences regret - n * KL risk of the Cesaro average.
Verdict online_to_batch() {
  bool ok = true;
  std::string detail;
  for (const std::string config : {"regret-gaussian.toml", "regret-threshold.toml"}) {
    const SweepResult r = run_config(config);
    for (const RiskReport& rep : r.reports) {
      std::vector<double> diff;
      for (std::size_t i = 0; i < rep.regrets.size(); ++i)
        diff.push_back(rep.regrets[i] - static_cast<double>(rep.n) * rep.kl_losses[i]);
      const Interval d = mean_ci(diff);
      const bool pass = d.mean >= -3 * d.halfwidth && rep.failures == 0;
      ok = ok && pass;
      detail += fmt::format("{} n={}: regret {:.2f}, n*risk {:.2f}, diff {:.2f}±{:.2f}; ", r.class_name, rep.n,
                            rep.regret.mean, static_cast<double>(rep.n) * rep.kl.mean, d.mean, d.halfwidth);
    }
  }
  return {ok, detail};
}

Verdict adaptive_oracle() {
  const ExperimentConfig cfg = load("adaptive.toml");
  const SweepResult r = run_config("adaptive.toml");
  const std::size_t models = cfg.adaptive->candidates.size();
  bool ok = true;
  std::string detail;
  for (std::size_t n : r.n_grid) {
    const RiskReport& a = r.report("adaptive", n);
    double best = kInf;
    std::string best_text;
    for (std::size_t m = 1; m <= models; ++m) {
      const RiskReport& c = r.report(fmt::format("model-{}", m), n);
      const double prior = 6 / (std::numbers::pi * std::numbers::pi) / static_cast<double>(m * m);
      const double penalty = 3.0 / static_cast<double>(n) * std::log(1 / prior);
      std::vector<double> diff;
      for (std::size_t i = 0; i < a.kl_losses.size(); ++i) diff.push_back(a.kl_losses[i] - c.kl_losses[i] - penalty);
      const Interval d = mean_ci(diff);
      const double excess = d.mean - 3 * d.halfwidth;
      if (excess < best) {
        best = excess;
        best_text = fmt::format("model-{} risk {:.4g} + pen {:.4g}", m, c.kl.mean, penalty);
      }
    }
    ok = ok && best <= 0 && a.failures == 0;
    detail += fmt::format("n={}: adaptive {:.4g}±{:.2g} vs {}, paired excess - 3 CI = {:.3g}", n, a.kl.mean,
                          a.kl.halfwidth, best_text, best);
  }
  return {ok, detail};
}

Verdict concentration() {
  Rng rng(505);
  Covariates atoms(1);
  for (int k = 0; k < 50; ++k) {
    const double v = k;
    atoms.push_back(std::span<const double>(&v, 1));
  }
  const auto dist = CovariateDistribution::uniform_finite(atoms);
  std::vector<ConditionalModel> cls;
  for (int i = 0; i < 8; ++i) cls.emplace_back(ThresholdParams{-kInf, 5.0 * i + 2.5, uniform(rng, 0.05, 0.95), uniform(rng, 0.05, 0.95)});
  const double r = localization_finite(8, 200);
  const ConcentrationResult res = uniform_hellinger_check(cls, dist, 200, 0.1, 500, r, rng);
  return {res.violation_frequency <= 0.1 + 0.02,
          fmt::format("violation frequency {:.3f} <= 0.12 over {} resamples, r_n = {:.4g}, max excess {:.3g}",
                      res.violation_frequency, res.resamples, r, res.max_excess)};
}

Verdict determinism() {
  if (g_ran.empty()) return {false, "no sweep ran before this check"};
  bool ok = true;
  std::string detail;
  for (const auto& ran : g_ran) {
    ExperimentConfig cfg = load(ran.config);
    // A different worker count must not change the output.
    const std::size_t workers = cfg.workers == 1 ? 2 : 1;
    if (cfg.sweep) cfg.sweep->workers = workers;
    if (cfg.mle_gap) cfg.mle_gap->workers = workers;
    if (cfg.adaptive) cfg.adaptive->workers = workers;
    const bool same = csv_of(run_sweep(cfg)) == ran.csv;
    ok = ok && same;
    detail += fmt::format("{} {}; ", ran.config, same ? "identical" : "DIFFERS");
  }
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<std::string> only;
  std::string out_dir;
  app.add_option("--only", only, "Run only the named criteria");
  app.add_option("--out-dir", out_dir, "Write the sweep CSVs and summaries here");
  app.add_option("--workers", g_workers, "Worker threads for the sweeps (0: as configured)");
  bool list = false;
  app.add_flag("--list", list, "List the criteria");
  CLI11_PARSE(app, argc, argv);
  g_out_dir = out_dir;

  const std::vector<Criterion> criteria = {
      {"divergence-correctness", 10, divergence_correctness},
      {"inequality-suites", 30, inequality_suites},
      {"cover-packing-sandwich", 60, cover_packing_sandwich},
      {"appendix-construction", 0, appendix_construction},
      {"parametric-rate", 600, [] { return rate_criterion("parametric.toml", -1.35, -0.70); }},
      {"vc-fast-rate", 0, [] { return rate_criterion("vc.toml", -1.35, -0.65); }},
      {"nonparametric-rate", 900, [] { return rate_criterion("holder.toml", -0.90, -0.45); }},
      {"mle-suboptimality", 1200, mle_gap},
      {"online-to-batch", 0, online_to_batch},
      {"adaptive-oracle", 0, adaptive_oracle},
      {"uniform-hellinger-concentration", 0, concentration},
      {"determinism", 0, determinism},
  };
  if (list) {
    for (const auto& c : criteria) std::printf("%s\n", c.name.c_str());
    return 0;
  }

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.name) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, fmt::format("error: {}", e.what())};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = c.limit_seconds <= 0 || secs <= c.limit_seconds;
    const bool pass = v.pass && in_time;
    while (!v.detail.empty() && (v.detail.back() == ' ' || v.detail.back() == ';')) v.detail.pop_back();
    if (!pass) ++failed;
    const std::string limit = c.limit_seconds > 0 ? fmt::format(", limit {:.0f} s", c.limit_seconds) : "";
    std::printf("%s %s: %s (%.1f s%s)\n", pass ? "PASS" : "FAIL", c.name.c_str(), v.detail.c_str(), secs,
                limit.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
