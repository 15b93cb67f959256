#include "cdekit/densities.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <fmt/format.h>

#include "cdekit/error.hpp"
#include "cdekit/quadrature.hpp"

namespace cdekit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kPi = std::numbers::pi;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

bool is_integer(double y) { return y >= 0 && std::floor(y) == y; }

bool finite_discrete(const Family& f) {
  if (auto* t = std::get_if<Tabulated>(&f)) return t->discrete;
  return std::holds_alternative<Bernoulli>(f) || std::holds_alternative<Multinomial>(f);
}

bool family_discrete(const Family& f) {
  if (auto* t = std::get_if<Tabulated>(&f)) return t->discrete;
  return std::holds_alternative<Bernoulli>(f) || std::holds_alternative<Multinomial>(f) ||
         std::holds_alternative<Poisson>(f) || std::holds_alternative<DiscreteCauchy>(f);
}

bool on_naturals(const Family& f) {
  return std::holds_alternative<Poisson>(f) || std::holds_alternative<DiscreteCauchy>(f);
}

double safe_log(double v) { return v > 0 ? std::log(v) : kNegInf; }

// Index of atom y in a discrete tabulated grid, or -1.
long atom_index(const Tabulated& t, double y) {
  auto it = std::lower_bound(t.grid.begin(), t.grid.end(), y - 1e-12);
  if (it != t.grid.end() && std::abs(*it - y) <= 1e-12) return it - t.grid.begin();
  return -1;
}

// Cell of y in a continuous tabulated grid (right endpoint joins the last cell), or -1.
long cell_index(const Tabulated& t, double y) {
  if (y < t.grid.front() || y > t.grid.back()) return -1;
  auto it = std::upper_bound(t.grid.begin(), t.grid.end(), y);
  long i = static_cast<long>(it - t.grid.begin()) - 1;
  return std::min<long>(i, static_cast<long>(t.values.size()) - 1);
}

// Log density with -inf off the support (never throws).
double raw_log(const Family& f, double y) {
  return std::visit(
      Overloaded{
          [&](const Bernoulli& b) {
            if (y == 1.0) return safe_log(b.p);
            if (y == 0.0) return safe_log(1.0 - b.p);
            return kNegInf;
          },
          [&](const Gaussian& g) {
            double z = (y - g.mean) / g.stddev;
            return -0.5 * z * z - std::log(g.stddev) - 0.5 * std::log(2 * kPi);
          },
          [&](const Poisson& p) {
            if (!is_integer(y)) return kNegInf;
            return y * std::log(p.rate) - p.rate - std::lgamma(y + 1);
          },
          [&](const Gamma& g) {
            if (y < 0) return kNegInf;
            if (y == 0) {
              if (g.shape < 1) return kInf;
              if (g.shape > 1) return kNegInf;
              return -std::log(g.scale);
            }
            return (g.shape - 1) * std::log(y) - y / g.scale - std::lgamma(g.shape) -
                   g.shape * std::log(g.scale);
          },
          [&](const Multinomial& m) {
            if (!is_integer(y) || y >= static_cast<double>(m.probs.size())) return kNegInf;
            return safe_log(m.probs[static_cast<std::size_t>(y)]);
          },
          [&](const Tabulated& t) {
            long i = t.discrete ? atom_index(t, y) : cell_index(t, y);
            return i < 0 ? kNegInf : safe_log(t.values[static_cast<std::size_t>(i)]);
          },
          [&](const Cauchy& c) {
            double z = (y - c.location) / c.scale;
            return -std::log(kPi * c.scale * (1 + z * z));
          },
          [&](const DiscreteCauchy&) {
            if (!is_integer(y)) return kNegInf;
            return -std::log(discrete_cauchy_normalizer() * (1 + y * y));
          },
      },
      f);
}

bool in_support(const Family& f, double y) {
  return std::visit(
      Overloaded{
          [&](const Bernoulli&) { return y == 0.0 || y == 1.0; },
          [&](const Gaussian&) { return std::isfinite(y); },
          [&](const Poisson&) { return is_integer(y); },
          [&](const Gamma&) { return y >= 0 && std::isfinite(y); },
          [&](const Multinomial& m) {
            return is_integer(y) && y < static_cast<double>(m.probs.size());
          },
          [&](const Tabulated& t) {
            return t.discrete ? atom_index(t, y) >= 0 : cell_index(t, y) >= 0;
          },
          [&](const Cauchy&) { return std::isfinite(y); },
          [&](const DiscreteCauchy&) { return is_integer(y); },
      },
      f);
}

void validate(const Family& f) {
  auto bad = [](const std::string& what) { throw DomainError("invalid density: " + what); };
  std::visit(Overloaded{
                 [&](const Bernoulli& b) {
                   if (!(b.p >= 0 && b.p <= 1)) bad(fmt::format("Bernoulli mean {}", b.p));
                 },
                 [&](const Gaussian& g) {
                   if (!(g.stddev > 0) || !std::isfinite(g.mean))
                     bad(fmt::format("Gaussian({}, {})", g.mean, g.stddev));
                 },
                 [&](const Poisson& p) {
                   if (!(p.rate > 0) || !std::isfinite(p.rate))
                     bad(fmt::format("Poisson rate {}", p.rate));
                 },
                 [&](const Gamma& g) {
                   if (!(g.shape > 0 && g.scale > 0) || !std::isfinite(g.scale))
                     bad(fmt::format("Gamma({}, {})", g.shape, g.scale));
                 },
                 [&](const Multinomial& m) {
                   if (m.probs.empty()) bad("empty multinomial");
                   double s = 0;
                   for (double v : m.probs) {
                     if (!(v >= 0)) bad("negative multinomial probability");
                     s += v;
                   }
                   if (std::abs(s - 1) > 1e-8) bad(fmt::format("multinomial sums to {}", s));
                 },
                 [&](const Tabulated& t) {
                   std::size_t need = t.discrete ? t.grid.size() : t.grid.size() - 1;
                   if (t.grid.size() < (t.discrete ? 1u : 2u) || t.values.size() != need)
                     bad("tabulated grid/value size mismatch");
                   if (!std::is_sorted(t.grid.begin(), t.grid.end()) ||
                       std::adjacent_find(t.grid.begin(), t.grid.end()) != t.grid.end())
                     bad("tabulated grid must be strictly increasing");
                   double s = 0;
                   for (std::size_t i = 0; i < t.values.size(); ++i) {
                     if (!(t.values[i] >= 0)) bad("negative tabulated value");
                     s += t.discrete ? t.values[i] : t.values[i] * (t.grid[i + 1] - t.grid[i]);
                   }
                   if (std::abs(s - 1) > 1e-8) bad(fmt::format("tabulated density sums to {}", s));
                 },
                 [&](const Cauchy& c) {
                   if (!(c.scale > 0)) bad(fmt::format("Cauchy scale {}", c.scale));
                 },
                 [&](const DiscreteCauchy&) {},
             },
             f);
}

std::string describe_family(const Family& f) {
  return std::visit(
      Overloaded{
          [](const Bernoulli& b) { return fmt::format("Bernoulli({})", b.p); },
          [](const Gaussian& g) { return fmt::format("Gaussian({}, {})", g.mean, g.stddev); },
          [](const Poisson& p) { return fmt::format("Poisson({})", p.rate); },
          [](const Gamma& g) { return fmt::format("Gamma({}, {})", g.shape, g.scale); },
          [](const Multinomial& m) { return fmt::format("Multinomial(k={})", m.probs.size()); },
          [](const Tabulated& t) {
            return fmt::format("Tabulated({}, {} points)", t.discrete ? "discrete" : "continuous",
                               t.grid.size());
          },
          [](const Cauchy& c) { return fmt::format("Cauchy({}, {})", c.location, c.scale); },
          [](const DiscreteCauchy&) { return std::string("DiscreteCauchy"); },
      },
      f);
}

double sample_family(const Family& f, Rng& rng) {
  return std::visit(
      Overloaded{
          [&](const Bernoulli& b) {
            return std::uniform_real_distribution<double>(0, 1)(rng) < b.p ? 1.0 : 0.0;
          },
          [&](const Gaussian& g) { return std::normal_distribution<double>(g.mean, g.stddev)(rng); },
          [&](const Poisson& p) {
            return static_cast<double>(std::poisson_distribution<long>(p.rate)(rng));
          },
          [&](const Gamma& g) { return std::gamma_distribution<double>(g.shape, g.scale)(rng); },
          [&](const Multinomial& m) {
            return static_cast<double>(
                std::discrete_distribution<std::size_t>(m.probs.begin(), m.probs.end())(rng));
          },
          [&](const Tabulated& t) {
            std::vector<double> mass(t.values.size());
            for (std::size_t i = 0; i < mass.size(); ++i)
              mass[i] = t.discrete ? t.values[i] : t.values[i] * (t.grid[i + 1] - t.grid[i]);
            std::size_t i = std::discrete_distribution<std::size_t>(mass.begin(), mass.end())(rng);
            if (t.discrete) return t.grid[i];
            return std::uniform_real_distribution<double>(t.grid[i], t.grid[i + 1])(rng);
          },
          [&](const Cauchy& c) { return std::cauchy_distribution<double>(c.location, c.scale)(rng); },
          [&](const DiscreteCauchy&) {
            // Rejection from floor of a half-Cauchy draw, whose pmf is
            // (2/pi) atan(1/(1+y+y^2)); the ratio to 1/(1+y^2) peaks at y = 1.
            auto ratio = [](double y) { return 1.0 / ((1 + y * y) * std::atan(1.0 / (1 + y + y * y))); };
            const double top = ratio(1.0);
            std::uniform_real_distribution<double> u(0, 1);
            for (;;) {
              double v = std::tan(0.5 * kPi * u(rng));
              if (!std::isfinite(v) || v > 1e15) continue;
              double y = std::floor(v);
              if (u(rng) * top <= ratio(y)) return y;
            }
          },
      },
      f);
}

// ---- closed forms ------------------------------------------------------------

double bern_h2(double a, double b) {
  double v = 1.0 - (std::sqrt(a * b) + std::sqrt((1 - a) * (1 - b)));
  return std::clamp(v, 0.0, 1.0);
}

double xlogxy(double x, double y) {
  if (x == 0) return 0.0;
  if (y == 0) return kInf;
  return x * std::log(x / y);
}

double bern_kl(double a, double b) { return xlogxy(a, b) + xlogxy(1 - a, 1 - b); }

double gauss_h2(const Gaussian& a, const Gaussian& b) {
  double s2 = a.stddev * a.stddev + b.stddev * b.stddev;
  double d = a.mean - b.mean;
  double bc = std::sqrt(2 * a.stddev * b.stddev / s2) * std::exp(-d * d / (4 * s2));
  return std::clamp(1.0 - bc, 0.0, 1.0);
}

double gauss_kl(const Gaussian& a, const Gaussian& b) {
  double d = a.mean - b.mean;
  double r = a.stddev / b.stddev;
  return std::log(b.stddev / a.stddev) + 0.5 * (r * r + d * d / (b.stddev * b.stddev)) - 0.5;
}

double pois_h2(double a, double b) {
  double d = std::sqrt(a) - std::sqrt(b);
  return std::clamp(-std::expm1(-0.5 * d * d), 0.0, 1.0);
}

double pois_kl(double a, double b) { return a * std::log(a / b) - a + b; }

double gamma_h2(const Gamma& p, const Gamma& q) {
  double ab = 0.5 * (p.shape + q.shape);
  double lbc = std::lgamma(ab) - 0.5 * (std::lgamma(p.shape) + std::lgamma(q.shape)) +
               ab * std::log(2.0 / (1.0 / p.scale + 1.0 / q.scale)) -
               0.5 * (p.shape * std::log(p.scale) + q.shape * std::log(q.scale));
  return std::clamp(-std::expm1(lbc), 0.0, 1.0);
}

double gamma_kl(const Gamma& p, const Gamma& q) {
  using boost::math::digamma;
  return (p.shape - q.shape) * digamma(p.shape) - std::lgamma(p.shape) + std::lgamma(q.shape) +
         q.shape * (std::log(q.scale) - std::log(p.scale)) + p.shape * (p.scale - q.scale) / q.scale;
}

enum class Div { H2, KL, L1 };

double vector_div(const std::vector<double>& a, const std::vector<double>& b, Div d) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    switch (d) {
      case Div::H2: {
        double r = std::sqrt(a[i]) - std::sqrt(b[i]);
        s += 0.5 * r * r;
        break;
      }
      case Div::KL: s += xlogxy(a[i], b[i]); break;
      case Div::L1: s += std::abs(a[i] - b[i]); break;
    }
  }
  return d == Div::H2 ? std::clamp(s, 0.0, 1.0) : s;
}

// Closed form for a same-family pair, if one exists.
std::optional<double> closed_form(const Family& p, const Family& q, Div d) {
  if (p.index() != q.index()) return std::nullopt;
  if (auto* a = std::get_if<Bernoulli>(&p)) {
    double b = std::get<Bernoulli>(q).p;
    switch (d) {
      case Div::H2: return bern_h2(a->p, b);
      case Div::KL: return bern_kl(a->p, b);
      case Div::L1: return 2 * std::abs(a->p - b);
    }
  }
  if (auto* a = std::get_if<Gaussian>(&p)) {
    if (d == Div::H2) return gauss_h2(*a, std::get<Gaussian>(q));
    if (d == Div::KL) return gauss_kl(*a, std::get<Gaussian>(q));
    return std::nullopt;
  }
  if (auto* a = std::get_if<Poisson>(&p)) {
    if (d == Div::H2) return pois_h2(a->rate, std::get<Poisson>(q).rate);
    if (d == Div::KL) return pois_kl(a->rate, std::get<Poisson>(q).rate);
    return std::nullopt;
  }
  if (auto* a = std::get_if<Gamma>(&p)) {
    if (d == Div::H2) return gamma_h2(*a, std::get<Gamma>(q));
    if (d == Div::KL) return gamma_kl(*a, std::get<Gamma>(q));
    return std::nullopt;
  }
  if (auto* a = std::get_if<Multinomial>(&p)) {
    const auto& b = std::get<Multinomial>(q);
    if (a->probs.size() != b.probs.size()) return std::nullopt;
    return vector_div(a->probs, b.probs, d);
  }
  if (auto* a = std::get_if<Tabulated>(&p)) {
    const auto& b = std::get<Tabulated>(q);
    if (!a->discrete || !b.discrete || a->grid != b.grid) return std::nullopt;
    return vector_div(a->values, b.values, d);
  }
  return std::nullopt;
}

// ---- numeric route -------------------------------------------------------------

double mixture_log(const std::vector<Component>& comps, double y) {
  if (comps.size() == 1) return raw_log(comps[0].family, y);
  double m = kNegInf;
  double logs[64];
  std::vector<double> big;
  double* l = logs;
  if (comps.size() > 64) {
    big.resize(comps.size());
    l = big.data();
  }
  for (std::size_t i = 0; i < comps.size(); ++i) {
    l[i] = std::log(comps[i].weight) + raw_log(comps[i].family, y);
    m = std::max(m, l[i]);
  }
  if (m == kNegInf || m == kInf) return m;
  double s = 0;
  for (std::size_t i = 0; i < comps.size(); ++i) s += std::exp(l[i] - m);
  return m + std::log(s);
}

double integrand(double lp, double lq, Div d) {
  double p = std::exp(lp), q = std::exp(lq);
  switch (d) {
    case Div::H2: {
      double r = std::sqrt(p) - std::sqrt(q);
      return 0.5 * r * r;
    }
    case Div::KL:
      if (p == 0) return 0.0;
      if (lq == kNegInf) return kInf;
      return p * (lp - lq);
    case Div::L1: return std::abs(p - q);
  }
  return 0.0;
}

double dc_weight(const ResponseDensity& r) {
  double w = 0;
  for (auto& c : r.components())
    if (std::holds_alternative<DiscreteCauchy>(c.family)) w += c.weight;
  return w;
}

// Sum over y > Y of 1/(1+y^2), midpoint Euler-Maclaurin with one correction term.
double dc_tail(double Y) {
  double m = Y + 0.5;
  double deriv = -2 * m / ((1 + m * m) * (1 + m * m));
  return 0.5 * kPi - std::atan(m) - deriv / 24.0;
}

double discrete_numeric(const ResponseDensity& p, const ResponseDensity& q, Div d) {
  std::vector<double> atoms;
  double top = -1;
  bool naturals = false, heavy = false;
  for (const auto* r : {&p, &q}) {
    for (auto& c : r->components()) {
      std::visit(Overloaded{
                     [&](const Bernoulli&) { atoms.insert(atoms.end(), {0.0, 1.0}); },
                     [&](const Multinomial& m) {
                       for (std::size_t i = 0; i < m.probs.size(); ++i)
                         atoms.push_back(static_cast<double>(i));
                     },
                     [&](const Tabulated& t) { atoms.insert(atoms.end(), t.grid.begin(), t.grid.end()); },
                     [&](const Poisson& pp) {
                       naturals = true;
                       top = std::max(top, std::ceil(pp.rate + 20 * std::sqrt(pp.rate) + 60));
                     },
                     [&](const DiscreteCauchy&) {
                       naturals = true;
                       heavy = true;
                     },
                     [](const auto&) {},
                 },
                 c.family);
    }
  }
  if (heavy) top = std::max(top, 20000.0);
  if (naturals) {
    for (double a : atoms) top = std::max(top, a);
    for (double y = 0; y <= top; ++y) atoms.push_back(y);
  }
  std::sort(atoms.begin(), atoms.end());
  atoms.erase(std::unique(atoms.begin(), atoms.end()), atoms.end());
  double s = 0;
  for (double y : atoms) {
    double v = integrand(mixture_log(p.components(), y), mixture_log(q.components(), y), d);
    if (v == kInf) return kInf;
    s += v;
  }
  if (heavy) {
    // Beyond `top` only the DiscreteCauchy parts carry mass: p ~ a c(y), q ~ b c(y),
    // and each integrand is homogeneous of degree one in (p, q).
    double a = dc_weight(p), b = dc_weight(q);
    double tail = dc_tail(top) / discrete_cauchy_normalizer();
    double g = 0;
    switch (d) {
      case Div::H2: g = 0.5 * (std::sqrt(a) - std::sqrt(b)) * (std::sqrt(a) - std::sqrt(b)); break;
      case Div::KL: g = xlogxy(a, b); break;
      case Div::L1: g = std::abs(a - b); break;
    }
    if (g == kInf) return kInf;
    s += g * tail;
  }
  return d == Div::H2 ? std::clamp(s, 0.0, 1.0) : std::max(s, 0.0);
}

struct Extent {
  double lo = kInf, hi = kNegInf;       // bulk
  double dom_lo = kInf, dom_hi = kNegInf;  // support
  std::vector<double> cuts;
  bool light = true;  // tails decay at least exponentially
};

void add_extent(const Family& f, Extent& e) {
  std::visit(Overloaded{
                 [&](const Gaussian& g) {
                   e.lo = std::min(e.lo, g.mean - 10 * g.stddev);
                   e.hi = std::max(e.hi, g.mean + 10 * g.stddev);
                   e.dom_lo = kNegInf;
                   e.dom_hi = kInf;
                   e.cuts.push_back(g.mean);
                 },
                 [&](const Cauchy& c) {
                   e.lo = std::min(e.lo, c.location - 100 * c.scale);
                   e.hi = std::max(e.hi, c.location + 100 * c.scale);
                   e.dom_lo = kNegInf;
                   e.dom_hi = kInf;
                   e.cuts.push_back(c.location);
                   e.light = false;
                 },
                 [&](const Gamma& g) {
                   double top = boost::math::gamma_q_inv(g.shape, 1e-17) * g.scale;
                   e.lo = std::min(e.lo, 0.0);
                   e.hi = std::max(e.hi, top);
                   e.dom_lo = std::min(e.dom_lo, 0.0);
                   e.dom_hi = kInf;
                   for (double k : {1e-8, 1e-6, 1e-4, 1e-2, 1.0}) e.cuts.push_back(k * g.scale);
                   if (g.shape > 1) e.cuts.push_back((g.shape - 1) * g.scale);
                 },
                 [&](const Tabulated& t) {
                   e.lo = std::min(e.lo, t.grid.front());
                   e.hi = std::max(e.hi, t.grid.back());
                   e.dom_lo = std::min(e.dom_lo, t.grid.front());
                   e.dom_hi = std::max(e.dom_hi, t.grid.back());
                   e.cuts.insert(e.cuts.end(), t.grid.begin(), t.grid.end());
                 },
                 [](const auto&) {},
             },
             f);
}

double continuous_numeric(const ResponseDensity& p, const ResponseDensity& q, Div d,
                          double tol) {
  Extent ep, eq;
  for (auto& c : p.components()) add_extent(c.family, ep);
  for (auto& c : q.components()) add_extent(c.family, eq);
  Extent e = ep;
  // For KL the integrand vanishes with p, so a light-tailed p bounds the range.
  const bool p_only = d == Div::KL && ep.light;
  if (!p_only) {
    e.lo = std::min(e.lo, eq.lo);
    e.hi = std::max(e.hi, eq.hi);
    e.dom_lo = std::min(e.dom_lo, eq.dom_lo);
    e.dom_hi = std::max(e.dom_hi, eq.dom_hi);
  }
  e.cuts.insert(e.cuts.end(), eq.cuts.begin(), eq.cuts.end());
  double lo = std::max(e.lo, e.dom_lo), hi = std::min(e.hi, e.dom_hi);
  if (p_only) e.dom_lo = lo, e.dom_hi = hi;

  bool infinite = false;
  auto f = [&](double y) {
    double v = integrand(mixture_log(p.components(), y), mixture_log(q.components(), y), d);
    if (v == kInf) {
      infinite = true;
      return 0.0;
    }
    return v;
  };
  double total = integrate_piecewise(f, lo, hi, e.cuts, tol / 2).value;
  if (e.dom_lo < lo) total += integrate(f, e.dom_lo, lo, tol / 4).value;
  if (e.dom_hi > hi) total += integrate(f, hi, e.dom_hi, tol / 4).value;
  if (infinite) return kInf;
  return d == Div::H2 ? std::clamp(total, 0.0, 1.0) : std::max(total, 0.0);
}

void check_reference(const ResponseDensity& p, const ResponseDensity& q,
                     const ReferenceMeasure& nu) {
  if (!nu.supports(p) || !nu.supports(q))
    throw ConfigurationError(fmt::format("densities {} and {} are not both dominated by {}",
                                         p.describe(), q.describe(), nu.describe()));
}

DivergenceValue divergence(const ResponseDensity& p, const ResponseDensity& q,
                           const ReferenceMeasure& nu, const DivergenceOptions& opt, Div d) {
  check_reference(p, q, nu);
  if (!opt.force_numeric && !p.is_mixture() && !q.is_mixture()) {
    if (auto v = closed_form(p.family(), q.family(), d))
      return {*v, DivergenceMethod::ClosedForm};
  }
  double v = p.discrete() ? discrete_numeric(p, q, d) : continuous_numeric(p, q, d, opt.abs_tol);
  return {v, DivergenceMethod::Quadrature};
}

double family_mean_bernoulli(const Family& f) { return std::get<Bernoulli>(f).p; }

// Merge a list of finite-discrete components into one family.
Family merge_finite(const std::vector<Component>& parts) {
  bool all_bern = true, all_multi = true;
  std::size_t k = 0;
  for (auto& c : parts) {
    all_bern = all_bern && std::holds_alternative<Bernoulli>(c.family);
    if (auto* m = std::get_if<Multinomial>(&c.family)) {
      if (k == 0) k = m->probs.size();
      all_multi = all_multi && m->probs.size() == k;
    } else {
      all_multi = false;
    }
  }
  if (all_bern) {
    double p = 0;
    for (auto& c : parts) p += c.weight * family_mean_bernoulli(c.family);
    return Bernoulli{std::clamp(p, 0.0, 1.0)};
  }
  if (all_multi) {
    std::vector<double> probs(k, 0.0);
    for (auto& c : parts) {
      const auto& m = std::get<Multinomial>(c.family);
      for (std::size_t i = 0; i < k; ++i) probs[i] += c.weight * m.probs[i];
    }
    return Multinomial{probs};
  }
  std::vector<double> atoms;
  for (auto& c : parts) {
    std::visit(Overloaded{
                   [&](const Bernoulli&) { atoms.insert(atoms.end(), {0.0, 1.0}); },
                   [&](const Multinomial& m) {
                     for (std::size_t i = 0; i < m.probs.size(); ++i)
                       atoms.push_back(static_cast<double>(i));
                   },
                   [&](const Tabulated& t) { atoms.insert(atoms.end(), t.grid.begin(), t.grid.end()); },
                   [](const auto&) {},
               },
               c.family);
  }
  std::sort(atoms.begin(), atoms.end());
  atoms.erase(std::unique(atoms.begin(), atoms.end()), atoms.end());
  std::vector<double> mass(atoms.size(), 0.0);
  for (std::size_t i = 0; i < atoms.size(); ++i)
    for (auto& c : parts) mass[i] += c.weight * std::exp(raw_log(c.family, atoms[i]));
  return Tabulated{atoms, mass, true};
}

Family merge_continuous_tabulated(const std::vector<Component>& parts) {
  std::vector<double> grid;
  for (auto& c : parts) {
    const auto& t = std::get<Tabulated>(c.family);
    grid.insert(grid.end(), t.grid.begin(), t.grid.end());
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  std::vector<double> vals(grid.size() - 1, 0.0);
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    double mid = 0.5 * (grid[i] + grid[i + 1]);
    for (auto& c : parts) vals[i] += c.weight * std::exp(raw_log(c.family, mid));
  }
  return Tabulated{grid, vals, false};
}

// sup_y log(p/q) for same-family single components, if available in closed form.
std::optional<double> closed_sup_log_ratio(const Family& p, const Family& q) {
  if (p.index() != q.index()) return std::nullopt;
  if (auto* a = std::get_if<Bernoulli>(&p)) {
    double b = std::get<Bernoulli>(q).p;
    double s = kNegInf;
    if (a->p > 0) s = std::max(s, b > 0 ? std::log(a->p / b) : kInf);
    if (a->p < 1) s = std::max(s, b < 1 ? std::log((1 - a->p) / (1 - b)) : kInf);
    return s;
  }
  if (auto* a = std::get_if<Gaussian>(&p)) {
    const auto& b = std::get<Gaussian>(q);
    double s1 = a->stddev * a->stddev, s2 = b.stddev * b.stddev;
    if (s1 > s2) return kInf;
    if (s1 == s2) return a->mean == b.mean ? 0.0 : kInf;
    // log ratio = log(s_b/s_a) - (y-m_a)^2/(2 s1) + (y-m_b)^2/(2 s2), concave quadratic.
    double d = a->mean - b.mean;
    return std::log(b.stddev / a->stddev) + d * d / (2 * (s2 - s1));
  }
  if (auto* a = std::get_if<Poisson>(&p)) {
    double lb = std::get<Poisson>(q).rate;
    if (a->rate > lb) return kInf;
    return lb - a->rate;  // attained at y = 0
  }
  if (auto* a = std::get_if<Gamma>(&p)) {
    const auto& b = std::get<Gamma>(q);
    double c = std::lgamma(b.shape) - std::lgamma(a->shape) + b.shape * std::log(b.scale) -
               a->shape * std::log(a->scale);
    double da = a->shape - b.shape, dr = 1 / a->scale - 1 / b.scale;
    // log ratio = c + da log y - dr y on y > 0.
    if (da < 0 || dr < 0) return kInf;
    if (da == 0) return c;  // nonincreasing in y, sup as y -> 0
    if (dr == 0) return kInf;
    double y = da / dr;
    return c + da * std::log(y) - dr * y;
  }
  if (auto* a = std::get_if<Multinomial>(&p)) {
    const auto& b = std::get<Multinomial>(q);
    if (a->probs.size() != b.probs.size()) return std::nullopt;
    double s = kNegInf;
    for (std::size_t i = 0; i < a->probs.size(); ++i)
      if (a->probs[i] > 0) s = std::max(s, b.probs[i] > 0 ? std::log(a->probs[i] / b.probs[i]) : kInf);
    return s;
  }
  return std::nullopt;
}

}  // namespace

// ---- ResponseDensity -------------------------------------------------------------

ResponseDensity::ResponseDensity(Family f) {
  validate(f);
  comps_.push_back({1.0, std::move(f)});
}

ResponseDensity::ResponseDensity(const PointDensity& p)
    : ResponseDensity(std::visit([](const auto& v) -> Family { return v; }, p)) {}

ResponseDensity ResponseDensity::mixture(std::vector<Component> parts) {
  std::vector<Component> flat;
  double total = 0;
  for (auto& c : parts) {
    if (!(c.weight >= 0)) throw DomainError("negative mixture weight");
    if (c.weight == 0) continue;
    validate(c.family);
    total += c.weight;
    flat.push_back(std::move(c));
  }
  if (flat.empty()) throw DomainError("mixture with no positive weight");
  if (std::abs(total - 1) > 1e-9)
    throw DomainError(fmt::format("mixture weights sum to {}", total));
  for (auto& c : flat) c.weight /= total;

  const bool disc = family_discrete(flat.front().family);
  for (auto& c : flat)
    if (family_discrete(c.family) != disc)
      throw ConfigurationError("mixture mixes discrete and continuous components");

  ResponseDensity out;
  const bool all_finite = std::all_of(flat.begin(), flat.end(),
                                      [](const Component& c) { return finite_discrete(c.family); });
  const bool all_tab = std::all_of(flat.begin(), flat.end(), [](const Component& c) {
    auto* t = std::get_if<Tabulated>(&c.family);
    return t && !t->discrete;
  });
  if (flat.size() > 1 && all_finite) {
    out.comps_.push_back({1.0, merge_finite(flat)});
  } else if (flat.size() > 1 && all_tab) {
    out.comps_.push_back({1.0, merge_continuous_tabulated(flat)});
  } else {
    out.comps_ = std::move(flat);
  }
  return out;
}

const Family& ResponseDensity::family() const {
  if (comps_.size() != 1) throw DomainError("density is a mixture");
  return comps_.front().family;
}

bool ResponseDensity::discrete() const { return family_discrete(comps_.front().family); }

double ResponseDensity::log_density(double y) const {
  bool ok = std::any_of(comps_.begin(), comps_.end(),
                        [&](const Component& c) { return in_support(c.family, y); });
  if (!ok) throw DomainError(fmt::format("y = {} is outside the support of {}", y, describe()));
  return mixture_log(comps_, y);
}

double ResponseDensity::density(double y) const { return std::exp(log_density(y)); }

double ResponseDensity::sample(Rng& rng) const {
  if (comps_.size() == 1) return sample_family(comps_[0].family, rng);
  double u = std::uniform_real_distribution<double>(0, 1)(rng);
  double acc = 0;
  for (auto& c : comps_) {
    acc += c.weight;
    if (u < acc) return sample_family(c.family, rng);
  }
  return sample_family(comps_.back().family, rng);
}

std::string ResponseDensity::describe() const {
  if (comps_.size() == 1) return describe_family(comps_[0].family);
  std::string s = "Mixture[";
  for (std::size_t i = 0; i < comps_.size() && i < 4; ++i)
    s += fmt::format("{}{}*{}", i ? ", " : "", comps_[i].weight, describe_family(comps_[i].family));
  if (comps_.size() > 4) s += fmt::format(", ... ({} components)", comps_.size());
  return s + "]";
}

// ---- ReferenceMeasure ----------------------------------------------------------

ReferenceMeasure ReferenceMeasure::counting(std::vector<double> atoms, double atom_weight) {
  if (atoms.empty() || !(atom_weight > 0)) throw ConfigurationError("counting measure needs atoms and a positive weight");
  std::sort(atoms.begin(), atoms.end());
  atoms.erase(std::unique(atoms.begin(), atoms.end()), atoms.end());
  std::size_t k = atoms.size();
  Family norm;
  bool naturals_prefix = true;
  for (std::size_t i = 0; i < k; ++i) naturals_prefix = naturals_prefix && atoms[i] == static_cast<double>(i);
  if (naturals_prefix && k == 2) {
    norm = Bernoulli{0.5};
  } else if (naturals_prefix) {
    norm = Multinomial{std::vector<double>(k, 1.0 / static_cast<double>(k))};
  } else {
    norm = Tabulated{atoms, std::vector<double>(k, 1.0 / static_cast<double>(k)), true};
  }
  ReferenceMeasure m(Kind::Counting, static_cast<double>(k) * atom_weight, ResponseDensity(norm));
  m.atoms_ = std::move(atoms);
  m.atom_weight_ = atom_weight;
  return m;
}

ReferenceMeasure ReferenceMeasure::lebesgue(double lo, double hi) {
  if (!(hi > lo)) throw ConfigurationError("lebesgue interval must have hi > lo");
  ReferenceMeasure m(Kind::Lebesgue, hi - lo, ResponseDensity(Tabulated{{lo, hi}, {1.0 / (hi - lo)}, false}));
  m.lo_ = lo;
  m.hi_ = hi;
  return m;
}

ReferenceMeasure ReferenceMeasure::heavy_tailed(Family shape, double total_mass) {
  if (!(total_mass > 0)) throw ConfigurationError("reference mass must be positive");
  if (!std::holds_alternative<Cauchy>(shape) && !std::holds_alternative<DiscreteCauchy>(shape) &&
      !std::holds_alternative<Gamma>(shape))
    throw ConfigurationError("heavy-tailed reference shape must be Cauchy, DiscreteCauchy or Gamma");
  return ReferenceMeasure(Kind::HeavyTail, total_mass, ResponseDensity(std::move(shape)));
}

ReferenceMeasure ReferenceMeasure::binary() { return counting({0.0, 1.0}, 1.0); }

ReferenceMeasure ReferenceMeasure::cauchy_real() { return heavy_tailed(Cauchy{0.0, 1.0}, 1.0); }

ReferenceMeasure ReferenceMeasure::cauchy_naturals() {
  return heavy_tailed(DiscreteCauchy{}, 2.0 / kPi * discrete_cauchy_normalizer());
}

ReferenceMeasure ReferenceMeasure::gamma_weighted(double shape, double offset) {
  if (!(shape > 0 && offset > 0)) throw ConfigurationError("gamma reference needs shape, offset > 0");
  return heavy_tailed(Gamma{shape, 1.0 / (shape * offset)}, 1.0);
}

bool ReferenceMeasure::discrete() const {
  return kind_ == Kind::Counting || normalized_.discrete();
}

double ReferenceMeasure::density(double y) const {
  switch (kind_) {
    case Kind::Counting:
      return std::binary_search(atoms_.begin(), atoms_.end(), y) ? atom_weight_ : 0.0;
    case Kind::Lebesgue: return (y >= lo_ && y <= hi_) ? 1.0 : 0.0;
    case Kind::HeavyTail: {
      double l = raw_log(normalized_.components()[0].family, y);
      return mass_ * std::exp(l);
    }
  }
  return 0.0;
}

bool ReferenceMeasure::supports(const ResponseDensity& q) const {
  if (q.discrete() != discrete()) return false;
  for (auto& c : q.components()) {
    const Family& f = c.family;
    switch (kind_) {
      case Kind::Counting: {
        if (on_naturals(f)) return false;
        bool ok = std::visit(Overloaded{
                                 [&](const Bernoulli&) {
                                   return std::binary_search(atoms_.begin(), atoms_.end(), 0.0) &&
                                          std::binary_search(atoms_.begin(), atoms_.end(), 1.0);
                                 },
                                 [&](const Multinomial& m) {
                                   for (std::size_t i = 0; i < m.probs.size(); ++i)
                                     if (m.probs[i] > 0 && !std::binary_search(atoms_.begin(), atoms_.end(),
                                                                              static_cast<double>(i)))
                                       return false;
                                   return true;
                                 },
                                 [&](const Tabulated& t) {
                                   for (std::size_t i = 0; i < t.grid.size(); ++i)
                                     if (t.values[i] > 0 &&
                                         !std::binary_search(atoms_.begin(), atoms_.end(), t.grid[i]))
                                       return false;
                                   return true;
                                 },
                                 [](const auto&) { return false; },
                             },
                             f);
        if (!ok) return false;
        break;
      }
      case Kind::Lebesgue: {
        auto* t = std::get_if<Tabulated>(&f);
        if (!t || t->grid.front() < lo_ - 1e-12 || t->grid.back() > hi_ + 1e-12) return false;
        break;
      }
      case Kind::HeavyTail: {
        const Family& shape = normalized_.components()[0].family;
        if (std::holds_alternative<DiscreteCauchy>(shape)) {
          if (auto* t = std::get_if<Tabulated>(&f))
            for (double g : t->grid)
              if (!is_integer(g)) return false;
        } else if (std::holds_alternative<Gamma>(shape)) {
          if (auto* t = std::get_if<Tabulated>(&f)) {
            if (t->grid.front() < 0) return false;
          } else if (!std::holds_alternative<Gamma>(f)) {
            return false;
          }
        }
        break;
      }
    }
  }
  return true;
}

std::string ReferenceMeasure::describe() const {
  switch (kind_) {
    case Kind::Counting: return fmt::format("counting({} atoms, K={})", atoms_.size(), mass_);
    case Kind::Lebesgue: return fmt::format("lebesgue[{}, {}]", lo_, hi_);
    case Kind::HeavyTail: return fmt::format("{} x {}", mass_, normalized_.describe());
  }
  return "?";
}

// ---- operations -----------------------------------------------------------------

DivergenceValue hellinger_sq(const ResponseDensity& p, const ResponseDensity& q,
                             const ReferenceMeasure& nu, const DivergenceOptions& opt) {
  return divergence(p, q, nu, opt, Div::H2);
}

DivergenceValue kl(const ResponseDensity& p, const ResponseDensity& q, const ReferenceMeasure& nu,
                   const DivergenceOptions& opt) {
  return divergence(p, q, nu, opt, Div::KL);
}

DivergenceValue l1_distance(const ResponseDensity& p, const ResponseDensity& q,
                            const ReferenceMeasure& nu, const DivergenceOptions& opt) {
  return divergence(p, q, nu, opt, Div::L1);
}

ResponseDensity smooth(const ResponseDensity& q, double alpha, const ReferenceMeasure& nu) {
  if (!(alpha >= 0)) throw DomainError("smoothing level must be nonnegative");
  if (alpha == 0) return q;
  if (!nu.supports(q)) throw ConfigurationError("density is not dominated by the reference measure");
  std::vector<Component> parts;
  for (auto& c : q.components()) parts.push_back({c.weight / (1 + alpha), c.family});
  for (auto& c : nu.normalized().components())
    parts.push_back({c.weight * alpha / (1 + alpha), c.family});
  return ResponseDensity::mixture(std::move(parts));
}

double sup_log_ratio(const ResponseDensity& p, const ResponseDensity& q, const ReferenceMeasure& nu) {
  check_reference(p, q, nu);
  if (!p.is_mixture() && !q.is_mixture())
    if (auto v = closed_sup_log_ratio(p.family(), q.family())) return *v;
  auto ratio = [&](double y) {
    double lp = mixture_log(p.components(), y);
    if (lp == kNegInf) return kNegInf;
    double lq = mixture_log(q.components(), y);
    return lq == kNegInf ? kInf : lp - lq;
  };
  double best = kNegInf;
  if (p.discrete()) {
    std::vector<double> atoms;
    bool naturals = false;
    for (auto& c : p.components()) {
      std::visit(Overloaded{
                     [&](const Bernoulli&) { atoms.insert(atoms.end(), {0.0, 1.0}); },
                     [&](const Multinomial& m) {
                       for (std::size_t i = 0; i < m.probs.size(); ++i) atoms.push_back(static_cast<double>(i));
                     },
                     [&](const Tabulated& t) { atoms.insert(atoms.end(), t.grid.begin(), t.grid.end()); },
                     [&](const auto&) { naturals = true; },
                 },
                 c.family);
    }
    if (naturals)
      for (double y = 0; y <= 5000; ++y) atoms.push_back(y);
    for (double y : atoms) best = std::max(best, ratio(y));
    if (naturals) {
      double a = dc_weight(p), b = dc_weight(q);
      if (a > 0) best = std::max(best, b > 0 ? std::log(a / b) : kInf);
    }
    return best;
  }
  Extent e;
  for (auto& c : p.components()) add_extent(c.family, e);
  double lo = std::max(e.lo, e.dom_lo), hi = std::min(e.hi, e.dom_hi);
  const int m = 4000;
  double arg = lo;
  for (int i = 0; i <= m; ++i) {
    double y = lo + (hi - lo) * i / m;
    double r = ratio(y);
    if (r > best) best = r, arg = y;
  }
  for (double c : e.cuts) {
    double r = ratio(c);
    if (r > best) best = r, arg = c;
  }
  // Golden-section refinement around the grid maximizer.
  double h = (hi - lo) / m;
  double a = std::max(lo, arg - h), b = std::min(hi, arg + h);
  const double g = 0.5 * (std::sqrt(5.0) - 1);
  for (int it = 0; it < 60 && b - a > 1e-14 * (1 + std::abs(a)); ++it) {
    double c1 = b - g * (b - a), c2 = a + g * (b - a);
    if (ratio(c1) > ratio(c2)) b = c2;
    else a = c1;
  }
  best = std::max(best, ratio(0.5 * (a + b)));
  // Far tails: compare limiting behaviour through distant probes.
  if (std::isinf(e.dom_hi))
    for (double y : {hi * 10 + 10, hi * 1e3 + 1e3, hi * 1e6 + 1e6}) best = std::max(best, ratio(y));
  if (std::isinf(e.dom_lo))
    for (double y : {lo * 10 - 10, lo * 1e3 - 1e3, lo * 1e6 - 1e6}) best = std::max(best, ratio(y));
  return best;
}

double yang_kl_bound(const ResponseDensity& p, const ResponseDensity& q, const ReferenceMeasure& nu) {
  double h2 = hellinger_sq(p, q, nu).value;
  if (h2 == 0) return 0.0;
  double s = sup_log_ratio(p, q, nu);
  if (!std::isfinite(s)) return kInf;
  return 2 * (2 + s) * h2;
}

double log_density(const ResponseDensity& q, double y) { return q.log_density(y); }

double sample_response(const ResponseDensity& q, Rng& rng) { return q.sample(rng); }

double discrete_cauchy_normalizer() {
  static const double z = 0.5 * (1 + kPi / std::tanh(kPi));
  return z;
}

// ---- point densities --------------------------------------------------------------

double point_log_density(const PointDensity& p, double y) {
  return std::visit(
      Overloaded{
          [&](const Bernoulli& b) {
            if (y == 1.0) return safe_log(b.p);
            if (y == 0.0) return safe_log(1.0 - b.p);
            throw DomainError(fmt::format("y = {} outside Bernoulli support", y));
          },
          [&](const Poisson& pp) {
            if (!is_integer(y)) throw DomainError(fmt::format("y = {} outside Poisson support", y));
            return y * std::log(pp.rate) - pp.rate - std::lgamma(y + 1);
          },
          [&](const Gamma& g) {
            if (y < 0) throw DomainError(fmt::format("y = {} outside Gamma support", y));
            return raw_log(g, y);
          },
          [&](const Gaussian& g) { return raw_log(g, y); },
      },
      p);
}

namespace {
void same_family(const PointDensity& p, const PointDensity& q) {
  if (p.index() != q.index())
    throw ConfigurationError("point densities from different families are not comparable");
}
}  // namespace

double point_hellinger_sq(const PointDensity& p, const PointDensity& q) {
  same_family(p, q);
  return std::visit(Overloaded{
                        [&](const Bernoulli& a) { return bern_h2(a.p, std::get<Bernoulli>(q).p); },
                        [&](const Gaussian& a) { return gauss_h2(a, std::get<Gaussian>(q)); },
                        [&](const Poisson& a) { return pois_h2(a.rate, std::get<Poisson>(q).rate); },
                        [&](const Gamma& a) { return gamma_h2(a, std::get<Gamma>(q)); },
                    },
                    p);
}

double point_kl(const PointDensity& p, const PointDensity& q) {
  same_family(p, q);
  return std::visit(Overloaded{
                        [&](const Bernoulli& a) { return bern_kl(a.p, std::get<Bernoulli>(q).p); },
                        [&](const Gaussian& a) { return gauss_kl(a, std::get<Gaussian>(q)); },
                        [&](const Poisson& a) { return pois_kl(a.rate, std::get<Poisson>(q).rate); },
                        [&](const Gamma& a) { return gamma_kl(a, std::get<Gamma>(q)); },
                    },
                    p);
}

double point_l1(const PointDensity& p, const PointDensity& q) {
  same_family(p, q);
  if (auto* a = std::get_if<Bernoulli>(&p)) return 2 * std::abs(a->p - std::get<Bernoulli>(q).p);
  if (auto* a = std::get_if<Gaussian>(&p)) {
    const auto& b = std::get<Gaussian>(q);
    if (a->stddev == b.stddev)
      return 2 * std::erf(std::abs(a->mean - b.mean) / (2 * std::sqrt(2.0) * a->stddev));
  }
  ResponseDensity rp(p), rq(q);
  ReferenceMeasure nu = rp.discrete() ? ReferenceMeasure::cauchy_naturals()
                        : std::holds_alternative<Gamma>(p) ? ReferenceMeasure::gamma_weighted(1.0, 1.0)
                                                           : ReferenceMeasure::cauchy_real();
  return l1_distance(rp, rq, nu).value;
}

double point_sample(const PointDensity& p, Rng& rng) {
  return std::visit([&](const auto& f) { return sample_family(Family{f}, rng); }, p);
}

std::string point_describe(const PointDensity& p) {
  return std::visit([](const auto& f) { return describe_family(Family{f}); }, p);
}

}  // namespace cdekit
