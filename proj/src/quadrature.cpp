#include "cdekit/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <fmt/format.h>

#include "cdekit/error.hpp"

namespace cdekit {

namespace {

using GK15 = boost::math::quadrature::gauss_kronrod<double, 15>;
using G7 = boost::math::quadrature::gauss<double, 7>;

struct Segment {
  double a, b, value, error;
  bool operator<(const Segment& o) const { return error < o.error; }
};

// One K15 pass with the embedded G7 rule as error estimate. Boost stores the
// nonnegative nodes only; node 0 is the centre and even indices are Gauss nodes.
Segment rule(const std::function<double(double)>& f, double a, double b) {
  const auto& x = GK15::abscissa();
  const auto& wk = GK15::weights();
  const auto& wg = G7::weights();
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  double fc = f(c);
  double k = fc * wk[0], g = fc * wg[0];
  for (std::size_t i = 1; i < x.size(); ++i) {
    double s = f(c + h * x[i]) + f(c - h * x[i]);
    k += s * wk[i];
    if (i % 2 == 0) g += s * wg[i / 2];
  }
  double err = std::max(std::abs(k - g) * h, std::abs(k * h) * 4e-16);
  return {a, b, k * h, err};
}

// Global adaptive bisection on a finite interval: always split the segment with
// the largest error estimate.
QuadratureResult adapt(const std::function<double(double)>& f, double a, double b,
                       double abs_tol, unsigned max_depth) {
  if (a == b) return {};
  std::priority_queue<Segment> heap;
  Segment s = rule(f, a, b);
  double total = s.value, err = s.error;
  heap.push(s);
  const std::size_t max_segments = std::size_t{1} << std::min(max_depth, 14u);
  while (err > abs_tol && heap.size() < max_segments) {
    Segment worst = heap.top();
    heap.pop();
    double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) {
      heap.push(worst);
      break;
    }
    Segment l = rule(f, worst.a, mid), r = rule(f, mid, worst.b);
    total += l.value + r.value - worst.value;
    err += l.error + r.error - worst.error;
    heap.push(l);
    heap.push(r);
  }
  // Re-sum to shed the drift of the running updates.
  total = 0.0;
  err = 0.0;
  while (!heap.empty()) {
    total += heap.top().value;
    err += heap.top().error;
    heap.pop();
  }
  if (!std::isfinite(total) || err > abs_tol) {
    throw NumericError(fmt::format("quadrature on [{}, {}] did not converge: error {:.3g} > {:.3g}",
                                   a, b, err, abs_tol),
                       err);
  }
  return {total, err};
}

}  // namespace

QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           double abs_tol, unsigned max_depth) {
  if (std::isnan(a) || std::isnan(b)) throw DomainError("integration bounds are NaN");
  if (b < a) {
    auto r = integrate(f, b, a, abs_tol, max_depth);
    return {-r.value, r.error};
  }
  const bool lo_inf = std::isinf(a), hi_inf = std::isinf(b);
  if (lo_inf && hi_inf) {
    auto l = integrate(f, a, 0.0, abs_tol / 2, max_depth);
    auto r = integrate(f, 0.0, b, abs_tol / 2, max_depth);
    return {l.value + r.value, l.error + r.error};
  }
  if (hi_inf) {
    auto g = [&](double t) {
      double s = 1.0 - t;
      return f(a + t / s) / (s * s);
    };
    return adapt(g, 0.0, 1.0, abs_tol, max_depth);
  }
  if (lo_inf) {
    auto g = [&](double t) {
      double s = 1.0 - t;
      return f(b - t / s) / (s * s);
    };
    return adapt(g, 0.0, 1.0, abs_tol, max_depth);
  }
  return adapt(f, a, b, abs_tol, max_depth);
}

QuadratureResult integrate_piecewise(const std::function<double(double)>& f, double a,
                                     double b, std::span<const double> breakpoints,
                                     double abs_tol, unsigned max_depth) {
  std::vector<double> cuts{a};
  for (double c : breakpoints)
    if (c > a && c < b) cuts.push_back(c);
  cuts.push_back(b);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  QuadratureResult out;
  const double tol = abs_tol / static_cast<double>(cuts.size() - 1);
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    auto r = integrate(f, cuts[i], cuts[i + 1], tol, max_depth);
    out.value += r.value;
    out.error += r.error;
  }
  return out;
}

QuadratureRule kronrod15_rule(double a, double b) {
  const auto& x = GK15::abscissa();
  const auto& wk = GK15::weights();
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  QuadratureRule r;
  r.nodes.push_back(c);
  r.weights.push_back(wk[0] * h);
  for (std::size_t i = 1; i < x.size(); ++i) {
    r.nodes.push_back(c - h * x[i]);
    r.weights.push_back(wk[i] * h);
    r.nodes.push_back(c + h * x[i]);
    r.weights.push_back(wk[i] * h);
  }
  return r;
}

double kronrod15(const std::function<double(double)>& f, double a, double b) {
  if (a == b) return 0.0;
  return rule(f, a, b).value;
}

}  // namespace cdekit
