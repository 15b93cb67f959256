#pragma once

#include <functional>
#include <span>
#include <vector>

namespace cdekit {

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
};

// Adaptive Gauss-Kronrod (G7/K15) on [a, b]; either end may be infinite.
// Throws NumericError when the error estimate stays above abs_tol.
QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           double abs_tol = 1e-9, unsigned max_depth = 18);

// Integrates over [a, b] split at the given breakpoints (those outside are ignored).
QuadratureResult integrate_piecewise(const std::function<double(double)>& f, double a,
                                     double b, std::span<const double> breakpoints,
                                     double abs_tol = 1e-9, unsigned max_depth = 18);

// A single non-adaptive K15 pass; exact for polynomials up to degree 22.
double kronrod15(const std::function<double(double)>& f, double a, double b);

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// The K15 nodes and weights mapped to [a, b].
QuadratureRule kronrod15_rule(double a, double b);

}  // namespace cdekit
