#include "cdekit/appendix_d.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "cdekit/error.hpp"

namespace cdekit::appendix_d {

double f(double x) {
  if (x < -0.5 || x > 0.5) throw DomainError(fmt::format("offset function: x = {} outside [-1/2, 1/2]", x));
  if (x <= -0.375) return -2 * x - 1;
  if (x <= -0.125) return -0.25;
  if (x <= 0.125) return 2 * x;
  if (x <= 0.375) return 0.25;
  return -2 * x + 1;
}

double omega(double eta, double x) {
  if (x < -eta || x > eta) return 0.0;
  if (x <= -eta / 2) return 1 + x / eta;
  if (x <= eta / 2) return -x / eta;
  return x / eta - 1;
}

double eta_from_lambda(double gamma, double lambda) {
  return std::pow(std::pow(2.0, 1 - gamma) * lambda * lambda, 1 / gamma);
}

double Params::lambda_bar() const {
  double s = 0;
  for (const auto& c : components) s += c.weight * c.lambda;
  return s;
}

namespace {

bool inside_piece(double a, double b) {
  constexpr double tol = 1e-12;
  auto within = [&](double lo, double hi) { return a >= lo - tol && b <= hi + tol; };
  return within(-0.375, -0.125) || within(0.125, 0.375);
}

}  // namespace

bool in_admissible_set(double eta, std::span<const double> centers) {
  if (!(eta > 0)) return centers.empty();
  for (std::size_t i = 0; i < centers.size(); ++i) {
    if (!inside_piece(centers[i] - eta, centers[i] + eta)) return false;
    if (i > 0 && centers[i] - centers[i - 1] < 2 * eta * (1 - 1e-12)) return false;
  }
  return true;
}

void validate(const Params& p) {
  if (!(p.gamma > 0 && p.gamma < 0.5))
    throw DomainError(fmt::format("gamma = {} outside (0, 1/2)", p.gamma));
  double total = 0;
  for (const auto& c : p.components) {
    if (c.weight < 0) throw DomainError("negative component weight");
    total += c.weight;
    if (c.lambda < 0 || c.lambda > 0.25)
      throw DomainError(fmt::format("lambda = {} outside [0, 1/4]", c.lambda));
    if (c.signs.size() != c.centers.size()) throw DomainError("centers and signs differ in length");
    for (int s : c.signs)
      if (s != 1 && s != -1) throw DomainError("signs must be +1 or -1");
    if (!std::is_sorted(c.centers.begin(), c.centers.end())) throw DomainError("centers must be sorted");
    if (!in_admissible_set(eta_from_lambda(p.gamma, c.lambda), c.centers))
      throw DomainError("centers outside the admissible set A(eta)");
  }
  if (!p.components.empty() && std::abs(total - 1) > 1e-9)
    throw DomainError(fmt::format("component weights sum to {}", total));
}

double mean(const Params& p, double x) {
  double fx = f(x), g = 0;
  for (const auto& c : p.components) {
    double term = 0.5 * c.lambda * fx;
    if (!c.centers.empty() && c.lambda > 0) {
      double eta = eta_from_lambda(p.gamma, c.lambda);
      // z_i - x in [-eta, eta]  <=>  z_i in [x - eta, x + eta]; at most two candidates.
      auto it = std::lower_bound(c.centers.begin(), c.centers.end(), x - eta);
      for (; it != c.centers.end() && *it <= x + eta; ++it) {
        auto i = static_cast<std::size_t>(it - c.centers.begin());
        term += c.lambda * c.lambda * c.signs[i] * omega(eta, *it - x);
      }
    }
    g += c.weight * term;
  }
  return 0.5 + g;
}

std::vector<double> breakpoints(const Params& p) {
  std::vector<double> b = {-0.375, -0.125, 0.125, 0.375};
  for (const auto& c : p.components) {
    if (c.lambda <= 0) continue;
    double eta = eta_from_lambda(p.gamma, c.lambda);
    for (double z : c.centers)
      for (double k : {-1.0, -0.5, 0.0, 0.5, 1.0}) b.push_back(z + k * eta);
  }
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  return b;
}

std::vector<std::size_t> separated_subset(std::span<const double> sorted_x, double eta) {
  std::vector<std::size_t> out;
  double last = 0;
  for (std::size_t t = 0; t < sorted_x.size(); ++t) {
    double z = sorted_x[t] - eta / 2;
    if (!inside_piece(z - eta, z + eta)) continue;
    if (!out.empty() && z - last < 2 * eta) continue;
    out.push_back(t);
    last = z;
  }
  return out;
}

}  // namespace cdekit::appendix_d
