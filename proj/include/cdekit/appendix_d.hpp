#pragma once

#include <span>
#include <vector>

namespace cdekit::appendix_d {

// Five-piece offset function on [-1/2, 1/2]; zero-mean, odd, integral of square 1/24.
double f(double x);

// Tent-pair bump supported on [-eta, eta]; odd on (-eta, eta).
double omega(double eta, double x);

// eta solving eta^gamma = 2^(1-gamma) lambda^2.
double eta_from_lambda(double gamma, double lambda);

struct Component {
  double weight = 1.0;          // mu_l, on the simplex across components
  double lambda = 0.0;          // in [0, 1/4]
  std::vector<double> centers;  // z_i, sorted
  std::vector<int> signs;       // epsilon_i in {-1, +1}
};

struct Params {
  double gamma = 0.25;  // in (0, 1/2)
  std::vector<Component> components;
  // sum_l mu_l lambda_l
  double lambda_bar() const;
};

// Centers whose (z - eta, z + eta) lie inside [-3/8,-1/8] or [1/8,3/8] and are
// pairwise disjoint.
bool in_admissible_set(double eta, std::span<const double> centers);

// Throws DomainError when parameters leave the class.
void validate(const Params& p);

// 1/2 + sum_l mu_l [ (lambda_l/2) f(x) + lambda_l^2 sum_i eps_i omega_eta(z_i - x) ].
double mean(const Params& p, double x);

// Kinks of the mean function in x (offset pieces and bump edges).
std::vector<double> breakpoints(const Params& p);

// Greedy separated subset of sorted sample points: each accepted point x
// yields a center x - eta/2 (so omega_eta(z - x) = 1/2) admissible with all
// previously accepted centers. Returns indices into `sorted_x`.
std::vector<std::size_t> separated_subset(std::span<const double> sorted_x, double eta);

}  // namespace cdekit::appendix_d
