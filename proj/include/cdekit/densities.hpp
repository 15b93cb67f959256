#pragma once

#include <random>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace cdekit {

using Rng = std::mt19937_64;

struct Bernoulli {
  double p;
};
struct Gaussian {
  double mean;
  double stddev;
};
struct Poisson {
  double rate;
};
struct Gamma {
  double shape;
  double scale;
};
// Probabilities over {0, ..., k-1}.
struct Multinomial {
  std::vector<double> probs;
};
// Piecewise-constant density on a grid.
//  discrete:   values[i] is the mass at atom grid[i] (same length as grid).
//  continuous: values[i] is the Lebesgue density on [grid[i], grid[i+1])
//              (one fewer value than grid points).
struct Tabulated {
  std::vector<double> grid;
  std::vector<double> values;
  bool discrete = true;
};
struct Cauchy {
  double location;
  double scale;
};
// pmf proportional to 1/(1+y^2) on {0, 1, 2, ...}.
struct DiscreteCauchy {};

using Family =
    std::variant<Bernoulli, Gaussian, Poisson, Gamma, Multinomial, Tabulated, Cauchy, DiscreteCauchy>;

// What a conditional model emits at a single covariate: small and trivially copyable.
using PointDensity = std::variant<Bernoulli, Gaussian, Poisson, Gamma>;

struct Component {
  double weight;
  Family family;
};

// A probability density on the response space, stored as a finite mixture of
// named families. Densities are w.r.t. the natural base measure (counting
// measure for discrete families, Lebesgue otherwise); divergences do not depend
// on the choice of dominating measure.
class ResponseDensity {
 public:
  ResponseDensity(Family f);               // NOLINT(google-explicit-constructor)
  ResponseDensity(const PointDensity& p);  // NOLINT(google-explicit-constructor)
  template <class F>
    requires(std::is_constructible_v<Family, F> && !std::is_same_v<std::decay_t<F>, Family> &&
             !std::is_same_v<std::decay_t<F>, PointDensity>)
  ResponseDensity(F f)  // NOLINT(google-explicit-constructor)
      : ResponseDensity(Family(std::move(f))) {}

  // Weights must sum to 1 (within 1e-9); they are renormalized exactly.
  // Finite-discrete and continuous-tabulated mixtures collapse into one family.
  static ResponseDensity mixture(std::vector<Component> parts);

  const std::vector<Component>& components() const { return comps_; }
  bool is_mixture() const { return comps_.size() > 1; }
  const Family& family() const;  // throws if this is a mixture
  bool discrete() const;

  // Natural-log density; throws DomainError when y is not in the support.
  double log_density(double y) const;
  double density(double y) const;
  double sample(Rng& rng) const;
  std::string describe() const;

 private:
  ResponseDensity() = default;
  std::vector<Component> comps_;
};

class ReferenceMeasure {
 public:
  enum class Kind { Counting, Lebesgue, HeavyTail };

  static ReferenceMeasure counting(std::vector<double> atoms, double atom_weight = 1.0);
  static ReferenceMeasure lebesgue(double lo, double hi);
  // nu = total_mass * shape, shape a probability density (Cauchy, DiscreteCauchy or Gamma).
  static ReferenceMeasure heavy_tailed(Family shape, double total_mass);

  // Counting measure on {0,1}; K = 2.
  static ReferenceMeasure binary();
  // 1/(pi(1+y^2)) on the real line; K = 1.
  static ReferenceMeasure cauchy_real();
  // 2/(pi(1+y^2)) on the naturals; K = (2/pi) sum_y 1/(1+y^2).
  static ReferenceMeasure cauchy_naturals();
  // Gamma(shape, 1/(shape*offset)); K = 1.
  static ReferenceMeasure gamma_weighted(double shape, double offset);

  Kind kind() const { return kind_; }
  double total_mass() const { return mass_; }
  bool discrete() const;
  // nu / K as a probability density.
  const ResponseDensity& normalized() const { return normalized_; }
  // d nu / d(base measure) at y; zero off the support.
  double density(double y) const;
  bool supports(const ResponseDensity& q) const;
  std::string describe() const;

 private:
  ReferenceMeasure(Kind k, double mass, ResponseDensity norm)
      : kind_(k), mass_(mass), normalized_(std::move(norm)) {}
  Kind kind_;
  double mass_;
  ResponseDensity normalized_;
  std::vector<double> atoms_;
  double atom_weight_ = 1.0;
  double lo_ = 0.0, hi_ = 0.0;
};

enum class DivergenceMethod { ClosedForm, Quadrature };

struct DivergenceValue {
  double value;
  DivergenceMethod method;
};

struct DivergenceOptions {
  bool force_numeric = false;
  double abs_tol = 1e-9;
};

DivergenceValue hellinger_sq(const ResponseDensity& p, const ResponseDensity& q,
                             const ReferenceMeasure& nu, const DivergenceOptions& opt = {});
DivergenceValue kl(const ResponseDensity& p, const ResponseDensity& q,
                   const ReferenceMeasure& nu, const DivergenceOptions& opt = {});
DivergenceValue l1_distance(const ResponseDensity& p, const ResponseDensity& q,
                            const ReferenceMeasure& nu, const DivergenceOptions& opt = {});

// T_alpha q = (q + alpha * nu/K) / (1 + alpha).
ResponseDensity smooth(const ResponseDensity& q, double alpha, const ReferenceMeasure& nu);

// sup over the support of p of log(p/q); +inf when unbounded.
double sup_log_ratio(const ResponseDensity& p, const ResponseDensity& q,
                     const ReferenceMeasure& nu);
// 2 [2 + sup log(p/q)] d_H^2(p, q).
double yang_kl_bound(const ResponseDensity& p, const ResponseDensity& q,
                     const ReferenceMeasure& nu);

double log_density(const ResponseDensity& q, double y);
double sample_response(const ResponseDensity& q, Rng& rng);

// Fast paths for single-family point densities (same family required).
double point_log_density(const PointDensity& p, double y);
double point_hellinger_sq(const PointDensity& p, const PointDensity& q);
double point_kl(const PointDensity& p, const PointDensity& q);
double point_l1(const PointDensity& p, const PointDensity& q);
double point_sample(const PointDensity& p, Rng& rng);
std::string point_describe(const PointDensity& p);

// Normalizing constant sum_{y>=0} 1/(1+y^2) = (1 + pi coth pi)/2.
double discrete_cauchy_normalizer();

}  // namespace cdekit
