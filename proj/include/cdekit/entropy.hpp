#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <memory>
#include <vector>

#include "cdekit/models.hpp"

namespace cdekit {

enum class BaseMetric { Hellinger, KlRoot, L1 };

struct EmpiricalMetricSpec {
  BaseMetric metric = BaseMetric::Hellinger;
  double q = 2.0;  // in [1, inf]
  Covariates x;
};

double pointwise_distance(BaseMetric metric, const PointDensity& a, const PointDensity& b);

// ((1/n) sum_t d(f(x_t), g(x_t))^q)^(1/q); the max over t when q is infinite.
double empirical_distance(const ConditionalModel& f, const ConditionalModel& g, const EmpiricalMetricSpec& spec);

// Pairwise empirical distances between the members of a finite pool.
class DistanceOracle {
 public:
  virtual ~DistanceOracle() = default;
  virtual std::size_t size() const = 0;
  virtual double distance(std::size_t i, std::size_t j) const = 0;
};

class MatrixOracle final : public DistanceOracle {
 public:
  // Row-major m x m matrix.
  MatrixOracle(std::vector<double> d, std::size_t m);
  std::size_t size() const override { return m_; }
  double distance(std::size_t i, std::size_t j) const override { return d_[i * m_ + j]; }

 private:
  std::vector<double> d_;
  std::size_t m_;
};

// Evaluates every member on every sample point; caches the evaluations when
// the table is small enough.
class PointwiseOracle final : public DistanceOracle {
 public:
  PointwiseOracle(const std::vector<ConditionalModel>& members, EmpiricalMetricSpec spec);
  std::size_t size() const override { return members_.size(); }
  double distance(std::size_t i, std::size_t j) const override;

 private:
  std::vector<ConditionalModel> members_;
  EmpiricalMetricSpec spec_;
  std::vector<PointDensity> table_;  // members x points, empty when uncached
};

// Threshold members only: the sample splits into at most four regions per
// pair, and region sizes come from precomputed ranks.
class ThresholdOracle final : public DistanceOracle {
 public:
  ThresholdOracle(const std::vector<ConditionalModel>& members, const EmpiricalMetricSpec& spec);
  std::size_t size() const override { return lo_rank_.size(); }
  double distance(std::size_t i, std::size_t j) const override;

 private:
  BaseMetric metric_;
  double q_;
  double n_;
  std::vector<long> lo_rank_, hi_rank_;
  std::vector<double> theta0_, theta1_;
};

// Picks the threshold fast path when every member is a threshold model.
std::unique_ptr<DistanceOracle> make_oracle(const std::vector<ConditionalModel>& members,
                                            const EmpiricalMetricSpec& spec);
std::vector<double> distance_matrix(const DistanceOracle& oracle);

struct EmpiricalCover {
  std::vector<std::size_t> members;  // indices into the pool, in insertion order
  double scale = 0.0;
  double certificate = 0.0;  // max over pool of min over members of the distance
};

// Maximal packing at scale eps (pairwise > eps) built in pool order; being
// maximal it covers the pool at eps, and the certificate is recomputed.
EmpiricalCover greedy_pack_cover(const DistanceOracle& oracle, double eps);
double cover_certificate(const DistanceOracle& oracle, const std::vector<std::size_t>& members);
// Drops members whose removal keeps the cover valid at its scale.
EmpiricalCover prune_cover(const DistanceOracle& oracle, EmpiricalCover cover);

inline constexpr std::size_t kBruteForceLimit = 20;
// Exact minimum internal cover (subset enumeration by size).
EmpiricalCover brute_min_cover(const DistanceOracle& oracle, double eps);
// Exact maximum packing (maximum clique of the "> eps" graph).
std::vector<std::size_t> brute_max_pack(const DistanceOracle& oracle, double eps);

// Members within eps of `ref`, pairwise at least eps/2 apart. Greedy, starting at ref.
std::vector<std::size_t> local_pack(const DistanceOracle& oracle, std::size_t ref, double eps);
std::vector<std::size_t> brute_local_pack(const DistanceOracle& oracle, std::size_t ref, double eps);

struct EntropyPoint {
  double epsilon;
  double log_cover;
  double log_pack;
  double log_local_pack;
};

// Nonincreasing in epsilon. Values are lower estimates of the sup over samples.
struct EntropyProfile {
  std::size_t n = 0;
  std::vector<EntropyPoint> points;  // ascending epsilon

  // log cover size interpolated log-log between grid points (linear in
  // log epsilon next to zero values); constant beyond the grid ends.
  double value(double eps) const;
};

struct ProfileOptions {
  std::size_t local_references = 16;  // reference members tried for local packings
  std::size_t workers = 1;
};

// Profile of an explicit pool on each covariate configuration, maximized
// over configurations.
EntropyProfile entropy_profile(const Pool& pool, const std::vector<Covariates>& samples,
                               std::vector<double> eps_grid, const ProfileOptions& opt = {});
// Discretizes the class on each configuration at `resolution` first.
EntropyProfile entropy_profile(const ClassSpec& spec, const std::vector<Covariates>& samples,
                               std::vector<double> eps_grid, double resolution, const ProfileOptions& opt = {});

// Columns epsilon, log_cover, log_pack, log_local_pack.
void write_profile_csv(const EntropyProfile& profile, std::ostream& out);

// Solves H(eps) = n eps^2 by bisection; throws DomainError without a sign change.
double critical_radius(const EntropyProfile& profile, double n);
double critical_radius(const std::function<double(double)>& entropy, double n, double lo, double hi);

struct RademacherEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t localized = 0;  // members of the localized family
};

// values[h][t] = h(x_t). Localizes to {h : mean_t h(x_t) <= r}, then averages
// sup_h (1/n) sum_t sigma_t h(x_t) over sign draws. `symmetric` uses |.|.
RademacherEstimate rademacher_local(const std::vector<std::vector<double>>& values, double r, std::size_t draws,
                                    Rng& rng, bool symmetric = false);
// Exact expectation over all 2^n sign vectors (n <= 24).
double rademacher_exact(const std::vector<std::vector<double>>& values, double r, bool symmetric = false);

// 289 log|F| / n.
double localization_finite(double cardinality, double n);
// (289 p / n) log(4 C sqrt(n) / (17 sqrt(p))), valid for n > (12/C)^2 p.
double localization_parametric(double p, double c, double n);
// 972 (log 2n)^3 (inf_g {4g + 17/sqrt(n) int_g^1 sqrt(H(rho/2)) drho})^2, trapezoid rule on a grid.
double localization_dudley(const std::function<double(double)>& entropy, double n, std::size_t grid = 2000);
// Largest r with r = phi(r), to |r - phi(r)| <= 1e-10.
double localization_fixed_point(const std::function<double(double)>& phi);

struct ConcentrationResult {
  double violation_frequency = 0.0;
  std::size_t resamples = 0;
  double radius = 0.0;     // r_n used in the bound
  double max_excess = 0.0;  // largest lhs - rhs observed (negative when never violated)
};

// For a finite class on a finite covariate space: frequency over resampled
// x'_{1:n} of some pair violating
//   E_x d_H^2(f,g) <= (2/n) sum_t d_H^2(f,g)(x'_t) + 106 r + 48 (log(1/delta) + 6 log log n) / n.
ConcentrationResult uniform_hellinger_check(const std::vector<ConditionalModel>& members,
                                            const CovariateDistribution& dist, std::size_t n, double delta,
                                            std::size_t resamples, double radius, Rng& rng);

}  // namespace cdekit
