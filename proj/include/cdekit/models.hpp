#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cdekit/appendix_d.hpp"
#include "cdekit/densities.hpp"

namespace cdekit {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Row-major n x dim matrix of covariates.
struct Covariates {
  std::size_t dim = 1;
  std::vector<double> data;

  Covariates() = default;
  explicit Covariates(std::size_t d) : dim(d) {}
  Covariates(std::size_t d, std::vector<double> values);

  std::size_t size() const { return dim ? data.size() / dim : 0; }
  bool empty() const { return data.empty(); }
  std::span<const double> operator[](std::size_t i) const { return {data.data() + i * dim, dim}; }
  void push_back(std::span<const double> x);
  Covariates slice(std::size_t begin, std::size_t end) const;
};

struct Sample {
  Covariates x;
  std::vector<double> y;

  std::size_t size() const { return y.size(); }
  Sample slice(std::size_t begin, std::size_t end) const;
};

class CovariateDistribution {
 public:
  enum class Kind { UniformInterval, UniformFinite, UniformBall, Normal, WeightedGrid };

  static CovariateDistribution uniform_interval(double lo, double hi);
  static CovariateDistribution uniform_finite(Covariates atoms);
  // Uniform on {x in R^d : |x| <= radius}.
  static CovariateDistribution uniform_ball(std::size_t dim, double radius);
  static CovariateDistribution normal(double mean, double stddev);
  static CovariateDistribution weighted_grid(Covariates atoms, std::vector<double> weights);

  Kind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  bool finite() const { return kind_ == Kind::UniformFinite || kind_ == Kind::WeightedGrid; }
  // Atoms and probabilities (finite kinds only).
  const Covariates& atoms() const { return atoms_; }
  const std::vector<double>& weights() const { return weights_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }

  Covariates sample(std::size_t n, Rng& rng) const;
  bool contains(std::span<const double> x) const;
  std::string describe() const;

 private:
  Kind kind_ = Kind::UniformInterval;
  std::size_t dim_ = 1;
  double lo_ = 0.0, hi_ = 1.0;  // interval, or (mean, stddev) for Normal, or (0, radius) for balls
  Covariates atoms_;
  std::vector<double> weights_;
  std::vector<double> cumulative_;
};

Covariates sample_covariates(const CovariateDistribution& dist, std::size_t n, Rng& rng);

// ---------------------------------------------------------------------------
// Parameter records

struct GaussianLinearParams {
  std::vector<double> w;
  double sigma = 1.0;
};
struct PoissonLogLinearParams {
  std::vector<double> w;
};
// Gamma(shape, 1 / (shape * (xw + offset - <x,w>))); xw is the product X*W.
struct GammaInverseLinkParams {
  std::vector<double> w;
  double shape = 1.0;
  double xw = 1.0;
  double offset = 1.0;
};
// Bernoulli(theta1) on {lo <= x <= hi}, Bernoulli(theta0) elsewhere; halflines use lo = -inf.
struct ThresholdParams {
  double lo = -kInf;
  double hi = kInf;
  double theta0 = 0.5;
  double theta1 = 0.5;
};
// Bernoulli mean 1/2 + lambda M^-gamma sum_j beta_j phi(M x - j) on [0, 1], M = pattern size.
struct HolderBumpParams {
  double gamma = 1.0;
  double lambda = 0.0;
  std::vector<int> pattern;
};
struct AppendixDModelParams {
  appendix_d::Params p;
};
// Same response density at every covariate (cells of product pools, baselines).
struct ConstantParams {
  PointDensity density;
};

using ModelParams = std::variant<GaussianLinearParams, PoissonLogLinearParams, GammaInverseLinkParams,
                                 ThresholdParams, HolderBumpParams, AppendixDModelParams, ConstantParams>;

// phi(y) = 4^gamma y^gamma (1 - y)^gamma on [0, 1], zero elsewhere.
double holder_phi(double gamma, double y);
double holder_bump_mean(const HolderBumpParams& p, double x);

class ConditionalModel {
 public:
  explicit ConditionalModel(ModelParams p);

  PointDensity evaluate(std::span<const double> x) const;
  double evaluate_scalar_mean(double x) const;  // Bernoulli classes only
  double log_likelihood(std::span<const double> x, double y) const;

  const ModelParams& params() const { return params_; }
  std::string class_tag() const;
  std::string describe() const;
  // Points in the first covariate coordinate where the model is not smooth.
  std::vector<double> breakpoints() const;
  // True when the response density is constant between breakpoints.
  bool piecewise_constant() const;

 private:
  ModelParams params_;
};

// ---------------------------------------------------------------------------
// Class specifications and discretization

enum class ClassKind {
  GaussianLinear,
  PoissonLogLinear,
  GammaInverseLink,
  BernoulliThreshold,
  HolderBump,
  AppendixD
};

std::string class_name(ClassKind k);
ClassKind parse_class_kind(const std::string& name);  // throws ConfigurationError

struct ClassInfo {
  ClassKind kind;
  std::string name;
  std::string summary;
  std::string parameters;
};
std::vector<ClassInfo> list_classes();

enum class ThresholdShape { Halfline, Interval };
enum class HolderScheme { Patterns, CellLevels };

struct ClassSpec {
  ClassKind kind = ClassKind::GaussianLinear;
  std::size_t dim = 1;
  double x_bound = 1.0;  // X
  double w_bound = 1.0;  // W
  double sigma = 1.0;
  double shape = 1.0;         // Gamma alpha
  double gamma_offset = 1.0;  // Gamma gamma
  std::optional<double> grid_step;

  ThresholdShape threshold_shape = ThresholdShape::Halfline;
  std::vector<double> theta_grid;  // empty: derived from theta_step
  double theta_step = 0.0;  // 0: derived from the resolution

  double holder_gamma = 1.0;
  std::size_t cells = 1;
  double lambda_max = 0.25;
  std::vector<double> lambda_grid;  // empty: {lambda_max}
  HolderScheme holder_scheme = HolderScheme::Patterns;
  double grid_shift = 0.0;  // in [0, 1): fractional shift of cell edges and levels (cell-level pools)

  double appendix_gamma = 0.25;
  std::size_t lambda_denominator = 256;  // grid {0} u {k / denominator} up to 1/4

  std::size_t max_pool = 4'000'000;

  ReferenceMeasure reference() const;
  // Upper bound B on d f(x) / d nu over the class.
  double density_bound() const;
  // Hoelder constant of the cell-level class (4^gamma lambda_max).
  double holder_constant() const;
  bool bernoulli() const;
  void validate() const;  // throws ConfigurationError
};

// A region of the covariate line (first coordinate) and the candidate models
// that act on it. Non-product pools have a single unbounded block.
struct PoolBlock {
  double lo = -kInf;
  double hi = kInf;
  bool closed_right = true;
  std::vector<ConditionalModel> members;

  bool contains(double x0) const { return x0 >= lo && (x0 < hi || (closed_right && x0 == hi)); }
};

struct Pool {
  ClassSpec spec;
  double resolution = 0.0;
  double grid_step = 0.0;
  std::string scheme;
  std::vector<PoolBlock> blocks;

  bool product() const { return blocks.size() > 1; }
  std::size_t total_members() const;
  // Number of joint members (product over blocks, saturating).
  double joint_size() const;
  std::size_t block_of(double x0) const;
  const std::vector<ConditionalModel>& members() const;  // single-block pools only
};

// Finite pool approximating the class at empirical Hellinger scale `resolution`.
// `covariates` is required for threshold classes (cut points) and ignored otherwise.
Pool discretize(const ClassSpec& spec, double resolution, const Covariates* covariates = nullptr);

// Linear-parameter grid step guaranteeing sup_x d_H <= resolution.
double linear_grid_step(const ClassSpec& spec, double resolution);

// A single pool made from explicit models.
Pool make_pool(const ClassSpec& spec, std::vector<ConditionalModel> members);

}  // namespace cdekit
