#include "cdekit/models.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "cdekit/error.hpp"

namespace cdekit {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double dot(std::span<const double> x, const std::vector<double>& w) {
  if (x.size() != w.size())
    throw DomainError(fmt::format("covariate dimension {} does not match parameter dimension {}",
                                  x.size(), w.size()));
  double s = 0;
  for (std::size_t i = 0; i < w.size(); ++i) s += x[i] * w[i];
  return s;
}

std::string vec_str(const std::vector<double>& v) { return fmt::format("[{}]", fmt::join(v, ", ")); }

}  // namespace

// ---- covariates -----------------------------------------------------------------

Covariates::Covariates(std::size_t d, std::vector<double> values) : dim(d), data(std::move(values)) {
  if (d == 0 || data.size() % d != 0)
    throw ConfigurationError(fmt::format("{} values do not form rows of dimension {}", data.size(), d));
}

void Covariates::push_back(std::span<const double> x) {
  if (x.size() != dim) throw DomainError("covariate row has the wrong dimension");
  data.insert(data.end(), x.begin(), x.end());
}

Covariates Covariates::slice(std::size_t begin, std::size_t end) const {
  end = std::min(end, size());
  begin = std::min(begin, end);
  Covariates out(dim);
  out.data.assign(data.begin() + static_cast<long>(begin * dim), data.begin() + static_cast<long>(end * dim));
  return out;
}

Sample Sample::slice(std::size_t begin, std::size_t end) const {
  end = std::min(end, size());
  begin = std::min(begin, end);
  return {x.slice(begin, end),
          std::vector<double>(y.begin() + static_cast<long>(begin), y.begin() + static_cast<long>(end))};
}

CovariateDistribution CovariateDistribution::uniform_interval(double lo, double hi) {
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
    throw ConfigurationError(fmt::format("uniform interval needs finite lo < hi, got [{}, {}]", lo, hi));
  CovariateDistribution d;
  d.kind_ = Kind::UniformInterval;
  d.lo_ = lo;
  d.hi_ = hi;
  return d;
}

CovariateDistribution CovariateDistribution::uniform_finite(Covariates atoms) {
  std::size_t m = atoms.size();
  if (m == 0) throw ConfigurationError("finite covariate distribution needs at least one atom");
  return weighted_grid(std::move(atoms), std::vector<double>(m, 1.0));
}

CovariateDistribution CovariateDistribution::uniform_ball(std::size_t dim, double radius) {
  if (dim == 0 || !(radius > 0)) throw ConfigurationError("uniform ball needs dim >= 1 and radius > 0");
  CovariateDistribution d;
  d.kind_ = Kind::UniformBall;
  d.dim_ = dim;
  d.lo_ = 0.0;
  d.hi_ = radius;
  return d;
}

CovariateDistribution CovariateDistribution::normal(double mean, double stddev) {
  if (!(stddev > 0)) throw ConfigurationError("normal covariates need stddev > 0");
  CovariateDistribution d;
  d.kind_ = Kind::Normal;
  d.lo_ = mean;
  d.hi_ = stddev;
  return d;
}

CovariateDistribution CovariateDistribution::weighted_grid(Covariates atoms, std::vector<double> weights) {
  if (atoms.size() == 0 || atoms.size() != weights.size())
    throw ConfigurationError("weighted grid needs one weight per atom");
  double total = 0;
  for (double w : weights) {
    if (!(w >= 0) || !std::isfinite(w)) throw ConfigurationError("grid weights must be finite and >= 0");
    total += w;
  }
  if (!(total > 0)) throw ConfigurationError("grid weights sum to zero");
  bool uniform = std::all_of(weights.begin(), weights.end(), [&](double w) { return w == weights[0]; });
  CovariateDistribution d;
  d.kind_ = uniform ? Kind::UniformFinite : Kind::WeightedGrid;
  d.dim_ = atoms.dim;
  d.atoms_ = std::move(atoms);
  d.weights_ = std::move(weights);
  double acc = 0;
  for (double& w : d.weights_) {
    w /= total;
    acc += w;
    d.cumulative_.push_back(acc);
  }
  d.cumulative_.back() = 1.0;
  return d;
}

Covariates CovariateDistribution::sample(std::size_t n, Rng& rng) const {
  Covariates out(dim_);
  out.data.reserve(n * dim_);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t t = 0; t < n; ++t) {
    switch (kind_) {
      case Kind::UniformInterval: {
        double x = lo_ + (hi_ - lo_) * unif(rng);
        out.data.push_back(std::min(x, hi_));
        break;
      }
      case Kind::Normal:
        out.data.push_back(lo_ + hi_ * gauss(rng));
        break;
      case Kind::UniformBall: {
        std::vector<double> v(dim_);
        double norm = 0;
        do {
          norm = 0;
          for (double& c : v) {
            c = gauss(rng);
            norm += c * c;
          }
        } while (norm == 0);
        double r = hi_ * std::pow(unif(rng), 1.0 / static_cast<double>(dim_)) / std::sqrt(norm);
        for (double c : v) out.data.push_back(c * r);
        break;
      }
      case Kind::UniformFinite:
      case Kind::WeightedGrid: {
        double u = unif(rng);
        auto i = static_cast<std::size_t>(std::upper_bound(cumulative_.begin(), cumulative_.end(), u) -
                                          cumulative_.begin());
        i = std::min(i, atoms_.size() - 1);
        auto row = atoms_[i];
        out.data.insert(out.data.end(), row.begin(), row.end());
        break;
      }
    }
  }
  return out;
}

bool CovariateDistribution::contains(std::span<const double> x) const {
  if (x.size() != dim_) return false;
  switch (kind_) {
    case Kind::UniformInterval:
      return x[0] >= lo_ && x[0] <= hi_;
    case Kind::Normal:
      return std::isfinite(x[0]);
    case Kind::UniformBall: {
      double s = 0;
      for (double c : x) s += c * c;
      return std::sqrt(s) <= hi_ * (1 + 1e-12);
    }
    case Kind::UniformFinite:
    case Kind::WeightedGrid:
      for (std::size_t i = 0; i < atoms_.size(); ++i)
        if (std::equal(x.begin(), x.end(), atoms_[i].begin())) return true;
      return false;
  }
  return false;
}

std::string CovariateDistribution::describe() const {
  switch (kind_) {
    case Kind::UniformInterval:
      return fmt::format("Unif[{}, {}]", lo_, hi_);
    case Kind::Normal:
      return fmt::format("N({}, {}^2)", lo_, hi_);
    case Kind::UniformBall:
      return fmt::format("Unif(ball(d={}, r={}))", dim_, hi_);
    case Kind::UniformFinite:
      return fmt::format("Unif({} atoms, d={})", atoms_.size(), dim_);
    case Kind::WeightedGrid:
      return fmt::format("Grid({} weighted atoms, d={})", atoms_.size(), dim_);
  }
  return "?";
}

Covariates sample_covariates(const CovariateDistribution& dist, std::size_t n, Rng& rng) {
  return dist.sample(n, rng);
}

// ---- models -----------------------------------------------------------------------

double holder_phi(double gamma, double y) {
  if (y <= 0 || y >= 1) return 0.0;
  return std::pow(4 * y * (1 - y), gamma);
}

double holder_bump_mean(const HolderBumpParams& p, double x) {
  const auto m = p.pattern.size();
  if (m == 0 || p.lambda == 0) return 0.5;
  double md = static_cast<double>(m);
  double u = md * x;
  if (u < 0 || u > md) return 0.5;
  auto j = std::min(static_cast<std::size_t>(u), m - 1);
  if (!p.pattern[j]) return 0.5;
  return 0.5 + p.lambda * std::pow(md, -p.gamma) * holder_phi(p.gamma, u - static_cast<double>(j));
}

ConditionalModel::ConditionalModel(ModelParams p) : params_(std::move(p)) {}

PointDensity ConditionalModel::evaluate(std::span<const double> x) const {
  return std::visit(
      Overloaded{
          [&](const GaussianLinearParams& p) -> PointDensity { return Gaussian{dot(x, p.w), p.sigma}; },
          [&](const PoissonLogLinearParams& p) -> PointDensity { return Poisson{std::exp(dot(x, p.w))}; },
          [&](const GammaInverseLinkParams& p) -> PointDensity {
            double c = p.xw + p.offset - dot(x, p.w);
            if (!(c > 0)) throw DomainError(fmt::format("inverse link {} is not positive", -c));
            return Gamma{p.shape, 1.0 / (p.shape * c)};
          },
          [&](const ThresholdParams& p) -> PointDensity {
            return Bernoulli{x[0] >= p.lo && x[0] <= p.hi ? p.theta1 : p.theta0};
          },
          [&](const HolderBumpParams& p) -> PointDensity { return Bernoulli{holder_bump_mean(p, x[0])}; },
          [&](const AppendixDModelParams& p) -> PointDensity { return Bernoulli{appendix_d::mean(p.p, x[0])}; },
          [&](const ConstantParams& p) -> PointDensity { return p.density; },
      },
      params_);
}

double ConditionalModel::evaluate_scalar_mean(double x) const {
  auto d = evaluate(std::span<const double>(&x, 1));
  if (auto* b = std::get_if<Bernoulli>(&d)) return b->p;
  throw ConfigurationError("scalar mean requested from a non-Bernoulli model");
}

double ConditionalModel::log_likelihood(std::span<const double> x, double y) const {
  return point_log_density(evaluate(x), y);
}

std::string ConditionalModel::class_tag() const {
  return std::visit(Overloaded{
                        [](const GaussianLinearParams&) { return std::string("gaussian_linear"); },
                        [](const PoissonLogLinearParams&) { return std::string("poisson_log_linear"); },
                        [](const GammaInverseLinkParams&) { return std::string("gamma_inverse_link"); },
                        [](const ThresholdParams&) { return std::string("bernoulli_threshold"); },
                        [](const HolderBumpParams&) { return std::string("holder_bump"); },
                        [](const AppendixDModelParams&) { return std::string("appendix_d"); },
                        [](const ConstantParams&) { return std::string("constant"); },
                    },
                    params_);
}

std::string ConditionalModel::describe() const {
  return std::visit(
      Overloaded{
          [](const GaussianLinearParams& p) { return fmt::format("GaussianLinear(w={}, sigma={})", vec_str(p.w), p.sigma); },
          [](const PoissonLogLinearParams& p) { return fmt::format("PoissonLogLinear(w={})", vec_str(p.w)); },
          [](const GammaInverseLinkParams& p) {
            return fmt::format("GammaInverseLink(w={}, shape={}, XW={}, gamma={})", vec_str(p.w), p.shape, p.xw,
                               p.offset);
          },
          [](const ThresholdParams& p) {
            return fmt::format("Threshold([{}, {}], theta0={}, theta1={})", p.lo, p.hi, p.theta0, p.theta1);
          },
          [](const HolderBumpParams& p) {
            return fmt::format("HolderBump(gamma={}, lambda={}, pattern=[{}])", p.gamma, p.lambda,
                               fmt::join(p.pattern, ""));
          },
          [](const AppendixDModelParams& p) {
            return fmt::format("AppendixD(gamma={}, components={}, lambda_bar={})", p.p.gamma,
                               p.p.components.size(), p.p.lambda_bar());
          },
          [](const ConstantParams& p) { return fmt::format("Constant({})", point_describe(p.density)); },
      },
      params_);
}

std::vector<double> ConditionalModel::breakpoints() const {
  std::vector<double> out;
  if (auto* t = std::get_if<ThresholdParams>(&params_)) {
    for (double b : {t->lo, t->hi})
      if (std::isfinite(b)) out.push_back(b);
  } else if (auto* h = std::get_if<HolderBumpParams>(&params_)) {
    const auto m = h->pattern.size();
    for (std::size_t j = 0; j <= m; ++j) out.push_back(static_cast<double>(j) / static_cast<double>(m));
  } else if (auto* a = std::get_if<AppendixDModelParams>(&params_)) {
    out = appendix_d::breakpoints(a->p);
  }
  return out;
}

bool ConditionalModel::piecewise_constant() const {
  return std::holds_alternative<ThresholdParams>(params_) || std::holds_alternative<ConstantParams>(params_);
}

// ---- class catalog ------------------------------------------------------------------

std::string class_name(ClassKind k) {
  switch (k) {
    case ClassKind::GaussianLinear: return "gaussian_linear";
    case ClassKind::PoissonLogLinear: return "poisson_log_linear";
    case ClassKind::GammaInverseLink: return "gamma_inverse_link";
    case ClassKind::BernoulliThreshold: return "bernoulli_threshold";
    case ClassKind::HolderBump: return "holder_bump";
    case ClassKind::AppendixD: return "appendix_d";
  }
  return "?";
}

ClassKind parse_class_kind(const std::string& name) {
  for (const auto& info : list_classes())
    if (info.name == name) return info.kind;
  throw ConfigurationError(fmt::format("unknown class '{}'", name));
}

std::vector<ClassInfo> list_classes() {
  return {
      {ClassKind::GaussianLinear, "gaussian_linear", "x -> Gaussian(<x,w>, sigma^2), |x| <= X, |w| <= W",
       "dim, x_bound, w_bound, sigma, grid_step"},
      {ClassKind::PoissonLogLinear, "poisson_log_linear", "x -> Poisson(exp <x,w>)",
       "dim, x_bound, w_bound, grid_step"},
      {ClassKind::GammaInverseLink, "gamma_inverse_link",
       "x -> Gamma(alpha, -1/(alpha(<x,w> - XW - gamma)))", "dim, x_bound, w_bound, shape, gamma_offset, grid_step"},
      {ClassKind::BernoulliThreshold, "bernoulli_threshold",
       "x -> Bernoulli(theta_1{x in c}), c a halfline or interval", "shape, theta_grid, theta_step"},
      {ClassKind::HolderBump, "holder_bump", "Bernoulli mean 1/2 + bumps phi on M cells of [0,1]",
       "holder_gamma, cells, lambda_max, lambda_grid, scheme"},
      {ClassKind::AppendixD, "appendix_d",
       "Bernoulli mean 1/2 + convex combinations of offset-plus-tent functions on [-1/2,1/2]",
       "gamma, lambda_denominator"},
  };
}

// ---- class specs ----------------------------------------------------------------------

bool ClassSpec::bernoulli() const {
  return kind == ClassKind::BernoulliThreshold || kind == ClassKind::HolderBump || kind == ClassKind::AppendixD;
}

ReferenceMeasure ClassSpec::reference() const {
  switch (kind) {
    case ClassKind::GaussianLinear: return ReferenceMeasure::cauchy_real();
    case ClassKind::PoissonLogLinear: return ReferenceMeasure::cauchy_naturals();
    case ClassKind::GammaInverseLink: return ReferenceMeasure::gamma_weighted(shape, gamma_offset);
    default: return ReferenceMeasure::binary();
  }
}

double ClassSpec::holder_constant() const { return std::pow(4.0, holder_gamma) * lambda_max; }

double ClassSpec::density_bound() const {
  const double xw = x_bound * w_bound;
  switch (kind) {
    case ClassKind::GaussianLinear: {
      // sup_y pi (1 + y^2) N(y; mu, sigma^2) grows with |mu|, so mu = XW is the worst case.
      double best = 0;
      for (int i = -8000; i <= 8000; ++i) {
        double y = xw + sigma * i / 800.0;
        double z = (y - xw) / sigma;
        double v = std::numbers::pi * (1 + y * y) * std::exp(-0.5 * z * z) / (sigma * std::sqrt(2 * std::numbers::pi));
        best = std::max(best, v);
      }
      return best * (1 + 1e-6);
    }
    case ClassKind::PoissonLogLinear: {
      double best = 0;
      for (int i = 0; i <= 64; ++i) {
        double rate = std::exp(-xw + 2 * xw * i / 64.0);
        int top = static_cast<int>(rate + 20 * std::sqrt(rate) + 50);
        for (int y = 0; y <= top; ++y) {
          double pmf = std::exp(y * std::log(rate) - rate - std::lgamma(y + 1.0));
          best = std::max(best, pmf * std::numbers::pi * (1.0 + double(y) * y) / 2.0);
        }
      }
      return best * (1 + 1e-6);
    }
    case ClassKind::GammaInverseLink:
      return std::pow((2 * xw + gamma_offset) / gamma_offset, shape);
    default:
      return 1.0;
  }
}

void ClassSpec::validate() const {
  auto fail = [](const std::string& m) { throw ConfigurationError(m); };
  if (dim == 0) fail("dim must be >= 1");
  if (!(x_bound > 0) || !(w_bound > 0)) fail("x_bound and w_bound must be positive");
  if (grid_step && !(*grid_step > 0)) fail("grid_step must be positive");
  if (max_pool == 0) fail("max_pool must be positive");
  switch (kind) {
    case ClassKind::GaussianLinear:
      if (!(sigma > 0)) fail("sigma must be positive");
      break;
    case ClassKind::GammaInverseLink:
      if (!(shape > 0) || !(gamma_offset > 0)) fail("shape and gamma_offset must be positive");
      break;
    case ClassKind::BernoulliThreshold:
      for (double t : theta_grid)
        if (t < 0 || t > 1) fail(fmt::format("theta {} outside [0, 1]", t));
      if (theta_step < 0 || theta_step > 1) fail("theta_step must lie in [0, 1]");
      break;
    case ClassKind::HolderBump:
      if (!(holder_gamma > 0 && holder_gamma <= 1)) fail("holder_gamma must lie in (0, 1]");
      if (!(lambda_max > 0 && lambda_max <= 0.5)) fail("lambda_max must lie in (0, 1/2]");
      if (cells == 0) fail("cells must be >= 1");
      if (!(grid_shift >= 0 && grid_shift < 1)) fail("grid_shift must lie in [0, 1)");
      for (double l : lambda_grid)
        if (l < 0 || l > lambda_max) fail(fmt::format("lambda {} outside [0, lambda_max]", l));
      break;
    case ClassKind::AppendixD:
      if (!(appendix_gamma > 0 && appendix_gamma < 0.5)) fail("gamma must lie in (0, 1/2)");
      if (lambda_denominator < 4) fail("lambda_denominator must be >= 4");
      break;
    default:
      break;
  }
}

// ---- pools ------------------------------------------------------------------------------

std::size_t Pool::total_members() const {
  std::size_t s = 0;
  for (const auto& b : blocks) s += b.members.size();
  return s;
}

double Pool::joint_size() const {
  double s = 1;
  for (const auto& b : blocks) s *= static_cast<double>(b.members.size());
  return s;
}

std::size_t Pool::block_of(double x0) const {
  if (blocks.size() == 1) return 0;
  auto it = std::upper_bound(blocks.begin(), blocks.end(), x0,
                             [](double v, const PoolBlock& b) { return v < b.lo; });
  std::size_t i = it == blocks.begin() ? 0 : static_cast<std::size_t>(it - blocks.begin()) - 1;
  if (!blocks[i].contains(x0) && i > 0 && blocks[i - 1].contains(x0)) --i;
  return i;
}

const std::vector<ConditionalModel>& Pool::members() const {
  if (blocks.size() != 1) throw ConfigurationError("product pool has no flat member list");
  return blocks.front().members;
}

Pool make_pool(const ClassSpec& spec, std::vector<ConditionalModel> members) {
  Pool pool;
  pool.spec = spec;
  pool.scheme = "explicit";
  pool.blocks.push_back(PoolBlock{-kInf, kInf, true, std::move(members)});
  return pool;
}

double linear_grid_step(const ClassSpec& spec, double resolution) {
  const double x = spec.x_bound, sd = std::sqrt(static_cast<double>(spec.dim));
  switch (spec.kind) {
    case ClassKind::GaussianLinear:
      // d_H^2 <= (x.dw)^2 / (8 sigma^2) and |x.dw| <= X h sqrt(d) / 2.
      return 4 * std::sqrt(2.0) * spec.sigma * resolution / (x * sd);
    case ClassKind::PoissonLogLinear:
      // d_H^2 <= e^{XW} (dtheta)^2 / 8, with a factor sqrt(2) to spare.
      return 4 * resolution * std::exp(-x * spec.w_bound / 2) / (x * sd);
    case ClassKind::GammaInverseLink:
      // d_H^2 <= (alpha/8) (dlog scale)^2 and |dlog scale| <= |x.dw| / gamma.
      return 4 * spec.gamma_offset * resolution / (std::sqrt(std::max(spec.shape, 1.0)) * x * sd);
    default:
      throw ConfigurationError("linear grid step requested for a non-linear class");
  }
}

namespace {

void check_capacity(const ClassSpec& spec, double resolution, double count) {
  if (count > static_cast<double>(spec.max_pool))
    throw CapacityError(fmt::format("class {} at resolution {}: pool of {:.4g} members exceeds the cap of {}",
                                    class_name(spec.kind), resolution, count, spec.max_pool));
}

ConditionalModel linear_member(const ClassSpec& spec, std::vector<double> w) {
  switch (spec.kind) {
    case ClassKind::GaussianLinear: return ConditionalModel(GaussianLinearParams{std::move(w), spec.sigma});
    case ClassKind::PoissonLogLinear: return ConditionalModel(PoissonLogLinearParams{std::move(w)});
    default:
      return ConditionalModel(GammaInverseLinkParams{std::move(w), spec.shape, spec.x_bound * spec.w_bound,
                                                     spec.gamma_offset});
  }
}

Pool linear_pool(const ClassSpec& spec, double resolution) {
  double h;
  if (spec.grid_step) {
    h = *spec.grid_step;
  } else {
    // Dyadic fraction of W so that 0 and +-W always lie on the grid.
    double raw = linear_grid_step(spec, resolution);
    int k = std::max(0, static_cast<int>(std::ceil(std::log2(spec.w_bound / raw) - 1e-12)));
    h = spec.w_bound / std::ldexp(1.0, k);
  }
  const long half = static_cast<long>(std::floor(spec.w_bound / h + 1e-9));
  const double per_axis = static_cast<double>(2 * half + 1);
  check_capacity(spec, resolution, std::pow(per_axis, static_cast<double>(spec.dim)));

  Pool pool;
  pool.spec = spec;
  pool.resolution = resolution;
  pool.grid_step = h;
  pool.scheme = "linear-grid";
  PoolBlock block;
  std::vector<long> idx(spec.dim, -half);
  const double limit = spec.w_bound * spec.w_bound * (1 + 1e-12);
  while (true) {
    std::vector<double> w(spec.dim);
    double norm = 0;
    for (std::size_t i = 0; i < spec.dim; ++i) {
      w[i] = static_cast<double>(idx[i]) * h;
      norm += w[i] * w[i];
    }
    if (norm <= limit) block.members.push_back(linear_member(spec, std::move(w)));
    std::size_t pos = spec.dim;
    while (pos > 0) {
      --pos;
      if (++idx[pos] <= half) break;
      idx[pos] = -half;
      if (pos == 0) {
        pos = spec.dim + 1;
        break;
      }
    }
    if (pos == spec.dim + 1) break;
  }
  pool.blocks.push_back(std::move(block));
  return pool;
}

std::vector<double> theta_values(const ClassSpec& spec, double resolution) {
  if (!spec.theta_grid.empty()) return spec.theta_grid;
  double step = spec.theta_step;
  if (step <= 0) {
    // d_H^2 between Bernoullis is at most |dtheta|; nearest grid point is within step/2.
    step = 1.0 / std::ceil(1.0 / (2 * resolution * resolution));
  }
  auto k = static_cast<std::size_t>(std::llround(1.0 / step));
  std::vector<double> out;
  for (std::size_t i = 0; i <= k; ++i) out.push_back(std::min(1.0, static_cast<double>(i) * step));
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Pool threshold_pool(const ClassSpec& spec, double resolution, const Covariates* cov) {
  if (!cov) throw ConfigurationError("bernoulli_threshold pools need covariates to place cut points");
  std::vector<double> xs;
  for (std::size_t t = 0; t < cov->size(); ++t) xs.push_back((*cov)[t][0]);
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::vector<double> cuts = {-kInf};
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) cuts.push_back(0.5 * (xs[i] + xs[i + 1]));
  cuts.push_back(kInf);

  auto thetas = theta_values(spec, resolution);
  const double nt = static_cast<double>(thetas.size()), nc = static_cast<double>(cuts.size());
  const double sets = spec.threshold_shape == ThresholdShape::Halfline ? nc : nc * (nc - 1) / 2;
  check_capacity(spec, resolution, nt * nt * sets);

  Pool pool;
  pool.spec = spec;
  pool.resolution = resolution;
  pool.grid_step = thetas.size() > 1 ? thetas[1] - thetas[0] : 0.0;
  pool.scheme = spec.threshold_shape == ThresholdShape::Halfline ? "halfline-cuts" : "interval-cuts";
  PoolBlock block;
  for (double t0 : thetas)
    for (double t1 : thetas) {
      if (spec.threshold_shape == ThresholdShape::Halfline) {
        for (double c : cuts) block.members.emplace_back(ThresholdParams{-kInf, c, t0, t1});
      } else {
        for (std::size_t a = 0; a < cuts.size(); ++a)
          for (std::size_t b = a + 1; b < cuts.size(); ++b)
            block.members.emplace_back(ThresholdParams{cuts[a], cuts[b], t0, t1});
      }
    }
  pool.blocks.push_back(std::move(block));
  return pool;
}

std::vector<double> lambda_values(const ClassSpec& spec) {
  return spec.lambda_grid.empty() ? std::vector<double>{spec.lambda_max} : spec.lambda_grid;
}

Pool holder_pattern_pool(const ClassSpec& spec, double resolution) {
  const auto m = spec.cells;
  auto lambdas = lambda_values(spec);
  if (m >= 60) check_capacity(spec, resolution, std::ldexp(1.0, static_cast<int>(m)));
  check_capacity(spec, resolution, std::ldexp(1.0, static_cast<int>(m)) * static_cast<double>(lambdas.size()));
  Pool pool;
  pool.spec = spec;
  pool.resolution = resolution;
  pool.scheme = "bump-patterns";
  PoolBlock block;
  for (double lambda : lambdas)
    for (std::uint64_t bits = 0; bits < (std::uint64_t{1} << m); ++bits) {
      std::vector<int> pattern(m);
      for (std::size_t j = 0; j < m; ++j) pattern[j] = static_cast<int>((bits >> j) & 1U);
      block.members.emplace_back(HolderBumpParams{spec.holder_gamma, lambda, std::move(pattern)});
    }
  pool.blocks.push_back(std::move(block));
  return pool;
}

// Hoelder ball approximated cell by cell: within a cell of width 1/M the mean
// moves by at most L (1/2M)^gamma <= 0.6 r / 2^gamma, and the nearest level is
// within 0.3 r. A grid shift s moves the cell edges to (j + s)/M and the
// interior levels to 1/2 + (k + s) step; the end levels stay.
Pool holder_cell_pool(const ClassSpec& spec, double resolution) {
  const double step = 0.6 * resolution;
  const double s = spec.grid_shift;
  const double cells_real = std::ceil(std::pow(spec.holder_constant() / step, 1.0 / spec.holder_gamma) - 1e-9);
  const auto levels = static_cast<std::size_t>(std::ceil(spec.lambda_max / step - 1e-9)) + 1;
  check_capacity(spec, resolution, (std::max(1.0, cells_real) + 1) * static_cast<double>(levels + 1));
  const auto m = static_cast<std::size_t>(std::max(1.0, cells_real));

  std::vector<ConditionalModel> level_models{ConditionalModel(ConstantParams{Bernoulli{0.5}})};
  for (std::size_t k = 0;; ++k) {
    const double offset = (static_cast<double>(k) + s) * step;
    if (offset >= spec.lambda_max) break;
    if (offset > 0) level_models.emplace_back(ConstantParams{Bernoulli{0.5 + offset}});
  }
  level_models.emplace_back(ConstantParams{Bernoulli{0.5 + spec.lambda_max}});

  std::vector<double> edges;
  for (std::size_t j = s > 0 ? 0 : 1; j < m; ++j) edges.push_back((static_cast<double>(j) + s) / static_cast<double>(m));
  Pool pool;
  pool.spec = spec;
  pool.resolution = resolution;
  pool.grid_step = step;
  pool.scheme = "cell-levels";
  for (std::size_t j = 0; j <= edges.size(); ++j) {
    PoolBlock b;
    b.lo = j == 0 ? -kInf : edges[j - 1];
    b.hi = j == edges.size() ? kInf : edges[j];
    b.closed_right = false;
    b.members = level_models;
    pool.blocks.push_back(std::move(b));
  }
  pool.blocks.back().closed_right = true;
  return pool;
}

// Offset-only members 1/2 + (lambda/2) f on the lambda grid. Tent perturbations
// change the mean by at most lambda^2/2 <= 1/32, so this family covers the
// single-component class at every scale above that.
Pool appendix_pool(const ClassSpec& spec, double resolution) {
  const auto den = spec.lambda_denominator;
  check_capacity(spec, resolution, static_cast<double>(den / 4 + 1));
  Pool pool;
  pool.spec = spec;
  pool.resolution = resolution;
  pool.grid_step = 1.0 / static_cast<double>(den);
  pool.scheme = "lambda-offsets";
  PoolBlock block;
  for (std::size_t k = 0; 4 * k <= den; ++k) {
    appendix_d::Params p;
    p.gamma = spec.appendix_gamma;
    p.components.push_back({1.0, static_cast<double>(k) / static_cast<double>(den), {}, {}});
    block.members.emplace_back(AppendixDModelParams{std::move(p)});
  }
  pool.blocks.push_back(std::move(block));
  return pool;
}

}  // namespace

Pool discretize(const ClassSpec& spec, double resolution, const Covariates* covariates) {
  if (!(resolution > 0)) throw DomainError("resolution must be positive");
  spec.validate();
  switch (spec.kind) {
    case ClassKind::GaussianLinear:
    case ClassKind::PoissonLogLinear:
    case ClassKind::GammaInverseLink:
      return linear_pool(spec, resolution);
    case ClassKind::BernoulliThreshold:
      return threshold_pool(spec, resolution, covariates);
    case ClassKind::HolderBump:
      return spec.holder_scheme == HolderScheme::Patterns ? holder_pattern_pool(spec, resolution)
                                                          : holder_cell_pool(spec, resolution);
    case ClassKind::AppendixD:
      return appendix_pool(spec, resolution);
  }
  throw ConfigurationError("unknown class");
}

}  // namespace cdekit
