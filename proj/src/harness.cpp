#include "cdekit/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "cdekit/error.hpp"
#include "cdekit/parallel.hpp"
#include "cdekit/quadrature.hpp"

namespace cdekit {

// ---------------------------------------------------------------------------
// Losses

std::string loss_method_name(LossMethod m) {
  switch (m) {
    case LossMethod::Auto: return "auto";
    case LossMethod::Exact: return "exact";
    case LossMethod::Piecewise: return "piecewise";
    case LossMethod::Quadrature: return "quadrature";
    case LossMethod::MonteCarlo: return "monte-carlo";
  }
  return "?";
}

LossMethod parse_loss_method(const std::string& name) {
  for (auto m : {LossMethod::Auto, LossMethod::Exact, LossMethod::Piecewise, LossMethod::Quadrature,
                 LossMethod::MonteCarlo})
    if (loss_method_name(m) == name) return m;
  throw ConfigurationError(fmt::format("unknown loss method '{}'", name));
}

namespace {

struct PointLoss {
  double kl;
  double h2;
};

PointLoss point_loss(const ConditionalModel& truth, const Predictor& fhat, const ReferenceMeasure& nu,
                     std::span<const double> x, double tol) {
  const ResponseDensity p(truth.evaluate(x));
  const ResponseDensity q = fhat.predict(x);
  DivergenceOptions o;
  o.abs_tol = tol;
  const double k = kl(p, q, nu, o).value;
  const double h = hellinger_sq(p, q, nu, o).value;
  return {std::max(0.0, k), std::clamp(h, 0.0, 1.0)};
}

// Weighted sum of point losses; a positive weight on an infinite KL makes it infinite.
struct Accumulator {
  double kl = 0.0, h2 = 0.0;
  bool infinite = false;

  void add(double w, const PointLoss& l) {
    if (!(w > 0)) return;
    if (std::isinf(l.kl))
      infinite = true;
    else
      kl += w * l.kl;
    h2 += w * l.h2;
  }

  Losses result(LossMethod m) const {
    Losses out;
    out.kl = {infinite ? kInf : kl, 0.0, infinite, m};
    out.hellinger = {h2, 0.0, false, m};
    return out;
  }
};

std::vector<double> cut_points(const ConditionalModel& truth, const Predictor& fhat, double lo, double hi) {
  std::vector<double> cuts = truth.breakpoints();
  const auto more = fhat.breakpoints();
  cuts.insert(cuts.end(), more.begin(), more.end());
  std::erase_if(cuts, [&](double c) { return !(c > lo && c < hi); });
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  std::vector<double> edges{lo};
  edges.insert(edges.end(), cuts.begin(), cuts.end());
  edges.push_back(hi);
  return edges;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

bool one_dim_continuous(const CovariateDistribution& mu) {
  return mu.dim() == 1 && (mu.kind() == CovariateDistribution::Kind::UniformInterval ||
                           mu.kind() == CovariateDistribution::Kind::Normal);
}

LossMethod resolve(LossMethod m, const ConditionalModel& truth, const Predictor& fhat,
                   const CovariateDistribution& mu) {
  if (m != LossMethod::Auto) return m;
  if (mu.finite()) return LossMethod::Exact;
  if (one_dim_continuous(mu) && truth.piecewise_constant() && fhat.piecewise_constant())
    return LossMethod::Piecewise;
  if (mu.dim() == 1 && mu.kind() == CovariateDistribution::Kind::UniformInterval) return LossMethod::Quadrature;
  return LossMethod::MonteCarlo;
}

}  // namespace

Losses losses(const ConditionalModel& truth, const Predictor& fhat, const CovariateDistribution& mu,
              const ReferenceMeasure& nu, Rng& rng, const LossOptions& opt) {
  const LossMethod method = resolve(opt.method, truth, fhat, mu);
  auto at = [&](double x0) {
    const double x[1] = {x0};
    return point_loss(truth, fhat, nu, x, opt.abs_tol);
  };
  Accumulator acc;
  switch (method) {
    case LossMethod::Auto:
      break;
    case LossMethod::Exact: {
      if (!mu.finite()) throw ConfigurationError("exact losses need a finite covariate distribution");
      const auto& atoms = mu.atoms();
      for (std::size_t i = 0; i < atoms.size(); ++i)
        acc.add(mu.weights()[i], point_loss(truth, fhat, nu, atoms[i], opt.abs_tol));
      return acc.result(method);
    }
    case LossMethod::Piecewise: {
      if (!one_dim_continuous(mu)) throw ConfigurationError("piecewise losses need 1-D interval or normal covariates");
      if (!truth.piecewise_constant() || !fhat.piecewise_constant())
        throw ConfigurationError("piecewise losses need piecewise-constant maps");
      const bool normal = mu.kind() == CovariateDistribution::Kind::Normal;
      const double lo = normal ? -kInf : mu.lo(), hi = normal ? kInf : mu.hi();
      const auto edges = cut_points(truth, fhat, lo, hi);
      for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        const double a = edges[i], b = edges[i + 1];
        double w;
        if (normal)
          w = normal_cdf((b - mu.lo()) / mu.hi()) - normal_cdf((a - mu.lo()) / mu.hi());
        else
          w = (b - a) / (hi - lo);
        double mid;
        if (std::isfinite(a) && std::isfinite(b))
          mid = 0.5 * (a + b);
        else if (std::isfinite(b))
          mid = b - 1.0;
        else if (std::isfinite(a))
          mid = a + 1.0;
        else
          mid = mu.lo();
        acc.add(w, at(mid));
      }
      return acc.result(method);
    }
    case LossMethod::Quadrature: {
      if (mu.dim() != 1 || mu.kind() != CovariateDistribution::Kind::UniformInterval)
        throw ConfigurationError("quadrature losses need 1-D interval covariates");
      const double lo = mu.lo(), hi = mu.hi();
      const auto edges = cut_points(truth, fhat, lo, hi);
      const std::size_t panels = edges.size() > 17 ? 1 : std::max<std::size_t>(1, opt.panels);
      for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        const double h = (edges[i + 1] - edges[i]) / static_cast<double>(panels);
        for (std::size_t k = 0; k < panels; ++k) {
          const double a = edges[i] + h * static_cast<double>(k);
          const double b = k + 1 == panels ? edges[i + 1] : a + h;
          const auto rule = kronrod15_rule(a, b);
          for (std::size_t j = 0; j < rule.nodes.size(); ++j) acc.add(rule.weights[j] / (hi - lo), at(rule.nodes[j]));
        }
      }
      return acc.result(method);
    }
    case LossMethod::MonteCarlo: {
      if (opt.draws < 2) throw DomainError("Monte Carlo losses need at least two draws");
      const Covariates xs = mu.sample(opt.draws, rng);
      double sk = 0, sk2 = 0, sh = 0, sh2 = 0;
      bool infinite = false;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        const auto l = point_loss(truth, fhat, nu, xs[i], opt.abs_tol);
        if (std::isinf(l.kl)) {
          infinite = true;
        } else {
          sk += l.kl;
          sk2 += l.kl * l.kl;
        }
        sh += l.h2;
        sh2 += l.h2 * l.h2;
      }
      const double m = static_cast<double>(xs.size());
      auto se = [m](double s, double s2) {
        const double var = std::max(0.0, (s2 - s * s / m) / (m - 1));
        return std::sqrt(var / m);
      };
      Losses out;
      out.kl = {infinite ? kInf : sk / m, infinite ? kInf : se(sk, sk2), infinite, method};
      out.hellinger = {sh / m, se(sh, sh2), false, method};
      return out;
    }
  }
  throw ConfigurationError("unknown loss method");
}

LossValue kl_loss(const ConditionalModel& truth, const Predictor& fhat, const CovariateDistribution& mu,
                  const ReferenceMeasure& nu, Rng& rng, const LossOptions& opt) {
  return losses(truth, fhat, mu, nu, rng, opt).kl;
}

LossValue hellinger_loss(const ConditionalModel& truth, const Predictor& fhat, const CovariateDistribution& mu,
                         const ReferenceMeasure& nu, Rng& rng, const LossOptions& opt) {
  return losses(truth, fhat, mu, nu, rng, opt).hellinger;
}

// ---------------------------------------------------------------------------
// Estimator specifications

std::string estimator_kind_name(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::Minimax: return "minimax";
    case EstimatorKind::Mle: return "mle";
    case EstimatorKind::SmoothedMle: return "smoothed-mle";
    case EstimatorKind::SieveMle: return "sieve-mle";
    case EstimatorKind::GridMle: return "grid-mle";
    case EstimatorKind::Sequential: return "sequential";
    case EstimatorKind::Adaptive: return "adaptive";
  }
  return "?";
}

EstimatorKind parse_estimator_kind(const std::string& name) {
  for (auto k : {EstimatorKind::Minimax, EstimatorKind::Mle, EstimatorKind::SmoothedMle, EstimatorKind::SieveMle,
                 EstimatorKind::GridMle, EstimatorKind::Sequential, EstimatorKind::Adaptive})
    if (estimator_kind_name(k) == name) return k;
  throw ConfigurationError(fmt::format("unknown estimator '{}'", name));
}

double measured_critical_radius(const ClassSpec& cls, const Covariates& x, std::size_t n) {
  const double dn = static_cast<double>(std::max<std::size_t>(n, 1));
  const double floor = 1.0 / std::sqrt(dn);
  const double lo = 0.5 * floor, hi = 1.0;
  constexpr std::size_t kGrid = 24;
  std::vector<double> grid(kGrid);
  for (std::size_t i = 0; i < kGrid; ++i)
    grid[i] = lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(kGrid - 1));
  const Pool pool = discretize(cls, 0.25 * floor, &x);
  ProfileOptions po;
  po.local_references = 0;
  const auto profile = entropy_profile(pool, {x}, grid, po);
  if (profile.value(lo) < dn * lo * lo) return lo;
  return critical_radius(profile, dn);
}

double plan_epsilon(const ClassSpec& cls, const EstimatorSpec& est, const Covariates& cover_x, std::size_t n) {
  return choose_epsilon(est.epsilon, n, cls.density_bound(), cls.reference().total_mass(),
                        [&] { return measured_critical_radius(cls, cover_x, n); });
}

Pool plan_pool(const ClassSpec& cls, const EstimatorSpec& est, const Covariates& cover_x, double eps) {
  const double resolution = est.resolution.value_or(est.resolution_factor * eps);
  if (!(resolution > 0)) throw DomainError("pool resolution must be positive");
  return discretize(cls, resolution, &cover_x);
}

namespace {

// sum_g W(g) lambda(g) over a single-block mixture of bump-class members.
double offset_level(const MixturePredictor& m) {
  if (m.blocks().size() != 1) return kNaN;
  const auto& b = m.blocks().front();
  double s = 0;
  for (std::size_t g = 0; g < b.members.size(); ++g) {
    const auto* a = std::get_if<AppendixDModelParams>(&b.members[g].params());
    if (!a) return kNaN;
    s += b.weights[g] * a->p.lambda_bar();
  }
  return s;
}

}  // namespace

FitOutcome fit_estimator(const ClassSpec& cls, const EstimatorSpec& est, const Sample& sample) {
  const std::size_t n = sample.size();
  if (n == 0) throw DomainError("cannot fit on an empty sample");
  FitOutcome out;
  switch (est.kind) {
    case EstimatorKind::Minimax: {
      const std::size_t half = n / 2;
      const Covariates cover_x = sample.x.slice(0, half);
      const Sample agg = sample.slice(half, n);
      const double eps = plan_epsilon(cls, est, cover_x, agg.size());
      const Pool pool = plan_pool(cls, est, cover_x, eps);
      MinimaxOptions mo;
      mo.alpha = est.alpha;
      mo.allow_small_epsilon = est.allow_small_epsilon;
      auto fit = fit_minimax(pool, cover_x, agg, eps, mo);
      out.epsilon = eps;
      out.cover_size = fit.cover_size();
      out.lambda_bar = offset_level(*fit.predictor);
      out.predictor = fit.predictor;
      out.minimax = std::make_shared<const FittedEstimator>(std::move(fit));
      return out;
    }
    case EstimatorKind::Mle:
    case EstimatorKind::SmoothedMle:
    case EstimatorKind::SieveMle: {
      const double eps = plan_epsilon(cls, est, sample.x, n);
      const Pool pool = plan_pool(cls, est, sample.x, eps);
      MleFit fit;
      if (est.kind == EstimatorKind::Mle)
        fit = fit_mle(pool, sample, 0.0);
      else if (est.kind == EstimatorKind::SmoothedMle)
        fit = fit_smoothed_mle(pool, sample, est.alpha);
      else
        fit = fit_sieve_mle(pool, sample, eps, std::max(0.0, est.alpha));
      out.epsilon = eps;
      out.lambda_bar = offset_level(*fit.predictor);
      out.predictor = fit.predictor;
      return out;
    }
    case EstimatorKind::GridMle: {
      auto fit = fit_appendix_d_mle(cls, sample);
      out.lambda_bar = fit.lambda;
      out.cover_size = fit.bumps;
      out.predictor = smoothed_model(fit.model, 0.0, cls.reference());
      return out;
    }
    case EstimatorKind::Sequential:
    case EstimatorKind::Adaptive:
      break;
  }
  throw ConfigurationError(fmt::format("'{}' is not a batch estimator", estimator_kind_name(est.kind)));
}

// ---------------------------------------------------------------------------
// Records and reports

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') throw ConfigurationError(fmt::format("bad number '{}' in risk CSV", s));
  return v;
}

std::uint64_t parse_unsigned(const std::string& s) {
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0') throw ConfigurationError(fmt::format("bad integer '{}' in risk CSV", s));
  return v;
}

}  // namespace

void write_risk_csv(const std::vector<RiskRecord>& records, std::ostream& out) {
  const auto& cols = risk_csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& r : records)
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", csv_field(r.experiment_id), csv_field(r.class_name),
                       csv_field(r.estimator), r.n, r.rep, r.kl_loss, r.hellinger_loss, r.regret, r.lambda_bar,
                       r.seed, r.wall_ms);
}

std::vector<RiskRecord> read_risk_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigurationError("risk CSV is empty");
  if (split_csv_line(line) != risk_csv_columns()) throw ConfigurationError("risk CSV header does not match the schema");
  std::vector<RiskRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != risk_csv_columns().size())
      throw ConfigurationError(fmt::format("risk CSV row has {} fields", f.size()));
    RiskRecord r;
    r.experiment_id = f[0];
    r.class_name = f[1];
    r.estimator = f[2];
    r.n = parse_unsigned(f[3]);
    r.rep = parse_unsigned(f[4]);
    r.kl_loss = parse_double(f[5]);
    r.hellinger_loss = parse_double(f[6]);
    r.regret = parse_double(f[7]);
    r.lambda_bar = parse_double(f[8]);
    r.seed = parse_unsigned(f[9]);
    r.wall_ms = parse_double(f[10]);
    out.push_back(std::move(r));
  }
  return out;
}

Interval mean_ci(const std::vector<double>& values) {
  std::vector<double> v;
  for (double x : values) {
    if (std::isnan(x)) continue;
    if (std::isinf(x)) return {kInf, kInf};
    v.push_back(x);
  }
  if (v.empty()) return {};
  double mean = 0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, kNaN};
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return {mean, 1.96 * sd / std::sqrt(static_cast<double>(v.size()))};
}

std::vector<RiskReport> summarize(const std::vector<RiskRecord>& records, std::uint64_t seed) {
  std::vector<std::string> names;
  std::vector<std::size_t> ns;
  for (const auto& r : records) {
    if (std::find(names.begin(), names.end(), r.estimator) == names.end()) names.push_back(r.estimator);
    ns.push_back(r.n);
  }
  std::sort(ns.begin(), ns.end());
  ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
  std::vector<RiskReport> out;
  for (const auto& name : names)
    for (std::size_t n : ns) {
      RiskReport rep;
      rep.estimator = name;
      rep.n = n;
      rep.seed = seed;
      for (const auto& r : records) {
        if (r.estimator != name || r.n != n) continue;
        rep.class_name = r.class_name;
        ++rep.replications;
        const bool failed = !r.error.empty();
        rep.failures += failed;
        rep.kl_losses.push_back(failed ? kNaN : r.kl_loss);
        rep.hellinger_losses.push_back(failed ? kNaN : r.hellinger_loss);
        rep.regrets.push_back(failed ? kNaN : r.regret);
        rep.lambda_bars.push_back(failed ? kNaN : r.lambda_bar);
        rep.infinite += !failed && std::isinf(r.kl_loss);
      }
      if (rep.replications == 0) continue;
      rep.kl = mean_ci(rep.kl_losses);
      rep.hellinger = mean_ci(rep.hellinger_losses);
      rep.regret = mean_ci(rep.regrets);
      rep.lambda_bar = mean_ci(rep.lambda_bars);
      out.push_back(std::move(rep));
    }
  return out;
}

RateFit rate_fit(const std::vector<double>& n, const std::vector<double>& risks, bool burn_in) {
  if (n.size() != risks.size()) throw DomainError("rate fit needs one risk per grid point");
  for (std::size_t i = 1; i < n.size(); ++i)
    if (!(n[i] > n[i - 1])) throw DomainError("rate fit needs a strictly increasing n grid");
  RateFit fit;
  fit.n = n;
  fit.risks = risks;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < n.size(); ++i) {
    if (std::isfinite(risks[i]) && risks[i] > 0 && n[i] > 0)
      kept.push_back(i);
    else
      fit.warnings.push_back(fmt::format("risk {} at n = {} excluded from the fit", risks[i], n[i]));
  }
  if (kept.size() < 3) throw DomainError("rate fit needs at least three positive risks");
  const std::size_t drop = burn_in ? std::min(kept.size() / 2, kept.size() - 2) : 0;
  const std::vector<std::size_t> used(kept.begin() + static_cast<std::ptrdiff_t>(drop), kept.end());
  fit.first_used = used.front();
  double mx = 0, my = 0;
  for (std::size_t i : used) {
    mx += std::log(n[i]);
    my += std::log(risks[i]);
  }
  const double m = static_cast<double>(used.size());
  mx /= m;
  my /= m;
  double sxy = 0, sxx = 0;
  for (std::size_t i : used) {
    const double dx = std::log(n[i]) - mx;
    sxy += dx * (std::log(risks[i]) - my);
    sxx += dx * dx;
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  for (std::size_t i : used) fit.residuals.push_back(std::log(risks[i]) - fit.intercept - fit.slope * std::log(n[i]));
  return fit;
}

// ---------------------------------------------------------------------------
// Experiments

const RiskReport& SweepResult::report(const std::string& estimator, std::size_t n) const {
  for (const auto& r : reports)
    if (r.estimator == estimator && r.n == n) return r;
  throw ConfigurationError(fmt::format("no report for estimator '{}' at n = {}", estimator, n));
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Uniform [0, 1) grid shift for replication seed and sample size n.
double grid_shift_for(std::uint64_t rep_seed, std::size_t n) {
  const std::uint64_t bits = splitmix64(rep_seed ^ (0xd1b54a32d192ed03ULL * (static_cast<std::uint64_t>(n) + 1)));
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Substream for the loss evaluation of estimator e.
std::uint64_t loss_seed(std::uint64_t rep_seed, std::size_t e) { return splitmix64(rep_seed ^ (0x5bd1e995ULL + e)); }

void validate_grid(const std::vector<std::size_t>& grid, std::size_t replications) {
  if (grid.empty()) throw ConfigurationError("n grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < 2) throw ConfigurationError("n grid values must be at least 2");
    if (i > 0 && grid[i] <= grid[i - 1]) throw ConfigurationError("n grid must be strictly increasing");
  }
  if (replications < 2) throw ConfigurationError("replications must be at least 2");
}

using Clock = std::chrono::steady_clock;

// Counts finished tasks and forwards to the callback, if any.
class Progress {
 public:
  Progress(const ProgressFn& fn, std::size_t total) : fn_(fn), total_(total) {}
  void tick() {
    const std::size_t done = ++done_;
    if (fn_) fn_(done, total_);
  }

 private:
  const ProgressFn& fn_;
  std::size_t total_;
  std::atomic<std::size_t> done_{0};
};

double elapsed_ms(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

RiskRecord base_record(const std::string& id, const std::string& cls, const std::string& est, std::size_t n,
                       std::size_t rep, std::uint64_t seed) {
  RiskRecord r;
  r.experiment_id = id;
  r.class_name = cls;
  r.estimator = est;
  r.n = n;
  r.rep = rep;
  r.seed = seed;
  return r;
}

void record_losses(RiskRecord& r, const Losses& l) {
  r.kl_loss = l.kl.value;
  r.hellinger_loss = l.hellinger.value;
}

std::map<std::string, RateFit> fits_of(const std::vector<RiskReport>& reports, const std::vector<std::size_t>& grid,
                                       Interval RiskReport::*field) {
  std::map<std::string, RateFit> out;
  if (grid.size() < 3) return out;
  std::vector<std::string> names;
  for (const auto& r : reports)
    if (std::find(names.begin(), names.end(), r.estimator) == names.end()) names.push_back(r.estimator);
  for (const auto& name : names) {
    std::vector<double> ns, risks;
    for (const auto& r : reports)
      if (r.estimator == name) {
        ns.push_back(static_cast<double>(r.n));
        risks.push_back((r.*field).mean);
      }
    if (std::none_of(risks.begin(), risks.end(), [](double v) { return std::isfinite(v); })) continue;
    try {
      out[name] = rate_fit(ns, risks);
    } catch (const DomainError& e) {
      RateFit f;
      f.n = ns;
      f.risks = risks;
      f.warnings.push_back(e.what());
      out[name] = f;
    }
  }
  return out;
}

SweepResult finish(std::string id, std::string cls, std::uint64_t seed, std::size_t reps,
                   std::vector<std::size_t> grid, std::vector<RiskRecord> records, std::vector<Overlay> overlays) {
  SweepResult out;
  out.experiment_id = std::move(id);
  out.class_name = std::move(cls);
  out.seed = seed;
  out.replications = reps;
  out.n_grid = std::move(grid);
  out.records = std::move(records);
  out.reports = summarize(out.records, seed);
  out.kl_fits = fits_of(out.reports, out.n_grid, &RiskReport::kl);
  out.hellinger_fits = fits_of(out.reports, out.n_grid, &RiskReport::hellinger);
  out.regret_fits = fits_of(out.reports, out.n_grid, &RiskReport::regret);
  out.overlays = std::move(overlays);
  return out;
}

}  // namespace

std::uint64_t replication_seed(std::uint64_t seed, std::size_t rep) {
  return splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(rep));
}

Sample draw_sample(const ConditionalModel& truth, const CovariateDistribution& mu, std::size_t n, Rng& rng) {
  Sample s;
  s.x = Covariates(mu.dim());
  s.x.data.reserve(n * mu.dim());
  s.y.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    const Covariates x = mu.sample(1, rng);
    s.x.push_back(x[0]);
    s.y.push_back(point_sample(truth.evaluate(x[0]), rng));
  }
  return s;
}

Sample draw_parts(const ConditionalModel& truth, const CovariateDistribution& mu,
                  const std::vector<std::size_t>& sizes, std::uint64_t seed) {
  Sample s;
  s.x = Covariates(mu.dim());
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    Rng rng(splitmix64(seed ^ (0x2545f4914f6cdd1dULL * (k + 1))));
    const Sample part = draw_sample(truth, mu, sizes[k], rng);
    s.x.data.insert(s.x.data.end(), part.x.data.begin(), part.x.data.end());
    s.y.insert(s.y.end(), part.y.begin(), part.y.end());
  }
  return s;
}

SweepResult risk_sweep(const SweepSpec& spec) {
  if (!spec.truth) throw ConfigurationError("risk sweep needs a truth model");
  if (spec.estimators.empty()) throw ConfigurationError("risk sweep needs at least one estimator");
  for (const auto& e : spec.estimators)
    if (e.kind == EstimatorKind::Sequential || e.kind == EstimatorKind::Adaptive)
      throw ConfigurationError(fmt::format("'{}' is not a batch estimator", e.name()));
  validate_grid(spec.n_grid, spec.replications);
  spec.cls.validate();
  const ReferenceMeasure nu = spec.cls.reference();
  const std::string cls_name = class_name(spec.cls.kind);
  const std::size_t reps = spec.replications, ests = spec.estimators.size();
  const std::size_t tasks = spec.n_grid.size() * reps;
  std::vector<RiskRecord> records(tasks * ests);
  Progress progress(spec.progress, tasks);
  parallel_for(tasks, spec.workers, [&](std::size_t task) {
    const std::size_t n = spec.n_grid[task / reps], rep = task % reps;
    const std::uint64_t seed = replication_seed(spec.seed, rep);
    const Sample sample = draw_parts(*spec.truth, spec.covariates, {n / 2, n - n / 2}, seed);
    ClassSpec cls = spec.cls;
    if (spec.random_grid_shift) cls.grid_shift = grid_shift_for(seed, n);
    for (std::size_t e = 0; e < ests; ++e) {
      const auto& est = spec.estimators[e];
      RiskRecord& r = records[task * ests + e];
      r = base_record(spec.experiment_id, cls_name, est.name(), n, rep, seed);
      const auto t0 = Clock::now();
      try {
        const auto fit = fit_estimator(cls, est, sample);
        Rng lrng(loss_seed(seed, e));
        record_losses(r, losses(*spec.truth, *fit.predictor, spec.covariates, nu, lrng, spec.loss));
        r.lambda_bar = fit.lambda_bar;
      } catch (const Error& ex) {
        r.error = ex.what();
      }
      if (spec.timing) r.wall_ms = elapsed_ms(t0);
    }
    progress.tick();
  });
  return finish(spec.experiment_id, cls_name, spec.seed, reps, spec.n_grid, std::move(records), spec.overlays);
}

SweepResult regret_sweep(const SweepSpec& spec) {
  if (!spec.truth) throw ConfigurationError("regret sweep needs a truth model");
  if (spec.estimators.empty()) throw ConfigurationError("regret sweep needs an estimator spec");
  validate_grid(spec.n_grid, spec.replications);
  spec.cls.validate();
  const ReferenceMeasure nu = spec.cls.reference();
  const std::string cls_name = class_name(spec.cls.kind);
  const EstimatorSpec& est = spec.estimators.front();
  const std::string label = est.label.empty() ? estimator_kind_name(EstimatorKind::Sequential) : est.label;
  const std::size_t reps = spec.replications;
  const std::size_t tasks = spec.n_grid.size() * reps;
  std::vector<RiskRecord> records(tasks);
  Progress progress(spec.progress, tasks);
  parallel_for(tasks, spec.workers, [&](std::size_t task) {
    const std::size_t n = spec.n_grid[task / reps], rep = task % reps;
    const std::uint64_t seed = replication_seed(spec.seed, rep);
    const Sample stream = draw_parts(*spec.truth, spec.covariates, {n}, seed);
    ClassSpec cls = spec.cls;
    if (spec.random_grid_shift) cls.grid_shift = grid_shift_for(seed, n);
    RiskRecord& r = records[task];
    r = base_record(spec.experiment_id, cls_name, label, n, rep, seed);
    const auto t0 = Clock::now();
    try {
      SequentialOptions so;
      so.epsilon = [&](const Covariates& cx) { return plan_epsilon(cls, est, cx, cx.size()); };
      if (est.alpha > 0) so.alpha = [a = est.alpha](const Covariates&) { return a; };
      const auto res = sequential_predict(
          stream, nu, [&](const Covariates& cx, double eps) { return plan_pool(cls, est, cx, eps); }, so);
      r.regret = res.regret(*spec.truth, stream);
      Rng lrng(loss_seed(seed, 0));
      record_losses(r, losses(*spec.truth, *res.cesaro, spec.covariates, nu, lrng, spec.loss));
    } catch (const Error& ex) {
      r.error = ex.what();
    }
    if (spec.timing) r.wall_ms = elapsed_ms(t0);
    progress.tick();
  });
  return finish(spec.experiment_id, cls_name, spec.seed, reps, spec.n_grid, std::move(records), spec.overlays);
}

SweepResult mle_gap_experiment(const MleGapSpec& spec) {
  if (!(spec.gamma > 0 && spec.gamma < 0.5)) throw DomainError("mle-gap needs gamma in (0, 1/2)");
  SweepSpec s;
  s.experiment_id = spec.experiment_id;
  s.cls.kind = ClassKind::AppendixD;
  s.cls.appendix_gamma = spec.gamma;
  s.cls.lambda_denominator = spec.lambda_denominator;
  s.truth = ConditionalModel(ConstantParams{Bernoulli{0.5}});
  s.covariates = CovariateDistribution::uniform_interval(-0.5, 0.5);
  EstimatorSpec agg;
  agg.kind = EstimatorKind::Minimax;
  agg.label = "aggregation";
  agg.epsilon = spec.epsilon;
  agg.allow_small_epsilon = spec.allow_small_epsilon;
  EstimatorSpec mle;
  mle.kind = EstimatorKind::GridMle;
  mle.label = "grid-mle";
  s.estimators = {agg, mle};
  s.n_grid = spec.n_grid;
  s.replications = spec.replications;
  s.seed = spec.seed;
  s.workers = spec.workers;
  s.timing = spec.timing;
  s.progress = spec.progress;
  return risk_sweep(s);
}

SweepResult adaptive_experiment(const AdaptiveSpec& spec) {
  if (spec.candidates.empty()) throw ConfigurationError("adaptive experiment needs candidate classes");
  if (!spec.prior.empty() && spec.prior.size() != spec.candidates.size())
    throw ConfigurationError("prior must have one weight per candidate");
  validate_grid(spec.n_grid, spec.replications);
  for (const auto& c : spec.candidates) c.validate();
  const ReferenceMeasure nu = spec.candidates.front().reference();
  const std::string cls_name = class_name(spec.candidates.front().kind);
  const std::size_t m = spec.candidates.size(), rows = m + 1;
  std::vector<AdaptiveCandidate> cands;
  for (std::size_t i = 0; i < m; ++i) {
    const ClassSpec& cls = spec.candidates[i];
    const EstimatorSpec& est = spec.estimator;
    cands.push_back({fmt::format("model-{}", i + 1),
                     [&cls, &est](const Covariates& cx, double eps) { return plan_pool(cls, est, cx, eps); },
                     [&cls, &est](const Covariates& cx) { return plan_epsilon(cls, est, cx, cx.size()); },
                     spec.prior.empty() ? basel_prior(i + 1) : spec.prior[i]});
  }
  AdaptiveOptions ao;
  ao.alpha = spec.estimator.alpha;
  ao.allow_small_epsilon = spec.estimator.allow_small_epsilon;
  const std::size_t reps = spec.replications;
  const std::size_t tasks = spec.n_grid.size() * reps;
  std::vector<RiskRecord> records(tasks * rows);
  Progress progress(spec.progress, tasks);
  parallel_for(tasks, spec.workers, [&](std::size_t task) {
    const std::size_t n = spec.n_grid[task / reps], rep = task % reps;
    const std::uint64_t seed = replication_seed(spec.seed, rep);
    const Sample sample = draw_parts(spec.truth, spec.covariates, {n / 3, n / 3, n - 2 * (n / 3)}, seed);
    RiskRecord* r = &records[task * rows];
    r[0] = base_record(spec.experiment_id, cls_name, "adaptive", n, rep, seed);
    for (std::size_t i = 0; i < m; ++i) r[i + 1] = base_record(spec.experiment_id, cls_name, cands[i].name, n, rep, seed);
    const auto t0 = Clock::now();
    try {
      const auto est = fit_adaptive(cands, sample, ao);
      Rng lrng(loss_seed(seed, 0));
      record_losses(r[0], losses(spec.truth, *est.predictor, spec.covariates, nu, lrng, spec.loss));
      for (std::size_t i = 0; i < m; ++i) {
        Rng mrng(loss_seed(seed, i + 1));
        record_losses(r[i + 1], losses(spec.truth, *est.models[i].predictor, spec.covariates, nu, mrng, spec.loss));
      }
    } catch (const Error& ex) {
      for (std::size_t i = 0; i < rows; ++i) r[i].error = ex.what();
    }
    if (spec.timing) r[0].wall_ms = elapsed_ms(t0);
    progress.tick();
  });
  return finish(spec.experiment_id, cls_name, spec.seed, reps, spec.n_grid, std::move(records), {});
}

}  // namespace cdekit
