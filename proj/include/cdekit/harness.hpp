#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cdekit/estimators.hpp"
#include "cdekit/models.hpp"

namespace cdekit {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// ---------------------------------------------------------------------------
// Losses

enum class LossMethod { Auto, Exact, Piecewise, Quadrature, MonteCarlo };

std::string loss_method_name(LossMethod m);
LossMethod parse_loss_method(const std::string& name);

struct LossOptions {
  LossMethod method = LossMethod::Auto;
  std::size_t draws = 2000;  // Monte Carlo covariate draws
  std::size_t panels = 4;    // K15 panels per piece for Quadrature
  double abs_tol = 1e-9;     // per-covariate divergence tolerance
};

struct LossValue {
  double value = 0.0;
  double std_error = 0.0;  // Monte Carlo only
  bool infinite = false;
  LossMethod method = LossMethod::Exact;
};

struct Losses {
  LossValue kl;
  LossValue hellinger;  // squared Hellinger distance
};

// E_{x ~ mu} D(f*(x), fhat(x)) for D = KL and D = d_H^2, integrated against nu.
//  Exact: finite covariate distributions.
//  Piecewise: 1-D interval or normal covariates with both maps piecewise constant.
//  Quadrature: 1-D interval covariates, K15 panels between breakpoints.
//  MonteCarlo: i.i.d. draws from mu with the standard error reported.
// Auto picks the first that applies; `rng` is used by Monte Carlo only.
Losses losses(const ConditionalModel& truth, const Predictor& fhat, const CovariateDistribution& mu,
              const ReferenceMeasure& nu, Rng& rng, const LossOptions& opt = {});
LossValue kl_loss(const ConditionalModel& truth, const Predictor& fhat, const CovariateDistribution& mu,
                  const ReferenceMeasure& nu, Rng& rng, const LossOptions& opt = {});
LossValue hellinger_loss(const ConditionalModel& truth, const Predictor& fhat, const CovariateDistribution& mu,
                         const ReferenceMeasure& nu, Rng& rng, const LossOptions& opt = {});

// ---------------------------------------------------------------------------
// Estimator specifications

enum class EstimatorKind { Minimax, Mle, SmoothedMle, SieveMle, GridMle, Sequential, Adaptive };

std::string estimator_kind_name(EstimatorKind k);
EstimatorKind parse_estimator_kind(const std::string& name);

struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::Minimax;
  std::string label;  // CSV estimator column; empty: the kind name
  EpsilonPolicy epsilon;
  double alpha = 0.0;  // <= 0: 1/n
  std::optional<double> resolution;  // pool resolution; empty: resolution_factor * eps
  double resolution_factor = 0.5;
  bool allow_small_epsilon = false;

  std::string name() const { return label.empty() ? estimator_kind_name(kind) : label; }
};

// Log cover sizes of the class on `x`, measured on a pool finer than 1/sqrt(n),
// solved against n eps^2.
double measured_critical_radius(const ClassSpec& cls, const Covariates& x, std::size_t n);

// eps for an aggregation run of n rounds whose cover is built on `cover_x`.
double plan_epsilon(const ClassSpec& cls, const EstimatorSpec& est, const Covariates& cover_x, std::size_t n);
Pool plan_pool(const ClassSpec& cls, const EstimatorSpec& est, const Covariates& cover_x, double eps);

struct FitOutcome {
  std::shared_ptr<const Predictor> predictor;
  double epsilon = kNaN;
  std::size_t cover_size = 0;
  double lambda_bar = kNaN;  // bump classes: offset level of the fitted predictor
  std::shared_ptr<const FittedEstimator> minimax;  // Minimax only
};

// Fits a batch estimator (not Sequential or Adaptive) on the sample.
FitOutcome fit_estimator(const ClassSpec& cls, const EstimatorSpec& est, const Sample& sample);

// ---------------------------------------------------------------------------
// Records and reports

struct RiskRecord {
  std::string experiment_id;
  std::string class_name;
  std::string estimator;
  std::size_t n = 0;
  std::size_t rep = 0;
  double kl_loss = kNaN;
  double hellinger_loss = kNaN;
  double regret = kNaN;
  double lambda_bar = kNaN;
  std::uint64_t seed = 0;
  double wall_ms = 0.0;
  std::string error;  // empty on success; not part of the CSV
};

inline const std::vector<std::string>& risk_csv_columns() {
  static const std::vector<std::string> cols{"experiment_id", "class",          "estimator", "n",
                                             "rep",           "kl_loss",        "hellinger_loss",
                                             "regret",        "lambda_bar",     "seed",      "wall_ms"};
  return cols;
}

void write_risk_csv(const std::vector<RiskRecord>& records, std::ostream& out);
std::vector<RiskRecord> read_risk_csv(std::istream& in);

struct Interval {
  double mean = kNaN;
  double halfwidth = kNaN;  // 1.96 sd / sqrt(R)
};

// Mean and normal 95% CI halfwidth, NaN values skipped. Any +inf makes both
// +inf; no values gives NaN.
Interval mean_ci(const std::vector<double>& values);

struct RiskReport {
  std::string class_name;
  std::string estimator;
  std::size_t n = 0;
  std::size_t replications = 0;
  std::uint64_t seed = 0;
  std::vector<double> kl_losses;  // per rep, NaN for failed reps
  std::vector<double> hellinger_losses;
  std::vector<double> regrets;
  std::vector<double> lambda_bars;
  Interval kl;
  Interval hellinger;
  Interval regret;
  Interval lambda_bar;
  std::size_t failures = 0;
  std::size_t infinite = 0;
};

// Groups records by (estimator, n), in first-appearance order of estimators and ascending n.
std::vector<RiskReport> summarize(const std::vector<RiskRecord>& records, std::uint64_t seed);

struct RateFit {
  std::vector<double> n;
  std::vector<double> risks;
  double slope = kNaN;
  double intercept = kNaN;
  std::vector<double> residuals;  // over the points used
  std::size_t first_used = 0;     // index of the first point in the fit
  std::vector<std::string> warnings;
};

// OLS of log(risk) on log(n). With burn_in, over the upper half of the grid
// (the lower floor(m/2) points are discarded, keeping at least two).
// Nonpositive or non-finite risks are dropped with a warning before the split.
RateFit rate_fit(const std::vector<double>& n, const std::vector<double>& risks, bool burn_in = true);

// ---------------------------------------------------------------------------
// Experiments

// Called after each finished (n, rep) task with (done, total); may run on any worker.
using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

struct Overlay {
  RateRegime regime = RateRegime::UpperParametric;
  RateParams params;
};

struct SweepSpec {
  std::string experiment_id = "risk-sweep";
  ClassSpec cls;
  std::optional<ConditionalModel> truth;
  CovariateDistribution covariates = CovariateDistribution::uniform_interval(-1.0, 1.0);
  std::vector<EstimatorSpec> estimators{EstimatorSpec{}};
  std::vector<std::size_t> n_grid;
  std::size_t replications = 50;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  LossOptions loss;
  bool timing = false;  // wall_ms is 0 unless set
  // Draws ClassSpec::grid_shift uniformly per (rep, n), so the expected risk
  // does not depend on how the cell grid happens to align with the truth.
  bool random_grid_shift = false;
  std::vector<Overlay> overlays;
  ProgressFn progress;
};

struct SweepResult {
  std::string experiment_id;
  std::string class_name;
  std::uint64_t seed = 0;
  std::size_t replications = 0;
  std::vector<std::size_t> n_grid;
  std::vector<RiskRecord> records;  // ordered by (n, rep, estimator)
  std::vector<RiskReport> reports;
  // Per estimator: fits of mean KL and Hellinger risk against n.
  std::map<std::string, RateFit> kl_fits;
  std::map<std::string, RateFit> hellinger_fits;
  std::map<std::string, RateFit> regret_fits;
  std::vector<Overlay> overlays;

  const RiskReport& report(const std::string& estimator, std::size_t n) const;
};

// Per-replication seed: splitmix64 of (hashed base seed xor rep index). The
// same substream serves every n of the grid.
std::uint64_t replication_seed(std::uint64_t seed, std::size_t rep);

// Draws (x_t ~ mu, y_t ~ f*(x_t)) for t = 1..n in order, so a smaller n gives a prefix.
Sample draw_sample(const ConditionalModel& truth, const CovariateDistribution& mu, std::size_t n, Rng& rng);
// Consecutive parts of the given sizes, part k drawn from its own stream
// derived from `seed`: at a larger n each part extends the smaller one.
Sample draw_parts(const ConditionalModel& truth, const CovariateDistribution& mu,
                  const std::vector<std::size_t>& sizes, std::uint64_t seed);

// Per rep and n: one draw shared by all estimators (halves as separate parts), fit, losses.
SweepResult risk_sweep(const SweepSpec& spec);

// Sequential predictor per rep: regret against the truth on the stream and
// losses of the Cesaro average. Uses the first estimator spec for eps and alpha.
SweepResult regret_sweep(const SweepSpec& spec);

struct MleGapSpec {
  std::string experiment_id = "mle-gap";
  double gamma = 0.25;
  std::vector<std::size_t> n_grid;
  std::size_t replications = 50;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::size_t lambda_denominator = 256;
  // Aggregation estimator. The default scale sits below the spacing of the
  // lambda grid, so the cover is the whole grid.
  EpsilonPolicy epsilon{EpsilonPolicyKind::Fixed, 1e-6};
  bool allow_small_epsilon = true;
  bool timing = false;
  ProgressFn progress;
};

// Truth 1/2 on Unif[-1/2, 1/2]: grid MLE ("grid-mle") against the
// aggregation estimator ("aggregation") over the same lambda-offset grid.
SweepResult mle_gap_experiment(const MleGapSpec& spec);

struct AdaptiveSpec {
  std::string experiment_id = "adaptive";
  std::vector<ClassSpec> candidates;
  std::vector<double> prior;  // empty: (6/pi^2) m^-2
  ConditionalModel truth{ConstantParams{Bernoulli{0.5}}};
  CovariateDistribution covariates = CovariateDistribution::uniform_interval(-1.0, 1.0);
  EstimatorSpec estimator;  // eps and alpha for every candidate
  std::vector<std::size_t> n_grid;
  std::size_t replications = 100;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  LossOptions loss;
  bool timing = false;
  ProgressFn progress;
};

// Thirds drawn as separate parts. Records "adaptive" and one "model-<m>" row per candidate (m from 1) with the
// losses of that candidate's aggregation estimator.
SweepResult adaptive_experiment(const AdaptiveSpec& spec);

}  // namespace cdekit
