#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cdekit/entropy.hpp"
#include "cdekit/models.hpp"

namespace cdekit {

// A fitted map x -> response density.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual ResponseDensity predict(std::span<const double> x) const = 0;
  virtual double log_density(std::span<const double> x, double y) const = 0;
  // Kinks in the first covariate coordinate.
  virtual std::vector<double> breakpoints() const { return {}; }
  // True when the prediction is constant between breakpoints.
  virtual bool piecewise_constant() const { return false; }
  virtual std::string describe() const = 0;
};

// The uniform density nu/K at every covariate.
class ReferencePredictor final : public Predictor {
 public:
  explicit ReferencePredictor(ReferenceMeasure nu) : nu_(std::move(nu)) {}
  ResponseDensity predict(std::span<const double>) const override { return nu_.normalized(); }
  double log_density(std::span<const double>, double y) const override;
  bool piecewise_constant() const override { return true; }
  std::string describe() const override;

 private:
  ReferenceMeasure nu_;
};

struct MixtureBlock {
  double lo = -kInf;
  double hi = kInf;
  bool closed_right = true;
  std::vector<ConditionalModel> members;
  std::vector<double> weights;  // on the simplex

  bool contains(double x0) const { return x0 >= lo && (x0 < hi || (closed_right && x0 == hi)); }
};

// On the block containing x: sum_g W(g) T_alpha g(x) = (sum_g W(g) g(x) + alpha nu/K) / (1 + alpha).
class MixturePredictor final : public Predictor {
 public:
  MixturePredictor(std::vector<MixtureBlock> blocks, double alpha, ReferenceMeasure nu);

  ResponseDensity predict(std::span<const double> x) const override;
  double log_density(std::span<const double> x, double y) const override;
  std::vector<double> breakpoints() const override;
  bool piecewise_constant() const override;
  std::string describe() const override;

  const std::vector<MixtureBlock>& blocks() const { return blocks_; }
  const MixtureBlock& block_at(double x0) const;
  double alpha() const { return alpha_; }
  const ReferenceMeasure& reference() const { return nu_; }

 private:
  std::vector<MixtureBlock> blocks_;
  double alpha_;
  ReferenceMeasure nu_;
  bool bernoulli_ = false;
};

// sum_k c_k p_k(x), with c on the simplex.
class CompositePredictor final : public Predictor {
 public:
  CompositePredictor(std::vector<std::shared_ptr<const Predictor>> parts, std::vector<double> weights);

  ResponseDensity predict(std::span<const double> x) const override;
  double log_density(std::span<const double> x, double y) const override;
  std::vector<double> breakpoints() const override;
  bool piecewise_constant() const override;
  std::string describe() const override;

  const std::vector<std::shared_ptr<const Predictor>>& parts() const { return parts_; }
  const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<std::shared_ptr<const Predictor>> parts_;
  std::vector<double> weights_;
};

// Single-member mixture: T_alpha f.
std::shared_ptr<const MixturePredictor> smoothed_model(const ConditionalModel& f, double alpha,
                                                       const ReferenceMeasure& nu);

// ---------------------------------------------------------------------------
// Minimax estimator

struct MinimaxOptions {
  double alpha = 0.0;  // <= 0 selects 1/n
  bool allow_small_epsilon = false;  // skip the eps > 1/sqrt(n) check
  bool keep_rounds = false;          // store w_t for every round
};

struct BlockFit {
  EmpiricalCover cover;  // indices into the pool block
  // w_t(g) for t = 0..n in log space; empty unless requested.
  std::vector<std::vector<double>> round_log_weights;
  std::vector<double> final_log_weights;  // w_n
  std::vector<double> cesaro;             // W(g) = (1/(n+1)) sum_t exp(w_t(g))
};

struct FittedEstimator {
  double epsilon = 0.0;
  double alpha = 0.0;
  std::size_t n = 0;  // aggregation rounds
  std::string scheme;
  std::vector<BlockFit> blocks;
  // sum_t log fhat_{t-1}(x_t)(y_t) over the aggregation rounds.
  double sequential_log_likelihood = 0.0;
  std::shared_ptr<const MixturePredictor> predictor;

  ResponseDensity predict(std::span<const double> x) const { return predictor->predict(x); }
  std::size_t cover_size() const;
};

// Cover of the pool on `cover_x` at scale eps, then the smoothed posterior
// mixture run on `aggregation` and averaged over rounds 0..n.
FittedEstimator fit_minimax(const Pool& pool, const Covariates& cover_x, const Sample& aggregation, double eps,
                            const MinimaxOptions& opt = {});
// Splits a sample of size 2n into halves: covariates of the first build the cover.
FittedEstimator fit_minimax(const Pool& pool, const Sample& sample, double eps, const MinimaxOptions& opt = {});

ResponseDensity predict(const FittedEstimator& est, std::span<const double> x);

// ---------------------------------------------------------------------------
// Maximum likelihood

// Argmax of sum_t log f(x_t)(y_t), lowest index on ties. Throws
// DegenerateFitError when every member has likelihood zero.
std::size_t mle_index(const std::vector<ConditionalModel>& pool, const Sample& sample);
ConditionalModel fit_mle(const std::vector<ConditionalModel>& pool, const Sample& sample);

struct MleFit {
  std::vector<std::size_t> index;  // chosen member per pool block
  double log_likelihood = 0.0;
  double alpha = 0.0;
  std::shared_ptr<const MixturePredictor> predictor;  // one-hot weights, smoothed by alpha
};

// Blockwise MLE over a pool; alpha = 0 gives the raw MLE.
MleFit fit_mle(const Pool& pool, const Sample& sample, double alpha = 0.0);
// alpha <= 0 selects 1/n.
MleFit fit_smoothed_mle(const Pool& pool, const Sample& sample, double alpha = 0.0);
// MLE over a greedy eps-cover of the pool built on the sample covariates.
MleFit fit_sieve_mle(const Pool& pool, const Sample& sample, double eps, double alpha = 0.0);

struct AppendixMleFit {
  ConditionalModel model;
  double lambda = 0.0;
  double log_likelihood = 0.0;
  std::size_t bumps = 0;
};

// Grid MLE over single-component members of the bump class: for each lambda
// on the grid, bumps sit on a greedy separated subset of the sample and each
// bump's sign (or its absence) maximizes the likelihood of the points it touches.
AppendixMleFit fit_appendix_d_mle(const ClassSpec& spec, const Sample& sample);

// ---------------------------------------------------------------------------
// Epoch-sequential predictor

// Rules see the covariates the next cover is built from.
using EpochRule = std::function<double(const Covariates& cover_x)>;
using PoolSupplier = std::function<Pool(const Covariates& cover_x, double eps)>;

struct SequentialOptions {
  EpochRule epsilon;
  EpochRule alpha;  // empty: 1/size
};

struct SequentialResult {
  std::vector<double> log_predictive;   // log fhat_{t-1}(x_t)(y_t), one per round
  std::vector<std::size_t> epoch_start;  // first round (0-based) of each epoch
  std::vector<std::size_t> cover_sizes;  // per epoch; 0 for the first
  double cumulative_log_loss = 0.0;
  // (1/n) sum_t fhat_{t-1}
  std::shared_ptr<const CompositePredictor> cesaro;

  // sum_t log(f(x_t)(y_t) / fhat_{t-1}(x_t)(y_t)).
  double regret(const ConditionalModel& comparator, const Sample& stream) const;
};

// Epoch m covers rounds 2^(m-1)..2^m - 1 (1-based, last epoch clipped at n);
// its mixture runs over a cover built from epoch m-1 covariates. The first
// round predicts nu/K.
SequentialResult sequential_predict(const Sample& stream, const ReferenceMeasure& nu, const PoolSupplier& pools,
                                    const SequentialOptions& opt);

// ---------------------------------------------------------------------------
// Model-adaptive estimator

struct AdaptiveCandidate {
  std::string name;
  PoolSupplier pool;
  EpochRule epsilon;  // evaluated on the first third
  double prior = 0.0;
};

struct AdaptiveOptions {
  double alpha = 0.0;  // <= 0 selects 1/n for a third of size n
  bool allow_small_epsilon = false;
};

struct AdaptiveEstimator {
  std::vector<FittedEstimator> models;
  std::vector<double> prior;  // renormalized over supplied candidates
  std::vector<double> outer_cesaro;
  std::vector<double> outer_final_log_weights;
  std::shared_ptr<const CompositePredictor> predictor;
};

// Covers from the first third, per-model aggregation on the second, and a
// prior-weighted model posterior with Cesaro averaging on the last.
AdaptiveEstimator fit_adaptive(const std::vector<AdaptiveCandidate>& candidates, const Sample& sample,
                               const AdaptiveOptions& opt = {});

// (6/pi^2) m^-2, m = 1, 2, ...
double basel_prior(std::size_t m);

// ---------------------------------------------------------------------------
// Closed-form rates and parameter policies

enum class RateRegime {
  UpperNonparametric,
  UpperParametric,
  LowerNonparametric,
  LowerParametric,
  MleNonparametric,
  MleParametric
};

struct RateParams {
  double p = 1.0;
  double c = 1.0;
  double b = 1.0;  // density bound B
  double k = 1.0;  // reference mass K
};

std::string rate_regime_name(RateRegime r);
RateRegime parse_rate_regime(const std::string& name);
double theoretical_rate(RateRegime regime, const RateParams& params, double n);

enum class EpsilonPolicyKind { Default, Parametric, Nonparametric, Fixed };

struct EpsilonPolicy {
  EpsilonPolicyKind kind = EpsilonPolicyKind::Default;
  double value = 0.0;  // Fixed
  double p = 1.0;      // Nonparametric
  double c = 1.0;      // Nonparametric
};

std::string epsilon_policy_name(EpsilonPolicyKind k);
EpsilonPolicyKind parse_epsilon_policy(const std::string& name);

// Default: max(1/sqrt(n) (1 + 1e-6), critical radius); Parametric: 1/sqrt(n) (1 + 1e-6); Nonparametric:
// (C / (n log(nBK)))^(1/(p+2)); Fixed: the value.
// `critical` is only called by the default policy.
double choose_epsilon(const EpsilonPolicy& policy, std::size_t n, double b, double k,
                      const std::function<double()>& critical);

}  // namespace cdekit
