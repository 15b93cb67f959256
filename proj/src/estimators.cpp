#include "cdekit/estimators.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "cdekit/error.hpp"

namespace cdekit {

namespace {

double log_add(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

double log_sum_exp(std::span<const double> v) {
  double m = -kInf;
  for (double x : v) m = std::max(m, x);
  if (m == -kInf) return -kInf;
  if (m == kInf) return kInf;
  double s = 0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

Family to_family(const PointDensity& p) {
  return std::visit([](const auto& d) -> Family { return d; }, p);
}

template <class Block>
std::size_t find_block(const std::vector<Block>& blocks, double x0) {
  if (blocks.size() == 1) return 0;
  auto it = std::upper_bound(blocks.begin(), blocks.end(), x0, [](double v, const Block& b) { return v < b.lo; });
  std::size_t i = it == blocks.begin() ? 0 : static_cast<std::size_t>(it - blocks.begin()) - 1;
  if (!blocks[i].contains(x0) && i > 0 && blocks[i - 1].contains(x0)) --i;
  return i;
}

// log T_alpha g (x)(y) from log g(x)(y) and log (nu/K)(y).
double log_smoothed(double ll, double alpha, double log_nu) {
  if (alpha == 0) return ll;
  return log_add(ll, std::log(alpha) + log_nu) - std::log1p(alpha);
}

bool all_bernoulli(const std::vector<MixtureBlock>& blocks) {
  for (const auto& b : blocks)
    for (const auto& m : b.members) {
      if (std::holds_alternative<ThresholdParams>(m.params()) ||
          std::holds_alternative<HolderBumpParams>(m.params()) ||
          std::holds_alternative<AppendixDModelParams>(m.params()))
        continue;
      const auto* c = std::get_if<ConstantParams>(&m.params());
      if (c && std::holds_alternative<Bernoulli>(c->density)) continue;
      return false;
    }
  return true;
}

Covariates block_covariates(const Covariates& x, double lo, double hi, bool closed_right) {
  Covariates out(x.dim);
  for (std::size_t t = 0; t < x.size(); ++t) {
    double v = x[t][0];
    if (v >= lo && (v < hi || (closed_right && v == hi))) out.push_back(x[t]);
  }
  return out;
}

// Cover of each pool block on the covariates that fall in it. Blocks with no
// covariates keep every member.
std::vector<EmpiricalCover> block_covers(const Pool& pool, const Covariates& x, double eps) {
  std::vector<EmpiricalCover> covers;
  for (const auto& b : pool.blocks) {
    Covariates bx = pool.product() ? block_covariates(x, b.lo, b.hi, b.closed_right) : x;
    EmpiricalCover c;
    c.scale = eps;
    if (bx.empty()) {
      c.members.resize(b.members.size());
      std::iota(c.members.begin(), c.members.end(), std::size_t{0});
    } else {
      auto oracle = make_oracle(b.members, EmpiricalMetricSpec{BaseMetric::Hellinger, 2.0, bx});
      c = greedy_pack_cover(*oracle, eps);
    }
    covers.push_back(std::move(c));
  }
  return covers;
}

std::vector<MixtureBlock> cover_blocks(const Pool& pool, const std::vector<EmpiricalCover>& covers) {
  std::vector<MixtureBlock> out;
  for (std::size_t b = 0; b < pool.blocks.size(); ++b) {
    const auto& pb = pool.blocks[b];
    MixtureBlock mb{pb.lo, pb.hi, pb.closed_right, {}, {}};
    for (std::size_t i : covers[b].members) mb.members.push_back(pb.members[i]);
    mb.weights.assign(mb.members.size(), 1.0 / static_cast<double>(mb.members.size()));
    out.push_back(std::move(mb));
  }
  return out;
}

struct PosteriorRun {
  std::vector<std::vector<double>> sum_before;  // sum over rounds 0..n-1 of exp(w_t)
  std::vector<std::vector<double>> final_log_weights;
  std::vector<std::vector<std::vector<double>>> rounds;
  std::vector<double> log_predictive;
};

// Uniform-prior posterior over each block's members, updated only on rounds
// whose covariate falls in the block.
PosteriorRun run_posterior(const std::vector<MixtureBlock>& blocks, const Sample& s, double alpha,
                           const ReferenceMeasure& nu, bool keep_rounds) {
  const std::size_t n = s.size(), nb = blocks.size();
  PosteriorRun run;
  run.sum_before.resize(nb);
  run.final_log_weights.resize(nb);
  std::vector<std::size_t> since(nb, 0);
  for (std::size_t b = 0; b < nb; ++b) {
    const double m = static_cast<double>(blocks[b].members.size());
    run.final_log_weights[b].assign(blocks[b].members.size(), -std::log(m));
    run.sum_before[b].assign(blocks[b].members.size(), 0.0);
  }
  if (keep_rounds) {
    run.rounds.resize(nb);
    for (std::size_t b = 0; b < nb; ++b) run.rounds[b].push_back(run.final_log_weights[b]);
  }
  run.log_predictive.resize(n);
  const auto& ref = nu.normalized();
  std::vector<double> lt;
  for (std::size_t t = 0; t < n; ++t) {
    const auto x = s.x[t];
    const double y = s.y[t];
    const std::size_t b = find_block(blocks, x[0]);
    const double log_nu = alpha > 0 ? ref.log_density(y) : 0.0;
    auto& w = run.final_log_weights[b];
    lt.resize(w.size());
    for (std::size_t g = 0; g < w.size(); ++g)
      lt[g] = w[g] + log_smoothed(blocks[b].members[g].log_likelihood(x, y), alpha, log_nu);
    const double pred = log_sum_exp(lt);
    run.log_predictive[t] = pred;
    const double hold = static_cast<double>(t + 1 - since[b]);
    for (std::size_t g = 0; g < w.size(); ++g) run.sum_before[b][g] += hold * std::exp(w[g]);
    since[b] = t + 1;
    if (pred > -kInf) {
      for (std::size_t g = 0; g < w.size(); ++g) w[g] = lt[g] - pred;
      const double z = log_sum_exp(w);
      for (double& v : w) v -= z;
    }
    if (keep_rounds)
      for (std::size_t c = 0; c < nb; ++c) run.rounds[c].push_back(run.final_log_weights[c]);
  }
  for (std::size_t b = 0; b < nb; ++b) {
    const double hold = static_cast<double>(n - since[b]);
    for (std::size_t g = 0; g < run.sum_before[b].size(); ++g)
      run.sum_before[b][g] += hold * std::exp(run.final_log_weights[b][g]);
  }
  return run;
}

std::vector<double> normalized(std::vector<double> v) {
  double s = std::accumulate(v.begin(), v.end(), 0.0);
  for (double& x : v) x /= s;
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// Predictors

double ReferencePredictor::log_density(std::span<const double>, double y) const {
  return nu_.normalized().log_density(y);
}

std::string ReferencePredictor::describe() const { return fmt::format("uniform({})", nu_.describe()); }

MixturePredictor::MixturePredictor(std::vector<MixtureBlock> blocks, double alpha, ReferenceMeasure nu)
    : blocks_(std::move(blocks)), alpha_(alpha), nu_(std::move(nu)) {
  if (blocks_.empty()) throw ConfigurationError("mixture with no blocks");
  if (!(alpha_ >= 0)) throw DomainError("smoothing level must be nonnegative");
  for (auto& b : blocks_) {
    if (b.members.empty() || b.members.size() != b.weights.size())
      throw ConfigurationError("mixture block needs one weight per member");
    double s = 0;
    for (double w : b.weights) {
      if (!(w >= 0)) throw DomainError("negative mixture weight");
      s += w;
    }
    if (std::abs(s - 1) > 1e-9) throw DomainError(fmt::format("mixture weights sum to {}", s));
    for (double& w : b.weights) w /= s;
  }
  bernoulli_ = all_bernoulli(blocks_);
}

const MixtureBlock& MixturePredictor::block_at(double x0) const { return blocks_[find_block(blocks_, x0)]; }

ResponseDensity MixturePredictor::predict(std::span<const double> x) const {
  const auto& b = block_at(x[0]);
  const double scale = 1.0 / (1.0 + alpha_);
  if (bernoulli_) {
    double p = 0;
    for (std::size_t g = 0; g < b.members.size(); ++g)
      if (b.weights[g] > 0) p += b.weights[g] * std::get<Bernoulli>(b.members[g].evaluate(x)).p;
    return Bernoulli{std::clamp((p + alpha_ * nu_.normalized().density(1.0)) * scale, 0.0, 1.0)};
  }
  std::vector<Component> parts;
  for (std::size_t g = 0; g < b.members.size(); ++g)
    if (b.weights[g] > 0) parts.push_back({b.weights[g] * scale, to_family(b.members[g].evaluate(x))});
  if (alpha_ > 0)
    for (const auto& c : nu_.normalized().components()) parts.push_back({c.weight * alpha_ * scale, c.family});
  return ResponseDensity::mixture(std::move(parts));
}

double MixturePredictor::log_density(std::span<const double> x, double y) const {
  const auto& b = block_at(x[0]);
  double acc = -kInf;
  for (std::size_t g = 0; g < b.members.size(); ++g)
    if (b.weights[g] > 0) acc = log_add(acc, std::log(b.weights[g]) + b.members[g].log_likelihood(x, y));
  return log_smoothed(acc, alpha_, alpha_ > 0 ? nu_.normalized().log_density(y) : 0.0);
}

std::vector<double> MixturePredictor::breakpoints() const {
  std::vector<double> out;
  for (const auto& b : blocks_) {
    if (std::isfinite(b.lo)) out.push_back(b.lo);
    for (std::size_t g = 0; g < b.members.size(); ++g) {
      if (b.weights[g] == 0) continue;
      for (double v : b.members[g].breakpoints())
        if (std::isfinite(v) && b.contains(v)) out.push_back(v);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool MixturePredictor::piecewise_constant() const {
  for (const auto& b : blocks_)
    for (std::size_t g = 0; g < b.members.size(); ++g)
      if (b.weights[g] > 0 && !b.members[g].piecewise_constant()) return false;
  return true;
}

std::string MixturePredictor::describe() const {
  std::size_t m = 0;
  for (const auto& b : blocks_) m += b.members.size();
  return fmt::format("mixture of {} members in {} blocks, alpha = {}", m, blocks_.size(), alpha_);
}

CompositePredictor::CompositePredictor(std::vector<std::shared_ptr<const Predictor>> parts, std::vector<double> weights)
    : parts_(std::move(parts)), weights_(std::move(weights)) {
  if (parts_.empty() || parts_.size() != weights_.size())
    throw ConfigurationError("composite predictor needs one weight per part");
  double s = 0;
  for (double w : weights_) {
    if (!(w >= 0)) throw DomainError("negative composite weight");
    s += w;
  }
  if (std::abs(s - 1) > 1e-9) throw DomainError(fmt::format("composite weights sum to {}", s));
  for (double& w : weights_) w /= s;
}

ResponseDensity CompositePredictor::predict(std::span<const double> x) const {
  std::vector<Component> comps;
  bool bernoulli = true;
  double p = 0;
  std::vector<ResponseDensity> preds;
  for (std::size_t k = 0; k < parts_.size(); ++k) {
    if (weights_[k] == 0) continue;
    auto d = parts_[k]->predict(x);
    if (!d.is_mixture() && std::holds_alternative<Bernoulli>(d.family()))
      p += weights_[k] * std::get<Bernoulli>(d.family()).p;
    else
      bernoulli = false;
    for (const auto& c : d.components()) comps.push_back({c.weight * weights_[k], c.family});
  }
  if (bernoulli) return Bernoulli{std::clamp(p, 0.0, 1.0)};
  return ResponseDensity::mixture(std::move(comps));
}

double CompositePredictor::log_density(std::span<const double> x, double y) const {
  double acc = -kInf;
  for (std::size_t k = 0; k < parts_.size(); ++k)
    if (weights_[k] > 0) acc = log_add(acc, std::log(weights_[k]) + parts_[k]->log_density(x, y));
  return acc;
}

std::vector<double> CompositePredictor::breakpoints() const {
  std::vector<double> out;
  for (std::size_t k = 0; k < parts_.size(); ++k) {
    if (weights_[k] == 0) continue;
    auto b = parts_[k]->breakpoints();
    out.insert(out.end(), b.begin(), b.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool CompositePredictor::piecewise_constant() const {
  for (std::size_t k = 0; k < parts_.size(); ++k)
    if (weights_[k] > 0 && !parts_[k]->piecewise_constant()) return false;
  return true;
}

std::string CompositePredictor::describe() const {
  return fmt::format("composite of {} predictors", parts_.size());
}

std::shared_ptr<const MixturePredictor> smoothed_model(const ConditionalModel& f, double alpha,
                                                       const ReferenceMeasure& nu) {
  return std::make_shared<MixturePredictor>(std::vector<MixtureBlock>{MixtureBlock{-kInf, kInf, true, {f}, {1.0}}},
                                            alpha, nu);
}

// ---------------------------------------------------------------------------
// Minimax estimator

std::size_t FittedEstimator::cover_size() const {
  std::size_t s = 0;
  for (const auto& b : blocks) s += b.cover.members.size();
  return s;
}

FittedEstimator fit_minimax(const Pool& pool, const Covariates& cover_x, const Sample& aggregation, double eps,
                            const MinimaxOptions& opt) {
  if (pool.blocks.empty() || pool.total_members() == 0) throw ConfigurationError("empty pool");
  for (const auto& b : pool.blocks)
    if (b.members.empty()) throw ConfigurationError("pool block without members");
  if (!(eps > 0)) throw DomainError("cover scale must be positive");
  const std::size_t n = aggregation.size();
  if (!opt.allow_small_epsilon && n > 0 && !(eps > 1.0 / std::sqrt(static_cast<double>(n))))
    throw PreconditionError(fmt::format("eps = {} does not exceed 1/sqrt(n) = {} (n = {})", eps,
                                        1.0 / std::sqrt(static_cast<double>(n)), n));
  const double alpha = opt.alpha > 0 ? opt.alpha : 1.0 / static_cast<double>(std::max<std::size_t>(n, 1));
  const ReferenceMeasure nu = pool.spec.reference();

  auto covers = block_covers(pool, cover_x, eps);
  auto blocks = cover_blocks(pool, covers);
  auto run = run_posterior(blocks, aggregation, alpha, nu, opt.keep_rounds);

  FittedEstimator est;
  est.epsilon = eps;
  est.alpha = alpha;
  est.n = n;
  est.scheme = pool.scheme;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    BlockFit fit;
    fit.cover = std::move(covers[b]);
    fit.final_log_weights = run.final_log_weights[b];
    fit.cesaro.resize(fit.final_log_weights.size());
    for (std::size_t g = 0; g < fit.cesaro.size(); ++g)
      fit.cesaro[g] = (run.sum_before[b][g] + std::exp(fit.final_log_weights[g])) / static_cast<double>(n + 1);
    fit.cesaro = normalized(std::move(fit.cesaro));
    if (opt.keep_rounds) fit.round_log_weights = std::move(run.rounds[b]);
    blocks[b].weights = fit.cesaro;
    est.blocks.push_back(std::move(fit));
  }
  for (double v : run.log_predictive) est.sequential_log_likelihood += v;
  est.predictor = std::make_shared<MixturePredictor>(std::move(blocks), alpha, nu);
  return est;
}

FittedEstimator fit_minimax(const Pool& pool, const Sample& sample, double eps, const MinimaxOptions& opt) {
  const std::size_t half = sample.size() / 2;
  return fit_minimax(pool, sample.x.slice(0, half), sample.slice(half, sample.size()), eps, opt);
}

ResponseDensity predict(const FittedEstimator& est, std::span<const double> x) { return est.predict(x); }

// ---------------------------------------------------------------------------
// Maximum likelihood

namespace {

// Argmax over `members` (restricted to `subset` when nonempty) of the
// likelihood of the sample rows in `rows`.
std::size_t argmax_likelihood(const std::vector<ConditionalModel>& members, const std::vector<std::size_t>& subset,
                              const Sample& s, const std::vector<std::size_t>& rows, double& best_ll) {
  const std::size_t count = subset.empty() ? members.size() : subset.size();
  std::size_t best = 0;
  best_ll = -kInf;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t i = subset.empty() ? k : subset[k];
    double ll = 0;
    for (std::size_t t : rows) {
      ll += members[i].log_likelihood(s.x[t], s.y[t]);
      if (ll == -kInf) break;
    }
    if (k == 0 || ll > best_ll) {
      best = i;
      best_ll = ll;
    }
  }
  if (!rows.empty() && best_ll == -kInf) throw DegenerateFitError("every candidate has likelihood zero");
  return best;
}

std::vector<std::vector<std::size_t>> rows_by_block(const Pool& pool, const Sample& s) {
  std::vector<std::vector<std::size_t>> rows(pool.blocks.size());
  for (std::size_t t = 0; t < s.size(); ++t) rows[pool.product() ? pool.block_of(s.x[t][0]) : 0].push_back(t);
  return rows;
}

MleFit blockwise_mle(const Pool& pool, const Sample& s, double alpha,
                     const std::vector<std::vector<std::size_t>>& subsets) {
  if (pool.blocks.empty() || pool.total_members() == 0) throw ConfigurationError("empty pool");
  auto rows = rows_by_block(pool, s);
  MleFit fit;
  fit.alpha = alpha;
  std::vector<MixtureBlock> blocks;
  for (std::size_t b = 0; b < pool.blocks.size(); ++b) {
    const auto& pb = pool.blocks[b];
    double ll = 0;
    std::size_t i = argmax_likelihood(pb.members, subsets.empty() ? std::vector<std::size_t>{} : subsets[b], s,
                                      rows[b], ll);
    fit.index.push_back(i);
    fit.log_likelihood += ll;
    blocks.push_back(MixtureBlock{pb.lo, pb.hi, pb.closed_right, {pb.members[i]}, {1.0}});
  }
  fit.predictor = std::make_shared<MixturePredictor>(std::move(blocks), alpha, pool.spec.reference());
  return fit;
}

}  // namespace

std::size_t mle_index(const std::vector<ConditionalModel>& pool, const Sample& sample) {
  if (pool.empty()) throw ConfigurationError("empty pool");
  std::vector<std::size_t> rows(sample.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  double ll = 0;
  return argmax_likelihood(pool, {}, sample, rows, ll);
}

ConditionalModel fit_mle(const std::vector<ConditionalModel>& pool, const Sample& sample) {
  return pool[mle_index(pool, sample)];
}

MleFit fit_mle(const Pool& pool, const Sample& sample, double alpha) { return blockwise_mle(pool, sample, alpha, {}); }

MleFit fit_smoothed_mle(const Pool& pool, const Sample& sample, double alpha) {
  if (alpha <= 0) alpha = 1.0 / static_cast<double>(std::max<std::size_t>(sample.size(), 1));
  return blockwise_mle(pool, sample, alpha, {});
}

MleFit fit_sieve_mle(const Pool& pool, const Sample& sample, double eps, double alpha) {
  if (!(eps > 0)) throw DomainError("sieve scale must be positive");
  auto covers = block_covers(pool, sample.x, eps);
  std::vector<std::vector<std::size_t>> subsets;
  for (auto& c : covers) subsets.push_back(std::move(c.members));
  return blockwise_mle(pool, sample, alpha, subsets);
}

AppendixMleFit fit_appendix_d_mle(const ClassSpec& spec, const Sample& sample) {
  const double gamma = spec.appendix_gamma;
  const auto den = spec.lambda_denominator;
  const std::size_t n = sample.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sample.x[a][0] < sample.x[b][0]; });
  std::vector<double> xs(n), ys(n), fx(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = sample.x[order[i]][0];
    ys[i] = sample.y[order[i]];
    fx[i] = appendix_d::f(xs[i]);
  }
  auto bern_ll = [](double y, double p) { return y > 0.5 ? std::log(p) : std::log1p(-p); };

  AppendixMleFit best{ConditionalModel(ConstantParams{Bernoulli{0.5}}), 0.0, -kInf, 0};
  appendix_d::Component best_comp;
  std::vector<double> base(n);
  for (std::size_t k = 0; 4 * k <= den; ++k) {
    const double lambda = static_cast<double>(k) / static_cast<double>(den);
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      base[i] = bern_ll(ys[i], 0.5 + 0.5 * lambda * fx[i]);
      total += base[i];
    }
    appendix_d::Component comp{1.0, lambda, {}, {}};
    if (k > 0) {
      const double eta = appendix_d::eta_from_lambda(gamma, lambda);
      const double amp = lambda * lambda;
      for (std::size_t i : appendix_d::separated_subset(xs, eta)) {
        const double z = xs[i] - eta / 2;
        auto lo = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), z - eta) - xs.begin());
        double gain_plus = 0, gain_minus = 0;
        for (std::size_t t = lo; t < n && xs[t] < z + eta; ++t) {
          const double w = appendix_d::omega(eta, z - xs[t]);
          if (w == 0) continue;
          const double m = 0.5 + 0.5 * lambda * fx[t];
          gain_plus += bern_ll(ys[t], m + amp * w) - base[t];
          gain_minus += bern_ll(ys[t], m - amp * w) - base[t];
        }
        if (std::max(gain_plus, gain_minus) > 0) {
          comp.centers.push_back(z);
          comp.signs.push_back(gain_plus >= gain_minus ? 1 : -1);
          total += std::max(gain_plus, gain_minus);
        }
      }
    }
    if (total > best.log_likelihood) {
      best.log_likelihood = total;
      best.lambda = lambda;
      best.bumps = comp.centers.size();
      best_comp = std::move(comp);
    }
  }
  appendix_d::Params p;
  p.gamma = gamma;
  p.components.push_back(std::move(best_comp));
  appendix_d::validate(p);
  best.model = ConditionalModel(AppendixDModelParams{std::move(p)});
  return best;
}

// ---------------------------------------------------------------------------
// Epoch-sequential predictor

double SequentialResult::regret(const ConditionalModel& comparator, const Sample& stream) const {
  double r = 0;
  for (std::size_t t = 0; t < log_predictive.size(); ++t)
    r += comparator.log_likelihood(stream.x[t], stream.y[t]) - log_predictive[t];
  return r;
}

SequentialResult sequential_predict(const Sample& stream, const ReferenceMeasure& nu, const PoolSupplier& pools,
                                    const SequentialOptions& opt) {
  const std::size_t n = stream.size();
  SequentialResult res;
  res.log_predictive.resize(n);
  std::vector<std::shared_ptr<const Predictor>> parts;
  std::vector<double> part_weights;
  if (n == 0) {
    res.cesaro = std::make_shared<CompositePredictor>(
        std::vector<std::shared_ptr<const Predictor>>{std::make_shared<ReferencePredictor>(nu)},
        std::vector<double>{1.0});
    return res;
  }
  const double dn = static_cast<double>(n);
  res.epoch_start.push_back(0);
  res.cover_sizes.push_back(0);
  res.log_predictive[0] = nu.normalized().log_density(stream.y[0]);
  parts.push_back(std::make_shared<ReferencePredictor>(nu));
  part_weights.push_back(1.0 / dn);

  for (std::size_t start = 1, prev = 0; start < n; prev = start, start = 2 * start + 1) {
    const std::size_t end = std::min(2 * start + 1, n);
    const std::size_t prev_size = start - prev;
    const Covariates cover_x = stream.x.slice(prev, start);
    const double eps = opt.epsilon(cover_x);
    const double alpha = opt.alpha ? opt.alpha(cover_x) : 1.0 / static_cast<double>(prev_size);
    Pool pool = pools(cover_x, eps);
    auto covers = block_covers(pool, cover_x, eps);
    auto blocks = cover_blocks(pool, covers);
    auto run = run_posterior(blocks, stream.slice(start, end), alpha, pool.spec.reference(), false);
    std::size_t size = 0;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      blocks[b].weights = normalized(run.sum_before[b]);
      size += blocks[b].members.size();
    }
    for (std::size_t t = start; t < end; ++t) res.log_predictive[t] = run.log_predictive[t - start];
    res.epoch_start.push_back(start);
    res.cover_sizes.push_back(size);
    parts.push_back(std::make_shared<MixturePredictor>(std::move(blocks), alpha, pool.spec.reference()));
    part_weights.push_back(static_cast<double>(end - start) / dn);
  }
  for (double v : res.log_predictive) res.cumulative_log_loss -= v;
  res.cesaro = std::make_shared<CompositePredictor>(std::move(parts), std::move(part_weights));
  return res;
}

// ---------------------------------------------------------------------------
// Model-adaptive estimator

double basel_prior(std::size_t m) {
  if (m == 0) throw DomainError("model index starts at 1");
  const double dm = static_cast<double>(m);
  return 6.0 / (std::numbers::pi * std::numbers::pi * dm * dm);
}

AdaptiveEstimator fit_adaptive(const std::vector<AdaptiveCandidate>& candidates, const Sample& sample,
                               const AdaptiveOptions& opt) {
  if (candidates.empty()) throw ConfigurationError("no candidate models");
  double mass = 0;
  for (const auto& c : candidates) {
    if (!(c.prior > 0)) throw ConfigurationError(fmt::format("candidate '{}' has zero prior mass", c.name));
    mass += c.prior;
  }
  if (mass > 1 + 1e-9) throw ConfigurationError(fmt::format("prior masses sum to {} > 1", mass));

  const std::size_t n = sample.size(), third = n / 3;
  const Covariates x1 = sample.x.slice(0, third);
  const Sample s2 = sample.slice(third, 2 * third), s3 = sample.slice(2 * third, n);

  AdaptiveEstimator est;
  std::vector<std::shared_ptr<const Predictor>> parts;
  for (const auto& c : candidates) {
    MinimaxOptions mo;
    mo.alpha = opt.alpha;
    mo.allow_small_epsilon = opt.allow_small_epsilon;
    const double eps = c.epsilon(x1);
    est.models.push_back(fit_minimax(c.pool(x1, eps), x1, s2, eps, mo));
    est.prior.push_back(c.prior / mass);
    parts.push_back(est.models.back().predictor);
  }

  const std::size_t m = candidates.size(), n3 = s3.size();
  std::vector<double> logv(m), sum(m, 0.0), lt(m);
  for (std::size_t k = 0; k < m; ++k) logv[k] = std::log(est.prior[k]);
  for (std::size_t t = 0; t < n3; ++t) {
    for (std::size_t k = 0; k < m; ++k) {
      sum[k] += std::exp(logv[k]);
      lt[k] = logv[k] + parts[k]->log_density(s3.x[t], s3.y[t]);
    }
    const double z = log_sum_exp(lt);
    if (z > -kInf)
      for (std::size_t k = 0; k < m; ++k) logv[k] = lt[k] - z;
  }
  for (std::size_t k = 0; k < m; ++k) sum[k] += std::exp(logv[k]);
  est.outer_cesaro = normalized(sum);
  est.outer_final_log_weights = logv;
  est.predictor = std::make_shared<CompositePredictor>(std::move(parts), est.outer_cesaro);
  return est;
}

// ---------------------------------------------------------------------------
// Rates and policies

std::string rate_regime_name(RateRegime r) {
  switch (r) {
    case RateRegime::UpperNonparametric: return "upper-nonparametric";
    case RateRegime::UpperParametric: return "upper-parametric";
    case RateRegime::LowerNonparametric: return "lower-nonparametric";
    case RateRegime::LowerParametric: return "lower-parametric";
    case RateRegime::MleNonparametric: return "mle-nonparametric";
    case RateRegime::MleParametric: return "mle-parametric";
  }
  return "?";
}

RateRegime parse_rate_regime(const std::string& name) {
  for (auto r : {RateRegime::UpperNonparametric, RateRegime::UpperParametric, RateRegime::LowerNonparametric,
                 RateRegime::LowerParametric, RateRegime::MleNonparametric, RateRegime::MleParametric})
    if (rate_regime_name(r) == name) return r;
  throw ConfigurationError(fmt::format("unknown rate regime '{}'", name));
}

double theoretical_rate(RateRegime regime, const RateParams& q, double n) {
  if (!(n > 1)) throw DomainError("rates need n > 1");
  if (!(q.p > 0) || !(q.c > 0) || !(q.b > 0) || !(q.k > 0)) throw DomainError("rate parameters must be positive");
  const double lnbk = std::log(n * q.b * q.k);
  if (!(lnbk > 0)) throw DomainError("log(nBK) must be positive");
  const double p = q.p, e = 2.0 / (p + 2);
  switch (regime) {
    case RateRegime::UpperNonparametric:
      return std::pow(q.c, e) * std::pow(lnbk, p / (p + 2)) * std::pow(n, -e);
    case RateRegime::UpperParametric: {
      if (!(n * q.c * q.c > p)) throw DomainError("the parametric bound needs n C^2 > p");
      const double rc = q.c * std::sqrt(n);
      return p / n * (std::log(rc) + lnbk * std::log(rc / std::sqrt(p))) + lnbk * std::log(n) / n;
    }
    case RateRegime::LowerNonparametric:
      return std::pow(q.c, e) * std::pow(lnbk, -e) * std::pow(n, -e);
    case RateRegime::LowerParametric:
      return p / n / lnbk;
    case RateRegime::MleNonparametric:
      return lnbk * (p > 2 ? std::pow(n, -1.0 / p) : std::pow(n, -2.0 / (2 + p)));
    case RateRegime::MleParametric:
      return lnbk * p * std::log(n) / n;
  }
  throw ConfigurationError("unknown rate regime");
}

std::string epsilon_policy_name(EpsilonPolicyKind k) {
  switch (k) {
    case EpsilonPolicyKind::Default: return "default";
    case EpsilonPolicyKind::Parametric: return "parametric";
    case EpsilonPolicyKind::Nonparametric: return "nonparametric";
    case EpsilonPolicyKind::Fixed: return "fixed";
  }
  return "?";
}

EpsilonPolicyKind parse_epsilon_policy(const std::string& name) {
  for (auto k : {EpsilonPolicyKind::Default, EpsilonPolicyKind::Parametric, EpsilonPolicyKind::Nonparametric,
                 EpsilonPolicyKind::Fixed})
    if (epsilon_policy_name(k) == name) return k;
  throw ConfigurationError(fmt::format("unknown epsilon policy '{}'", name));
}

double choose_epsilon(const EpsilonPolicy& policy, std::size_t n, double b, double k,
                      const std::function<double()>& critical) {
  const double floor = (1 + 1e-6) / std::sqrt(static_cast<double>(std::max<std::size_t>(n, 1)));
  switch (policy.kind) {
    case EpsilonPolicyKind::Fixed:
      if (!(policy.value > 0)) throw DomainError("fixed epsilon must be positive");
      return policy.value;
    case EpsilonPolicyKind::Nonparametric: {
      const double dn = static_cast<double>(n);
      const double lnbk = std::log(dn * b * k);
      if (!(lnbk > 0)) throw DomainError("log(nBK) must be positive");
      // Kept above 1/sqrt(n) like the default.
      return std::max(floor, std::pow(policy.c / (dn * lnbk), 1.0 / (policy.p + 2)));
    }
    case EpsilonPolicyKind::Default:
      return std::max(floor, critical());
    case EpsilonPolicyKind::Parametric:
      return floor;
  }
  throw ConfigurationError("unknown epsilon policy");
}

}  // namespace cdekit
