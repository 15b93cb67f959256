#include "cdekit/entropy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>

#include <fmt/format.h>

#include "cdekit/error.hpp"
#include "cdekit/parallel.hpp"

namespace cdekit {

namespace {

constexpr std::size_t kTableLimit = std::size_t{1} << 22;

double combine(double acc, std::size_t n, double q) {
  if (n == 0) return 0.0;
  if (std::isinf(q)) return acc;
  return std::pow(acc / static_cast<double>(n), 1.0 / q);
}

void accumulate(double& acc, double d, double q) {
  if (std::isinf(q))
    acc = std::max(acc, d);
  else if (q == 2.0)
    acc += d * d;
  else
    acc += std::pow(d, q);
}

double bern_distance(BaseMetric metric, double a, double b) {
  return pointwise_distance(metric, Bernoulli{a}, Bernoulli{b});
}

void check_limit(std::size_t m) {
  if (m > kBruteForceLimit)
    throw CapacityError(fmt::format("exhaustive search over {} members exceeds the limit of {}", m, kBruteForceLimit));
}

using Mask = std::uint32_t;

// Maximum clique by branch and bound on bitmask adjacency.
void max_clique(const std::vector<Mask>& adj, Mask current, Mask candidates, Mask& best) {
  if (candidates == 0) {
    if (std::popcount(current) > std::popcount(best)) best = current;
    return;
  }
  if (std::popcount(current) + std::popcount(candidates) <= std::popcount(best)) return;
  int v = std::countr_zero(candidates);
  Mask bit = Mask{1} << v;
  max_clique(adj, current | bit, candidates & adj[static_cast<std::size_t>(v)], best);
  max_clique(adj, current, candidates & ~bit, best);
}

std::vector<std::size_t> mask_indices(Mask m, const std::vector<std::size_t>& map) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < map.size(); ++i)
    if (m & (Mask{1} << i)) out.push_back(map[i]);
  return out;
}

}  // namespace

double pointwise_distance(BaseMetric metric, const PointDensity& a, const PointDensity& b) {
  switch (metric) {
    case BaseMetric::Hellinger:
      return std::sqrt(std::max(0.0, point_hellinger_sq(a, b)));
    case BaseMetric::KlRoot:
      return std::sqrt(std::max(0.0, point_kl(a, b)));
    case BaseMetric::L1:
      return point_l1(a, b);
  }
  return 0.0;
}

double empirical_distance(const ConditionalModel& f, const ConditionalModel& g, const EmpiricalMetricSpec& spec) {
  double acc = 0;
  const std::size_t n = spec.x.size();
  for (std::size_t t = 0; t < n; ++t)
    accumulate(acc, pointwise_distance(spec.metric, f.evaluate(spec.x[t]), g.evaluate(spec.x[t])), spec.q);
  return combine(acc, n, spec.q);
}

// ---- oracles ---------------------------------------------------------------------

MatrixOracle::MatrixOracle(std::vector<double> d, std::size_t m) : d_(std::move(d)), m_(m) {
  if (d_.size() != m * m) throw ConfigurationError("distance matrix is not square");
}

PointwiseOracle::PointwiseOracle(const std::vector<ConditionalModel>& members, EmpiricalMetricSpec spec)
    : members_(members), spec_(std::move(spec)) {
  const std::size_t n = spec_.x.size();
  if (members_.size() * n <= kTableLimit) {
    table_.reserve(members_.size() * n);
    for (const auto& m : members_)
      for (std::size_t t = 0; t < n; ++t) table_.push_back(m.evaluate(spec_.x[t]));
  }
}

double PointwiseOracle::distance(std::size_t i, std::size_t j) const {
  if (i == j) return 0.0;
  const std::size_t n = spec_.x.size();
  double acc = 0;
  if (!table_.empty()) {
    const PointDensity* a = table_.data() + i * n;
    const PointDensity* b = table_.data() + j * n;
    if (spec_.metric == BaseMetric::Hellinger && spec_.q == 2.0) {
      for (std::size_t t = 0; t < n; ++t) acc += point_hellinger_sq(a[t], b[t]);
      return std::sqrt(std::max(0.0, acc / static_cast<double>(n)));
    }
    for (std::size_t t = 0; t < n; ++t) accumulate(acc, pointwise_distance(spec_.metric, a[t], b[t]), spec_.q);
    return combine(acc, n, spec_.q);
  }
  return empirical_distance(members_[i], members_[j], spec_);
}

ThresholdOracle::ThresholdOracle(const std::vector<ConditionalModel>& members, const EmpiricalMetricSpec& spec)
    : metric_(spec.metric), q_(spec.q), n_(static_cast<double>(spec.x.size())) {
  std::vector<double> xs;
  for (std::size_t t = 0; t < spec.x.size(); ++t) xs.push_back(spec.x[t][0]);
  std::sort(xs.begin(), xs.end());
  for (const auto& m : members) {
    const auto& p = std::get<ThresholdParams>(m.params());
    lo_rank_.push_back(std::lower_bound(xs.begin(), xs.end(), p.lo) - xs.begin());
    hi_rank_.push_back(std::upper_bound(xs.begin(), xs.end(), p.hi) - xs.begin());
    theta0_.push_back(p.theta0);
    theta1_.push_back(p.theta1);
  }
}

double ThresholdOracle::distance(std::size_t i, std::size_t j) const {
  if (i == j || n_ == 0) return 0.0;
  const double in_i = static_cast<double>(std::max(0L, hi_rank_[i] - lo_rank_[i]));
  const double in_j = static_cast<double>(std::max(0L, hi_rank_[j] - lo_rank_[j]));
  const double both = static_cast<double>(
      std::max(0L, std::min(hi_rank_[i], hi_rank_[j]) - std::max(lo_rank_[i], lo_rank_[j])));
  const double counts[4] = {both, in_i - both, in_j - both, n_ - in_i - in_j + both};
  const double d[4] = {bern_distance(metric_, theta1_[i], theta1_[j]), bern_distance(metric_, theta1_[i], theta0_[j]),
                       bern_distance(metric_, theta0_[i], theta1_[j]), bern_distance(metric_, theta0_[i], theta0_[j])};
  if (std::isinf(q_)) {
    double m = 0;
    for (int k = 0; k < 4; ++k)
      if (counts[k] > 0) m = std::max(m, d[k]);
    return m;
  }
  double acc = 0;
  for (int k = 0; k < 4; ++k)
    if (counts[k] > 0) acc += counts[k] * (q_ == 2.0 ? d[k] * d[k] : std::pow(d[k], q_));
  return std::pow(acc / n_, 1.0 / q_);
}

std::unique_ptr<DistanceOracle> make_oracle(const std::vector<ConditionalModel>& members,
                                            const EmpiricalMetricSpec& spec) {
  bool thresholds = !members.empty() && std::all_of(members.begin(), members.end(), [](const ConditionalModel& m) {
    return std::holds_alternative<ThresholdParams>(m.params());
  });
  if (thresholds) return std::make_unique<ThresholdOracle>(members, spec);
  return std::make_unique<PointwiseOracle>(members, spec);
}

std::vector<double> distance_matrix(const DistanceOracle& oracle) {
  const std::size_t m = oracle.size();
  std::vector<double> d(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) d[i * m + j] = d[j * m + i] = oracle.distance(i, j);
  return d;
}

// ---- covers and packings -------------------------------------------------------

EmpiricalCover greedy_pack_cover(const DistanceOracle& oracle, double eps) {
  if (!(eps > 0)) throw DomainError("cover scale must be positive");
  const std::size_t m = oracle.size();
  EmpiricalCover cover;
  cover.scale = eps;
  if (m == 0) return cover;
  // The member that rejected each candidate seeds the certificate search.
  std::vector<double> nearest(m, 0.0);
  std::vector<std::size_t> witness(m, 0);
  for (std::size_t i = 0; i < m; ++i) {
    bool covered = false;
    // Recent members first: pools are ordered so neighbours tend to be adjacent.
    for (auto it = cover.members.rbegin(); it != cover.members.rend(); ++it) {
      double d = oracle.distance(i, *it);
      if (d <= eps) {
        covered = true;
        nearest[i] = d;
        witness[i] = *it;
        break;
      }
    }
    if (!covered) {
      cover.members.push_back(i);
      witness[i] = i;
    }
  }
  // max_i min_j d(i, j): a candidate cannot raise the maximum once any member
  // is at or below the running value.
  double cert = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (nearest[i] <= cert) continue;
    double best = nearest[i];
    for (auto it = cover.members.rbegin(); it != cover.members.rend() && best > cert; ++it)
      if (*it != witness[i]) best = std::min(best, oracle.distance(i, *it));
    cert = std::max(cert, best);
  }
  cover.certificate = cert;
  if (cover.certificate > eps)
    throw NumericError(fmt::format("greedy cover certificate {} exceeds scale {}", cover.certificate, eps),
                       cover.certificate);
  return cover;
}

double cover_certificate(const DistanceOracle& oracle, const std::vector<std::size_t>& members) {
  const std::size_t m = oracle.size();
  if (m == 0) return 0.0;
  if (members.empty()) return std::numeric_limits<double>::infinity();
  double cert = 0;
  for (std::size_t i = 0; i < m; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (auto j : members) {
      best = std::min(best, oracle.distance(i, j));
      if (best <= cert) break;
    }
    cert = std::max(cert, best);
  }
  return cert;
}

EmpiricalCover prune_cover(const DistanceOracle& oracle, EmpiricalCover cover) {
  const std::size_t m = oracle.size();
  const std::size_t k = cover.members.size();
  if (k <= 1) return cover;
  // multiplicity[i] = number of members within scale of i.
  std::vector<std::uint32_t> multiplicity(m, 0);
  std::vector<std::vector<std::size_t>> served(k);
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t i = 0; i < m; ++i)
      if (oracle.distance(i, cover.members[c]) <= cover.scale) {
        ++multiplicity[i];
        served[c].push_back(i);
      }
  std::vector<bool> keep(k, true);
  for (std::size_t c = k; c-- > 0;) {
    bool redundant = std::all_of(served[c].begin(), served[c].end(), [&](std::size_t i) { return multiplicity[i] >= 2; });
    if (!redundant) continue;
    keep[c] = false;
    for (auto i : served[c]) --multiplicity[i];
  }
  std::vector<std::size_t> members;
  for (std::size_t c = 0; c < k; ++c)
    if (keep[c]) members.push_back(cover.members[c]);
  cover.members = std::move(members);
  cover.certificate = cover_certificate(oracle, cover.members);
  return cover;
}

EmpiricalCover brute_min_cover(const DistanceOracle& oracle, double eps) {
  const std::size_t m = oracle.size();
  check_limit(m);
  EmpiricalCover cover;
  cover.scale = eps;
  if (m == 0) return cover;
  std::vector<Mask> near(m, 0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (i == j || oracle.distance(i, j) <= eps) near[i] |= Mask{1} << j;
  const Mask full = m == 32 ? ~Mask{0} : (Mask{1} << m) - 1;
  for (std::size_t k = 1; k <= m; ++k) {
    // Gosper's hack enumerates k-subsets in increasing order.
    Mask s = (Mask{1} << k) - 1;
    while (s <= full) {
      bool ok = std::all_of(near.begin(), near.end(), [&](Mask nb) { return (nb & s) != 0; });
      if (ok) {
        for (std::size_t i = 0; i < m; ++i)
          if (s & (Mask{1} << i)) cover.members.push_back(i);
        cover.certificate = cover_certificate(oracle, cover.members);
        return cover;
      }
      Mask c = s & (~s + 1), r = s + c;
      if (r == 0) break;
      s = (((r ^ s) >> 2) / c) | r;
    }
  }
  throw NumericError("no cover found", eps);
}

std::vector<std::size_t> brute_max_pack(const DistanceOracle& oracle, double eps) {
  const std::size_t m = oracle.size();
  check_limit(m);
  std::vector<Mask> adj(m, 0);
  std::vector<std::size_t> map(m);
  for (std::size_t i = 0; i < m; ++i) {
    map[i] = i;
    for (std::size_t j = 0; j < m; ++j)
      if (i != j && oracle.distance(i, j) > eps) adj[i] |= Mask{1} << j;
  }
  Mask best = 0;
  max_clique(adj, 0, m == 0 ? 0 : (m == 32 ? ~Mask{0} : (Mask{1} << m) - 1), best);
  return mask_indices(best, map);
}

std::vector<std::size_t> local_pack(const DistanceOracle& oracle, std::size_t ref, double eps) {
  std::vector<std::size_t> out = {ref};
  for (std::size_t j = 0; j < oracle.size(); ++j) {
    if (j == ref || oracle.distance(ref, j) > eps) continue;
    bool separated = std::all_of(out.begin(), out.end(), [&](std::size_t k) { return oracle.distance(j, k) >= eps / 2; });
    if (separated) out.push_back(j);
  }
  return out;
}

std::vector<std::size_t> brute_local_pack(const DistanceOracle& oracle, std::size_t ref, double eps) {
  check_limit(oracle.size());
  std::vector<std::size_t> ball;
  for (std::size_t j = 0; j < oracle.size(); ++j)
    if (oracle.distance(ref, j) <= eps) ball.push_back(j);
  std::vector<Mask> adj(ball.size(), 0);
  for (std::size_t a = 0; a < ball.size(); ++a)
    for (std::size_t b = 0; b < ball.size(); ++b)
      if (a != b && oracle.distance(ball[a], ball[b]) >= eps / 2) adj[a] |= Mask{1} << b;
  Mask best = 0;
  Mask all = ball.empty() ? 0 : (Mask{1} << ball.size()) - 1;
  max_clique(adj, 0, all, best);
  return mask_indices(best, ball);
}

// ---- profiles ----------------------------------------------------------------------

double EntropyProfile::value(double eps) const {
  if (points.empty()) throw DomainError("empty entropy profile");
  if (eps <= points.front().epsilon) return points.front().log_cover;
  if (eps >= points.back().epsilon) return points.back().log_cover;
  auto it = std::upper_bound(points.begin(), points.end(), eps,
                             [](double v, const EntropyPoint& p) { return v < p.epsilon; });
  const auto& b = *it;
  const auto& a = *(it - 1);
  double s = (std::log(eps) - std::log(a.epsilon)) / (std::log(b.epsilon) - std::log(a.epsilon));
  if (a.log_cover > 0 && b.log_cover > 0)
    return std::exp(std::log(a.log_cover) + s * (std::log(b.log_cover) - std::log(a.log_cover)));
  return a.log_cover + s * (b.log_cover - a.log_cover);
}

namespace {

struct ProfileRow {
  double cover = 0, pack = 0, local = 0;
};

std::vector<ProfileRow> profile_block(const std::vector<ConditionalModel>& members, const Covariates& x,
                                      const std::vector<double>& grid, const ProfileOptions& opt) {
  std::vector<ProfileRow> rows(grid.size());
  if (members.empty()) return rows;
  auto oracle = make_oracle(members, EmpiricalMetricSpec{BaseMetric::Hellinger, 2.0, x});
  parallel_for(grid.size(), opt.workers, [&](std::size_t k) {
    auto cover = greedy_pack_cover(*oracle, grid[k]);
    rows[k].pack = std::log(static_cast<double>(cover.members.size()));
    rows[k].cover = std::log(static_cast<double>(prune_cover(*oracle, cover).members.size()));
    std::size_t refs = std::min(opt.local_references, members.size());
    double best = 0;
    for (std::size_t r = 0; r < refs; ++r) {
      std::size_t ref = refs == 1 ? 0 : r * (members.size() - 1) / (refs - 1);
      best = std::max(best, std::log(static_cast<double>(local_pack(*oracle, ref, grid[k]).size())));
    }
    rows[k].local = best;
  });
  return rows;
}

Covariates restrict_to(const Covariates& x, const PoolBlock& b) {
  Covariates out(x.dim);
  for (std::size_t t = 0; t < x.size(); ++t)
    if (b.contains(x[t][0])) out.push_back(x[t]);
  return out;
}

std::vector<ProfileRow> profile_pool(const Pool& pool, const Covariates& x, const std::vector<double>& grid,
                                     const ProfileOptions& opt) {
  if (!pool.product()) return profile_block(pool.members(), x, grid, opt);
  // Product pools: product of per-block covers at the same scale covers the pool.
  std::vector<ProfileRow> rows(grid.size());
  for (const auto& block : pool.blocks) {
    auto sub = restrict_to(x, block);
    if (sub.empty()) continue;
    auto part = profile_block(block.members, sub, grid, opt);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      rows[k].cover += part[k].cover;
      rows[k].pack += part[k].pack;
      rows[k].local = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return rows;
}

EntropyProfile finish(std::vector<double> grid, const std::vector<std::vector<ProfileRow>>& per_sample, std::size_t n) {
  EntropyProfile prof;
  prof.n = n;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    EntropyPoint p{grid[k], 0, 0, 0};
    for (const auto& rows : per_sample) {
      p.log_cover = std::max(p.log_cover, rows[k].cover);
      p.log_pack = std::max(p.log_pack, rows[k].pack);
      p.log_local_pack = std::isnan(rows[k].local) ? rows[k].local : std::max(p.log_local_pack, rows[k].local);
    }
    prof.points.push_back(p);
  }
  // Running max as epsilon decreases keeps every column nonincreasing.
  for (std::size_t k = prof.points.size(); k-- > 1;) {
    auto& a = prof.points[k - 1];
    const auto& b = prof.points[k];
    a.log_cover = std::max(a.log_cover, b.log_cover);
    a.log_pack = std::max(a.log_pack, b.log_pack);
    if (!std::isnan(a.log_local_pack)) a.log_local_pack = std::max(a.log_local_pack, b.log_local_pack);
  }
  return prof;
}

std::vector<double> sorted_grid(std::vector<double> grid) {
  for (double e : grid)
    if (!(e > 0)) throw DomainError("entropy grid values must be positive");
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  if (grid.empty()) throw DomainError("empty entropy grid");
  return grid;
}

}  // namespace

EntropyProfile entropy_profile(const Pool& pool, const std::vector<Covariates>& samples,
                               std::vector<double> eps_grid, const ProfileOptions& opt) {
  auto grid = sorted_grid(std::move(eps_grid));
  std::vector<std::vector<ProfileRow>> per_sample;
  std::size_t n = 0;
  for (const auto& x : samples) {
    n = std::max(n, x.size());
    per_sample.push_back(profile_pool(pool, x, grid, opt));
  }
  return finish(std::move(grid), per_sample, n);
}

EntropyProfile entropy_profile(const ClassSpec& spec, const std::vector<Covariates>& samples,
                               std::vector<double> eps_grid, double resolution, const ProfileOptions& opt) {
  auto grid = sorted_grid(std::move(eps_grid));
  std::vector<std::vector<ProfileRow>> per_sample;
  std::size_t n = 0;
  for (const auto& x : samples) {
    n = std::max(n, x.size());
    auto pool = discretize(spec, resolution, &x);
    per_sample.push_back(profile_pool(pool, x, grid, opt));
  }
  return finish(std::move(grid), per_sample, n);
}

void write_profile_csv(const EntropyProfile& profile, std::ostream& out) {
  out << "epsilon,log_cover,log_pack,log_local_pack\n";
  for (const auto& p : profile.points)
    out << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g}\n", p.epsilon, p.log_cover, p.log_pack, p.log_local_pack);
}

double critical_radius(const std::function<double(double)>& entropy, double n, double lo, double hi) {
  if (!(lo > 0) || !(hi > lo)) throw DomainError("critical radius bracket must satisfy 0 < lo < hi");
  auto g = [&](double e) { return entropy(e) - n * e * e; };
  double glo = g(lo), ghi = g(hi);
  if (glo < 0 || ghi > 0)
    throw DomainError(fmt::format("H(eps) - n eps^2 has no sign change on [{}, {}]", lo, hi));
  double a = std::log(lo), b = std::log(hi);
  for (int it = 0; it < 400 && b - a > 1e-15 * std::max(1.0, std::abs(a)); ++it) {
    double mid = 0.5 * (a + b);
    if (g(std::exp(mid)) >= 0)
      a = mid;
    else
      b = mid;
  }
  double ea = std::exp(a), eb = std::exp(b);
  return std::abs(g(ea)) <= std::abs(g(eb)) ? ea : eb;
}

double critical_radius(const EntropyProfile& profile, double n) {
  if (profile.points.size() < 2) throw DomainError("entropy profile needs at least two grid points");
  return critical_radius([&](double e) { return profile.value(e); }, n, profile.points.front().epsilon,
                         profile.points.back().epsilon);
}

// ---- Rademacher complexity and localization ---------------------------------------

namespace {

std::vector<const std::vector<double>*> localize(const std::vector<std::vector<double>>& values, double r) {
  std::vector<const std::vector<double>*> out;
  for (const auto& h : values) {
    if (h.empty()) continue;
    double mean = 0;
    for (double v : h) mean += v;
    if (mean / static_cast<double>(h.size()) <= r) out.push_back(&h);
  }
  return out;
}

double sup_signed(const std::vector<const std::vector<double>*>& fam, const std::vector<int>& sigma, bool symmetric) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto* h : fam) {
    double s = 0;
    for (std::size_t t = 0; t < sigma.size(); ++t) s += sigma[t] * (*h)[t];
    s /= static_cast<double>(sigma.size());
    best = std::max(best, symmetric ? std::abs(s) : s);
  }
  return best;
}

}  // namespace

RademacherEstimate rademacher_local(const std::vector<std::vector<double>>& values, double r, std::size_t draws,
                                    Rng& rng, bool symmetric) {
  RademacherEstimate est;
  auto fam = localize(values, r);
  est.localized = fam.size();
  if (fam.empty() || draws == 0) return est;
  const std::size_t n = fam.front()->size();
  std::vector<int> sigma(n);
  double sum = 0, sq = 0;
  for (std::size_t d = 0; d < draws; ++d) {
    for (std::size_t t = 0; t < n; ++t) sigma[t] = (rng() & 1U) ? 1 : -1;
    double v = sup_signed(fam, sigma, symmetric);
    sum += v;
    sq += v * v;
  }
  const double k = static_cast<double>(draws);
  est.value = sum / k;
  double var = draws > 1 ? std::max(0.0, (sq - sum * sum / k) / (k - 1)) : 0.0;
  est.std_error = std::sqrt(var / k);
  return est;
}

double rademacher_exact(const std::vector<std::vector<double>>& values, double r, bool symmetric) {
  auto fam = localize(values, r);
  if (fam.empty()) return 0.0;
  const std::size_t n = fam.front()->size();
  if (n > 24) throw CapacityError("exact Rademacher enumeration limited to n <= 24");
  std::vector<int> sigma(n);
  double sum = 0;
  const std::uint64_t total = std::uint64_t{1} << n;
  for (std::uint64_t bits = 0; bits < total; ++bits) {
    for (std::size_t t = 0; t < n; ++t) sigma[t] = (bits >> t) & 1U ? 1 : -1;
    sum += sup_signed(fam, sigma, symmetric);
  }
  return sum / static_cast<double>(total);
}

double localization_finite(double cardinality, double n) {
  if (!(cardinality >= 1) || !(n > 0)) throw DomainError("finite localization needs |F| >= 1 and n > 0");
  return 289.0 * std::log(cardinality) / n;
}

double localization_parametric(double p, double c, double n) {
  if (!(p > 0) || !(c > 0) || !(n > 0)) throw DomainError("parametric localization needs p, C, n > 0");
  if (!(n > (12.0 / c) * (12.0 / c) * p))
    throw DomainError(fmt::format("parametric localization needs n > (12/C)^2 p = {}", (12.0 / c) * (12.0 / c) * p));
  return 289.0 * p / n * std::log(4.0 * c * std::sqrt(n) / (17.0 * std::sqrt(p)));
}

double localization_dudley(const std::function<double(double)>& entropy, double n, std::size_t grid) {
  if (!(n >= 1) || grid < 2) throw DomainError("Dudley localization needs n >= 1 and a grid of size >= 2");
  // rho_k = k / grid; integral from rho_k to 1 accumulated right to left.
  const double h = 1.0 / static_cast<double>(grid);
  auto integrand = [&](double rho) { return std::sqrt(std::max(0.0, entropy(rho / 2))); };
  double tail = 0, prev = integrand(1.0);
  double best = 4.0;  // gamma = 1: empty integral
  for (std::size_t k = grid; k-- > 1;) {
    double rho = static_cast<double>(k) * h;
    double cur = integrand(rho);
    tail += 0.5 * h * (prev + cur);
    prev = cur;
    best = std::min(best, 4 * rho + 17.0 / std::sqrt(n) * tail);
  }
  double l = std::log(2 * n);
  return 972.0 * l * l * l * best * best;
}

double localization_fixed_point(const std::function<double(double)>& phi) {
  double hi = 1.0;
  int guard = 0;
  while (phi(hi) >= hi) {
    hi *= 2;
    if (++guard > 2000) throw NumericError("localization function has no finite largest fixed point", hi);
  }
  double lo = hi / 2;
  guard = 0;
  while (phi(lo) < lo) {
    lo /= 2;
    if (++guard > 2000 || lo == 0) return 0.0;
  }
  for (int it = 0; it < 500; ++it) {
    double mid = 0.5 * (lo + hi);
    if (phi(mid) >= mid)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-16 * hi) break;
  }
  double r = 0.5 * (lo + hi);
  if (std::abs(r - phi(r)) > 1e-10) throw NumericError("fixed point iteration did not converge", std::abs(r - phi(r)));
  return r;
}

ConcentrationResult uniform_hellinger_check(const std::vector<ConditionalModel>& members,
                                            const CovariateDistribution& dist, std::size_t n, double delta,
                                            std::size_t resamples, double radius, Rng& rng) {
  if (!dist.finite()) throw ConfigurationError("concentration check needs a finite covariate space");
  if (!(delta > 0 && delta < 1) || n < 3) throw DomainError("concentration check needs delta in (0,1) and n >= 3");
  const auto& atoms = dist.atoms();
  const auto& w = dist.weights();
  const std::size_t a = atoms.size(), m = members.size();
  const std::size_t pairs = m * (m - 1) / 2;
  std::vector<double> h2(pairs * a);
  std::vector<double> expect(pairs, 0.0);
  std::size_t p = 0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j, ++p)
      for (std::size_t k = 0; k < a; ++k) {
        double v = point_hellinger_sq(members[i].evaluate(atoms[k]), members[j].evaluate(atoms[k]));
        h2[p * a + k] = v;
        expect[p] += w[k] * v;
      }
  std::vector<double> cum(w.size());
  std::partial_sum(w.begin(), w.end(), cum.begin());
  const double nd = static_cast<double>(n);
  const double slack = 106.0 * radius + 48.0 * (std::log(1 / delta) + 6.0 * std::log(std::log(nd))) / nd;

  ConcentrationResult res;
  res.resamples = resamples;
  res.radius = radius;
  res.max_excess = -std::numeric_limits<double>::infinity();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::size_t> counts(a);
  std::size_t violations = 0;
  for (std::size_t r = 0; r < resamples; ++r) {
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t t = 0; t < n; ++t) {
      auto k = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), unif(rng)) - cum.begin());
      ++counts[std::min(k, a - 1)];
    }
    bool violated = false;
    for (std::size_t q = 0; q < pairs; ++q) {
      double emp = 0;
      for (std::size_t k = 0; k < a; ++k) emp += static_cast<double>(counts[k]) * h2[q * a + k];
      double excess = expect[q] - (2.0 / nd * emp + slack);
      res.max_excess = std::max(res.max_excess, excess);
      violated |= excess > 0;
    }
    violations += violated;
  }
  res.violation_frequency = resamples ? static_cast<double>(violations) / static_cast<double>(resamples) : 0.0;
  return res;
}

}  // namespace cdekit
