#include "cdekit/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "cdekit/error.hpp"
#include "cdekit/parallel.hpp"
#include "cdekit/toml_lite.hpp"

namespace cdekit {

std::string experiment_kind_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Divergence: return "divergence";
    case ExperimentKind::Entropy: return "entropy";
    case ExperimentKind::Fit: return "fit";
    case ExperimentKind::RiskSweep: return "risk-sweep";
    case ExperimentKind::RegretSweep: return "regret-sweep";
    case ExperimentKind::MleGap: return "mle-gap";
    case ExperimentKind::Adaptive: return "adaptive";
  }
  return "?";
}

const std::vector<ExperimentKind>& experiment_kinds() {
  static const std::vector<ExperimentKind> all{ExperimentKind::Divergence,  ExperimentKind::Entropy,
                                               ExperimentKind::Fit,         ExperimentKind::RiskSweep,
                                               ExperimentKind::RegretSweep, ExperimentKind::MleGap,
                                               ExperimentKind::Adaptive};
  return all;
}

ExperimentKind parse_experiment_kind(const std::string& name) {
  for (auto k : experiment_kinds())
    if (experiment_kind_name(k) == name) return k;
  throw ConfigurationError(fmt::format("unknown experiment '{}'", name));
}

Json load_document(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError(fmt::format("cannot read config '{}'", path));
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string ext = std::filesystem::path(path).extension().string();
  if (ext == ".toml") return parse_toml(buf.str(), path);
  if (ext == ".json") {
    try {
      return Json::parse(buf.str());
    } catch (const Json::parse_error& e) {
      throw ConfigurationError(fmt::format("{}: {}", path, e.what()));
    }
  }
  throw ConfigurationError(fmt::format("config '{}' must end in .toml or .json", path));
}

namespace {

void check_grid(Node& n, const std::vector<std::size_t>& grid, std::size_t reps, Diagnostics& diag) {
  if (!n.has("n_grid")) return;
  if (grid.empty()) diag.add(n.at("n_grid"), "must not be empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < 2) diag.add(fmt::format("{}[{}]", n.at("n_grid"), i), "must be at least 2");
    if (i > 0 && grid[i] <= grid[i - 1]) diag.add(n.at("n_grid"), "must be strictly increasing");
  }
  if (reps < 2) diag.add(n.at("replications"), "must be at least 2");
}

ClassSpec read_class(Node& n, const std::string& key, Diagnostics& diag) {
  const Json* c = n.object(key, true);
  return c ? class_spec_from_json(*c, n.at(key), diag) : ClassSpec{};
}

ConditionalModel read_truth(Node& n, Diagnostics& diag) {
  const Json* t = n.object("truth", true);
  return t ? model_from_json(*t, n.at("truth"), diag) : ConditionalModel(ConstantParams{Bernoulli{0.5}});
}

CovariateDistribution read_covariates(Node& n, Diagnostics& diag) {
  const Json* c = n.object("covariates", false);
  return c ? covariates_from_json(*c, n.at("covariates"), diag) : CovariateDistribution::uniform_interval(-1.0, 1.0);
}

LossOptions read_loss(Node& n, Diagnostics& diag) {
  const Json* l = n.object("loss", false);
  return l ? loss_options_from_json(*l, n.at("loss"), diag) : LossOptions{};
}

EstimatorSpec read_estimator(Node& n, Diagnostics& diag) {
  const Json* e = n.object("estimator", false);
  return e ? estimator_spec_from_json(*e, n.at("estimator"), diag) : EstimatorSpec{};
}

bool batch(EstimatorKind k) { return k != EstimatorKind::Sequential && k != EstimatorKind::Adaptive; }

SweepSpec read_sweep(Node& n, const ExperimentConfig& cfg, Diagnostics& diag) {
  SweepSpec s;
  s.experiment_id = cfg.id;
  s.seed = cfg.seed.value_or(0);
  s.workers = cfg.workers;
  s.cls = read_class(n, "class", diag);
  s.truth = read_truth(n, diag);
  s.covariates = read_covariates(n, diag);
  n.require("n_grid");
  s.n_grid = n.counts("n_grid");
  s.replications = n.count("replications", s.replications);
  check_grid(n, s.n_grid, s.replications, diag);
  s.timing = n.flag("timing", false);
  s.loss = read_loss(n, diag);
  s.random_grid_shift = n.flag("random_grid_shift", false);
  if (const Json* a = n.array("estimators", false)) {
    s.estimators.clear();
    for (std::size_t i = 0; i < a->size(); ++i) {
      const std::string p = fmt::format("{}[{}]", n.at("estimators"), i);
      s.estimators.push_back(estimator_spec_from_json((*a)[i], p, diag));
      if (cfg.kind == ExperimentKind::RiskSweep && !batch(s.estimators.back().kind))
        diag.add(p + ".kind", "risk sweeps take batch estimators only");
    }
    if (s.estimators.empty()) diag.add(n.at("estimators"), "must not be empty");
    if (cfg.kind == ExperimentKind::RegretSweep && s.estimators.size() > 1)
      diag.add(n.at("estimators"), "regret sweeps take a single estimator");
  }
  if (const Json* a = n.array("overlays", false))
    for (std::size_t i = 0; i < a->size(); ++i)
      s.overlays.push_back(overlay_from_json((*a)[i], fmt::format("{}[{}]", n.at("overlays"), i), diag));
  return s;
}

MleGapSpec read_mle_gap(Node& n, const ExperimentConfig& cfg, Diagnostics& diag) {
  MleGapSpec s;
  s.experiment_id = cfg.id;
  s.seed = cfg.seed.value_or(0);
  s.workers = cfg.workers;
  s.gamma = n.number("gamma", s.gamma);
  if (!(s.gamma > 0 && s.gamma < 0.5)) diag.add(n.at("gamma"), fmt::format("must lie in (0, 1/2), got {}", s.gamma));
  s.lambda_denominator = n.count("lambda_denominator", s.lambda_denominator);
  if (s.lambda_denominator < 4) diag.add(n.at("lambda_denominator"), "must be at least 4");
  if (const Json* e = n.object("epsilon", false)) s.epsilon = epsilon_policy_from_json(*e, n.at("epsilon"), diag);
  s.allow_small_epsilon = n.flag("allow_small_epsilon", s.allow_small_epsilon);
  n.require("n_grid");
  s.n_grid = n.counts("n_grid");
  s.replications = n.count("replications", s.replications);
  check_grid(n, s.n_grid, s.replications, diag);
  s.timing = n.flag("timing", false);
  return s;
}

AdaptiveSpec read_adaptive(Node& n, const ExperimentConfig& cfg, Diagnostics& diag) {
  AdaptiveSpec s;
  s.experiment_id = cfg.id;
  s.seed = cfg.seed.value_or(0);
  s.workers = cfg.workers;
  if (const Json* a = n.array("candidates", true)) {
    for (std::size_t i = 0; i < a->size(); ++i)
      s.candidates.push_back(class_spec_from_json((*a)[i], fmt::format("{}[{}]", n.at("candidates"), i), diag));
    if (s.candidates.empty()) diag.add(n.at("candidates"), "must not be empty");
  }
  s.prior = n.numbers("prior");
  if (!s.prior.empty()) {
    if (s.prior.size() != s.candidates.size()) diag.add(n.at("prior"), "needs one weight per candidate");
    double total = 0;
    for (double w : s.prior) {
      if (!(w > 0)) diag.add(n.at("prior"), "weights must be positive");
      total += w;
    }
    if (total > 1 + 1e-12) diag.add(n.at("prior"), fmt::format("weights sum to {} > 1", total));
  }
  for (std::size_t i = 1; i < s.candidates.size(); ++i)
    if (s.candidates[i].reference().kind() != s.candidates[0].reference().kind() ||
        s.candidates[i].bernoulli() != s.candidates[0].bernoulli())
      diag.add(fmt::format("{}[{}]", n.at("candidates"), i), "candidates must share the response space");
  s.truth = read_truth(n, diag);
  s.covariates = read_covariates(n, diag);
  s.estimator = read_estimator(n, diag);
  n.require("n_grid");
  s.n_grid = n.counts("n_grid");
  s.replications = n.count("replications", s.replications);
  check_grid(n, s.n_grid, s.replications, diag);
  s.loss = read_loss(n, diag);
  s.timing = n.flag("timing", false);
  return s;
}

DivergenceConfig read_divergence(Node& n, Diagnostics& diag) {
  DivergenceConfig d;
  if (const Json* p = n.object("p", true)) d.p = density_from_json(*p, n.at("p"), diag);
  if (const Json* q = n.object("q", true)) d.q = density_from_json(*q, n.at("q"), diag);
  if (const Json* r = n.object("reference", false)) d.reference = reference_from_json(*r, n.at("reference"), diag);
  d.options.force_numeric = n.flag("force_numeric", false);
  d.options.abs_tol = n.number("abs_tol", d.options.abs_tol);
  if (!(d.options.abs_tol > 0)) diag.add(n.at("abs_tol"), "must be positive");
  return d;
}

EntropyConfig read_entropy(Node& n, const ExperimentConfig& cfg, Diagnostics& diag) {
  EntropyConfig e;
  e.cls = read_class(n, "class", diag);
  e.covariates = read_covariates(n, diag);
  n.require("n");
  e.n = n.count("n", 0);
  if (n.has("n") && e.n < 1) diag.add(n.at("n"), "must be at least 1");
  e.samples = n.count("samples", e.samples);
  if (e.samples < 1) diag.add(n.at("samples"), "must be at least 1");
  n.require("eps_grid");
  e.eps_grid = n.numbers("eps_grid");
  for (double v : e.eps_grid)
    if (!(v > 0)) diag.add(n.at("eps_grid"), "values must be positive");
  e.resolution = n.number("resolution", 0.0);
  if (n.has("resolution") && !(e.resolution > 0)) diag.add(n.at("resolution"), "must be positive");
  e.options.local_references = n.count("local_references", e.options.local_references);
  e.options.workers = cfg.workers;
  return e;
}

FitConfig read_fit(Node& n, Diagnostics& diag) {
  FitConfig f;
  f.cls = read_class(n, "class", diag);
  f.truth = read_truth(n, diag);
  f.covariates = read_covariates(n, diag);
  f.estimator = read_estimator(n, diag);
  if (!batch(f.estimator.kind)) diag.add(n.at("estimator.kind"), "fit takes a batch estimator");
  n.require("n");
  f.n = n.count("n", 0);
  if (n.has("n") && f.n < 2) diag.add(n.at("n"), "must be at least 2");
  f.loss = read_loss(n, diag);
  return f;
}

}  // namespace

ExperimentConfig parse_config(const Json& doc, Diagnostics& diag) {
  ExperimentConfig cfg;
  cfg.document = doc;
  Node n(doc, "", diag);
  if (!doc.is_object()) return cfg;
  n.require("experiment");
  const std::string kind = n.string("experiment", "");
  if (!n.has("experiment")) return cfg;
  try {
    cfg.kind = parse_experiment_kind(kind);
  } catch (const ConfigurationError& e) {
    diag.add("experiment", e.what());
    return cfg;
  }
  cfg.id = n.string("id", experiment_kind_name(cfg.kind));
  if (cfg.id.empty() || cfg.id.find_first_of("/\\") != std::string::npos)
    diag.add("id", "must be a nonempty name without path separators");
  cfg.seed = n.optional_u64("seed");
  if (cfg.kind != ExperimentKind::Divergence && !n.has("seed")) diag.add("seed", "missing required key");
  const std::size_t workers = n.count("workers", 0);
  cfg.workers = workers == 0 ? default_workers() : workers;
  if (const Json* o = n.object("output", false)) {
    Node out(*o, "output", diag);
    cfg.output.csv = out.string("csv", "");
    cfg.output.summary = out.string("summary", "");
    out.finish();
  }
  switch (cfg.kind) {
    case ExperimentKind::Divergence: cfg.divergence = read_divergence(n, diag); break;
    case ExperimentKind::Entropy: cfg.entropy = read_entropy(n, cfg, diag); break;
    case ExperimentKind::Fit: cfg.fit = read_fit(n, diag); break;
    case ExperimentKind::RiskSweep:
    case ExperimentKind::RegretSweep: cfg.sweep = read_sweep(n, cfg, diag); break;
    case ExperimentKind::MleGap: cfg.mle_gap = read_mle_gap(n, cfg, diag); break;
    case ExperimentKind::Adaptive: cfg.adaptive = read_adaptive(n, cfg, diag); break;
  }
  n.finish();
  return cfg;
}

ExperimentConfig parse_config(const Json& doc) {
  Diagnostics diag;
  auto cfg = parse_config(doc, diag);
  diag.raise();
  return cfg;
}

std::vector<std::string> validate_config(const Json& doc) {
  Diagnostics diag;
  parse_config(doc, diag);
  return diag.errors;
}

}  // namespace cdekit
