#include "cdekit/serialize.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "cdekit/error.hpp"

namespace cdekit {

namespace {

std::string type_name(const Json& v) { return v.type_name(); }

std::string threshold_shape_name(ThresholdShape s) { return s == ThresholdShape::Halfline ? "halfline" : "interval"; }
std::string holder_scheme_name(HolderScheme s) { return s == HolderScheme::Patterns ? "patterns" : "cell-levels"; }

Json numbers_json(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(number_json(x));
  return a;
}

Json family_json(const Family& f) {
  return std::visit(
      [](const auto& d) -> Json {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Bernoulli>)
          return {{"family", "bernoulli"}, {"p", d.p}};
        else if constexpr (std::is_same_v<T, Gaussian>)
          return {{"family", "gaussian"}, {"mean", d.mean}, {"stddev", d.stddev}};
        else if constexpr (std::is_same_v<T, Poisson>)
          return {{"family", "poisson"}, {"rate", d.rate}};
        else if constexpr (std::is_same_v<T, Gamma>)
          return {{"family", "gamma"}, {"shape", d.shape}, {"scale", d.scale}};
        else if constexpr (std::is_same_v<T, Multinomial>)
          return {{"family", "multinomial"}, {"probs", d.probs}};
        else if constexpr (std::is_same_v<T, Tabulated>)
          return {{"family", "tabulated"}, {"grid", numbers_json(d.grid)}, {"values", d.values}, {"discrete", d.discrete}};
        else if constexpr (std::is_same_v<T, Cauchy>)
          return {{"family", "cauchy"}, {"location", d.location}, {"scale", d.scale}};
        else
          return {{"family", "discrete-cauchy"}};
      },
      f);
}

Family family_from_json(const Json& j, const std::string& path, Diagnostics& diag) {
  Node n(j, path, diag);
  const std::string fam = n.string("family", "");
  Family out = Bernoulli{0.5};
  if (fam == "bernoulli") {
    out = Bernoulli{n.number("p", 0.5)};
  } else if (fam == "gaussian") {
    out = Gaussian{n.number("mean", 0.0), n.number("stddev", 1.0)};
  } else if (fam == "poisson") {
    out = Poisson{n.number("rate", 1.0)};
  } else if (fam == "gamma") {
    out = Gamma{n.number("shape", 1.0), n.number("scale", 1.0)};
  } else if (fam == "multinomial") {
    n.require("probs");
    out = Multinomial{n.numbers("probs")};
  } else if (fam == "tabulated") {
    n.require("grid");
    n.require("values");
    out = Tabulated{n.numbers("grid"), n.numbers("values"), n.flag("discrete", true)};
  } else if (fam == "cauchy") {
    out = Cauchy{n.number("location", 0.0), n.number("scale", 1.0)};
  } else if (fam == "discrete-cauchy") {
    out = DiscreteCauchy{};
  } else if (n.has("family")) {
    diag.add(n.at("family"), fmt::format("unknown family '{}'", fam));
  } else {
    diag.add(n.at("family"), "missing required key");
  }
  n.finish();
  return out;
}

// Runs a constructor that may throw ConfigurationError or DomainError, recording the message at `path`.
template <class T, class F>
T guarded(const std::string& path, Diagnostics& diag, T fallback, F&& make) {
  try {
    return make();
  } catch (const Error& e) {
    diag.add(path, e.what());
    return fallback;
  }
}

Covariates atoms_from_json(const Json& j, const std::string& path, Diagnostics& diag) {
  Covariates c(1);
  if (!j.is_array() || j.empty()) {
    diag.add(path, "expected a nonempty array of atoms");
    return c;
  }
  if (j.front().is_array()) {
    c = Covariates(j.front().size());
    for (std::size_t i = 0; i < j.size(); ++i) {
      const std::string p = fmt::format("{}[{}]", path, i);
      if (!j[i].is_array() || j[i].size() != c.dim) {
        diag.add(p, fmt::format("expected an array of {} numbers", c.dim));
        continue;
      }
      for (std::size_t k = 0; k < c.dim; ++k) c.data.push_back(json_number(j[i][k], fmt::format("{}[{}]", p, k), diag));
    }
  } else {
    for (std::size_t i = 0; i < j.size(); ++i) c.data.push_back(json_number(j[i], fmt::format("{}[{}]", path, i), diag));
  }
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Diagnostics and Node

void Diagnostics::add(const std::string& path, const std::string& message) {
  errors.push_back(path.empty() ? message : fmt::format("{}: {}", path, message));
}

void Diagnostics::raise() const {
  if (errors.empty()) return;
  std::string msg;
  for (const auto& e : errors) msg += (msg.empty() ? "" : "\n") + e;
  throw ConfigurationError(msg);
}

Node::Node(const Json& value, std::string path, Diagnostics& diag)
    : value_(&value), path_(std::move(path)), diag_(&diag) {
  if (!value.is_object()) diag.add(path_, fmt::format("expected an object, got {}", type_name(value)));
}

bool Node::has(const std::string& key) const { return value_->is_object() && value_->contains(key); }

std::string Node::at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

const Json* Node::get(const std::string& key) {
  seen_.insert(key);
  if (!has(key)) return nullptr;
  return &(*value_)[key];
}

double json_number(const Json& v, const std::string& path, Diagnostics& diag) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return kNaN;
  }
  diag.add(path, fmt::format("expected a number, got {}", type_name(v)));
  return kNaN;
}

Json number_json(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double Node::number(const std::string& key, double fallback) {
  const Json* v = get(key);
  return v ? json_number(*v, at(key), *diag_) : fallback;
}

std::optional<double> Node::optional_number(const std::string& key) {
  const Json* v = get(key);
  if (!v || v->is_null()) return std::nullopt;
  return json_number(*v, at(key), *diag_);
}

std::size_t Node::count(const std::string& key, std::size_t fallback) {
  const Json* v = get(key);
  if (!v) return fallback;
  if (v->is_number_unsigned()) return v->get<std::size_t>();
  if (v->is_number_integer() && v->get<long long>() >= 0) return v->get<std::size_t>();
  diag_->add(at(key), fmt::format("expected a nonnegative integer, got {}", v->dump()));
  return fallback;
}

std::optional<std::uint64_t> Node::optional_u64(const std::string& key) {
  const Json* v = get(key);
  if (!v) return std::nullopt;
  if (v->is_number_unsigned()) return v->get<std::uint64_t>();
  if (v->is_number_integer() && v->get<long long>() >= 0) return v->get<std::uint64_t>();
  diag_->add(at(key), fmt::format("expected a nonnegative integer, got {}", v->dump()));
  return std::nullopt;
}

bool Node::flag(const std::string& key, bool fallback) {
  const Json* v = get(key);
  if (!v) return fallback;
  if (v->is_boolean()) return v->get<bool>();
  diag_->add(at(key), fmt::format("expected a boolean, got {}", type_name(*v)));
  return fallback;
}

std::string Node::string(const std::string& key, const std::string& fallback) {
  const Json* v = get(key);
  if (!v) return fallback;
  if (v->is_string()) return v->get<std::string>();
  diag_->add(at(key), fmt::format("expected a string, got {}", type_name(*v)));
  return fallback;
}

std::vector<double> Node::numbers(const std::string& key) {
  std::vector<double> out;
  const Json* v = array(key, false);
  if (!v) return out;
  for (std::size_t i = 0; i < v->size(); ++i) out.push_back(json_number((*v)[i], fmt::format("{}[{}]", at(key), i), *diag_));
  return out;
}

std::vector<std::size_t> Node::counts(const std::string& key) {
  std::vector<std::size_t> out;
  const Json* v = array(key, false);
  if (!v) return out;
  for (std::size_t i = 0; i < v->size(); ++i) {
    const Json& e = (*v)[i];
    if (e.is_number_integer() && e.get<long long>() >= 0)
      out.push_back(e.get<std::size_t>());
    else
      diag_->add(fmt::format("{}[{}]", at(key), i), fmt::format("expected a nonnegative integer, got {}", e.dump()));
  }
  return out;
}

std::vector<int> Node::integers(const std::string& key) {
  std::vector<int> out;
  const Json* v = array(key, false);
  if (!v) return out;
  for (std::size_t i = 0; i < v->size(); ++i) {
    const Json& e = (*v)[i];
    if (e.is_number_integer())
      out.push_back(e.get<int>());
    else
      diag_->add(fmt::format("{}[{}]", at(key), i), fmt::format("expected an integer, got {}", e.dump()));
  }
  return out;
}

const Json* Node::object(const std::string& key, bool required) {
  const Json* v = get(key);
  if (!v) {
    if (required) diag_->add(at(key), "missing required key");
    return nullptr;
  }
  if (!v->is_object()) {
    diag_->add(at(key), fmt::format("expected an object, got {}", type_name(*v)));
    return nullptr;
  }
  return v;
}

const Json* Node::array(const std::string& key, bool required) {
  const Json* v = get(key);
  if (!v) {
    if (required) diag_->add(at(key), "missing required key");
    return nullptr;
  }
  if (!v->is_array()) {
    diag_->add(at(key), fmt::format("expected an array, got {}", type_name(*v)));
    return nullptr;
  }
  return v;
}

void Node::require(const std::string& key) {
  if (!has(key)) diag_->add(at(key), "missing required key");
}

void Node::finish() {
  if (!value_->is_object()) return;
  for (const auto& item : value_->items())
    if (!seen_.count(item.key())) diag_->add(at(item.key()), "unknown key");
}

// ---------------------------------------------------------------------------
// Reading

PointDensity point_density_from_json(const Json& j, const std::string& path, Diagnostics& diag) {
  const Family f = family_from_json(j, path, diag);
  return std::visit(
      [&](const auto& d) -> PointDensity {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_constructible_v<PointDensity, T>) {
          return d;
        } else {
          diag.add(path, "expected a bernoulli, gaussian, poisson or gamma density");
          return Bernoulli{0.5};
        }
      },
      f);
}

ResponseDensity density_from_json(const Json& j, const std::string& path, Diagnostics& diag) {
  const ResponseDensity fallback(Bernoulli{0.5});
  if (j.is_object() && j.contains("mixture")) {
    Node n(j, path, diag);
    std::vector<Component> parts;
    if (const Json* a = n.array("mixture", true)) {
      for (std::size_t i = 0; i < a->size(); ++i) {
        const std::string p = fmt::format("{}[{}]", n.at("mixture"), i);
        Node c((*a)[i], p, diag);
        const double w = c.number("weight", 1.0);
        const Json* d = c.object("density", true);
        if (d) parts.push_back({w, family_from_json(*d, c.at("density"), diag)});
        c.finish();
      }
    }
    n.finish();
    if (!diag.ok()) return fallback;
    return guarded(path, diag, fallback, [&] { return ResponseDensity::mixture(parts); });
  }
  const Family f = family_from_json(j, path, diag);
  return guarded(path, diag, fallback, [&] { return ResponseDensity(f); });
}

ReferenceMeasure reference_from_json(const Json& j, const std::string& path, Diagnostics& diag) {
  const ReferenceMeasure fallback = ReferenceMeasure::binary();
  Node n(j, path, diag);
  const std::string kind = n.string("kind", "");
  std::optional<ReferenceMeasure> out;
  if (kind == "binary") {
    out = fallback;
  } else if (kind == "counting") {
    n.require("atoms");
    auto atoms = n.numbers("atoms");
    double w = n.number("atom_weight", 1.0);
    out = guarded(path, diag, fallback, [&] { return ReferenceMeasure::counting(atoms, w); });
  } else if (kind == "lebesgue") {
    n.require("lo");
    n.require("hi");
    double lo = n.number("lo", 0.0), hi = n.number("hi", 1.0);
    out = guarded(path, diag, fallback, [&] { return ReferenceMeasure::lebesgue(lo, hi); });
  } else if (kind == "cauchy-real") {
    out = ReferenceMeasure::cauchy_real();
  } else if (kind == "cauchy-naturals") {
    out = ReferenceMeasure::cauchy_naturals();
  } else if (kind == "gamma-weighted") {
    double shape = n.number("shape", 1.0), offset = n.number("offset", 1.0);
    out = guarded(path, diag, fallback, [&] { return ReferenceMeasure::gamma_weighted(shape, offset); });
  } else if (kind == "heavy-tailed") {
    double mass = n.number("total_mass", 1.0);
    const Json* s = n.object("shape", true);
    Family f = s ? family_from_json(*s, n.at("shape"), diag) : Family(Cauchy{0, 1});
    out = guarded(path, diag, fallback, [&] { return ReferenceMeasure::heavy_tailed(f, mass); });
  } else {
    diag.add(n.at("kind"), n.has("kind") ? fmt::format("unknown reference measure '{}'", kind) : "missing required key");
  }
  n.finish();
  return out.value_or(fallback);
}

CovariateDistribution covariates_from_json(const Json& j, const std::string& path, Diagnostics& diag) {
  const auto fallback = CovariateDistribution::uniform_interval(-1.0, 1.0);
  Node n(j, path, diag);
  const std::string kind = n.string("kind", "");
  std::optional<CovariateDistribution> out;
  if (kind == "uniform-interval") {
    double lo = n.number("lo", -1.0), hi = n.number("hi", 1.0);
    out = guarded(path, diag, fallback, [&] { return CovariateDistribution::uniform_interval(lo, hi); });
  } else if (kind == "normal") {
    double mean = n.number("mean", 0.0), sd = n.number("stddev", 1.0);
    out = guarded(path, diag, fallback, [&] { return CovariateDistribution::normal(mean, sd); });
  } else if (kind == "uniform-ball") {
    std::size_t dim = n.count("dim", 1);
    double r = n.number("radius", 1.0);
    out = guarded(path, diag, fallback, [&] { return CovariateDistribution::uniform_ball(dim, r); });
  } else if (kind == "uniform-finite" || kind == "weighted-grid") {
    const Json* a = n.array("atoms", true);
    Covariates atoms = a ? atoms_from_json(*a, n.at("atoms"), diag) : Covariates(1);
    std::vector<double> w;
    if (kind == "weighted-grid") {
      n.require("weights");
      w = n.numbers("weights");
    } else {
      w.assign(atoms.size(), 1.0);
    }
    if (a && diag.ok())
      out = guarded(path, diag, fallback, [&] { return CovariateDistribution::weighted_grid(atoms, w); });
  } else {
    diag.add(n.at("kind"), n.has("kind") ? fmt::format("unknown covariate distribution '{}'", kind)
                                         : "missing required key");
  }
  n.finish();
  return out.value_or(fallback);
}

ClassSpec class_spec_from_json(const Json& j, const std::string& path, Diagnostics& diag) {
  ClassSpec s;
  Node n(j, path, diag);
  const std::string kind = n.string("kind", "");
  if (!n.has("kind")) {
    diag.add(n.at("kind"), "missing required key");
  } else {
    try {
      s.kind = parse_class_kind(kind);
    } catch (const ConfigurationError& e) {
      diag.add(n.at("kind"), e.what());
    }
  }
  s.max_pool = n.count("max_pool", s.max_pool);
  switch (s.kind) {
    case ClassKind::GaussianLinear:
    case ClassKind::PoissonLogLinear:
    case ClassKind::GammaInverseLink:
      s.dim = n.count("dim", s.dim);
      s.x_bound = n.number("x_bound", s.x_bound);
      s.w_bound = n.number("w_bound", s.w_bound);
      s.grid_step = n.optional_number("grid_step");
      if (s.kind == ClassKind::GaussianLinear) s.sigma = n.number("sigma", s.sigma);
      if (s.kind == ClassKind::GammaInverseLink) {
        s.shape = n.number("shape", s.shape);
        s.gamma_offset = n.number("gamma_offset", s.gamma_offset);
      }
      break;
    case ClassKind::BernoulliThreshold: {
      const std::string shape = n.string("shape", "halfline");
      if (shape == "halfline")
        s.threshold_shape = ThresholdShape::Halfline;
      else if (shape == "interval")
        s.threshold_shape = ThresholdShape::Interval;
      else
        diag.add(n.at("shape"), fmt::format("expected 'halfline' or 'interval', got '{}'", shape));
      s.theta_grid = n.numbers("theta_grid");
      s.theta_step = n.number("theta_step", s.theta_step);
      break;
    }
    case ClassKind::HolderBump: {
      s.holder_gamma = n.number("gamma", s.holder_gamma);
      s.cells = n.count("cells", s.cells);
      s.lambda_max = n.number("lambda_max", s.lambda_max);
      s.lambda_grid = n.numbers("lambda_grid");
      const std::string scheme = n.string("scheme", "patterns");
      if (scheme == "patterns")
        s.holder_scheme = HolderScheme::Patterns;
      else if (scheme == "cell-levels")
        s.holder_scheme = HolderScheme::CellLevels;
      else
        diag.add(n.at("scheme"), fmt::format("expected 'patterns' or 'cell-levels', got '{}'", scheme));
      s.grid_shift = n.number("grid_shift", s.grid_shift);
      break;
    }
    case ClassKind::AppendixD:
      s.appendix_gamma = n.number("gamma", s.appendix_gamma);
      s.lambda_denominator = n.count("lambda_denominator", s.lambda_denominator);
      break;
  }
  n.finish();
  if (diag.ok()) {
    try {
      s.validate();
    } catch (const ConfigurationError& e) {
      diag.add(path, e.what());
    }
  }
  return s;
}

ConditionalModel model_from_json(const Json& j, const std::string& path, Diagnostics& diag) {
  const ConditionalModel fallback(ConstantParams{Bernoulli{0.5}});
  Node n(j, path, diag);
  const std::string kind = n.string("kind", "");
  std::optional<ModelParams> params;
  if (kind == "constant") {
    const Json* d = n.object("density", true);
    if (d) params = ConstantParams{point_density_from_json(*d, n.at("density"), diag)};
  } else if (!n.has("kind")) {
    diag.add(n.at("kind"), "missing required key");
  } else {
    ClassKind k{};
    try {
      k = parse_class_kind(kind);
    } catch (const ConfigurationError& e) {
      diag.add(n.at("kind"), fmt::format("{} (or 'constant')", e.what()));
      n.finish();
      return fallback;
    }
    switch (k) {
      case ClassKind::GaussianLinear:
        n.require("w");
        params = GaussianLinearParams{n.numbers("w"), n.number("sigma", 1.0)};
        break;
      case ClassKind::PoissonLogLinear:
        n.require("w");
        params = PoissonLogLinearParams{n.numbers("w")};
        break;
      case ClassKind::GammaInverseLink:
        n.require("w");
        params = GammaInverseLinkParams{n.numbers("w"), n.number("shape", 1.0), n.number("xw", 1.0),
                                        n.number("offset", 1.0)};
        break;
      case ClassKind::BernoulliThreshold:
        params = ThresholdParams{n.number("lo", -kInf), n.number("hi", kInf), n.number("theta0", 0.5),
                                 n.number("theta1", 0.5)};
        break;
      case ClassKind::HolderBump:
        n.require("pattern");
        params = HolderBumpParams{n.number("gamma", 1.0), n.number("lambda", 0.0), n.integers("pattern")};
        break;
      case ClassKind::AppendixD: {
        appendix_d::Params p;
        p.gamma = n.number("gamma", 0.25);
        if (const Json* a = n.array("components", false)) {
          for (std::size_t i = 0; i < a->size(); ++i) {
            Node c((*a)[i], fmt::format("{}[{}]", n.at("components"), i), diag);
            appendix_d::Component comp;
            comp.weight = c.number("weight", 1.0);
            comp.lambda = c.number("lambda", 0.0);
            comp.centers = c.numbers("centers");
            comp.signs = c.integers("signs");
            c.finish();
            p.components.push_back(std::move(comp));
          }
        }
        if (diag.ok()) {
          try {
            appendix_d::validate(p);
          } catch (const Error& e) {
            diag.add(path, e.what());
          }
        }
        params = AppendixDModelParams{p};
        break;
      }
    }
  }
  n.finish();
  if (!params || !diag.ok()) return fallback;
  return guarded(path, diag, fallback, [&] { return ConditionalModel(*params); });
}

EpsilonPolicy epsilon_policy_from_json(const Json& j, const std::string& path, Diagnostics& diag) {
  EpsilonPolicy e;
  Node n(j, path, diag);
  const std::string policy = n.string("policy", "default");
  try {
    e.kind = parse_epsilon_policy(policy);
  } catch (const ConfigurationError& ex) {
    diag.add(n.at("policy"), ex.what());
  }
  if (e.kind == EpsilonPolicyKind::Fixed) {
    n.require("value");
    e.value = n.number("value", 0.0);
    if (n.has("value") && !(e.value > 0)) diag.add(n.at("value"), "fixed epsilon must be positive");
  }
  if (e.kind == EpsilonPolicyKind::Nonparametric) {
    e.p = n.number("p", e.p);
    e.c = n.number("c", e.c);
    if (!(e.p > 0)) diag.add(n.at("p"), "must be positive");
    if (!(e.c > 0)) diag.add(n.at("c"), "must be positive");
  }
  n.finish();
  return e;
}

EstimatorSpec estimator_spec_from_json(const Json& j, const std::string& path, Diagnostics& diag) {
  EstimatorSpec s;
  Node n(j, path, diag);
  if (n.has("kind")) {
    try {
      s.kind = parse_estimator_kind(n.string("kind", "minimax"));
    } catch (const ConfigurationError& e) {
      diag.add(n.at("kind"), e.what());
    }
  } else {
    n.string("kind", "");
  }
  s.label = n.string("label", "");
  if (const Json* e = n.object("epsilon", false)) s.epsilon = epsilon_policy_from_json(*e, n.at("epsilon"), diag);
  s.alpha = n.number("alpha", s.alpha);
  s.resolution = n.optional_number("resolution");
  s.resolution_factor = n.number("resolution_factor", s.resolution_factor);
  s.allow_small_epsilon = n.flag("allow_small_epsilon", s.allow_small_epsilon);
  if (s.resolution && !(*s.resolution > 0)) diag.add(n.at("resolution"), "must be positive");
  if (!(s.resolution_factor > 0)) diag.add(n.at("resolution_factor"), "must be positive");
  n.finish();
  return s;
}

LossOptions loss_options_from_json(const Json& j, const std::string& path, Diagnostics& diag) {
  LossOptions o;
  Node n(j, path, diag);
  try {
    o.method = parse_loss_method(n.string("method", "auto"));
  } catch (const ConfigurationError& e) {
    diag.add(n.at("method"), e.what());
  }
  o.draws = n.count("draws", o.draws);
  o.panels = n.count("panels", o.panels);
  o.abs_tol = n.number("abs_tol", o.abs_tol);
  if (o.draws < 2) diag.add(n.at("draws"), "must be at least 2");
  if (o.panels < 1) diag.add(n.at("panels"), "must be at least 1");
  n.finish();
  return o;
}

Overlay overlay_from_json(const Json& j, const std::string& path, Diagnostics& diag) {
  Overlay o;
  Node n(j, path, diag);
  n.require("regime");
  try {
    o.regime = parse_rate_regime(n.string("regime", "upper-parametric"));
  } catch (const ConfigurationError& e) {
    diag.add(n.at("regime"), e.what());
  }
  o.params.p = n.number("p", o.params.p);
  o.params.c = n.number("c", o.params.c);
  o.params.b = n.number("b", o.params.b);
  o.params.k = n.number("k", o.params.k);
  n.finish();
  return o;
}

// ---------------------------------------------------------------------------
// Writing

Json to_json(const PointDensity& p) {
  return std::visit([](const auto& d) { return family_json(Family(d)); }, p);
}

Json to_json(const ResponseDensity& d) {
  if (!d.is_mixture()) return family_json(d.family());
  Json parts = Json::array();
  for (const auto& c : d.components()) parts.push_back({{"weight", c.weight}, {"density", family_json(c.family)}});
  return {{"mixture", parts}};
}

Json to_json(const ReferenceMeasure& nu) {
  const Family& f = nu.normalized().family();
  switch (nu.kind()) {
    case ReferenceMeasure::Kind::Counting: {
      std::vector<double> atoms;
      if (std::holds_alternative<Bernoulli>(f)) {
        atoms = {0.0, 1.0};
      } else if (const auto* m = std::get_if<Multinomial>(&f)) {
        for (std::size_t i = 0; i < m->probs.size(); ++i) atoms.push_back(static_cast<double>(i));
      } else if (const auto* t = std::get_if<Tabulated>(&f)) {
        atoms = t->grid;
      }
      return {{"kind", "counting"},
              {"atoms", atoms},
              {"atom_weight", nu.total_mass() / static_cast<double>(atoms.size())}};
    }
    case ReferenceMeasure::Kind::Lebesgue: {
      const auto& t = std::get<Tabulated>(f);
      return {{"kind", "lebesgue"}, {"lo", t.grid.front()}, {"hi", t.grid.back()}};
    }
    case ReferenceMeasure::Kind::HeavyTail:
      return {{"kind", "heavy-tailed"}, {"shape", family_json(f)}, {"total_mass", nu.total_mass()}};
  }
  return {};
}

Json to_json(const CovariateDistribution& mu) {
  switch (mu.kind()) {
    case CovariateDistribution::Kind::UniformInterval:
      return {{"kind", "uniform-interval"}, {"lo", mu.lo()}, {"hi", mu.hi()}};
    case CovariateDistribution::Kind::Normal:
      return {{"kind", "normal"}, {"mean", mu.lo()}, {"stddev", mu.hi()}};
    case CovariateDistribution::Kind::UniformBall:
      return {{"kind", "uniform-ball"}, {"dim", mu.dim()}, {"radius", mu.hi()}};
    case CovariateDistribution::Kind::UniformFinite:
    case CovariateDistribution::Kind::WeightedGrid: {
      Json atoms = Json::array();
      const auto& a = mu.atoms();
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (a.dim == 1)
          atoms.push_back(a[i][0]);
        else
          atoms.push_back(std::vector<double>(a[i].begin(), a[i].end()));
      }
      return {{"kind", "weighted-grid"}, {"atoms", atoms}, {"weights", mu.weights()}};
    }
  }
  return {};
}

Json to_json(const ClassSpec& s) {
  Json j{{"kind", class_name(s.kind)}};
  switch (s.kind) {
    case ClassKind::GaussianLinear:
    case ClassKind::PoissonLogLinear:
    case ClassKind::GammaInverseLink:
      j["dim"] = s.dim;
      j["x_bound"] = s.x_bound;
      j["w_bound"] = s.w_bound;
      if (s.grid_step) j["grid_step"] = *s.grid_step;
      if (s.kind == ClassKind::GaussianLinear) j["sigma"] = s.sigma;
      if (s.kind == ClassKind::GammaInverseLink) {
        j["shape"] = s.shape;
        j["gamma_offset"] = s.gamma_offset;
      }
      break;
    case ClassKind::BernoulliThreshold:
      j["shape"] = threshold_shape_name(s.threshold_shape);
      if (!s.theta_grid.empty()) j["theta_grid"] = s.theta_grid;
      j["theta_step"] = s.theta_step;
      break;
    case ClassKind::HolderBump:
      j["gamma"] = s.holder_gamma;
      j["cells"] = s.cells;
      j["lambda_max"] = s.lambda_max;
      if (!s.lambda_grid.empty()) j["lambda_grid"] = s.lambda_grid;
      j["scheme"] = holder_scheme_name(s.holder_scheme);
      j["grid_shift"] = s.grid_shift;
      break;
    case ClassKind::AppendixD:
      j["gamma"] = s.appendix_gamma;
      j["lambda_denominator"] = s.lambda_denominator;
      break;
  }
  j["max_pool"] = s.max_pool;
  return j;
}

Json to_json(const ConditionalModel& model) {
  return std::visit(
      [](const auto& p) -> Json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, GaussianLinearParams>) {
          return {{"kind", class_name(ClassKind::GaussianLinear)}, {"w", p.w}, {"sigma", p.sigma}};
        } else if constexpr (std::is_same_v<T, PoissonLogLinearParams>) {
          return {{"kind", class_name(ClassKind::PoissonLogLinear)}, {"w", p.w}};
        } else if constexpr (std::is_same_v<T, GammaInverseLinkParams>) {
          return {{"kind", class_name(ClassKind::GammaInverseLink)},
                  {"w", p.w},
                  {"shape", p.shape},
                  {"xw", p.xw},
                  {"offset", p.offset}};
        } else if constexpr (std::is_same_v<T, ThresholdParams>) {
          return {{"kind", class_name(ClassKind::BernoulliThreshold)},
                  {"lo", number_json(p.lo)},
                  {"hi", number_json(p.hi)},
                  {"theta0", p.theta0},
                  {"theta1", p.theta1}};
        } else if constexpr (std::is_same_v<T, HolderBumpParams>) {
          return {{"kind", class_name(ClassKind::HolderBump)},
                  {"gamma", p.gamma},
                  {"lambda", p.lambda},
                  {"pattern", p.pattern}};
        } else if constexpr (std::is_same_v<T, AppendixDModelParams>) {
          Json comps = Json::array();
          for (const auto& c : p.p.components)
            comps.push_back({{"weight", c.weight}, {"lambda", c.lambda}, {"centers", c.centers}, {"signs", c.signs}});
          return {{"kind", class_name(ClassKind::AppendixD)}, {"gamma", p.p.gamma}, {"components", comps}};
        } else {
          return {{"kind", "constant"}, {"density", to_json(p.density)}};
        }
      },
      model.params());
}

Json to_json(const EpsilonPolicy& e) {
  Json j{{"policy", epsilon_policy_name(e.kind)}};
  if (e.kind == EpsilonPolicyKind::Fixed) j["value"] = e.value;
  if (e.kind == EpsilonPolicyKind::Nonparametric) {
    j["p"] = e.p;
    j["c"] = e.c;
  }
  return j;
}

Json to_json(const EstimatorSpec& s) {
  Json j{{"kind", estimator_kind_name(s.kind)}};
  if (!s.label.empty()) j["label"] = s.label;
  j["epsilon"] = to_json(s.epsilon);
  j["alpha"] = s.alpha;
  if (s.resolution) j["resolution"] = *s.resolution;
  j["resolution_factor"] = s.resolution_factor;
  j["allow_small_epsilon"] = s.allow_small_epsilon;
  return j;
}

Json to_json(const LossOptions& o) {
  return {{"method", loss_method_name(o.method)}, {"draws", o.draws}, {"panels", o.panels}, {"abs_tol", o.abs_tol}};
}

Json to_json(const Overlay& o) {
  return {{"regime", rate_regime_name(o.regime)},
          {"p", o.params.p},
          {"c", o.params.c},
          {"b", o.params.b},
          {"k", o.params.k}};
}

Json predictor_json(const Predictor& p) {
  if (const auto* m = dynamic_cast<const MixturePredictor*>(&p)) {
    Json blocks = Json::array();
    for (const auto& b : m->blocks()) {
      Json members = Json::array();
      for (const auto& g : b.members) members.push_back(to_json(g));
      blocks.push_back({{"lo", number_json(b.lo)},
                        {"hi", number_json(b.hi)},
                        {"closed_right", b.closed_right},
                        {"members", members},
                        {"weights", b.weights}});
    }
    return {{"type", "mixture"}, {"alpha", m->alpha()}, {"reference", to_json(m->reference())}, {"blocks", blocks}};
  }
  if (const auto* c = dynamic_cast<const CompositePredictor*>(&p)) {
    Json parts = Json::array();
    for (const auto& q : c->parts()) parts.push_back(predictor_json(*q));
    return {{"type", "composite"}, {"weights", c->weights()}, {"parts", parts}};
  }
  if (const auto* r = dynamic_cast<const ReferencePredictor*>(&p)) {
    return {{"type", "reference"}, {"description", r->describe()}};
  }
  return {{"type", "opaque"}, {"description", p.describe()}};
}

Json estimator_json(const FittedEstimator& est) {
  Json blocks = Json::array();
  for (const auto& b : est.blocks)
    blocks.push_back({{"cover", b.cover.members},
                      {"certificate", b.cover.certificate},
                      {"cesaro_weights", b.cesaro},
                      {"final_log_weights", numbers_json(b.final_log_weights)}});
  return {{"epsilon", est.epsilon},
          {"alpha", est.alpha},
          {"rounds", est.n},
          {"scheme", est.scheme},
          {"cover_size", est.cover_size()},
          {"sequential_log_likelihood", est.sequential_log_likelihood},
          {"blocks", blocks},
          {"predictor", predictor_json(*est.predictor)}};
}

// ---------------------------------------------------------------------------
// Summaries

Json interval_json(const Interval& ci) {
  return {{"mean", number_json(ci.mean)}, {"ci_halfwidth", number_json(ci.halfwidth)}};
}

Json rate_fit_json(const RateFit& fit) {
  Json j{{"slope", number_json(fit.slope)}, {"intercept", number_json(fit.intercept)}};
  j["n"] = fit.n;
  j["risks"] = numbers_json(fit.risks);
  j["first_used_n"] = fit.n.empty() || fit.residuals.empty() ? Json() : Json(fit.n[fit.first_used]);
  j["residuals"] = numbers_json(fit.residuals);
  j["warnings"] = fit.warnings;
  return j;
}

Json sweep_summary(const SweepResult& r, const std::string& experiment) {
  Json j;
  j["experiment_id"] = r.experiment_id;
  j["experiment"] = experiment;
  j["class"] = r.class_name;
  j["seed"] = r.seed;
  j["replications"] = r.replications;
  j["n_grid"] = r.n_grid;
  Json ests = Json::object();
  for (const auto& rep : r.reports) {
    Json& e = ests[rep.estimator];
    if (e.is_null()) e = {{"reports", Json::array()}, {"slopes", Json::object()}};
    e["reports"].push_back({{"n", rep.n},
                            {"replications", rep.replications},
                            {"kl", interval_json(rep.kl)},
                            {"hellinger", interval_json(rep.hellinger)},
                            {"regret", interval_json(rep.regret)},
                            {"lambda_bar", interval_json(rep.lambda_bar)},
                            {"failures", rep.failures},
                            {"infinite", rep.infinite}});
  }
  for (auto& [name, e] : ests.items()) {
    auto put = [&](const char* key, const std::map<std::string, RateFit>& fits) {
      auto it = fits.find(name);
      e["slopes"][key] = it == fits.end() ? Json() : rate_fit_json(it->second);
    };
    put("kl", r.kl_fits);
    put("hellinger", r.hellinger_fits);
    put("regret", r.regret_fits);
  }
  j["estimators"] = ests;
  Json overlays = Json::array();
  for (const auto& o : r.overlays) {
    Json v = to_json(o);
    Json values = Json::array();
    for (auto n : r.n_grid) {
      try {
        values.push_back(number_json(theoretical_rate(o.regime, o.params, static_cast<double>(n))));
      } catch (const DomainError&) {
        values.push_back(nullptr);
      }
    }
    v["n"] = r.n_grid;
    v["values"] = values;
    overlays.push_back(v);
  }
  j["overlays"] = overlays;
  return j;
}

Json profile_summary(const EntropyProfile& profile) {
  Json pts = Json::array();
  for (const auto& p : profile.points)
    pts.push_back({{"epsilon", p.epsilon},
                   {"log_cover", number_json(p.log_cover)},
                   {"log_pack", number_json(p.log_pack)},
                   {"log_local_pack", number_json(p.log_local_pack)}});
  Json j{{"n", profile.n}, {"points", pts}};
  try {
    j["critical_radius"] = critical_radius(profile, static_cast<double>(profile.n));
  } catch (const DomainError& e) {
    j["critical_radius"] = nullptr;
    j["critical_radius_error"] = e.what();
  }
  return j;
}

}  // namespace cdekit
