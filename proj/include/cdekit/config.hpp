#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cdekit/entropy.hpp"
#include "cdekit/harness.hpp"
#include "cdekit/serialize.hpp"

namespace cdekit {

enum class ExperimentKind { Divergence, Entropy, Fit, RiskSweep, RegretSweep, MleGap, Adaptive };

std::string experiment_kind_name(ExperimentKind k);
ExperimentKind parse_experiment_kind(const std::string& name);  // throws ConfigurationError
const std::vector<ExperimentKind>& experiment_kinds();

struct OutputPaths {
  std::string csv;      // empty: <id>.csv (experiments that write one)
  std::string summary;  // empty: <id>.summary.json; divergence prints to stdout
};

struct DivergenceConfig {
  ResponseDensity p{Bernoulli{0.5}};
  ResponseDensity q{Bernoulli{0.5}};
  ReferenceMeasure reference = ReferenceMeasure::binary();
  DivergenceOptions options;
};

struct EntropyConfig {
  ClassSpec cls;
  CovariateDistribution covariates = CovariateDistribution::uniform_interval(-1.0, 1.0);
  std::size_t n = 0;
  std::size_t samples = 4;  // covariate configurations maximized over
  std::vector<double> eps_grid;
  double resolution = 0.0;  // 0: half the smallest grid value
  ProfileOptions options;
};

struct FitConfig {
  ClassSpec cls;
  ConditionalModel truth{ConstantParams{Bernoulli{0.5}}};
  CovariateDistribution covariates = CovariateDistribution::uniform_interval(-1.0, 1.0);
  EstimatorSpec estimator;
  std::size_t n = 0;
  LossOptions loss;
};

// One experiment, validated. Exactly the member matching `kind` is set.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::RiskSweep;
  std::string id;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
  OutputPaths output;
  std::optional<DivergenceConfig> divergence;
  std::optional<EntropyConfig> entropy;
  std::optional<FitConfig> fit;
  std::optional<SweepSpec> sweep;  // risk-sweep and regret-sweep
  std::optional<MleGapSpec> mle_gap;
  std::optional<AdaptiveSpec> adaptive;
  Json document;  // as read, after overrides
};

// JSON or TOML by extension (.json, .toml); throws ConfigurationError.
Json load_document(const std::string& path);

// Reads every field, collecting all diagnostics (paths like estimators[1].epsilon.value).
ExperimentConfig parse_config(const Json& doc, Diagnostics& diag);
// Throws ConfigurationError listing the diagnostics.
ExperimentConfig parse_config(const Json& doc);
// Never runs anything.
std::vector<std::string> validate_config(const Json& doc);

}  // namespace cdekit
