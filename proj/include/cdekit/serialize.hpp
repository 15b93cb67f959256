#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "cdekit/entropy.hpp"
#include "cdekit/harness.hpp"

namespace cdekit {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Strict reading with field paths

struct Diagnostics {
  std::vector<std::string> errors;

  void add(const std::string& path, const std::string& message);
  bool ok() const { return errors.empty(); }
  // Throws ConfigurationError listing every diagnostic.
  void raise() const;
};

// A view of one JSON object. Accessors record the keys they read; finish()
// reports the rest as unknown. Type errors are recorded and the default returned.
class Node {
 public:
  Node(const Json& value, std::string path, Diagnostics& diag);

  const std::string& path() const { return path_; }
  const Json& value() const { return *value_; }
  bool has(const std::string& key) const;
  std::string at(const std::string& key) const;  // path of a child

  double number(const std::string& key, double fallback);
  std::optional<double> optional_number(const std::string& key);
  std::size_t count(const std::string& key, std::size_t fallback);
  std::optional<std::uint64_t> optional_u64(const std::string& key);
  bool flag(const std::string& key, bool fallback);
  std::string string(const std::string& key, const std::string& fallback);
  std::vector<double> numbers(const std::string& key);
  std::vector<std::size_t> counts(const std::string& key);
  std::vector<int> integers(const std::string& key);

  // Child object or array; nullptr (with a diagnostic when required) if absent or mistyped.
  const Json* object(const std::string& key, bool required);
  const Json* array(const std::string& key, bool required);

  void require(const std::string& key);
  void finish();

 private:
  const Json* get(const std::string& key);

  const Json* value_;
  std::string path_;
  Diagnostics* diag_;
  std::set<std::string> seen_;
};

// Numbers, or the strings "inf" / "-inf" / "nan".
double json_number(const Json& v, const std::string& path, Diagnostics& diag);
Json number_json(double v);  // non-finite values as strings

// ---------------------------------------------------------------------------
// Domain objects

PointDensity point_density_from_json(const Json& j, const std::string& path, Diagnostics& diag);
ResponseDensity density_from_json(const Json& j, const std::string& path, Diagnostics& diag);
ReferenceMeasure reference_from_json(const Json& j, const std::string& path, Diagnostics& diag);
CovariateDistribution covariates_from_json(const Json& j, const std::string& path, Diagnostics& diag);
ClassSpec class_spec_from_json(const Json& j, const std::string& path, Diagnostics& diag);
ConditionalModel model_from_json(const Json& j, const std::string& path, Diagnostics& diag);
EpsilonPolicy epsilon_policy_from_json(const Json& j, const std::string& path, Diagnostics& diag);
EstimatorSpec estimator_spec_from_json(const Json& j, const std::string& path, Diagnostics& diag);
LossOptions loss_options_from_json(const Json& j, const std::string& path, Diagnostics& diag);
Overlay overlay_from_json(const Json& j, const std::string& path, Diagnostics& diag);

Json to_json(const PointDensity& p);
Json to_json(const ResponseDensity& d);
Json to_json(const ReferenceMeasure& nu);
Json to_json(const CovariateDistribution& mu);
Json to_json(const ClassSpec& spec);
Json to_json(const ConditionalModel& model);
Json to_json(const EpsilonPolicy& policy);
Json to_json(const EstimatorSpec& spec);
Json to_json(const LossOptions& opt);
Json to_json(const Overlay& overlay);

// Mixture blocks (members, weights), alpha and the reference measure.
Json predictor_json(const Predictor& p);
// Scale, alpha, per-block cover (pool indices, certificate), Cesaro weights and the predictor.
Json estimator_json(const FittedEstimator& est);

// ---------------------------------------------------------------------------
// Summaries

Json interval_json(const Interval& ci);
Json rate_fit_json(const RateFit& fit);
// Per-estimator reports and slopes, overlays evaluated on the n grid.
Json sweep_summary(const SweepResult& result, const std::string& experiment);
Json profile_summary(const EntropyProfile& profile);

}  // namespace cdekit
