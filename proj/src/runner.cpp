#include "cdekit/runner.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>

#include <fmt/format.h>

#include "cdekit/error.hpp"

namespace cdekit {

namespace fs = std::filesystem;

fs::path resolve_output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("CDEKIT_OUTPUT_DIR"); env && *env) return env;
  return fs::current_path();
}

void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write '{}'", tmp.string()));
    out << content;
    out.flush();
    if (!out) throw Error(fmt::format("write to '{}' failed", tmp.string()));
  }
  fs::rename(tmp, path);
}

namespace {

std::string divergence_method_name(DivergenceMethod m) {
  return m == DivergenceMethod::ClosedForm ? "closed-form" : "quadrature";
}

Json value_json(const DivergenceValue& v) {
  return {{"value", number_json(v.value)}, {"method", divergence_method_name(v.method)}};
}

Json loss_json(const LossValue& v) {
  return {{"value", number_json(v.value)},
          {"std_error", number_json(v.std_error)},
          {"infinite", v.infinite},
          {"method", loss_method_name(v.method)}};
}

ProgressFn progress_printer(const std::string& id, bool enabled) {
  if (!enabled) return {};
  auto mu = std::make_shared<std::mutex>();
  auto last = std::make_shared<int>(-1);
  return [id, mu, last](std::size_t done, std::size_t total) {
    const int pct = total ? static_cast<int>(100 * done / total) : 100;
    std::lock_guard lock(*mu);
    if (pct == *last) return;
    *last = pct;
    std::fprintf(stderr, "%s: %zu/%zu (%d%%)\n", id.c_str(), done, total, pct);
  };
}

struct Paths {
  fs::path csv;
  fs::path summary;
};

Paths output_paths(const ExperimentConfig& cfg, const fs::path& dir) {
  auto place = [&](const std::string& given, const std::string& fallback) {
    fs::path p = given.empty() ? fs::path(fallback) : fs::path(given);
    return p.is_absolute() ? p : dir / p;
  };
  return {place(cfg.output.csv, cfg.id + ".csv"), place(cfg.output.summary, cfg.id + ".summary.json")};
}

Json header(const ExperimentConfig& cfg) {
  Json j;
  j["experiment_id"] = cfg.id;
  j["experiment"] = experiment_kind_name(cfg.kind);
  if (cfg.seed) j["seed"] = *cfg.seed;
  return j;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

void finish_summary(Json& summary, const ExperimentConfig& cfg, const fs::path* csv) {
  if (csv) summary["csv"] = csv->filename().string();
  summary["config"] = cfg.document;
}

void run_entropy(const ExperimentConfig& cfg, const Paths& paths, RunResult& res) {
  const EntropyConfig& e = *cfg.entropy;
  Rng rng(replication_seed(*cfg.seed, 0));
  std::vector<Covariates> samples;
  for (std::size_t k = 0; k < e.samples; ++k) samples.push_back(sample_covariates(e.covariates, e.n, rng));
  double resolution = e.resolution;
  if (!(resolution > 0)) {
    resolution = e.eps_grid.front();
    for (double v : e.eps_grid) resolution = std::min(resolution, v);
    resolution /= 2;
  }
  const EntropyProfile profile = entropy_profile(e.cls, samples, e.eps_grid, resolution, e.options);
  std::ostringstream csv;
  write_profile_csv(profile, csv);
  write_atomic(paths.csv, csv.str());
  Json summary = header(cfg);
  summary["class"] = class_name(e.cls.kind);
  summary["samples"] = e.samples;
  summary["resolution"] = resolution;
  summary["profile"] = profile_summary(profile);
  finish_summary(summary, cfg, &paths.csv);
  write_atomic(paths.summary, dump(summary));
  res.files = {paths.csv, paths.summary};
}

void run_fit(const ExperimentConfig& cfg, const Paths& paths, RunResult& res) {
  const FitConfig& f = *cfg.fit;
  const Sample sample = draw_parts(f.truth, f.covariates, {f.n / 2, f.n - f.n / 2}, *cfg.seed);
  const FitOutcome fit = fit_estimator(f.cls, f.estimator, sample);
  Rng lrng(replication_seed(*cfg.seed, 1));
  const Losses l = losses(f.truth, *fit.predictor, f.covariates, f.cls.reference(), lrng, f.loss);
  Json summary = header(cfg);
  summary["class"] = class_name(f.cls.kind);
  summary["estimator"] = estimator_kind_name(f.estimator.kind);
  summary["n"] = f.n;
  summary["epsilon"] = number_json(fit.epsilon);
  summary["cover_size"] = fit.cover_size;
  summary["lambda_bar"] = number_json(fit.lambda_bar);
  summary["losses"] = {{"kl", loss_json(l.kl)}, {"hellinger", loss_json(l.hellinger)}};
  summary["fit"] = fit.minimax ? estimator_json(*fit.minimax) : predictor_json(*fit.predictor);
  finish_summary(summary, cfg, nullptr);
  write_atomic(paths.summary, dump(summary));
  res.files = {paths.summary};
}

void write_sweep(const ExperimentConfig& cfg, const SweepResult& result, const Paths& paths, RunResult& res) {
  std::ostringstream csv;
  write_risk_csv(result.records, csv);
  write_atomic(paths.csv, csv.str());
  Json summary = sweep_summary(result, experiment_kind_name(cfg.kind));
  finish_summary(summary, cfg, &paths.csv);
  write_atomic(paths.summary, dump(summary));
  res.files = {paths.csv, paths.summary};
}

}  // namespace

Json divergence_report(const DivergenceConfig& d) {
  Json j;
  j["hellinger_sq"] = value_json(hellinger_sq(d.p, d.q, d.reference, d.options));
  j["kl"] = value_json(kl(d.p, d.q, d.reference, d.options));
  j["l1"] = value_json(l1_distance(d.p, d.q, d.reference, d.options));
  j["sup_log_ratio"] = number_json(sup_log_ratio(d.p, d.q, d.reference));
  j["yang_kl_bound"] = number_json(yang_kl_bound(d.p, d.q, d.reference));
  return j;
}

RunResult run_experiment(ExperimentConfig cfg, const RunOptions& opt) {
  const auto start = std::chrono::steady_clock::now();
  RunResult res;
  const Paths paths = output_paths(cfg, opt.out_dir);
  const ProgressFn progress = progress_printer(cfg.id, opt.progress);
  switch (cfg.kind) {
    case ExperimentKind::Divergence: {
      Json report = header(cfg);
      report.update(divergence_report(*cfg.divergence));
      if (cfg.output.summary.empty()) {
        std::ostream& out = opt.out ? *opt.out : std::cout;
        out << dump(report);
      } else {
        write_atomic(paths.summary, dump(report));
        res.files = {paths.summary};
      }
      break;
    }
    case ExperimentKind::Entropy: run_entropy(cfg, paths, res); break;
    case ExperimentKind::Fit: run_fit(cfg, paths, res); break;
    case ExperimentKind::RiskSweep:
    case ExperimentKind::RegretSweep: {
      SweepSpec spec = *cfg.sweep;
      spec.progress = progress;
      const SweepResult r = cfg.kind == ExperimentKind::RiskSweep ? risk_sweep(spec) : regret_sweep(spec);
      write_sweep(cfg, r, paths, res);
      break;
    }
    case ExperimentKind::MleGap: {
      MleGapSpec spec = *cfg.mle_gap;
      spec.progress = progress;
      write_sweep(cfg, mle_gap_experiment(spec), paths, res);
      break;
    }
    case ExperimentKind::Adaptive: {
      AdaptiveSpec spec = *cfg.adaptive;
      spec.progress = progress;
      write_sweep(cfg, adaptive_experiment(spec), paths, res);
      break;
    }
  }
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

}  // namespace cdekit
