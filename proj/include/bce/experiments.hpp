#pragma once

// End-to-end experiments driven by JSON configs. Each one writes its CSV,
// checkpoint and summary artifacts into an output directory and returns the
// summary. A single top-level seed drives every random choice; nested
// training seeds are derived from it and show up in the effective config.

#include "bce/evaluation.hpp"

#include <filesystem>

namespace bce {

/// Experiment kinds: "snr", "covariance", "linear-reg", "averaging",
/// "linear-sanity".
std::vector<std::string> experiment_kinds();

/// Default config of an experiment kind, including "experiment" and "seed".
Json default_experiment_config(const std::string& kind);

/// Overlays `user` on the defaults of its kind. Unknown keys are rejected,
/// except inside free-form objects (learning-rate schedules). Returns the
/// effective config.
Json resolve_experiment_config(const Json& user);

struct ExperimentResult {
  Json summary;
  std::vector<std::string> artifacts;  // file names inside the output directory
};

/// Runs a resolved (or resolvable) config. Writes effective_config.json,
/// summary.json and the experiment's CSVs into `out_dir`.
ExperimentResult run_experiment(const Json& config, const std::filesystem::path& out_dir);

/// Least-squares projection of vech(C0) onto the covariance parameterization,
/// clamped to [0, 1]. Baseline for the covariance network.
Estimator cov_projection_estimator();

/// Random n x d matrix with singular values uniform in [lo, hi].
Mat well_conditioned_matrix(Rng& rng, int n, int d, double lo, double hi);

/// Checks `user` against the keys of `defaults` (recursively, except inside
/// keys listed in `free_form`) and overlays it. Unknown keys throw
/// InvalidArgument.
Json merge_config(const Json& defaults, const Json& user, const std::vector<std::string>& free_form = {"schedule"});

/// Parses JSON that may contain // line comments and /* block */ comments.
Json parse_json_with_comments(const std::string& text);

/// Applies "a.b.c=value" to a JSON object. The value is parsed as JSON when
/// possible and kept as a string otherwise.
void apply_override(Json& config, const std::string& assignment);

}  // namespace bce
