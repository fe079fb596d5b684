#pragma once

#include <string>

#include "json.hpp"

#include "quasitest/procedures.hpp"

namespace quasitest {

/// Stable report schema: method, statistic, statistic_value, p_value, B, seed, diagnostics.
inline nlohmann::ordered_json to_json(const TestReport& r) {
  nlohmann::ordered_json d;
  const auto& g = r.diagnostics;
  d["centers_used"] = g.centers_used;
  if (g.mcmc_acceptance_rate) d["mcmc_acceptance_rate"] = *g.mcmc_acceptance_rate;
  if (g.is_weight_cv) d["is_weight_cv"] = *g.is_weight_cv;
  if (g.marginal_iterations) d["marginal_iterations"] = *g.marginal_iterations;
  if (g.marginal_converged) d["marginal_converged"] = *g.marginal_converged;
  if (g.pair_prob_margin_error) d["pair_prob_margin_error"] = *g.pair_prob_margin_error;
  if (g.dead_ends) d["dead_ends"] = *g.dead_ends;
  if (g.clamp_events) d["clamp_events"] = *g.clamp_events;
  if (g.uncensored_n) d["uncensored_n"] = *g.uncensored_n;
  if (g.censoring_tail_extrapolated) d["censoring_tail_extrapolated"] = *g.censoring_tail_extrapolated;
  if (g.replicates_failed) d["replicates_failed"] = g.replicates_failed;
  if (!g.expected_counts.empty()) d["expected_counts"] = g.expected_counts;
  d["warnings"] = g.warnings;

  nlohmann::ordered_json j;
  j["method"] = r.method;
  j["statistic"] = to_string(r.statistic.kind);
  j["statistic_value"] = r.statistic.value;
  j["p_value"] = r.p_value;
  j["B"] = r.B;
  j["seed"] = r.seed;
  j["diagnostics"] = std::move(d);
  return j;
}

}  // namespace quasitest
