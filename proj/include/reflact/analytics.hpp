#pragma once

// Diagnostics over stored trajectories: entropy, invalid-action rate, token
// and step counts, success/reward aggregates, discounted return, failure
// overlap between agents, and the thought-injection probe.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "reflact/runner.hpp"

namespace reflact::analytics {

using backbones::BackboneKind;
using gateway::ActionDistribution;
using runner::Trajectory;

// Natural-log Shannon entropy. Throws NotNormalized (Error{invalid_argument}).
double entropy(const ActionDistribution& dist);

// 0 <= H <= ln N, with a 1e-12 tolerance.
bool entropy_in_bounds(const ActionDistribution& dist);

// Errors below are Error{invalid_argument} with the named prefix.

// Mean over every recorded distribution of the kind. NoDistributions.
double mean_entropy(const std::vector<Trajectory>& trajs, BackboneKind kind);

// Steps whose observation is the canonical invalid string. EmptyResultSet.
double hallucination_rate(const std::vector<Trajectory>& trajs, BackboneKind kind);

struct TokensPerStep {
  double value = 0.0;
  // Some step had no provider usage and was counted by whitespace tokens.
  bool approximate = false;
};

// EmptyResultSet.
TokensPerStep tokens_per_step(const std::vector<Trajectory>& trajs, BackboneKind kind);

// EmptyResultSet.
double steps_per_episode(const std::vector<Trajectory>& trajs, BackboneKind kind);

struct Aggregate {
  int episodes = 0;
  int successes = 0;
  double success_rate = 0.0;
  double average_reward = 0.0;
};

// Success is recomputed from final progress against the task's threshold.
// EmptyResultSet.
Aggregate aggregate(const std::vector<Trajectory>& trajs, BackboneKind kind);

// Per-step progress deltas, starting from zero progress.
std::vector<double> step_rewards(const Trajectory& traj);
double discounted_return(const std::vector<double>& rewards, double gamma);
double discounted_return(const Trajectory& traj, double gamma);

struct FailureSet {
  std::set<std::string> universe;
  std::set<std::string> failed;
};

FailureSet failure_set(const std::vector<Trajectory>& trajs, BackboneKind kind);

struct OverlapCategory {
  // Agents that failed, in the order of OverlapReport::names. Empty means
  // every agent succeeded.
  std::vector<std::string> failed_by;
  std::set<std::string> task_ids;

  std::string label() const;
};

struct OverlapReport {
  std::vector<std::string> names;
  // All 2^n subsets: by size, then by agent order.
  std::vector<OverlapCategory> categories;

  const OverlapCategory* find(const std::vector<std::string>& failed_by) const;
};

// Throws UniverseMismatch when the sets do not cover the same task ids.
OverlapReport failure_overlap(const std::vector<std::pair<std::string, FailureSet>>& named);

// One distribution per variant. Each non-empty variant is appended to the
// context as an assistant message before scoring; the empty variant scores
// the context as is.
std::vector<ActionDistribution> probe_thought_influence(const backbones::Context& ctx, BackboneKind kind,
                                                        const std::vector<std::string>& thought_variants,
                                                        gateway::Backend& backend,
                                                        const std::vector<std::string>& candidates);

struct KindMetrics {
  BackboneKind kind = BackboneKind::reflact;
  Aggregate aggregate;
  std::optional<double> mean_entropy;
  double hallucination_rate = 0.0;
  TokensPerStep tokens_per_step;
  double steps_per_episode = 0.0;
};

struct MetricsReport {
  std::string config_hash;
  std::vector<KindMetrics> kinds;
};

// One entry per kind present, in catalog order.
MetricsReport compute_metrics(const std::vector<Trajectory>& trajs, const std::string& config_hash);

struct ReportOptions {
  bool reference_anchors = true;
};

std::string metrics_csv(const MetricsReport& metrics);
std::string overlap_csv(const std::optional<OverlapReport>& overlap);
std::string report_markdown(const MetricsReport& metrics, const std::optional<OverlapReport>& overlap,
                            const ReportOptions& options = {});

// Writes metrics.csv, overlap.csv and report.md into dir. Throws IoError.
void write_report(const std::filesystem::path& dir, const MetricsReport& metrics,
                  const std::optional<OverlapReport>& overlap, const ReportOptions& options = {});

}  // namespace reflact::analytics
