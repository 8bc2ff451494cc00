#include "reflact/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "reflact/error.hpp"

namespace reflact::analytics {

namespace {

std::vector<const Trajectory*> of_kind(const std::vector<Trajectory>& trajs, BackboneKind kind) {
  std::vector<const Trajectory*> out;
  for (const auto& t : trajs) {
    if (t.backbone.kind == kind) out.push_back(&t);
  }
  if (out.empty()) {
    throw Error(ErrorCode::invalid_argument,
                "EmptyResultSet: no trajectories for " + std::string(backbones::to_string(kind)));
  }
  return out;
}

std::size_t whitespace_tokens(const std::string& text) {
  std::istringstream in(text);
  std::string word;
  std::size_t n = 0;
  while (in >> word) ++n;
  return n;
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string join(const std::vector<std::string>& items, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

const KindMetrics* metrics_for(const MetricsReport& m, BackboneKind kind) {
  for (const auto& k : m.kinds) {
    if (k.kind == kind) return &k;
  }
  return nullptr;
}

}  // namespace

double entropy(const ActionDistribution& dist) {
  dist.validate();
  double h = 0.0;
  for (const auto& e : dist.entries) {
    if (e.probability > 0.0) h -= e.probability * std::log(e.probability);
  }
  return h;
}

bool entropy_in_bounds(const ActionDistribution& dist) {
  const double h = entropy(dist);
  return h >= -1e-12 && h <= std::log(static_cast<double>(dist.entries.size())) + 1e-12;
}

double mean_entropy(const std::vector<Trajectory>& trajs, BackboneKind kind) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& t : trajs) {
    if (t.backbone.kind != kind) continue;
    for (const auto& s : t.steps) {
      if (!s.distribution) continue;
      sum += entropy(*s.distribution);
      ++n;
    }
  }
  if (n == 0) {
    throw Error(ErrorCode::invalid_argument,
                "NoDistributions: no recorded distributions for " + std::string(backbones::to_string(kind)));
  }
  return sum / static_cast<double>(n);
}

double hallucination_rate(const std::vector<Trajectory>& trajs, BackboneKind kind) {
  std::size_t steps = 0;
  std::size_t invalid = 0;
  for (const auto* t : of_kind(trajs, kind)) {
    for (const auto& s : t->steps) {
      ++steps;
      if (s.nothing_happened) ++invalid;
    }
  }
  return steps == 0 ? 0.0 : static_cast<double>(invalid) / static_cast<double>(steps);
}

TokensPerStep tokens_per_step(const std::vector<Trajectory>& trajs, BackboneKind kind) {
  TokensPerStep out;
  double tokens = 0.0;
  std::size_t steps = 0;
  for (const auto* t : of_kind(trajs, kind)) {
    for (const auto& s : t->steps) {
      ++steps;
      if (s.usage) {
        tokens += s.usage->completion_tokens;
      } else {
        out.approximate = true;
        for (const auto& c : s.completions) tokens += static_cast<double>(whitespace_tokens(c.text));
      }
    }
  }
  out.value = steps == 0 ? 0.0 : tokens / static_cast<double>(steps);
  return out;
}

double steps_per_episode(const std::vector<Trajectory>& trajs, BackboneKind kind) {
  const auto ts = of_kind(trajs, kind);
  double total = 0.0;
  for (const auto* t : ts) total += static_cast<double>(t->steps.size());
  return total / static_cast<double>(ts.size());
}

Aggregate aggregate(const std::vector<Trajectory>& trajs, BackboneKind kind) {
  Aggregate a;
  double reward = 0.0;
  for (const auto* t : of_kind(trajs, kind)) {
    ++a.episodes;
    if (world::meets_threshold(t->final_progress, t->task.goal.success_threshold)) ++a.successes;
    reward += t->final_progress;
  }
  a.success_rate = static_cast<double>(a.successes) / a.episodes;
  a.average_reward = reward / a.episodes;
  return a;
}

std::vector<double> step_rewards(const Trajectory& traj) {
  std::vector<double> out;
  double prev = 0.0;
  for (const auto& s : traj.steps) {
    out.push_back(s.progress - prev);
    prev = s.progress;
  }
  return out;
}

double discounted_return(const std::vector<double>& rewards, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error(ErrorCode::invalid_argument, "gamma must be in [0, 1]");
  double g = 0.0;
  double w = 1.0;
  for (double r : rewards) {
    g += w * r;
    w *= gamma;
  }
  return g;
}

double discounted_return(const Trajectory& traj, double gamma) { return discounted_return(step_rewards(traj), gamma); }

FailureSet failure_set(const std::vector<Trajectory>& trajs, BackboneKind kind) {
  FailureSet out;
  for (const auto* t : of_kind(trajs, kind)) {
    out.universe.insert(t->task.task_id);
    if (!world::meets_threshold(t->final_progress, t->task.goal.success_threshold)) out.failed.insert(t->task.task_id);
  }
  return out;
}

std::string OverlapCategory::label() const {
  if (failed_by.empty()) return "none";
  if (failed_by.size() == 1) return "only-" + failed_by.front();
  return join(failed_by, "∩");
}

const OverlapCategory* OverlapReport::find(const std::vector<std::string>& failed_by) const {
  for (const auto& c : categories) {
    if (c.failed_by == failed_by) return &c;
  }
  return nullptr;
}

OverlapReport failure_overlap(const std::vector<std::pair<std::string, FailureSet>>& named) {
  if (named.empty()) throw Error(ErrorCode::invalid_argument, "failure_overlap: no result sets");
  if (named.size() > 16) throw Error(ErrorCode::invalid_argument, "failure_overlap: at most 16 result sets");
  OverlapReport report;
  const auto& universe = named.front().second.universe;
  for (const auto& [name, set] : named) {
    if (std::find(report.names.begin(), report.names.end(), name) != report.names.end()) {
      throw Error(ErrorCode::invalid_argument, "failure_overlap: duplicate name " + name);
    }
    if (set.universe != universe) {
      throw Error(ErrorCode::invalid_argument,
                  "UniverseMismatch: " + name + " covers different task ids than " + named.front().first);
    }
    for (const auto& id : set.failed) {
      if (!universe.count(id)) throw Error(ErrorCode::invalid_argument, "UniverseMismatch: " + id + " not in universe");
    }
    report.names.push_back(name);
  }

  const std::size_t n = named.size();
  std::vector<unsigned> masks;
  for (unsigned m = 0; m < (1u << n); ++m) masks.push_back(m);
  std::stable_sort(masks.begin(), masks.end(), [](unsigned a, unsigned b) {
    const int pa = __builtin_popcount(a);
    const int pb = __builtin_popcount(b);
    if (pa != pb) return pa < pb;
    // Earlier agents first: compare the bit patterns from the lowest agent up.
    for (unsigned bit = 1; bit != 0; bit <<= 1) {
      if ((a & bit) != (b & bit)) return (a & bit) != 0;
    }
    return false;
  });

  std::map<unsigned, std::size_t> index;
  for (unsigned m : masks) {
    OverlapCategory c;
    for (std::size_t i = 0; i < n; ++i) {
      if (m & (1u << i)) c.failed_by.push_back(report.names[i]);
    }
    index[m] = report.categories.size();
    report.categories.push_back(std::move(c));
  }
  for (const auto& id : universe) {
    unsigned m = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (named[i].second.failed.count(id)) m |= 1u << i;
    }
    report.categories[index[m]].task_ids.insert(id);
  }
  return report;
}

std::vector<ActionDistribution> probe_thought_influence(const backbones::Context& ctx, BackboneKind kind,
                                                        const std::vector<std::string>& thought_variants,
                                                        gateway::Backend& backend,
                                                        const std::vector<std::string>& candidates) {
  const Messages base = backbones::turn_messages(kind, ctx);
  std::vector<ActionDistribution> out;
  for (const auto& thought : thought_variants) {
    Messages msgs = base;
    if (!thought.empty()) msgs.push_back({Role::assistant, thought});
    out.push_back(backend.score_candidates(msgs, candidates));
  }
  return out;
}

MetricsReport compute_metrics(const std::vector<Trajectory>& trajs, const std::string& config_hash) {
  MetricsReport report;
  report.config_hash = config_hash;
  for (BackboneKind kind : backbones::kAllKinds) {
    const bool present = std::any_of(trajs.begin(), trajs.end(), [&](const Trajectory& t) { return t.backbone.kind == kind; });
    if (!present) continue;
    KindMetrics m;
    m.kind = kind;
    m.aggregate = aggregate(trajs, kind);
    try {
      m.mean_entropy = mean_entropy(trajs, kind);
    } catch (const Error&) {
      // Entropy needs recorded distributions; leave it blank otherwise.
    }
    m.hallucination_rate = hallucination_rate(trajs, kind);
    m.tokens_per_step = tokens_per_step(trajs, kind);
    m.steps_per_episode = steps_per_episode(trajs, kind);
    report.kinds.push_back(m);
  }
  return report;
}

std::string metrics_csv(const MetricsReport& metrics) {
  std::string out =
      "kind,episodes,success_rate,average_reward,mean_entropy,hallucination_rate,tokens_per_step,steps_per_episode,"
      "approx_flags\n";
  for (const auto& k : metrics.kinds) {
    out += std::string(backbones::to_string(k.kind)) + "," + std::to_string(k.aggregate.episodes) + "," +
           fixed(k.aggregate.success_rate) + "," + fixed(k.aggregate.average_reward) + "," +
           (k.mean_entropy ? fixed(*k.mean_entropy) : std::string()) + "," + fixed(k.hallucination_rate) + "," +
           fixed(k.tokens_per_step.value) + "," + fixed(k.steps_per_episode) + "," +
           (k.tokens_per_step.approximate ? "tokens_per_step" : "") + "\n";
  }
  return out;
}

std::string overlap_csv(const std::optional<OverlapReport>& overlap) {
  std::string out = "category,count,task_ids\n";
  if (!overlap) return out;
  for (const auto& c : overlap->categories) {
    out += csv_field(c.label()) + "," + std::to_string(c.task_ids.size()) + "," +
           csv_field(join(std::vector<std::string>(c.task_ids.begin(), c.task_ids.end()), " ")) + "\n";
  }
  return out;
}

std::string report_markdown(const MetricsReport& metrics, const std::optional<OverlapReport>& overlap,
                            const ReportOptions& options) {
  std::string out = "# Evaluation report\n\n";
  out += "config_hash: `" + metrics.config_hash + "`\n\n";
  out += "## Success and reward\n\n";
  out += "| Agent | Episodes | SR (%) | AR (%) |\n|---|---:|---:|---:|\n";
  for (const auto& k : metrics.kinds) {
    out += "| " + std::string(backbones::display_name(k.kind)) + " | " + std::to_string(k.aggregate.episodes) + " | " +
           fixed(100.0 * k.aggregate.success_rate, 1) + " | " + fixed(100.0 * k.aggregate.average_reward, 1) + " |\n";
  }
  out += "\n## Diagnostics\n\n";
  out += "| Agent | Mean entropy (nats) | Invalid-action rate | Tokens/step | Steps/episode |\n"
         "|---|---:|---:|---:|---:|\n";
  bool any_approx = false;
  for (const auto& k : metrics.kinds) {
    any_approx = any_approx || k.tokens_per_step.approximate;
    out += "| " + std::string(backbones::display_name(k.kind)) + " | " +
           (k.mean_entropy ? fixed(*k.mean_entropy, 2) : std::string("n/a")) + " | " +
           fixed(k.hallucination_rate, 3) + " | " + (k.tokens_per_step.approximate ? "~" : "") +
           fixed(k.tokens_per_step.value, 1) + " | " + fixed(k.steps_per_episode, 1) + " |\n";
  }
  if (any_approx) out += "\n`~` approximate: some steps had no provider usage and were counted by whitespace tokens.\n";

  const auto* no_thinking = metrics_for(metrics, BackboneKind::nothinking);
  if (no_thinking && no_thinking->mean_entropy) {
    std::string lines;
    for (const auto& k : metrics.kinds) {
      if (k.kind == BackboneKind::nothinking || !k.mean_entropy) continue;
      lines += "- " + std::string(backbones::display_name(k.kind)) + " " + fixed(*k.mean_entropy, 2) +
               (*k.mean_entropy < *no_thinking->mean_entropy ? " < " : " >= ") + "NoThinking " +
               fixed(*no_thinking->mean_entropy, 2) + "\n";
    }
    if (!lines.empty()) out += "\n### Entropy relative to NoThinking (recorded, not asserted)\n\n" + lines;
  }

  if (overlap) {
    out += "\n## Failure overlap\n\nAgents: " + join(overlap->names, ", ") + "\n\n";
    out += "| Failed by | Count | Task ids |\n|---|---:|---|\n";
    for (const auto& c : overlap->categories) {
      out += "| " + c.label() + " | " + std::to_string(c.task_ids.size()) + " | " +
             join(std::vector<std::string>(c.task_ids.begin(), c.task_ids.end()), " ") + " |\n";
    }
  }

  if (options.reference_anchors) {
    out += "\n## Published reference values\n\n";
    out += "Reported for frontier and mid-size models; context only, never asserted.\n\n";
    out += "- Mean action entropy, NoThinking / ReAct (Llama-3.1-8B): paper ref: 1.23 / 0.30\n";
    out += "- Steps per episode, household tasks, NoThinking / ReAct / ReflAct: paper ref: 21.0 / 18.6 / 16.5\n";
  }
  return out;
}

void write_report(const std::filesystem::path& dir, const MetricsReport& metrics,
                  const std::optional<OverlapReport>& overlap, const ReportOptions& options) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::io, "IoError: cannot create " + dir.string() + ": " + ec.message());
  const std::pair<const char*, std::string> files[] = {
      {"metrics.csv", metrics_csv(metrics)},
      {"overlap.csv", overlap_csv(overlap)},
      {"report.md", report_markdown(metrics, overlap, options)},
  };
  for (const auto& [name, content] : files) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "IoError: cannot write " + (dir / name).string());
    out << content;
    if (!out) throw Error(ErrorCode::io, "IoError: write failed for " + (dir / name).string());
  }
}

}  // namespace reflact::analytics
