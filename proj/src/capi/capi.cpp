#include "reflact.h"

#include <atomic>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "reflact/analytics.hpp"
#include "reflact/config.hpp"
#include "reflact/error.hpp"
#include "reflact/runner.hpp"
#include "reflact/serialize.hpp"
#include "reflact/taskgen.hpp"

using nlohmann::json;
namespace fs = std::filesystem;
using namespace reflact;

struct rf_task {
  taskgen::TaskSpec spec;
};

struct rf_env {
  taskgen::TaskSpec task;
  world::WorldState state;
  world::ProgressReport report;
};

struct rf_config {
  config::CliConfig cfg;
};

namespace {

thread_local std::string g_last_error;
std::atomic<bool> g_cancel{false};

rf_status status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return RF_ERR_INVALID_ARGUMENT;
    case ErrorCode::unsupported: return RF_ERR_UNSUPPORTED;
    case ErrorCode::config: return RF_ERR_CONFIG;
    case ErrorCode::io: return RF_ERR_IO;
    case ErrorCode::backend: return RF_ERR_BACKEND;
    case ErrorCode::precondition: return RF_ERR_PRECONDITION;
    case ErrorCode::internal: return RF_ERR_INTERNAL;
  }
  return RF_ERR_INTERNAL;
}

template <typename F>
rf_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return RF_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_for(e.code());
  } catch (const fs::filesystem_error& e) {
    g_last_error = std::string("IoError: ") + e.what();
    return RF_ERR_IO;
  } catch (const json::exception& e) {
    g_last_error = std::string("invalid JSON: ") + e.what();
    return RF_ERR_INVALID_ARGUMENT;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return RF_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return RF_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) throw Error(ErrorCode::invalid_argument, std::string(what) + " must not be NULL");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "IoError: cannot read " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& p, const std::string& content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "IoError: cannot write " + p.string());
  out << content;
  if (!out) throw Error(ErrorCode::io, "IoError: write failed for " + p.string());
}

struct SuiteTasks {
  std::vector<taskgen::TaskSpec> tasks;
  std::vector<std::string> skipped;
};

SuiteTasks suite_tasks(const config::CliConfig& cfg) {
  SuiteTasks out;
  for (auto flavor : cfg.suite.flavors) {
    for (auto type : cfg.suite.task_types) {
      if (!taskgen::supports(type, flavor)) {
        out.skipped.push_back(std::string(world::to_string(type)) + "/" + std::string(world::to_string(flavor)));
        continue;
      }
      for (std::uint64_t seed = cfg.suite.seeds.begin; seed < cfg.suite.seeds.end; ++seed) {
        out.tasks.push_back(taskgen::generate(seed, type, flavor));
      }
    }
  }
  if (out.tasks.empty()) throw Error(ErrorCode::config, "InvalidConfig: the suite selects no supported tasks");
  return out;
}

void write_tasks(const fs::path& dir, const std::vector<taskgen::TaskSpec>& tasks) {
  for (const auto& t : tasks) write_file(dir / "tasks" / (t.task_id + ".json"), taskgen::serialize(t) + "\n");
}

json summaries_json(const std::vector<runner::KindSummary>& summaries) {
  json out = json::array();
  for (const auto& s : summaries) {
    out.push_back({{"kind", backbones::to_string(s.kind)},
                   {"episodes", s.episodes},
                   {"successes", s.successes},
                   {"success_rate", s.success_rate},
                   {"average_reward", s.average_reward}});
  }
  return out;
}

json episode_event(const runner::Trajectory& t) {
  return {{"type", "episode"},
          {"task_id", t.task.task_id},
          {"kind", backbones::to_string(t.backbone.kind)},
          {"success", t.success},
          {"steps", t.steps.size()},
          {"final_progress", t.final_progress},
          {"terminated_by", runner::to_string(t.terminated_by)}};
}

json env_result(const rf_env& env, const world::Observation& obs) {
  return {{"observation", obs.text},
          {"nothing_happened", obs.nothing_happened},
          {"progress", env.report.progress},
          {"success", env.report.success},
          {"step", env.state.step_count}};
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

extern "C" {

const char* rf_version(void) { return "0.1.0"; }

const char* rf_last_error(void) { return g_last_error.c_str(); }

const char* rf_status_name(rf_status status) {
  switch (status) {
    case RF_OK: return "ok";
    case RF_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case RF_ERR_UNSUPPORTED: return "unsupported";
    case RF_ERR_CONFIG: return "config";
    case RF_ERR_IO: return "io";
    case RF_ERR_BACKEND: return "backend";
    case RF_ERR_PRECONDITION: return "precondition";
    case RF_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void rf_free(char* s) { std::free(s); }

uint64_t rf_network_attempts(void) { return gateway::network_attempts(); }

void rf_request_cancel(void) { g_cancel.store(true); }
void rf_clear_cancel(void) { g_cancel.store(false); }

rf_status rf_task_generate(uint64_t seed, const char* task_type, const char* flavor, rf_task** out) {
  return guarded([&] {
    require(task_type, "task_type");
    require(flavor, "flavor");
    require(out, "out");
    auto spec = taskgen::generate(seed, world::task_type_from_string(task_type), world::reward_flavor_from_string(flavor));
    *out = new rf_task{std::move(spec)};
  });
}

rf_status rf_task_from_json(const char* text, rf_task** out) {
  return guarded([&] {
    require(text, "json");
    require(out, "out");
    auto spec = taskgen::task_from_json(json::parse(text));
    spec.initial_state.validate();
    spec.goal.validate();
    *out = new rf_task{std::move(spec)};
  });
}

rf_status rf_task_to_json(const rf_task* task, char** out) {
  return guarded([&] {
    require(task, "task");
    require(out, "out");
    *out = dup(taskgen::serialize(task->spec));
  });
}

rf_status rf_task_id(const rf_task* task, char** out) {
  return guarded([&] {
    require(task, "task");
    require(out, "out");
    *out = dup(task->spec.task_id);
  });
}

void rf_task_free(rf_task* task) { delete task; }

rf_status rf_parse_seed_range(const char* text, uint64_t* begin, uint64_t* end) {
  return guarded([&] {
    require(text, "text");
    require(begin, "begin");
    require(end, "end");
    const auto r = config::parse_seed_range(text);
    *begin = r.begin;
    *end = r.end;
  });
}

rf_status rf_generate_tasks(const rf_config* cfg, const char* out_dir, char** summary_json) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out_dir, "out_dir");
    const SuiteTasks st = suite_tasks(cfg->cfg);
    write_tasks(out_dir, st.tasks);
    if (summary_json) {
      json ids = json::array();
      for (const auto& t : st.tasks) ids.push_back(t.task_id);
      *summary_json = dup(json{{"tasks", ids}, {"skipped", st.skipped}}.dump());
    }
  });
}

rf_status rf_verify(uint64_t begin, uint64_t end, const char* task_type, const char* flavor, int step_budget,
                    char** report_json) {
  return guarded([&] {
    require(task_type, "task_type");
    require(flavor, "flavor");
    require(report_json, "report_json");
    const auto type = world::task_type_from_string(task_type);
    const auto fl = world::reward_flavor_from_string(flavor);
    const auto report = taskgen::verify_solvable(begin, end, type, fl, taskgen::generate, step_budget);
    json failures = json::array();
    for (const auto& f : report.failures) {
      failures.push_back({{"seed", f.seed}, {"task_type", world::to_string(f.task_type)}, {"reason", f.reason}});
    }
    *report_json = dup(json{{"checked", report.checked}, {"failures", failures}, {"ok", report.ok()}}.dump());
  });
}

rf_status rf_env_new(const rf_task* task, rf_env** out) {
  return guarded([&] {
    require(task, "task");
    require(out, "out");
    auto* env = new rf_env{task->spec, task->spec.initial_state, {}};
    env->report = world::evaluate_goal(env->state, env->task.goal, {});
    *out = env;
  });
}

rf_status rf_env_reset(rf_env* env, char** out_json) {
  return guarded([&] {
    require(env, "env");
    require(out_json, "out_json");
    env->state = env->task.initial_state;
    env->report = world::evaluate_goal(env->state, env->task.goal, {});
    *out_json = dup(json{{"observation", world::render_scene(env->state)},
                         {"instruction", env->task.instruction_text},
                         {"progress", env->report.progress},
                         {"step", env->state.step_count}}
                        .dump());
  });
}

rf_status rf_env_step(rf_env* env, const char* action, char** out_json) {
  return guarded([&] {
    require(env, "env");
    require(action, "action");
    require(out_json, "out_json");
    auto result = world::step_text(env->state, action);
    env->state = std::move(result.state);
    env->report = world::evaluate_goal(env->state, env->task.goal, env->report);
    *out_json = dup(env_result(*env, result.observation).dump());
  });
}

rf_status rf_env_valid_actions(const rf_env* env, char** out_json) {
  return guarded([&] {
    require(env, "env");
    require(out_json, "out_json");
    json arr = json::array();
    for (const auto& a : world::valid_actions(env->state)) arr.push_back(world::render_action(a));
    *out_json = dup(arr.dump());
  });
}

rf_status rf_env_state(const rf_env* env, char** out_json) {
  return guarded([&] {
    require(env, "env");
    require(out_json, "out_json");
    *out_json = dup(json(env->state).dump());
  });
}

void rf_env_free(rf_env* env) { delete env; }

rf_status rf_config_load(const char* path, const char* overrides_json, rf_config** out) {
  return guarded([&] {
    require(out, "out");
    json overrides = overrides_json ? json::parse(overrides_json) : json();
    std::optional<fs::path> p;
    if (path) p = fs::path(path);
    *out = new rf_config{config::load_config(p, overrides)};
  });
}

rf_status rf_config_hash(const rf_config* cfg, char** out) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out, "out");
    *out = dup(cfg->cfg.hash);
  });
}

rf_status rf_config_describe(const rf_config* cfg, char** out_json) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out_json, "out_json");
    *out_json = dup(config::describe(cfg->cfg).dump(2));
  });
}

void rf_config_free(rf_config* cfg) { delete cfg; }

rf_status rf_run_episode(const rf_config* cfg, const rf_task* task, const char* kind, char** out_jsonl) {
  return guarded([&] {
    require(cfg, "cfg");
    require(task, "task");
    require(kind, "kind");
    require(out_jsonl, "out_jsonl");
    const auto k = backbones::kind_from_string(kind);
    auto backend = config::backend_factory(cfg->cfg)(task->spec, k);
    const auto traj = runner::run_episode(task->spec, cfg->cfg.backbone(k), *backend, cfg->cfg.run, nullptr, cfg->cfg.hash);
    *out_jsonl = dup(runner::to_jsonl(traj));
  });
}

rf_status rf_run_suite(const rf_config* cfg, const char* out_dir, rf_event_cb cb, void* user, char** summary_json) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out_dir, "out_dir");
    const auto& c = cfg->cfg;
    const SuiteTasks st = suite_tasks(c);
    write_tasks(out_dir, st.tasks);
    std::vector<backbones::Backbone> kinds;
    for (auto k : c.suite.kinds) kinds.push_back(c.backbone(k));
    runner::SuiteOptions opts;
    opts.out_dir = fs::path(out_dir);
    opts.config_hash = c.hash;
    opts.cancel = &g_cancel;
    if (cb) opts.on_episode = [cb, user](const runner::Trajectory& t) { cb(episode_event(t).dump().c_str(), user); };
    const auto rs = runner::run_suite(st.tasks, kinds, config::backend_factory(c), c.run, opts);
    if (summary_json) {
      *summary_json = dup(json{{"episodes", rs.trajectories.size()},
                               {"pending", rs.pending},
                               {"skipped", st.skipped},
                               {"summaries", summaries_json(rs.summaries)},
                               {"config_hash", rs.config_hash}}
                              .dump(2));
    }
  });
}

rf_status rf_run_reflexion(const rf_config* cfg, const char* out_dir, rf_event_cb cb, void* user,
                           char** summary_json) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out_dir, "out_dir");
    const auto& c = cfg->cfg;
    const fs::path root(out_dir);
    const SuiteTasks st = suite_tasks(c);
    write_tasks(root, st.tasks);
    const auto factory = config::backend_factory(c);
    const int n = c.reflexion_trials;

    json kinds_out = json::array();
    json records = json::array();
    std::size_t errors = 0;
    std::size_t pending = 0;
    for (auto k : c.suite.kinds) {
      std::vector<int> solved_by(static_cast<std::size_t>(n), 0);
      int tasks_done = 0;
      for (const auto& task : st.tasks) {
        if (g_cancel.load()) {
          ++pending;
          continue;
        }
        auto backend = factory(task, k);
        const auto res = runner::run_reflexion(task, c.backbone(k), *backend, c.run, n, c.hash);
        ++tasks_done;
        json trials = json::array();
        bool solved = false;
        for (const auto& tr : res.trials) {
          json rec = {{"trial", tr.trial}, {"skipped", tr.skipped}, {"success", tr.success}};
          if (tr.trajectory) {
            const std::string name = task.task_id + "__" + std::string(backbones::to_string(k)) + "__trial" +
                                     std::to_string(tr.trial) + ".jsonl";
            runner::write_trajectory(root / "trajectories" / name, *tr.trajectory);
            rec["file"] = "trajectories/" + name;
          }
          rec["reflection"] = tr.reflection ? json(*tr.reflection) : json(nullptr);
          solved = solved || tr.success;
          if (solved) ++solved_by[static_cast<std::size_t>(tr.trial)];
          trials.push_back(rec);
        }
        // Trials never reached after an abort count as unsolved.
        if (res.error) ++errors;
        json record = {{"task_id", task.task_id},
                       {"kind", backbones::to_string(k)},
                       {"trials", trials},
                       {"memory", res.memory.reflections},
                       {"error", res.error ? json(*res.error) : json(nullptr)}};
        if (cb) cb(json{{"type", "reflexion"}, {"task_id", task.task_id}, {"kind", backbones::to_string(k)},
                        {"solved", solved}, {"trials", res.trials.size()}}
                       .dump()
                       .c_str(),
                   user);
        records.push_back(std::move(record));
      }
      json cumulative = json::array();
      for (int s : solved_by) cumulative.push_back(tasks_done ? static_cast<double>(s) / tasks_done : 0.0);
      kinds_out.push_back({{"kind", backbones::to_string(k)}, {"tasks", tasks_done}, {"cumulative_success_rate", cumulative}});
    }
    const json report = {{"schema_version", runner::kTrajectorySchemaVersion},
                         {"config_hash", c.hash},
                         {"trials", n},
                         {"kinds", kinds_out},
                         {"tasks", records},
                         {"backend_errors", errors},
                         {"pending", pending},
                         {"skipped", st.skipped}};
    write_file(root / "reports" / "reflexion.json", report.dump(2) + "\n");
    if (summary_json) {
      *summary_json = dup(json{{"config_hash", c.hash},
                               {"kinds", kinds_out},
                               {"backend_errors", errors},
                               {"pending", pending},
                               {"skipped", st.skipped}}
                              .dump(2));
    }
  });
}

rf_status rf_replay_file(const char* path, int* identical, char** report_json) {
  return guarded([&] {
    require(path, "path");
    require(identical, "identical");
    const std::string original = read_file(path);
    const std::string replayed = runner::to_jsonl(runner::replay(runner::trajectory_from_jsonl(original)));
    *identical = original == replayed ? 1 : 0;
    json first = nullptr;
    if (!*identical) {
      std::istringstream a(original), b(replayed);
      std::string la, lb;
      int line = 1;
      while (true) {
        const bool ga = static_cast<bool>(std::getline(a, la));
        const bool gb = static_cast<bool>(std::getline(b, lb));
        if (!ga && !gb) break;
        if (ga != gb || la != lb) {
          first = line;
          break;
        }
        ++line;
      }
      // Same lines but different bytes: a trailing newline or CR difference.
      if (first.is_null()) first = line;
    }
    if (report_json) {
      *report_json = dup(json{{"path", path}, {"identical", *identical == 1}, {"first_difference_line", first}}.dump());
    }
  });
}

rf_status rf_analyze(const char* const* in_dirs, size_t n_dirs, const char* compare_csv, int force,
                     const char* out_dir, char** summary_json) {
  return guarded([&] {
    require(in_dirs, "in_dirs");
    require(out_dir, "out_dir");
    if (n_dirs == 0) throw Error(ErrorCode::invalid_argument, "rf_analyze: no input directories");
    std::vector<runner::Trajectory> all;
    std::set<std::string> hashes;
    for (size_t i = 0; i < n_dirs; ++i) {
      require(in_dirs[i], "in_dirs[i]");
      auto rs = runner::load_results(in_dirs[i]);
      for (auto& t : rs.trajectories) {
        hashes.insert(t.config_hash);
        all.push_back(std::move(t));
      }
    }
    if (all.empty()) throw Error(ErrorCode::invalid_argument, "EmptyResultSet: no trajectories found");
    if (hashes.size() > 1 && !force) {
      std::string list;
      for (const auto& h : hashes) list += (list.empty() ? "" : ", ") + h;
      throw Error(ErrorCode::precondition,
                  "MixedConfig: inputs were produced under different configurations (" + list +
                      "); pass --force to analyze them together");
    }
    const std::string hash = hashes.size() == 1 ? *hashes.begin() : "mixed";
    const auto metrics = analytics::compute_metrics(all, hash);

    std::vector<backbones::BackboneKind> compare;
    if (compare_csv) {
      for (const auto& name : split_csv(compare_csv)) compare.push_back(backbones::kind_from_string(name));
    } else {
      for (const auto& k : metrics.kinds) compare.push_back(k.kind);
    }
    std::optional<analytics::OverlapReport> overlap;
    if (!compare.empty()) {
      std::vector<std::pair<std::string, analytics::FailureSet>> named;
      for (auto k : compare) named.emplace_back(std::string(backbones::to_string(k)), analytics::failure_set(all, k));
      overlap = analytics::failure_overlap(named);
    }
    analytics::write_report(out_dir, metrics, overlap);

    if (summary_json) {
      json kinds = json::array();
      for (const auto& k : metrics.kinds) {
        kinds.push_back({{"kind", backbones::to_string(k.kind)},
                         {"episodes", k.aggregate.episodes},
                         {"success_rate", k.aggregate.success_rate},
                         {"average_reward", k.aggregate.average_reward},
                         {"mean_entropy", k.mean_entropy ? json(*k.mean_entropy) : json(nullptr)},
                         {"hallucination_rate", k.hallucination_rate},
                         {"tokens_per_step", k.tokens_per_step.value},
                         {"tokens_per_step_approximate", k.tokens_per_step.approximate},
                         {"steps_per_episode", k.steps_per_episode}});
      }
      json cats = json::array();
      if (overlap) {
        for (const auto& c : overlap->categories) cats.push_back({{"category", c.label()}, {"count", c.task_ids.size()}});
      }
      *summary_json = dup(json{{"config_hash", hash},
                               {"trajectories", all.size()},
                               {"kinds", kinds},
                               {"overlap", cats},
                               {"out_dir", out_dir}}
                              .dump(2));
    }
  });
}

rf_status rf_entropy(const double* probabilities, size_t n, double* out) {
  return guarded([&] {
    require(probabilities, "probabilities");
    require(out, "out");
    gateway::ActionDistribution d;
    for (size_t i = 0; i < n; ++i) d.entries.push_back({"a" + std::to_string(i), probabilities[i]});
    *out = analytics::entropy(d);
  });
}

rf_status rf_probe(const rf_config* cfg, const char* trajectory_path, int t, const char* variants_json,
                   char** out_json) {
  return guarded([&] {
    require(cfg, "cfg");
    require(trajectory_path, "trajectory_path");
    require(variants_json, "variants_json");
    require(out_json, "out_json");
    const auto traj = runner::read_trajectory(trajectory_path);
    const auto ctx = runner::context_at(traj, t);
    world::WorldState state = traj.task.initial_state;
    for (int i = 0; i + 1 < t; ++i) state = world::step_text(state, traj.steps[i].action).state;
    std::vector<std::string> candidates;
    for (const auto& a : world::valid_actions(state)) candidates.push_back(world::render_action(a));
    const auto variants = json::parse(variants_json).get<std::vector<std::string>>();
    auto backend = config::backend_factory(cfg->cfg)(traj.task, traj.backbone.kind);
    const auto dists = analytics::probe_thought_influence(ctx, traj.backbone.kind, variants, *backend, candidates);
    json arr = json::array();
    for (const auto& d : dists) {
      json j = gateway::to_json(d);
      j["entropy"] = analytics::entropy(d);
      arr.push_back(j);
    }
    *out_json = dup(json{{"task_id", traj.task.task_id},
                         {"kind", backbones::to_string(traj.backbone.kind)},
                         {"t", t},
                         {"candidates", candidates},
                         {"variants", variants},
                         {"distributions", arr}}
                        .dump(2));
  });
}

}  // extern "C"
