#include "reflact/runner.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "reflact/error.hpp"
#include "reflact/serialize.hpp"

namespace reflact::runner {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json opt_string(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }

std::optional<std::string> string_or_null(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<std::string>();
}

json completion_json(const CompletionResult& c) {
  return {{"text", c.text},
          {"usage", c.usage ? gateway::to_json(*c.usage) : json(nullptr)},
          {"finish_reason", c.finish_reason}};
}

CompletionResult completion_from_json(const json& j) {
  CompletionResult c;
  c.text = j.at("text").get<std::string>();
  if (!j.at("usage").is_null()) c.usage = gateway::usage_from_json(j.at("usage"));
  c.finish_reason = j.at("finish_reason").get<std::string>();
  return c;
}

json step_json(const StepRecord& s) {
  json completions = json::array();
  for (const auto& c : s.completions) completions.push_back(completion_json(c));
  json parsed = nullptr;
  if (s.parsed) parsed = *s.parsed;
  return {{"type", "step"},
          {"t", s.t},
          {"reasoning", opt_string(s.reasoning)},
          {"action", s.action},
          {"parsed", parsed},
          {"observation", s.observation},
          {"nothing_happened", s.nothing_happened},
          {"progress", s.progress},
          {"usage", s.usage ? gateway::to_json(*s.usage) : json(nullptr)},
          {"distribution", s.distribution ? gateway::to_json(*s.distribution) : json(nullptr)},
          {"lenient_parse", s.lenient_parse},
          {"completions", completions},
          {"format_failure", s.format_failure}};
}

StepRecord step_from_json(const json& j) {
  StepRecord s;
  s.t = j.at("t").get<int>();
  s.reasoning = string_or_null(j.at("reasoning"));
  s.action = j.at("action").get<std::string>();
  if (!j.at("parsed").is_null()) s.parsed = j.at("parsed").get<world::ActionCommand>();
  s.observation = j.at("observation").get<std::string>();
  s.nothing_happened = j.at("nothing_happened").get<bool>();
  s.progress = j.at("progress").get<double>();
  if (!j.at("usage").is_null()) s.usage = gateway::usage_from_json(j.at("usage"));
  if (!j.at("distribution").is_null()) s.distribution = gateway::distribution_from_json(j.at("distribution"));
  s.lenient_parse = j.at("lenient_parse").get<bool>();
  for (const auto& c : j.at("completions")) s.completions.push_back(completion_from_json(c));
  s.format_failure = j.at("format_failure").get<bool>();
  return s;
}

std::optional<Usage> total_usage(const std::vector<CompletionResult>& completions) {
  std::optional<Usage> total;
  for (const auto& c : completions) {
    if (!c.usage) continue;
    if (!total) total = Usage{};
    total->prompt_tokens += c.usage->prompt_tokens;
    total->completion_tokens += c.usage->completion_tokens;
  }
  return total;
}

backbones::HistoryEntry history_entry(const StepRecord& s) {
  backbones::HistoryEntry h;
  h.reasoning = s.reasoning;
  h.action = s.action;
  h.observation = s.observation;
  if (s.format_failure && !s.completions.empty()) h.raw = s.completions.back().text;
  return h;
}

void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "IoError: cannot write " + tmp.string());
    out << content;
    if (!out) throw Error(ErrorCode::io, "IoError: write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "IoError: cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::size_t kind_rank(BackboneKind kind) {
  const auto* it = std::find(std::begin(backbones::kAllKinds), std::end(backbones::kAllKinds), kind);
  return static_cast<std::size_t>(it - std::begin(backbones::kAllKinds));
}

bool episode_less(const Trajectory& a, const Trajectory& b) {
  if (a.task.task_id != b.task.task_id) return a.task.task_id < b.task.task_id;
  return kind_rank(a.backbone.kind) < kind_rank(b.backbone.kind);
}

}  // namespace

// ---- config -------------------------------------------------------------------

void RunConfig::validate() const {
  if (step_budget < 1) throw Error(ErrorCode::config, "InvalidConfig: step_budget must be >= 1");
  if (retry_on_format_error < 0) throw Error(ErrorCode::config, "InvalidConfig: retry_on_format_error must be >= 0");
  if (parallel_episodes < 1) throw Error(ErrorCode::config, "InvalidConfig: parallel_episodes must be >= 1");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error(ErrorCode::config, "InvalidConfig: gamma must be in [0, 1]");
  if (params.max_tokens < 1) throw Error(ErrorCode::config, "InvalidConfig: max_tokens must be >= 1");
}

// parallel_episodes is left out: it cannot change any episode's content.
json to_json(const RunConfig& cfg) {
  return {{"step_budget", cfg.step_budget},
          {"retry_on_format_error", cfg.retry_on_format_error},
          {"gamma", cfg.gamma},
          {"record_distributions", cfg.record_distributions},
          {"temperature", cfg.params.temperature},
          {"max_tokens", cfg.params.max_tokens}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig cfg;
  cfg.step_budget = j.at("step_budget").get<int>();
  cfg.retry_on_format_error = j.at("retry_on_format_error").get<int>();
  cfg.gamma = j.at("gamma").get<double>();
  cfg.record_distributions = j.at("record_distributions").get<bool>();
  cfg.params.temperature = j.at("temperature").get<double>();
  cfg.params.max_tokens = j.at("max_tokens").get<int>();
  return cfg;
}

std::string_view to_string(TerminatedBy t) {
  switch (t) {
    case TerminatedBy::goal: return "goal";
    case TerminatedBy::budget: return "budget";
    case TerminatedBy::backend_error: return "backend_error";
  }
  return "?";
}

TerminatedBy terminated_by_from_string(std::string_view name) {
  if (name == "goal") return TerminatedBy::goal;
  if (name == "budget") return TerminatedBy::budget;
  if (name == "backend_error") return TerminatedBy::backend_error;
  throw Error(ErrorCode::invalid_argument, "unknown termination: " + std::string(name));
}

// ---- persistence ----------------------------------------------------------------

std::string to_jsonl(const Trajectory& traj) {
  json header = {{"type", "header"},
                 {"schema_version", kTrajectorySchemaVersion},
                 {"task", taskgen::to_json(traj.task)},
                 {"kind", backbones::to_string(traj.backbone.kind)},
                 {"instruction_override", opt_string(traj.backbone.instruction_override)},
                 {"backend", traj.backend},
                 {"config_hash", traj.config_hash},
                 {"run_config", to_json(traj.config)},
                 {"memory", traj.memory}};
  std::string out = header.dump() + "\n";
  for (const auto& s : traj.steps) out += step_json(s).dump() + "\n";
  json footer = {{"type", "footer"},
                 {"final_progress", traj.final_progress},
                 {"success", traj.success},
                 {"terminated_by", to_string(traj.terminated_by)},
                 {"steps", traj.steps.size()},
                 {"error", opt_string(traj.error)}};
  out += footer.dump() + "\n";
  return out;
}

Trajectory trajectory_from_jsonl(const std::string& text) {
  Trajectory traj;
  std::istringstream in(text);
  std::string line;
  bool have_header = false;
  bool have_footer = false;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (have_footer) throw Error(ErrorCode::invalid_argument, "trajectory: content after footer");
      const json j = json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (type == "header") {
        if (have_header) throw Error(ErrorCode::invalid_argument, "trajectory: duplicate header");
        const int version = j.at("schema_version").get<int>();
        if (version != kTrajectorySchemaVersion) {
          throw Error(ErrorCode::invalid_argument, "trajectory: unsupported schema_version " + std::to_string(version));
        }
        traj.task = taskgen::task_from_json(j.at("task"));
        traj.backbone.kind = backbones::kind_from_string(j.at("kind").get<std::string>());
        traj.backbone.instruction_override = string_or_null(j.at("instruction_override"));
        traj.backend = j.at("backend");
        traj.config_hash = j.at("config_hash").get<std::string>();
        traj.config = run_config_from_json(j.at("run_config"));
        traj.memory = j.at("memory").get<std::vector<std::string>>();
        have_header = true;
      } else if (type == "step") {
        if (!have_header) throw Error(ErrorCode::invalid_argument, "trajectory: step before header");
        traj.steps.push_back(step_from_json(j));
        if (traj.steps.back().t != static_cast<int>(traj.steps.size())) {
          throw Error(ErrorCode::invalid_argument, "trajectory: step indices are not contiguous from 1");
        }
      } else if (type == "footer") {
        if (!have_header) throw Error(ErrorCode::invalid_argument, "trajectory: footer before header");
        traj.final_progress = j.at("final_progress").get<double>();
        traj.success = j.at("success").get<bool>();
        traj.terminated_by = terminated_by_from_string(j.at("terminated_by").get<std::string>());
        traj.error = string_or_null(j.at("error"));
        if (j.at("steps").get<std::size_t>() != traj.steps.size()) {
          throw Error(ErrorCode::invalid_argument, "trajectory: footer step count disagrees with step lines");
        }
        have_footer = true;
      } else {
        throw Error(ErrorCode::invalid_argument, "trajectory: unknown line type '" + type + "'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::invalid_argument, std::string("trajectory: malformed line: ") + e.what());
  }
  if (!have_header) throw Error(ErrorCode::invalid_argument, "trajectory: missing header");
  if (!have_footer) throw Error(ErrorCode::invalid_argument, "trajectory: missing footer (incomplete episode)");
  return traj;
}

void write_trajectory(const fs::path& path, const Trajectory& traj) { write_atomic(path, to_jsonl(traj)); }

Trajectory read_trajectory(const fs::path& path) { return trajectory_from_jsonl(read_file(path)); }

// ---- context ----------------------------------------------------------------------

backbones::Context initial_context(const TaskSpec& task, const Backbone& backbone,
                                   const std::vector<std::string>& memory) {
  backbones::Context ctx;
  ctx.flavor = world::env_flavor_for(task.flavor);
  ctx.system_prompt = backbones::system_prompt(backbone, ctx.flavor);
  ctx.icl = backbones::render_transcript(
      backbones::icl_transcript(backbone.kind, backbones::load_icl(ctx.flavor, task.task_type)));
  // Science examples open with the task line alone; household ones with the scene first.
  ctx.first_user = ctx.flavor == world::EnvFlavor::household
                       ? world::render_scene(task.initial_state) + "\n" + task.instruction_text
                       : task.instruction_text;
  ctx.memory = memory;
  return ctx;
}

backbones::Context context_at(const Trajectory& traj, int t) {
  if (t < 1 || t > static_cast<int>(traj.steps.size()) + 1) {
    throw Error(ErrorCode::invalid_argument, "context_at: t out of range");
  }
  backbones::Context ctx = initial_context(traj.task, traj.backbone, traj.memory);
  for (int i = 0; i + 1 < t; ++i) ctx.history.push_back(history_entry(traj.steps[i]));
  return ctx;
}

// ---- episode ------------------------------------------------------------------------

Trajectory run_episode(const TaskSpec& task, const Backbone& backbone, Backend& backend, const RunConfig& cfg,
                       const ReflexionMemory* memory, const std::string& config_hash) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();

  Trajectory traj;
  traj.task = task;
  traj.backbone = backbone;
  traj.backend = backend.descriptor();
  traj.config_hash = config_hash;
  traj.config = cfg;
  if (memory) traj.memory = memory->reflections;

  backbones::Context ctx = initial_context(task, backbone, traj.memory);
  const std::string corrective =
      backbones::corrective_prompt(backbones::format_paragraph(backbone, ctx.flavor));

  world::WorldState state = task.initial_state;
  world::ProgressReport report = world::evaluate_goal(state, task.goal, {});
  bool scoring = cfg.record_distributions;
  bool ended = report.success;
  if (ended) traj.terminated_by = TerminatedBy::goal;

  for (int t = 1; t <= cfg.step_budget && !ended; ++t) {
    StepRecord rec;
    rec.t = t;
    const Messages msgs = backbones::turn_messages(backbone.kind, ctx);
    std::optional<backbones::ReasoningOutput> output;
    try {
      if (scoring) {
        std::vector<std::string> candidates;
        for (const auto& a : world::valid_actions(state)) candidates.push_back(world::render_action(a));
        try {
          rec.distribution = backend.score_candidates(msgs, candidates);
          rec.distribution->validate();
        } catch (const Error& e) {
          if (e.code() != ErrorCode::unsupported) throw;
          scoring = false;
        }
      }
      Messages attempt = msgs;
      for (int a = 0; a <= cfg.retry_on_format_error; ++a) {
        CompletionResult c = backend.complete(attempt, cfg.params);
        rec.completions.push_back(c);
        auto parsed = backbones::parse_output(backbone.kind, c.text, t);
        if (auto* ok = std::get_if<backbones::ReasoningOutput>(&parsed)) {
          output = std::move(*ok);
          break;
        }
        attempt.push_back({Role::assistant, c.text});
        attempt.push_back({Role::user, corrective});
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::backend) throw;
      traj.terminated_by = TerminatedBy::backend_error;
      traj.error = e.what();
      break;
    }

    rec.usage = total_usage(rec.completions);
    world::StepResult result;
    if (output) {
      rec.reasoning = output->reasoning;
      rec.action = output->action;
      rec.lenient_parse = output->lenient;
      const auto parsed = world::parse_action(rec.action);
      if (const auto* cmd = std::get_if<world::ActionCommand>(&parsed)) rec.parsed = *cmd;
      result = world::step_text(state, rec.action);
    } else {
      rec.format_failure = true;
      result = world::step_text(state, "");
    }
    state = std::move(result.state);
    rec.observation = result.observation.text;
    rec.nothing_happened = result.observation.nothing_happened;
    report = world::evaluate_goal(state, task.goal, report);
    rec.progress = report.progress;

    ctx.history.push_back(history_entry(rec));
    traj.steps.push_back(std::move(rec));
    if (report.success) {
      traj.terminated_by = TerminatedBy::goal;
      ended = true;
    }
  }

  if (!ended && traj.terminated_by != TerminatedBy::backend_error) traj.terminated_by = TerminatedBy::budget;
  traj.final_progress = report.progress;
  traj.success = traj.terminated_by == TerminatedBy::goal;
  traj.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return traj;
}

gateway::ReplayBackend replay_backend_for(const Trajectory& traj) {
  std::vector<CompletionResult> completions;
  std::vector<ActionDistribution> distributions;
  for (const auto& s : traj.steps) {
    completions.insert(completions.end(), s.completions.begin(), s.completions.end());
    if (s.distribution) distributions.push_back(*s.distribution);
  }
  return gateway::ReplayBackend(std::move(completions), std::move(distributions), traj.backend, traj.error);
}

Trajectory replay(const Trajectory& traj) {
  auto backend = replay_backend_for(traj);
  ReflexionMemory memory;
  memory.task_id = traj.task.task_id;
  memory.reflections = traj.memory;
  return run_episode(traj.task, traj.backbone, backend, traj.config, &memory, traj.config_hash);
}

// ---- suites -------------------------------------------------------------------------

std::vector<KindSummary> summarize(const std::vector<Trajectory>& trajectories) {
  std::vector<KindSummary> out;
  for (BackboneKind kind : backbones::kAllKinds) {
    KindSummary s;
    s.kind = kind;
    double reward = 0.0;
    for (const auto& t : trajectories) {
      if (t.backbone.kind != kind) continue;
      ++s.episodes;
      if (t.success) ++s.successes;
      reward += t.final_progress;
    }
    if (s.episodes == 0) continue;
    s.success_rate = static_cast<double>(s.successes) / s.episodes;
    s.average_reward = reward / s.episodes;
    out.push_back(s);
  }
  return out;
}

std::string trajectory_filename(const std::string& task_id, BackboneKind kind) {
  return task_id + "__" + std::string(backbones::to_string(kind)) + ".jsonl";
}

json manifest_json(const ResultSet& results, const std::vector<std::string>& files) {
  json summaries = json::array();
  for (const auto& s : results.summaries) {
    summaries.push_back({{"kind", backbones::to_string(s.kind)},
                         {"episodes", s.episodes},
                         {"successes", s.successes},
                         {"success_rate", s.success_rate},
                         {"average_reward", s.average_reward}});
  }
  std::vector<std::string> sorted = files;
  std::sort(sorted.begin(), sorted.end());
  return {{"schema_version", kTrajectorySchemaVersion},
          {"config_hash", results.config_hash},
          {"files", sorted},
          {"summaries", summaries},
          {"pending", results.pending}};
}

ResultSet run_suite(const std::vector<TaskSpec>& tasks, const std::vector<Backbone>& backbones,
                    const BackendFactory& factory, const RunConfig& cfg, const SuiteOptions& options) {
  if (tasks.empty()) throw Error(ErrorCode::config, "InvalidConfig: empty task list");
  if (backbones.empty()) throw Error(ErrorCode::config, "InvalidConfig: empty kinds list");
  cfg.validate();

  struct Job {
    const TaskSpec* task;
    const Backbone* backbone;
  };
  std::vector<Job> jobs;
  for (const auto& task : tasks) {
    for (const auto& b : backbones) jobs.push_back({&task, &b});
  }

  std::vector<std::optional<Trajectory>> slots(jobs.size());
  std::vector<std::string> files;
  std::mutex mu;
  const fs::path traj_dir = options.out_dir ? *options.out_dir / "trajectories" : fs::path();

  // Episodes of earlier runs into the same directory under the same
  // configuration (e.g. other kinds) stay listed in the manifest.
  std::vector<Trajectory> carried;
  std::vector<std::string> carried_files;
  if (options.out_dir && fs::exists(*options.out_dir / "manifest.json")) {
    std::set<std::string> current;
    for (const auto& job : jobs) current.insert(trajectory_filename(job.task->task_id, job.backbone->kind));
    try {
      const json prev = json::parse(read_file(*options.out_dir / "manifest.json"));
      if (prev.at("config_hash") == options.config_hash) {
        for (const auto& f : prev.at("files")) {
          const fs::path rel = f.get<std::string>();
          if (current.count(rel.filename().string()) || !fs::exists(*options.out_dir / rel)) continue;
          Trajectory t = read_trajectory(*options.out_dir / rel);
          if (t.config_hash != options.config_hash) continue;
          carried.push_back(std::move(t));
          carried_files.push_back(rel.generic_string());
        }
      }
    } catch (const std::exception&) {
      // An unreadable manifest is rebuilt from this run alone.
      carried.clear();
      carried_files.clear();
    }
  }

  auto write_manifest = [&] {
    if (!options.out_dir) return;
    ResultSet partial;
    partial.config_hash = options.config_hash;
    std::vector<Trajectory> done = carried;
    std::size_t finished = 0;
    for (const auto& s : slots) {
      if (s) {
        done.push_back(*s);
        ++finished;
      }
    }
    std::stable_sort(done.begin(), done.end(), episode_less);
    partial.summaries = summarize(done);
    partial.pending = jobs.size() - finished;
    std::vector<std::string> rel = carried_files;
    for (const auto& f : files) rel.push_back("trajectories/" + f);
    write_atomic(*options.out_dir / "manifest.json", manifest_json(partial, rel).dump(2) + "\n");
  };

  // Resume: keep finished episodes recorded under the same configuration.
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (options.out_dir) {
      const std::string name = trajectory_filename(jobs[i].task->task_id, jobs[i].backbone->kind);
      const fs::path path = traj_dir / name;
      if (fs::exists(path)) {
        try {
          Trajectory t = read_trajectory(path);
          if (t.config_hash == options.config_hash && t.task == *jobs[i].task && t.backbone == *jobs[i].backbone) {
            slots[i] = std::move(t);
            files.push_back(name);
            continue;
          }
        } catch (const Error&) {
          // Truncated or foreign file: run the episode again.
        }
      }
    }
    todo.push_back(i);
  }

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;

  auto worker = [&] {
    while (!failed.load()) {
      if (options.cancel && options.cancel->load()) return;
      const std::size_t k = next.fetch_add(1);
      if (k >= todo.size()) return;
      const Job& job = jobs[todo[k]];
      try {
        auto backend = factory(*job.task, job.backbone->kind);
        Trajectory t = run_episode(*job.task, *job.backbone, *backend, cfg, nullptr, options.config_hash);
        const std::string name = trajectory_filename(job.task->task_id, job.backbone->kind);
        if (options.out_dir) write_trajectory(traj_dir / name, t);
        std::lock_guard lock(mu);
        slots[todo[k]] = std::move(t);
        files.push_back(name);
        write_manifest();
        if (options.on_episode) options.on_episode(*slots[todo[k]]);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!first_error) first_error = std::current_exception();
        failed = true;
        return;
      }
    }
  };

  const std::size_t n_workers =
      std::min<std::size_t>(static_cast<std::size_t>(cfg.parallel_episodes), std::max<std::size_t>(todo.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < n_workers; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  {
    std::lock_guard lock(mu);
    write_manifest();
  }
  if (first_error) std::rethrow_exception(first_error);

  ResultSet out;
  out.config_hash = options.config_hash;
  for (auto& s : slots) {
    if (s) {
      out.trajectories.push_back(std::move(*s));
    } else {
      ++out.pending;
    }
  }
  std::stable_sort(out.trajectories.begin(), out.trajectories.end(), episode_less);
  out.summaries = summarize(out.trajectories);
  return out;
}

ResultSet load_results(const fs::path& out_dir) {
  ResultSet out;
  std::vector<fs::path> paths;
  const fs::path manifest = out_dir / "manifest.json";
  if (fs::exists(manifest)) {
    json j;
    try {
      j = json::parse(read_file(manifest));
      for (const auto& f : j.at("files")) paths.push_back(out_dir / f.get<std::string>());
      out.config_hash = j.at("config_hash").get<std::string>();
      out.pending = j.at("pending").get<std::size_t>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::invalid_argument, "manifest: " + std::string(e.what()));
    }
  } else {
    const fs::path dir = fs::exists(out_dir / "trajectories") ? out_dir / "trajectories" : out_dir;
    if (!fs::is_directory(dir)) throw Error(ErrorCode::io, "IoError: no such directory " + dir.string());
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.path().extension() == ".jsonl") paths.push_back(entry.path());
    }
    std::sort(paths.begin(), paths.end());
  }
  for (const auto& p : paths) out.trajectories.push_back(read_trajectory(p));
  std::stable_sort(out.trajectories.begin(), out.trajectories.end(), episode_less);
  if (out.config_hash.empty() && !out.trajectories.empty()) out.config_hash = out.trajectories.front().config_hash;
  out.summaries = summarize(out.trajectories);
  return out;
}

// ---- reflexion ----------------------------------------------------------------------

void ReflexionMemory::add(std::string reflection) {
  if (reflections.size() >= kCap) reflections.erase(reflections.begin());
  reflections.push_back(std::move(reflection));
}

Messages reflection_messages(const Trajectory& traj) {
  const backbones::Context ctx = initial_context(traj.task, traj.backbone, {});
  std::string transcript = ctx.first_user;
  for (const auto& s : traj.steps) {
    const std::string action = s.format_failure && !s.completions.empty() ? s.completions.back().text : s.action;
    transcript += "\n> " + action + "\n" + s.observation;
  }
  transcript += "\n\nThe episode ended without completing the task. Reflection:";
  return {{Role::system, gateway::kReflectionPrompt}, {Role::user, transcript}};
}

std::string reflect_on_failure(const Trajectory& traj, Backend& backend, const gateway::CompletionParams& params) {
  if (traj.success) throw Error(ErrorCode::precondition, "reflect_on_failure: trajectory succeeded");
  return backend.complete(reflection_messages(traj), params).text;
}

ReflexionResult run_reflexion(const TaskSpec& task, const Backbone& backbone, Backend& backend, const RunConfig& cfg,
                              int n_trials, const std::string& config_hash) {
  if (n_trials < 1) throw Error(ErrorCode::config, "InvalidConfig: n_trials must be >= 1");
  ReflexionResult res;
  res.memory.task_id = task.task_id;
  bool solved = false;
  for (int i = 0; i < n_trials; ++i) {
    TrialResult trial;
    trial.trial = i;
    if (solved) {
      trial.skipped = true;
      trial.success = true;
      res.trials.push_back(std::move(trial));
      continue;
    }
    res.memory.trial_index = i;
    Trajectory traj = run_episode(task, backbone, backend, cfg, &res.memory, config_hash);
    trial.success = traj.success;
    const bool backend_failed = traj.terminated_by == TerminatedBy::backend_error;
    if (backend_failed) res.error = traj.error;
    if (!traj.success && !backend_failed) {
      try {
        trial.reflection = reflect_on_failure(traj, backend, cfg.params);
        res.memory.add(*trial.reflection);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::backend) throw;
        res.error = e.what();
      }
    }
    solved = traj.success;
    trial.trajectory = std::move(traj);
    res.trials.push_back(std::move(trial));
    if (res.error) break;
  }
  return res;
}

}  // namespace reflact::runner
