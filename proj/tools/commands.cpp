#include "commands.hpp"

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "reflact.h"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

int exit_for(rf_status s) {
  if (s == RF_OK) return kExitOk;
  return s == RF_ERR_CONFIG ? kExitConfig : kExitTask;
}

int fail(rf_status s) {
  std::cerr << "error: " << rf_last_error() << "\n";
  return exit_for(s);
}

// Owns a string handed out by the C API.
struct Owned {
  char* p = nullptr;
  ~Owned() { rf_free(p); }
  std::string str() const { return p ? p : ""; }
};

using ConfigPtr = std::unique_ptr<rf_config, decltype(&rf_config_free)>;
using TaskPtr = std::unique_ptr<rf_task, decltype(&rf_task_free)>;
using EnvPtr = std::unique_ptr<rf_env, decltype(&rf_env_free)>;

rf_status load(const ConfigFlags& flags, ConfigPtr& out) {
  rf_config* raw = nullptr;
  const std::string overrides = flags.overrides.dump();
  const rf_status s = rf_config_load(flags.config_path.empty() ? nullptr : flags.config_path.c_str(),
                                     overrides.c_str(), &raw);
  out.reset(raw);
  return s;
}

std::string out_dir_of(const rf_config* cfg) {
  Owned d;
  rf_config_describe(cfg, &d.p);
  return json::parse(d.str()).at("out").get<std::string>();
}

extern "C" void on_sigint(int) { rf_request_cancel(); }

extern "C" void print_event(const char* event, void* user) {
  if (*static_cast<bool*>(user)) return;
  const json e = json::parse(event);
  if (e.at("type") == "episode") {
    std::fprintf(stderr, "%-28s %-16s %s  steps=%-3d progress=%.2f (%s)\n", e.at("task_id").get<std::string>().c_str(),
                 e.at("kind").get<std::string>().c_str(), e.at("success").get<bool>() ? "ok  " : "fail",
                 e.at("steps").get<int>(), e.at("final_progress").get<double>(),
                 e.at("terminated_by").get<std::string>().c_str());
  } else {
    std::fprintf(stderr, "%-28s %-16s %s after %d trial(s)\n", e.at("task_id").get<std::string>().c_str(),
                 e.at("kind").get<std::string>().c_str(), e.at("solved").get<bool>() ? "solved  " : "unsolved",
                 e.at("trials").get<int>());
  }
}

std::optional<std::string> read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

rf_status load_task(const TaskArgs& args, TaskPtr& out) {
  rf_task* raw = nullptr;
  rf_status s;
  if (!args.task_file.empty()) {
    const auto text = read_text(args.task_file);
    if (!text) {
      std::cerr << "error: cannot read " << args.task_file << "\n";
      return RF_ERR_IO;
    }
    s = rf_task_from_json(text->c_str(), &raw);
  } else {
    s = rf_task_generate(args.seed, args.task_type.c_str(), args.flavor.c_str(), &raw);
  }
  out.reset(raw);
  return s;
}

}  // namespace

int cmd_gen(const GenArgs& args) {
  ConfigPtr cfg(nullptr, rf_config_free);
  if (rf_status s = load(args.cfg, cfg); s != RF_OK) return fail(s);
  const std::string out = out_dir_of(cfg.get());
  Owned summary;
  if (rf_status s = rf_generate_tasks(cfg.get(), out.c_str(), &summary.p); s != RF_OK) return fail(s);
  const json j = json::parse(summary.str());
  for (const auto& skip : j.at("skipped")) std::cerr << "skipped unsupported combination " << skip.get<std::string>() << "\n";
  std::cout << "wrote " << j.at("tasks").size() << " tasks to " << (fs::path(out) / "tasks").string() << "\n";
  return kExitOk;
}

int cmd_run(const RunArgs& args) {
  ConfigPtr cfg(nullptr, rf_config_free);
  if (rf_status s = load(args.cfg, cfg); s != RF_OK) return fail(s);
  const std::string out = out_dir_of(cfg.get());
  rf_clear_cancel();
  std::signal(SIGINT, on_sigint);
  bool quiet = args.quiet;
  Owned summary;
  const rf_status s = rf_run_suite(cfg.get(), out.c_str(), print_event, &quiet, &summary.p);
  std::signal(SIGINT, SIG_DFL);
  if (s != RF_OK) return fail(s);
  const json j = json::parse(summary.str());
  for (const auto& skip : j.at("skipped")) std::cerr << "skipped unsupported combination " << skip.get<std::string>() << "\n";
  std::printf("%zu trajectories in %s (config %s)\n", j.at("episodes").get<std::size_t>(),
              (fs::path(out) / "trajectories").string().c_str(), j.at("config_hash").get<std::string>().c_str());
  std::printf("%-18s %8s %8s %8s\n", "kind", "episodes", "SR", "AR");
  for (const auto& k : j.at("summaries")) {
    std::printf("%-18s %8d %7.1f%% %7.1f%%\n", k.at("kind").get<std::string>().c_str(), k.at("episodes").get<int>(),
                100.0 * k.at("success_rate").get<double>(), 100.0 * k.at("average_reward").get<double>());
  }
  if (j.at("pending").get<std::size_t>() > 0) {
    std::cerr << "interrupted: " << j.at("pending").get<std::size_t>()
              << " episode(s) not run; rerun the same command to resume\n";
    return kExitTask;
  }
  return kExitOk;
}

int cmd_reflexion(const RunArgs& args) {
  ConfigPtr cfg(nullptr, rf_config_free);
  if (rf_status s = load(args.cfg, cfg); s != RF_OK) return fail(s);
  const std::string out = out_dir_of(cfg.get());
  rf_clear_cancel();
  std::signal(SIGINT, on_sigint);
  bool quiet = args.quiet;
  Owned summary;
  const rf_status s = rf_run_reflexion(cfg.get(), out.c_str(), print_event, &quiet, &summary.p);
  std::signal(SIGINT, SIG_DFL);
  if (s != RF_OK) return fail(s);
  const json j = json::parse(summary.str());
  std::printf("cumulative success rate by trial (report: %s)\n",
              (fs::path(out) / "reports" / "reflexion.json").string().c_str());
  for (const auto& k : j.at("kinds")) {
    std::printf("%-18s", k.at("kind").get<std::string>().c_str());
    for (const auto& v : k.at("cumulative_success_rate")) std::printf(" %6.1f%%", 100.0 * v.get<double>());
    std::printf("\n");
  }
  if (j.at("backend_errors").get<int>() > 0) {
    std::cerr << j.at("backend_errors").get<int>() << " task(s) stopped on a backend error\n";
    return kExitTask;
  }
  if (j.at("pending").get<int>() > 0) {
    std::cerr << "interrupted: " << j.at("pending").get<int>() << " task(s) not run\n";
    return kExitTask;
  }
  return kExitOk;
}

int cmd_replay(const ReplayArgs& args) {
  std::vector<fs::path> files;
  for (const auto& in : args.inputs) {
    if (fs::is_directory(in)) {
      const fs::path dir = fs::is_directory(fs::path(in) / "trajectories") ? fs::path(in) / "trajectories" : fs::path(in);
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".jsonl") found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::exists(in)) {
      files.emplace_back(in);
    } else {
      std::cerr << "error: no such file or directory: " << in << "\n";
      return kExitConfig;
    }
  }
  if (files.empty()) {
    std::cerr << "error: no trajectories found\n";
    return kExitTask;
  }
  int differing = 0;
  for (const auto& f : files) {
    int identical = 0;
    Owned report;
    if (rf_status s = rf_replay_file(f.string().c_str(), &identical, &report.p); s != RF_OK) {
      std::cerr << f.string() << ": ";
      return fail(s);
    }
    if (identical) {
      std::cout << f.string() << ": identical\n";
    } else {
      ++differing;
      std::cout << f.string() << ": differs at line " << json::parse(report.str()).at("first_difference_line") << "\n";
    }
  }
  return differing == 0 ? kExitOk : kExitTask;
}

int cmd_analyze(const AnalyzeArgs& args) {
  std::vector<const char*> dirs;
  for (const auto& in : args.inputs) dirs.push_back(in.c_str());
  const std::string out = args.out.empty() ? (fs::path(args.inputs.front()) / "reports").string() : args.out;
  Owned summary;
  const rf_status s = rf_analyze(dirs.data(), dirs.size(), args.compare.empty() ? nullptr : args.compare.c_str(),
                                 args.force ? 1 : 0, out.c_str(), &summary.p);
  if (s != RF_OK) return fail(s);
  const json j = json::parse(summary.str());
  std::printf("%zu trajectories, config %s\n", j.at("trajectories").get<std::size_t>(),
              j.at("config_hash").get<std::string>().c_str());
  std::printf("%-18s %8s %7s %7s %9s %8s %10s %9s\n", "kind", "episodes", "SR", "AR", "entropy", "invalid", "tok/step",
              "steps");
  for (const auto& k : j.at("kinds")) {
    const std::string entropy = k.at("mean_entropy").is_null() ? "n/a" : std::to_string(k.at("mean_entropy").get<double>()).substr(0, 6);
    std::printf("%-18s %8d %6.1f%% %6.1f%% %9s %8.3f %9.1f%s %9.1f\n", k.at("kind").get<std::string>().c_str(),
                k.at("episodes").get<int>(), 100.0 * k.at("success_rate").get<double>(),
                100.0 * k.at("average_reward").get<double>(), entropy.c_str(), k.at("hallucination_rate").get<double>(),
                k.at("tokens_per_step").get<double>(), k.at("tokens_per_step_approximate").get<bool>() ? "~" : " ",
                k.at("steps_per_episode").get<double>());
  }
  std::printf("wrote %s/{metrics.csv,overlap.csv,report.md}\n", out.c_str());
  return kExitOk;
}

int cmd_probe(const ProbeArgs& args) {
  ConfigFlags flags = args.cfg;
  // A scripted probe is only informative with the probe policy.
  if (!flags.overrides.contains("backend") || !flags.overrides["backend"].contains("policy")) {
    if (flags.config_path.empty()) flags.overrides["backend"]["policy"] = "probe";
  }
  ConfigPtr cfg(nullptr, rf_config_free);
  if (rf_status s = load(flags, cfg); s != RF_OK) return fail(s);
  json variants = json::array();
  if (!args.variants_file.empty()) {
    const auto text = read_text(args.variants_file);
    if (!text) {
      std::cerr << "error: cannot read " << args.variants_file << "\n";
      return kExitConfig;
    }
    try {
      variants = json::parse(*text);
    } catch (const json::exception& e) {
      std::cerr << "error: " << args.variants_file << ": " << e.what() << "\n";
      return kExitConfig;
    }
  }
  for (const auto& t : args.thoughts) variants.push_back(t);
  if (variants.empty()) variants.push_back("");
  Owned result;
  const std::string vtext = variants.dump();
  if (rf_status s = rf_probe(cfg.get(), args.input.c_str(), args.t, vtext.c_str(), &result.p); s != RF_OK) return fail(s);
  const json j = json::parse(result.str());
  if (!args.out.empty()) {
    if (fs::path(args.out).has_parent_path()) fs::create_directories(fs::path(args.out).parent_path());
    std::ofstream(args.out, std::ios::binary) << result.str() << "\n";
  }
  for (std::size_t i = 0; i < j.at("distributions").size(); ++i) {
    const auto& d = j.at("distributions")[i];
    const std::string v = j.at("variants")[i].get<std::string>();
    std::printf("variant %zu %s: entropy %.4f nats\n", i, v.empty() ? "(no thought)" : ("\"" + v + "\"").c_str(),
                d.at("entropy").get<double>());
    for (const auto& e : d.at("entries")) {
      if (e.at("probability").get<double>() >= 0.01) {
        std::printf("  %.3f  %s\n", e.at("probability").get<double>(), e.at("action").get<std::string>().c_str());
      }
    }
  }
  return kExitOk;
}

int cmd_serve(const TaskArgs& args) {
  EnvPtr env(nullptr, rf_env_free);
  auto reply_error = [](rf_status s) {
    std::cout << json{{"ok", false}, {"code", rf_status_name(s)}, {"error", rf_last_error()}}.dump() << std::endl;
  };
  auto start = [&](TaskPtr task) -> json {
    rf_env* raw = nullptr;
    if (rf_status s = rf_env_new(task.get(), &raw); s != RF_OK) throw s;
    env.reset(raw);
    Owned r, id;
    rf_env_reset(env.get(), &r.p);
    rf_task_id(task.get(), &id.p);
    json j = json::parse(r.str());
    j["ok"] = true;
    j["task_id"] = id.str();
    return j;
  };
  if (!args.task_file.empty()) {
    TaskPtr task(nullptr, rf_task_free);
    if (rf_status s = load_task(args, task); s != RF_OK) return fail(s);
    try {
      start(std::move(task));
    } catch (rf_status s) {
      return fail(s);
    }
  }

  std::string line;
  while (std::getline(std::cin, line)) {
    if (line.empty()) continue;
    json req;
    try {
      req = json::parse(line);
    } catch (const json::exception& e) {
      std::cout << json{{"ok", false}, {"code", "invalid_argument"}, {"error", std::string("bad request: ") + e.what()}}.dump()
                << std::endl;
      continue;
    }
    const std::string op = req.value("op", "");
    try {
      if (op == "reset") {
        TaskPtr task(nullptr, rf_task_free);
        rf_task* raw = nullptr;
        rf_status s;
        if (req.contains("task")) {
          s = rf_task_from_json(req.at("task").dump().c_str(), &raw);
        } else if (req.contains("seed")) {
          s = rf_task_generate(req.at("seed").get<std::uint64_t>(), req.value("task_type", "put").c_str(),
                               req.value("flavor", "binary").c_str(), &raw);
        } else if (env) {
          Owned r;
          s = rf_env_reset(env.get(), &r.p);
          if (s != RF_OK) throw s;
          json j = json::parse(r.str());
          j["ok"] = true;
          std::cout << j.dump() << std::endl;
          continue;
        } else {
          std::cout << json{{"ok", false}, {"code", "invalid_argument"}, {"error", "reset needs \"task\" or \"seed\""}}.dump()
                    << std::endl;
          continue;
        }
        task.reset(raw);
        if (s != RF_OK) throw s;
        std::cout << start(std::move(task)).dump() << std::endl;
      } else if (op == "close") {
        std::cout << json{{"ok", true}}.dump() << std::endl;
        return kExitOk;
      } else if (!env) {
        std::cout << json{{"ok", false}, {"code", "precondition"}, {"error", "no task loaded; send reset first"}}.dump()
                  << std::endl;
      } else if (op == "step") {
        Owned r;
        if (rf_status s = rf_env_step(env.get(), req.value("action", "").c_str(), &r.p); s != RF_OK) throw s;
        json j = json::parse(r.str());
        j["ok"] = true;
        j["done"] = j.at("success");
        std::cout << j.dump() << std::endl;
      } else if (op == "valid_actions") {
        Owned r;
        if (rf_status s = rf_env_valid_actions(env.get(), &r.p); s != RF_OK) throw s;
        std::cout << json{{"ok", true}, {"actions", json::parse(r.str())}}.dump() << std::endl;
      } else if (op == "state") {
        Owned r;
        if (rf_status s = rf_env_state(env.get(), &r.p); s != RF_OK) throw s;
        std::cout << json{{"ok", true}, {"state", json::parse(r.str())}}.dump() << std::endl;
      } else {
        std::cout << json{{"ok", false}, {"code", "invalid_argument"}, {"error", "unknown op '" + op + "'"}}.dump()
                  << std::endl;
      }
    } catch (rf_status s) {
      reply_error(s);
    } catch (const json::exception& e) {
      std::cout << json{{"ok", false}, {"code", "invalid_argument"}, {"error", std::string("bad request: ") + e.what()}}.dump()
                << std::endl;
    }
  }
  return kExitOk;
}

int cmd_play(const TaskArgs& args) {
  TaskPtr task(nullptr, rf_task_free);
  if (rf_status s = load_task(args, task); s != RF_OK) return fail(s);
  rf_env* raw = nullptr;
  if (rf_status s = rf_env_new(task.get(), &raw); s != RF_OK) return fail(s);
  EnvPtr env(raw, rf_env_free);

  auto show_start = [&] {
    Owned r;
    rf_env_reset(env.get(), &r.p);
    const json j = json::parse(r.str());
    std::cout << j.at("observation").get<std::string>() << "\n" << j.at("instruction").get<std::string>() << "\n";
  };
  Owned id;
  rf_task_id(task.get(), &id.p);
  std::cout << "task " << id.str() << "  (commands: :valid  :state  :reset  :help  :quit)\n\n";
  show_start();

  std::string line;
  while (true) {
    std::cout << "> " << std::flush;
    if (!std::getline(std::cin, line)) break;
    if (line.empty()) continue;
    if (line == ":quit" || line == ":q") break;
    if (line == ":help") {
      std::cout << "Type an action such as 'go to cabinet 1'. :valid lists the actions that would change the "
                   "world; :state prints the full state; :reset restarts the task.\n";
      continue;
    }
    if (line == ":reset") {
      show_start();
      continue;
    }
    if (line == ":valid") {
      Owned r;
      rf_env_valid_actions(env.get(), &r.p);
      for (const auto& a : json::parse(r.str())) std::cout << "  " << a.get<std::string>() << "\n";
      continue;
    }
    if (line == ":state") {
      Owned r;
      rf_env_state(env.get(), &r.p);
      std::cout << json::parse(r.str()).dump(2) << "\n";
      continue;
    }
    Owned r;
    if (rf_status s = rf_env_step(env.get(), line.c_str(), &r.p); s != RF_OK) {
      std::cerr << "error: " << rf_last_error() << "\n";
      continue;
    }
    const json j = json::parse(r.str());
    std::printf("%s\n[step %d, progress %.2f]\n", j.at("observation").get<std::string>().c_str(), j.at("step").get<int>(),
                j.at("progress").get<double>());
    if (j.at("success").get<bool>()) std::cout << "Task complete.\n";
  }
  return kExitOk;
}

int cmd_verify(const VerifyArgs& args) {
  std::uint64_t begin = 0, end = 0;
  if (rf_status s = rf_parse_seed_range(args.seeds.c_str(), &begin, &end); s != RF_OK) return fail(s);
  std::vector<std::string> types;
  std::stringstream in(args.types);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item == "all") {
      types.insert(types.end(), {"put", "clean", "heat", "cool", "examine", "puttwo"});
    } else if (!item.empty()) {
      types.push_back(item);
    }
  }
  int bad = 0;
  for (const auto& type : types) {
    Owned report;
    const rf_status s = rf_verify(begin, end, type.c_str(), args.flavor.c_str(), args.step_budget, &report.p);
    if (s == RF_ERR_UNSUPPORTED) {
      std::printf("%-8s %-6s skipped (%s)\n", type.c_str(), args.flavor.c_str(), rf_last_error());
      continue;
    }
    if (s != RF_OK) return s == RF_ERR_INVALID_ARGUMENT ? (std::cerr << "error: " << rf_last_error() << "\n", kExitConfig) : fail(s);
    const json j = json::parse(report.str());
    const auto failures = j.at("failures");
    std::printf("%-8s %-6s checked %zu, failures %zu\n", type.c_str(), args.flavor.c_str(),
                j.at("checked").get<std::size_t>(), failures.size());
    for (std::size_t i = 0; i < failures.size() && i < 10; ++i) {
      std::printf("  seed %llu: %s\n", failures[i].at("seed").get<unsigned long long>(),
                  failures[i].at("reason").get<std::string>().c_str());
    }
    if (!failures.empty()) ++bad;
  }
  return bad == 0 ? kExitOk : kExitTask;
}
