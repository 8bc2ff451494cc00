#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>

#include "commands.hpp"

using nlohmann::json;

namespace {

const char* kAllTypes[] = {"put", "clean", "heat", "cool", "examine", "puttwo"};
const char* kAllKinds[] = {"nothinking", "react", "planandact", "reflact", "state", "goal", "stategoal", "stategoalthought"};

json split_list(const std::string& csv, const char* const* all, std::size_t n_all) {
  json out = json::array();
  std::stringstream in(csv);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    if (item == "all") {
      for (std::size_t i = 0; i < n_all; ++i) out.push_back(all[i]);
    } else {
      out.push_back(item);
    }
  }
  return out;
}

// Flags that map onto the configuration file schema.
struct SharedFlags {
  std::string config_path;
  std::string backend, policy, base_url, model, seeds, types, flavors, kinds, out;
  double temperature = 0, rps = 0, gamma = 1;
  int max_tokens = 0, max_in_flight = 0, step_budget = 0, retries = 0, parallel = 0, trials = 0;
  bool record_distributions = false;
  std::vector<std::string> overrides;
  std::map<std::string, CLI::Option*> opts;

  void add(CLI::App* app, bool suite, bool reflexion) {
    app->add_option("-c,--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
    opts["backend"] = app->add_option("--backend", backend, "scripted | live");
    opts["policy"] = app->add_option("--policy", policy, "scripted policy: oracle | always_fail | fail_then_succeed | probe");
    opts["base_url"] = app->add_option("--base-url", base_url, "chat-completions endpoint base URL");
    opts["model"] = app->add_option("--model", model, "model name for the live backend");
    opts["temperature"] = app->add_option("--temperature", temperature, "sampling temperature");
    opts["max_tokens"] = app->add_option("--max-tokens", max_tokens, "completion token limit");
    opts["rps"] = app->add_option("--rps", rps, "live requests per second (0 = unlimited)");
    opts["max_in_flight"] = app->add_option("--max-in-flight", max_in_flight, "concurrent live requests");
    if (suite) {
      opts["seeds"] = app->add_option("--seeds", seeds, "seed range A..B, inclusive on both ends (0..9 is ten seeds)");
      opts["types"] = app->add_option("--types", types, "comma-separated task types or 'all'");
      opts["flavors"] = app->add_option("--flavors,--flavor", flavors, "binary, dense, or both comma-separated");
      opts["kinds"] = app->add_option("--kinds", kinds, "comma-separated backbones or 'all'");
      opts["out"] = app->add_option("-o,--out", out, "output directory");
    }
    opts["step_budget"] = app->add_option("--step-budget", step_budget, "maximum steps per episode");
    opts["retries"] = app->add_option("--retries", retries, "corrective retries after a format error");
    opts["parallel"] = app->add_option("-j,--parallel", parallel, "episodes run concurrently");
    opts["gamma"] = app->add_option("--gamma", gamma, "discount factor");
    opts["record_distributions"] =
        app->add_flag("--record-distributions", record_distributions, "score valid actions at every step");
    opts["overrides"] = app->add_option("--override", overrides, "KIND=PATH replacement format paragraph");
    if (reflexion) opts["trials"] = app->add_option("--trials", trials, "Reflexion trials per task");
  }

  bool given(const char* key) const {
    const auto it = opts.find(key);
    return it != opts.end() && it->second->count() > 0;
  }

  ConfigFlags build() const {
    ConfigFlags f;
    f.config_path = config_path;
    json& o = f.overrides;
    if (given("backend")) o["backend"]["kind"] = backend;
    if (given("policy")) o["backend"]["policy"] = policy;
    if (given("base_url")) o["backend"]["base_url"] = base_url;
    if (given("model")) o["backend"]["model"] = model;
    if (given("temperature")) o["backend"]["temperature"] = temperature;
    if (given("max_tokens")) o["backend"]["max_tokens"] = max_tokens;
    if (given("rps")) o["backend"]["requests_per_second"] = rps;
    if (given("max_in_flight")) o["backend"]["max_in_flight"] = max_in_flight;
    if (given("seeds")) o["suite"]["seeds"] = seeds;
    if (given("types")) o["suite"]["task_types"] = split_list(types, kAllTypes, std::size(kAllTypes));
    if (given("flavors")) o["suite"]["flavors"] = split_list(flavors, nullptr, 0);
    if (given("kinds")) o["suite"]["kinds"] = split_list(kinds, kAllKinds, std::size(kAllKinds));
    if (given("out")) o["out"] = out;
    if (given("step_budget")) o["run"]["step_budget"] = step_budget;
    if (given("retries")) o["run"]["retry_on_format_error"] = retries;
    if (given("parallel")) o["run"]["parallel_episodes"] = parallel;
    if (given("gamma")) o["run"]["gamma"] = gamma;
    if (given("record_distributions")) o["run"]["record_distributions"] = record_distributions;
    if (given("trials")) o["reflexion"]["trials"] = trials;
    for (const auto& spec : overrides) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--override", "expected KIND=PATH");
      o["instruction_overrides"][spec.substr(0, eq)] = std::filesystem::absolute(spec.substr(eq + 1)).string();
    }
    return f;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-environment agent lab: task generation, agent runs, replay and analysis."};
  app.require_subcommand(1);

  SharedFlags gen_flags, run_flags, refl_flags, probe_flags;
  bool quiet = false;

  auto* gen = app.add_subcommand("gen", "generate seeded tasks into OUT/tasks");
  gen_flags.add(gen, true, false);

  auto* run = app.add_subcommand("run", "run every task x backbone of the suite into OUT/trajectories");
  run_flags.add(run, true, false);
  run->add_flag("-q,--quiet", quiet, "no per-episode progress lines");

  auto* refl = app.add_subcommand("reflexion", "multi-trial runs with post-failure reflections");
  refl_flags.add(refl, true, true);
  refl->add_flag("-q,--quiet", quiet, "no per-task progress lines");

  ReplayArgs replay_args;
  auto* replay = app.add_subcommand("replay", "re-execute stored trajectories and compare bytes");
  replay->add_option("-i,--in", replay_args.inputs, "trajectory file or run directory")->required();

  AnalyzeArgs analyze_args;
  auto* analyze = app.add_subcommand("analyze", "metrics.csv, overlap.csv and report.md from stored runs");
  analyze->add_option("-i,--in", analyze_args.inputs, "run directory (repeatable)")->required();
  analyze->add_option("--compare", analyze_args.compare, "backbones for the failure overlap, comma-separated");
  analyze->add_option("-o,--out", analyze_args.out, "report directory (default: first input's reports/)");
  analyze->add_flag("--force", analyze_args.force, "accept inputs with different config hashes");

  ProbeArgs probe_args;
  auto* probe = app.add_subcommand("probe", "score valid actions under injected thoughts at one step");
  probe_flags.add(probe, false, false);
  probe->add_option("-i,--in", probe_args.input, "trajectory file")->required()->check(CLI::ExistingFile);
  probe->add_option("-t,--step", probe_args.t, "step whose context is probed (1-based)");
  probe->add_option("--thought", probe_args.thoughts, "thought variant (repeatable; \"\" for none)");
  probe->add_option("--variants", probe_args.variants_file, "JSON array of thought variants")->check(CLI::ExistingFile);
  probe->add_option("-o,--out", probe_args.out, "write the result JSON here");

  TaskArgs serve_args, play_args;
  auto* serve = app.add_subcommand("serve", "environment over stdio, one JSON request per line");
  serve->add_option("--task", serve_args.task_file, "task JSON to load at start")->check(CLI::ExistingFile);
  auto* play = app.add_subcommand("play", "type actions against a generated task");
  play->add_option("--task", play_args.task_file, "task JSON file")->check(CLI::ExistingFile);
  play->add_option("--seed", play_args.seed, "task seed");
  play->add_option("--type", play_args.task_type, "task type");
  play->add_option("--flavor", play_args.flavor, "binary | dense");

  VerifyArgs verify_args;
  auto* verify = app.add_subcommand("verify", "check that generated tasks are solvable within the step budget");
  verify->add_option("--seeds", verify_args.seeds, "seed range A..B, inclusive on both ends");
  verify->add_option("--types", verify_args.types, "comma-separated task types or 'all'");
  verify->add_option("--flavor", verify_args.flavor, "binary | dense");
  verify->add_option("--step-budget", verify_args.step_budget, "budget the oracle plan must fit");

  try {
    app.parse(argc, argv);
    if (*gen) return cmd_gen({gen_flags.build()});
    if (*run) return cmd_run({run_flags.build(), quiet});
    if (*refl) return cmd_reflexion({refl_flags.build(), quiet});
    if (*replay) return cmd_replay(replay_args);
    if (*analyze) return cmd_analyze(analyze_args);
    if (*probe) {
      probe_args.cfg = probe_flags.build();
      return cmd_probe(probe_args);
    }
    if (*serve) return cmd_serve(serve_args);
    if (*play) return cmd_play(play_args);
    if (*verify) return cmd_verify(verify_args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  return kExitConfig;
}
