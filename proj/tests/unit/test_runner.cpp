#include <doctest.h>

#include <filesystem>
#include <mutex>

#include "fixtures.hpp"
#include "reflact/error.hpp"
#include "reflact/runner.hpp"

using namespace reflact;
using namespace reflact::runner;
using backbones::Backbone;
using backbones::BackboneKind;
using gateway::ScriptedBackend;
using gateway::ScriptedPolicy;
using world::RewardFlavor;
using world::TaskType;

namespace {

// Wraps a backend and keeps every message list it was asked to complete.
class Recorder final : public gateway::Backend {
 public:
  explicit Recorder(gateway::Backend& inner) : inner_(inner) {}
  gateway::CompletionResult complete(const Messages& m, const gateway::CompletionParams& p) override {
    calls.push_back(m);
    return inner_.complete(m, p);
  }
  gateway::ActionDistribution score_candidates(const Messages& m, const std::vector<std::string>& c) override {
    return inner_.score_candidates(m, c);
  }
  nlohmann::json descriptor() const override { return inner_.descriptor(); }

  std::vector<Messages> calls;

 private:
  gateway::Backend& inner_;
};

// Always answers with the same text.
class Fixed final : public gateway::Backend {
 public:
  explicit Fixed(std::string text, int fail_after = -1) : text_(std::move(text)), fail_after_(fail_after) {}
  gateway::CompletionResult complete(const Messages&, const gateway::CompletionParams&) override {
    if (fail_after_ >= 0 && calls_ >= fail_after_) throw Error(ErrorCode::backend, "TransportError: test outage");
    ++calls_;
    return {text_, gateway::Usage{10, 3}, "stop"};
  }
  gateway::ActionDistribution score_candidates(const Messages&, const std::vector<std::string>&) override {
    throw Error(ErrorCode::unsupported, "UnsupportedByBackend: fixed");
  }
  nlohmann::json descriptor() const override { return {{"kind", "fixed"}}; }

 private:
  std::string text_;
  int fail_after_;
  int calls_ = 0;
};

std::vector<taskgen::TaskSpec> binary_tasks(std::uint64_t n) {
  std::vector<taskgen::TaskSpec> out;
  for (std::uint64_t seed = 0; seed < n; ++seed) {
    out.push_back(taskgen::generate(seed, world::kAllTaskTypes[seed % std::size(world::kAllTaskTypes)],
                                    RewardFlavor::binary));
  }
  return out;
}

BackendFactory scripted(ScriptedPolicy policy = ScriptedPolicy::oracle) {
  return [policy](const taskgen::TaskSpec& task, BackboneKind kind) {
    return std::make_shared<ScriptedBackend>(task, kind, policy);
  };
}

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("reflact_runner_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("scripted oracle solves generated tasks under every kind in plan length") {
  std::vector<taskgen::TaskSpec> tasks = binary_tasks(6);
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    for (TaskType type : {TaskType::put, TaskType::clean, TaskType::heat, TaskType::cool}) {
      tasks.push_back(taskgen::generate(seed, type, RewardFlavor::dense));
    }
  }
  for (const auto& task : tasks) {
    const auto plan = taskgen::oracle_solve(task);
    for (BackboneKind kind : backbones::kAllKinds) {
      INFO(task.task_id << " " << backbones::to_string(kind));
      ScriptedBackend backend(task, kind);
      const Trajectory t = run_episode(task, {kind, {}}, backend, RunConfig{});
      CHECK(t.success);
      CHECK(t.terminated_by == TerminatedBy::goal);
      REQUIRE(t.steps.size() == plan.actions.size());
      for (std::size_t i = 0; i < t.steps.size(); ++i) {
        CHECK(t.steps[i].t == static_cast<int>(i) + 1);
        CHECK(t.steps[i].action == world::render_action(plan.actions[i]));
        CHECK_FALSE(t.steps[i].nothing_happened);
        CHECK_FALSE(t.steps[i].lenient_parse);
        CHECK_FALSE(t.steps[i].format_failure);
      }
    }
  }
}

TEST_CASE("step budget stops the episode") {
  const auto task = fixtures::spraybottle_task();
  ScriptedBackend backend(task, BackboneKind::react);
  RunConfig cfg;
  cfg.step_budget = 1;
  const Trajectory t = run_episode(task, {BackboneKind::react, {}}, backend, cfg);
  CHECK_FALSE(t.success);
  CHECK(t.terminated_by == TerminatedBy::budget);
  CHECK(t.steps.size() == 1);

  cfg.step_budget = 0;
  CHECK_THROWS_AS(run_episode(task, {BackboneKind::react, {}}, backend, cfg), Error);
}

TEST_CASE("no trajectory exceeds the budget") {
  const auto task = fixtures::spraybottle_task();
  for (int budget : {1, 2, 5}) {
    ScriptedBackend backend(task, BackboneKind::reflact, ScriptedPolicy::always_fail);
    RunConfig cfg;
    cfg.step_budget = budget;
    const Trajectory t = run_episode(task, {BackboneKind::reflact, {}}, backend, cfg);
    CHECK(t.steps.size() == static_cast<std::size_t>(budget));
    for (const auto& s : t.steps) CHECK(s.nothing_happened);
  }
}

TEST_CASE("jsonl round trip and replay are byte identical") {
  const auto task = fixtures::spraybottle_task();
  for (BackboneKind kind : backbones::kAllKinds) {
    for (bool dists : {false, true}) {
      ScriptedBackend backend(task, kind);
      RunConfig cfg;
      cfg.record_distributions = dists;
      const Trajectory t = run_episode(task, {kind, {}}, backend, cfg, nullptr, "cafe");
      const std::string text = to_jsonl(t);
      CHECK(to_jsonl(trajectory_from_jsonl(text)) == text);
      CHECK(to_jsonl(replay(trajectory_from_jsonl(text))) == text);
      if (dists) {
        for (const auto& s : t.steps) REQUIRE(s.distribution);
      }
    }
  }
}

TEST_CASE("replay reproduces failures, format errors and outages") {
  const auto task = fixtures::spraybottle_task();
  RunConfig cfg;
  cfg.step_budget = 4;

  ScriptedBackend failing(task, BackboneKind::reflact, ScriptedPolicy::always_fail);
  const Trajectory a = run_episode(task, {BackboneKind::reflact, {}}, failing, cfg);
  CHECK(to_jsonl(replay(a)) == to_jsonl(a));

  Fixed garbage("I am not sure what to do.");
  const Trajectory b = run_episode(task, {BackboneKind::reflact, {}}, garbage, cfg);
  REQUIRE(b.steps.size() == 4);
  for (const auto& s : b.steps) {
    CHECK(s.format_failure);
    CHECK(s.observation == "Nothing happens.");
    CHECK(s.completions.size() == 2);
    CHECK(s.usage == gateway::Usage{20, 6});
  }
  CHECK(to_jsonl(replay(b)) == to_jsonl(b));

  Fixed outage("Action: go to cabinet 1", 2);
  const Trajectory c = run_episode(task, {BackboneKind::nothinking, {}}, outage, cfg);
  CHECK(c.terminated_by == TerminatedBy::backend_error);
  CHECK(c.steps.size() == 2);
  REQUIRE(c.error);
  CHECK(c.error->find("TransportError") == 0);
  CHECK(to_jsonl(replay(c)) == to_jsonl(c));
}

TEST_CASE("corrective retry appends the bad output and the format sentence") {
  const auto task = fixtures::spraybottle_task();
  Fixed garbage("no labels here");
  Recorder rec(garbage);
  RunConfig cfg;
  cfg.step_budget = 1;
  run_episode(task, {BackboneKind::reflact, {}}, rec, cfg);
  REQUIRE(rec.calls.size() == 2);
  const Messages& retry = rec.calls[1];
  REQUIRE(retry.size() == rec.calls[0].size() + 2);
  CHECK(retry[retry.size() - 2].content == "no labels here");
  CHECK(retry.back().content.find(backbones::kCorrectiveSuffix) == 0);
}

TEST_CASE("step records reconstruct every context sent") {
  const auto task = fixtures::spraybottle_task();
  for (BackboneKind kind : backbones::kAllKinds) {
    ScriptedBackend inner(task, kind);
    Recorder rec(inner);
    const Trajectory t = run_episode(task, {kind, {}}, rec, RunConfig{});
    REQUIRE(rec.calls.size() == t.steps.size());
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
      CHECK(backbones::turn_messages(kind, context_at(t, static_cast<int>(i) + 1)) == rec.calls[i]);
    }
  }
  Fixed garbage("???");
  Recorder rec(garbage);
  RunConfig cfg;
  cfg.step_budget = 3;
  cfg.retry_on_format_error = 0;
  const Trajectory t = run_episode(task, {BackboneKind::react, {}}, rec, cfg);
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    CHECK(backbones::turn_messages(BackboneKind::react, context_at(t, static_cast<int>(i) + 1)) == rec.calls[i]);
  }
  CHECK(rec.calls[2][2].content == "???");
}

TEST_CASE("first user message") {
  const auto household = fixtures::spraybottle_task();
  const auto ctx = initial_context(household, {BackboneKind::react, {}}, {});
  CHECK(ctx.first_user == world::render_scene(household.initial_state) + "\n" + household.instruction_text);
  const auto science = taskgen::generate(3, TaskType::heat, RewardFlavor::dense);
  CHECK(initial_context(science, {BackboneKind::react, {}}, {}).first_user == science.instruction_text);
}

TEST_CASE("suite ordering, aggregates and determinism") {
  const auto tasks = binary_tasks(10);
  const std::vector<Backbone> kinds = {{BackboneKind::reflact, {}}, {BackboneKind::react, {}}};
  RunConfig cfg;
  const ResultSet a = run_suite(tasks, kinds, scripted(), cfg);
  REQUIRE(a.trajectories.size() == 20);
  for (std::size_t i = 1; i < a.trajectories.size(); ++i) {
    const auto& p = a.trajectories[i - 1];
    const auto& q = a.trajectories[i];
    CHECK((p.task.task_id < q.task.task_id ||
           (p.task.task_id == q.task.task_id && p.backbone.kind == BackboneKind::react &&
            q.backbone.kind == BackboneKind::reflact)));
  }
  REQUIRE(a.summaries.size() == 2);
  for (const auto& s : a.summaries) {
    CHECK(s.episodes == 10);
    CHECK(s.success_rate == 1.0);
    CHECK(s.average_reward == 1.0);
  }

  cfg.parallel_episodes = 4;
  const ResultSet b = run_suite(tasks, kinds, scripted(), cfg);
  REQUIRE(b.trajectories.size() == a.trajectories.size());
  for (std::size_t i = 0; i < a.trajectories.size(); ++i) {
    CHECK(to_jsonl(a.trajectories[i]) == to_jsonl(b.trajectories[i]));
  }

  CHECK_THROWS_WITH_AS(run_suite(tasks, {}, scripted(), cfg), doctest::Contains("InvalidConfig"), Error);
  CHECK_THROWS_WITH_AS(run_suite({}, kinds, scripted(), cfg), doctest::Contains("InvalidConfig"), Error);
}

TEST_CASE("suite writes a manifest and resumes") {
  const auto dir = fresh_dir("resume");
  const auto tasks = binary_tasks(3);
  const std::vector<Backbone> kinds = {{BackboneKind::nothinking, {}}, {BackboneKind::reflact, {}}};
  SuiteOptions opts;
  opts.out_dir = dir;
  opts.config_hash = "h1";

  std::mutex mu;
  int built = 0;
  BackendFactory counting = [&](const taskgen::TaskSpec& task, BackboneKind kind) {
    std::lock_guard lock(mu);
    ++built;
    return std::make_shared<ScriptedBackend>(task, kind);
  };

  RunConfig cfg;
  const ResultSet first = run_suite(tasks, kinds, counting, cfg, opts);
  CHECK(built == 6);
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  const ResultSet loaded = load_results(dir);
  REQUIRE(loaded.trajectories.size() == 6);
  CHECK(loaded.config_hash == "h1");
  for (std::size_t i = 0; i < 6; ++i) CHECK(to_jsonl(loaded.trajectories[i]) == to_jsonl(first.trajectories[i]));

  std::filesystem::remove(dir / "trajectories" / trajectory_filename(tasks[1].task_id, BackboneKind::reflact));
  built = 0;
  const ResultSet second = run_suite(tasks, kinds, counting, cfg, opts);
  CHECK(built == 1);
  CHECK(second.trajectories.size() == 6);

  opts.config_hash = "h2";
  built = 0;
  run_suite(tasks, kinds, counting, cfg, opts);
  CHECK(built == 6);
  std::filesystem::remove_all(dir);
}

TEST_CASE("manifest accumulates runs of other kinds under one configuration") {
  const auto dir = fresh_dir("accumulate");
  const auto tasks = binary_tasks(2);
  SuiteOptions opts;
  opts.out_dir = dir;
  opts.config_hash = "h1";
  run_suite(tasks, {{BackboneKind::react, {}}}, scripted(), RunConfig{}, opts);
  run_suite(tasks, {{BackboneKind::nothinking, {}}}, scripted(), RunConfig{}, opts);
  const ResultSet both = load_results(dir);
  CHECK(both.trajectories.size() == 4);
  CHECK(both.summaries.size() == 2);

  // A different configuration starts a fresh listing.
  opts.config_hash = "h2";
  run_suite(tasks, {{BackboneKind::reflact, {}}}, scripted(), RunConfig{}, opts);
  const ResultSet fresh = load_results(dir);
  CHECK(fresh.trajectories.size() == 2);
  CHECK(fresh.config_hash == "h2");
  std::filesystem::remove_all(dir);
}

TEST_CASE("cancelled suite keeps pending count") {
  std::atomic<bool> cancel{true};
  SuiteOptions opts;
  opts.cancel = &cancel;
  const ResultSet r = run_suite(binary_tasks(2), {{BackboneKind::react, {}}}, scripted(), RunConfig{}, opts);
  CHECK(r.trajectories.empty());
  CHECK(r.pending == 2);
}

TEST_CASE("reflect_on_failure") {
  const auto task = fixtures::spraybottle_task();
  RunConfig cfg;
  cfg.step_budget = 4;

  // The agent keeps going back to cabinet 1.
  Fixed looping("Thought: The spraybottle may be in cabinet 1.\nAction: go to cabinet 1");
  const Trajectory failed = run_episode(task, {BackboneKind::react, {}}, looping, cfg);
  REQUIRE_FALSE(failed.success);
  ScriptedBackend reflector(task, BackboneKind::react);
  const std::string r = reflect_on_failure(failed, reflector);
  CHECK(r == gateway::kCannedReflection);
  const Messages msgs = reflection_messages(failed);
  CHECK(msgs[0].content == gateway::kReflectionPrompt);
  CHECK(msgs[1].content.find("> go to cabinet 1") != std::string::npos);

  ScriptedBackend oracle(task, BackboneKind::react);
  const Trajectory solved = run_episode(task, {BackboneKind::react, {}}, oracle, RunConfig{});
  REQUIRE(solved.success);
  try {
    reflect_on_failure(solved, reflector);
    FAIL("expected a precondition error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::precondition);
  }
}

TEST_CASE("reflexion protocol") {
  const auto task = fixtures::spraybottle_task();
  RunConfig cfg;
  cfg.step_budget = 6;

  SUBCASE("solved at trial 0") {
    ScriptedBackend backend(task, BackboneKind::reflact);
    const auto res = run_reflexion(task, {BackboneKind::reflact, {}}, backend, cfg, 3);
    REQUIRE(res.trials.size() == 3);
    CHECK(res.trials[0].success);
    CHECK_FALSE(res.trials[0].skipped);
    CHECK(res.trials[1].skipped);
    CHECK(res.trials[2].skipped);
    CHECK(res.memory.reflections.empty());
  }

  SUBCASE("fail then succeed") {
    ScriptedBackend inner(task, BackboneKind::reflact, ScriptedPolicy::fail_then_succeed);
    Recorder rec(inner);
    const auto res = run_reflexion(task, {BackboneKind::reflact, {}}, rec, cfg, 3);
    REQUIRE(res.trials.size() == 3);
    CHECK_FALSE(res.trials[0].success);
    REQUIRE(res.trials[0].reflection);
    CHECK(res.trials[1].success);
    CHECK(res.trials[2].skipped);
    REQUIRE(res.trials[1].trajectory);
    const std::string sys = backbones::system_message(context_at(*res.trials[1].trajectory, 1));
    CHECK(sys.find(*res.trials[0].reflection) != std::string::npos);
    CHECK(sys.find(backbones::kMemoryHeading) != std::string::npos);
    // The system message actually sent at trial 1's first turn.
    const std::size_t first_trial1 = res.trials[0].trajectory->steps.size() + 1;
    REQUIRE(rec.calls.size() > first_trial1);
    CHECK(rec.calls[first_trial1][0].content.find(*res.trials[0].reflection) != std::string::npos);
    CHECK(res.memory.reflections.size() == 1);
  }

  SUBCASE("always failing") {
    ScriptedBackend backend(task, BackboneKind::reflact, ScriptedPolicy::always_fail);
    const auto res = run_reflexion(task, {BackboneKind::reflact, {}}, backend, cfg, 3);
    REQUIRE(res.trials.size() == 3);
    std::size_t prev = 0;
    for (const auto& t : res.trials) {
      CHECK_FALSE(t.success);
      CHECK_FALSE(t.skipped);
      REQUIRE(t.trajectory);
      CHECK(t.trajectory->memory.size() == prev);
      prev = t.trajectory->memory.size() + 1;
    }
    CHECK(res.memory.reflections.size() == 3);
    const auto more = run_reflexion(task, {BackboneKind::reflact, {}}, backend, cfg, 5);
    CHECK(more.memory.reflections.size() == 3);
  }

  SUBCASE("backend error aborts remaining trials") {
    Fixed outage("Action: go to cabinet 1", 3);
    const auto res = run_reflexion(task, {BackboneKind::nothinking, {}}, outage, cfg, 3);
    CHECK(res.trials.size() == 1);
    REQUIRE(res.error);
    REQUIRE(res.trials[0].trajectory);
    CHECK(res.trials[0].trajectory->steps.size() == 3);
  }

  CHECK_THROWS_AS(run_reflexion(task, {BackboneKind::react, {}}, *std::make_unique<ScriptedBackend>(task, BackboneKind::react), cfg, 0), Error);
}
