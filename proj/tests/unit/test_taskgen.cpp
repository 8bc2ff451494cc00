#include <regex>

#include "doctest.h"
#include "fixtures.hpp"
#include "reflact/taskgen.hpp"

using namespace reflact;
using namespace reflact::taskgen;
using world::RewardFlavor;
using world::TaskType;

namespace {

std::vector<std::string> rendered(const OraclePlan& plan) {
  std::vector<std::string> out;
  for (const auto& a : plan.actions) out.push_back(world::render_action(a));
  return out;
}

}  // namespace

TEST_CASE("generate put task phrasing and determinism") {
  const auto a = generate(7, TaskType::put, RewardFlavor::binary);
  const auto b = generate(7, TaskType::put, RewardFlavor::binary);
  CHECK(std::regex_match(a.instruction_text, std::regex("Your task is to: put some [a-z]+ on [a-z]+\\.")));
  CHECK(serialize(a) == serialize(b));
  CHECK(a.task_id == "household-put-000007");
  CHECK(a.prng == std::string(kPrngAlgorithm));
  CHECK(a.schema_version == kSchemaVersion);
  CHECK(serialize(task_from_json(to_json(a))) == serialize(a));
  CHECK(task_from_json(to_json(a)) == a);
  CHECK(serialize(generate(8, TaskType::put, RewardFlavor::binary)) != serialize(a));
  CHECK(world::render_scene(a.initial_state)
            .starts_with("You are in the middle of a room. Looking quickly around you, you see a cabinet 4, a "
                         "cabinet 3, "));
}

TEST_CASE("instruction phrasings per task type") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto clean = generate(seed, TaskType::clean, RewardFlavor::binary);
    CHECK(std::regex_match(clean.instruction_text,
                           std::regex("Your task is to: (put a clean [a-z]+ in [a-z]+|clean some [a-z]+ and put it "
                                      "in [a-z]+)\\.")));
    const auto two = generate(seed, TaskType::put_two, RewardFlavor::binary);
    CHECK(std::regex_match(two.instruction_text,
                           std::regex("Your task is to: (put two [a-z]+ in [a-z]+|find two [a-z]+ and put them in "
                                      "[a-z]+)\\.")));
    const auto heat = generate(seed, TaskType::heat, RewardFlavor::dense);
    CHECK(std::regex_match(heat.instruction_text,
                           std::regex("Your task is to heat the [a-z]+ and move it to the [a-z]+\\. First, focus on "
                                      "the [a-z]+\\.")));
  }
}

TEST_CASE("dense flavor rejects examine and puttwo") {
  CHECK_THROWS_AS(generate(1, TaskType::examine, RewardFlavor::dense), Error);
  try {
    generate(1, TaskType::put_two, RewardFlavor::dense);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::unsupported);
    CHECK(std::string(e.what()).starts_with("UnsupportedTaskType"));
  }
}

TEST_CASE("dense goals share 0.6 across early checkpoints") {
  const auto t = generate(3, TaskType::cool, RewardFlavor::dense);
  REQUIRE(t.goal.checkpoints.size() == 4);
  double early = 0.0;
  for (std::size_t i = 0; i + 1 < t.goal.checkpoints.size(); ++i) early += t.goal.checkpoints[i].weight;
  CHECK(early == doctest::Approx(0.6));
  CHECK(t.goal.checkpoints.back().weight == doctest::Approx(0.4));
  CHECK(t.goal.success_threshold == world::kDenseSuccessThreshold);
}

TEST_CASE("clean oracle plan on a hand-built bathroom") {
  TaskSpec t;
  t.task_id = "clean-fixture";
  t.task_type = TaskType::clean;
  auto& s = t.initial_state;
  s.rooms = {"room"};
  fixtures::add_recep(s, "cabinet", 1, false, true);
  fixtures::add_recep(s, "cabinet", 2, true, false);
  fixtures::add_recep(s, "countertop", 1, false, true, {"soapbar 1"});
  fixtures::add_recep(s, "sinkbasin", 1, false, true);
  fixtures::add_recep(s, "sinkbasin", 2, false, true);
  fixtures::add_object(s, "soapbar", 1);
  t.goal.task_type = TaskType::clean;
  t.goal.target_object_class = "soapbar";
  t.goal.target_receptacle = "cabinet";
  t.goal.checkpoints = {
      world::Checkpoint{world::PredicateKind::in_receptacle, "soapbar", "cabinet", world::Condition::clean, 1, 1.0}};
  const auto plan = oracle_solve(t);
  CHECK(rendered(plan) == std::vector<std::string>{"go to countertop 1", "take soapbar 1 from countertop 1",
                                                   "go to sinkbasin 1", "clean soapbar 1 with sinkbasin 1",
                                                   "go to cabinet 1", "put soapbar 1 in/on cabinet 1"});
  CHECK(plan.expected_steps == 6);
}

TEST_CASE("target already at the goal still gets take and put") {
  TaskSpec t;
  t.task_type = TaskType::put;
  auto& s = t.initial_state;
  s.rooms = {"room"};
  fixtures::add_recep(s, "toilet", 1, false, true, {"spraybottle 1"});
  fixtures::add_object(s, "spraybottle", 1);
  t.goal.target_object_class = "spraybottle";
  t.goal.target_receptacle = "toilet";
  t.goal.checkpoints = {
      world::Checkpoint{world::PredicateKind::in_receptacle, "spraybottle", "toilet", std::nullopt, 1, 1.0}};
  const auto plan = oracle_solve(t);
  CHECK(rendered(plan) ==
        std::vector<std::string>{"go to toilet 1", "take spraybottle 1 from toilet 1", "put spraybottle 1 in/on toilet 1"});
}

TEST_CASE("verify_solvable over generated seeds") {
  for (auto type : world::kAllTaskTypes) {
    const auto report = verify_solvable(0, 100, type, RewardFlavor::binary);
    CHECK(report.checked == 100);
    CHECK_MESSAGE(report.ok(), world::to_string(type), ": ",
                  report.failures.empty() ? "" : report.failures[0].reason);
  }
  for (auto type : {TaskType::put, TaskType::clean, TaskType::heat, TaskType::cool}) {
    const auto report = verify_solvable(0, 100, type, RewardFlavor::dense);
    CHECK_MESSAGE(report.ok(), world::to_string(type), ": ",
                  report.failures.empty() ? "" : report.failures[0].reason);
  }
  CHECK(verify_solvable(5, 5, TaskType::put, RewardFlavor::binary).checked == 0);
}

TEST_CASE("verify_solvable names seeds from a corrupt template") {
  auto corrupt = [](std::uint64_t seed, TaskType type, RewardFlavor flavor) {
    auto t = generate(seed, type, flavor);
    if (seed == 13) {
      // Drop every receptacle of the destination class.
      for (auto it = t.initial_state.receptacles.begin(); it != t.initial_state.receptacles.end();) {
        if (it->second.cls == t.goal.target_receptacle && it->second.contents.empty()) {
          it = t.initial_state.receptacles.erase(it);
        } else {
          ++it;
        }
      }
    }
    return t;
  };
  const auto report = verify_solvable(10, 16, TaskType::put, RewardFlavor::binary, corrupt);
  REQUIRE(report.failures.size() == 1);
  CHECK(report.failures[0].seed == 13);
}

TEST_CASE("oracle plans respect the search bound") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    for (auto type : world::kAllTaskTypes) {
      const auto t = generate(seed, type, RewardFlavor::binary);
      const auto plan = oracle_solve(t);
      CHECK(plan.expected_steps <= oracle_step_bound(RewardFlavor::binary, plan.receptacles_searched));
      CHECK(plan.expected_steps == static_cast<int>(plan.actions.size()));
    }
  }
}
