#include <algorithm>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"

using namespace reflact::world;
using fixtures::small_bathroom;
using fixtures::small_kitchen;
using fixtures::small_lab;

namespace {

EntityRef ref(const std::string& cls, int i) { return EntityRef{cls, i}; }

ActionCommand parsed(std::string_view text) {
  auto r = parse_action(text);
  REQUIRE(std::holds_alternative<ActionCommand>(r));
  return std::get<ActionCommand>(r);
}

std::vector<EntityRef> all_entities(const WorldState& s) {
  std::vector<EntityRef> out;
  for (const auto& [id, r] : s.receptacles) out.push_back({r.cls, r.index});
  for (const auto& [id, o] : s.objects) out.push_back({o.cls, o.index});
  for (const auto& room : s.rooms) out.push_back({room, std::nullopt});
  return out;
}

// Every grammar instantiation over the entities present in the state.
std::vector<ActionCommand> all_instantiations(const WorldState& s) {
  const auto ents = all_entities(s);
  std::vector<ActionCommand> out;
  for (Verb v : kAllVerbs) {
    switch (verb_arity(v)) {
      case 0: out.push_back({v, {}}); break;
      case 1:
        for (const auto& a : ents) out.push_back({v, {a}});
        break;
      default:
        for (const auto& a : ents) {
          for (const auto& b : ents) out.push_back({v, {a, b}});
        }
    }
  }
  return out;
}

std::vector<ActionCommand> brute_force_valid(const WorldState& s) {
  std::vector<ActionCommand> out;
  for (const auto& cmd : all_instantiations(s)) {
    if (!step(s, cmd).observation.nothing_happened) out.push_back(cmd);
  }
  std::sort(out.begin(), out.end(), action_less);
  return out;
}

WorldState without_step(WorldState s) {
  s.step_count = 0;
  return s;
}

}  // namespace

TEST_CASE("parse_action accepts transcript forms") {
  CHECK(parsed("take spraybottle 2 from cabinet 2") ==
        ActionCommand{Verb::take, {ref("spraybottle", 2), ref("cabinet", 2)}});
  CHECK(parsed("go to cabinet 1") == ActionCommand{Verb::go_to, {ref("cabinet", 1)}});
  CHECK(parsed("  Go   To  Cabinet 1 ") == ActionCommand{Verb::go_to, {ref("cabinet", 1)}});
  CHECK(parsed("put spraybottle 2 in/on toilet 1") ==
        ActionCommand{Verb::put, {ref("spraybottle", 2), ref("toilet", 1)}});
  CHECK(parsed("clean soapbar 1 with sinkbasin 1") ==
        ActionCommand{Verb::clean, {ref("soapbar", 1), ref("sinkbasin", 1)}});
  CHECK(parsed("look") == ActionCommand{Verb::look, {}});
  CHECK(parsed("look around") == ActionCommand{Verb::look_around, {}});
  CHECK(parsed("teleport to kitchen") == ActionCommand{Verb::teleport, {EntityRef{"kitchen", std::nullopt}}});
}

TEST_CASE("parse_action errors carry the offending span") {
  auto r = parse_action("dance wildly");
  REQUIRE(std::holds_alternative<ParseError>(r));
  auto e = std::get<ParseError>(r);
  CHECK(e.kind == ParseErrorKind::unknown_verb);
  CHECK(e.span == TokenSpan{0, 5});

  r = parse_action("open");
  REQUIRE(std::holds_alternative<ParseError>(r));
  CHECK(std::get<ParseError>(r).kind == ParseErrorKind::bad_arity);

  r = parse_action("take spraybottle from cabinet 2");
  REQUIRE(std::holds_alternative<ParseError>(r));
  e = std::get<ParseError>(r);
  CHECK(e.kind == ParseErrorKind::malformed_entity);
  CHECK(e.span == TokenSpan{5, 16});

  r = parse_action("go to cabinet x");
  REQUIRE(std::holds_alternative<ParseError>(r));
  CHECK(std::get<ParseError>(r).kind == ParseErrorKind::malformed_entity);

  r = parse_action("look at the lamp");
  REQUIRE(std::holds_alternative<ParseError>(r));
  CHECK(std::get<ParseError>(r).kind == ParseErrorKind::bad_arity);
}

TEST_CASE("household step templates") {
  auto s = small_bathroom();
  auto r = step(s, parsed("go to cabinet 2"));
  CHECK(r.observation.text == "The cabinet 2 is closed.");
  r = step(r.state, parsed("open cabinet 2"));
  CHECK(r.observation.text == "You open the cabinet 2. The cabinet 2 is open. In it, you see a candle 1, and a spraybottle 2.");
  r = step(r.state, parsed("take spraybottle 2 from cabinet 2"));
  CHECK(r.observation.text == "You pick up the spraybottle 2 from the cabinet 2.");
  CHECK(r.state.holding("spraybottle 2"));
  r = step(r.state, parsed("go to toilet 1"));
  CHECK(r.observation.text == "On the toilet 1, you see nothing.");
  r = step(r.state, parsed("put spraybottle 2 in/on toilet 1"));
  CHECK(r.observation.text == "You put the spraybottle 2 in/on the toilet 1.");
  CHECK(r.state.step_count == 5);
  CHECK(r.state.location_of("spraybottle 2") == "toilet 1");
  r = step(r.state, parsed("look"));
  CHECK(r.observation.text == "You are facing the toilet 1. Next to it, you see nothing.");
}

TEST_CASE("cooling away from the fridge is rejected") {
  auto s = small_kitchen();
  s.agent_location = "countertop 2";
  s.receptacles["countertop 2"].contents.clear();
  s.inventory = {"lettuce 1"};
  auto r = step(s, parsed("cool lettuce 1 with fridge 1"));
  CHECK(r.observation.text == "Nothing happens.");
  CHECK(r.observation.nothing_happened);
  CHECK(without_step(r.state) == s);
  CHECK(r.state.step_count == s.step_count + 1);

  r = step(step(s, parsed("go to fridge 1")).state, parsed("cool lettuce 1 with fridge 1"));
  CHECK(r.observation.text == "You cool the lettuce 1 using the fridge 1.");
  CHECK(r.state.objects.at("lettuce 1").conditions.cold);
  r = step(step(r.state, parsed("go to microwave 1")).state, parsed("heat lettuce 1 with microwave 1"));
  CHECK(r.state.objects.at("lettuce 1").conditions.hot);
  CHECK_FALSE(r.state.objects.at("lettuce 1").conditions.cold);
}

TEST_CASE("desklamp marks held objects") {
  auto s = small_kitchen();
  s.agent_location = "sidetable 1";
  auto r = step(s, parsed("use desklamp 1"));
  CHECK(r.observation.text == "You turn on the desklamp 1.");
  s.receptacles["countertop 2"].contents.clear();
  s.inventory = {"lettuce 1"};
  r = step(s, parsed("use desklamp 1"));
  CHECK(r.state.objects.at("lettuce 1").conditions.examined_under_lamp);
  CHECK(step(s, parsed("use lettuce 1")).observation.nothing_happened);
  CHECK(step(s, parsed("take desklamp 1 from sidetable 1")).observation.nothing_happened);
}

TEST_CASE("render_scene") {
  auto s = small_bathroom();
  const auto text = render_scene(s);
  CHECK(text ==
        "You are in the middle of a room. Looking quickly around you, you see a cabinet 2, a cabinet 1, a "
        "countertop 1, a sinkbasin 1, and a toilet 1.");
  CHECK(render_scene(s) == text);
  WorldState empty;
  CHECK(render_scene(empty) == "You are in the middle of a room. Looking quickly around you, you see nothing.");
  CHECK(step(s, parsed("look")).observation.text == text);
}

TEST_CASE("describe_contents list shapes") {
  CHECK(describe_contents({}) == "nothing");
  CHECK(describe_contents({"cloth 1"}) == "a cloth 1");
  CHECK(describe_contents({"cloth 1", "candle 1"}) == "a candle 1, and a cloth 1");
  CHECK(describe_contents({"a 1", "b 1", "a 2"}) == "a a 2, a a 1, and a b 1");
}

TEST_CASE("science step templates") {
  auto s = small_lab();
  auto r = step(s, parsed("look around"));
  CHECK(r.observation.text ==
        "This room is called the kitchen. In it, you see: \n\tthe agent\n\tsubstance called air\n\ta stove 1. In "
        "the stove 1 is: nothing.\n\ta table 1. In the table 1 is: a apple 1, and a metalpot 1.");
  r = step(r.state, parsed("focus on apple 1"));
  CHECK(r.observation.text == "You focus on the apple 1.");
  r = step(r.state, parsed("pick up apple 1"));
  CHECK(r.observation.text == "You move the apple 1 to the inventory.");
  r = step(r.state, parsed("move apple 1 to stove 1"));
  CHECK(r.observation.text == "You move the apple 1 to the stove 1.");
  r = step(r.state, parsed("activate stove 1"));
  CHECK(r.observation.text == "You activate the stove 1.");
  CHECK(r.state.objects.at("apple 1").conditions.hot);
  CHECK(step(r.state, parsed("teleport to kitchen")).observation.nothing_happened);
  r = step(r.state, parsed("teleport to workshop"));
  CHECK(r.observation.text == "You teleport to the workshop.");
  CHECK(step(r.state, parsed("pick up metalpot 1")).observation.nothing_happened);
  CHECK(step(r.state, parsed("go to bench 1")).observation.nothing_happened);
}

TEST_CASE("valid_actions matches the brute-force filter") {
  auto check = [](const WorldState& s) {
    const auto fast = valid_actions(s);
    const auto slow = brute_force_valid(s);
    REQUIRE(fast.size() == slow.size());
    for (std::size_t i = 0; i < fast.size(); ++i) CHECK(render_action(fast[i]) == render_action(slow[i]));
  };

  SUBCASE("closed cabinet, empty hands") {
    auto s = small_bathroom();
    s.agent_location = "cabinet 2";
    const auto acts = valid_actions(s);
    auto has = [&](std::string_view t) { return std::find(acts.begin(), acts.end(), parsed(t)) != acts.end(); };
    CHECK(has("open cabinet 2"));
    for (const auto& id : scene_order(s)) CHECK(has("go to " + id));
    CHECK(std::none_of(acts.begin(), acts.end(), [](const auto& a) { return a.verb == Verb::take; }));
    check(s);
  }
  SUBCASE("holding lettuce at the open fridge") {
    auto s = small_kitchen();
    s.receptacles["countertop 2"].contents.clear();
    s.inventory = {"lettuce 1"};
    s.agent_location = "fridge 1";
    s.receptacles["fridge 1"].is_open = true;
    const auto acts = valid_actions(s);
    auto has = [&](std::string_view t) { return std::find(acts.begin(), acts.end(), parsed(t)) != acts.end(); };
    CHECK(has("cool lettuce 1 with fridge 1"));
    CHECK(has("put lettuce 1 in/on fridge 1"));
    check(s);
  }
  SUBCASE("empty world") {
    WorldState s;
    const auto acts = valid_actions(s);
    REQUIRE(acts.size() == 1);
    CHECK(acts[0].verb == Verb::look);
    check(s);
  }
  SUBCASE("random walks over household and science fixtures") {
    std::mt19937 rng(11);
    for (auto start : {small_bathroom(), small_kitchen(), small_lab()}) {
      auto s = start;
      for (int i = 0; i < 60; ++i) {
        check(s);
        const auto acts = valid_actions(s);
        s = step(s, acts[rng() % acts.size()]).state;
      }
    }
  }
}

TEST_CASE("world properties along random action sequences") {
  std::mt19937 rng(5);
  for (auto start : {small_bathroom(), small_kitchen(), small_lab()}) {
    auto s = start;
    const auto every = all_instantiations(s);
    for (int i = 0; i < 200; ++i) {
      s.validate();
      const auto& cmd = every[rng() % every.size()];
      auto r = step(s, cmd);
      CHECK(r.state.step_count == s.step_count + 1);
      CHECK(r.observation.nothing_happened == (r.observation.text == kNothingHappens));
      if (r.observation.nothing_happened) {
        auto expected = s;
        expected.step_count = r.state.step_count;
        CHECK(r.state == expected);
      }
      for (const auto& a : valid_actions(s)) CHECK(parsed(render_action(a)) == a);
      if (cmd.verb == Verb::go_to && !r.observation.nothing_happened) {
        const auto& rec = s.receptacles.at(cmd.args[0].id());
        if (!rec.accessible()) {
          for (const auto& o : rec.contents) CHECK(r.observation.text.find(o) == std::string::npos);
        }
      }
      s = r.state;
    }
  }
}

TEST_CASE("evaluate_goal latches and applies thresholds") {
  GoalSpec dense;
  dense.flavor = RewardFlavor::dense;
  dense.success_threshold = kDenseSuccessThreshold;
  for (int i = 0; i < 7; ++i) {
    Checkpoint c;
    c.kind = PredicateKind::has_condition;
    c.object_class = "o" + std::to_string(i);
    c.condition = Condition::hot;
    c.weight = 1.0 / 7.0;
    dense.checkpoints.push_back(c);
  }
  dense.validate();
  ProgressReport prior;
  prior.latched_checkpoints = {0, 1, 2, 3, 4};
  const auto r = evaluate_goal(WorldState{}, dense, prior);
  // Oracle: 5 of 7 equal shares.
  CHECK(r.progress == doctest::Approx(5.0 / 7.0).epsilon(1e-12));
  CHECK(r.progress == doctest::Approx(0.7142857).epsilon(1e-7));
  CHECK(r.success);

  CHECK_FALSE(meets_threshold(0.699, kDenseSuccessThreshold));
  CHECK(meets_threshold(0.700, kDenseSuccessThreshold));
  CHECK(meets_threshold(0.1 + 0.6, kDenseSuccessThreshold));
  CHECK_FALSE(meets_threshold(0.99, kBinarySuccessThreshold));

  auto s = small_kitchen();
  s.receptacles["countertop 2"].contents.clear();
  s.inventory = {"lettuce 1"};
  s.objects.at("lettuce 1").conditions.cold = true;
  GoalSpec cool;
  cool.task_type = TaskType::cool;
  cool.checkpoints = {Checkpoint{PredicateKind::in_receptacle, "lettuce", "countertop", Condition::cold, 1, 1.0}};
  cool.validate();
  CHECK_FALSE(evaluate_goal(s, cool, {}).success);
  s.agent_location = "countertop 2";
  const auto placed = step(s, parsed("put lettuce 1 in/on countertop 2")).state;
  const auto done = evaluate_goal(placed, cool, {});
  CHECK(done.progress == 1.0);
  CHECK(done.success);

  GoalSpec held;
  held.checkpoints = {Checkpoint{PredicateKind::held, "lettuce", "", std::nullopt, 1, 0.5},
                      Checkpoint{PredicateKind::in_receptacle, "lettuce", "fridge", std::nullopt, 1, 0.5}};
  const auto at4 = evaluate_goal(s, held, {});
  CHECK(at4.progress == 0.5);
  const auto at6 = evaluate_goal(placed, held, at4);
  CHECK(at6.progress == 0.5);
  CHECK(at6.latched_checkpoints == std::set<std::size_t>{0});
}

TEST_CASE("goal validation") {
  GoalSpec g;
  CHECK_THROWS_AS(g.validate(), reflact::Error);
  g.checkpoints = {Checkpoint{PredicateKind::held, "x", "", std::nullopt, 1, 0.6}};
  CHECK_THROWS_AS(g.validate(), reflact::Error);
  g.checkpoints[0].weight = 1.0;
  g.success_threshold = 0.0;
  CHECK_THROWS_AS(g.validate(), reflact::Error);
}
