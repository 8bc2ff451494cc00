#pragma once

#include <string>
#include <vector>

#include "reflact/taskgen.hpp"
#include "reflact/world.hpp"

namespace fixtures {

using namespace reflact::world;

inline void add_recep(WorldState& s, const std::string& cls, int index, bool openable, bool open,
                      std::vector<std::string> contents = {}, const std::string& room = "room") {
  Receptacle r;
  r.cls = cls;
  r.index = index;
  r.room = room;
  r.openable = openable;
  r.is_open = openable ? open : true;
  r.contents = std::move(contents);
  s.receptacles[r.id()] = r;
}

inline void add_object(WorldState& s, const std::string& cls, int index) {
  Object o;
  o.cls = cls;
  o.index = index;
  s.objects[o.id()] = o;
}

// Small household scene in the style of the bathroom transcripts.
inline WorldState small_bathroom() {
  WorldState s;
  s.flavor = EnvFlavor::household;
  s.rooms = {"room"};
  add_recep(s, "cabinet", 1, true, false, {"cloth 1"});
  add_recep(s, "cabinet", 2, true, false, {"candle 1", "spraybottle 2"});
  add_recep(s, "countertop", 1, false, true, {"soapbar 1"});
  add_recep(s, "sinkbasin", 1, false, true);
  add_recep(s, "toilet", 1, false, true);
  for (auto [cls, i] : std::vector<std::pair<std::string, int>>{
           {"cloth", 1}, {"candle", 1}, {"spraybottle", 2}, {"soapbar", 1}}) {
    add_object(s, cls, i);
  }
  return s;
}

inline WorldState small_kitchen() {
  WorldState s;
  s.flavor = EnvFlavor::household;
  s.rooms = {"room"};
  add_recep(s, "countertop", 2, false, true, {"lettuce 1"});
  add_recep(s, "fridge", 1, true, false, {"egg 1"});
  add_recep(s, "microwave", 1, true, false);
  add_recep(s, "sidetable", 1, false, true, {"desklamp 1"});
  add_object(s, "lettuce", 1);
  add_object(s, "egg", 1);
  add_object(s, "desklamp", 1);
  return s;
}

inline WorldState small_lab() {
  WorldState s;
  s.flavor = EnvFlavor::science;
  s.rooms = {"kitchen", "workshop"};
  s.agent_location = "kitchen";
  s.inventory_capacity = 3;
  add_recep(s, "table", 1, false, true, {"metalpot 1", "apple 1"}, "kitchen");
  add_recep(s, "stove", 1, false, true, {}, "kitchen");
  add_recep(s, "bench", 1, false, true, {"beaker 1"}, "workshop");
  add_object(s, "metalpot", 1);
  add_object(s, "apple", 1);
  add_object(s, "beaker", 1);
  return s;
}

// Put task whose oracle plan starts with "go to cabinet 1".
inline reflact::taskgen::TaskSpec spraybottle_task() {
  reflact::taskgen::TaskSpec t;
  t.task_id = "household-put-fixture";
  t.task_type = TaskType::put;
  t.instruction_text = "Your task is to: put some spraybottle on toilet.";
  auto& s = t.initial_state;
  s.rooms = {"room"};
  add_recep(s, "cabinet", 1, false, true, {"spraybottle 2"});
  add_recep(s, "cabinet", 2, true, false, {"candle 1"});
  add_recep(s, "toilet", 1, false, true);
  add_object(s, "spraybottle", 2);
  add_object(s, "candle", 1);
  t.goal.task_type = TaskType::put;
  t.goal.target_object_class = "spraybottle";
  t.goal.target_receptacle = "toilet";
  t.goal.checkpoints = {Checkpoint{PredicateKind::in_receptacle, "spraybottle", "toilet", std::nullopt, 1, 1.0}};
  return t;
}

}  // namespace fixtures
