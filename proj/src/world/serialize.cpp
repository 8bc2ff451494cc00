#include "reflact/serialize.hpp"

namespace reflact::world {

using nlohmann::json;

void to_json(json& j, const Conditions& c) {
  j = json{{"hot", c.hot}, {"cold", c.cold}, {"clean", c.clean}, {"examined_under_lamp", c.examined_under_lamp}};
}

void from_json(const json& j, Conditions& c) {
  c.hot = j.value("hot", false);
  c.cold = j.value("cold", false);
  c.clean = j.value("clean", false);
  c.examined_under_lamp = j.value("examined_under_lamp", false);
}

void to_json(json& j, const Object& o) { j = json{{"class", o.cls}, {"index", o.index}, {"conditions", o.conditions}}; }

void from_json(const json& j, Object& o) {
  j.at("class").get_to(o.cls);
  j.at("index").get_to(o.index);
  o.conditions = j.value("conditions", Conditions{});
}

void to_json(json& j, const Receptacle& r) {
  j = json{{"class", r.cls},       {"index", r.index},     {"room", r.room},
           {"openable", r.openable}, {"is_open", r.is_open}, {"contents", r.contents}};
}

void from_json(const json& j, Receptacle& r) {
  j.at("class").get_to(r.cls);
  j.at("index").get_to(r.index);
  j.at("room").get_to(r.room);
  j.at("openable").get_to(r.openable);
  j.at("is_open").get_to(r.is_open);
  j.at("contents").get_to(r.contents);
}

void to_json(json& j, const WorldState& s) {
  json receptacles = json::array();
  for (const auto& [id, r] : s.receptacles) receptacles.push_back(r);
  json objects = json::array();
  for (const auto& [id, o] : s.objects) objects.push_back(o);
  j = json{{"flavor", to_string(s.flavor)},
           {"rooms", s.rooms},
           {"receptacles", receptacles},
           {"objects", objects},
           {"agent_location", s.agent_location},
           {"inventory", s.inventory},
           {"inventory_capacity", s.inventory_capacity},
           {"focus", s.focus ? json(*s.focus) : json(nullptr)},
           {"step_count", s.step_count}};
}

void from_json(const json& j, WorldState& s) {
  s = WorldState{};
  s.flavor = env_flavor_from_string(j.at("flavor").get<std::string>());
  j.at("rooms").get_to(s.rooms);
  for (const auto& rj : j.at("receptacles")) {
    auto r = rj.get<Receptacle>();
    s.receptacles[r.id()] = r;
  }
  for (const auto& oj : j.at("objects")) {
    auto o = oj.get<Object>();
    s.objects[o.id()] = o;
  }
  j.at("agent_location").get_to(s.agent_location);
  j.at("inventory").get_to(s.inventory);
  j.at("inventory_capacity").get_to(s.inventory_capacity);
  if (j.contains("focus") && !j.at("focus").is_null()) s.focus = j.at("focus").get<std::string>();
  s.step_count = j.value("step_count", 0);
}

void to_json(json& j, const Checkpoint& c) {
  j = json{{"kind", to_string(c.kind)},
           {"object_class", c.object_class},
           {"receptacle_class", c.receptacle_class},
           {"condition", c.condition ? json(to_string(*c.condition)) : json(nullptr)},
           {"count", c.count},
           {"weight", c.weight}};
}

void from_json(const json& j, Checkpoint& c) {
  c.kind = predicate_kind_from_string(j.at("kind").get<std::string>());
  j.at("object_class").get_to(c.object_class);
  c.receptacle_class = j.value("receptacle_class", "");
  c.condition.reset();
  if (j.contains("condition") && !j.at("condition").is_null()) {
    c.condition = condition_from_string(j.at("condition").get<std::string>());
  }
  c.count = j.value("count", 1);
  j.at("weight").get_to(c.weight);
}

void to_json(json& j, const GoalSpec& g) {
  j = json{{"flavor", to_string(g.flavor)},
           {"task_type", to_string(g.task_type)},
           {"target_object_class", g.target_object_class},
           {"target_receptacle", g.target_receptacle},
           {"checkpoints", g.checkpoints},
           {"success_threshold", g.success_threshold}};
}

void from_json(const json& j, GoalSpec& g) {
  g.flavor = reward_flavor_from_string(j.at("flavor").get<std::string>());
  g.task_type = task_type_from_string(j.at("task_type").get<std::string>());
  j.at("target_object_class").get_to(g.target_object_class);
  j.at("target_receptacle").get_to(g.target_receptacle);
  j.at("checkpoints").get_to(g.checkpoints);
  j.at("success_threshold").get_to(g.success_threshold);
}

void to_json(json& j, const ActionCommand& a) {
  json args = json::array();
  for (const auto& e : a.args) args.push_back(e.id());
  j = json{{"verb", to_string(a.verb)}, {"args", args}};
}

void from_json(const json& j, ActionCommand& a) {
  a.verb = verb_from_string(j.at("verb").get<std::string>());
  a.args.clear();
  for (const auto& arg : j.at("args")) {
    const std::string id = arg.get<std::string>();
    EntityRef e{id, std::nullopt};
    const auto space = id.rfind(' ');
    if (space != std::string::npos && space + 1 < id.size() &&
        id.find_first_not_of("0123456789", space + 1) == std::string::npos) {
      e.name = id.substr(0, space);
      e.index = std::stoi(id.substr(space + 1));
    }
    a.args.push_back(std::move(e));
  }
}

}  // namespace reflact::world
