#pragma once

#include <json.hpp>

#include "reflact/world.hpp"

namespace reflact::world {

void to_json(nlohmann::json& j, const Conditions& c);
void from_json(const nlohmann::json& j, Conditions& c);
void to_json(nlohmann::json& j, const Object& o);
void from_json(const nlohmann::json& j, Object& o);
void to_json(nlohmann::json& j, const Receptacle& r);
void from_json(const nlohmann::json& j, Receptacle& r);
void to_json(nlohmann::json& j, const WorldState& s);
void from_json(const nlohmann::json& j, WorldState& s);
void to_json(nlohmann::json& j, const Checkpoint& c);
void from_json(const nlohmann::json& j, Checkpoint& c);
void to_json(nlohmann::json& j, const GoalSpec& g);
void from_json(const nlohmann::json& j, GoalSpec& g);
void to_json(nlohmann::json& j, const ActionCommand& a);
void from_json(const nlohmann::json& j, ActionCommand& a);

}  // namespace reflact::world
