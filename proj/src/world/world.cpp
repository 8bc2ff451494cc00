#include <algorithm>
#include <charconv>
#include <string>
#include <utility>

#include "reflact/world.hpp"

namespace reflact::world {
namespace {

std::pair<std::string_view, int> split_id(std::string_view id) {
  const auto space = id.rfind(' ');
  if (space == std::string_view::npos) return {id, 0};
  int index = 0;
  const auto digits = id.substr(space + 1);
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), index);
  if (ec != std::errc{} || ptr != digits.data() + digits.size()) return {id, 0};
  return {id.substr(0, space), index};
}

bool scene_less(std::string_view a, std::string_view b) {
  const auto [ca, ia] = split_id(a);
  const auto [cb, ib] = split_id(b);
  if (ca != cb) return ca < cb;
  return ia > ib;
}

bool is_lamp(std::string_view cls) { return cls == "desklamp" || cls == "floorlamp"; }

// Device class that applies `verb` in the given flavor.
std::string_view device_for(EnvFlavor flavor, Verb verb) {
  if (flavor == EnvFlavor::household) {
    switch (verb) {
      case Verb::clean: return "sinkbasin";
      case Verb::heat: return "microwave";
      case Verb::cool: return "fridge";
      default: return {};
    }
  }
  switch (verb) {
    case Verb::clean: return "sink";
    case Verb::heat: return "stove";
    case Verb::cool: return "fridge";
    default: return {};
  }
}

std::optional<Verb> science_device_effect(std::string_view cls) {
  for (Verb v : {Verb::clean, Verb::heat, Verb::cool}) {
    if (device_for(EnvFlavor::science, v) == cls) return v;
  }
  return std::nullopt;
}

void apply_effect(Conditions& c, Verb verb) {
  switch (verb) {
    case Verb::clean: c.clean = true; break;
    // The most recent thermal treatment wins.
    case Verb::heat:
      c.hot = true;
      c.cold = false;
      break;
    case Verb::cool:
      c.cold = true;
      c.hot = false;
      break;
    default: break;
  }
}

std::string_view effect_word(Verb verb) {
  switch (verb) {
    case Verb::clean: return "clean";
    case Verb::heat: return "heat";
    case Verb::cool: return "cool";
    default: return {};
  }
}

class Stepper {
 public:
  explicit Stepper(const WorldState& state) : next_(state) { ++next_.step_count; }

  StepResult invalid(const WorldState& original) {
    WorldState unchanged = original;
    unchanged.step_count = next_.step_count;
    return {std::move(unchanged), {std::string(kNothingHappens), true, next_.step_count}};
  }

  StepResult ok(std::string text) { return {std::move(next_), {std::move(text), false, next_.step_count}}; }

  WorldState& next() { return next_; }

 private:
  WorldState next_;
};

Receptacle* find_receptacle(WorldState& s, const EntityRef& ref) {
  if (!ref.index) return nullptr;
  auto it = s.receptacles.find(ref.id());
  return it == s.receptacles.end() ? nullptr : &it->second;
}

Object* find_object(WorldState& s, const EntityRef& ref) {
  if (!ref.index) return nullptr;
  auto it = s.objects.find(ref.id());
  return it == s.objects.end() ? nullptr : &it->second;
}

bool contains(const std::vector<std::string>& ids, const std::string& id) {
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

void erase_id(std::vector<std::string>& ids, const std::string& id) {
  ids.erase(std::remove(ids.begin(), ids.end(), id), ids.end());
}

std::string arrival_text(const Receptacle& r) {
  const auto id = r.id();
  if (r.openable && !r.is_open) return "The " + id + " is closed.";
  if (r.openable) return "The " + id + " is open. In it, you see " + describe_contents(r.contents) + ".";
  return "On the " + id + ", you see " + describe_contents(r.contents) + ".";
}

std::string container_line(const Receptacle& r) {
  return "a " + r.id() + ". In the " + r.id() + " is: " + describe_contents(r.contents) + ".";
}

// Household: the receptacle the agent stands at, if any.
Receptacle* current_receptacle(WorldState& s) {
  if (s.agent_location.empty()) return nullptr;
  auto it = s.receptacles.find(s.agent_location);
  return it == s.receptacles.end() ? nullptr : &it->second;
}

bool in_current_room(const WorldState& s, const Receptacle& r) { return r.room == s.agent_location; }

// Science: receptacle in the current room holding `object_id`.
Receptacle* room_holder(WorldState& s, const std::string& object_id) {
  for (auto& [id, r] : s.receptacles) {
    if (in_current_room(s, r) && contains(r.contents, object_id)) return &r;
  }
  return nullptr;
}

StepResult step_household(const WorldState& state, const ActionCommand& cmd) {
  Stepper st(state);
  WorldState& s = st.next();
  if (cmd.args.size() != verb_arity(cmd.verb)) return st.invalid(state);

  switch (cmd.verb) {
    case Verb::go_to: {
      Receptacle* r = find_receptacle(s, cmd.args[0]);
      if (r == nullptr) return st.invalid(state);
      s.agent_location = r->id();
      return st.ok(arrival_text(*r));
    }
    case Verb::take: {
      Object* o = find_object(s, cmd.args[0]);
      Receptacle* r = find_receptacle(s, cmd.args[1]);
      if (o == nullptr || r == nullptr || s.agent_location != r->id() || !r->accessible() ||
          !contains(r->contents, o->id()) || is_lamp(o->cls) || s.inventory.size() >= s.inventory_capacity) {
        return st.invalid(state);
      }
      erase_id(r->contents, o->id());
      s.inventory.push_back(o->id());
      return st.ok("You pick up the " + o->id() + " from the " + r->id() + ".");
    }
    case Verb::put: {
      Object* o = find_object(s, cmd.args[0]);
      Receptacle* r = find_receptacle(s, cmd.args[1]);
      if (o == nullptr || r == nullptr || !s.holding(o->id()) || s.agent_location != r->id() ||
          !r->accessible()) {
        return st.invalid(state);
      }
      erase_id(s.inventory, o->id());
      r->contents.push_back(o->id());
      return st.ok("You put the " + o->id() + " in/on the " + r->id() + ".");
    }
    case Verb::open: {
      Receptacle* r = find_receptacle(s, cmd.args[0]);
      if (r == nullptr || s.agent_location != r->id() || !r->openable || r->is_open) return st.invalid(state);
      r->is_open = true;
      return st.ok("You open the " + r->id() + ". The " + r->id() + " is open. In it, you see " +
                   describe_contents(r->contents) + ".");
    }
    case Verb::close: {
      Receptacle* r = find_receptacle(s, cmd.args[0]);
      if (r == nullptr || s.agent_location != r->id() || !r->openable || !r->is_open) return st.invalid(state);
      r->is_open = false;
      return st.ok("You close the " + r->id() + ".");
    }
    case Verb::use: {
      Object* lamp = find_object(s, cmd.args[0]);
      Receptacle* here = current_receptacle(s);
      if (lamp == nullptr || !is_lamp(lamp->cls) || here == nullptr || !here->accessible() ||
          !contains(here->contents, lamp->id())) {
        return st.invalid(state);
      }
      for (const auto& held : s.inventory) s.objects.at(held).conditions.examined_under_lamp = true;
      return st.ok("You turn on the " + lamp->id() + ".");
    }
    case Verb::clean:
    case Verb::heat:
    case Verb::cool: {
      Object* o = find_object(s, cmd.args[0]);
      Receptacle* r = find_receptacle(s, cmd.args[1]);
      if (o == nullptr || r == nullptr || !s.holding(o->id()) || s.agent_location != r->id() ||
          r->cls != device_for(s.flavor, cmd.verb)) {
        return st.invalid(state);
      }
      apply_effect(o->conditions, cmd.verb);
      return st.ok("You " + std::string(effect_word(cmd.verb)) + " the " + o->id() + " using the " + r->id() +
                   ".");
    }
    case Verb::examine: {
      if (Receptacle* r = find_receptacle(s, cmd.args[0])) {
        if (s.agent_location != r->id()) return st.invalid(state);
        return st.ok(arrival_text(*r));
      }
      Object* o = find_object(s, cmd.args[0]);
      if (o == nullptr) return st.invalid(state);
      Receptacle* here = current_receptacle(s);
      const bool visible =
          s.holding(o->id()) || (here != nullptr && here->accessible() && contains(here->contents, o->id()));
      if (!visible) return st.invalid(state);
      return st.ok("There's nothing special about " + o->id() + ".");
    }
    case Verb::look: {
      if (s.agent_location.empty()) return st.ok(render_scene(s));
      return st.ok("You are facing the " + s.agent_location + ". Next to it, you see nothing.");
    }
    default: return st.invalid(state);
  }
}

StepResult step_science(const WorldState& state, const ActionCommand& cmd) {
  Stepper st(state);
  WorldState& s = st.next();
  if (cmd.args.size() != verb_arity(cmd.verb)) return st.invalid(state);

  switch (cmd.verb) {
    case Verb::teleport: {
      const auto& room = cmd.args[0];
      if (room.index || !contains(s.rooms, room.name) || room.name == s.agent_location) return st.invalid(state);
      s.agent_location = room.name;
      return st.ok("You teleport to the " + room.name + ".");
    }
    case Verb::look_around: return st.ok(render_scene(s));
    case Verb::pick_up: {
      Object* o = find_object(s, cmd.args[0]);
      if (o == nullptr || is_lamp(o->cls) || s.inventory.size() >= s.inventory_capacity) return st.invalid(state);
      Receptacle* holder = room_holder(s, o->id());
      if (holder == nullptr) return st.invalid(state);
      erase_id(holder->contents, o->id());
      s.inventory.push_back(o->id());
      return st.ok("You move the " + o->id() + " to the inventory.");
    }
    case Verb::move: {
      Object* o = find_object(s, cmd.args[0]);
      Receptacle* r = find_receptacle(s, cmd.args[1]);
      if (o == nullptr || r == nullptr || !s.holding(o->id()) || !in_current_room(s, *r)) return st.invalid(state);
      erase_id(s.inventory, o->id());
      r->contents.push_back(o->id());
      return st.ok("You move the " + o->id() + " to the " + r->id() + ".");
    }
    case Verb::focus: {
      Object* o = find_object(s, cmd.args[0]);
      if (o == nullptr || (!s.holding(o->id()) && room_holder(s, o->id()) == nullptr)) return st.invalid(state);
      s.focus = o->id();
      return st.ok("You focus on the " + o->id() + ".");
    }
    case Verb::activate: {
      Receptacle* r = find_receptacle(s, cmd.args[0]);
      if (r == nullptr || !in_current_room(s, *r)) return st.invalid(state);
      const auto effect = science_device_effect(r->cls);
      if (!effect) return st.invalid(state);
      for (const auto& id : r->contents) apply_effect(s.objects.at(id).conditions, *effect);
      return st.ok("You activate the " + r->id() + ".");
    }
    case Verb::examine: {
      if (Receptacle* r = find_receptacle(s, cmd.args[0])) {
        if (!in_current_room(s, *r)) return st.invalid(state);
        return st.ok(container_line(*r));
      }
      Object* o = find_object(s, cmd.args[0]);
      if (o == nullptr || (!s.holding(o->id()) && room_holder(s, o->id()) == nullptr)) return st.invalid(state);
      return st.ok("There's nothing special about " + o->id() + ".");
    }
    default: return st.invalid(state);
  }
}

}  // namespace

std::string_view to_string(EnvFlavor flavor) {
  return flavor == EnvFlavor::household ? "household" : "science";
}

EnvFlavor env_flavor_from_string(std::string_view name) {
  if (name == "household") return EnvFlavor::household;
  if (name == "science") return EnvFlavor::science;
  throw Error(ErrorCode::invalid_argument, "unknown environment flavor: " + std::string(name));
}

std::string_view to_string(Condition condition) {
  switch (condition) {
    case Condition::hot: return "hot";
    case Condition::cold: return "cold";
    case Condition::clean: return "clean";
    case Condition::examined_under_lamp: return "examined_under_lamp";
  }
  return "?";
}

Condition condition_from_string(std::string_view name) {
  for (Condition c : {Condition::hot, Condition::cold, Condition::clean, Condition::examined_under_lamp}) {
    if (to_string(c) == name) return c;
  }
  throw Error(ErrorCode::invalid_argument, "unknown condition: " + std::string(name));
}

bool Conditions::has(Condition c) const {
  switch (c) {
    case Condition::hot: return hot;
    case Condition::cold: return cold;
    case Condition::clean: return clean;
    case Condition::examined_under_lamp: return examined_under_lamp;
  }
  return false;
}

bool entity_less(std::string_view a, std::string_view b) {
  const auto [ca, ia] = split_id(a);
  const auto [cb, ib] = split_id(b);
  if (ca != cb) return ca < cb;
  return ia < ib;
}

std::string Object::id() const { return cls + " " + std::to_string(index); }
std::string Receptacle::id() const { return cls + " " + std::to_string(index); }

void WorldState::validate() const {
  std::map<std::string, int> seen;
  for (const auto& [id, r] : receptacles) {
    if (id != r.id()) throw Error(ErrorCode::invalid_argument, "receptacle key mismatch: " + id);
    if (!rooms.empty() && std::find(rooms.begin(), rooms.end(), r.room) == rooms.end()) {
      throw Error(ErrorCode::invalid_argument, "receptacle " + id + " in unknown room " + r.room);
    }
    for (const auto& o : r.contents) ++seen[o];
  }
  for (const auto& o : inventory) ++seen[o];
  if (inventory.size() > inventory_capacity) throw Error(ErrorCode::invalid_argument, "inventory over capacity");
  for (const auto& [id, o] : objects) {
    if (id != o.id()) throw Error(ErrorCode::invalid_argument, "object key mismatch: " + id);
    const auto it = seen.find(id);
    if (it == seen.end() || it->second != 1) {
      throw Error(ErrorCode::invalid_argument, "object " + id + " must be in exactly one place");
    }
  }
  for (const auto& [id, n] : seen) {
    if (!objects.contains(id)) throw Error(ErrorCode::invalid_argument, "unknown object placed: " + id);
  }
}

std::optional<std::string> WorldState::location_of(const std::string& object_id) const {
  for (const auto& [id, r] : receptacles) {
    if (contains(r.contents, object_id)) return id;
  }
  return std::nullopt;
}

bool WorldState::holding(const std::string& object_id) const { return contains(inventory, object_id); }

std::string describe_contents(std::vector<std::string> ids) {
  if (ids.empty()) return "nothing";
  std::sort(ids.begin(), ids.end(), scene_less);
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += ", ";
    if (i > 0 && i + 1 == ids.size()) out += "and ";
    out += "a " + ids[i];
  }
  return out;
}

std::vector<std::string> scene_order(const WorldState& state) {
  std::vector<std::string> ids;
  for (const auto& [id, r] : state.receptacles) ids.push_back(id);
  std::sort(ids.begin(), ids.end(), scene_less);
  return ids;
}

std::string render_scene(const WorldState& state) {
  if (state.flavor == EnvFlavor::household) {
    std::vector<std::string> ids;
    for (const auto& [id, r] : state.receptacles) ids.push_back(id);
    return "You are in the middle of a room. Looking quickly around you, you see " + describe_contents(ids) + ".";
  }
  std::string out = "This room is called the " + state.agent_location + ". In it, you see: \n\tthe agent\n\tsubstance called air";
  for (const auto& id : scene_order(state)) {
    const auto& r = state.receptacles.at(id);
    if (r.room == state.agent_location) out += "\n\t" + container_line(r);
  }
  return out;
}

StepResult step(const WorldState& state, const ActionCommand& cmd) {
  return state.flavor == EnvFlavor::household ? step_household(state, cmd) : step_science(state, cmd);
}

StepResult step_text(const WorldState& state, std::string_view text) {
  const auto parsed = parse_action(text);
  if (const auto* cmd = std::get_if<ActionCommand>(&parsed)) return step(state, *cmd);
  WorldState next = state;
  ++next.step_count;
  const int index = next.step_count;
  return {std::move(next), {std::string(kNothingHappens), true, index}};
}

bool action_less(const ActionCommand& a, const ActionCommand& b) {
  if (a.verb != b.verb) return static_cast<int>(a.verb) < static_cast<int>(b.verb);
  const std::size_t n = std::min(a.args.size(), b.args.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto ia = a.args[i].id();
    const auto ib = b.args[i].id();
    if (ia != ib) return entity_less(ia, ib);
  }
  return a.args.size() < b.args.size();
}

namespace {

EntityRef ref_of(const std::string& id) {
  const auto [cls, index] = split_id(id);
  if (index == 0) return EntityRef{std::string(cls), std::nullopt};
  return EntityRef{std::string(cls), index};
}

void household_actions(const WorldState& s, std::vector<ActionCommand>& out) {
  for (const auto& [id, r] : s.receptacles) out.push_back({Verb::go_to, {ref_of(id)}});
  out.push_back({Verb::look, {}});

  const Receptacle* here = nullptr;
  if (auto it = s.receptacles.find(s.agent_location); it != s.receptacles.end()) here = &it->second;

  for (const auto& held : s.inventory) out.push_back({Verb::examine, {ref_of(held)}});
  if (here == nullptr) return;

  const auto here_ref = ref_of(here->id());
  out.push_back({Verb::examine, {here_ref}});
  if (here->openable) out.push_back({here->is_open ? Verb::close : Verb::open, {here_ref}});

  if (here->accessible()) {
    for (const auto& id : here->contents) {
      const auto& o = s.objects.at(id);
      out.push_back({Verb::examine, {ref_of(id)}});
      if (is_lamp(o.cls)) {
        out.push_back({Verb::use, {ref_of(id)}});
      } else if (s.inventory.size() < s.inventory_capacity) {
        out.push_back({Verb::take, {ref_of(id), here_ref}});
      }
    }
  }
  for (const auto& held : s.inventory) {
    if (here->accessible()) out.push_back({Verb::put, {ref_of(held), here_ref}});
    for (Verb v : {Verb::clean, Verb::heat, Verb::cool}) {
      if (here->cls == device_for(EnvFlavor::household, v)) out.push_back({v, {ref_of(held), here_ref}});
    }
  }
}

void science_actions(const WorldState& s, std::vector<ActionCommand>& out) {
  for (const auto& room : s.rooms) {
    if (room != s.agent_location) out.push_back({Verb::teleport, {EntityRef{room, std::nullopt}}});
  }
  out.push_back({Verb::look_around, {}});
  for (const auto& [id, r] : s.receptacles) {
    if (!in_current_room(s, r)) continue;
    out.push_back({Verb::examine, {ref_of(id)}});
    if (science_device_effect(r.cls)) out.push_back({Verb::activate, {ref_of(id)}});
    for (const auto& oid : r.contents) {
      out.push_back({Verb::examine, {ref_of(oid)}});
      out.push_back({Verb::focus, {ref_of(oid)}});
      if (!is_lamp(s.objects.at(oid).cls) && s.inventory.size() < s.inventory_capacity) {
        out.push_back({Verb::pick_up, {ref_of(oid)}});
      }
    }
    for (const auto& held : s.inventory) out.push_back({Verb::move, {ref_of(held), ref_of(id)}});
  }
  for (const auto& held : s.inventory) {
    out.push_back({Verb::examine, {ref_of(held)}});
    out.push_back({Verb::focus, {ref_of(held)}});
  }
}

}  // namespace

std::vector<ActionCommand> valid_actions(const WorldState& state) {
  std::vector<ActionCommand> out;
  if (state.flavor == EnvFlavor::household) {
    household_actions(state, out);
  } else {
    science_actions(state, out);
  }
  std::sort(out.begin(), out.end(), action_less);
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace reflact::world
