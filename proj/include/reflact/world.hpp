#pragma once

// Deterministic text-world engine: hidden state, transition, observation
// rendering and goal evaluation.

#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "reflact/error.hpp"

namespace reflact::world {

inline constexpr std::string_view kNothingHappens = "Nothing happens.";

enum class EnvFlavor { household, science };

std::string_view to_string(EnvFlavor flavor);
EnvFlavor env_flavor_from_string(std::string_view name);

enum class Condition { hot, cold, clean, examined_under_lamp };

std::string_view to_string(Condition condition);
Condition condition_from_string(std::string_view name);

struct Conditions {
  bool hot = false;
  bool cold = false;
  bool clean = false;
  bool examined_under_lamp = false;

  bool has(Condition c) const;
  bool operator==(const Conditions&) const = default;
};

// "spraybottle 2" or a bare room name ("kitchen").
struct EntityRef {
  std::string name;
  std::optional<int> index;

  std::string id() const;
  auto operator<=>(const EntityRef&) const = default;
};

// Class name ascending, then numeric index ascending ("cabinet 2" < "cabinet 10").
bool entity_less(std::string_view a, std::string_view b);

enum class Verb {
  go_to,
  take,
  put,
  open,
  close,
  use,
  clean,
  heat,
  cool,
  examine,
  look,
  teleport,
  look_around,
  pick_up,
  move,
  focus,
  activate,
};

inline constexpr Verb kAllVerbs[] = {
    Verb::go_to,   Verb::take,     Verb::put,         Verb::open,    Verb::close, Verb::use,
    Verb::clean,   Verb::heat,     Verb::cool,        Verb::examine, Verb::look,  Verb::teleport,
    Verb::look_around, Verb::pick_up, Verb::move,     Verb::focus,   Verb::activate,
};

std::string_view to_string(Verb verb);
Verb verb_from_string(std::string_view name);
std::size_t verb_arity(Verb verb);

struct ActionCommand {
  Verb verb = Verb::look;
  std::vector<EntityRef> args;

  bool operator==(const ActionCommand&) const = default;
};

// Canonical surface text, e.g. "put spraybottle 2 in/on toilet 1".
std::string render_action(const ActionCommand& cmd);

enum class ParseErrorKind { unknown_verb, bad_arity, malformed_entity };

std::string_view to_string(ParseErrorKind kind);

// Byte offsets into the original input line, half-open.
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const TokenSpan&) const = default;
};

struct ParseError {
  ParseErrorKind kind;
  TokenSpan span;
  std::string message;
};

using ParseResult = std::variant<ActionCommand, ParseError>;

// Lexical parse only; entities are not checked against any world state.
ParseResult parse_action(std::string_view text);

struct Object {
  std::string cls;
  int index = 1;
  Conditions conditions;

  std::string id() const;
  bool operator==(const Object&) const = default;
};

struct Receptacle {
  std::string cls;
  int index = 1;
  std::string room;
  bool openable = false;
  bool is_open = true;
  std::vector<std::string> contents;

  std::string id() const;
  bool accessible() const { return !openable || is_open; }
  bool operator==(const Receptacle&) const = default;
};

struct WorldState {
  EnvFlavor flavor = EnvFlavor::household;
  std::vector<std::string> rooms;
  std::map<std::string, Receptacle> receptacles;
  std::map<std::string, Object> objects;
  // Household: receptacle id, empty while standing in the middle of the room.
  // Science: current room name.
  std::string agent_location;
  std::vector<std::string> inventory;
  std::size_t inventory_capacity = 1;
  std::optional<std::string> focus;
  int step_count = 0;

  bool operator==(const WorldState&) const = default;

  // Throws Error{invalid_argument} when an object is missing or placed twice,
  // or a receptacle references an unknown room.
  void validate() const;
  // Receptacle id holding the object, or nullopt when it is in the inventory.
  std::optional<std::string> location_of(const std::string& object_id) const;
  bool holding(const std::string& object_id) const;
};

struct Observation {
  std::string text;
  bool nothing_happened = false;
  int step_index = 0;
};

struct StepResult {
  WorldState state;
  Observation observation;
};

StepResult step(const WorldState& state, const ActionCommand& cmd);

// Parses and steps; unparseable text is an in-band invalid action.
StepResult step_text(const WorldState& state, std::string_view text);

// Initial scene description for the household flavor; room description for science.
std::string render_scene(const WorldState& state);

std::vector<ActionCommand> valid_actions(const WorldState& state);

// Ordering used by valid_actions: verb rank, then args by entity order.
bool action_less(const ActionCommand& a, const ActionCommand& b);

// "a X 1, a Y 2, and a Z 3" / "nothing"; ids sorted class asc, index desc.
std::string describe_contents(std::vector<std::string> ids);

// Receptacle ids in scene order: class ascending, index descending.
std::vector<std::string> scene_order(const WorldState& state);

// ---- goals ----------------------------------------------------------------

enum class RewardFlavor { binary, dense };

std::string_view to_string(RewardFlavor flavor);
RewardFlavor reward_flavor_from_string(std::string_view name);
EnvFlavor env_flavor_for(RewardFlavor flavor);

enum class TaskType { put, clean, heat, cool, examine, put_two };

inline constexpr TaskType kAllTaskTypes[] = {TaskType::put,  TaskType::clean,   TaskType::heat,
                                             TaskType::cool, TaskType::examine, TaskType::put_two};

std::string_view to_string(TaskType type);
TaskType task_type_from_string(std::string_view name);

enum class PredicateKind { in_receptacle, held, has_condition, focused };

std::string_view to_string(PredicateKind kind);
PredicateKind predicate_kind_from_string(std::string_view name);

struct Checkpoint {
  PredicateKind kind = PredicateKind::in_receptacle;
  std::string object_class;
  std::string receptacle_class;
  std::optional<Condition> condition;
  int count = 1;
  double weight = 1.0;

  bool satisfied(const WorldState& state) const;
  bool operator==(const Checkpoint&) const = default;
};

struct GoalSpec {
  RewardFlavor flavor = RewardFlavor::binary;
  TaskType task_type = TaskType::put;
  std::string target_object_class;
  std::string target_receptacle;
  std::vector<Checkpoint> checkpoints;
  double success_threshold = 1.0;

  // Throws Error{invalid_argument} when weights do not sum to 1 or the
  // threshold is outside (0, 1].
  void validate() const;
  bool operator==(const GoalSpec&) const = default;
};

inline constexpr double kDenseSuccessThreshold = 0.7;
inline constexpr double kBinarySuccessThreshold = 1.0;
// Absorbs floating-point drift in summed checkpoint weights at the threshold.
inline constexpr double kThresholdEpsilon = 1e-9;

bool meets_threshold(double progress, double threshold);

struct ProgressReport {
  double progress = 0.0;
  bool success = false;
  std::set<std::size_t> latched_checkpoints;

  bool operator==(const ProgressReport&) const = default;
};

ProgressReport evaluate_goal(const WorldState& state, const GoalSpec& goal, const ProgressReport& prior);

}  // namespace reflact::world
