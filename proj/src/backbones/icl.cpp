#include <sstream>

#include "reflact/backbones.hpp"
#include "reflact/error.hpp"

namespace reflact::backbones {

namespace {

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string single_label(BackboneKind kind) {
  switch (kind) {
    case BackboneKind::react:
    case BackboneKind::planandact: return "Thought: ";
    case BackboneKind::reflact: return "Reflection: ";
    case BackboneKind::state: return "State: ";
    case BackboneKind::goal: return "Goal: ";
    default: return "";
  }
}

std::string location_field(EnvFlavor flavor, const AgentView& view) {
  if (view.location) return *view.location;
  return flavor == EnvFlavor::household ? "middle of the room" : "unknown";
}

std::string inventory_field(const AgentView& view) {
  return view.inventory.empty() ? "none" : join(view.inventory, ", ");
}

std::string state_sentence(EnvFlavor flavor, const AgentView& view) {
  std::string where;
  if (!view.location) {
    where = flavor == EnvFlavor::household ? "in the middle of the room" : "in an unknown room";
  } else {
    where = (flavor == EnvFlavor::household ? "at " : "in the ") + *view.location;
  }
  return "I am " + where + ", holding " + (view.inventory.empty() ? "nothing" : join(view.inventory, ", "));
}

void drop(std::vector<std::string>& inv, const std::string& id) {
  for (auto it = inv.begin(); it != inv.end(); ++it) {
    if (*it == id) {
      inv.erase(it);
      return;
    }
  }
}

}  // namespace

IclExample parse_icl(EnvFlavor flavor, const std::string& name, const std::string& text) {
  IclExample ex;
  ex.flavor = flavor;
  ex.name = name;
  const auto lines = split_lines(text);
  std::size_t i = 0;
  std::vector<std::string> header;
  for (; i < lines.size() && !lines[i].empty(); ++i) header.push_back(lines[i]);
  ex.header = join(header, "\n");

  std::optional<std::string>* last = nullptr;
  std::string* last_action = nullptr;
  auto fresh_turn = [&] {
    ex.turns.emplace_back();
    last = nullptr;
    last_action = nullptr;
  };
  auto turn_open_for_reasoning = [&] {
    return !ex.turns.empty() && ex.turns.back().action.empty() && !ex.turns.back().observation;
  };

  for (; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (line.empty()) continue;
    if (starts_with(line, "Thought:") || starts_with(line, "Reflection:")) {
      const bool thought = starts_with(line, "Thought:");
      if (!turn_open_for_reasoning()) fresh_turn();
      auto& slot = thought ? ex.turns.back().thought : ex.turns.back().reflection;
      if (slot) throw Error(ErrorCode::invalid_argument, "malformed example " + name + ": repeated label");
      const std::size_t colon = line.find(':');
      slot = line.substr(colon + (line.size() > colon + 1 && line[colon + 1] == ' ' ? 2 : 1));
      last = &slot;
      last_action = nullptr;
    } else if (starts_with(line, "Action: ")) {
      if (ex.turns.empty() || !ex.turns.back().action.empty()) fresh_turn();
      ex.turns.back().action = line.substr(8);
      last = nullptr;
      last_action = &ex.turns.back().action;
    } else if (starts_with(line, "Observation: ")) {
      if (ex.turns.empty() || ex.turns.back().action.empty() || ex.turns.back().observation) {
        throw Error(ErrorCode::invalid_argument, "malformed example " + name + ": observation without action");
      }
      ex.turns.back().observation = line.substr(13);
      last = &ex.turns.back().observation;
      last_action = nullptr;
    } else if (last != nullptr) {
      **last += "\n" + line;
    } else if (last_action != nullptr) {
      throw Error(ErrorCode::invalid_argument, "malformed example " + name + ": multi-line action");
    } else {
      throw Error(ErrorCode::invalid_argument, "malformed example " + name + ": stray line '" + line + "'");
    }
  }
  for (const auto& t : ex.turns) {
    if (t.action.empty()) throw Error(ErrorCode::invalid_argument, "malformed example " + name + ": turn without action");
  }
  return ex;
}

std::string goal_phrase(const std::string& instruction_text) {
  for (const std::string_view prefix : {"Your task is to: ", "Your task is to "}) {
    const std::size_t at = instruction_text.find(prefix);
    if (at == std::string::npos) continue;
    std::string rest = instruction_text.substr(at + prefix.size());
    const std::size_t end = rest.find_first_of(".\n");
    return end == std::string::npos ? rest : rest.substr(0, end);
  }
  return instruction_text;
}

void track(AgentView& view, EnvFlavor flavor, const std::string& action, const std::string& observation) {
  if (flavor == EnvFlavor::science) {
    const std::string room_prefix = "This room is called the ";
    if (starts_with(observation, room_prefix)) {
      const std::size_t end = observation.find('.', room_prefix.size());
      view.location = observation.substr(room_prefix.size(), end - room_prefix.size());
      return;
    }
  }
  if (observation == "Nothing happens.") return;
  if (starts_with(action, "go to ")) {
    view.location = action.substr(6);
  } else if (starts_with(action, "teleport to ")) {
    view.location = action.substr(12);
  } else if (starts_with(action, "take ")) {
    const std::size_t from = action.find(" from ");
    view.inventory.push_back(action.substr(5, from == std::string::npos ? std::string::npos : from - 5));
  } else if (starts_with(action, "pick up ")) {
    view.inventory.push_back(action.substr(8));
  } else if (starts_with(action, "put ")) {
    std::size_t at = action.find(" in/on ");
    if (at == std::string::npos) at = action.find(" in ");
    if (at == std::string::npos) at = action.find(" on ");
    drop(view.inventory, action.substr(4, at == std::string::npos ? std::string::npos : at - 4));
  } else if (starts_with(action, "move ")) {
    const std::size_t to = action.find(" to ");
    drop(view.inventory, action.substr(5, to == std::string::npos ? std::string::npos : to - 5));
  }
}

std::optional<std::string> ablation_reasoning(BackboneKind kind, EnvFlavor flavor, const std::string& goal,
                                              const AgentView& view, const std::optional<std::string>& thought) {
  switch (kind) {
    case BackboneKind::state: return state_sentence(flavor, view) + ".";
    case BackboneKind::goal: return goal + ".";
    case BackboneKind::stategoal: return "State: " + state_sentence(flavor, view) + ", Goal: " + goal;
    case BackboneKind::stategoalthought: {
      std::string block = "Goal: " + goal + "\nCurrent location: " + location_field(flavor, view) +
                          "\nCurrent inventory: " + inventory_field(view);
      if (thought) block += "\nThought: " + *thought;
      return block;
    }
    default: return std::nullopt;
  }
}

Transcript icl_transcript(BackboneKind kind, const IclExample& example) {
  Transcript tr;
  tr.flavor = example.flavor;
  tr.header = example.header;
  const std::string goal = goal_phrase(example.header);
  AgentView view;
  for (std::size_t i = 0; i < example.turns.size(); ++i) {
    const IclTurn& turn = example.turns[i];
    std::optional<std::string> reasoning;
    switch (kind) {
      case BackboneKind::nothinking: break;
      case BackboneKind::react: reasoning = turn.thought; break;
      case BackboneKind::planandact:
        if (i == 0) reasoning = turn.thought;
        break;
      case BackboneKind::reflact: reasoning = turn.reflection ? turn.reflection : turn.thought; break;
      default: reasoning = ablation_reasoning(kind, example.flavor, goal, view, turn.thought); break;
    }
    TranscriptTurn out;
    out.output.reasoning = reasoning;
    out.output.action = turn.action;
    out.output.raw = render_output(kind, reasoning, turn.action);
    out.observation = turn.observation;
    tr.turns.push_back(std::move(out));
    if (turn.observation) track(view, example.flavor, turn.action, *turn.observation);
  }
  return tr;
}

std::string render_output(BackboneKind kind, const std::optional<std::string>& reasoning, const std::string& action) {
  if (!reasoning || kind == BackboneKind::nothinking) return "Action: " + action;
  return single_label(kind) + *reasoning + "\nAction: " + action;
}

std::string render_transcript(const Transcript& transcript) {
  std::vector<std::string> blocks;
  const bool household = transcript.flavor == EnvFlavor::household;
  for (const auto& turn : transcript.turns) {
    blocks.push_back(turn.output.raw);
    if (turn.observation) blocks.push_back("Observation: " + *turn.observation);
  }
  return transcript.header + "\n\n" + join(blocks, household ? "\n" : "\n\n");
}

}  // namespace reflact::backbones
