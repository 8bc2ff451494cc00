#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <utility>

#include "reflact/backbones.hpp"
#include "reflact/error.hpp"

namespace reflact::backbones {

namespace embedded {
extern const std::pair<std::string_view, std::string_view> kFiles[];
extern const std::size_t kFileCount;
}  // namespace embedded

namespace {

struct KindName {
  BackboneKind kind;
  std::string_view id;
  std::string_view display;
};

constexpr KindName kNames[] = {
    {BackboneKind::nothinking, "nothinking", "NoThinking"},
    {BackboneKind::react, "react", "ReAct"},
    {BackboneKind::planandact, "planandact", "PlanAndAct"},
    {BackboneKind::reflact, "reflact", "ReflAct"},
    {BackboneKind::state, "state", "StateOnly"},
    {BackboneKind::goal, "goal", "GoalOnly"},
    {BackboneKind::stategoal, "stategoal", "StateGoal"},
    {BackboneKind::stategoalthought, "stategoalthought", "StateGoalThought"},
};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

// Catalog files end with a single newline that is not part of the prompt.
std::string strip_final_newline(std::string_view text) {
  if (!text.empty() && text.back() == '\n') text.remove_suffix(1);
  return std::string(text);
}

std::string flavor_dir(EnvFlavor flavor) { return std::string(world::to_string(flavor)); }

}  // namespace

std::string_view to_string(BackboneKind kind) {
  for (const auto& n : kNames) {
    if (n.kind == kind) return n.id;
  }
  return "?";
}

std::string_view display_name(BackboneKind kind) {
  for (const auto& n : kNames) {
    if (n.kind == kind) return n.display;
  }
  return "?";
}

BackboneKind kind_from_string(std::string_view name) {
  const std::string key = lower(name);
  for (const auto& n : kNames) {
    if (key == n.id || key == lower(n.display)) return n.kind;
  }
  throw Error(ErrorCode::invalid_argument, "UnknownBackbone: " + std::string(name));
}

const PromptCatalog& PromptCatalog::builtin() {
  static const PromptCatalog catalog = [] {
    PromptCatalog c;
    for (std::size_t i = 0; i < embedded::kFileCount; ++i) {
      c.files_.emplace(std::string(embedded::kFiles[i].first), strip_final_newline(embedded::kFiles[i].second));
    }
    return c;
  }();
  return catalog;
}

PromptCatalog PromptCatalog::from_directory(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) {
    throw Error(ErrorCode::io, "prompt directory not found: " + root.string());
  }
  PromptCatalog c;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    c.files_.emplace(fs::relative(entry.path(), root).generic_string(), strip_final_newline(buf.str()));
  }
  return c;
}

const std::string& PromptCatalog::file(const std::string& relative) const {
  auto it = files_.find(relative);
  if (it == files_.end()) {
    throw Error(ErrorCode::invalid_argument, "UnknownCombination: no prompt file " + relative);
  }
  return it->second;
}

std::string format_paragraph(const Backbone& backbone, EnvFlavor flavor, const PromptCatalog& catalog) {
  if (backbone.instruction_override) return *backbone.instruction_override;
  return catalog.file(flavor_dir(flavor) + "/" + std::string(to_string(backbone.kind)) + "/instruction.txt");
}

std::string system_prompt(const Backbone& backbone, EnvFlavor flavor, const PromptCatalog& catalog) {
  const std::string dir = flavor_dir(flavor);
  // Resolve the kind's file even when overridden so unknown combinations still fail.
  const std::string& own = catalog.file(dir + "/" + std::string(to_string(backbone.kind)) + "/instruction.txt");
  const std::string& format = backbone.instruction_override ? *backbone.instruction_override : own;
  return catalog.file(dir + "/preamble.txt") + "\n" + format + "\n" + catalog.file(dir + "/actions.txt");
}

bool should_reason(BackboneKind kind, int t) {
  switch (kind) {
    case BackboneKind::nothinking: return false;
    case BackboneKind::planandact: return t == 1;
    default: return true;
  }
}

std::string icl_name_for(EnvFlavor, world::TaskType type) { return std::string(world::to_string(type)); }

IclExample load_icl(EnvFlavor flavor, world::TaskType type, const PromptCatalog& catalog) {
  const std::string name = icl_name_for(flavor, type);
  return parse_icl(flavor, name, catalog.file(flavor_dir(flavor) + "/icl/" + name + ".txt"));
}

}  // namespace reflact::backbones
