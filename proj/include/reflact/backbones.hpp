#pragma once

// Prompt construction and output parsing for each reasoning backbone.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "reflact/message.hpp"
#include "reflact/world.hpp"

namespace reflact::backbones {

using world::EnvFlavor;

enum class BackboneKind { nothinking, react, planandact, reflact, state, goal, stategoal, stategoalthought };

inline constexpr BackboneKind kAllKinds[] = {
    BackboneKind::nothinking, BackboneKind::react,     BackboneKind::planandact, BackboneKind::reflact,
    BackboneKind::state,      BackboneKind::goal,      BackboneKind::stategoal,  BackboneKind::stategoalthought,
};

// Lower-case identifiers used in files and flags ("reflact", "stategoal").
std::string_view to_string(BackboneKind kind);
BackboneKind kind_from_string(std::string_view name);
std::string_view display_name(BackboneKind kind);

struct Backbone {
  BackboneKind kind = BackboneKind::reflact;
  // Replaces only the format paragraph.
  std::optional<std::string> instruction_override;

  bool operator==(const Backbone&) const = default;
};

// Read-only map of catalog files keyed by path relative to the prompt root,
// e.g. "household/reflact/instruction.txt".
class PromptCatalog {
 public:
  static const PromptCatalog& builtin();
  static PromptCatalog from_directory(const std::filesystem::path& root);

  // Throws Error{invalid_argument} ("UnknownCombination") for missing files.
  const std::string& file(const std::string& relative) const;
  bool contains(const std::string& relative) const { return files_.contains(relative); }
  const std::map<std::string, std::string>& files() const { return files_; }

 private:
  std::map<std::string, std::string> files_;
};

std::string format_paragraph(const Backbone& backbone, EnvFlavor flavor,
                             const PromptCatalog& catalog = PromptCatalog::builtin());

// Preamble, format paragraph and action list joined by newlines.
std::string system_prompt(const Backbone& backbone, EnvFlavor flavor,
                          const PromptCatalog& catalog = PromptCatalog::builtin());

bool should_reason(BackboneKind kind, int t);

// ---- in-context examples ---------------------------------------------------

// One turn of a stored example, carrying every reasoning variant it has.
struct IclTurn {
  std::optional<std::string> thought;
  std::optional<std::string> reflection;
  std::string action;
  std::optional<std::string> observation;
};

struct IclExample {
  EnvFlavor flavor = EnvFlavor::household;
  std::string name;
  std::string header;
  std::vector<IclTurn> turns;
};

IclExample parse_icl(EnvFlavor flavor, const std::string& name, const std::string& text);

// Example file stem for a task type: prompts/{flavor}/icl/{stem}.txt.
std::string icl_name_for(EnvFlavor flavor, world::TaskType type);
IclExample load_icl(EnvFlavor flavor, world::TaskType type, const PromptCatalog& catalog = PromptCatalog::builtin());

struct ReasoningOutput {
  std::optional<std::string> reasoning;
  std::string action;
  std::string raw;
  bool lenient = false;

  bool operator==(const ReasoningOutput&) const = default;
};

struct TranscriptTurn {
  ReasoningOutput output;
  std::optional<std::string> observation;
};

// An example specialised to one backbone.
struct Transcript {
  EnvFlavor flavor = EnvFlavor::household;
  std::string header;
  std::vector<TranscriptTurn> turns;
};

// What the agent can know about itself at a turn, tracked from its own
// actions and observations.
struct AgentView {
  std::optional<std::string> location;
  std::vector<std::string> inventory;
};

// Task phrase from an instruction line: "put some spraybottle on toilet".
std::string goal_phrase(const std::string& instruction_text);

// Updates the view after an action and its observation.
void track(AgentView& view, EnvFlavor flavor, const std::string& action, const std::string& observation);

// Reasoning text for the state/goal ablation kinds; nullopt for other kinds.
// stategoalthought appends "Thought: ..." only when `thought` is set.
std::optional<std::string> ablation_reasoning(BackboneKind kind, EnvFlavor flavor, const std::string& goal,
                                              const AgentView& view, const std::optional<std::string>& thought);

Transcript icl_transcript(BackboneKind kind, const IclExample& example);
std::string render_transcript(const Transcript& transcript);

// Assistant message text for one turn, e.g. "Reflection: ...\nAction: go to cabinet 1".
std::string render_output(BackboneKind kind, const std::optional<std::string>& reasoning, const std::string& action);

// ---- output parsing ---------------------------------------------------------

enum class FormatErrorKind { missing_action, multiple_actions, missing_required_label };

std::string_view to_string(FormatErrorKind kind);

struct FormatError {
  FormatErrorKind kind;
  std::string message;
};

using ParseOutputResult = std::variant<ReasoningOutput, FormatError>;

// The "Your output must strictly follow this format: ..." sentence of the
// kind's format paragraph, used as the corrective re-prompt.
std::string corrective_prompt(const std::string& format_paragraph);

// Strict pass for the kind's labels, then (if allowed) a lenient pass that
// accepts any text with exactly one "Action:" line.
ParseOutputResult parse_output(BackboneKind kind, const std::string& raw, int t = 1, bool allow_lenient = true);

// ---- context ----------------------------------------------------------------

struct HistoryEntry {
  std::optional<std::string> reasoning;
  std::string action;
  std::string observation;
  // Set for turns whose output never parsed; sent back verbatim.
  std::optional<std::string> raw;
};

struct Context {
  EnvFlavor flavor = EnvFlavor::household;
  std::string system_prompt;
  std::string icl;
  // Initial observation followed by the task line.
  std::string first_user;
  std::vector<HistoryEntry> history;
  std::vector<std::string> memory;

  int t() const { return static_cast<int>(history.size()) + 1; }
};

inline constexpr const char* kMemoryHeading = "Your memory from previous attempts:";
inline constexpr const char* kExampleHeading = "Here is an example:";
inline constexpr const char* kCorrectiveSuffix = "Your output must strictly follow this format";

std::string system_message(const Context& ctx);
Messages turn_messages(BackboneKind kind, const Context& ctx);

}  // namespace reflact::backbones
