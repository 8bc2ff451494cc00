#include <algorithm>
#include <cctype>
#include <sstream>

#include "reflact/backbones.hpp"

namespace reflact::backbones {

namespace {

constexpr std::string_view kSpace = " \t\r\n";

std::string_view trim(std::string_view s) {
  const std::size_t b = s.find_first_not_of(kSpace);
  if (b == std::string_view::npos) return {};
  const std::size_t e = s.find_last_not_of(kSpace);
  return s.substr(b, e - b + 1);
}

bool istarts_with(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) != std::tolower(static_cast<unsigned char>(prefix[i]))) {
      return false;
    }
  }
  return true;
}

std::string_view after_label(std::string_view s, std::string_view label) { return trim(s.substr(label.size())); }

// Text after a leading single label, or nullopt when the label is missing or empty.
std::optional<std::string> labelled(std::string_view pre, std::string_view label) {
  if (!istarts_with(pre, label)) return std::nullopt;
  const auto rest = after_label(pre, label);
  if (rest.empty()) return std::nullopt;
  return std::string(rest);
}

bool has_line(const std::vector<std::string_view>& lines, std::string_view label) {
  return std::any_of(lines.begin(), lines.end(), [&](std::string_view l) { return istarts_with(trim(l), label); });
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

std::string_view span(std::string_view text, const std::vector<std::string_view>& lines, std::size_t from,
                      std::size_t to) {
  if (from >= to) return {};
  const char* b = lines[from].data();
  const char* e = lines[to - 1].data() + lines[to - 1].size();
  return trim(text.substr(static_cast<std::size_t>(b - text.data()), static_cast<std::size_t>(e - b)));
}

// nullopt: strict pass fails. Inner nullopt: strict pass with no reasoning.
std::optional<std::optional<std::string>> strict_reasoning(BackboneKind kind, std::string_view pre, int t) {
  using R = std::optional<std::string>;
  if (!should_reason(kind, t)) {
    if (pre.empty()) return R{};
    return std::nullopt;
  }
  switch (kind) {
    case BackboneKind::react:
    case BackboneKind::planandact:
      if (pre.empty()) return R{};
      if (auto r = labelled(pre, "thought:")) return R{*r};
      return std::nullopt;
    case BackboneKind::reflact:
      if (auto r = labelled(pre, "reflection:")) return R{*r};
      return std::nullopt;
    case BackboneKind::state:
      if (auto r = labelled(pre, "state:")) return R{*r};
      return std::nullopt;
    case BackboneKind::goal:
      if (auto r = labelled(pre, "goal:")) return R{*r};
      return std::nullopt;
    case BackboneKind::stategoal: {
      std::string low(pre);
      std::transform(low.begin(), low.end(), low.begin(), [](unsigned char c) { return std::tolower(c); });
      if (istarts_with(pre, "state:") && low.find("goal:") != std::string::npos) return R{std::string(pre)};
      return std::nullopt;
    }
    case BackboneKind::stategoalthought: {
      const auto lines = split_lines(pre);
      if (istarts_with(pre, "goal:") && has_line(lines, "current location:") && has_line(lines, "current inventory:")) {
        return R{std::string(pre)};
      }
      return std::nullopt;
    }
    default: return std::nullopt;
  }
}

}  // namespace

std::string_view to_string(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::missing_action: return "MissingAction";
    case FormatErrorKind::multiple_actions: return "MultipleActions";
    case FormatErrorKind::missing_required_label: return "MissingRequiredLabel";
  }
  return "?";
}

ParseOutputResult parse_output(BackboneKind kind, const std::string& raw, int t, bool allow_lenient) {
  std::string text = raw;
  text.erase(std::remove(text.begin(), text.end(), '\r'), text.end());
  const auto lines = split_lines(text);

  std::vector<std::size_t> action_lines;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (istarts_with(trim(lines[i]), "action:")) action_lines.push_back(i);
  }
  if (action_lines.empty()) {
    return FormatError{FormatErrorKind::missing_action, "MissingAction: no line starts with \"Action:\""};
  }
  if (action_lines.size() > 1) {
    return FormatError{FormatErrorKind::multiple_actions,
                       "MultipleActions: " + std::to_string(action_lines.size()) + " \"Action:\" lines"};
  }

  const std::size_t idx = action_lines.front();
  std::string_view action = trim(lines[idx]);
  while (istarts_with(action, "action:")) action = after_label(action, "action:");
  if (action.empty()) return FormatError{FormatErrorKind::missing_action, "MissingAction: empty action"};

  const std::string_view pre = span(text, lines, 0, idx);
  const std::string_view post = span(text, lines, idx + 1, lines.size());

  ReasoningOutput out;
  out.action = std::string(action);
  out.raw = raw;
  if (post.empty()) {
    if (auto strict = strict_reasoning(kind, pre, t)) {
      out.reasoning = *strict;
      return out;
    }
  }
  if (!allow_lenient) {
    return FormatError{FormatErrorKind::missing_required_label,
                       "MissingRequiredLabel: output does not match the " + std::string(display_name(kind)) + " format"};
  }
  out.lenient = true;
  if (should_reason(kind, t) && !pre.empty()) out.reasoning = std::string(pre);
  return out;
}

std::string corrective_prompt(const std::string& format_paragraph) {
  const std::size_t at = format_paragraph.find(kCorrectiveSuffix);
  if (at == std::string::npos) return std::string(kCorrectiveSuffix) + ".";
  const std::size_t open = format_paragraph.find('"', at);
  const std::size_t close = open == std::string::npos ? open : format_paragraph.find("\".", open + 1);
  if (close == std::string::npos) return format_paragraph.substr(at);
  return format_paragraph.substr(at, close + 2 - at);
}

// ---- context ----------------------------------------------------------------

std::string system_message(const Context& ctx) {
  std::string out = ctx.system_prompt + "\n\n" + kExampleHeading + "\n" + ctx.icl;
  if (!ctx.memory.empty()) {
    out += "\n\n";
    out += kMemoryHeading;
    for (std::size_t i = 0; i < ctx.memory.size(); ++i) {
      out += "\nTrial " + std::to_string(i + 1) + ": " + ctx.memory[i];
    }
  }
  return out;
}

Messages turn_messages(BackboneKind kind, const Context& ctx) {
  Messages msgs;
  msgs.push_back({Role::system, system_message(ctx)});
  msgs.push_back({Role::user, ctx.first_user});
  for (const auto& h : ctx.history) {
    msgs.push_back({Role::assistant, h.raw ? *h.raw : render_output(kind, h.reasoning, h.action)});
    msgs.push_back({Role::user, "Observation: " + h.observation});
  }
  return msgs;
}

}  // namespace reflact::backbones
