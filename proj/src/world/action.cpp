#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <string>
#include <string_view>
#include <vector>

#include "reflact/world.hpp"

namespace reflact::world {
namespace {

struct Token {
  std::string text;  // case-folded
  std::size_t begin;
  std::size_t end;
};

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= text.size()) break;
    const std::size_t begin = i;
    std::string folded;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) {
      folded.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))));
      ++i;
    }
    tokens.push_back({std::move(folded), begin, i});
  }
  return tokens;
}

struct VerbPhrase {
  std::array<std::string_view, 2> words;
  std::size_t length;
  Verb verb;
};

// Longer phrases first so "look around" wins over "look".
constexpr VerbPhrase kPhrases[] = {
    {{"look", "around"}, 2, Verb::look_around},
    {{"go", "to"}, 2, Verb::go_to},
    {{"teleport", "to"}, 2, Verb::teleport},
    {{"pick", "up"}, 2, Verb::pick_up},
    {{"focus", "on"}, 2, Verb::focus},
    {{"take", ""}, 1, Verb::take},
    {{"put", ""}, 1, Verb::put},
    {{"open", ""}, 1, Verb::open},
    {{"close", ""}, 1, Verb::close},
    {{"use", ""}, 1, Verb::use},
    {{"clean", ""}, 1, Verb::clean},
    {{"heat", ""}, 1, Verb::heat},
    {{"cool", ""}, 1, Verb::cool},
    {{"examine", ""}, 1, Verb::examine},
    {{"look", ""}, 1, Verb::look},
    {{"move", ""}, 1, Verb::move},
    {{"activate", ""}, 1, Verb::activate},
};

TokenSpan span_of(const std::vector<Token>& tokens, std::size_t first, std::size_t last) {
  if (first >= last) {
    const std::size_t at = first < tokens.size() ? tokens[first].begin
                           : tokens.empty()      ? 0
                                                 : tokens.back().end;
    return {at, at};
  }
  return {tokens[first].begin, tokens[last - 1].end};
}

ParseError make_error(ParseErrorKind kind, TokenSpan span, std::string message) {
  return ParseError{kind, span, std::move(message)};
}

bool is_name_token(std::string_view token) {
  return !token.empty() &&
         std::all_of(token.begin(), token.end(), [](char c) {
           return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '-';
         });
}

std::variant<EntityRef, ParseError> parse_entity(const std::vector<Token>& tokens, std::size_t first,
                                                 std::size_t last) {
  if (first >= last) {
    return make_error(ParseErrorKind::bad_arity, span_of(tokens, first, last), "missing entity");
  }
  const auto span = span_of(tokens, first, last);
  if (last - first != 2 || !is_name_token(tokens[first].text)) {
    return make_error(ParseErrorKind::malformed_entity, span, "expected '<name> <index>'");
  }
  const std::string& digits = tokens[first + 1].text;
  int index = 0;
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), index);
  if (ec != std::errc{} || ptr != digits.data() + digits.size() || index < 1) {
    return make_error(ParseErrorKind::malformed_entity, span, "entity index must be a positive integer");
  }
  return EntityRef{tokens[first].text, index};
}

std::size_t find_separator(const std::vector<Token>& tokens, std::size_t first, std::size_t last,
                           const std::vector<std::string_view>& separators) {
  for (std::size_t i = first; i < last; ++i) {
    for (auto sep : separators) {
      if (tokens[i].text == sep) return i;
    }
  }
  return last;
}

}  // namespace

std::string_view to_string(ParseErrorKind kind) {
  switch (kind) {
    case ParseErrorKind::unknown_verb: return "UnknownVerb";
    case ParseErrorKind::bad_arity: return "BadArity";
    case ParseErrorKind::malformed_entity: return "MalformedEntity";
  }
  return "?";
}

std::string_view to_string(Verb verb) {
  switch (verb) {
    case Verb::go_to: return "GoTo";
    case Verb::take: return "Take";
    case Verb::put: return "Put";
    case Verb::open: return "Open";
    case Verb::close: return "Close";
    case Verb::use: return "Use";
    case Verb::clean: return "Clean";
    case Verb::heat: return "Heat";
    case Verb::cool: return "Cool";
    case Verb::examine: return "Examine";
    case Verb::look: return "Look";
    case Verb::teleport: return "Teleport";
    case Verb::look_around: return "LookAround";
    case Verb::pick_up: return "PickUp";
    case Verb::move: return "Move";
    case Verb::focus: return "Focus";
    case Verb::activate: return "Activate";
  }
  return "?";
}

Verb verb_from_string(std::string_view name) {
  for (Verb v : kAllVerbs) {
    if (to_string(v) == name) return v;
  }
  throw Error(ErrorCode::invalid_argument, "unknown verb: " + std::string(name));
}

std::size_t verb_arity(Verb verb) {
  switch (verb) {
    case Verb::look:
    case Verb::look_around: return 0;
    case Verb::take:
    case Verb::put:
    case Verb::clean:
    case Verb::heat:
    case Verb::cool:
    case Verb::move: return 2;
    default: return 1;
  }
}

std::string EntityRef::id() const {
  return index ? name + " " + std::to_string(*index) : name;
}

std::string render_action(const ActionCommand& cmd) {
  auto arg = [&](std::size_t i) { return i < cmd.args.size() ? cmd.args[i].id() : std::string(); };
  switch (cmd.verb) {
    case Verb::go_to: return "go to " + arg(0);
    case Verb::take: return "take " + arg(0) + " from " + arg(1);
    case Verb::put: return "put " + arg(0) + " in/on " + arg(1);
    case Verb::open: return "open " + arg(0);
    case Verb::close: return "close " + arg(0);
    case Verb::use: return "use " + arg(0);
    case Verb::clean: return "clean " + arg(0) + " with " + arg(1);
    case Verb::heat: return "heat " + arg(0) + " with " + arg(1);
    case Verb::cool: return "cool " + arg(0) + " with " + arg(1);
    case Verb::examine: return "examine " + arg(0);
    case Verb::look: return "look";
    case Verb::teleport: return "teleport to " + arg(0);
    case Verb::look_around: return "look around";
    case Verb::pick_up: return "pick up " + arg(0);
    case Verb::move: return "move " + arg(0) + " to " + arg(1);
    case Verb::focus: return "focus on " + arg(0);
    case Verb::activate: return "activate " + arg(0);
  }
  return {};
}

ParseResult parse_action(std::string_view text) {
  const auto tokens = tokenize(text);
  if (tokens.empty()) {
    return make_error(ParseErrorKind::unknown_verb, {0, 0}, "empty action");
  }

  const VerbPhrase* phrase = nullptr;
  for (const auto& candidate : kPhrases) {
    if (tokens.size() < candidate.length) continue;
    bool match = true;
    for (std::size_t i = 0; i < candidate.length; ++i) {
      if (tokens[i].text != candidate.words[i]) match = false;
    }
    if (match) {
      phrase = &candidate;
      break;
    }
  }
  if (phrase == nullptr) {
    return make_error(ParseErrorKind::unknown_verb, span_of(tokens, 0, 1),
                      "unknown verb '" + tokens[0].text + "'");
  }

  const std::size_t first = phrase->length;
  const std::size_t last = tokens.size();
  ActionCommand cmd{phrase->verb, {}};

  auto push_entity = [&](std::size_t a, std::size_t b) -> std::optional<ParseError> {
    auto parsed = parse_entity(tokens, a, b);
    if (auto* err = std::get_if<ParseError>(&parsed)) return *err;
    cmd.args.push_back(std::get<EntityRef>(parsed));
    return std::nullopt;
  };

  switch (phrase->verb) {
    case Verb::look:
    case Verb::look_around:
      if (first != last) {
        return make_error(ParseErrorKind::bad_arity, span_of(tokens, first, last),
                          "verb takes no arguments");
      }
      return cmd;

    case Verb::teleport: {
      if (first == last) {
        return make_error(ParseErrorKind::bad_arity, span_of(tokens, first, last), "missing room");
      }
      std::string room;
      for (std::size_t i = first; i < last; ++i) {
        if (!is_name_token(tokens[i].text)) {
          return make_error(ParseErrorKind::malformed_entity, span_of(tokens, first, last),
                            "room names are alphabetic");
        }
        if (!room.empty()) room.push_back(' ');
        room += tokens[i].text;
      }
      cmd.args.push_back(EntityRef{room, std::nullopt});
      return cmd;
    }

    case Verb::take:
    case Verb::put:
    case Verb::clean:
    case Verb::heat:
    case Verb::cool:
    case Verb::move: {
      std::vector<std::string_view> seps = {"with"};
      if (phrase->verb == Verb::take) seps = {"from"};
      if (phrase->verb == Verb::put) seps = {"in/on", "in", "on"};
      if (phrase->verb == Verb::move) seps = {"to"};
      const std::size_t sep = find_separator(tokens, first, last, seps);
      if (sep == last) {
        return make_error(ParseErrorKind::bad_arity, span_of(tokens, first, last),
                          "expected two entities");
      }
      if (auto err = push_entity(first, sep)) return *err;
      if (auto err = push_entity(sep + 1, last)) return *err;
      return cmd;
    }

    default:
      if (auto err = push_entity(first, last)) return *err;
      return cmd;
  }
}

}  // namespace reflact::world
