#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace reflact {

enum class Role { system, user, assistant };

inline std::string_view to_string(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "?";
}

struct Message {
  Role role = Role::user;
  std::string content;

  bool operator==(const Message&) const = default;
};

using Messages = std::vector<Message>;

}  // namespace reflact
