#pragma once

// Policies behind a uniform interface: live chat-completion endpoints,
// replay of recorded episodes, and scripted oracle policies.

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "reflact/backbones.hpp"
#include "reflact/message.hpp"
#include "reflact/taskgen.hpp"

namespace reflact::gateway {

using backbones::BackboneKind;

struct Usage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
  bool operator==(const Usage&) const = default;
};

struct CompletionResult {
  std::string text;
  std::optional<Usage> usage;
  std::string finish_reason;
  bool operator==(const CompletionResult&) const = default;
};

enum class DistributionMethod { scored, scripted, replayed };

std::string_view to_string(DistributionMethod method);
DistributionMethod distribution_method_from_string(std::string_view name);

struct ActionProbability {
  std::string action;
  double probability = 0.0;
  bool operator==(const ActionProbability&) const = default;
};

struct ActionDistribution {
  std::vector<ActionProbability> entries;
  DistributionMethod method = DistributionMethod::scored;

  // Throws Error{invalid_argument} ("NotNormalized") unless entries are
  // distinct, non-negative and sum to 1 within 1e-6.
  void validate() const;
  bool operator==(const ActionDistribution&) const = default;
};

nlohmann::json to_json(const ActionDistribution& d);
ActionDistribution distribution_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Usage& u);
Usage usage_from_json(const nlohmann::json& j);

// Softmax over summed log-probabilities, one per candidate.
ActionDistribution softmax(const std::vector<std::string>& candidates, const std::vector<double>& logprobs,
                           DistributionMethod method = DistributionMethod::scored);
ActionDistribution one_hot(const std::vector<std::string>& candidates, const std::string& chosen,
                           DistributionMethod method);
ActionDistribution uniform(const std::vector<std::string>& candidates, DistributionMethod method);

struct CompletionParams {
  double temperature = 0.0;
  int max_tokens = 512;
};

// System prompt used for post-failure reflections.
inline constexpr const char* kReflectionPrompt =
    "You were unsuccessful in completing the task below. Diagnose the failure and write a short plan for the next "
    "attempt. Refer to specific actions you should have taken. Answer in at most three sentences.";

class Backend {
 public:
  virtual ~Backend() = default;

  // Errors: TransportError (Error{backend}), ReplayExhausted, ScriptedDone.
  virtual CompletionResult complete(const Messages& messages, const CompletionParams& params) = 0;
  // Errors: UnsupportedByBackend (Error{unsupported}).
  virtual ActionDistribution score_candidates(const Messages& messages, const std::vector<std::string>& candidates) = 0;
  // Stable description recorded in trajectory headers.
  virtual nlohmann::json descriptor() const = 0;
};

// Process-wide count of outbound connection attempts. Scripted and replay
// backends never touch it.
std::uint64_t network_attempts();

struct LiveSettings {
  std::string base_url;
  std::string model;
  std::string api_key;
  double temperature = 0.0;
  int max_tokens = 512;
  int timeout_ms = 30000;
  int max_attempts = 3;
  int backoff_ms = 500;
  // 0 disables the token bucket.
  double requests_per_second = 0.0;
  int max_in_flight = 4;
};

// Thread-safe; one instance is shared by all episodes of a suite.
class LiveBackend final : public Backend {
 public:
  explicit LiveBackend(LiveSettings settings);
  ~LiveBackend() override;

  CompletionResult complete(const Messages& messages, const CompletionParams& params) override;
  // Sums the returned token log-probabilities of "Action: <candidate>" sent
  // as an echoed assistant turn, one request per candidate.
  ActionDistribution score_candidates(const Messages& messages, const std::vector<std::string>& candidates) override;
  nlohmann::json descriptor() const override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Returns recorded completions and distributions in order. Reports the
// descriptor of the backend that produced the recording. Once completions run
// out it rethrows the recorded backend error, if any, else ReplayExhausted.
class ReplayBackend final : public Backend {
 public:
  ReplayBackend(std::vector<CompletionResult> completions, std::vector<ActionDistribution> distributions,
                nlohmann::json recorded_descriptor, std::optional<std::string> recorded_error = std::nullopt);

  CompletionResult complete(const Messages& messages, const CompletionParams& params) override;
  ActionDistribution score_candidates(const Messages& messages, const std::vector<std::string>& candidates) override;
  nlohmann::json descriptor() const override { return descriptor_; }

  std::size_t cursor() const { return cursor_; }
  std::size_t size() const { return completions_.size(); }

 private:
  std::vector<CompletionResult> completions_;
  std::vector<ActionDistribution> distributions_;
  nlohmann::json descriptor_;
  std::optional<std::string> error_;
  std::size_t cursor_ = 0;
  std::size_t dist_cursor_ = 0;
};

enum class ScriptedPolicy { oracle, always_fail, fail_then_succeed, probe };

std::string_view to_string(ScriptedPolicy policy);
ScriptedPolicy scripted_policy_from_string(std::string_view name);

inline constexpr const char* kCannedReflection =
    "I failed because I kept trying actions that did nothing. Next time I will go directly to the receptacle that "
    "holds the target, take it, and bring it to the goal.";

// Action emitted by the failing policies; it parses but is never valid.
inline constexpr const char* kFailingAction = "go to nowhere 1";

// Plays the task's oracle plan in the backbone's output format. Turn index is
// read from the messages, so retries and repeated calls are idempotent.
class ScriptedBackend final : public Backend {
 public:
  ScriptedBackend(const taskgen::TaskSpec& task, BackboneKind kind, ScriptedPolicy policy = ScriptedPolicy::oracle,
                  std::string reflection = kCannedReflection);

  CompletionResult complete(const Messages& messages, const CompletionParams& params) override;
  // Oracle and failing policies: one-hot on the next oracle action when it is
  // a candidate, else uniform. Probe: one-hot only when the final assistant
  // message names the next oracle action, else uniform.
  ActionDistribution score_candidates(const Messages& messages, const std::vector<std::string>& candidates) override;
  nlohmann::json descriptor() const override;

  const std::vector<std::string>& plan() const { return plan_; }

 private:
  bool failing(const Messages& messages) const;
  std::optional<std::string> next_action(const Messages& messages) const;

  taskgen::TaskSpec task_;
  BackboneKind kind_;
  ScriptedPolicy policy_;
  std::string reflection_;
  std::vector<std::string> plan_;
};

// 1 + number of "Observation: " user turns.
int turn_index(const Messages& messages);

}  // namespace reflact::gateway
