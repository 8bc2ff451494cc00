#include "reflact/gateway.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <mutex>
#include <semaphore>
#include <set>
#include <thread>

#include <httplib.h>

#include "reflact/error.hpp"

namespace reflact::gateway {

namespace {

std::atomic<std::uint64_t> g_network_attempts{0};

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

}  // namespace

std::uint64_t network_attempts() { return g_network_attempts.load(); }

// ---- distributions ------------------------------------------------------------

std::string_view to_string(DistributionMethod method) {
  switch (method) {
    case DistributionMethod::scored: return "scored";
    case DistributionMethod::scripted: return "scripted";
    case DistributionMethod::replayed: return "replayed";
  }
  return "?";
}

DistributionMethod distribution_method_from_string(std::string_view name) {
  for (auto m : {DistributionMethod::scored, DistributionMethod::scripted, DistributionMethod::replayed}) {
    if (to_string(m) == name) return m;
  }
  throw Error(ErrorCode::invalid_argument, "unknown distribution method: " + std::string(name));
}

void ActionDistribution::validate() const {
  double sum = 0.0;
  std::set<std::string> seen;
  for (const auto& e : entries) {
    if (!(e.probability >= 0.0)) throw Error(ErrorCode::invalid_argument, "NotNormalized: negative probability");
    if (!seen.insert(e.action).second) {
      throw Error(ErrorCode::invalid_argument, "NotNormalized: duplicate action '" + e.action + "'");
    }
    sum += e.probability;
  }
  if (entries.empty() || std::abs(sum - 1.0) > 1e-6) {
    throw Error(ErrorCode::invalid_argument, "NotNormalized: probabilities sum to " + std::to_string(sum));
  }
}

nlohmann::json to_json(const ActionDistribution& d) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : d.entries) entries.push_back({{"action", e.action}, {"probability", e.probability}});
  return {{"entries", entries}, {"method", to_string(d.method)}};
}

ActionDistribution distribution_from_json(const nlohmann::json& j) {
  ActionDistribution d;
  d.method = distribution_method_from_string(j.at("method").get<std::string>());
  for (const auto& e : j.at("entries")) {
    d.entries.push_back({e.at("action").get<std::string>(), e.at("probability").get<double>()});
  }
  return d;
}

nlohmann::json to_json(const Usage& u) {
  return {{"completion_tokens", u.completion_tokens}, {"prompt_tokens", u.prompt_tokens}};
}

Usage usage_from_json(const nlohmann::json& j) {
  Usage u;
  u.prompt_tokens = j.value("prompt_tokens", 0);
  u.completion_tokens = j.value("completion_tokens", 0);
  if (u.prompt_tokens < 0 || u.completion_tokens < 0) {
    throw Error(ErrorCode::invalid_argument, "usage token counts must be non-negative");
  }
  return u;
}

ActionDistribution softmax(const std::vector<std::string>& candidates, const std::vector<double>& logprobs,
                           DistributionMethod method) {
  if (candidates.empty() || candidates.size() != logprobs.size()) {
    throw Error(ErrorCode::invalid_argument, "softmax needs one log-probability per candidate");
  }
  const double hi = *std::max_element(logprobs.begin(), logprobs.end());
  double z = 0.0;
  for (double lp : logprobs) z += std::exp(lp - hi);
  ActionDistribution d;
  d.method = method;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    d.entries.push_back({candidates[i], std::exp(logprobs[i] - hi) / z});
  }
  return d;
}

ActionDistribution one_hot(const std::vector<std::string>& candidates, const std::string& chosen,
                           DistributionMethod method) {
  ActionDistribution d;
  d.method = method;
  for (const auto& c : candidates) d.entries.push_back({c, c == chosen ? 1.0 : 0.0});
  return d;
}

ActionDistribution uniform(const std::vector<std::string>& candidates, DistributionMethod method) {
  ActionDistribution d;
  d.method = method;
  for (const auto& c : candidates) d.entries.push_back({c, 1.0 / static_cast<double>(candidates.size())});
  return d;
}

namespace {

void check_candidates(const std::vector<std::string>& candidates) {
  if (candidates.empty()) throw Error(ErrorCode::invalid_argument, "score_candidates: empty candidate list");
  std::set<std::string> seen(candidates.begin(), candidates.end());
  if (seen.size() != candidates.size()) {
    throw Error(ErrorCode::invalid_argument, "score_candidates: candidates must be distinct");
  }
}

void check_messages(const Messages& messages) {
  if (messages.empty() || messages.front().role != Role::system) {
    throw Error(ErrorCode::invalid_argument, "complete: first message must be a system message");
  }
}

}  // namespace

// ---- live ----------------------------------------------------------------------

struct LiveBackend::Impl {
  LiveSettings settings;
  std::string origin;
  std::string prefix;
  std::counting_semaphore<1 << 16> in_flight;
  std::mutex bucket_mu;
  double tokens = 1.0;
  std::chrono::steady_clock::time_point refilled = std::chrono::steady_clock::now();

  explicit Impl(LiveSettings s) : settings(std::move(s)), in_flight(std::max(1, settings.max_in_flight)) {
    const std::size_t scheme = settings.base_url.find("://");
    const std::size_t path = settings.base_url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    origin = path == std::string::npos ? settings.base_url : settings.base_url.substr(0, path);
    prefix = path == std::string::npos ? "" : settings.base_url.substr(path);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  }

  void take_token() {
    if (settings.requests_per_second <= 0.0) return;
    std::unique_lock lock(bucket_mu);
    for (;;) {
      const auto now = std::chrono::steady_clock::now();
      const double elapsed = std::chrono::duration<double>(now - refilled).count();
      tokens = std::min(1.0, tokens + elapsed * settings.requests_per_second);
      refilled = now;
      if (tokens >= 1.0) {
        tokens -= 1.0;
        return;
      }
      const double wait = (1.0 - tokens) / settings.requests_per_second;
      lock.unlock();
      std::this_thread::sleep_for(std::chrono::duration<double>(wait));
      lock.lock();
    }
  }

  nlohmann::json post(const nlohmann::json& body) {
    struct Slot {
      std::counting_semaphore<1 << 16>& s;
      explicit Slot(std::counting_semaphore<1 << 16>& sem) : s(sem) { s.acquire(); }
      ~Slot() { s.release(); }
    } slot(in_flight);

    std::string last_error = "no attempt made";
    const int attempts = std::max(1, settings.max_attempts);
    for (int attempt = 1; attempt <= attempts; ++attempt) {
      if (attempt > 1) {
        std::this_thread::sleep_for(std::chrono::milliseconds(settings.backoff_ms) * (1 << (attempt - 2)));
      }
      take_token();
      g_network_attempts.fetch_add(1);
      httplib::Client client(origin);
      const auto timeout = std::chrono::milliseconds(settings.timeout_ms);
      client.set_connection_timeout(timeout);
      client.set_read_timeout(timeout);
      client.set_write_timeout(timeout);
      httplib::Headers headers;
      if (!settings.api_key.empty()) headers.emplace("Authorization", "Bearer " + settings.api_key);
      auto res = client.Post(prefix + "/chat/completions", headers, body.dump(), "application/json");
      if (!res) {
        last_error = httplib::to_string(res.error());
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200) {
        throw Error(ErrorCode::backend, "TransportError: HTTP " + std::to_string(res->status) + ": " + res->body);
      }
      try {
        return nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::backend, std::string("TransportError: malformed response: ") + e.what());
      }
    }
    throw Error(ErrorCode::backend,
                "TransportError: " + last_error + " after " + std::to_string(attempts) + " attempts");
  }

  nlohmann::json message_list(const Messages& messages) const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& m : messages) out.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    return out;
  }
};

LiveBackend::LiveBackend(LiveSettings settings) : impl_(std::make_unique<Impl>(std::move(settings))) {}
LiveBackend::~LiveBackend() = default;

CompletionResult LiveBackend::complete(const Messages& messages, const CompletionParams& params) {
  check_messages(messages);
  const nlohmann::json body = {{"model", impl_->settings.model},
                               {"messages", impl_->message_list(messages)},
                               {"temperature", params.temperature},
                               {"max_tokens", params.max_tokens}};
  const nlohmann::json res = impl_->post(body);
  try {
    const auto& choice = res.at("choices").at(0);
    CompletionResult out;
    const auto& content = choice.at("message").at("content");
    out.text = content.is_null() ? "" : content.get<std::string>();
    out.finish_reason = choice.value("finish_reason", "");
    if (res.contains("usage") && res["usage"].is_object()) out.usage = usage_from_json(res["usage"]);
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::backend, std::string("TransportError: unexpected response shape: ") + e.what());
  }
}

ActionDistribution LiveBackend::score_candidates(const Messages& messages, const std::vector<std::string>& candidates) {
  check_messages(messages);
  check_candidates(candidates);
  std::vector<double> logprobs;
  for (const auto& candidate : candidates) {
    nlohmann::json msgs = impl_->message_list(messages);
    msgs.push_back({{"role", "assistant"}, {"content", "Action: " + candidate}});
    const nlohmann::json body = {{"model", impl_->settings.model}, {"messages", msgs}, {"temperature", 0.0},
                                 {"max_tokens", 1},        {"echo", true},     {"logprobs", true}};
    const nlohmann::json res = impl_->post(body);
    const nlohmann::json* tokens = nullptr;
    if (res.contains("choices") && !res["choices"].empty()) {
      const auto& choice = res["choices"][0];
      if (choice.contains("logprobs") && choice["logprobs"].is_object() && choice["logprobs"].contains("content") &&
          choice["logprobs"]["content"].is_array()) {
        tokens = &choice["logprobs"]["content"];
      }
    }
    if (tokens == nullptr || tokens->empty()) {
      throw Error(ErrorCode::unsupported, "UnsupportedByBackend: endpoint returned no log-probabilities");
    }
    double sum = 0.0;
    for (const auto& tok : *tokens) sum += tok.at("logprob").get<double>();
    logprobs.push_back(sum);
  }
  return softmax(candidates, logprobs);
}

nlohmann::json LiveBackend::descriptor() const {
  return {{"kind", "live"},
          {"base_url", impl_->settings.base_url},
          {"model", impl_->settings.model},
          {"temperature", impl_->settings.temperature},
          {"max_tokens", impl_->settings.max_tokens}};
}

// ---- replay --------------------------------------------------------------------

ReplayBackend::ReplayBackend(std::vector<CompletionResult> completions, std::vector<ActionDistribution> distributions,
                             nlohmann::json recorded_descriptor, std::optional<std::string> recorded_error)
    : completions_(std::move(completions)),
      distributions_(std::move(distributions)),
      descriptor_(std::move(recorded_descriptor)),
      error_(std::move(recorded_error)) {}

CompletionResult ReplayBackend::complete(const Messages& messages, const CompletionParams&) {
  check_messages(messages);
  if (cursor_ >= completions_.size()) {
    if (error_) throw Error(ErrorCode::backend, *error_);
    throw Error(ErrorCode::backend, "ReplayExhausted: all " + std::to_string(completions_.size()) +
                                        " recorded completions were used");
  }
  return completions_[cursor_++];
}

ActionDistribution ReplayBackend::score_candidates(const Messages&, const std::vector<std::string>&) {
  if (dist_cursor_ >= distributions_.size()) {
    throw Error(ErrorCode::unsupported, "UnsupportedByBackend: no recorded distribution for this step");
  }
  return distributions_[dist_cursor_++];
}

// ---- scripted ------------------------------------------------------------------

std::string_view to_string(ScriptedPolicy policy) {
  switch (policy) {
    case ScriptedPolicy::oracle: return "oracle";
    case ScriptedPolicy::always_fail: return "always_fail";
    case ScriptedPolicy::fail_then_succeed: return "fail_then_succeed";
    case ScriptedPolicy::probe: return "probe";
  }
  return "?";
}

ScriptedPolicy scripted_policy_from_string(std::string_view name) {
  for (auto p : {ScriptedPolicy::oracle, ScriptedPolicy::always_fail, ScriptedPolicy::fail_then_succeed,
                 ScriptedPolicy::probe}) {
    if (to_string(p) == name) return p;
  }
  throw Error(ErrorCode::invalid_argument, "unknown scripted policy: " + std::string(name));
}

int turn_index(const Messages& messages) {
  int t = 1;
  for (const auto& m : messages) {
    if (m.role == Role::user && starts_with(m.content, "Observation: ")) ++t;
  }
  return t;
}

ScriptedBackend::ScriptedBackend(const taskgen::TaskSpec& task, BackboneKind kind, ScriptedPolicy policy,
                                 std::string reflection)
    : task_(task), kind_(kind), policy_(policy), reflection_(std::move(reflection)) {
  for (const auto& a : taskgen::oracle_solve(task_).actions) plan_.push_back(world::render_action(a));
}

bool ScriptedBackend::failing(const Messages& messages) const {
  switch (policy_) {
    case ScriptedPolicy::always_fail: return true;
    case ScriptedPolicy::fail_then_succeed:
      return messages.empty() || messages.front().content.find(backbones::kMemoryHeading) == std::string::npos;
    default: return false;
  }
}

std::optional<std::string> ScriptedBackend::next_action(const Messages& messages) const {
  const auto t = static_cast<std::size_t>(turn_index(messages));
  if (t > plan_.size()) return std::nullopt;
  return plan_[t - 1];
}

CompletionResult ScriptedBackend::complete(const Messages& messages, const CompletionParams&) {
  check_messages(messages);
  CompletionResult out;
  out.finish_reason = "stop";
  if (starts_with(messages.front().content, kReflectionPrompt)) {
    out.text = reflection_;
    return out;
  }

  const int t = turn_index(messages);
  std::string action;
  if (failing(messages)) {
    action = kFailingAction;
  } else if (auto next = next_action(messages)) {
    action = *next;
  } else {
    throw Error(ErrorCode::backend, "ScriptedDone: the oracle plan has " + std::to_string(plan_.size()) + " steps");
  }

  // Rebuild what the agent can know from its own turns.
  const auto flavor = task_.initial_state.flavor;
  backbones::AgentView view;
  for (std::size_t i = 1; i + 1 < messages.size(); ++i) {
    if (messages[i].role != Role::assistant || messages[i + 1].role != Role::user) continue;
    const std::string& obs = messages[i + 1].content;
    if (!starts_with(obs, "Observation: ")) continue;
    const auto parsed = backbones::parse_output(kind_, messages[i].content, 1, true);
    if (const auto* r = std::get_if<backbones::ReasoningOutput>(&parsed)) {
      backbones::track(view, flavor, r->action, obs.substr(13));
    }
  }

  std::optional<std::string> reasoning;
  if (backbones::should_reason(kind_, t)) {
    const std::string goal = backbones::goal_phrase(task_.instruction_text);
    const std::string thought = "Next, I need to " + action + ".";
    switch (kind_) {
      case BackboneKind::react: reasoning = thought; break;
      case BackboneKind::planandact: {
        std::string plan = "To solve the task, I will";
        for (std::size_t i = 0; i < plan_.size(); ++i) plan += (i ? ", " : " ") + plan_[i];
        reasoning = plan + ".";
        break;
      }
      case BackboneKind::reflact: {
        std::string state = *backbones::ablation_reasoning(BackboneKind::state, flavor, goal, view, std::nullopt);
        state.pop_back();
        reasoning = "Currently, " + state + ", and my goal is to " + goal + ".";
        break;
      }
      default: reasoning = backbones::ablation_reasoning(kind_, flavor, goal, view, thought); break;
    }
  }
  out.text = backbones::render_output(kind_, reasoning, action);
  return out;
}

ActionDistribution ScriptedBackend::score_candidates(const Messages& messages,
                                                     const std::vector<std::string>& candidates) {
  check_candidates(candidates);
  const auto next = next_action(messages);
  if (!next || std::find(candidates.begin(), candidates.end(), *next) == candidates.end()) {
    return uniform(candidates, DistributionMethod::scripted);
  }
  if (policy_ == ScriptedPolicy::probe) {
    const bool named = !messages.empty() && messages.back().role == Role::assistant &&
                       messages.back().content.find(*next) != std::string::npos;
    if (!named) return uniform(candidates, DistributionMethod::scripted);
  }
  return one_hot(candidates, *next, DistributionMethod::scripted);
}

nlohmann::json ScriptedBackend::descriptor() const {
  return {{"kind", "scripted"}, {"policy", to_string(policy_)}};
}

}  // namespace reflact::gateway
