#include <doctest.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

#include <httplib.h>

#include "fixtures.hpp"
#include "reflact/error.hpp"
#include "reflact/gateway.hpp"

using namespace reflact;
using namespace reflact::gateway;
using reflact::backbones::BackboneKind;

namespace {

Messages sample_messages() {
  return {{Role::system, "You are an agent."}, {Role::user, "Your task is to: put some spraybottle on toilet."}};
}

// Chat-completions stand-in on a loopback port.
struct MockServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> hits{0};
  std::atomic<int> active{0};
  std::atomic<int> peak{0};

  MockServer() = default;
  void start() {
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~MockServer() {
    server.stop();
    if (thread.joinable()) thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port) + "/v1"; }
};

LiveSettings settings_for(const std::string& url) {
  LiveSettings s;
  s.base_url = url;
  s.model = "test-model";
  s.api_key = "sk-test";
  s.timeout_ms = 2000;
  s.backoff_ms = 1;
  return s;
}

nlohmann::json completion_body(const std::string& text) {
  return {{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}, {"finish_reason", "stop"}}}},
          {"usage", {{"prompt_tokens", 12}, {"completion_tokens", 5}}}};
}

}  // namespace

TEST_CASE("softmax over summed log-probabilities") {
  const auto d = softmax({"a", "b", "c"}, {-1.0, -2.0, -3.0});
  // Direct evaluation without the max shift.
  const double z = std::exp(-1.0) + std::exp(-2.0) + std::exp(-3.0);
  CHECK(d.entries[0].probability == doctest::Approx(std::exp(-1.0) / z).epsilon(1e-12));
  CHECK(d.entries[0].probability == doctest::Approx(0.6652).epsilon(1e-4));
  CHECK(d.entries[1].probability == doctest::Approx(0.2447).epsilon(1e-3));
  CHECK(d.entries[2].probability == doctest::Approx(0.0900).epsilon(1e-3));
  d.validate();
  CHECK_THROWS_AS(softmax({"a"}, {}), Error);
}

TEST_CASE("distribution validation") {
  ActionDistribution bad;
  bad.entries = {{"a", 0.5}, {"b", 0.4}};
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("NotNormalized"), Error);
  bad.entries = {{"a", 0.5}, {"a", 0.5}};
  CHECK_THROWS_AS(bad.validate(), Error);
  const auto u = uniform({"a", "b", "c", "d"}, DistributionMethod::scripted);
  u.validate();
  CHECK(distribution_from_json(to_json(u)) == u);
}

TEST_CASE("scripted backend renders the oracle action in each format") {
  const auto task = fixtures::spraybottle_task();
  ScriptedBackend nothink(task, BackboneKind::nothinking);
  REQUIRE(nothink.plan().front() == "go to cabinet 1");
  CHECK(nothink.complete(sample_messages(), {}).text == "Action: go to cabinet 1");

  for (BackboneKind kind : backbones::kAllKinds) {
    ScriptedBackend b(task, kind);
    const auto out = b.complete(sample_messages(), {});
    const auto parsed = backbones::parse_output(kind, out.text, 1, false);
    REQUIRE(std::holds_alternative<backbones::ReasoningOutput>(parsed));
    CHECK(std::get<backbones::ReasoningOutput>(parsed).action == "go to cabinet 1");
  }

  ScriptedBackend reflact(task, BackboneKind::reflact);
  auto msgs = sample_messages();
  msgs.push_back({Role::assistant, reflact.complete(msgs, {}).text});
  msgs.push_back({Role::user, "Observation: On the cabinet 1, you see a spraybottle 2."});
  CHECK(reflact.complete(msgs, {}).text ==
        "Reflection: Currently, I am at cabinet 1, holding nothing, and my goal is to put some spraybottle on "
        "toilet.\nAction: take spraybottle 2 from cabinet 1");
  // Identical inputs give identical outputs.
  CHECK(reflact.complete(msgs, {}) == reflact.complete(msgs, {}));
}

TEST_CASE("scripted backend runs out after the plan") {
  const auto task = fixtures::spraybottle_task();
  ScriptedBackend b(task, BackboneKind::react);
  auto msgs = sample_messages();
  for (std::size_t i = 0; i < b.plan().size(); ++i) {
    msgs.push_back({Role::assistant, b.complete(msgs, {}).text});
    msgs.push_back({Role::user, "Observation: ok"});
  }
  CHECK_THROWS_WITH_AS(b.complete(msgs, {}), doctest::Contains("ScriptedDone"), Error);
}

TEST_CASE("scripted scoring") {
  const auto task = fixtures::spraybottle_task();
  ScriptedBackend b(task, BackboneKind::reflact);
  const auto hot = b.score_candidates(sample_messages(), {"look", "go to cabinet 1", "go to toilet 1"});
  CHECK(hot.entries[1].probability == 1.0);
  CHECK(hot.method == DistributionMethod::scripted);
  const auto flat = b.score_candidates(sample_messages(), {"look", "go to cabinet 2", "go to toilet 1", "inventory"});
  for (const auto& e : flat.entries) CHECK(e.probability == 0.25);

  ScriptedBackend probe(task, BackboneKind::react, ScriptedPolicy::probe);
  const std::vector<std::string> cands{"go to cabinet 1", "go to cabinet 2", "go to toilet 1"};
  const auto base = probe.score_candidates(sample_messages(), cands);
  for (const auto& e : base.entries) CHECK(e.probability == doctest::Approx(1.0 / 3));
  auto injected = sample_messages();
  injected.push_back({Role::assistant, "Thought: I should go to cabinet 1 first."});
  CHECK(probe.score_candidates(injected, cands).entries[0].probability == 1.0);
}

TEST_CASE("failing policies and reflections") {
  const auto task = fixtures::spraybottle_task();
  ScriptedBackend fail(task, BackboneKind::reflact, ScriptedPolicy::fail_then_succeed);
  CHECK(fail.complete(sample_messages(), {}).text.find(kFailingAction) != std::string::npos);
  auto with_memory = sample_messages();
  with_memory[0].content += std::string("\n\n") + backbones::kMemoryHeading + "\nTrial 1: x";
  CHECK(fail.complete(with_memory, {}).text.find("go to cabinet 1") != std::string::npos);

  Messages reflect{{Role::system, kReflectionPrompt}, {Role::user, "transcript"}};
  CHECK(fail.complete(reflect, {}).text == kCannedReflection);
  CHECK_THROWS_AS(fail.complete({{Role::user, "no system"}}, {}), Error);
}

TEST_CASE("replay returns recorded completions verbatim") {
  const CompletionResult rec{"Reflection: Currently, I am at cabinet 2 ...\nAction: take spraybottle 2 from cabinet 2",
                             Usage{100, 20}, "stop"};
  ReplayBackend r({rec}, {}, {{"kind", "live"}, {"model", "m"}});
  CHECK(r.complete(sample_messages(), {}) == rec);
  CHECK(r.descriptor()["kind"] == "live");
  CHECK_THROWS_WITH_AS(r.complete(sample_messages(), {}), doctest::Contains("ReplayExhausted"), Error);
  CHECK_THROWS_AS(r.score_candidates(sample_messages(), {"look"}), Error);
}

TEST_CASE("live backend against a mock endpoint") {
  MockServer mock;
  std::atomic<int> failures_left{2};
  mock.server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    ++mock.hits;
    const auto body = nlohmann::json::parse(req.body);
    if (req.get_header_value("Authorization") != "Bearer sk-test") {
      res.status = 401;
      return;
    }
    if (body.value("echo", false)) {
      const std::string cand = body["messages"].back()["content"];
      const double lp = cand == "Action: go to cabinet 1" ? -1.0 : cand == "Action: go to cabinet 2" ? -2.0 : -3.0;
      nlohmann::json r = completion_body("");
      r["choices"][0]["logprobs"] = {{"content", {{{"token", "Action"}, {"logprob", 0.0}}, {{"token", "x"}, {"logprob", lp}}}}};
      res.set_content(r.dump(), "application/json");
      return;
    }
    if (body["messages"][0]["content"] == "flaky" && failures_left.fetch_sub(1) > 0) {
      res.status = 503;
      return;
    }
    res.set_content(completion_body("Action: go to cabinet 1").dump(), "application/json");
  });
  mock.start();

  LiveBackend live(settings_for(mock.url()));
  const auto out = live.complete(sample_messages(), {});
  CHECK(out.text == "Action: go to cabinet 1");
  REQUIRE(out.usage.has_value());
  CHECK(out.usage->completion_tokens == 5);
  CHECK(out.finish_reason == "stop");
  CHECK(live.descriptor()["model"] == "test-model");

  const auto before = network_attempts();
  Messages flaky{{Role::system, "flaky"}, {Role::user, "u"}};
  CHECK(live.complete(flaky, {}).text == "Action: go to cabinet 1");
  CHECK(network_attempts() - before == 3);

  const auto d = live.score_candidates(sample_messages(), {"go to cabinet 1", "go to cabinet 2", "go to toilet 1"});
  CHECK(d.entries[0].probability == doctest::Approx(0.6652).epsilon(1e-4));
  CHECK(d.method == DistributionMethod::scored);

  auto bad_key = settings_for(mock.url());
  bad_key.api_key = "wrong";
  LiveBackend unauthorized(bad_key);
  CHECK_THROWS_WITH_AS(unauthorized.complete(sample_messages(), {}), doctest::Contains("HTTP 401"), Error);
}

TEST_CASE("live scoring without log-probabilities is unsupported") {
  MockServer mock;
  mock.server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(completion_body("Action: look").dump(), "application/json");
  });
  mock.start();
  LiveBackend live(settings_for(mock.url()));
  try {
    live.score_candidates(sample_messages(), {"look"});
    FAIL("expected UnsupportedByBackend");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::unsupported);
    CHECK(std::string(e.what()).find("UnsupportedByBackend") == 0);
  }
}

TEST_CASE("unreachable endpoint fails after three attempts") {
  // Reserve a port, then close it so nothing listens there.
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  auto s = settings_for("http://127.0.0.1:" + std::to_string(port) + "/v1");
  s.timeout_ms = 300;
  LiveBackend live(s);
  const auto before = network_attempts();
  try {
    live.complete(sample_messages(), {});
    FAIL("expected TransportError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::backend);
    CHECK(std::string(e.what()).find("TransportError") == 0);
    CHECK(std::string(e.what()).find("after 3 attempts") != std::string::npos);
  }
  CHECK(network_attempts() - before == 3);
}

TEST_CASE("in-flight limit and rate limit") {
  MockServer mock;
  mock.server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    const int now = ++mock.active;
    int seen = mock.peak.load();
    while (now > seen && !mock.peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    --mock.active;
    res.set_content(completion_body("Action: look").dump(), "application/json");
  });
  mock.start();

  auto s = settings_for(mock.url());
  s.max_in_flight = 1;
  LiveBackend serial(s);
  std::vector<std::thread> threads;
  for (int i = 0; i < 4; ++i) threads.emplace_back([&] { serial.complete(sample_messages(), {}); });
  for (auto& t : threads) t.join();
  CHECK(mock.peak.load() == 1);

  s.max_in_flight = 4;
  s.requests_per_second = 20.0;
  LiveBackend limited(s);
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < 4; ++i) limited.complete(sample_messages(), {});
  // The bucket starts full, so three waits of 50 ms remain.
  CHECK(std::chrono::steady_clock::now() - start >= std::chrono::milliseconds(140));
}

TEST_CASE("scripted and replay backends make no network calls") {
  const auto before = network_attempts();
  const auto task = fixtures::spraybottle_task();
  ScriptedBackend b(task, BackboneKind::reflact);
  b.complete(sample_messages(), {});
  b.score_candidates(sample_messages(), {"go to cabinet 1"});
  ReplayBackend r({{"Action: look", std::nullopt, "stop"}}, {}, nlohmann::json::object());
  r.complete(sample_messages(), {});
  CHECK(network_attempts() == before);
}
