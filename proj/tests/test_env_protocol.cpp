#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cmath>
#include <bit>
#include <future>
#include <random>
#include <json.hpp>
#include <sstream>
#include <thread>

#include "qmetro/env.hpp"
#include "qmetro/metrology.hpp"
#include "qmetro/protocol.hpp"
#include "qmetro/simulation.hpp"

using namespace qmetro;
using nlohmann::json;

namespace {

EpisodeConfig short_config(std::int64_t horizon = 500) {
  EpisodeConfig c;
  c.horizon_steps = horizon;
  return c;
}

bool same_obs(const Observation& a, const Observation& b) { return a.values == b.values; }

json ask(ProtocolSession& s, const json& req) { return json::parse(s.handle(req.dump())); }

std::string error_code(ProtocolSession& s, const std::string& line) {
  const auto r = json::parse(s.handle(line));
  return r.contains("error") ? r["error"]["code"].get<std::string>() : std::string{};
}

}  // namespace

TEST_CASE("reset with the same seed gives identical observations") {
  EnvSession env(short_config());
  const auto a = env.reset(7);
  env.step(0.2);
  const auto b = env.reset(7);
  CHECK(same_obs(a, b));
  CHECK(env.info().t == 0.0);
  CHECK(a[2] == 11.0);  // thermal n_th = 5
}

TEST_CASE("a step(0) episode telescopes to fhom + dQ of run_trajectory") {
  // Full training-length episode: 1e5 steps at dt = 1e-3 end at t = 100.
  const auto cfg = short_config(100000);
  EnvSession env(cfg);
  env.reset(7);
  double ret = 0.0;
  StepOutcome last;
  std::int64_t n = 0;
  while (env.in_episode()) {
    last = env.step(0.0);
    ret += last.reward;
    ++n;
  }
  CHECK(n == 100000);
  CHECK(last.done);
  CHECK(last.truncated);
  CHECK(last.info.t == doctest::Approx(100.0).epsilon(1e-12));

  NoControl pol;
  const auto run = run_trajectory(cfg.params, cfg.fixed_init, 7, cfg.horizon_steps, pol, {0, 100000});
  const double q0 = gaussian_qfi(run.series.front().state, run.series.front().tangent);
  const double q1 = gaussian_qfi(run.series.back().state, run.series.back().tangent);
  const double expected = run.series.back().fhom_integral + (q1 - q0);
  CHECK(std::abs(ret - expected) < 1e-10 * std::max(1.0, std::abs(expected)));
  CHECK(last.info.fhom_integral == run.series.back().fhom_integral);
  CHECK(last.info.qfi == q1);
  CHECK_THROWS_AS(env.step(0.0), EnvError);
}

TEST_CASE("open-loop episodes earn only the QFI change") {
  EnvSession env(short_config(3000));
  env.reset(11);
  const double q0 = env.info().qfi;
  double ret = 0.0;
  StepOutcome last;
  while (env.in_episode()) {
    last = env.step(-env.config().params.omega);
    ret += last.reward;
  }
  CHECK(last.info.fhom_integral == 0.0);
  CHECK(ret == doctest::Approx(last.info.qfi - q0).epsilon(1e-12));
}

TEST_CASE("session errors") {
  EnvSession env(short_config());
  try {
    env.step(0.0);
    FAIL("expected no_episode");
  } catch (const EnvError& e) {
    CHECK(e.code() == "no_episode");
  }
  env.reset(1);
  try {
    env.step(std::nan(""));
    FAIL("expected bad_request");
  } catch (const EnvError& e) {
    CHECK(e.code() == "bad_request");
  }
  CHECK(env.in_episode());
  // An absurd feedback frequency blows the integrator up.
  try {
    for (int i = 0; i < 100; ++i) env.step(1e200);
    FAIL("expected unphysical_state");
  } catch (const EnvError& e) {
    CHECK(e.code() == "unphysical_state");
  }
  CHECK_FALSE(env.in_episode());
  auto bad = short_config();
  bad.horizon_steps = 0;
  CHECK_THROWS_AS(EnvSession{bad}, ParameterError);
}

TEST_CASE("vectorized env matches independent scalar sessions") {
  const auto cfg = short_config(37);
  VecEnv vec(cfg, 4);
  std::vector<EnvSession> scalars(4, EnvSession(cfg));
  std::vector<std::uint64_t> seeds{5, 6, 7, 8};
  const auto obs = vec.reset(seeds);
  for (std::size_t i = 0; i < 4; ++i) CHECK(same_obs(obs[i], scalars[i].reset(seeds[i])));
  std::vector<std::uint64_t> episodes(4, 0);
  for (int n = 0; n < 100; ++n) {
    std::vector<double> actions;
    for (std::size_t i = 0; i < 4; ++i) actions.push_back(0.05 * std::sin(0.1 * n + static_cast<double>(i)));
    const auto r = vec.step(actions);
    for (std::size_t i = 0; i < 4; ++i) {
      auto s = scalars[i].step(actions[i]);
      REQUIRE(r.envs[i].reward == s.reward);
      REQUIRE(r.envs[i].done == s.done);
      if (s.done) {
        REQUIRE(r.final_obs[i]);
        CHECK(same_obs(*r.final_obs[i], s.obs));
        ++episodes[i];
        seeds[i] = mix_seed(seeds[i], episodes[i]);
        CHECK(*r.episode_seed[i] == seeds[i]);
        s.obs = scalars[i].reset(seeds[i]);
      } else {
        REQUIRE_FALSE(r.final_obs[i]);
      }
      REQUIRE(same_obs(r.envs[i].obs, s.obs));
    }
  }
  CHECK(episodes[0] == 2);
  try {
    vec.step({0.0, 0.0});
    FAIL("expected batch_size");
  } catch (const EnvError& e) {
    CHECK(e.code() == "batch_size");
  }
  CHECK_THROWS_AS(VecEnv(cfg, 0), ParameterError);
}

TEST_CASE("protocol: scalar session") {
  ProtocolSession s(short_config(3));
  CHECK(error_code(s, R"({"cmd":"step","action":0})") == "no_episode");
  const auto r0 = ask(s, {{"cmd", "reset"}, {"seed", 7}});
  REQUIRE(r0["obs"].size() == kObservationSize);
  EnvSession ref(short_config(3));
  const auto o = ref.reset(7);
  for (std::size_t i = 0; i < kObservationSize; ++i) CHECK(r0["obs"][i].get<double>() == o[i]);

  for (int n = 1; n <= 3; ++n) {
    const auto r = ask(s, {{"cmd", "step"}, {"action", {0.01}}});
    const auto e = ref.step(0.01);
    CHECK(r["reward"].get<double>() == e.reward);
    CHECK(r["done"].get<bool>() == (n == 3));
    CHECK(r["truncated"].get<bool>() == (n == 3));
    CHECK(r["info"]["t"].get<double>() == e.info.t);
    CHECK(r["info"]["qfi"].get<double>() == e.info.qfi);
    CHECK(r["info"]["fhom_integral"].get<double>() == e.info.fhom_integral);
    for (std::size_t i = 0; i < kObservationSize; ++i) CHECK(r["obs"][i].get<double>() == e.obs[i]);
  }
  CHECK(error_code(s, R"({"cmd":"step","action":0})") == "no_episode");
  const auto spec = ask(s, {{"cmd", "spec"}});
  CHECK(spec["version"] == kProtocolVersion);
  CHECK(spec["obs_size"] == 11);
  CHECK(spec["n_envs"] == 0);
  CHECK(spec["params"]["chi"].get<double>() == 0.49);
  CHECK(ask(s, {{"cmd", "close"}})["closed"] == true);
  CHECK(s.closed());
}

TEST_CASE("protocol: malformed messages get structured errors and the session continues") {
  ProtocolSession s(short_config());
  CHECK(error_code(s, "{not json") == "parse_error");
  CHECK(error_code(s, R"([1,2])") == "bad_request");
  CHECK(error_code(s, R"({"cmd":"jump"})") == "unknown_cmd");
  CHECK(error_code(s, R"({"cmd":"reset"})") == "bad_request");
  CHECK(error_code(s, R"({"cmd":"reset","seed":-3})") == "bad_request");
  CHECK(error_code(s, R"({"cmd":"reset","seed":"x"})") == "bad_request");
  CHECK(error_code(s, R"({"cmd":"reset","seed":1})").empty());
  CHECK(error_code(s, R"({"cmd":"step"})") == "bad_request");
  CHECK(error_code(s, R"({"cmd":"step","action":"a"})") == "bad_request");
  CHECK(error_code(s, R"({"cmd":"step","action":[0,0]})") == "batch_size");
  CHECK(error_code(s, R"({"cmd":"step","action":[0.0]})").empty());
  const auto r = json::parse(s.handle("{bad"));
  CHECK(r["error"]["msg"].is_string());
}

TEST_CASE("protocol: numbers survive the round trip") {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 20000; ++i) {
    const double x = u(gen) * std::pow(10.0, static_cast<int>(gen() % 40) - 20);
    const auto back = json::parse(json{{"v", x}}.dump())["v"].get<double>();
    const auto ulps = std::abs(std::bit_cast<std::int64_t>(back) - std::bit_cast<std::int64_t>(x));
    REQUIRE(ulps <= 1);
  }
}

TEST_CASE("protocol: vectorized n = 1 mirrors the scalar session") {
  ProtocolSession scalar(short_config(4));
  ProtocolSession vec(short_config(4), 1);
  const auto a = ask(scalar, {{"cmd", "reset"}, {"seed", 9}});
  const auto b = ask(vec, {{"cmd", "reset"}, {"seeds", {9}}});
  CHECK(b["obs"][0] == a["obs"]);
  for (int n = 0; n < 4; ++n) {
    const auto x = ask(scalar, {{"cmd", "step"}, {"action", 0.02}});
    const auto y = ask(vec, {{"cmd", "step"}, {"action", {0.02}}});
    CHECK(y["reward"][0] == x["reward"]);
    CHECK(y["done"][0] == x["done"]);
    CHECK(y["info"][0]["t"] == x["info"]["t"]);
    if (x["done"].get<bool>()) {
      // Vectorized semantics: the finished episode is replaced at once.
      CHECK(y["info"][0]["final_obs"] == x["obs"]);
      const auto seed = y["info"][0]["episode_seed"].get<std::uint64_t>();
      CHECK(seed == mix_seed(9, 1));
      CHECK(y["obs"][0] == ask(scalar, {{"cmd", "reset"}, {"seed", seed}})["obs"]);
    } else {
      CHECK(y["obs"][0] == x["obs"]);
    }
  }
  CHECK(json::parse(vec.handle(R"({"cmd":"step","action":[0,0]})"))["error"]["code"] == "batch_size");
  const auto base = ask(vec, {{"cmd", "reset"}, {"seed", 9}});
  CHECK(base["obs"][0] == b["obs"][0]);
}

TEST_CASE("stdio serving loop") {
  std::istringstream in(
      "{\"cmd\":\"reset\",\"seed\":3}\n"
      "\n"
      "{\"cmd\":\"step\",\"action\":[0.0]}\n"
      "oops\n"
      "{\"cmd\":\"close\"}\n"
      "{\"cmd\":\"spec\"}\n");
  std::ostringstream out;
  serve_stream(in, out, short_config(), 0);
  std::istringstream lines(out.str());
  std::vector<json> replies;
  for (std::string l; std::getline(lines, l);) replies.push_back(json::parse(l));
  REQUIRE(replies.size() == 4);
  CHECK(replies[0].contains("obs"));
  CHECK(replies[1].contains("reward"));
  CHECK(replies[2]["error"]["code"] == "parse_error");
  CHECK(replies[3]["closed"] == true);
}

namespace {

std::string socket_exchange(std::uint16_t port, const std::vector<std::string>& lines) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    ::close(fd);
    return "connect failed";
  }
  std::string out;
  for (const auto& l : lines) {
    const std::string msg = l + "\n";
    ::send(fd, msg.data(), msg.size(), MSG_NOSIGNAL);
    // Read one reply line.
    char c;
    while (::recv(fd, &c, 1, 0) == 1) {
      out.push_back(c);
      if (c == '\n') break;
    }
  }
  ::close(fd);
  return out;
}

}  // namespace

TEST_CASE("socket transport: concurrent sessions are isolated") {
  std::promise<std::uint16_t> bound;
  auto fut = bound.get_future();
  std::jthread server([&] {
    serve_socket(0, short_config(), 0, 2,
                 [](std::uint16_t port, void* ctx) {
                   static_cast<std::promise<std::uint16_t>*>(ctx)->set_value(port);
                 },
                 &bound);
  });
  const auto port = fut.get();
  const std::vector<std::string> script{R"({"cmd":"reset","seed":7})",
                                        R"({"cmd":"step","action":0})",
                                        R"({"cmd":"step","action":0})", R"({"cmd":"close"})"};
  auto a = std::async(std::launch::async, socket_exchange, port, script);
  auto b = std::async(std::launch::async, socket_exchange, port, script);
  const auto ra = a.get(), rb = b.get();
  CHECK(ra == rb);

  ProtocolSession local(short_config());
  std::string expected;
  for (const auto& l : script) expected += local.handle(l) + "\n";
  CHECK(ra == expected);
}
