#include "qmetro/protocol.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <iostream>
#include <json.hpp>
#include <thread>
#include <vector>

namespace qmetro {

using nlohmann::json;

namespace {

json obs_json(const Observation& o) { return json(o.values); }

json info_json(const StepInfo& i) {
  return {{"t", i.t}, {"fhom_integral", i.fhom_integral}, {"qfi", i.qfi}, {"step", i.step}};
}

json error_json(const std::string& code, const std::string& msg) {
  return {{"error", {{"code", code}, {"msg", msg}}}};
}

std::uint64_t get_seed(const json& v) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw EnvError("bad_request", "seed must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::vector<double> get_actions(const json& req) {
  if (!req.contains("action")) throw EnvError("bad_request", "step needs an 'action' field");
  const json& a = req.at("action");
  std::vector<double> out;
  if (a.is_number()) {
    out.push_back(a.get<double>());
  } else if (a.is_array()) {
    for (const auto& x : a) {
      if (!x.is_number()) throw EnvError("bad_request", "action entries must be numbers");
      out.push_back(x.get<double>());
    }
  } else {
    throw EnvError("bad_request", "action must be a number or an array of numbers");
  }
  return out;
}

}  // namespace

struct ProtocolSession::Impl {
  EpisodeConfig config;
  std::size_t n_envs;
  std::optional<EnvSession> scalar;
  std::optional<VecEnv> vec;

  json spec() const {
    return {{"version", kProtocolVersion},
            {"obs_size", kObservationSize},
            {"obs_layout", config.obs_layout_version},
            {"n_envs", n_envs},
            {"horizon_steps", config.horizon_steps},
            {"params",
             {{"omega", config.params.omega},
              {"chi", config.params.chi},
              {"kappa", config.params.kappa},
              {"eta", config.params.eta},
              {"dt", config.params.dt}}},
            {"randomize_init", config.randomize_init}};
  }

  json reset(const json& req) {
    if (n_envs == 0) {
      if (!req.contains("seed")) throw EnvError("bad_request", "reset needs a 'seed' field");
      const auto obs = scalar->reset(get_seed(req.at("seed")));
      return {{"obs", obs_json(obs)}, {"info", info_json(scalar->info())}};
    }
    std::vector<Observation> obs;
    if (req.contains("seeds")) {
      const json& s = req.at("seeds");
      if (!s.is_array()) throw EnvError("bad_request", "'seeds' must be an array");
      std::vector<std::uint64_t> seeds;
      for (const auto& x : s) seeds.push_back(get_seed(x));
      obs = vec->reset(seeds);
    } else if (req.contains("seed")) {
      obs = vec->reset(get_seed(req.at("seed")));
    } else {
      throw EnvError("bad_request", "reset needs 'seed' or 'seeds'");
    }
    json o = json::array(), info = json::array();
    for (std::size_t i = 0; i < obs.size(); ++i) {
      o.push_back(obs_json(obs[i]));
      info.push_back(info_json(vec->env(i).info()));
    }
    return {{"obs", o}, {"info", info}};
  }

  json step(const json& req) {
    const auto actions = get_actions(req);
    if (n_envs == 0) {
      if (actions.size() != 1) {
        throw EnvError("batch_size", "expected 1 action, got " + std::to_string(actions.size()));
      }
      const auto r = scalar->step(actions[0]);
      return {{"obs", obs_json(r.obs)},
              {"reward", r.reward},
              {"done", r.done},
              {"truncated", r.truncated},
              {"info", info_json(r.info)}};
    }
    const auto r = vec->step(actions);
    json o = json::array(), rew = json::array(), done = json::array(), trunc = json::array(),
         info = json::array();
    for (std::size_t i = 0; i < r.envs.size(); ++i) {
      const auto& e = r.envs[i];
      o.push_back(obs_json(e.obs));
      rew.push_back(e.reward);
      done.push_back(e.done);
      trunc.push_back(e.truncated);
      json in = info_json(e.info);
      if (r.final_obs[i]) {
        in["final_obs"] = obs_json(*r.final_obs[i]);
        in["episode_seed"] = *r.episode_seed[i];
      }
      info.push_back(std::move(in));
    }
    return {{"obs", o}, {"reward", rew}, {"done", done}, {"truncated", trunc}, {"info", info}};
  }
};

ProtocolSession::ProtocolSession(EpisodeConfig config, std::size_t n_envs)
    : impl_(std::make_unique<Impl>()) {
  config.validate();
  impl_->config = config;
  impl_->n_envs = n_envs;
  if (n_envs == 0) {
    impl_->scalar.emplace(config);
  } else {
    impl_->vec.emplace(config, n_envs);
  }
}

ProtocolSession::~ProtocolSession() = default;
ProtocolSession::ProtocolSession(ProtocolSession&&) noexcept = default;
ProtocolSession& ProtocolSession::operator=(ProtocolSession&&) noexcept = default;

std::string ProtocolSession::handle(const std::string& line) {
  json req;
  try {
    req = json::parse(line);
  } catch (const json::parse_error& e) {
    return error_json("parse_error", e.what()).dump();
  }
  try {
    if (!req.is_object() || !req.contains("cmd") || !req.at("cmd").is_string()) {
      throw EnvError("bad_request", "request must be an object with a string 'cmd'");
    }
    const std::string cmd = req.at("cmd").get<std::string>();
    if (cmd == "reset") return impl_->reset(req).dump();
    if (cmd == "step") return impl_->step(req).dump();
    if (cmd == "spec") return impl_->spec().dump();
    if (cmd == "close") {
      closed_ = true;
      return json{{"closed", true}}.dump();
    }
    throw EnvError("unknown_cmd", "unknown cmd '" + cmd + "'");
  } catch (const EnvError& e) {
    return error_json(e.code(), e.what()).dump();
  } catch (const json::exception& e) {
    return error_json("bad_request", e.what()).dump();
  } catch (const std::exception& e) {
    return error_json("internal", e.what()).dump();
  }
}

void serve_stream(std::istream& in, std::ostream& out, const EpisodeConfig& config,
                  std::size_t n_envs) {
  ProtocolSession session(config, n_envs);
  std::string line;
  while (!session.closed() && std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out << session.handle(line) << '\n';
    out.flush();
  }
}

namespace {

void serve_fd(int fd, EpisodeConfig config, std::size_t n_envs) {
  ProtocolSession session(config, n_envs);
  std::string buf;
  char chunk[4096];
  while (!session.closed()) {
    const ssize_t got = ::recv(fd, chunk, sizeof chunk, 0);
    if (got <= 0) break;
    buf.append(chunk, static_cast<std::size_t>(got));
    std::size_t pos;
    while (!session.closed() && (pos = buf.find('\n')) != std::string::npos) {
      std::string line = buf.substr(0, pos);
      buf.erase(0, pos + 1);
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      std::string reply = session.handle(line) + '\n';
      std::size_t off = 0;
      while (off < reply.size()) {
        const ssize_t sent = ::send(fd, reply.data() + off, reply.size() - off, MSG_NOSIGNAL);
        if (sent <= 0) {
          ::close(fd);
          return;
        }
        off += static_cast<std::size_t>(sent);
      }
    }
  }
  ::close(fd);
}

}  // namespace

void serve_socket(std::uint16_t port, const EpisodeConfig& config, std::size_t n_envs,
                  std::size_t max_connections, void (*on_listen)(std::uint16_t, void*),
                  void* ctx) {
  config.validate();
  const int srv = ::socket(AF_INET, SOCK_STREAM, 0);
  if (srv < 0) throw std::runtime_error(std::string("socket: ") + std::strerror(errno));
  const int yes = 1;
  ::setsockopt(srv, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(srv, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(srv, 16) < 0) {
    const std::string err = std::strerror(errno);
    ::close(srv);
    throw std::runtime_error("cannot listen on port " + std::to_string(port) + ": " + err);
  }
  socklen_t len = sizeof addr;
  ::getsockname(srv, reinterpret_cast<sockaddr*>(&addr), &len);
  if (on_listen) on_listen(ntohs(addr.sin_port), ctx);

  std::vector<std::jthread> workers;
  for (std::size_t served = 0; max_connections == 0 || served < max_connections; ++served) {
    const int fd = ::accept(srv, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      break;
    }
    workers.emplace_back(serve_fd, fd, config, n_envs);
  }
  ::close(srv);
}

}  // namespace qmetro
