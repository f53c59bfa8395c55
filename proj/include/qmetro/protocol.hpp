#pragma once

// Line-delimited JSON protocol around EnvSession / VecEnv. One request per
// line, one reply per line. See docs/protocol.md.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>

#include "qmetro/env.hpp"

namespace qmetro {

inline constexpr int kProtocolVersion = 1;

/// Handles the messages of one client. With n_envs == 0 the session is
/// scalar (plain numbers in replies); otherwise every per-env field is an
/// array of length n_envs.
class ProtocolSession {
 public:
  ProtocolSession(EpisodeConfig config, std::size_t n_envs = 0);
  ~ProtocolSession();
  ProtocolSession(ProtocolSession&&) noexcept;
  ProtocolSession& operator=(ProtocolSession&&) noexcept;

  /// Reply to one request line (without trailing newline). Never throws for
  /// bad input; errors become {"error":{"code":...,"msg":...}}.
  std::string handle(const std::string& line);

  bool closed() const { return closed_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  bool closed_ = false;
};

/// Reads requests from `in` until close or EOF.
void serve_stream(std::istream& in, std::ostream& out, const EpisodeConfig& config,
                  std::size_t n_envs);

/// TCP server on 127.0.0.1:port; one session and one thread per connection.
/// Returns when `max_connections` (0 = unlimited) connections were served.
/// `on_listen` receives the bound port (useful with port 0).
void serve_socket(std::uint16_t port, const EpisodeConfig& config, std::size_t n_envs,
                  std::size_t max_connections = 0,
                  void (*on_listen)(std::uint16_t, void*) = nullptr, void* ctx = nullptr);

}  // namespace qmetro
