// Command-line driver: experiments, the env server and weight inspection.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "qmetro/config.hpp"
#include "qmetro/experiments.hpp"
#include "qmetro/protocol.hpp"
#include "qmetro/simd.hpp"
#include "qmetro/weights.hpp"

namespace {

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<unsigned> jobs;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config, "key = value config file");
  cmd->add_option("--set", o.overrides, "override a config key, e.g. --set n_traj=100");
  cmd->add_option("--seed", o.seed, "base seed");
  cmd->add_option("-o,--out", o.out, "output directory");
  cmd->add_option("-j,--jobs", o.jobs, "worker threads (0 = all cores)");
}

qmetro::ExperimentConfig resolve(const CommonOptions& o) {
  std::string text;
  std::string origin = "<defaults>";
  if (!o.config.empty()) {
    std::ifstream f(o.config);
    if (!f) throw qmetro::ConfigError("cannot open config " + o.config);
    text.assign(std::istreambuf_iterator<char>(f), {});
    origin = o.config;
  }
  auto cfg = qmetro::parse_config(text, origin);
  if (!o.overrides.empty()) {
    std::string extra = qmetro::render_config(cfg);
    for (const auto& kv : o.overrides) extra += kv + "\n";
    cfg = qmetro::parse_config(extra, "--set");
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.output_dir = *o.out;
  if (o.jobs) cfg.jobs = *o.jobs;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Homodyne-monitored squeezed mode: trajectories, Fisher information, env server"};
  app.require_subcommand(1);
  std::string isa;
  app.add_option("--isa", isa, "kernel variant: auto, scalar, avx2");

  CommonOptions common;
  std::string command;
  for (const auto& name : qmetro::command_names()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " analysis");
    add_common(sub, common);
    sub->callback([&command, name] { command = name; });
  }

  auto* serve = app.add_subcommand("serve", "RL environment server (JSON lines)");
  CommonOptions serve_opts;
  std::size_t n_envs = 0;
  std::string transport = "stdio";
  std::uint16_t port = 5555;
  serve->add_option("-c,--config", serve_opts.config, "key = value config file");
  serve->add_option("--set", serve_opts.overrides, "override a config key");
  serve->add_option("--vec", n_envs, "number of batched envs (0 = scalar session)");
  serve->add_option("--transport", transport, "stdio or socket")
      ->check(CLI::IsMember({"stdio", "socket"}));
  serve->add_option("--port", port, "TCP port for --transport socket");

  auto* info = app.add_subcommand("weights-info", "list the records of a weight file");
  std::string weights_path;
  info->add_option("path", weights_path)->required();

  auto* show = app.add_subcommand("show-config", "print the resolved config");
  CommonOptions show_opts;
  add_common(show, show_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (!isa.empty() && isa != "auto") {
      const auto which = qmetro::simd::parse_isa(isa);
      if (!which) throw std::runtime_error("unknown --isa '" + isa + "'");
      qmetro::simd::set_isa_override(*which);
    }
    if (!command.empty()) {
      const auto cfg = resolve(common);
      for (const auto& p : qmetro::run_command(command, cfg)) std::cout << p.string() << "\n";
      return 0;
    }
    if (serve->parsed()) {
      const auto episode = qmetro::episode_config(resolve(serve_opts));
      if (transport == "stdio") {
        std::ios::sync_with_stdio(false);
        qmetro::serve_stream(std::cin, std::cout, episode, n_envs);
      } else {
        qmetro::serve_socket(port, episode, n_envs, 0, [](std::uint16_t p, void*) {
          std::cerr << "listening on 127.0.0.1:" << p << std::endl;
        });
      }
      return 0;
    }
    if (info->parsed()) {
      std::ifstream f(weights_path, std::ios::binary);
      if (!f) throw std::runtime_error("cannot open " + weights_path);
      std::vector<unsigned char> bytes(std::istreambuf_iterator<char>(f), {});
      if (!bytes.empty() && bytes[0] == '{') {
        const auto w = qmetro::load_weights(weights_path);
        std::cout << "json weights, layers:";
        for (auto s : w.sizes) std::cout << ' ' << s;
        std::cout << ", activation " << qmetro::activation_name(w.activation) << "\n";
      } else {
        std::cout << qmetro::describe_weights_file(bytes);
      }
      return 0;
    }
    if (show->parsed()) {
      std::cout << qmetro::render_config(resolve(show_opts));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
