#include "qmetro/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <cstdio>

namespace qmetro {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("expected a number, got '" + v + "'");
  }
  if (used != v.size() || !std::isfinite(x)) throw ConfigError("expected a number, got '" + v + "'");
  return x;
}

std::int64_t to_int(const std::string& v) {
  std::int64_t x = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ConfigError("expected an integer, got '" + v + "'");
  }
  return x;
}

std::uint64_t to_uint(const std::string& v) {
  std::uint64_t x = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ConfigError("expected a non-negative integer, got '" + v + "'");
  }
  return x;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

std::vector<double> to_doubles(const std::string& v) {
  std::vector<double> out;
  for (const auto& s : split_list(v)) out.push_back(to_double(s));
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"omega", [](auto& c, auto& v) { c.params.omega = to_double(v); }},
      {"chi", [](auto& c, auto& v) { c.params.chi = to_double(v); }},
      {"kappa", [](auto& c, auto& v) { c.params.kappa = to_double(v); }},
      {"eta", [](auto& c, auto& v) { c.params.eta = to_double(v); }},
      {"dt", [](auto& c, auto& v) { c.params.dt = to_double(v); }},
      {"strategies", [](auto& c, auto& v) { c.strategies = split_list(v); }},
      {"weights", [](auto& c, auto& v) { c.weights = v; }},
      {"deterministic", [](auto& c, auto& v) { c.deterministic = to_bool(v); }},
      {"action_bound",
       [](auto& c, auto& v) {
         if (v == "none") {
           c.action_bound.reset();
         } else {
           c.action_bound = to_double(v);
         }
       }},
      {"n_traj", [](auto& c, auto& v) { c.n_traj = to_uint(v); }},
      {"horizon", [](auto& c, auto& v) { c.horizon = to_double(v); }},
      {"horizon_steps", [](auto& c, auto& v) { c.horizon_steps = to_int(v); }},
      {"stride", [](auto& c, auto& v) { c.stride = to_int(v); }},
      {"seed", [](auto& c, auto& v) { c.seed = to_uint(v); }},
      {"n_th", [](auto& c, auto& v) { c.init.n_th = to_double(v); }},
      {"r0",
       [](auto& c, auto& v) {
         const auto xs = to_doubles(v);
         if (xs.size() != 2) throw ConfigError("r0 needs two values");
         c.init.r0 = {xs[0], xs[1]};
       }},
      {"randomize_init", [](auto& c, auto& v) { c.randomize_init = to_bool(v); }},
      {"sample_times", [](auto& c, auto& v) { c.sample_times = to_doubles(v); }},
      {"n_sample_traces", [](auto& c, auto& v) { c.n_sample_traces = to_uint(v); }},
      {"sweep_param", [](auto& c, auto& v) { c.sweep_param = v; }},
      {"sweep_values", [](auto& c, auto& v) { c.sweep_values = to_doubles(v); }},
      {"jobs", [](auto& c, auto& v) { c.jobs = static_cast<unsigned>(to_uint(v)); }},
      {"output_dir", [](auto& c, auto& v) { c.output_dir = v; }},
  };
  return table;
}

// 17 significant digits always read back to the same double.
std::string g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string join(const std::vector<std::string>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ", " : "") + xs[i];
  return s;
}

std::string join(const std::vector<double>& xs) {
  std::vector<std::string> s;
  for (double x : xs) s.push_back(g17(x));
  return join(s);
}

}  // namespace

std::int64_t ExperimentConfig::total_steps() const {
  if (horizon_steps) return *horizon_steps;
  return std::llround(horizon / params.dt);
}

std::vector<std::int64_t> ExperimentConfig::grid() const {
  std::vector<std::int64_t> extra;
  for (double t : sample_times) extra.push_back(std::llround(t / params.dt));
  return record_steps(total_steps(), stride, extra);
}

void ExperimentConfig::validate() const {
  try {
    params.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  if (n_traj < 1) throw ConfigError("n_traj must be >= 1");
  if (total_steps() < 0) throw ConfigError("horizon must be >= 0");
  if (stride < 1) throw ConfigError("stride must be >= 1");
  if (!(init.n_th >= 0.0)) throw ConfigError("n_th must be >= 0");
  if (strategies.empty()) throw ConfigError("strategies must not be empty");
  for (const auto& s : strategies) {
    if (s != "none" && s != "open_loop" && s != "neural") {
      throw ConfigError("unknown strategy '" + s + "' (none, open_loop, neural)");
    }
    if (s == "neural") {
      if (weights.empty()) throw ConfigError("strategy 'neural' needs a weights path");
      if (!std::filesystem::exists(weights)) {
        throw ConfigError("weights file not found: " + weights.string());
      }
    }
  }
  for (double t : sample_times) {
    if (t < 0.0) throw ConfigError("sample_times must be >= 0");
  }
  if (sweep_param != "chi" && sweep_param != "eta") {
    throw ConfigError("sweep_param must be chi or eta");
  }
  if (action_bound && !(*action_bound > 0.0)) throw ConfigError("action_bound must be positive");
}

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(where + "unknown key '" + key + "'");
    try {
      it->second(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), path.string());
}

EpisodeConfig episode_config(const ExperimentConfig& cfg) {
  EpisodeConfig e;
  e.params = cfg.params;
  e.horizon_steps = cfg.total_steps();
  e.randomize_init = cfg.randomize_init;
  e.fixed_init = cfg.init;
  return e;
}

std::string render_config(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "omega = " << g17(c.params.omega) << "\n"
    << "chi = " << g17(c.params.chi) << "\n"
    << "kappa = " << g17(c.params.kappa) << "\n"
    << "eta = " << g17(c.params.eta) << "\n"
    << "dt = " << g17(c.params.dt) << "\n"
    << "strategies = " << join(c.strategies) << "\n";
  if (!c.weights.empty()) o << "weights = " << c.weights.string() << "\n";
  o << "deterministic = " << (c.deterministic ? "true" : "false") << "\n"
    << "action_bound = " << (c.action_bound ? g17(*c.action_bound) : "none") << "\n"
    << "n_traj = " << c.n_traj << "\n"
    << "horizon = " << g17(c.horizon) << "\n";
  if (c.horizon_steps) o << "horizon_steps = " << *c.horizon_steps << "\n";
  o << "stride = " << c.stride << "\n"
    << "seed = " << c.seed << "\n"
    << "n_th = " << g17(c.init.n_th) << "\n"
    << "r0 = " << g17(c.init.r0.q) << ", " << g17(c.init.r0.p) << "\n"
    << "randomize_init = " << (c.randomize_init ? "true" : "false") << "\n"
    << "sample_times = " << join(c.sample_times) << "\n"
    << "n_sample_traces = " << c.n_sample_traces << "\n"
    << "sweep_param = " << c.sweep_param << "\n"
    << "sweep_values = " << join(c.sweep_values) << "\n"
    << "jobs = " << c.jobs << "\n"
    << "output_dir = " << c.output_dir.string() << "\n";
  return o.str();
}

}  // namespace qmetro
