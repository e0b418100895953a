#pragma once

// Run configuration shared by every command: a flat key=value file whose keys
// match the command-line flags. Flags override file values.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "sasp/error.hpp"

namespace sasp {

struct RunConfig {
  std::optional<double> epsilon;
  std::optional<std::size_t> max_points;
  std::optional<bool> include_neutral;
  std::optional<double> stride;
  std::optional<double> tau;
  std::optional<double> sigma_mask;
  std::optional<double> lambda_txt;
  std::optional<double> lambda_mask;
  std::optional<double> lambda_bce;
  std::optional<double> lambda_dice;
  std::optional<double> step;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::optional<double> lr;

  /// Fields set in `over` replace those here.
  void merge(const RunConfig& over) {
    const auto take = [](auto& dst, const auto& src) {
      if (src) dst = src;
    };
    take(epsilon, over.epsilon);
    take(max_points, over.max_points);
    take(include_neutral, over.include_neutral);
    take(stride, over.stride);
    take(tau, over.tau);
    take(sigma_mask, over.sigma_mask);
    take(lambda_txt, over.lambda_txt);
    take(lambda_mask, over.lambda_mask);
    take(lambda_bce, over.lambda_bce);
    take(lambda_dice, over.lambda_dice);
    take(step, over.step);
    take(out, over.out);
    take(seed, over.seed);
    take(steps, over.steps);
    take(lr, over.lr);
  }

  void validate() const {
    const auto positive = [](const std::optional<double>& v, const char* name) {
      if (v && !(*v > 0.0 && std::isfinite(*v))) throw ConfigError(std::string(name) + " must be > 0");
    };
    const auto non_negative = [](const std::optional<double>& v, const char* name) {
      if (v && !(*v >= 0.0 && std::isfinite(*v))) throw ConfigError(std::string(name) + " must be >= 0");
    };
    positive(epsilon, "epsilon");
    positive(tau, "tau");
    positive(sigma_mask, "sigma_mask");
    non_negative(lambda_txt, "lambda_txt");
    non_negative(lambda_mask, "lambda_mask");
    non_negative(lambda_bce, "lambda_bce");
    non_negative(lambda_dice, "lambda_dice");
    non_negative(lr, "lr");
    if (max_points && *max_points < 1) throw ConfigError("max_points must be >= 1");
    if (stride && !(*stride >= 1.0 && std::isfinite(*stride))) throw ConfigError("stride must be >= 1");
    if (step && !(*step > 0.0 && *step <= 0.5)) throw ConfigError("step must lie in (0, 0.5]");
    if (out && out->empty()) throw ConfigError("out must not be empty");
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end) throw ConfigError("bad value for " + key + ": \"" + text + "\"");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("bad boolean for " + key + ": \"" + text + "\"");
}

}  // namespace detail

/// Applies one key=value pair. Hyphens in keys are read as underscores.
inline void set_config_value(RunConfig& cfg, std::string key, const std::string& value) {
  for (auto& c : key) {
    if (c == '-') c = '_';
  }
  using detail::parse_number;
  if (key == "epsilon") cfg.epsilon = parse_number<double>(key, value);
  else if (key == "max_points") cfg.max_points = parse_number<std::size_t>(key, value);
  else if (key == "include_neutral") cfg.include_neutral = detail::parse_bool(key, value);
  else if (key == "stride") cfg.stride = parse_number<double>(key, value);
  else if (key == "tau") cfg.tau = parse_number<double>(key, value);
  else if (key == "sigma_mask") cfg.sigma_mask = parse_number<double>(key, value);
  else if (key == "lambda_txt") cfg.lambda_txt = parse_number<double>(key, value);
  else if (key == "lambda_mask") cfg.lambda_mask = parse_number<double>(key, value);
  else if (key == "lambda_bce") cfg.lambda_bce = parse_number<double>(key, value);
  else if (key == "lambda_dice") cfg.lambda_dice = parse_number<double>(key, value);
  else if (key == "step") cfg.step = parse_number<double>(key, value);
  else if (key == "out") cfg.out = value;
  else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "steps") cfg.steps = parse_number<std::size_t>(key, value);
  else if (key == "lr") cfg.lr = parse_number<double>(key, value);
  else throw ConfigError("unknown config key \"" + key + "\"");
}

/// Blank lines and lines starting with '#' are ignored.
inline RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    set_config_value(cfg, detail::trim(std::string_view(t).substr(0, eq)),
                     detail::trim(std::string_view(t).substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

}  // namespace sasp
