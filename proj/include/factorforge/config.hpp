// SPDX-License-Identifier: Apache-2.0
// Run configuration as JSON. Relative paths resolve against the directory of
// the config file.
#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "factorforge/driver.hpp"
#include "factorforge/io.hpp"

namespace factorforge {

struct RunConfig {
  fs::path input;
  std::optional<TensorFormat> input_format;  // inferred from the extension when absent
  /// Dense 0/1 tensor marking observed entries; selects the bitmask source.
  fs::path mask;
  fs::path output_dir = "out";
  /// Progress line on stderr every `log_every` iterations (0 = silent).
  std::size_t log_every = 0;
  /// Factor checkpoint every `checkpoint_every` iterations (0 = none).
  std::size_t checkpoint_every = 0;
  TensorFormat factor_format = TensorFormat::matrix_market;
  bool two_stage = false;
  /// Saved factor set to start from; sets init = provided.
  fs::path init_dir;
  ProblemConfig problem;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string_view to_string(MuPolicy p) {
  switch (p) {
    case MuPolicy::automatic: return "automatic";
    case MuPolicy::zero: return "zero";
    case MuPolicy::fixed: return "fixed";
    case MuPolicy::adaptive: return "adaptive";
  }
  return "?";
}

inline std::string_view to_string(InitKind k) {
  switch (k) {
    case InitKind::uniform01: return "uniform01";
    case InitKind::abs_gaussian: return "abs-gaussian";
    case InitKind::provided: return "provided";
  }
  return "?";
}

inline std::string_view to_string(LemmaPolicy p) {
  switch (p) {
    case LemmaPolicy::automatic: return "automatic";
    case LemmaPolicy::always: return "always";
    case LemmaPolicy::never: return "never";
  }
  return "?";
}

inline std::string_view to_string(Axis a) { return a == Axis::rows ? "rows" : "columns"; }

namespace detail {

template <class E, std::size_t N>
E enum_from(std::string_view s, const E (&all)[N], const char* what) {
  for (E e : all)
    if (to_string(e) == s) return e;
  throw ConfigError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

inline nlohmann::ordered_json reg_to_json(const RegularizerSpec& r) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(r.kind);
  switch (r.kind) {
    case RegKind::l1:
    case RegKind::smooth:
    case RegKind::tikhonov: j["lambda"] = r.lambda; break;
    case RegKind::box:
      j["lo"] = r.lo;
      j["hi"] = r.hi;
      break;
    case RegKind::simplex: j["axis"] = to_string(r.axis); break;
    case RegKind::nonneg_composed: j["inner"] = reg_to_json(r.inner.at(0)); break;
    default: break;
  }
  if (!r.ones_columns.empty()) j["ones_columns"] = r.ones_columns;
  return j;
}

inline RegularizerSpec reg_from_json(const nlohmann::json& j) {
  RegularizerSpec r;
  if (j.is_string()) {
    r.kind = reg_kind_from_string(j.get<std::string>());
    return r;
  }
  r.kind = reg_kind_from_string(j.at("kind").get<std::string>());
  r.lambda = j.value("lambda", 0.0);
  r.lo = j.value("lo", 0.0);
  r.hi = j.value("hi", 1.0);
  if (j.contains("axis")) r.axis = enum_from(j["axis"].get<std::string>(), {Axis::rows, Axis::columns}, "axis");
  if (j.contains("inner")) r.inner.push_back(reg_from_json(j["inner"]));
  r.ones_columns = j.value("ones_columns", std::vector<std::size_t>{});
  return r;
}

inline fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return (base / p).lexically_normal();
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const ProblemConfig& p) {
  nlohmann::ordered_json j;
  j["rank"] = p.rank;
  j["loss"] = {{"kind", to_string(p.loss.kind)}, {"lambda", p.loss.lambda}, {"mask", to_string(p.loss.mask_source)}};
  auto regs = nlohmann::ordered_json::array();
  for (const auto& r : p.regs) regs.push_back(detail::reg_to_json(r));
  j["regularizers"] = regs;
  j["inner_eps"] = p.inner_eps;
  j["inner_max_iter"] = p.inner_max_iter;
  j["outer_max_iter"] = p.outer_max_iter;
  j["outer_tol"] = p.outer_tol;
  j["mu"] = {{"policy", to_string(p.mu_policy)}, {"value", p.mu_value}};
  j["frobenius_safeguard"] = p.frobenius_safeguard;
  j["seed"] = p.seed;
  j["deterministic"] = p.deterministic;
  j["init"] = to_string(p.init == InitKind::provided ? InitKind::uniform01 : p.init);
  j["shared_split"] = p.shared_split;
  j["sparse_state"] = p.sparse_state;
  j["lemma"] = to_string(p.lemma);
  if (!p.lemma_modes.empty()) {
    auto modes = nlohmann::ordered_json::array();
    for (auto l : p.lemma_modes) modes.push_back(to_string(l));
    j["lemma_modes"] = modes;
  }
  j["lemma_ratio"] = p.lemma_ratio;
  j["force_general"] = p.force_general;
  j["threads"] = p.threads;
  j["two_stage_fraction"] = p.two_stage_fraction;
  return j;
}

inline ProblemConfig problem_from_json(const nlohmann::json& j) {
  ProblemConfig p;
  p.rank = j.value("rank", p.rank);
  if (j.contains("loss")) {
    const auto& l = j["loss"];
    if (l.is_string()) {
      p.loss.kind = loss_kind_from_string(l.get<std::string>());
    } else {
      p.loss.kind = loss_kind_from_string(l.value("kind", std::string("least-squares")));
      p.loss.lambda = l.value("lambda", 1.0);
      p.loss.mask_source = mask_source_from_string(l.value("mask", std::string("none")));
    }
  }
  if (j.contains("regularizers")) {
    for (const auto& r : j["regularizers"]) p.regs.push_back(detail::reg_from_json(r));
  } else {
    p.regs = {RegularizerSpec::none()};
  }
  p.inner_eps = j.value("inner_eps", p.inner_eps);
  p.inner_max_iter = j.value("inner_max_iter", p.inner_max_iter);
  p.outer_max_iter = j.value("outer_max_iter", p.outer_max_iter);
  p.outer_tol = j.value("outer_tol", p.outer_tol);
  if (j.contains("mu")) {
    const auto& m = j["mu"];
    p.mu_policy = detail::enum_from(m.value("policy", std::string("automatic")),
                                    {MuPolicy::automatic, MuPolicy::zero, MuPolicy::fixed, MuPolicy::adaptive}, "mu policy");
    p.mu_value = m.value("value", 0.0);
  }
  p.frobenius_safeguard = j.value("frobenius_safeguard", p.frobenius_safeguard);
  p.seed = j.value("seed", p.seed);
  p.deterministic = j.value("deterministic", p.deterministic);
  p.init = detail::enum_from(j.value("init", std::string("uniform01")), {InitKind::uniform01, InitKind::abs_gaussian},
                             "init");
  p.shared_split = j.value("shared_split", p.shared_split);
  p.sparse_state = j.value("sparse_state", p.sparse_state);
  p.lemma = detail::enum_from(j.value("lemma", std::string("automatic")),
                              {LemmaPolicy::automatic, LemmaPolicy::always, LemmaPolicy::never}, "lemma policy");
  if (j.contains("lemma_modes"))
    for (const auto& l : j["lemma_modes"])
      p.lemma_modes.push_back(detail::enum_from(l.get<std::string>(),
                                                {LemmaPolicy::automatic, LemmaPolicy::always, LemmaPolicy::never},
                                                "lemma policy"));
  p.lemma_ratio = j.value("lemma_ratio", p.lemma_ratio);
  p.force_general = j.value("force_general", p.force_general);
  p.threads = j.value("threads", p.threads);
  p.two_stage_fraction = j.value("two_stage_fraction", p.two_stage_fraction);
  return p;
}

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["input"] = c.input.string();
  if (c.input_format) j["input_format"] = to_string(*c.input_format);
  if (!c.mask.empty()) j["mask"] = c.mask.string();
  j["output_dir"] = c.output_dir.string();
  j["log_every"] = c.log_every;
  j["checkpoint_every"] = c.checkpoint_every;
  j["factor_format"] = to_string(c.factor_format);
  j["two_stage"] = c.two_stage;
  if (!c.init_dir.empty()) j["init_dir"] = c.init_dir.string();
  j["problem"] = to_json(c.problem);
  return j;
}

/// `base` is the directory relative paths are resolved against.
inline RunConfig run_config_from_json(const nlohmann::json& j, const fs::path& base = {}) {
  try {
    RunConfig c;
    c.input = detail::resolve(base, j.at("input").get<std::string>());
    if (j.contains("input_format")) c.input_format = tensor_format_from_string(j["input_format"].get<std::string>());
    c.mask = detail::resolve(base, j.value("mask", std::string()));
    c.output_dir = detail::resolve(base, j.value("output_dir", std::string("out")));
    c.log_every = j.value("log_every", c.log_every);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.factor_format = tensor_format_from_string(j.value("factor_format", std::string("matrix-market")));
    if (c.factor_format == TensorFormat::coo) throw ConfigError("factor_format must be matrix-market or dense-binary");
    c.two_stage = j.value("two_stage", c.two_stage);
    c.init_dir = detail::resolve(base, j.value("init_dir", std::string()));
    c.problem = problem_from_json(j.value("problem", nlohmann::json::object()));
    for (const auto& key : j.items()) {
      static const char* known[] = {"input",     "input_format", "mask",     "output_dir", "log_every",
                                    "checkpoint_every", "factor_format", "two_stage", "init_dir", "problem"};
      if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key.key() == k; }) ==
          std::end(known))
        throw ConfigError("unknown config key '" + key.key() + "'");
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  }
}

inline RunConfig parse_run_config(std::string_view text, const fs::path& base = {}) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return run_config_from_json(j, base);
}

inline RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), fs::absolute(path).parent_path());
}

inline std::string serialize(const RunConfig& c) { return to_json(c).dump(2); }

/// Hash of the problem definition; run-local settings (paths, cadence)
/// do not enter it.
inline std::string config_hash(const ProblemConfig& p) { return fnv1a_hex(to_json(p).dump()); }

}  // namespace factorforge
