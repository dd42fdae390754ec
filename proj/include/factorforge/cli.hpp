// SPDX-License-Identifier: Apache-2.0
// Command-line front end: fit, eval, synth, complete, dictlearn.
#pragma once

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "factorforge/config.hpp"
#include "factorforge/driver.hpp"
#include "factorforge/harness.hpp"
#include "factorforge/io.hpp"

namespace factorforge::cli {

inline constexpr int kExitConverged = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitMaxIter = 2;
inline constexpr int kExitUsage = 64;

/// Thrown for problems with the invocation itself (exit 64).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline TensorData load_input(const fs::path& path, const std::optional<TensorFormat>& fmt) {
  return load_tensor(path, fmt ? *fmt : infer_format(path));
}

inline std::optional<TensorFormat> format_option(const std::string& s) {
  if (s.empty()) return std::nullopt;
  try {
    return tensor_format_from_string(s);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

inline void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  auto out = factorforge::detail::open_out(path);
  out << j.dump(2) << '\n';
  factorforge::detail::check_written(out, path);
}

inline std::vector<double> parse_list(const std::string& s, const char* what) {
  std::vector<double> out;
  std::stringstream ss(s);
  for (std::string cell; std::getline(ss, cell, ',');) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw UsageError(std::string("bad ") + what + " '" + s + "'");
    }
  }
  return out;
}

/// Dense 0/1 tensor -> bitmask over the same layout.
inline std::vector<std::uint8_t> load_mask(const fs::path& path, const std::vector<std::size_t>& dims) {
  const DenseTensor m = [&] {
    TensorData t = load_tensor(path);
    if (auto* s = std::get_if<SparseTensor>(&t)) return s->to_dense();
    return std::get<DenseTensor>(std::move(t));
  }();
  if (m.dims() != dims) throw std::invalid_argument("mask dimensions do not match the data");
  std::vector<std::uint8_t> out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] != 0.0;
  return out;
}

// ---------------------------------------------------------------- fit

struct FitFlags {
  std::string config, input, format, output, loss, init;
  std::optional<std::size_t> rank, outer_max_iter, inner_max_iter, threads, checkpoint_every, log_every;
  std::optional<double> inner_eps, outer_tol;
  std::optional<std::uint64_t> seed;
  bool deterministic = false, two_stage = false;
};

inline RunConfig effective_config(const FitFlags& f) {
  RunConfig c;
  try {
    c = load_run_config(f.config);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  if (!f.input.empty()) c.input = f.input;
  if (auto fmt = format_option(f.format)) c.input_format = fmt;
  if (!f.output.empty()) c.output_dir = f.output;
  if (!f.init.empty()) c.init_dir = f.init;
  if (!f.loss.empty()) {
    try {
      c.problem.loss.kind = loss_kind_from_string(f.loss);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  if (f.rank) c.problem.rank = *f.rank;
  if (f.outer_max_iter) c.problem.outer_max_iter = *f.outer_max_iter;
  if (f.inner_max_iter) c.problem.inner_max_iter = *f.inner_max_iter;
  if (f.inner_eps) c.problem.inner_eps = *f.inner_eps;
  if (f.outer_tol) c.problem.outer_tol = *f.outer_tol;
  if (f.threads) c.problem.threads = *f.threads;
  if (f.seed) c.problem.seed = *f.seed;
  if (f.checkpoint_every) c.checkpoint_every = *f.checkpoint_every;
  if (f.log_every) c.log_every = *f.log_every;
  if (f.deterministic) c.problem.deterministic = true;
  if (f.two_stage) c.two_stage = true;
  if (c.input.empty()) throw UsageError("no input tensor given");
  return c;
}

inline int run_fit(const FitFlags& flags, std::ostream& out, std::ostream& err) {
  RunConfig rc = effective_config(flags);
  const TensorData data = load_input(rc.input, rc.input_format);
  ProblemConfig cfg = rc.problem;
  if (!rc.mask.empty()) {
    cfg.loss.mask_source = MaskSource::bitmask;
    cfg.loss.mask = load_mask(rc.mask, dims_of(data));
  }
  std::size_t offset = 0;
  if (!rc.init_dir.empty()) {
    FactorSet init = load_factors(rc.init_dir);
    cfg.init = InitKind::provided;
    cfg.initial_factors = std::move(init.factors);
    cfg.initial_duals = std::move(init.duals);
    offset = init.manifest.iteration;
  }
  const std::string hash = config_hash(rc.problem);
  fs::create_directories(rc.output_dir);
  {
    RunConfig saved = rc;
    saved.init_dir.clear();
    write_json(rc.output_dir / "config.json", to_json(saved));
  }

  const fs::path trace_path = rc.output_dir / "trace.csv";
  auto trace = factorforge::detail::open_out(trace_path);
  trace << kTraceHeader << '\n';
  auto manifest_at = [&](std::size_t iter) {
    FactorManifest m;
    m.seed = cfg.seed;
    m.config_hash = hash;
    m.iteration = iter;
    m.format = rc.factor_format;
    return m;
  };
  auto on_iter = [&](const IterationView& v) {
    TraceRecord rec = v.trace.back();
    rec.iter += offset;
    trace << trace_row(rec) << '\n';
    trace.flush();
    if (rc.log_every && rec.iter % rc.log_every == 0)
      err << "iter " << rec.iter << " objective " << factorforge::detail::fmt_double(rec.objective) << " rel_error "
          << factorforge::detail::fmt_double(rec.rel_error) << '\n';
    if (rc.checkpoint_every && rec.iter % rc.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "iter_%06zu", rec.iter);
      save_factors(rc.output_dir / "checkpoints" / name, v.factors, {}, manifest_at(rec.iter));
    }
  };
  const FitResult res = rc.two_stage ? fit_two_stage(data, cfg, on_iter) : fit(data, cfg, on_iter);
  factorforge::detail::check_written(trace, trace_path);

  const std::size_t last = offset + res.trace.size();
  save_factors(rc.output_dir / "factors", res.factors, res.duals, manifest_at(last));
  const ObjectiveValue ov = objective(data, res.factors, cfg);
  nlohmann::ordered_json summary;
  summary["converged"] = res.converged;
  summary["iterations"] = res.trace.size();
  summary["last_iteration"] = last;
  summary["objective"] = ov.total();
  summary["violation"] = ov.violation;
  summary["rel_error"] = fit_relative_error(data, res.factors, cfg.loss);
  summary["mttkrp_calls"] = res.counters.mttkrp_calls;
  summary["config_hash"] = hash;
  write_json(rc.output_dir / "summary.json", summary);
  out << (res.converged ? "converged" : "stopped at max iterations") << " after " << res.trace.size()
      << " iterations, objective " << factorforge::detail::fmt_double(ov.total()) << '\n';
  return res.converged ? kExitConverged : kExitMaxIter;
}

// ---------------------------------------------------------------- eval

struct EvalFlags {
  std::string input, format, factors, config, loss, output;
};

inline int run_eval(const EvalFlags& f, std::ostream& out) {
  ProblemConfig cfg;
  std::optional<TensorFormat> fmt = format_option(f.format);
  fs::path input = f.input;
  fs::path mask;
  if (!f.config.empty()) {
    RunConfig rc;
    try {
      rc = load_run_config(f.config);
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
    cfg = rc.problem;
    if (input.empty()) input = rc.input;
    if (!fmt) fmt = rc.input_format;
    mask = rc.mask;
  }
  if (input.empty()) throw UsageError("no input tensor given");
  if (!f.loss.empty()) {
    try {
      cfg.loss.kind = loss_kind_from_string(f.loss);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  const TensorData data = load_input(input, fmt);
  if (!mask.empty()) {
    cfg.loss.mask_source = MaskSource::bitmask;
    cfg.loss.mask = load_mask(mask, dims_of(data));
  }
  const FactorSet fsb = load_factors(f.factors);
  if (fsb.manifest.dims != dims_of(data)) throw std::invalid_argument("factor dimensions do not match the data");
  const ObjectiveValue ov = objective(data, fsb.factors, cfg);
  nlohmann::ordered_json j;
  j["iteration"] = fsb.manifest.iteration;
  j["objective"] = ov.total();
  j["loss"] = ov.loss;
  j["regularization"] = ov.reg;
  j["safeguard"] = ov.safeguard;
  j["violation"] = ov.violation;
  j["infinite_terms"] = ov.infinite_terms;
  j["rel_error"] = fit_relative_error(data, fsb.factors, cfg.loss);
  if (!f.output.empty()) write_json(f.output, j);
  out << j.dump(2) << '\n';
  return kExitConverged;
}

// ---------------------------------------------------------------- synth

struct SynthFlags {
  std::string dims, output, format = "dense-binary";
  std::size_t rank = 5;
  double sparsify = 0.5, variance = 0.01;
  std::uint64_t seed = 0;
  bool gaussian = false;
};

inline int run_synth(const SynthFlags& f, std::ostream& out) {
  SynthSpec spec;
  for (double d : parse_list(f.dims, "dimension list")) {
    if (!(d >= 1.0) || d != std::floor(d)) throw UsageError("dimensions must be positive integers");
    spec.dims.push_back(static_cast<std::size_t>(d));
  }
  spec.k_true = f.rank;
  spec.sparsify = f.sparsify;
  spec.noise_variance = f.variance;
  spec.seed = f.seed;
  spec.nonneg = !f.gaussian;
  const TensorFormat fmt = *format_option(f.format);
  const SynthData s = gen_synthetic(spec);
  const fs::path dir = f.output;
  const char* ext = fmt == TensorFormat::dense_binary ? "data.bin" : fmt == TensorFormat::coo ? "data.coo" : "data.mtx";
  save_tensor(dir / ext, s.data, fmt);
  FactorManifest man;
  man.seed = spec.seed;
  save_factors(dir / "truth", s.factors, {}, man);
  nlohmann::ordered_json j;
  j["dims"] = spec.dims;
  j["rank"] = spec.k_true;
  j["sparsify"] = spec.sparsify;
  j["noise_variance"] = spec.noise_variance;
  j["seed"] = spec.seed;
  j["nonneg"] = spec.nonneg;
  j["data"] = ext;
  j["noise_norm"] = s.noise_norm;
  j["data_norm"] = std::sqrt(s.data.squared_norm());
  write_json(dir / "synth.json", j);
  out << "wrote " << (dir / ext).string() << '\n';
  return kExitConverged;
}

// ---------------------------------------------------------------- complete

struct CompleteFlags {
  std::string input, format, output, variants = "ls/none,ls/tikhonov,ls/nonneg,ls/nonneg-bias", clamp;
  std::size_t rank = 4, folds = 5, outer_max_iter = 200, threads = 0;
  double train_fraction = 0.8, tikhonov = 0.1;
  std::uint64_t seed = 0;
  bool bias = false, no_clamp = false, deterministic = false;
};

inline std::vector<CompletionVariant> parse_variants(const std::string& s, double lambda) {
  std::vector<CompletionVariant> out;
  std::stringstream ss(s);
  for (std::string cell; std::getline(ss, cell, ',');) {
    const auto slash = cell.find('/');
    if (slash == std::string::npos) throw UsageError("variant '" + cell + "' is not loss/regularizer");
    CompletionVariant v;
    const std::string loss = cell.substr(0, slash);
    if (loss == "kl")
      v.loss = LossKind::kl;
    else if (loss != "ls")
      throw UsageError("variant loss must be ls or kl, got '" + loss + "'");
    try {
      v.reg = completion_reg_from_string(cell.substr(slash + 1));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    v.tikhonov_lambda = lambda;
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("no completion variants given");
  return out;
}

inline int run_complete(const CompleteFlags& f, std::ostream& out) {
  const auto variants = parse_variants(f.variants, f.tikhonov);
  const TensorData data = load_input(f.input, format_option(f.format));
  const auto* y = std::get_if<SparseTensor>(&data);
  if (!y) throw std::invalid_argument("completion input must be sparse (COO or Matrix Market coordinate)");
  SplitSpec split;
  split.train_fraction = f.train_fraction;
  split.folds = f.folds;
  split.seed = f.seed;
  split.bias = f.bias;
  CompletionOptions opt;
  opt.base.rank = f.rank;
  opt.base.outer_max_iter = f.outer_max_iter;
  opt.base.seed = f.seed;
  opt.base.deterministic = f.deterministic;
  opt.base.threads = f.threads;
  if (!f.clamp.empty()) {
    const auto r = parse_list(f.clamp, "clamp range");
    if (r.size() != 2 || !(r[0] <= r[1])) throw UsageError("clamp needs LO,HI with LO <= HI");
    opt.clamp = std::pair{r[0], r[1]};
  } else if (!f.no_clamp && y->nnz() > 0 &&
             std::ranges::all_of(y->values(), [](double v) { return v == std::floor(v); })) {
    const auto [lo, hi] = std::ranges::minmax(y->values());
    opt.clamp = std::pair{lo, hi};
  }
  if (opt.clamp)
    out << "predictions clamped to [" << factorforge::detail::fmt_double(opt.clamp->first) << ", "
        << factorforge::detail::fmt_double(opt.clamp->second) << "]\n";
  const CompletionResult res = run_completion_cv(*y, split, variants, opt);
  auto csv = factorforge::detail::open_out(f.output);
  csv << "fold,config,train_mae,test_mae\n";
  for (const auto& r : res.rows)
    csv << r.fold << ',' << r.config << ',' << factorforge::detail::fmt_double(r.train_mae) << ','
        << factorforge::detail::fmt_double(r.test_mae) << '\n';
  for (const auto& r : res.averages) {
    csv << "mean," << r.config << ',' << factorforge::detail::fmt_double(r.train_mae) << ','
        << factorforge::detail::fmt_double(r.test_mae) << '\n';
    out << r.config << ": train MAE " << factorforge::detail::fmt_double(r.train_mae) << ", test MAE "
        << factorforge::detail::fmt_double(r.test_mae) << '\n';
  }
  factorforge::detail::check_written(csv, f.output);
  return kExitConverged;
}

// ---------------------------------------------------------------- dictlearn

struct DictFlags {
  std::string input, format, output, lemma = "automatic";
  std::size_t atoms = 0, iters = 100, threads = 0;
  double lambda = 0.5;
  std::uint64_t seed = 0;
  bool nonneg = false, deterministic = false;
};

inline int run_dictlearn_cmd(const DictFlags& f, std::ostream& out) {
  DictLearnSpec spec;
  spec.atoms = f.atoms;
  spec.lambda = f.lambda;
  spec.nonneg = f.nonneg;
  spec.iters = f.iters;
  spec.seed = f.seed;
  spec.deterministic = f.deterministic;
  spec.threads = f.threads;
  try {
    spec.lemma = factorforge::detail::enum_from(f.lemma, {LemmaPolicy::automatic, LemmaPolicy::always, LemmaPolicy::never},
                                                "lemma policy");
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  TensorData data = load_input(f.input, format_option(f.format));
  if (auto* s = std::get_if<SparseTensor>(&data)) data = s->to_dense();
  const auto& t = std::get<DenseTensor>(data);
  if (t.order() != 2) throw std::invalid_argument("dictionary learning takes a matrix (one sample per column)");
  const Matrix y = Eigen::Map<const Matrix>(t.data(), static_cast<Eigen::Index>(t.dims()[0]),
                                            static_cast<Eigen::Index>(t.dims()[1]));
  const DictLearnResult r = run_dictlearn(y, spec);
  const fs::path dir = f.output;
  save_matrix(dir / "dictionary.mtx", r.dictionary);
  save_matrix(dir / "codes.mtx", r.codes);
  {
    auto csv = factorforge::detail::open_out(dir / "trace.csv");
    write_trace_csv(csv, r.stats.trace);
    factorforge::detail::check_written(csv, dir / "trace.csv");
  }
  nlohmann::ordered_json j;
  j["atoms"] = spec.atoms;
  j["lambda"] = spec.lambda;
  j["nonneg"] = spec.nonneg;
  j["iterations"] = r.stats.trace.size();
  j["objective"] = r.stats.objective;
  j["atoms_per_sample"] = r.stats.atoms_per_sample;
  j["energy_fraction"] = r.stats.energy_fraction;
  j["max_atom_norm"] = r.stats.max_atom_norm_seen;
  write_json(dir / "stats.json", j);
  out << "atoms per sample " << factorforge::detail::fmt_double(r.stats.atoms_per_sample) << ", energy fraction "
      << factorforge::detail::fmt_double(r.stats.energy_fraction) << '\n';
  return kExitConverged;
}

}  // namespace detail

/// Parses argv and runs the chosen subcommand. Returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Constrained matrix and tensor factorization (AO-ADMM)", "factorforge"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "factorforge 0.1.0");

  detail::FitFlags fit_f;
  auto* fit_cmd = app.add_subcommand("fit", "fit a factorization from a run configuration");
  fit_cmd->add_option("-c,--config", fit_f.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("-i,--input", fit_f.input, "input tensor (overrides the config)");
  fit_cmd->add_option("--format", fit_f.format, "coo | matrix-market | dense-binary");
  fit_cmd->add_option("-o,--output", fit_f.output, "output directory");
  fit_cmd->add_option("--init", fit_f.init, "saved factor directory to start from");
  fit_cmd->add_option("--loss", fit_f.loss, "least-squares | missing | l1 | huber | kl");
  fit_cmd->add_option("-k,--rank", fit_f.rank)->check(CLI::PositiveNumber);
  fit_cmd->add_option("--outer-max-iter", fit_f.outer_max_iter);
  fit_cmd->add_option("--inner-max-iter", fit_f.inner_max_iter)->check(CLI::PositiveNumber);
  fit_cmd->add_option("--inner-eps", fit_f.inner_eps)->check(CLI::PositiveNumber);
  fit_cmd->add_option("--outer-tol", fit_f.outer_tol)->check(CLI::PositiveNumber);
  fit_cmd->add_option("--seed", fit_f.seed);
  fit_cmd->add_option("--threads", fit_f.threads);
  fit_cmd->add_option("--checkpoint-every", fit_f.checkpoint_every);
  fit_cmd->add_option("--log-every", fit_f.log_every);
  fit_cmd->add_flag("--deterministic", fit_f.deterministic, "single-threaded, bitwise reproducible");
  fit_cmd->add_flag("--two-stage", fit_f.two_stage, "least-squares warm-up before the configured loss");

  detail::EvalFlags eval_f;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate saved factors against a tensor");
  eval_cmd->add_option("-f,--factors", eval_f.factors, "saved factor directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("-i,--input", eval_f.input, "input tensor");
  eval_cmd->add_option("--format", eval_f.format);
  eval_cmd->add_option("-c,--config", eval_f.config, "run configuration for loss and regularizers")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--loss", eval_f.loss);
  eval_cmd->add_option("-o,--output", eval_f.output, "write the JSON report here too");

  detail::SynthFlags synth_f;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic low-rank tensor");
  synth_cmd->add_option("--dims", synth_f.dims, "comma-separated dimensions, e.g. 30,30,30")->required();
  synth_cmd->add_option("-k,--rank", synth_f.rank)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--sparsify", synth_f.sparsify)->check(CLI::Range(0.0, 1.0));
  synth_cmd->add_option("--variance", synth_f.variance)->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--seed", synth_f.seed);
  synth_cmd->add_flag("--gaussian", synth_f.gaussian, "Gaussian factors instead of exponential");
  synth_cmd->add_option("--format", synth_f.format)->check(CLI::IsMember({"coo", "matrix-market", "dense-binary"}));
  synth_cmd->add_option("-o,--output", synth_f.output, "output directory")->required();

  detail::CompleteFlags comp_f;
  auto* comp_cmd = app.add_subcommand("complete", "cross-validated matrix completion (MAE table)");
  comp_cmd->add_option("-i,--input", comp_f.input, "observed entries (COO or Matrix Market coordinate)")
      ->required()
      ->check(CLI::ExistingFile);
  comp_cmd->add_option("--format", comp_f.format);
  comp_cmd->add_option("-k,--rank", comp_f.rank)->check(CLI::PositiveNumber);
  comp_cmd->add_option("--folds", comp_f.folds)->check(CLI::PositiveNumber);
  comp_cmd->add_option("--train-fraction", comp_f.train_fraction)->check(CLI::Range(0.0, 1.0));
  comp_cmd->add_option("--variants", comp_f.variants, "comma-separated loss/regularizer pairs");
  comp_cmd->add_option("--tikhonov", comp_f.tikhonov)->check(CLI::NonNegativeNumber);
  comp_cmd->add_flag("--bias", comp_f.bias, "bias columns on every variant");
  comp_cmd->add_option("--clamp", comp_f.clamp, "LO,HI prediction range");
  comp_cmd->add_flag("--no-clamp", comp_f.no_clamp, "never clamp predictions");
  comp_cmd->add_option("--outer-max-iter", comp_f.outer_max_iter);
  comp_cmd->add_option("--seed", comp_f.seed);
  comp_cmd->add_option("--threads", comp_f.threads);
  comp_cmd->add_flag("--deterministic", comp_f.deterministic);
  comp_cmd->add_option("-o,--output", comp_f.output, "MAE table (CSV)")->required();

  detail::DictFlags dict_f;
  auto* dict_cmd = app.add_subcommand("dictlearn", "learn a dictionary with sparse codes");
  dict_cmd->add_option("-i,--input", dict_f.input, "sample matrix, one sample per column")
      ->required()
      ->check(CLI::ExistingFile);
  dict_cmd->add_option("--format", dict_f.format);
  dict_cmd->add_option("-k,--atoms", dict_f.atoms)->required()->check(CLI::PositiveNumber);
  dict_cmd->add_option("--lambda", dict_f.lambda)->check(CLI::NonNegativeNumber);
  dict_cmd->add_flag("--nonneg", dict_f.nonneg);
  dict_cmd->add_option("--iters", dict_f.iters);
  dict_cmd->add_option("--lemma", dict_f.lemma)->check(CLI::IsMember({"automatic", "always", "never"}));
  dict_cmd->add_option("--seed", dict_f.seed);
  dict_cmd->add_option("--threads", dict_f.threads);
  dict_cmd->add_flag("--deterministic", dict_f.deterministic);
  dict_cmd->add_option("-o,--output", dict_f.output, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << app.version() << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n' << "run 'factorforge --help' for the grammar\n";
    return kExitUsage;
  }

  try {
    if (fit_cmd->parsed()) return detail::run_fit(fit_f, out, err);
    if (eval_cmd->parsed()) return detail::run_eval(eval_f, out);
    if (synth_cmd->parsed()) return detail::run_synth(synth_f, out);
    if (comp_cmd->parsed()) return detail::run_complete(comp_f, out);
    if (dict_cmd->parsed()) return detail::run_dictlearn_cmd(dict_f, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitUsage;
}

}  // namespace factorforge::cli
