// Copyright 2026 The dpfedbank-sim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

// Command-line front end: run, validate, calibrate, sweep.

#include <atomic>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dpfedbank/metrics.hpp"

namespace dpfedbank {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitRuntime = 2;

struct RunOptions {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

namespace detail {

inline Json load_with_overrides(const std::string& path, const std::vector<std::string>& sets,
                                std::optional<std::uint64_t> seed) {
  Json doc = load_config_json(path);
  for (const auto& s : sets) apply_override(doc, s);
  if (seed) doc["seed"] = *seed;
  return doc;
}

/// 6 significant digits, trailing zeros kept ("4.84480", "2.00000").
inline std::string six_significant(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%#.6g", v);
  std::string s = buf;
  if (!s.empty() && s.back() == '.') s.pop_back();
  return s;
}

inline std::string csv_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace detail

inline int cmd_validate(const RunOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    ExperimentConfig cfg = config_from_json(detail::load_with_overrides(opts.config, opts.sets, opts.seed));
    out << "config ok: " << cfg.partition.n_clients << " clients, " << cfg.rounds << " rounds, rule "
        << rule_name(cfg.rule) << "\n";
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
}

inline int cmd_run(const RunOptions& opts, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg;
  try {
    cfg = config_from_json(detail::load_with_overrides(opts.config, opts.sets, opts.seed));
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  if (opts.out) cfg.output = *opts.out;
  try {
    ExperimentResult result = run_experiment(cfg, resolve_threads(cfg.threads));
    write_file_atomic(cfg.output, render_jsonl(result.records));
    RunSummary s = summarize(result.records);
    out << "wrote " << result.records.size() + 1 << " lines to " << cfg.output
        << "; final accuracy " << s.final_accuracy << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    err << "runtime failure: " << e.what() << "\n";
    return kExitRuntime;
  }
}

struct CalibrateOptions {
  std::optional<double> clip_norm;
  std::optional<double> sensitivity;
  double epsilon = 1.0;
  double delta = 1e-5;
  std::string mode = "analytic";
};

inline int cmd_calibrate(const CalibrateOptions& opts, std::ostream& out, std::ostream& err) {
  auto fail = [&](const std::string& msg) {
    err << "error: " << msg << "\n";
    return kExitInvalid;
  };
  if (opts.clip_norm.has_value() == opts.sensitivity.has_value()) {
    return fail("give exactly one of --clip or --sensitivity");
  }
  CalibrationMode mode;
  if (opts.mode == "analytic") {
    mode = CalibrationMode::kAnalytic;
  } else if (opts.mode == "simple") {
    mode = CalibrationMode::kSimple;
  } else {
    return fail("--mode must be analytic or simple");
  }
  if (!(opts.epsilon > 0.0) || !std::isfinite(opts.epsilon)) return fail("epsilon must be positive");
  if (!(opts.delta > 0.0 && opts.delta < 1.0)) return fail("delta must lie in (0,1)");
  double sensitivity = 0.0;
  if (opts.clip_norm) {
    if (!(*opts.clip_norm > 0.0) || !std::isfinite(*opts.clip_norm)) {
      return fail("clip norm must be positive");
    }
    sensitivity = calibrate_sigma({opts.epsilon, opts.delta, *opts.clip_norm, mode}).sensitivity;
  } else {
    if (!(*opts.sensitivity > 0.0) || !std::isfinite(*opts.sensitivity)) {
      return fail("sensitivity must be positive");
    }
    sensitivity = *opts.sensitivity;
  }
  out << detail::six_significant(sigma_for(sensitivity, opts.epsilon, opts.delta, mode)) << "\n";
  return kExitOk;
}

struct SweepOptions {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string axis;
  std::vector<std::string> values;
  std::size_t seeds = 1;
  std::string out = "sweep.csv";
};

inline int cmd_sweep(const SweepOptions& opts, std::ostream& out, std::ostream& err) {
  struct Job {
    std::string value;
    std::size_t seed_index = 0;
    ExperimentConfig cfg;
    RunSummary summary;
  };
  std::vector<Job> jobs;
  try {
    if (opts.values.empty()) throw ConfigError("--values", "at least one value is required");
    if (opts.seeds < 1) throw ConfigError("--seeds", "must be positive");
    if (opts.axis != "epsilon" && opts.axis != "attack_fraction" && opts.axis != "rule") {
      throw ConfigError("--axis", "must be epsilon, attack_fraction or rule");
    }
    const Json base = detail::load_with_overrides(opts.config, opts.sets, opts.seed);
    const ExperimentConfig base_cfg = config_from_json(base);
    for (const auto& value : opts.values) {
      Json doc = base;
      if (opts.axis == "epsilon") {
        apply_override(doc, "privacy.epsilon=" + value);
      } else if (opts.axis == "rule") {
        doc["aggregation"]["rule"] = value;
      } else {
        double frac = 0.0;
        try {
          std::size_t used = 0;
          frac = std::stod(value, &used);
          if (used != value.size()) throw std::invalid_argument(value);
        } catch (const std::exception&) {
          throw ConfigError("--values", "attack fraction '" + value + "' is not a number");
        }
        if (!(frac >= 0.0 && frac <= 1.0)) {
          throw ConfigError("--values", "attack fraction must lie in [0,1]");
        }
        const auto count = static_cast<std::size_t>(
            std::lround(frac * static_cast<double>(base_cfg.partition.n_clients)));
        Json ids = Json::array();
        for (std::size_t i = 0; i < count; ++i) ids.push_back(i);
        doc["attack"]["attackers"] = ids;
      }
      ExperimentConfig cfg = config_from_json(doc);
      for (std::size_t s = 0; s < opts.seeds; ++s) {
        Job job{value, s, cfg, {}};
        job.cfg.seed = derive_seed({base_cfg.seed, s});
        jobs.push_back(std::move(job));
      }
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  }

  try {
    const std::size_t workers = std::min(resolve_threads(jobs.front().cfg.threads), jobs.size());
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    auto work = [&](std::size_t w) {
      try {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
          jobs[i].summary = summarize(run_experiment(jobs[i].cfg, 1).records);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work, w);
    work(0);
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }

    std::string csv =
        "axis,value,seed_index,seed,final_accuracy,final_loss,mean_tpr,mean_fpr,cumulative_epsilon\n";
    for (const auto& job : jobs) {
      const RunSummary& s = job.summary;
      csv += opts.axis + "," + job.value + "," + std::to_string(job.seed_index) + "," +
             std::to_string(job.cfg.seed) + "," + detail::csv_number(s.final_accuracy) + "," +
             detail::csv_number(s.final_loss) + "," +
             (s.mean_tpr ? detail::csv_number(*s.mean_tpr) : "") + "," +
             (s.mean_fpr ? detail::csv_number(*s.mean_fpr) : "") + "," +
             detail::csv_number(s.max_cumulative_epsilon) + "\n";
    }
    write_file_atomic(opts.out, csv);
    out << "wrote " << jobs.size() << " rows to " << opts.out << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    err << "runtime failure: " << e.what() << "\n";
    return kExitRuntime;
  }
}

/// Entry point shared by the `dpfb` binary and the CLI tests.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Federated learning with local differential privacy: simulation harness", "dpfb"};
  app.require_subcommand(1);

  RunOptions run_opts;
  auto add_run_flags = [](CLI::App* cmd, RunOptions& o) {
    cmd->add_option("--config", o.config, "Experiment configuration (JSON, comments allowed)")
        ->required();
    cmd->add_option("--set", o.sets, "Override a config value, e.g. privacy.epsilon=2");
    cmd->add_option("--seed", o.seed, "Master seed");
  };
  auto* run = app.add_subcommand("run", "Run one experiment and write JSON-lines metrics");
  add_run_flags(run, run_opts);
  run->add_option("--out", run_opts.out, "Output path for the JSON-lines metrics");

  RunOptions validate_opts;
  auto* validate = app.add_subcommand("validate", "Parse and validate a configuration");
  add_run_flags(validate, validate_opts);

  CalibrateOptions cal;
  auto* calibrate = app.add_subcommand("calibrate", "Print the Gaussian noise scale sigma");
  calibrate->add_option("--clip", cal.clip_norm, "Clip norm C (sensitivity is 2C)");
  calibrate->add_option("--sensitivity", cal.sensitivity, "Sensitivity directly");
  calibrate->add_option("--epsilon", cal.epsilon, "Privacy parameter epsilon")->required();
  calibrate->add_option("--delta", cal.delta, "Privacy parameter delta");
  calibrate->add_option("--mode", cal.mode, "analytic | simple");

  SweepOptions sweep_opts;
  std::string values_text;
  auto* sweep = app.add_subcommand("sweep", "Run a parameter sweep and write a CSV summary");
  sweep->add_option("--config", sweep_opts.config, "Experiment configuration")->required();
  sweep->add_option("--set", sweep_opts.sets, "Override a config value");
  sweep->add_option("--seed", sweep_opts.seed, "Master seed");
  sweep->add_option("--axis", sweep_opts.axis, "epsilon | attack_fraction | rule")->required();
  sweep->add_option("--values", values_text, "Comma-separated values")->required();
  sweep->add_option("--seeds", sweep_opts.seeds, "Seeds per value");
  sweep->add_option("--out", sweep_opts.out, "CSV output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  }

  if (*run) return cmd_run(run_opts, out, err);
  if (*validate) return cmd_validate(validate_opts, out, err);
  if (*calibrate) return cmd_calibrate(cal, out, err);
  std::stringstream ss(values_text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) sweep_opts.values.push_back(item);
  }
  return cmd_sweep(sweep_opts, out, err);
}

}  // namespace dpfedbank
