// Copyright 2026 The speclab Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "speclab/commands.hpp"

namespace {

struct CliArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string method;
  bool has_seed = false;
  uint64_t seed = 0;
  std::string out_dir;
  int threads = -1;
};

void add_common_flags(CLI::App* cmd, CliArgs& args) {
  cmd->add_option("--config", args.config_path, "Experiment config file (JSON)");
  cmd->add_option("--seed", args.seed, "Master seed (overrides config key `seed`)")
      ->each([&](const std::string&) { args.has_seed = true; });
  cmd->add_option("--out", args.out_dir, "Output directory (overrides `out_dir`)");
  cmd->add_option("--threads", args.threads, "Worker threads, 0 = OpenMP default");
  cmd->add_option("--method", args.method,
                  "Restrict to one verifier: nss, naive, spectr, specinfer, bv");
  cmd->add_option("--grid", args.overrides,
                  "Config override as key=value (dotted path, JSON value); repeatable")
      ->take_all();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"speclab: multi-path speculative decoding verification lab"};
  app.require_subcommand(1);

  CliArgs args;
  int (*command)(const speclab::ExperimentConfig&) = nullptr;

  struct SubSpec {
    const char* name;
    const char* help;
    int (*fn)(const speclab::ExperimentConfig&);
  };
  const std::vector<SubSpec> subs = {
      {"lossless", "Exact-enumeration and Monte-Carlo losslessness suites", speclab::cmd_lossless},
      {"bench", "Block-efficiency / TPS sweep over the action grid", speclab::cmd_bench},
      {"profile", "Per-depth divergence and acceptance profile", speclab::cmd_profile},
      {"trace", "Generate an offline trace dataset for the selector", speclab::cmd_trace},
      {"train", "Train the delay-and-branch selector on a trace dataset", speclab::cmd_train},
      {"eval", "Evaluate a trained selector against baselines", speclab::cmd_eval},
  };
  for (const SubSpec& s : subs) {
    CLI::App* cmd = app.add_subcommand(s.name, s.help);
    add_common_flags(cmd, args);
    cmd->callback([&command, &s]() { command = s.fn; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // usage error
  }

  std::vector<std::string> overrides = args.overrides;
  if (args.has_seed) overrides.push_back("seed=" + std::to_string(args.seed));
  if (!args.out_dir.empty()) overrides.push_back("out_dir=" + args.out_dir);
  if (args.threads >= 0) overrides.push_back("threads=" + std::to_string(args.threads));
  if (!args.method.empty()) overrides.push_back("methods=[\"" + args.method + "\"]");

  try {
    const speclab::ExperimentConfig config = speclab::load_config(args.config_path, overrides);
    return command(config);
  } catch (const speclab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
