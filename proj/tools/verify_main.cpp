// SPDX-License-Identifier: Apache-2.0
//
// unipatch-verify: runs every property suite with the stated tolerances.
// Per-suite counts go to stderr, the summary JSON to stdout; exits nonzero on
// any failed check.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "unipatch/verify.hpp"

int main(int argc, char** argv) {
  CLI::App app{"property suites, brute-force oracles, and gradient checks"};
  std::uint64_t seed = 0;
  std::string suite;
  app.add_option("--seed", seed, "master seed; suites derive their own streams")
      ->capture_default_str();
  app.add_option("--suite", suite, "run a single suite by name");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return 0;
    std::cerr << e.what() << "\n";
    return static_cast<int>(unipatch::ExitCode::Config);
  }

  try {
    const std::optional<std::string> only =
        suite.empty() ? std::nullopt : std::optional<std::string>(suite);
    const unipatch::VerifySummary summary = unipatch::run_all(seed, only);
    for (const auto& s : summary.suites) {
      std::fprintf(stderr, "%-10s %2zu properties  %7ld checks  %4ld failures  (%.0f ms)\n",
                   s.name.c_str(), s.properties.size(), s.checks(), s.failures(), s.ms);
      for (const auto& p : s.properties)
        if (p.failures > 0)
          std::fprintf(stderr, "  FAILED %s: %ld of %ld checks\n", p.name.c_str(), p.failures,
                       p.checks);
    }
    std::cout << summary.to_json().dump(2) << "\n";
    return summary.failures() == 0 ? static_cast<int>(unipatch::ExitCode::Ok) : 1;
  } catch (const unipatch::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return static_cast<int>(unipatch::ExitCode::Config);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return static_cast<int>(unipatch::ExitCode::Internal);
  }
}
