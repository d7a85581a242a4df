#pragma once

#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace bnp::cli {

/// A subcommand with every option resolved: defaults <- config file <- flags.
struct RunConfig {
  std::string command;
  std::map<std::string, std::string> options;

  const std::string& at(const std::string& key) const;
  long long integer(const std::string& key) const;
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;
};

/// Thrown by parse_args for --help; `text` is the option table.
struct HelpRequested {
  std::string text;
};

/// Throws std::invalid_argument for unknown flags or keys, type errors and
/// invalid combinations.
RunConfig parse_args(const std::vector<std::string>& args);

/// Executes a resolved config. Returns 0 on success and 1 on any error, with
/// a diagnostic on `err`.
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

/// argv entry point: parse, run, map errors to exit codes (2 for usage errors).
int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bnp::cli
