#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "autokg_tools/config.hpp"

namespace autokg::cli {

enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitUsage = 2 };

struct BuildCommand {
  std::filesystem::path config;
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::uint64_t> seed;
};

struct QueryCommand {
  std::filesystem::path config;  // empty: defaults
  std::filesystem::path kg;
  std::string query;
  std::string search_mode = "hybrid";
  std::string output = "text";  // text | json
  bool dry_run = false;
};

struct BenchCommand {
  std::filesystem::path config;
  std::filesystem::path kg;  // ignored with synthetic_blocks
  int repetitions = 100;
  int vector_count = 30;
  int synthetic_blocks = 0;
  int synthetic_keywords = 300;
  std::uint64_t seed = 0;
};

struct ExportCommand {
  std::filesystem::path config;
  std::filesystem::path kg;
  std::string query;  // empty: whole keyword graph
  std::string format = "dot";
  std::filesystem::path out;  // empty: stdout
};

struct InspectCommand {
  std::filesystem::path path;
};

// Each returns the process exit code. Errors propagate as exceptions.
int cmd_build(const BuildCommand& cmd, std::ostream& out);
int cmd_query(const QueryCommand& cmd, std::ostream& out);
int cmd_bench(const BenchCommand& cmd, std::ostream& out);
int cmd_export(const ExportCommand& cmd, std::ostream& out);
int cmd_inspect(const InspectCommand& cmd, std::ostream& out);

// Maps an exception from a command to an exit code and prints it.
int report_failure(const std::exception& e, std::ostream& err);

// Full command line entry point.
int run_cli(int argc, char** argv);

}  // namespace autokg::cli
