#pragma once

// Command-line front end. `run_cli` is the whole program minus process exit,
// so tests can drive it in-process.
//
// Exit codes: 0 success, 2 schema/config/io/precondition/domain,
// 3 identifiability, 4 convergence, 5 degenerate data, 1 anything else.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace tndve {

struct RunManifest {
  std::string command;
  std::vector<std::string> arguments;
  std::string config_hash;  // 16 hex digits of FNV-1a over the canonical effective config
  std::uint64_t seed = 0;
  std::string tool_version;
  std::string started_at;  // UTC, ISO 8601
  std::string finished_at;
  std::vector<std::string> outputs;

  nlohmann::json to_json() const;
};

std::string tool_version();

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tndve
