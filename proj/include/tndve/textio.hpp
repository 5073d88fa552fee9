#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace tndve {

/// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);

/// Fixed-precision formatting used by summary tables ("%.*g").
std::string format_fixed(double v, int significant = 10);

std::string read_file(const std::filesystem::path& path);

/// Writes `content` to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// Collects several outputs and publishes them together: every file is first
/// written to a temporary sibling, and only commit() renames them into place.
/// Uncommitted temporaries are removed on destruction.
class StagedOutputs {
 public:
  StagedOutputs() = default;
  StagedOutputs(const StagedOutputs&) = delete;
  StagedOutputs& operator=(const StagedOutputs&) = delete;
  ~StagedOutputs();

  void stage(const std::filesystem::path& path, const std::string& content);
  void commit();

  std::vector<std::filesystem::path> paths() const;

 private:
  struct Entry {
    std::filesystem::path target;
    std::filesystem::path temp;
  };
  std::vector<Entry> entries_;
  bool committed_ = false;
};

}  // namespace tndve
