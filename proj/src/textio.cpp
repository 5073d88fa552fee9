#include "tndve/textio.hpp"

#include <unistd.h>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tndve/error.hpp"

namespace tndve {

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string format_fixed(double v, int significant) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", significant, v);
  return buf;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

std::filesystem::path temp_sibling(const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  return tmp;
}

void write_plain(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  out.close();
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = temp_sibling(path);
  write_plain(tmp, content);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move output into place: " + path.string());
  }
}

StagedOutputs::~StagedOutputs() {
  if (committed_) return;
  for (const auto& e : entries_) {
    std::error_code ec;
    std::filesystem::remove(e.temp, ec);
  }
}

void StagedOutputs::stage(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string());
  }
  Entry e{path, temp_sibling(path)};
  write_plain(e.temp, content);
  entries_.push_back(std::move(e));
}

void StagedOutputs::commit() {
  for (const auto& e : entries_) {
    std::error_code ec;
    std::filesystem::rename(e.temp, e.target, ec);
    if (ec) throw IoError("cannot move output into place: " + e.target.string());
  }
  committed_ = true;
}

std::vector<std::filesystem::path> StagedOutputs::paths() const {
  std::vector<std::filesystem::path> out;
  for (const auto& e : entries_) out.push_back(e.target);
  return out;
}

}  // namespace tndve
