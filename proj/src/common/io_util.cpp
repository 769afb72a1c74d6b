#include "fmtk/common/io_util.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "fmtk/common/error.hpp"

namespace fs = std::filesystem;

namespace fmtk {

void write_file_atomic(const std::string& path, const std::string& contents) {
  ensure_parent_dir(path);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(fmt::format("cannot open '{}' for writing", tmp));
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw DataError(fmt::format("short write to '{}'", tmp));
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw DataError(fmt::format("rename '{}' -> '{}': {}", tmp, path, ec.message()));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void ensure_parent_dir(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw DataError(fmt::format("cannot create directory '{}': {}", parent.string(), ec.message()));
}

}  // namespace fmtk
