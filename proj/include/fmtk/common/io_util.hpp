#pragma once

#include <string>

namespace fmtk {

// Writes to <path>.tmp then renames, so readers never observe a partial file.
void write_file_atomic(const std::string& path, const std::string& contents);

std::string read_file(const std::string& path);

void ensure_parent_dir(const std::string& path);

}  // namespace fmtk
