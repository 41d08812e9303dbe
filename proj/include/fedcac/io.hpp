#pragma once

#include <string>

namespace fedcac {

// Writes `content` to `path` via a temp file in the same directory followed
// by a rename, so readers never observe a partial file. Throws IoError.
void atomic_write_text(const std::string& path, const std::string& content);

}  // namespace fedcac
