#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>

namespace bnp {

/// Six significant digits, the precision of every CSV this library writes.
std::string fmt6(double v);

/// Writes through a temporary sibling file and renames it into place, so the
/// destination is either untouched or complete. The temporary is removed if
/// `write` throws.
void write_atomically(const std::filesystem::path& path, const std::function<void(std::ostream&)>& write,
                      bool binary = false);

}  // namespace bnp
