#pragma once

#include <stdexcept>
#include <string>

namespace stereo {

// Filesystem-level failure (missing path, unreadable file, unwritable output).
// The CLI maps this to exit code 2.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed content in an otherwise readable file (bad magic, truncated
// payload, wrong bit depth). The CLI maps this, like all other domain
// errors, to exit code 1.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace stereo
