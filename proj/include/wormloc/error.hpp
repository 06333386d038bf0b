#pragma once

#include <stdexcept>
#include <string>

namespace wormloc {

enum class Errc {
  invalid_argument,
  io,
  format,
  bad_magic,
  unknown_version,
  shape_mismatch,
  corrupt_file,
  empty_mask,
  numeric,
};

const char* errc_name(Errc code) noexcept;

// All failures raised by the library carry one of the codes above so the C
// boundary can translate them without string matching.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(Errc::invalid_argument, what);
}

}  // namespace wormloc
