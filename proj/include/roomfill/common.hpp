#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace roomfill {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Room geometry cannot produce a layout (camera outside, degenerate plan).
struct InvalidRoomError : Error {
  using Error::Error;
};

// A CornerLayout that violates its own invariants for the requested raster.
struct InconsistentLayoutError : Error {
  using Error::Error;
};

struct ShapeError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

// Checkpoint/config disagreement; message carries the field-level diff.
struct CheckpointMismatchError : Error {
  using Error::Error;
};

// Non-finite loss or gradient during optimization.
struct NumericalError : Error {
  using Error::Error;
};

namespace detail {
inline void format_into(std::ostringstream&) {}
template <typename A, typename... Rest>
void format_into(std::ostringstream& os, const A& a, const Rest&... rest) {
  os << a;
  format_into(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string strcat_msg(const Args&... args) {
  std::ostringstream os;
  detail::format_into(os, args...);
  return os.str();
}

}  // namespace roomfill

#define RF_CHECK(cond, Err, ...)                                   \
  do {                                                             \
    if (!(cond)) throw Err(::roomfill::strcat_msg(__VA_ARGS__));   \
  } while (0)

#define RF_CHECK_SHAPE(cond, ...) RF_CHECK(cond, ::roomfill::ShapeError, __VA_ARGS__)
