#pragma once

#include <stdexcept>
#include <string>

namespace mlasdi {

// Failure categories surfaced by the library. The CLI maps these onto exit
// codes (config -> 2, numeric -> 3, io -> 4).
enum class Errc {
  dimension_mismatch,
  rank_deficient,
  not_positive_definite,
  invalid_argument,
  invalid_grid,
  invalid_tensor,
  format_error,
  shape_error,
  non_uniform_time_grid,
  io_error,
  non_finite_loss,
  too_few_timesteps,
  non_finite_state,
  zero_norm_slice,
  no_samples,
  unknown_export,
  config_error,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, Errc code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace mlasdi
