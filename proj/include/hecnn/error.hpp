// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace hecnn {

enum class ErrorCode {
  invalid_argument,
  singular_system,
  invalid_prime_chain,
  encode_overflow,
  level_mismatch,
  scale_mismatch,
  level_exhausted,
  params_mismatch,
  backend_mismatch,
  not_monic,
  shape_mismatch,
  unknown_layer,
  malformed_payload,
  unfused_batchnorm,
  unfolded_pool,
  not_foldable,
  budget_exceeded,
  io_error,
  bad_format,
};

const char* to_string(ErrorCode code) noexcept;

/// Single exception type for the library; `code()` distinguishes failure classes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace hecnn
