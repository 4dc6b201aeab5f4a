// SPDX-License-Identifier: Apache-2.0
#include "hecnn/error.hpp"

namespace hecnn {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::singular_system: return "singular system";
    case ErrorCode::invalid_prime_chain: return "invalid prime chain";
    case ErrorCode::encode_overflow: return "encode overflow";
    case ErrorCode::level_mismatch: return "level mismatch";
    case ErrorCode::scale_mismatch: return "scale mismatch";
    case ErrorCode::level_exhausted: return "level exhausted";
    case ErrorCode::params_mismatch: return "params mismatch";
    case ErrorCode::backend_mismatch: return "backend mismatch";
    case ErrorCode::not_monic: return "polynomial not monic";
    case ErrorCode::shape_mismatch: return "shape mismatch";
    case ErrorCode::unknown_layer: return "unknown layer";
    case ErrorCode::malformed_payload: return "malformed payload";
    case ErrorCode::unfused_batchnorm: return "unfused batch normalization";
    case ErrorCode::unfolded_pool: return "unfolded average pooling";
    case ErrorCode::not_foldable: return "not foldable";
    case ErrorCode::budget_exceeded: return "level budget exceeded";
    case ErrorCode::io_error: return "i/o error";
    case ErrorCode::bad_format: return "bad format";
  }
  return "unknown error";
}

}  // namespace hecnn
