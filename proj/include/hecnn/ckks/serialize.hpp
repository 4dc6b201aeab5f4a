// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>

#include "hecnn/ckks/scheme.hpp"

namespace hecnn::ckks {

/// Binary layout, all little-endian:
///   "HECN" | u16 major | u16 minor | u32 object tag | u64 params hash | payload
/// Readers accept any minor version of the same major version.
inline constexpr std::uint16_t kFormatMajor = 1;
inline constexpr std::uint16_t kFormatMinor = 0;

void save(std::ostream& out, const Ciphertext& ct);
void save(std::ostream& out, const SecretKey& sk);
void save(std::ostream& out, const PublicKey& pk);
void save(std::ostream& out, const RelinKey& rlk);

/// Loaders verify the header and that the stored params hash matches ctx.
Ciphertext load_ciphertext(std::istream& in, const CkksContext& ctx);
SecretKey load_secret_key(std::istream& in, const CkksContext& ctx);
PublicKey load_public_key(std::istream& in, const CkksContext& ctx);
RelinKey load_relin_key(std::istream& in, const CkksContext& ctx);

}  // namespace hecnn::ckks
