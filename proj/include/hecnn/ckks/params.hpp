// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "hecnn/ckks/modarith.hpp"

namespace hecnn::ckks {

enum class SecurityProfile { paper, test_insecure };

std::string_view to_string(SecurityProfile profile) noexcept;

/// Ring and modulus-chain parameters. modulus_chain[0] is the base prime that survives
/// to level 0; each further prime is consumed by one rescale. The special prime is used
/// only during key switching and encryption and is not part of log Q.
struct CkksParams {
  std::string name;
  std::size_t ring_degree = 0;
  std::vector<u64> modulus_chain;
  u64 special_prime = 0;
  int scale_bits = 30;
  SecurityProfile security_profile = SecurityProfile::paper;

  int level() const noexcept { return static_cast<int>(modulus_chain.size()) - 1; }
  std::size_t slot_count() const noexcept { return ring_degree / 2; }
  double scale() const noexcept;
  /// log2 of the product of the chain primes.
  double log_q() const noexcept;
  /// FNV-1a over the ring degree, scale and every prime; stamped into serialized objects.
  u64 hash() const noexcept;

  /// Throws invalid_prime_chain for non-prime or non-NTT-friendly moduli, duplicates,
  /// or a special prime smaller than some chain prime.
  void validate() const;
};

/// Base prime of `base_bits`, `level` primes near 2^scale_bits (alternating above/below so
/// that rescaled scales stay close to 2^scale_bits), and one special prime.
CkksParams make_params(std::string name, std::size_t ring_degree, int base_bits, int level, int scale_bits,
                       int special_bits, SecurityProfile profile);

struct PresetInfo {
  std::string_view name;
  int level;
  int log_q;
};

/// Parameter presets: mnist-baseline (L=5, log Q 200), mnist-deg4 (L=7, 260),
/// cifar-baseline (L=8, 290), cifar-deg4 (L=11, 380). N = 2^14 and scale 2^30 for the paper
/// profile; the test-insecure profile keeps the chain layout at N = 2^13.
const std::vector<PresetInfo>& preset_table();
CkksParams preset(std::string_view name, SecurityProfile profile = SecurityProfile::paper);

}  // namespace hecnn::ckks
