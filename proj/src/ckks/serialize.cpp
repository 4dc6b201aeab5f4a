// SPDX-License-Identifier: Apache-2.0
#include "hecnn/ckks/serialize.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

#include "hecnn/error.hpp"

namespace hecnn::ckks {

namespace {

enum class Tag : std::uint32_t { ciphertext = 1, secret_key = 2, public_key = 3, relin_key = 4 };

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw Error(ErrorCode::bad_format, "truncated stream");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

void put_header(std::ostream& out, Tag tag, u64 hash) {
  out.write("HECN", 4);
  put<std::uint16_t>(out, kFormatMajor);
  put<std::uint16_t>(out, kFormatMinor);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tag));
  put<u64>(out, hash);
}

void get_header(std::istream& in, Tag tag, const CkksContext& ctx) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "HECN", 4) != 0) throw Error(ErrorCode::bad_format, "bad magic");
  if (get<std::uint16_t>(in) != kFormatMajor) throw Error(ErrorCode::bad_format, "unsupported major version");
  get<std::uint16_t>(in);
  if (get<std::uint32_t>(in) != static_cast<std::uint32_t>(tag)) throw Error(ErrorCode::bad_format, "wrong object tag");
  if (get<u64>(in) != ctx.params().hash()) throw Error(ErrorCode::params_mismatch, "object made under other params");
}

void put_poly(std::ostream& out, const RnsPoly& p) {
  put<u64>(out, p.n);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(p.chain_count));
  put<std::uint8_t>(out, p.with_special ? 1 : 0);
  for (u64 v : p.data) put<u64>(out, v);
}

RnsPoly get_poly(std::istream& in, const CkksContext& ctx) {
  const u64 n = get<u64>(in);
  const auto chain = get<std::uint32_t>(in);
  const bool special = get<std::uint8_t>(in) != 0;
  if (n != ctx.degree() || chain > ctx.params().modulus_chain.size()) {
    throw Error(ErrorCode::bad_format, "polynomial shape does not match parameters");
  }
  RnsPoly p(n, chain, special);
  for (std::size_t i = 0; i < p.residues(); ++i) {
    const u64 q = ctx.modulus_of(p, i).value();
    for (auto& v : p.residue(i)) {
      v = get<u64>(in);
      if (v >= q) throw Error(ErrorCode::bad_format, "residue out of range");
    }
  }
  return p;
}

}  // namespace

void save(std::ostream& out, const Ciphertext& ct) {
  put_header(out, Tag::ciphertext, ct.params_hash);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ct.parts.size()));
  put<double>(out, ct.scale);
  put<std::int32_t>(out, ct.level);
  for (const auto& p : ct.parts) put_poly(out, p);
}

void save(std::ostream& out, const SecretKey& sk) {
  put_header(out, Tag::secret_key, sk.params_hash);
  put_poly(out, sk.s);
}

void save(std::ostream& out, const PublicKey& pk) {
  put_header(out, Tag::public_key, pk.params_hash);
  put_poly(out, pk.b);
  put_poly(out, pk.a);
}

void save(std::ostream& out, const RelinKey& rlk) {
  put_header(out, Tag::relin_key, rlk.params_hash);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(rlk.b.size()));
  for (std::size_t i = 0; i < rlk.b.size(); ++i) {
    put_poly(out, rlk.b[i]);
    put_poly(out, rlk.a[i]);
  }
}

Ciphertext load_ciphertext(std::istream& in, const CkksContext& ctx) {
  get_header(in, Tag::ciphertext, ctx);
  Ciphertext ct;
  const auto parts = get<std::uint32_t>(in);
  if (parts < 2 || parts > 3) throw Error(ErrorCode::bad_format, "ciphertext must have 2 or 3 parts");
  ct.scale = get<double>(in);
  ct.level = get<std::int32_t>(in);
  if (ct.level < 0 || ct.level > ctx.top_level() || !(ct.scale > 0.0)) {
    throw Error(ErrorCode::bad_format, "ciphertext level or scale out of range");
  }
  for (std::uint32_t i = 0; i < parts; ++i) {
    ct.parts.push_back(get_poly(in, ctx));
    if (ct.parts.back().chain_count != static_cast<std::size_t>(ct.level) + 1 || ct.parts.back().with_special) {
      throw Error(ErrorCode::bad_format, "ciphertext part does not match its level");
    }
  }
  ct.params_hash = ctx.params().hash();
  return ct;
}

SecretKey load_secret_key(std::istream& in, const CkksContext& ctx) {
  get_header(in, Tag::secret_key, ctx);
  return SecretKey{get_poly(in, ctx), ctx.params().hash()};
}

PublicKey load_public_key(std::istream& in, const CkksContext& ctx) {
  get_header(in, Tag::public_key, ctx);
  PublicKey pk;
  pk.b = get_poly(in, ctx);
  pk.a = get_poly(in, ctx);
  pk.params_hash = ctx.params().hash();
  return pk;
}

RelinKey load_relin_key(std::istream& in, const CkksContext& ctx) {
  get_header(in, Tag::relin_key, ctx);
  RelinKey rlk;
  const auto count = get<std::uint32_t>(in);
  if (count != ctx.params().modulus_chain.size()) throw Error(ErrorCode::bad_format, "relin key count mismatch");
  for (std::uint32_t i = 0; i < count; ++i) {
    rlk.b.push_back(get_poly(in, ctx));
    rlk.a.push_back(get_poly(in, ctx));
  }
  rlk.params_hash = ctx.params().hash();
  return rlk;
}

}  // namespace hecnn::ckks
