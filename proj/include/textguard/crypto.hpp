#pragma once

// Thin wrappers over OpenSSL and libsodium. Apart from the keystream pad,
// which drives an OpenSSL OFB context directly, code above this layer speaks
// spans and fixed-size arrays only.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace textguard {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;
using Key32 = std::array<std::uint8_t, 32>;
using Block16 = std::array<std::uint8_t, 16>;
using Signature = std::array<std::uint8_t, 64>;

inline ByteView as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

inline std::string as_string(ByteView b) {
  return {reinterpret_cast<const char*>(b.data()), b.size()};
}

std::string to_hex(ByteView data);
/// Returns nullopt on odd length or a non-hex digit.
std::optional<Bytes> from_hex(std::string_view hex);

template <std::size_t N>
std::optional<std::array<std::uint8_t, N>> array_from(ByteView data) {
  if (data.size() != N) return std::nullopt;
  std::array<std::uint8_t, N> out{};
  std::copy(data.begin(), data.end(), out.begin());
  return out;
}

namespace crypto {

/// Source of key material. Production code uses the OS CSPRNG; tests and the
/// simulator inject a seeded generator so whole conversations replay exactly.
class Entropy {
 public:
  virtual ~Entropy() = default;
  virtual void fill(std::span<std::uint8_t> out) = 0;

  Key32 key32() {
    Key32 k{};
    fill(k);
    return k;
  }
  std::uint64_t next_u64();
};

class SystemEntropy final : public Entropy {
 public:
  void fill(std::span<std::uint8_t> out) override;
};

/// HMAC-SHA256 in counter mode keyed by the seed. Not for production keys.
class SeededEntropy final : public Entropy {
 public:
  explicit SeededEntropy(const Key32& seed) : seed_(seed) {}
  explicit SeededEntropy(std::uint64_t seed);
  void fill(std::span<std::uint8_t> out) override;

 private:
  Key32 seed_;
  std::uint64_t counter_ = 0;
  std::array<std::uint8_t, 32> block_{};
  std::size_t block_used_ = 32;
};

Entropy& system_entropy();

Key32 sha256(ByteView data);
Key32 hmac_sha256(ByteView key, ByteView data);
Bytes hkdf_sha256(ByteView ikm, ByteView salt, ByteView info, std::size_t length);

/// Constant-time equality; false on length mismatch.
bool equal_ct(ByteView a, ByteView b);
void wipe(std::span<std::uint8_t> data);

struct DhKeyPair {
  Key32 private_key{};
  Key32 public_key{};

  static DhKeyPair generate(Entropy& entropy);
  static DhKeyPair from_private(const Key32& private_key);
  friend bool operator==(const DhKeyPair&, const DhKeyPair&) = default;
};

/// X25519. Throws CryptoFailure when the peer point yields an all-zero secret.
Key32 x25519(const Key32& private_key, const Key32& peer_public);

struct SigningKeyPair {
  Key32 seed{};
  Key32 public_key{};

  static SigningKeyPair from_seed(const Key32& seed);
  Signature sign(ByteView message) const;
  /// Montgomery-form private scalar for DH use of the same identity.
  Key32 dh_private() const;
};

bool ed25519_verify(const Key32& public_key, ByteView message,
                    const Signature& signature);
/// Montgomery form of an Ed25519 public key; nullopt if not a valid point.
std::optional<Key32> ed25519_public_to_x25519(const Key32& public_key);

/// AES-256-GCM with a 12-byte nonce; output is ciphertext || 16-byte tag.
Bytes aes256gcm_seal(const Key32& key, ByteView nonce, ByteView aad,
                     ByteView plaintext);
std::optional<Bytes> aes256gcm_open(const Key32& key, ByteView nonce,
                                    ByteView aad, ByteView sealed);

}  // namespace crypto
}  // namespace textguard
