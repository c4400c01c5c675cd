#include "textguard/crypto.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/kdf.h>
#include <openssl/rand.h>
#include <openssl/sha.h>
#include <sodium.h>

#include <memory>

#include "textguard/error.hpp"

namespace textguard {

namespace {

void ensure_sodium() {
  static const bool ready = [] { return sodium_init() >= 0; }();
  if (!ready) throw Error(Errc::CryptoFailure, "libsodium initialisation failed");
}

struct CipherCtxDeleter {
  void operator()(EVP_CIPHER_CTX* ctx) const { EVP_CIPHER_CTX_free(ctx); }
};
struct PkeyCtxDeleter {
  void operator()(EVP_PKEY_CTX* ctx) const { EVP_PKEY_CTX_free(ctx); }
};

}  // namespace

std::string to_hex(ByteView data) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (auto b : data) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0x0f]);
  }
  return out;
}

std::optional<Bytes> from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) return std::nullopt;
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = nibble(hex[2 * i]);
    int lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

namespace crypto {

std::uint64_t Entropy::next_u64() {
  std::array<std::uint8_t, 8> b{};
  fill(b);
  std::uint64_t v = 0;
  for (auto x : b) v = (v << 8) | x;
  return v;
}

void SystemEntropy::fill(std::span<std::uint8_t> out) {
  if (out.empty()) return;
  if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1)
    throw Error(Errc::CryptoFailure, "RAND_bytes failed");
}

SeededEntropy::SeededEntropy(std::uint64_t seed) {
  std::array<std::uint8_t, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(seed >> (56 - 8 * i));
  seed_ = sha256(b);
}

void SeededEntropy::fill(std::span<std::uint8_t> out) {
  for (auto& byte : out) {
    if (block_used_ == block_.size()) {
      std::array<std::uint8_t, 8> ctr{};
      for (int i = 0; i < 8; ++i)
        ctr[i] = static_cast<std::uint8_t>(counter_ >> (56 - 8 * i));
      ++counter_;
      block_ = hmac_sha256(seed_, ctr);
      block_used_ = 0;
    }
    byte = block_[block_used_++];
  }
}

Entropy& system_entropy() {
  static SystemEntropy instance;
  return instance;
}

Key32 sha256(ByteView data) {
  Key32 out{};
  SHA256(data.data(), data.size(), out.data());
  return out;
}

Key32 hmac_sha256(ByteView key, ByteView data) {
  Key32 out{};
  unsigned int len = 0;
  if (!HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), data.data(),
            data.size(), out.data(), &len) ||
      len != out.size())
    throw Error(Errc::CryptoFailure, "HMAC-SHA256 failed");
  return out;
}

Bytes hkdf_sha256(ByteView ikm, ByteView salt, ByteView info, std::size_t length) {
  std::unique_ptr<EVP_PKEY_CTX, PkeyCtxDeleter> ctx(
      EVP_PKEY_CTX_new_id(EVP_PKEY_HKDF, nullptr));
  Bytes out(length);
  std::size_t out_len = length;
  // OpenSSL rejects a null salt pointer even with zero length.
  static const std::uint8_t kEmpty = 0;
  if (!ctx || EVP_PKEY_derive_init(ctx.get()) <= 0 ||
      EVP_PKEY_CTX_set_hkdf_md(ctx.get(), EVP_sha256()) <= 0 ||
      EVP_PKEY_CTX_set1_hkdf_salt(ctx.get(), salt.empty() ? &kEmpty : salt.data(),
                                  static_cast<int>(salt.size())) <= 0 ||
      EVP_PKEY_CTX_set1_hkdf_key(ctx.get(), ikm.data(), static_cast<int>(ikm.size())) <= 0 ||
      EVP_PKEY_CTX_add1_hkdf_info(ctx.get(), info.empty() ? &kEmpty : info.data(),
                                  static_cast<int>(info.size())) <= 0 ||
      EVP_PKEY_derive(ctx.get(), out.data(), &out_len) <= 0 || out_len != length)
    throw Error(Errc::CryptoFailure, "HKDF-SHA256 failed");
  return out;
}

bool equal_ct(ByteView a, ByteView b) {
  if (a.size() != b.size()) return false;
  if (a.empty()) return true;
  return CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0;
}

void wipe(std::span<std::uint8_t> data) {
  if (!data.empty()) OPENSSL_cleanse(data.data(), data.size());
}

DhKeyPair DhKeyPair::generate(Entropy& entropy) {
  return from_private(entropy.key32());
}

DhKeyPair DhKeyPair::from_private(const Key32& private_key) {
  ensure_sodium();
  DhKeyPair kp;
  kp.private_key = private_key;
  crypto_scalarmult_base(kp.public_key.data(), kp.private_key.data());
  return kp;
}

Key32 x25519(const Key32& private_key, const Key32& peer_public) {
  ensure_sodium();
  Key32 shared{};
  if (crypto_scalarmult(shared.data(), private_key.data(), peer_public.data()) != 0)
    throw Error(Errc::CryptoFailure, "X25519 produced a degenerate shared secret");
  return shared;
}

SigningKeyPair SigningKeyPair::from_seed(const Key32& seed) {
  ensure_sodium();
  SigningKeyPair kp;
  kp.seed = seed;
  std::array<std::uint8_t, crypto_sign_SECRETKEYBYTES> sk{};
  crypto_sign_seed_keypair(kp.public_key.data(), sk.data(), seed.data());
  wipe(sk);
  return kp;
}

Signature SigningKeyPair::sign(ByteView message) const {
  ensure_sodium();
  std::array<std::uint8_t, crypto_sign_SECRETKEYBYTES> sk{};
  Key32 pk{};
  crypto_sign_seed_keypair(pk.data(), sk.data(), seed.data());
  Signature sig{};
  crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), sk.data());
  wipe(sk);
  return sig;
}

Key32 SigningKeyPair::dh_private() const {
  ensure_sodium();
  std::array<std::uint8_t, crypto_sign_SECRETKEYBYTES> sk{};
  Key32 pk{};
  crypto_sign_seed_keypair(pk.data(), sk.data(), seed.data());
  Key32 out{};
  crypto_sign_ed25519_sk_to_curve25519(out.data(), sk.data());
  wipe(sk);
  return out;
}

bool ed25519_verify(const Key32& public_key, ByteView message,
                    const Signature& signature) {
  ensure_sodium();
  return crypto_sign_verify_detached(signature.data(), message.data(),
                                     message.size(), public_key.data()) == 0;
}

std::optional<Key32> ed25519_public_to_x25519(const Key32& public_key) {
  ensure_sodium();
  Key32 out{};
  if (crypto_sign_ed25519_pk_to_curve25519(out.data(), public_key.data()) != 0)
    return std::nullopt;
  return out;
}

Bytes aes256gcm_seal(const Key32& key, ByteView nonce, ByteView aad,
                     ByteView plaintext) {
  std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter> ctx(EVP_CIPHER_CTX_new());
  Bytes out(plaintext.size() + 16);
  int len = 0;
  int total = 0;
  if (!ctx ||
      EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr) != 1 ||
      EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN,
                          static_cast<int>(nonce.size()), nullptr) != 1 ||
      EVP_EncryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), nonce.data()) != 1)
    throw Error(Errc::CryptoFailure, "AES-GCM init failed");
  if (!aad.empty() &&
      EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1)
    throw Error(Errc::CryptoFailure, "AES-GCM aad failed");
  if (!plaintext.empty()) {
    if (EVP_EncryptUpdate(ctx.get(), out.data(), &len, plaintext.data(),
                          static_cast<int>(plaintext.size())) != 1)
      throw Error(Errc::CryptoFailure, "AES-GCM encrypt failed");
    total = len;
  }
  if (EVP_EncryptFinal_ex(ctx.get(), out.data() + total, &len) != 1 ||
      EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, 16,
                          out.data() + plaintext.size()) != 1)
    throw Error(Errc::CryptoFailure, "AES-GCM finalise failed");
  return out;
}

std::optional<Bytes> aes256gcm_open(const Key32& key, ByteView nonce,
                                    ByteView aad, ByteView sealed) {
  if (sealed.size() < 16) return std::nullopt;
  const std::size_t body = sealed.size() - 16;
  std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter> ctx(EVP_CIPHER_CTX_new());
  Bytes out(body);
  int len = 0;
  if (!ctx ||
      EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr) != 1 ||
      EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN,
                          static_cast<int>(nonce.size()), nullptr) != 1 ||
      EVP_DecryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), nonce.data()) != 1)
    throw Error(Errc::CryptoFailure, "AES-GCM init failed");
  if (!aad.empty() &&
      EVP_DecryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1)
    return std::nullopt;
  if (body > 0 &&
      EVP_DecryptUpdate(ctx.get(), out.data(), &len, sealed.data(), static_cast<int>(body)) != 1)
    return std::nullopt;
  Block16 tag{};
  std::copy(sealed.end() - 16, sealed.end(), tag.begin());
  if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, 16, tag.data()) != 1)
    return std::nullopt;
  if (EVP_DecryptFinal_ex(ctx.get(), out.data() + body, &len) != 1) {
    wipe(out);
    return std::nullopt;
  }
  return out;
}

}  // namespace crypto
}  // namespace textguard
