#pragma once

// Position-indexed keystream pad over AES-128-OFB.
//
// OpenSSL exposes no way to read the OFB keystream, so the pad is obtained by
// pushing blocks of zeros through an OFB context: 0 XOR keystream is the
// keystream. Each extension continues the same context, so the pad is always
// the exact OFB keystream prefix for (cipher_key, iv).
//
// Plaintext here is bytes; a "character" is one byte of UTF-8.

#include <cstdint>
#include <memory>
#include <optional>

#include "textguard/crypto.hpp"
#include "textguard/ratchet.hpp"

namespace textguard::stream {

inline constexpr std::size_t kBlockSize = 16;
/// Extend once fewer than this many pad bytes are left unbound (16 bits).
inline constexpr std::size_t kLowWaterBytes = 2;
inline constexpr std::size_t kMacSize = 8;

using ratchet::MessageKeys;
using Mac = std::array<std::uint8_t, kMacSize>;

class KeystreamPad {
 public:
  /// Holds one block of keystream, nothing consumed.
  explicit KeystreamPad(const MessageKeys& keys);
  ~KeystreamPad();
  KeystreamPad(KeystreamPad&&) noexcept;
  KeystreamPad& operator=(KeystreamPad&&) noexcept;
  KeystreamPad(const KeystreamPad&) = delete;
  KeystreamPad& operator=(const KeystreamPad&) = delete;

  /// Appends exactly one block of continued keystream.
  void extend();
  /// Extends until byte `index` exists and the low-water rule holds for it.
  void reserve_through(std::size_t index);

  ByteView bytes() const { return pad_; }
  std::size_t size() const { return pad_.size(); }
  std::uint8_t operator[](std::size_t i) const { return pad_[i]; }

  std::size_t consumed() const { return consumed_; }
  /// Records that positions [0, n) are bound to plaintext.
  void set_consumed(std::size_t n);

  /// Zeroes the pad and releases the cipher context.
  void wipe();

 private:
  struct Context;
  std::unique_ptr<Context> ctx_;
  Bytes pad_;
  std::size_t consumed_ = 0;
};

inline KeystreamPad pad_init(const MessageKeys& keys) { return KeystreamPad(keys); }
inline void pad_extend(KeystreamPad& pad) { pad.extend(); }

enum class EditKind { Replace, Insert, Delete };

struct ComposeBuffer {
  Bytes plaintext;
  Bytes ciphertext;
  /// Lowest index whose ciphertext needs re-emission.
  std::size_t dirty_from = 0;
  /// Any change since the last mark_clean(), including pure truncation.
  bool changed = false;

  std::size_t size() const { return plaintext.size(); }
  void mark_clean() {
    dirty_from = ciphertext.size();
    changed = false;
  }
  void wipe();
};

void encrypt_append(ComposeBuffer& buf, KeystreamPad& pad, std::uint8_t byte);

/// Replace and Insert need `byte`. Throws BadIndex for positions outside the
/// buffer (Insert accepts index == size).
void edit(ComposeBuffer& buf, KeystreamPad& pad, std::size_t index, EditKind kind,
          std::optional<std::uint8_t> byte = std::nullopt);

/// Whole-message AES-128-OFB through a fresh context.
Bytes one_shot_encrypt(const MessageKeys& keys, ByteView plaintext);
Bytes decrypt(const MessageKeys& keys, ByteView ciphertext);

Mac seal_mac(const MessageKeys& keys, ByteView header_bytes, ByteView ciphertext);
bool verify_mac(const MessageKeys& keys, ByteView header_bytes, ByteView ciphertext,
                ByteView mac);

}  // namespace textguard::stream
