#pragma once

// Double Ratchet sessions with a simplified X3DH start.
//
// KDF choices follow the published Double Ratchet algorithm: X25519 for every
// DH, HKDF-SHA256 for the root chain, HMAC-SHA256 for the symmetric chains
// (0x01 -> message key, 0x02 -> next chain key).
//
// Receiving is two-phase: keys_for_header() computes on a copy of the session
// and returns the successor state; confirm_decrypted() adopts it once the MAC
// has been verified. A forged or corrupted header can therefore never advance
// or damage the stored session.

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <utility>

#include "textguard/crypto.hpp"

namespace textguard::ratchet {

inline constexpr std::uint8_t kMessageVersion = 0x33;
inline constexpr std::size_t kMaxSkippedKeys = 1024;
/// Remote ratchet keys remembered after retirement, so replays on old chains
/// report KeyErased instead of being mistaken for a new ratchet turn.
inline constexpr std::size_t kRetiredRemoteKeys = 64;

struct IdentityKeyPair {
  Key32 private_key{};  // Ed25519 seed
  Key32 public_key{};   // Ed25519 point

  Signature sign(ByteView message) const;
  Key32 dh_private() const;
};

/// Deterministic for a given 32-byte seed. Throws InvalidSeed otherwise.
IdentityKeyPair generate_identity(ByteView seed);
IdentityKeyPair generate_identity(crypto::Entropy& entropy = crypto::system_entropy());

struct OneTimePreKey {
  std::uint32_t id = 0;
  Key32 public_key{};
  friend bool operator==(const OneTimePreKey&, const OneTimePreKey&) = default;
};

struct PreKeyBundle {
  Key32 identity_pub{};
  std::uint32_t signed_prekey_id = 0;
  Key32 signed_prekey_pub{};
  Signature prekey_signature{};
  std::optional<OneTimePreKey> one_time_prekey;
  std::uint32_t registration_id = 0;

  bool signature_valid() const;
  friend bool operator==(const PreKeyBundle&, const PreKeyBundle&) = default;
};

/// The private half of what a user publishes to the directory.
struct LocalPreKeys {
  std::uint32_t registration_id = 0;
  std::uint32_t signed_prekey_id = 0;
  crypto::DhKeyPair signed_prekey;
  Signature signed_prekey_signature{};
  std::map<std::uint32_t, crypto::DhKeyPair> one_time;
  std::uint32_t next_one_time_id = 1;

  static LocalPreKeys generate(const IdentityKeyPair& identity,
                               std::size_t one_time_count,
                               crypto::Entropy& entropy);
  /// Appends fresh one-time prekeys and returns their public halves.
  std::vector<OneTimePreKey> add_one_time(std::size_t count, crypto::Entropy& entropy);
  /// Bundle without a one-time prekey; the directory attaches one per fetch.
  PreKeyBundle bundle(const IdentityKeyPair& identity) const;
  std::vector<OneTimePreKey> one_time_publics() const;
};

struct HandshakeHeader {
  Key32 identity_pub{};
  Key32 ephemeral_pub{};
  std::uint32_t signed_prekey_id = 0;
  std::optional<std::uint32_t> one_time_prekey_id;
  friend bool operator==(const HandshakeHeader&, const HandshakeHeader&) = default;
};

struct MessageKeys {
  Block16 cipher_key{};
  Key32 mac_key{};
  Block16 iv{};
  std::uint32_t counter = 0;

  MessageKeys() = default;
  MessageKeys(const MessageKeys&) = default;
  MessageKeys& operator=(const MessageKeys&) = default;
  ~MessageKeys() { wipe(); }
  void wipe();

  /// Derives the key bundle for one message from an HMAC chain output.
  static MessageKeys derive(const Key32& message_key_seed, std::uint32_t counter);
  friend bool operator==(const MessageKeys&, const MessageKeys&) = default;
};

/// The header fields a message needs to locate its keys on the receiver.
struct HeaderFields {
  Key32 ratchet_pub{};
  std::uint32_t counter = 0;
  std::uint32_t previous_counter = 0;
  friend bool operator==(const HeaderFields&, const HeaderFields&) = default;
};

struct SkippedKeyId {
  Key32 ratchet_pub{};
  std::uint32_t counter = 0;
  friend auto operator<=>(const SkippedKeyId&, const SkippedKeyId&) = default;
};

struct SessionState {
  Key32 root_key{};
  std::optional<Key32> send_chain_key;
  std::optional<Key32> recv_chain_key;
  crypto::DhKeyPair ratchet_keypair;
  std::optional<Key32> remote_ratchet_pub;
  std::uint32_t send_count = 0;      // Ns
  std::uint32_t recv_count = 0;      // Nr
  std::uint32_t previous_count = 0;  // PN
  std::map<SkippedKeyId, MessageKeys> skipped_keys;
  std::deque<Key32> retired_remote;

  Key32 remote_identity{};
  /// Ephemeral key of the handshake that created this session (either side).
  Key32 handshake_base{};
  /// Set on the initiator until the first reply arrives; attached to every
  /// outgoing message so the responder can build its side of the session.
  std::optional<HandshakeHeader> pending_handshake;

  friend bool operator==(const SessionState&, const SessionState&) = default;
};

struct SenderInit {
  SessionState session;
  HandshakeHeader handshake;
};

/// Initiator side. Throws BundleRejected if the signed prekey signature fails.
SenderInit session_init_sender(const IdentityKeyPair& local, const PreKeyBundle& remote,
                               crypto::Entropy& entropy = crypto::system_entropy());

/// Responder side. Deletes the consumed one-time prekey from `prekeys`.
/// Throws PrekeyMissing when the referenced prekey is not held locally.
SessionState session_init_receiver(const IdentityKeyPair& local, LocalPreKeys& prekeys,
                                   const HandshakeHeader& header);

/// Draws the next message keys on the sending chain; Ns advances by one.
std::pair<MessageKeys, HeaderFields> next_sending_keys(SessionState& session);

struct ReceivedKeys {
  MessageKeys keys;
  SessionState successor;
};

/// Locates (or derives, ratcheting as needed) the keys for `header` without
/// touching `session`. Throws KeyErased or TooManySkipped.
ReceivedKeys keys_for_header(const SessionState& session, const HeaderFields& header,
                             crypto::Entropy& entropy = crypto::system_entropy());

/// Adopts the successor state; the used message key is gone from it.
void confirm_decrypted(SessionState& session, ReceivedKeys&& received);

Bytes serialize_session(const SessionState& session);
/// Throws StoreCorrupt on truncated or malformed input.
SessionState deserialize_session(ByteView data);

}  // namespace textguard::ratchet
