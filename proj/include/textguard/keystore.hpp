#pragma once

// On-disk local state.
//
//   <root>/                 0700
//     store.json            index: format, registration id, contacts
//     identity.key          32-byte identity seed
//     prekeys.json          private signed / one-time prekeys
//     cache.key             32-byte key sealing the plaintext cache
//     sessions/<h>.session  serialized ratchet state, h = hex sha256(contact id)
//     cache/<h>.sealed      sealed plaintext, h = hex sha256(token text)
//     seen.log              hashes of tokens this store decrypted, one per line
//     .lock                 flock target for cross-process writers
//
// All files are 0600 and written atomically. Cached plaintext only exists
// sealed with AES-256-GCM under cache.key.

#include <chrono>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "textguard/crypto.hpp"
#include "textguard/ratchet.hpp"

namespace textguard::store {

inline constexpr int kStoreFormat = 1;
inline constexpr std::size_t kMaxContactIdBytes = 128;
inline constexpr std::size_t kDefaultOneTimePrekeys = 100;

struct ContactRecord {
  std::string contact_id;
  Key32 identity_pub{};
  /// Trust-on-first-use: false until the user verifies out of band.
  bool verified = false;
  /// A different key seen for this contact after first use. Never adopted
  /// without an explicit verify.
  std::optional<Key32> pending_identity;

  friend bool operator==(const ContactRecord&, const ContactRecord&) = default;
};

enum class ContactUpdate { Added, Unchanged, KeyChanged };

/// True for 1..128 bytes of UTF-8 with no control characters.
bool valid_contact_id(std::string_view id);

/// SHA-256 of the full token text, delimiters included.
Key32 token_hash(std::string_view token_text);

class Store {
 public:
  /// Creates a new store. Throws StoreUnavailable if one already exists or the
  /// directory cannot be written. A 32-byte `seed` makes the identity
  /// deterministic.
  static Store init(const std::filesystem::path& root, std::optional<ByteView> seed = std::nullopt,
                    crypto::Entropy& entropy = crypto::system_entropy(),
                    std::size_t one_time_prekeys = kDefaultOneTimePrekeys);
  /// Throws StoreUnavailable (missing) or StoreCorrupt (naming the file).
  static Store open(const std::filesystem::path& root,
                    crypto::Entropy& entropy = crypto::system_entropy());
  static bool exists(const std::filesystem::path& root);

  Store(Store&&) noexcept;
  Store& operator=(Store&&) noexcept;
  ~Store();

  const std::filesystem::path& root() const { return root_; }
  const ratchet::IdentityKeyPair& identity() const { return identity_; }
  std::uint32_t registration_id() const;

  // Prekeys -----------------------------------------------------------------
  ratchet::LocalPreKeys prekeys() const;
  void save_prekeys(const ratchet::LocalPreKeys& prekeys);

  // Contacts ----------------------------------------------------------------
  std::vector<ContactRecord> contacts() const;
  std::optional<ContactRecord> contact(std::string_view id) const;
  /// Finds the contact holding `identity_pub` (current key only).
  std::optional<ContactRecord> contact_by_identity(const Key32& identity_pub) const;
  /// Adds an unknown contact, or flags a changed key. Throws BadRequest for
  /// an invalid id.
  ContactUpdate observe_contact(std::string_view id, const Key32& identity_pub);
  /// Marks verified, adopting a pending key if there is one. Throws
  /// ContactNotFound.
  void verify_contact(std::string_view id);

  // Sessions ----------------------------------------------------------------
  bool has_session(std::string_view contact_id) const;
  /// Throws ContactNotFound if the contact is unknown.
  void save_session(std::string_view contact_id, const ratchet::SessionState& session);
  /// Throws SessionNotFound, or StoreCorrupt naming the file.
  ratchet::SessionState load_session(std::string_view contact_id) const;
  void delete_session(std::string_view contact_id);

  // Plaintext cache -----------------------------------------------------------
  void cache_put(const Key32& hash, std::string_view plaintext);
  /// nullopt when absent; throws CacheCorrupt when the sealed entry fails to
  /// open.
  std::optional<std::string> cache_get(const Key32& hash) const;
  std::size_t cache_size() const;

  // Received-token ledger ---------------------------------------------------
  // Hashes only. Lets a decrypt tell a replay of something already read
  // (keys legitimately gone) from a forged token claiming a used key.
  void mark_seen(const Key32& hash);
  bool was_seen(const Key32& hash) const;

 private:
  Store(std::filesystem::path root, crypto::Entropy& entropy);
  void load_index();
  void write_index() const;
  std::filesystem::path session_path(std::string_view contact_id) const;
  std::filesystem::path cache_path(const Key32& hash) const;

  std::filesystem::path root_;
  crypto::Entropy* entropy_;
  ratchet::IdentityKeyPair identity_;
  Key32 cache_key_{};
  std::uint32_t registration_id_ = 0;
  std::vector<ContactRecord> contacts_;
  mutable std::unique_ptr<std::mutex> mutex_;
};

}  // namespace textguard::store
