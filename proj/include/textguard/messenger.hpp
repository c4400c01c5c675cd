#pragma once

// Session bookkeeping shared by the interceptor and the command line: opening
// sessions through the directory, sealing tokens, and the receive path.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "textguard/directory.hpp"
#include "textguard/error.hpp"
#include "textguard/keystore.hpp"
#include "textguard/ratchet.hpp"
#include "textguard/token_codec.hpp"

namespace textguard {

struct MessengerOptions {
  /// Also cache plaintext on the receiving side after a successful decrypt.
  bool cache_on_receive = true;
  /// One-time prekeys kept published.
  std::size_t one_time_target = 20;
};

struct OutgoingMessage {
  std::string contact_id;
  ratchet::MessageKeys keys;
  ratchet::HeaderFields fields;
  std::optional<ratchet::HandshakeHeader> handshake;

  codec::MetadataHeader header(std::size_t ciphertext_length) const;
  void wipe() { keys.wipe(); }
};

enum class DecryptStatus { Displayed, IntegrityWarning, Unrecoverable };
std::string_view to_string(DecryptStatus status);

struct DecryptResult {
  DecryptStatus status = DecryptStatus::IntegrityWarning;
  std::string plaintext;  // only for Displayed
  std::string sender;     // contact id when known
  bool from_cache = false;
  std::optional<Errc> code;
  std::string detail;
};

class Messenger {
 public:
  Messenger(store::Store& store, directory::DirectoryClient* directory,
            crypto::Entropy& entropy = crypto::system_entropy(), MessengerOptions options = {});

  store::Store& store() { return store_; }
  const MessengerOptions& options() const { return options_; }
  void set_directory(directory::DirectoryClient* directory) { directory_ = directory; }

  /// Registers this store's bundle under `user_id`, topping up one-time
  /// prekeys first. Throws DirectoryUnavailable without a directory.
  directory::RegisterResult publish(const std::string& user_id);

  /// Fetches `contact_id`'s bundle and pins its identity (trust on first
  /// use). Creates a session from the fetched bundle when none exists.
  store::ContactUpdate add_contact(const std::string& contact_id);

  /// Draws keys for one message to `contact_id`, creating the session via the
  /// directory when needed. The advanced session is saved before returning.
  /// Throws ContactNotFound, DirectoryUnavailable, BundleRejected.
  OutgoingMessage begin_outgoing(const std::string& contact_id);

  codec::WireToken seal(const OutgoingMessage& message, ByteView ciphertext) const;
  /// Sender-side plaintext cache entry for a finished token.
  void remember_sent(const codec::WireToken& token, std::string_view plaintext);

  /// Whole-message encryption (the compose flow, and the command line).
  codec::WireToken encrypt_message(const std::string& contact_id, std::string_view plaintext);

  /// Decrypts one token. Never throws for bad input: problems come back as
  /// IntegrityWarning or Unrecoverable. Store failures still throw.
  DecryptResult open(const codec::WireToken& token, const std::optional<std::string>& sender_hint = std::nullopt);

  /// Scans free text and opens every candidate in order. Throws
  /// NothingToDecrypt when the selection holds no token at all.
  std::vector<DecryptResult> open_selection(std::string_view selection,
                                            const std::optional<std::string>& sender_hint = std::nullopt);

 private:
  ratchet::SessionState start_session(const std::string& contact_id);

  store::Store& store_;
  directory::DirectoryClient* directory_;
  crypto::Entropy& entropy_;
  MessengerOptions options_;
};

}  // namespace textguard
