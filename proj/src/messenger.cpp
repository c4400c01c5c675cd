#include "textguard/messenger.hpp"

#include <algorithm>

#include "textguard/stream_cipher.hpp"

namespace textguard {

namespace {

bool owns_chain(const ratchet::SessionState& s, const Key32& ratchet_pub) {
  if (s.remote_ratchet_pub == ratchet_pub) return true;
  if (std::find(s.retired_remote.begin(), s.retired_remote.end(), ratchet_pub) != s.retired_remote.end())
    return true;
  return std::any_of(s.skipped_keys.begin(), s.skipped_keys.end(),
                     [&](const auto& kv) { return kv.first.ratchet_pub == ratchet_pub; });
}

struct Candidate {
  std::string contact_id;
  ratchet::SessionState session;
  std::optional<ratchet::LocalPreKeys> consumed_prekeys;  // set for a new inbound session
  std::optional<Key32> new_contact_identity;
};

DecryptResult warning(Errc code, std::string detail) {
  DecryptResult r;
  r.status = DecryptStatus::IntegrityWarning;
  r.code = code;
  r.detail = std::move(detail);
  return r;
}

}  // namespace

std::string_view to_string(DecryptStatus status) {
  switch (status) {
    case DecryptStatus::Displayed: return "displayed";
    case DecryptStatus::IntegrityWarning: return "integrity_warning";
    case DecryptStatus::Unrecoverable: return "unrecoverable";
  }
  return "unknown";
}

codec::MetadataHeader OutgoingMessage::header(std::size_t ciphertext_length) const {
  codec::MetadataHeader h;
  h.ratchet_pub = fields.ratchet_pub;
  h.counter = fields.counter;
  h.previous_counter = fields.previous_counter;
  h.ciphertext_length = static_cast<std::uint32_t>(ciphertext_length);
  h.handshake = handshake;
  return h;
}

Messenger::Messenger(store::Store& store, directory::DirectoryClient* directory, crypto::Entropy& entropy,
                     MessengerOptions options)
    : store_(store), directory_(directory), entropy_(entropy), options_(options) {}

directory::RegisterResult Messenger::publish(const std::string& user_id) {
  if (!directory_) throw Error(Errc::DirectoryUnavailable, "no directory configured");
  auto prekeys = store_.prekeys();
  if (prekeys.one_time.size() < options_.one_time_target) {
    prekeys.add_one_time(options_.one_time_target - prekeys.one_time.size(), entropy_);
    store_.save_prekeys(prekeys);
  }
  return directory_->register_user(user_id, prekeys.bundle(store_.identity()), prekeys.one_time_publics());
}

ratchet::SessionState Messenger::start_session(const std::string& contact_id) {
  auto contact = store_.contact(contact_id);
  if (!contact) throw Error(Errc::ContactNotFound, contact_id);
  if (!directory_) throw Error(Errc::DirectoryUnavailable, "no directory configured");
  ratchet::PreKeyBundle bundle;
  try {
    bundle = directory_->fetch_bundle(contact_id);
  } catch (const Error& e) {
    if (e.code() == Errc::NotFound)
      throw Error(Errc::DirectoryUnavailable, contact_id + " is not registered with the directory");
    throw;
  }
  if (bundle.identity_pub != contact->identity_pub) {
    store_.observe_contact(contact_id, bundle.identity_pub);
    throw Error(Errc::BundleRejected,
                "identity key for " + contact_id + " changed; verify the contact before sending");
  }
  return ratchet::session_init_sender(store_.identity(), bundle, entropy_).session;
}

store::ContactUpdate Messenger::add_contact(const std::string& contact_id) {
  if (!store::valid_contact_id(contact_id)) throw Error(Errc::BadRequest, "invalid contact id");
  if (!directory_) throw Error(Errc::DirectoryUnavailable, "no directory configured");
  ratchet::PreKeyBundle bundle;
  try {
    bundle = directory_->fetch_bundle(contact_id);
  } catch (const Error& e) {
    if (e.code() == Errc::NotFound) throw Error(Errc::ContactNotFound, contact_id + " is not in the directory");
    throw;
  }
  auto update = store_.observe_contact(contact_id, bundle.identity_pub);
  if (update != store::ContactUpdate::KeyChanged && !store_.has_session(contact_id)) {
    auto init = ratchet::session_init_sender(store_.identity(), bundle, entropy_);
    store_.save_session(contact_id, init.session);
  }
  return update;
}

OutgoingMessage Messenger::begin_outgoing(const std::string& contact_id) {
  if (!store_.contact(contact_id)) throw Error(Errc::ContactNotFound, contact_id);
  auto session = store_.has_session(contact_id) ? store_.load_session(contact_id) : start_session(contact_id);
  OutgoingMessage out;
  out.contact_id = contact_id;
  std::tie(out.keys, out.fields) = ratchet::next_sending_keys(session);
  out.handshake = session.pending_handshake;
  store_.save_session(contact_id, session);
  return out;
}

codec::WireToken Messenger::seal(const OutgoingMessage& message, ByteView ciphertext) const {
  auto header = message.header(ciphertext.size());
  auto header_bytes = codec::serialize_header(header);
  auto mac = stream::seal_mac(message.keys, header_bytes, ciphertext);
  return codec::encode_token(header, ciphertext, mac);
}

void Messenger::remember_sent(const codec::WireToken& token, std::string_view plaintext) {
  store_.cache_put(store::token_hash(token.text), plaintext);
}

codec::WireToken Messenger::encrypt_message(const std::string& contact_id, std::string_view plaintext) {
  auto message = begin_outgoing(contact_id);
  auto ciphertext = stream::one_shot_encrypt(message.keys, as_bytes(plaintext));
  auto token = seal(message, ciphertext);
  remember_sent(token, plaintext);
  message.wipe();
  return token;
}

DecryptResult Messenger::open(const codec::WireToken& token, const std::optional<std::string>& sender_hint) {
  const Key32 hash = store::token_hash(token.text);
  try {
    if (auto cached = store_.cache_get(hash)) {
      DecryptResult r;
      r.status = DecryptStatus::Displayed;
      r.plaintext = std::move(*cached);
      r.from_cache = true;
      return r;
    }
  } catch (const Error& e) {
    // A damaged cache entry is reported, and the token is still tried below.
    if (e.code() != Errc::CacheCorrupt) throw;
  }

  codec::DecodedToken decoded;
  try {
    decoded = codec::decode_token(token);
  } catch (const Error& e) {
    return warning(e.code(), e.what());
  }
  const auto fields = decoded.header.fields();

  std::vector<Candidate> candidates;
  std::vector<Errc> errors;

  if (const auto& hs = decoded.header.handshake) {
    auto known = store_.contact_by_identity(hs->identity_pub);
    std::string contact_id;
    if (known) {
      contact_id = known->contact_id;
    } else if (sender_hint && store::valid_contact_id(*sender_hint) && !store_.contact(*sender_hint)) {
      contact_id = *sender_hint;
    } else {
      contact_id = "unknown-" + to_hex(hs->identity_pub).substr(0, 8);
    }
    if (known && store_.has_session(contact_id)) {
      auto s = store_.load_session(contact_id);
      if (s.handshake_base == hs->ephemeral_pub && s.remote_identity == hs->identity_pub)
        candidates.push_back({contact_id, std::move(s), std::nullopt, std::nullopt});
    }
    if (candidates.empty()) {
      try {
        auto prekeys = store_.prekeys();
        auto s = ratchet::session_init_receiver(store_.identity(), prekeys, *hs);
        Candidate c{contact_id, std::move(s), std::move(prekeys), std::nullopt};
        if (!known) c.new_contact_identity = hs->identity_pub;
        candidates.push_back(std::move(c));
      } catch (const Error& e) {
        errors.push_back(e.code());
      }
    }
  } else {
    std::vector<Candidate> owners, hinted, others;
    for (const auto& contact : store_.contacts()) {
      if (!store_.has_session(contact.contact_id)) continue;
      Candidate c{contact.contact_id, store_.load_session(contact.contact_id), std::nullopt, std::nullopt};
      if (owns_chain(c.session, fields.ratchet_pub))
        owners.push_back(std::move(c));
      else if (sender_hint && contact.contact_id == *sender_hint)
        hinted.push_back(std::move(c));
      else
        others.push_back(std::move(c));
    }
    if (!owners.empty()) {
      candidates = std::move(owners);
    } else {
      candidates = std::move(hinted);
      for (auto& c : others) candidates.push_back(std::move(c));
    }
  }

  for (auto& c : candidates) {
    ratchet::ReceivedKeys received;
    try {
      received = ratchet::keys_for_header(c.session, fields, entropy_);
    } catch (const Error& e) {
      errors.push_back(e.code());
      continue;
    }
    if (!stream::verify_mac(received.keys, decoded.header_bytes, decoded.ciphertext, decoded.mac)) {
      errors.push_back(Errc::MacMismatch);
      continue;
    }
    // Authentic: commit everything staged for this candidate.
    auto plaintext = stream::decrypt(received.keys, decoded.ciphertext);
    ratchet::confirm_decrypted(c.session, std::move(received));
    if (c.consumed_prekeys) store_.save_prekeys(*c.consumed_prekeys);
    if (c.new_contact_identity) store_.observe_contact(c.contact_id, *c.new_contact_identity);
    store_.save_session(c.contact_id, c.session);
    store_.mark_seen(hash);
    DecryptResult r;
    r.status = DecryptStatus::Displayed;
    r.plaintext = as_string(plaintext);
    crypto::wipe(plaintext);
    r.sender = c.contact_id;
    if (options_.cache_on_receive) store_.cache_put(hash, r.plaintext);
    return r;
  }

  const bool key_gone = std::any_of(errors.begin(), errors.end(), [](Errc e) {
    return e == Errc::KeyErased || e == Errc::PrekeyMissing;
  });
  if (key_gone && store_.was_seen(hash)) {
    DecryptResult r;
    r.status = DecryptStatus::Unrecoverable;
    r.code = Errc::KeyErased;
    r.detail = "message keys were erased after first reading and no cached copy exists";
    return r;
  }
  if (candidates.empty() && errors.empty())
    return warning(Errc::SessionNotFound, "no session can open this token");
  const bool mac = std::find(errors.begin(), errors.end(), Errc::MacMismatch) != errors.end();
  const Errc code = mac ? Errc::MacMismatch : errors.front();
  return warning(code, key_gone ? "token claims keys that were already used" : std::string(to_string(code)));
}

std::vector<DecryptResult> Messenger::open_selection(std::string_view selection,
                                                     const std::optional<std::string>& sender_hint) {
  auto items = codec::scan_tokens(selection);
  if (items.empty()) throw Error(Errc::NothingToDecrypt, "selection contains no token");
  std::vector<DecryptResult> out;
  for (const auto& item : items) {
    if (const auto* bad = std::get_if<codec::MalformedCandidate>(&item)) {
      out.push_back(warning(Errc::MalformedToken, bad->reason));
      continue;
    }
    out.push_back(open(std::get<codec::WireToken>(item), sender_hint));
  }
  return out;
}

}  // namespace textguard
