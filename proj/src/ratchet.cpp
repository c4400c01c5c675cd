#include "textguard/ratchet.hpp"

#include <algorithm>
#include <cstring>

#include "textguard/error.hpp"

namespace textguard::ratchet {

namespace {

constexpr std::string_view kX3dhInfo = "TextGuard X3DH v1";
constexpr std::string_view kRootInfo = "TextGuard ratchet root";
constexpr std::string_view kMessageInfo = "TextGuard message keys";

struct ChainStep {
  Key32 message_key_seed;
  Key32 next_chain_key;
};

ChainStep step_chain(const Key32& chain_key) {
  static constexpr std::uint8_t kMessageConst[] = {0x01};
  static constexpr std::uint8_t kChainConst[] = {0x02};
  return {crypto::hmac_sha256(chain_key, kMessageConst),
          crypto::hmac_sha256(chain_key, kChainConst)};
}

std::pair<Key32, Key32> kdf_root(const Key32& root_key, const Key32& dh_output) {
  Bytes out = crypto::hkdf_sha256(dh_output, root_key, as_bytes(kRootInfo), 64);
  std::pair<Key32, Key32> keys;
  std::copy_n(out.begin(), 32, keys.first.begin());
  std::copy_n(out.begin() + 32, 32, keys.second.begin());
  crypto::wipe(out);
  return keys;
}

Key32 derive_shared_secret(std::initializer_list<Key32> dh_outputs) {
  Bytes ikm(32, 0xff);
  for (const auto& dh : dh_outputs) ikm.insert(ikm.end(), dh.begin(), dh.end());
  const Key32 zero_salt{};
  Bytes sk = crypto::hkdf_sha256(ikm, zero_salt, as_bytes(kX3dhInfo), 32);
  crypto::wipe(ikm);
  Key32 out{};
  std::copy(sk.begin(), sk.end(), out.begin());
  crypto::wipe(sk);
  return out;
}

void skip_until(SessionState& s, std::uint32_t until) {
  if (!s.recv_chain_key || until <= s.recv_count) return;
  const std::uint64_t gap = static_cast<std::uint64_t>(until) - s.recv_count;
  if (gap > kMaxSkippedKeys || s.skipped_keys.size() + gap > kMaxSkippedKeys)
    throw Error(Errc::TooManySkipped,
                "message gap of " + std::to_string(gap) + " exceeds the skipped-key bound");
  while (s.recv_count < until) {
    auto step = step_chain(*s.recv_chain_key);
    s.skipped_keys.emplace(SkippedKeyId{*s.remote_ratchet_pub, s.recv_count},
                           MessageKeys::derive(step.message_key_seed, s.recv_count));
    s.recv_chain_key = step.next_chain_key;
    ++s.recv_count;
  }
}

void dh_ratchet(SessionState& s, const Key32& remote_pub, crypto::Entropy& entropy) {
  s.previous_count = s.send_count;
  s.send_count = 0;
  s.recv_count = 0;
  if (s.remote_ratchet_pub) {
    s.retired_remote.push_back(*s.remote_ratchet_pub);
    while (s.retired_remote.size() > kRetiredRemoteKeys) s.retired_remote.pop_front();
  }
  s.remote_ratchet_pub = remote_pub;
  auto [root1, recv_chain] =
      kdf_root(s.root_key, crypto::x25519(s.ratchet_keypair.private_key, remote_pub));
  s.root_key = root1;
  s.recv_chain_key = recv_chain;
  s.ratchet_keypair = crypto::DhKeyPair::generate(entropy);
  auto [root2, send_chain] =
      kdf_root(s.root_key, crypto::x25519(s.ratchet_keypair.private_key, remote_pub));
  s.root_key = root2;
  s.send_chain_key = send_chain;
}

}  // namespace

Signature IdentityKeyPair::sign(ByteView message) const {
  return crypto::SigningKeyPair{private_key, public_key}.sign(message);
}

Key32 IdentityKeyPair::dh_private() const {
  return crypto::SigningKeyPair{private_key, public_key}.dh_private();
}

IdentityKeyPair generate_identity(ByteView seed) {
  auto s = array_from<32>(seed);
  if (!s)
    throw Error(Errc::InvalidSeed,
                "identity seed must be 32 bytes, got " + std::to_string(seed.size()));
  auto kp = crypto::SigningKeyPair::from_seed(*s);
  return {kp.seed, kp.public_key};
}

IdentityKeyPair generate_identity(crypto::Entropy& entropy) {
  Key32 seed = entropy.key32();
  auto id = generate_identity(seed);
  crypto::wipe(seed);
  return id;
}

bool PreKeyBundle::signature_valid() const {
  return crypto::ed25519_verify(identity_pub, signed_prekey_pub, prekey_signature);
}

LocalPreKeys LocalPreKeys::generate(const IdentityKeyPair& identity,
                                    std::size_t one_time_count,
                                    crypto::Entropy& entropy) {
  LocalPreKeys keys;
  keys.registration_id = static_cast<std::uint32_t>(entropy.next_u64() & 0x3fff) + 1;
  keys.signed_prekey_id = 1;
  keys.signed_prekey = crypto::DhKeyPair::generate(entropy);
  keys.signed_prekey_signature = identity.sign(keys.signed_prekey.public_key);
  keys.add_one_time(one_time_count, entropy);
  return keys;
}

std::vector<OneTimePreKey> LocalPreKeys::add_one_time(std::size_t count,
                                                      crypto::Entropy& entropy) {
  std::vector<OneTimePreKey> added;
  for (std::size_t i = 0; i < count; ++i) {
    auto kp = crypto::DhKeyPair::generate(entropy);
    added.push_back({next_one_time_id, kp.public_key});
    one_time.emplace(next_one_time_id++, kp);
  }
  return added;
}

PreKeyBundle LocalPreKeys::bundle(const IdentityKeyPair& identity) const {
  PreKeyBundle b;
  b.identity_pub = identity.public_key;
  b.signed_prekey_id = signed_prekey_id;
  b.signed_prekey_pub = signed_prekey.public_key;
  b.prekey_signature = signed_prekey_signature;
  b.registration_id = registration_id;
  return b;
}

std::vector<OneTimePreKey> LocalPreKeys::one_time_publics() const {
  std::vector<OneTimePreKey> out;
  for (const auto& [id, kp] : one_time) out.push_back({id, kp.public_key});
  return out;
}

void MessageKeys::wipe() {
  crypto::wipe(cipher_key);
  crypto::wipe(mac_key);
  crypto::wipe(iv);
}

MessageKeys MessageKeys::derive(const Key32& message_key_seed, std::uint32_t counter) {
  const Key32 zero_salt{};
  Bytes out = crypto::hkdf_sha256(message_key_seed, zero_salt, as_bytes(kMessageInfo), 64);
  MessageKeys keys;
  std::copy_n(out.begin(), 16, keys.cipher_key.begin());
  std::copy_n(out.begin() + 16, 32, keys.mac_key.begin());
  std::copy_n(out.begin() + 48, 16, keys.iv.begin());
  keys.counter = counter;
  crypto::wipe(out);
  return keys;
}

SenderInit session_init_sender(const IdentityKeyPair& local, const PreKeyBundle& remote,
                               crypto::Entropy& entropy) {
  if (!remote.signature_valid())
    throw Error(Errc::BundleRejected, "signed prekey signature does not verify");
  auto remote_identity_dh = crypto::ed25519_public_to_x25519(remote.identity_pub);
  if (!remote_identity_dh)
    throw Error(Errc::BundleRejected, "identity key is not a valid curve point");

  auto ephemeral = crypto::DhKeyPair::generate(entropy);
  Key32 local_dh = local.dh_private();
  Key32 sk;
  if (remote.one_time_prekey) {
    sk = derive_shared_secret({crypto::x25519(local_dh, remote.signed_prekey_pub),
                               crypto::x25519(ephemeral.private_key, *remote_identity_dh),
                               crypto::x25519(ephemeral.private_key, remote.signed_prekey_pub),
                               crypto::x25519(ephemeral.private_key,
                                              remote.one_time_prekey->public_key)});
  } else {
    sk = derive_shared_secret({crypto::x25519(local_dh, remote.signed_prekey_pub),
                               crypto::x25519(ephemeral.private_key, *remote_identity_dh),
                               crypto::x25519(ephemeral.private_key, remote.signed_prekey_pub)});
  }
  crypto::wipe(local_dh);

  SenderInit init;
  init.handshake.identity_pub = local.public_key;
  init.handshake.ephemeral_pub = ephemeral.public_key;
  init.handshake.signed_prekey_id = remote.signed_prekey_id;
  if (remote.one_time_prekey) init.handshake.one_time_prekey_id = remote.one_time_prekey->id;

  // The sending chain is derived lazily on the first next_sending_keys() call,
  // so both sides hold the same root key straight after the handshake.
  SessionState& s = init.session;
  s.root_key = sk;
  s.ratchet_keypair = crypto::DhKeyPair::generate(entropy);
  s.remote_ratchet_pub = remote.signed_prekey_pub;
  s.remote_identity = remote.identity_pub;
  s.handshake_base = ephemeral.public_key;
  s.pending_handshake = init.handshake;
  crypto::wipe(ephemeral.private_key);
  crypto::wipe(sk);
  return init;
}

SessionState session_init_receiver(const IdentityKeyPair& local, LocalPreKeys& prekeys,
                                   const HandshakeHeader& header) {
  if (header.signed_prekey_id != prekeys.signed_prekey_id)
    throw Error(Errc::PrekeyMissing,
                "signed prekey " + std::to_string(header.signed_prekey_id) + " is not held");
  std::optional<crypto::DhKeyPair> one_time;
  if (header.one_time_prekey_id) {
    auto it = prekeys.one_time.find(*header.one_time_prekey_id);
    if (it == prekeys.one_time.end())
      throw Error(Errc::PrekeyMissing, "one-time prekey " +
                                           std::to_string(*header.one_time_prekey_id) +
                                           " is not held");
    one_time = it->second;
  }
  auto remote_identity_dh = crypto::ed25519_public_to_x25519(header.identity_pub);
  if (!remote_identity_dh)
    throw Error(Errc::HeaderParseError, "handshake identity is not a valid curve point");

  Key32 local_dh = local.dh_private();
  const auto& spk = prekeys.signed_prekey.private_key;
  Key32 sk;
  if (one_time) {
    sk = derive_shared_secret({crypto::x25519(spk, *remote_identity_dh),
                               crypto::x25519(local_dh, header.ephemeral_pub),
                               crypto::x25519(spk, header.ephemeral_pub),
                               crypto::x25519(one_time->private_key, header.ephemeral_pub)});
  } else {
    sk = derive_shared_secret({crypto::x25519(spk, *remote_identity_dh),
                               crypto::x25519(local_dh, header.ephemeral_pub),
                               crypto::x25519(spk, header.ephemeral_pub)});
  }
  crypto::wipe(local_dh);

  if (header.one_time_prekey_id) {
    auto it = prekeys.one_time.find(*header.one_time_prekey_id);
    crypto::wipe(it->second.private_key);
    prekeys.one_time.erase(it);
  }

  SessionState s;
  s.root_key = sk;
  s.ratchet_keypair = prekeys.signed_prekey;
  s.remote_identity = header.identity_pub;
  s.handshake_base = header.ephemeral_pub;
  crypto::wipe(sk);
  return s;
}

std::pair<MessageKeys, HeaderFields> next_sending_keys(SessionState& s) {
  if (!s.send_chain_key) {
    if (!s.remote_ratchet_pub)
      throw Error(Errc::InvalidState, "session has no sending chain yet");
    auto [root, chain] =
        kdf_root(s.root_key, crypto::x25519(s.ratchet_keypair.private_key,
                                            *s.remote_ratchet_pub));
    s.root_key = root;
    s.send_chain_key = chain;
  }
  auto step = step_chain(*s.send_chain_key);
  s.send_chain_key = step.next_chain_key;
  HeaderFields header{s.ratchet_keypair.public_key, s.send_count, s.previous_count};
  MessageKeys keys = MessageKeys::derive(step.message_key_seed, s.send_count);
  crypto::wipe(step.message_key_seed);
  ++s.send_count;
  return {keys, header};
}

ReceivedKeys keys_for_header(const SessionState& session, const HeaderFields& header,
                             crypto::Entropy& entropy) {
  ReceivedKeys out{{}, session};
  SessionState& s = out.successor;

  if (auto it = s.skipped_keys.find({header.ratchet_pub, header.counter});
      it != s.skipped_keys.end()) {
    out.keys = it->second;
    s.skipped_keys.erase(it);
    s.pending_handshake.reset();
    return out;
  }

  if (s.remote_ratchet_pub == header.ratchet_pub) {
    if (header.counter < s.recv_count)
      throw Error(Errc::KeyErased,
                  "keys for message " + std::to_string(header.counter) + " were erased");
  } else {
    if (std::find(s.retired_remote.begin(), s.retired_remote.end(), header.ratchet_pub) !=
        s.retired_remote.end())
      throw Error(Errc::KeyErased, "message belongs to a retired receiving chain");
    skip_until(s, header.previous_counter);
    dh_ratchet(s, header.ratchet_pub, entropy);
  }

  skip_until(s, header.counter);
  auto step = step_chain(*s.recv_chain_key);
  out.keys = MessageKeys::derive(step.message_key_seed, header.counter);
  s.recv_chain_key = step.next_chain_key;
  s.recv_count = header.counter + 1;
  s.pending_handshake.reset();
  return out;
}

void confirm_decrypted(SessionState& session, ReceivedKeys&& received) {
  session = std::move(received.successor);
  received.keys.wipe();
}

// ---------------------------------------------------------------------------
// Binary session blob: "TGS1", format byte, then fixed fields with presence
// flags. All integers big-endian.

namespace {

constexpr std::uint8_t kSessionFormat = 1;

class Writer {
 public:
  void raw(ByteView b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 3; i >= 0; --i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class Reader {
 public:
  explicit Reader(ByteView data) : data_(data) {}
  ByteView raw(std::size_t n) {
    if (data_.size() - pos_ < n)
      throw Error(Errc::StoreCorrupt, "session blob truncated at offset " + std::to_string(pos_));
    auto v = data_.subspan(pos_, n);
    pos_ += n;
    return v;
  }
  Key32 key() { return *array_from<32>(raw(32)); }
  Block16 block() { return *array_from<16>(raw(16)); }
  std::uint8_t u8() { return raw(1)[0]; }
  std::uint32_t u32() {
    auto b = raw(4);
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
           (std::uint32_t{b[2]} << 8) | b[3];
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  ByteView data_;
  std::size_t pos_ = 0;
};

enum : std::uint8_t {
  kHasSendChain = 1 << 0,
  kHasRecvChain = 1 << 1,
  kHasRemote = 1 << 2,
  kHasHandshake = 1 << 3,
};

}  // namespace

Bytes serialize_session(const SessionState& s) {
  Writer w;
  w.raw(as_bytes("TGS1"));
  w.u8(kSessionFormat);
  w.raw(s.root_key);
  std::uint8_t flags = 0;
  if (s.send_chain_key) flags |= kHasSendChain;
  if (s.recv_chain_key) flags |= kHasRecvChain;
  if (s.remote_ratchet_pub) flags |= kHasRemote;
  if (s.pending_handshake) flags |= kHasHandshake;
  w.u8(flags);
  if (s.send_chain_key) w.raw(*s.send_chain_key);
  if (s.recv_chain_key) w.raw(*s.recv_chain_key);
  w.raw(s.ratchet_keypair.private_key);
  w.raw(s.ratchet_keypair.public_key);
  if (s.remote_ratchet_pub) w.raw(*s.remote_ratchet_pub);
  w.u32(s.send_count);
  w.u32(s.recv_count);
  w.u32(s.previous_count);
  w.raw(s.remote_identity);
  w.raw(s.handshake_base);
  if (s.pending_handshake) {
    const auto& h = *s.pending_handshake;
    w.raw(h.identity_pub);
    w.raw(h.ephemeral_pub);
    w.u32(h.signed_prekey_id);
    w.u8(h.one_time_prekey_id ? 1 : 0);
    w.u32(h.one_time_prekey_id.value_or(0));
  }
  w.u32(static_cast<std::uint32_t>(s.skipped_keys.size()));
  for (const auto& [id, keys] : s.skipped_keys) {
    w.raw(id.ratchet_pub);
    w.u32(id.counter);
    w.raw(keys.cipher_key);
    w.raw(keys.mac_key);
    w.raw(keys.iv);
  }
  w.u32(static_cast<std::uint32_t>(s.retired_remote.size()));
  for (const auto& k : s.retired_remote) w.raw(k);
  return w.take();
}

SessionState deserialize_session(ByteView data) {
  Reader r(data);
  auto magic = r.raw(4);
  if (!std::equal(magic.begin(), magic.end(), as_bytes("TGS1").begin()))
    throw Error(Errc::StoreCorrupt, "session blob has a bad magic number");
  if (r.u8() != kSessionFormat)
    throw Error(Errc::StoreCorrupt, "unsupported session blob format");
  SessionState s;
  s.root_key = r.key();
  const std::uint8_t flags = r.u8();
  if (flags & ~(kHasSendChain | kHasRecvChain | kHasRemote | kHasHandshake))
    throw Error(Errc::StoreCorrupt, "session blob has unknown flags");
  if (flags & kHasSendChain) s.send_chain_key = r.key();
  if (flags & kHasRecvChain) s.recv_chain_key = r.key();
  s.ratchet_keypair.private_key = r.key();
  s.ratchet_keypair.public_key = r.key();
  if (flags & kHasRemote) s.remote_ratchet_pub = r.key();
  s.send_count = r.u32();
  s.recv_count = r.u32();
  s.previous_count = r.u32();
  s.remote_identity = r.key();
  s.handshake_base = r.key();
  if (flags & kHasHandshake) {
    HandshakeHeader h;
    h.identity_pub = r.key();
    h.ephemeral_pub = r.key();
    h.signed_prekey_id = r.u32();
    const bool has_otpk = r.u8() != 0;
    const std::uint32_t otpk = r.u32();
    if (has_otpk) h.one_time_prekey_id = otpk;
    s.pending_handshake = h;
  }
  const std::uint32_t skipped = r.u32();
  if (skipped > kMaxSkippedKeys)
    throw Error(Errc::StoreCorrupt, "session blob exceeds the skipped-key bound");
  for (std::uint32_t i = 0; i < skipped; ++i) {
    SkippedKeyId id;
    id.ratchet_pub = r.key();
    id.counter = r.u32();
    MessageKeys keys;
    keys.cipher_key = r.block();
    keys.mac_key = r.key();
    keys.iv = r.block();
    keys.counter = id.counter;
    s.skipped_keys.emplace(id, keys);
  }
  const std::uint32_t retired = r.u32();
  if (retired > kRetiredRemoteKeys)
    throw Error(Errc::StoreCorrupt, "session blob has too many retired keys");
  for (std::uint32_t i = 0; i < retired; ++i) s.retired_remote.push_back(r.key());
  if (!r.done()) throw Error(Errc::StoreCorrupt, "session blob has trailing bytes");
  return s;
}

}  // namespace textguard::ratchet
