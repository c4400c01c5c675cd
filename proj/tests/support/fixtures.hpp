#pragma once

#include <random>
#include <string>

#include "textguard/crypto.hpp"
#include "textguard/ratchet.hpp"

namespace textguard::testing {

inline ratchet::MessageKeys random_keys(std::mt19937_64& rng) {
  ratchet::MessageKeys k;
  for (auto& b : k.cipher_key) b = static_cast<std::uint8_t>(rng());
  for (auto& b : k.mac_key) b = static_cast<std::uint8_t>(rng());
  for (auto& b : k.iv) b = static_cast<std::uint8_t>(rng());
  return k;
}

inline Bytes random_bytes(std::mt19937_64& rng, std::size_t n) {
  Bytes out(n);
  for (auto& b : out) b = static_cast<std::uint8_t>(rng());
  return out;
}

/// Random valid UTF-8 drawn from 1- to 4-byte code points.
inline std::string random_utf8(std::mt19937_64& rng, std::size_t max_bytes) {
  std::string out;
  std::uniform_int_distribution<std::size_t> len_dist(0, max_bytes);
  const std::size_t target = len_dist(rng);
  while (true) {
    std::uint32_t cp;
    switch (rng() % 4) {
      case 0: cp = 0x20 + rng() % 0x5f; break;
      case 1: cp = 0x80 + rng() % (0x800 - 0x80); break;
      case 2:
        cp = 0x800 + rng() % (0x10000 - 0x800);
        if (cp >= 0xd800 && cp <= 0xdfff) cp = 0x4e2d;
        break;
      default: cp = 0x10000 + rng() % (0x110000 - 0x10000); break;
    }
    std::string enc;
    if (cp < 0x80) {
      enc.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      enc.push_back(static_cast<char>(0xc0 | (cp >> 6)));
      enc.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
    } else if (cp < 0x10000) {
      enc.push_back(static_cast<char>(0xe0 | (cp >> 12)));
      enc.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
      enc.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
    } else {
      enc.push_back(static_cast<char>(0xf0 | (cp >> 18)));
      enc.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3f)));
      enc.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
      enc.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
    }
    if (out.size() + enc.size() > target) break;
    out += enc;
  }
  return out;
}

/// Alice and Bob straight after the handshake. Bob can send only after he
/// has received Alice's first message.
struct SessionPair {
  ratchet::IdentityKeyPair alice_id;
  ratchet::IdentityKeyPair bob_id;
  ratchet::LocalPreKeys bob_prekeys;
  ratchet::SessionState alice;
  ratchet::SessionState bob;
  ratchet::HandshakeHeader handshake;
};

inline SessionPair make_session_pair(crypto::Entropy& entropy, bool with_one_time = true) {
  SessionPair p;
  p.alice_id = ratchet::generate_identity(entropy);
  p.bob_id = ratchet::generate_identity(entropy);
  p.bob_prekeys = ratchet::LocalPreKeys::generate(p.bob_id, with_one_time ? 4 : 0, entropy);
  auto bundle = p.bob_prekeys.bundle(p.bob_id);
  if (with_one_time) bundle.one_time_prekey = p.bob_prekeys.one_time_publics().front();
  auto init = ratchet::session_init_sender(p.alice_id, bundle, entropy);
  p.alice = init.session;
  p.handshake = init.handshake;
  p.bob = ratchet::session_init_receiver(p.bob_id, p.bob_prekeys, p.handshake);
  return p;
}

}  // namespace textguard::testing
