#include "textguard/ratchet.hpp"

#include <gtest/gtest.h>

#include <set>

#include "support/fixtures.hpp"
#include "textguard/error.hpp"

namespace textguard::ratchet {
namespace {

using testing::make_session_pair;

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return Errc::CryptoFailure;
}

/// Delivers one message from `from` to `to` and commits the receive.
MessageKeys deliver(SessionState& from, SessionState& to, crypto::Entropy& entropy) {
  auto [sent, header] = next_sending_keys(from);
  auto received = keys_for_header(to, header, entropy);
  EXPECT_EQ(received.keys, sent);
  MessageKeys keys = received.keys;
  confirm_decrypted(to, std::move(received));
  return keys;
}

TEST(Identity, FixedSeedIsDeterministic) {
  Key32 seed{};
  auto a = generate_identity(seed);
  auto b = generate_identity(seed);
  EXPECT_EQ(a.public_key, b.public_key);
  EXPECT_EQ(a.public_key.size(), 32u);
}

TEST(Identity, RandomIdentitiesDiffer) {
  EXPECT_NE(generate_identity().public_key, generate_identity().public_key);
}

TEST(Identity, ShortSeedRejected) {
  Bytes seed(16, 0);
  EXPECT_EQ(code_of([&] { generate_identity(seed); }), Errc::InvalidSeed);
}

TEST(Handshake, ValidBundleStartsAtZero) {
  crypto::SeededEntropy entropy(1);
  auto p = make_session_pair(entropy);
  EXPECT_EQ(p.alice.send_count, 0u);
  EXPECT_EQ(p.alice.recv_count, 0u);
  EXPECT_EQ(p.alice.previous_count, 0u);
  EXPECT_EQ(p.handshake.identity_pub, p.alice_id.public_key);
  ASSERT_TRUE(p.handshake.one_time_prekey_id);
}

TEST(Handshake, TamperedSignatureRejected) {
  crypto::SeededEntropy entropy(2);
  auto alice = generate_identity(entropy);
  auto bob = generate_identity(entropy);
  auto prekeys = LocalPreKeys::generate(bob, 1, entropy);
  auto bundle = prekeys.bundle(bob);
  bundle.prekey_signature[5] ^= 0x01;
  EXPECT_EQ(code_of([&] { session_init_sender(alice, bundle, entropy); }),
            Errc::BundleRejected);
}

TEST(Handshake, BothSidesDeriveSameRootForManySeeds) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    crypto::SeededEntropy entropy(seed);
    auto p = make_session_pair(entropy, seed % 2 == 0);
    ASSERT_EQ(p.alice.root_key, p.bob.root_key) << "seed " << seed;
  }
}

TEST(Handshake, ConsumedOneTimePrekeyIsDeleted) {
  crypto::SeededEntropy entropy(3);
  auto p = make_session_pair(entropy);
  EXPECT_EQ(p.bob_prekeys.one_time.count(*p.handshake.one_time_prekey_id), 0u);
  EXPECT_EQ(p.bob_prekeys.one_time.size(), 3u);
  EXPECT_EQ(code_of([&] { session_init_receiver(p.bob_id, p.bob_prekeys, p.handshake); }),
            Errc::PrekeyMissing);
}

TEST(Handshake, WithoutOneTimePrekey) {
  crypto::SeededEntropy entropy(4);
  auto p = make_session_pair(entropy, /*with_one_time=*/false);
  EXPECT_FALSE(p.handshake.one_time_prekey_id);
  EXPECT_EQ(p.alice.root_key, p.bob.root_key);
  deliver(p.alice, p.bob, entropy);
}

TEST(SendingKeys, CountersAreMonotone) {
  crypto::SeededEntropy entropy(5);
  auto p = make_session_pair(entropy);
  auto [k0, h0] = next_sending_keys(p.alice);
  auto [k1, h1] = next_sending_keys(p.alice);
  EXPECT_EQ(h0.counter, 0u);
  EXPECT_EQ(h1.counter, 1u);
  EXPECT_EQ(k0.counter, 0u);
  EXPECT_EQ(k1.counter, 1u);
  EXPECT_EQ(p.alice.send_count, 2u);
}

TEST(SendingKeys, TwoHundredDistinctCipherKeys) {
  crypto::SeededEntropy entropy(6);
  auto p = make_session_pair(entropy);
  std::set<Block16> seen;
  for (int i = 0; i < 200; ++i) seen.insert(next_sending_keys(p.alice).first.cipher_key);
  EXPECT_EQ(seen.size(), 200u);
}

TEST(SendingKeys, PreviousCounterIsRetiredChainLength) {
  crypto::SeededEntropy entropy(7);
  auto p = make_session_pair(entropy);
  for (int i = 0; i < 3; ++i) deliver(p.alice, p.bob, entropy);
  // Bob turned the ratchet when he first heard from Alice; his previous
  // sending chain was empty.
  auto [kb, hb] = next_sending_keys(p.bob);
  EXPECT_EQ(hb.previous_counter, 0u);
  auto rb = keys_for_header(p.alice, hb, entropy);
  confirm_decrypted(p.alice, std::move(rb));
  // Alice's retired chain carried 3 messages.
  EXPECT_EQ(p.alice.previous_count, 3u);
  auto [ka, ha] = next_sending_keys(p.alice);
  EXPECT_EQ(ha.previous_counter, 3u);
  EXPECT_EQ(ha.counter, 0u);
}

TEST(Receiving, InOrderDelivery) {
  crypto::SeededEntropy entropy(8);
  auto p = make_session_pair(entropy);
  for (int i = 0; i < 3; ++i) deliver(p.alice, p.bob, entropy);
  EXPECT_EQ(p.bob.recv_count, 3u);
  EXPECT_TRUE(p.bob.skipped_keys.empty());
}

TEST(Receiving, OutOfOrderUsesSkippedKeys) {
  crypto::SeededEntropy entropy(9);
  auto p = make_session_pair(entropy);
  auto m0 = next_sending_keys(p.alice);
  auto m1 = next_sending_keys(p.alice);
  auto m2 = next_sending_keys(p.alice);
  for (auto* m : {&m0, &m2, &m1}) {
    auto r = keys_for_header(p.bob, m->second, entropy);
    ASSERT_EQ(r.keys, m->first);
    confirm_decrypted(p.bob, std::move(r));
  }
  EXPECT_TRUE(p.bob.skipped_keys.empty());
  EXPECT_EQ(p.bob.recv_count, 3u);
}

TEST(Receiving, ErasedKeyCannotBeRequestedAgain) {
  crypto::SeededEntropy entropy(10);
  auto p = make_session_pair(entropy);
  auto [k0, h0] = next_sending_keys(p.alice);
  confirm_decrypted(p.bob, keys_for_header(p.bob, h0, entropy));
  EXPECT_EQ(code_of([&] { keys_for_header(p.bob, h0, entropy); }), Errc::KeyErased);
}

TEST(Receiving, UnconfirmedReceiveLeavesSessionUntouched) {
  crypto::SeededEntropy entropy(11);
  auto p = make_session_pair(entropy);
  auto [k0, h0] = next_sending_keys(p.alice);
  const SessionState before = p.bob;
  auto r = keys_for_header(p.bob, h0, entropy);
  EXPECT_EQ(p.bob, before);
  // Still decryptable because nothing was committed.
  EXPECT_EQ(keys_for_header(p.bob, h0, entropy).keys, k0);
}

TEST(Receiving, SkippedKeyBoundIsFailClosed) {
  crypto::SeededEntropy entropy(12);
  auto p = make_session_pair(entropy);
  auto [k0, h0] = next_sending_keys(p.alice);
  confirm_decrypted(p.bob, keys_for_header(p.bob, h0, entropy));
  HeaderFields far = h0;
  far.counter = 1 + static_cast<std::uint32_t>(kMaxSkippedKeys) + 1;
  EXPECT_EQ(code_of([&] { keys_for_header(p.bob, far, entropy); }), Errc::TooManySkipped);
  far.counter = 1 + static_cast<std::uint32_t>(kMaxSkippedKeys);
  auto r = keys_for_header(p.bob, far, entropy);
  EXPECT_EQ(r.successor.skipped_keys.size(), kMaxSkippedKeys);
}

TEST(Receiving, ReplayOnRetiredChainIsKeyErased) {
  crypto::SeededEntropy entropy(13);
  auto p = make_session_pair(entropy);
  auto [k0, h0] = next_sending_keys(p.alice);
  confirm_decrypted(p.bob, keys_for_header(p.bob, h0, entropy));
  deliver(p.bob, p.alice, entropy);
  deliver(p.alice, p.bob, entropy);  // Bob retires Alice's first chain
  const SessionState before = p.bob;
  EXPECT_EQ(code_of([&] { keys_for_header(p.bob, h0, entropy); }), Errc::KeyErased);
  EXPECT_EQ(p.bob, before);
}

// No (cipher_key, iv) pair repeats across a long alternating conversation.
TEST(Conversation, NoKeyReuseAcrossRatchetTurns) {
  crypto::SeededEntropy entropy(14);
  auto p = make_session_pair(entropy);
  std::set<std::pair<Block16, Block16>> seen;
  for (int i = 0; i < 2000; ++i) {
    const bool alice_sends = (i / 3) % 2 == 0;
    auto keys = alice_sends ? deliver(p.alice, p.bob, entropy) : deliver(p.bob, p.alice, entropy);
    ASSERT_TRUE(seen.insert({keys.cipher_key, keys.iv}).second) << "repeat at " << i;
  }
}

TEST(Conversation, DeterministicTranscriptForFixedSeed) {
  auto run = [] {
    crypto::SeededEntropy entropy(15);
    auto p = make_session_pair(entropy);
    Bytes transcript;
    for (int i = 0; i < 20; ++i) {
      auto keys = (i % 4 < 2) ? deliver(p.alice, p.bob, entropy) : deliver(p.bob, p.alice, entropy);
      transcript.insert(transcript.end(), keys.cipher_key.begin(), keys.cipher_key.end());
    }
    auto a = serialize_session(p.alice);
    transcript.insert(transcript.end(), a.begin(), a.end());
    return transcript;
  };
  EXPECT_EQ(run(), run());
}

TEST(Serialization, RoundTripPreservesBehaviour) {
  crypto::SeededEntropy entropy(16);
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 100; ++trial) {
    auto p = make_session_pair(entropy, trial % 2 == 0);
    const int turns = static_cast<int>(rng() % 6);
    for (int i = 0; i < turns; ++i) {
      if (rng() % 3 == 0) next_sending_keys(p.alice);  // creates a gap at Bob
      deliver(p.alice, p.bob, entropy);
      if (rng() % 2) deliver(p.bob, p.alice, entropy);
    }
    for (auto* s : {&p.alice, &p.bob}) {
      auto restored = deserialize_session(serialize_session(*s));
      ASSERT_EQ(restored, *s);
    }
    auto copy = deserialize_session(serialize_session(p.alice));
    EXPECT_EQ(next_sending_keys(copy), next_sending_keys(p.alice));
  }
}

TEST(Serialization, TruncatedBlobIsCorrupt) {
  crypto::SeededEntropy entropy(17);
  auto p = make_session_pair(entropy);
  Bytes blob = serialize_session(p.alice);
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, blob.size() / 2, blob.size() - 1}) {
    Bytes truncated(blob.begin(), blob.begin() + static_cast<std::ptrdiff_t>(cut));
    EXPECT_EQ(code_of([&] { deserialize_session(truncated); }), Errc::StoreCorrupt);
  }
}

}  // namespace
}  // namespace textguard::ratchet
