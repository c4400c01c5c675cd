#include "textguard/stream_cipher.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <random>

#include "support/fixtures.hpp"
#include "support/ofb_oracle.hpp"
#include "textguard/error.hpp"

namespace textguard::stream {
namespace {

using testing::random_bytes;
using testing::random_keys;
using testing::reference_ofb_keystream;

Bytes hex(std::string_view s) { return *from_hex(s); }

Bytes pad_prefix(const KeystreamPad& pad, std::size_t n) {
  return Bytes(pad.bytes().begin(), pad.bytes().begin() + static_cast<std::ptrdiff_t>(n));
}

// Frozen from NIST SP 800-38A F.4.1 (OFB-AES128 "Output Block" values).
TEST(OfbOracle, MatchesNistVector) {
  Block16 key = *array_from<16>(hex("2b7e151628aed2a6abf7158809cf4f3c"));
  Block16 iv = *array_from<16>(hex("000102030405060708090a0b0c0d0e0f"));
  EXPECT_EQ(reference_ofb_keystream(key, iv, 64),
            hex("50fe67cc996d32b6da0937e99bafec60d9a4dada0892239f6b8b3d7680e15674"
                "a78819583f0308e7a6bf36b1386abf23c6d3416d29165c6fcb8e51a227ba994e"));
}

TEST(KeystreamPad, ZeroKeyAndIvMatchesReference) {
  MessageKeys keys;  // all zero
  KeystreamPad pad = pad_init(keys);
  ASSERT_EQ(pad.size(), 16u);
  EXPECT_EQ(pad.consumed(), 0u);
  // AES-128 of the zero block under the zero key.
  EXPECT_EQ(pad_prefix(pad, 16), hex("66e94bd4ef8a2c3b884cfa59ca342b2e"));
  pad_extend(pad);
  EXPECT_EQ(pad_prefix(pad, 32), hex("66e94bd4ef8a2c3b884cfa59ca342b2e"
                                     "f795bd4a52e29ed713d313fa20e98dbc"));
}

TEST(KeystreamPad, NistKeyMatchesNistOutputBlocks) {
  MessageKeys keys;
  keys.cipher_key = *array_from<16>(hex("2b7e151628aed2a6abf7158809cf4f3c"));
  keys.iv = *array_from<16>(hex("000102030405060708090a0b0c0d0e0f"));
  KeystreamPad pad(keys);
  for (int i = 0; i < 3; ++i) pad.extend();
  EXPECT_EQ(pad_prefix(pad, 64),
            hex("50fe67cc996d32b6da0937e99bafec60d9a4dada0892239f6b8b3d7680e15674"
                "a78819583f0308e7a6bf36b1386abf23c6d3416d29165c6fcb8e51a227ba994e"));
}

TEST(KeystreamPad, SelfXorIsZeroAndDeterministic) {
  std::mt19937_64 rng(1);
  auto keys = random_keys(rng);
  KeystreamPad a(keys), b(keys);
  ASSERT_EQ(pad_prefix(a, 16), pad_prefix(b, 16));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i] ^ b[i], 0);
}

TEST(KeystreamPad, ExtensionIsPrefixStable) {
  std::mt19937_64 rng(2);
  auto keys = random_keys(rng);
  KeystreamPad pad(keys);
  Bytes previous = pad_prefix(pad, pad.size());
  for (int i = 0; i < 100; ++i) {
    pad_extend(pad);
    ASSERT_EQ(pad.size() % kBlockSize, 0u);
    ASSERT_TRUE(std::equal(previous.begin(), previous.end(), pad.bytes().begin()));
    previous = pad_prefix(pad, pad.size());
  }
  EXPECT_EQ(pad.size(), 1616u);
  EXPECT_EQ(previous, reference_ofb_keystream(keys.cipher_key, keys.iv, 1616));
}

TEST(KeystreamPad, MatchesReferenceForRandomKeys) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    auto keys = random_keys(rng);
    KeystreamPad pad(keys);
    const int blocks = static_cast<int>(rng() % 8);
    for (int i = 0; i < blocks; ++i) pad.extend();
    ASSERT_EQ(pad_prefix(pad, pad.size()),
              reference_ofb_keystream(keys.cipher_key, keys.iv, pad.size()));
  }
}

TEST(KeystreamPad, ExtendsWhenFewerThanTwoBytesRemain) {
  MessageKeys keys;
  KeystreamPad pad(keys);
  ComposeBuffer buf;
  for (int i = 0; i < 14; ++i) encrypt_append(buf, pad, 'x');
  EXPECT_EQ(pad.size(), 16u);  // 2 unused bytes left, no extension yet
  encrypt_append(buf, pad, 'x');
  EXPECT_EQ(pad.size(), 32u);  // 1 would remain -> one more block
  EXPECT_EQ(pad.consumed(), 15u);
}

TEST(EncryptAppend, ZeroPadByteIsIdentity) {
  // Search deterministic keys for a pad whose first byte is 0x00.
  std::mt19937_64 rng(14);
  for (int attempt = 0; attempt < 100000; ++attempt) {
    auto keys = random_keys(rng);
    KeystreamPad pad(keys);
    if (pad[0] != 0x00) continue;
    ComposeBuffer buf;
    encrypt_append(buf, pad, 0x41);
    EXPECT_EQ(buf.ciphertext.at(0), 0x41);
    return;
  }
  FAIL() << "no zero pad byte found";
}

TEST(EncryptAppend, TwoHundredCharsRoundTrip) {
  std::mt19937_64 rng(4);
  auto keys = random_keys(rng);
  KeystreamPad pad(keys);
  ComposeBuffer buf;
  std::string text;
  for (int i = 0; i < 200; ++i) text.push_back(static_cast<char>('a' + rng() % 26));
  for (char c : text) {
    encrypt_append(buf, pad, static_cast<std::uint8_t>(c));
    ASSERT_EQ(buf.plaintext.size(), buf.ciphertext.size());
  }
  EXPECT_EQ(as_string(decrypt(keys, buf.ciphertext)), text);
  EXPECT_EQ(buf.ciphertext, one_shot_encrypt(keys, as_bytes(text)));
}

TEST(Edit, ReplaceFifthCharacter) {
  MessageKeys keys;
  keys.cipher_key = *array_from<16>(as_bytes("0123456789abcdef"));
  keys.iv = *array_from<16>(as_bytes("fedcba9876543210"));
  KeystreamPad pad(keys);
  ComposeBuffer buf;
  for (char c : std::string_view("hello world")) encrypt_append(buf, pad, static_cast<std::uint8_t>(c));
  edit(buf, pad, 4, EditKind::Replace, 'z');
  EXPECT_EQ(as_string(decrypt(keys, buf.ciphertext)), "hellz world");
  EXPECT_EQ(buf.dirty_from, 0u);  // appends since the last clean
  buf.mark_clean();
  edit(buf, pad, 4, EditKind::Replace, 'o');
  EXPECT_EQ(buf.dirty_from, 4u);
}

TEST(Edit, DeleteLastKeepsPrefix) {
  std::mt19937_64 rng(5);
  auto keys = random_keys(rng);
  KeystreamPad pad(keys);
  ComposeBuffer buf;
  for (char c : std::string_view("abcdef")) encrypt_append(buf, pad, static_cast<std::uint8_t>(c));
  Bytes before = buf.ciphertext;
  edit(buf, pad, 5, EditKind::Delete);
  ASSERT_EQ(buf.plaintext.size(), 5u);
  ASSERT_EQ(buf.ciphertext.size(), 5u);
  EXPECT_TRUE(std::equal(buf.ciphertext.begin(), buf.ciphertext.end(), before.begin()));
}

TEST(Edit, InsertAtFrontShiftsAndRoundTrips) {
  std::mt19937_64 rng(6);
  auto keys = random_keys(rng);
  KeystreamPad pad(keys);
  ComposeBuffer buf;
  for (char c : std::string_view("ello")) encrypt_append(buf, pad, static_cast<std::uint8_t>(c));
  edit(buf, pad, 0, EditKind::Insert, 'h');
  EXPECT_EQ(as_string(decrypt(keys, buf.ciphertext)), "hello");
  EXPECT_EQ(buf.ciphertext, one_shot_encrypt(keys, as_bytes("hello")));
}

TEST(Edit, OutOfRangeIsBadIndex) {
  MessageKeys keys;
  KeystreamPad pad(keys);
  ComposeBuffer buf;
  encrypt_append(buf, pad, 'a');
  try {
    edit(buf, pad, 2, EditKind::Insert, 'b');
    FAIL() << "expected BadIndex";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::BadIndex);
  }
  EXPECT_THROW(edit(buf, pad, 1, EditKind::Replace, 'b'), Error);
  EXPECT_THROW(edit(buf, pad, 1, EditKind::Delete), Error);
  EXPECT_THROW(edit(buf, pad, 0, EditKind::Replace), Error);
}

// Random append/edit scripts must end with exactly the one-shot ciphertext of
// the final plaintext.
TEST(StreamBlockEquivalence, RandomEditScripts) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    auto keys = random_keys(rng);
    KeystreamPad pad(keys);
    ComposeBuffer buf;
    const int ops = 1 + static_cast<int>(rng() % 120);
    for (int op = 0; op < ops; ++op) {
      const auto byte = static_cast<std::uint8_t>(rng());
      const auto n = buf.plaintext.size();
      switch (rng() % 4) {
        case 0:
        case 1: encrypt_append(buf, pad, byte); break;
        case 2: edit(buf, pad, rng() % (n + 1), EditKind::Insert, byte); break;
        case 3:
          if (n > 0) {
            if (rng() % 2) edit(buf, pad, rng() % n, EditKind::Delete);
            else edit(buf, pad, rng() % n, EditKind::Replace, byte);
          }
          break;
      }
      ASSERT_EQ(buf.plaintext.size(), buf.ciphertext.size());
      ASSERT_EQ(pad.size() % kBlockSize, 0u);
      ASSERT_LE(pad.consumed(), pad.size());
    }
    ASSERT_EQ(buf.ciphertext, one_shot_encrypt(keys, buf.plaintext));
  }
}

TEST(OneShot, EmptyAndLengthPreserving) {
  MessageKeys keys;
  EXPECT_TRUE(one_shot_encrypt(keys, {}).empty());
  EXPECT_TRUE(decrypt(keys, {}).empty());
  std::mt19937_64 rng(8);
  auto data = random_bytes(rng, 333);
  EXPECT_EQ(one_shot_encrypt(keys, data).size(), 333u);
}

TEST(OneShot, ThousandCharsWellUnderOneSecond) {
  std::mt19937_64 rng(9);
  auto keys = random_keys(rng);
  auto data = random_bytes(rng, 1000);
  auto t0 = std::chrono::steady_clock::now();
  auto ct = one_shot_encrypt(keys, data);
  auto elapsed = std::chrono::steady_clock::now() - t0;
  EXPECT_LT(elapsed, std::chrono::seconds(1));
  EXPECT_EQ(decrypt(keys, ct), data);
}

TEST(Decrypt, RoundTripUpToTenKilobytes) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    auto keys = random_keys(rng);
    auto data = random_bytes(rng, rng() % 10241);
    ASSERT_EQ(decrypt(keys, one_shot_encrypt(keys, data)), data);
  }
}

TEST(Decrypt, WrongKeysDoNotRecoverPlaintext) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto keys = random_keys(rng);
    auto other = random_keys(rng);
    auto data = random_bytes(rng, 64);
    EXPECT_NE(decrypt(other, one_shot_encrypt(keys, data)), data);
  }
}

TEST(Mac, SealVerifyAndSize) {
  std::mt19937_64 rng(12);
  auto keys = random_keys(rng);
  auto header = random_bytes(rng, 42);
  auto ct = random_bytes(rng, 100);
  Mac mac = seal_mac(keys, header, ct);
  EXPECT_EQ(mac.size(), 8u);
  EXPECT_TRUE(verify_mac(keys, header, ct, mac));
  EXPECT_FALSE(verify_mac(keys, header, ct, ByteView(mac).first(7)));
}

TEST(Mac, AnySingleBitFlipFails) {
  std::mt19937_64 rng(13);
  auto keys = random_keys(rng);
  auto header = random_bytes(rng, 42);
  auto ct = random_bytes(rng, 77);
  Mac mac = seal_mac(keys, header, ct);
  for (int i = 0; i < 100; ++i) {
    auto h = header;
    auto c = ct;
    const std::size_t bit = rng() % ((h.size() + c.size()) * 8);
    if (bit / 8 < h.size()) h[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    else c[bit / 8 - h.size()] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    EXPECT_FALSE(verify_mac(keys, h, c, mac)) << "bit " << bit;
  }
}

}  // namespace
}  // namespace textguard::stream
