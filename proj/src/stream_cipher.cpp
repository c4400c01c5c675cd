#include "textguard/stream_cipher.hpp"

#include <openssl/evp.h>

#include "textguard/error.hpp"

namespace textguard::stream {

namespace {

struct CtxDeleter {
  void operator()(EVP_CIPHER_CTX* ctx) const { EVP_CIPHER_CTX_free(ctx); }
};
using CtxPtr = std::unique_ptr<EVP_CIPHER_CTX, CtxDeleter>;

CtxPtr make_ofb(const MessageKeys& keys) {
  CtxPtr ctx(EVP_CIPHER_CTX_new());
  if (!ctx || EVP_EncryptInit_ex(ctx.get(), EVP_aes_128_ofb(), nullptr,
                                 keys.cipher_key.data(), keys.iv.data()) != 1)
    throw Error(Errc::CryptoFailure, "AES-128-OFB init failed");
  return ctx;
}

void ofb_update(EVP_CIPHER_CTX* ctx, ByteView in, std::uint8_t* out) {
  int len = 0;
  if (in.empty()) return;
  if (EVP_EncryptUpdate(ctx, out, &len, in.data(), static_cast<int>(in.size())) != 1 ||
      static_cast<std::size_t>(len) != in.size())
    throw Error(Errc::CryptoFailure, "AES-128-OFB update failed");
}

}  // namespace

struct KeystreamPad::Context {
  CtxPtr ofb;
};

KeystreamPad::KeystreamPad(const MessageKeys& keys)
    : ctx_(std::make_unique<Context>(Context{make_ofb(keys)})) {
  extend();
}

KeystreamPad::~KeystreamPad() { wipe(); }
KeystreamPad::KeystreamPad(KeystreamPad&&) noexcept = default;
KeystreamPad& KeystreamPad::operator=(KeystreamPad&& other) noexcept {
  if (this != &other) {
    wipe();
    ctx_ = std::move(other.ctx_);
    pad_ = std::move(other.pad_);
    consumed_ = other.consumed_;
  }
  return *this;
}

void KeystreamPad::extend() {
  if (!ctx_) throw Error(Errc::InvalidState, "keystream pad was wiped");
  static constexpr std::array<std::uint8_t, kBlockSize> kZeros{};
  const std::size_t old = pad_.size();
  pad_.resize(old + kBlockSize);
  // Encrypting zeros leaves the raw keystream in the output.
  ofb_update(ctx_->ofb.get(), kZeros, pad_.data() + old);
}

void KeystreamPad::reserve_through(std::size_t index) {
  while (pad_.size() < index + 1 + kLowWaterBytes) extend();
}

void KeystreamPad::set_consumed(std::size_t n) {
  reserve_through(n == 0 ? 0 : n - 1);
  consumed_ = n;
}

void KeystreamPad::wipe() {
  crypto::wipe(pad_);
  pad_.clear();
  consumed_ = 0;
  ctx_.reset();
}

void ComposeBuffer::wipe() {
  crypto::wipe(plaintext);
  crypto::wipe(ciphertext);
  plaintext.clear();
  ciphertext.clear();
  dirty_from = 0;
  changed = false;
}

void encrypt_append(ComposeBuffer& buf, KeystreamPad& pad, std::uint8_t byte) {
  const std::size_t i = buf.plaintext.size();
  pad.reserve_through(i);
  buf.plaintext.push_back(byte);
  buf.ciphertext.push_back(byte ^ pad[i]);
  pad.set_consumed(i + 1);
  buf.dirty_from = std::min(buf.dirty_from, i);
  buf.changed = true;
}

void edit(ComposeBuffer& buf, KeystreamPad& pad, std::size_t index, EditKind kind,
          std::optional<std::uint8_t> byte) {
  const std::size_t n = buf.plaintext.size();
  const bool in_range = kind == EditKind::Insert ? index <= n : index < n;
  if (!in_range)
    throw Error(Errc::BadIndex, "edit index " + std::to_string(index) +
                                    " outside buffer of length " + std::to_string(n));
  if (kind != EditKind::Delete && !byte)
    throw Error(Errc::BadIndex, "replace/insert needs a byte");

  switch (kind) {
    case EditKind::Replace:
      buf.plaintext[index] = *byte;
      break;
    case EditKind::Insert:
      buf.plaintext.insert(buf.plaintext.begin() + static_cast<std::ptrdiff_t>(index), *byte);
      break;
    case EditKind::Delete:
      buf.plaintext.erase(buf.plaintext.begin() + static_cast<std::ptrdiff_t>(index));
      break;
  }

  // Pad bytes are indexed by final plaintext position, so every position at or
  // after the edit is re-bound against the pad.
  const std::size_t len = buf.plaintext.size();
  if (len > 0) pad.reserve_through(len - 1);
  buf.ciphertext.resize(len);
  for (std::size_t i = index; i < len; ++i) buf.ciphertext[i] = buf.plaintext[i] ^ pad[i];
  pad.set_consumed(len);
  buf.dirty_from = std::min(buf.dirty_from, index);
  buf.changed = true;
}

Bytes one_shot_encrypt(const MessageKeys& keys, ByteView plaintext) {
  Bytes out(plaintext.size());
  if (plaintext.empty()) return out;
  auto ctx = make_ofb(keys);
  ofb_update(ctx.get(), plaintext, out.data());
  return out;
}

Bytes decrypt(const MessageKeys& keys, ByteView ciphertext) {
  // OFB is its own inverse.
  return one_shot_encrypt(keys, ciphertext);
}

Mac seal_mac(const MessageKeys& keys, ByteView header_bytes, ByteView ciphertext) {
  Bytes data(header_bytes.begin(), header_bytes.end());
  data.insert(data.end(), ciphertext.begin(), ciphertext.end());
  Key32 full = crypto::hmac_sha256(keys.mac_key, data);
  Mac mac{};
  std::copy_n(full.begin(), kMacSize, mac.begin());
  return mac;
}

bool verify_mac(const MessageKeys& keys, ByteView header_bytes, ByteView ciphertext,
                ByteView mac) {
  const Mac expected = seal_mac(keys, header_bytes, ciphertext);
  return crypto::equal_ct(expected, mac);
}

}  // namespace textguard::stream
