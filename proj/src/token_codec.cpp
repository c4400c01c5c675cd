#include "textguard/token_codec.hpp"

#include <openssl/evp.h>

#include <cmath>

#include "textguard/error.hpp"

namespace textguard::codec {

namespace {

enum Tag : std::uint8_t {
  kTagVersion = 0x01,
  kTagRatchetKey = 0x02,
  kTagCounter = 0x03,
  kTagPreviousCounter = 0x04,
  kTagCiphertextLength = 0x05,
  kTagHandshake = 0x06,
};

constexpr std::size_t kMaxVarintBytes = 5;

void append_varint64(Bytes& out, std::uint64_t value) {
  while (value >= 0x80) {
    out.push_back(static_cast<std::uint8_t>(value | 0x80));
    value >>= 7;
  }
  out.push_back(static_cast<std::uint8_t>(value));
}

[[noreturn]] void parse_fail(const std::string& what) {
  throw Error(Errc::HeaderParseError, what);
}

class Cursor {
 public:
  explicit Cursor(ByteView data) : data_(data) {}

  std::uint8_t byte(const char* what) {
    if (pos_ >= data_.size()) parse_fail(std::string("truncated before ") + what);
    return data_[pos_++];
  }
  void expect(std::uint8_t tag, const char* what) {
    if (byte(what) != tag) parse_fail(std::string("expected tag for ") + what);
  }
  std::uint8_t peek() const { return pos_ < data_.size() ? data_[pos_] : 0; }
  ByteView take(std::size_t n, const char* what) {
    if (data_.size() - pos_ < n) parse_fail(std::string("truncated ") + what);
    auto v = data_.subspan(pos_, n);
    pos_ += n;
    return v;
  }
  std::uint64_t varint(const char* what, std::uint64_t max) {
    std::uint64_t value = 0;
    for (std::size_t i = 0; i < kMaxVarintBytes; ++i) {
      const std::uint8_t b = byte(what);
      value |= std::uint64_t{static_cast<std::uint8_t>(b & 0x7f)} << (7 * i);
      if (!(b & 0x80)) {
        if (i > 0 && b == 0) parse_fail(std::string("non-canonical varint in ") + what);
        if (value > max) parse_fail(std::string("varint out of range in ") + what);
        return value;
      }
    }
    parse_fail(std::string("varint too long in ") + what);
  }
  std::size_t pos() const { return pos_; }

 private:
  ByteView data_;
  std::size_t pos_ = 0;
};

Bytes serialize_handshake(const ratchet::HandshakeHeader& h) {
  Bytes out;
  out.insert(out.end(), h.identity_pub.begin(), h.identity_pub.end());
  out.insert(out.end(), h.ephemeral_pub.begin(), h.ephemeral_pub.end());
  append_varint64(out, h.signed_prekey_id);
  append_varint64(out, h.one_time_prekey_id ? std::uint64_t{*h.one_time_prekey_id} + 1 : 0);
  return out;
}

ratchet::HandshakeHeader parse_handshake(ByteView body) {
  Cursor c(body);
  ratchet::HandshakeHeader h;
  h.identity_pub = *array_from<32>(c.take(32, "handshake identity"));
  h.ephemeral_pub = *array_from<32>(c.take(32, "handshake ephemeral"));
  h.signed_prekey_id =
      static_cast<std::uint32_t>(c.varint("signed prekey id", UINT32_MAX));
  const std::uint64_t otpk = c.varint("one-time prekey id", std::uint64_t{UINT32_MAX} + 1);
  if (otpk > 0) h.one_time_prekey_id = static_cast<std::uint32_t>(otpk - 1);
  if (c.pos() != body.size()) parse_fail("trailing bytes in handshake field");
  return h;
}

bool is_b64_char(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
         c == '+' || c == '/';
}

int b64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  return c == '+' ? 62 : 63;
}

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

std::size_t varint_size(std::uint32_t value) {
  std::size_t n = 1;
  while (value >= 0x80) {
    value >>= 7;
    ++n;
  }
  return n;
}

void append_varint(Bytes& out, std::uint32_t value) { append_varint64(out, value); }

Bytes serialize_header(const MetadataHeader& h) {
  Bytes out;
  out.reserve(kBaseHeaderSize);
  out.push_back(kTagVersion);
  out.push_back(h.message_version);
  out.push_back(kTagRatchetKey);
  out.push_back(static_cast<std::uint8_t>(h.ratchet_pub.size()));
  out.insert(out.end(), h.ratchet_pub.begin(), h.ratchet_pub.end());
  out.push_back(kTagCounter);
  append_varint(out, h.counter);
  out.push_back(kTagPreviousCounter);
  append_varint(out, h.previous_counter);
  if (h.handshake) {
    Bytes body = serialize_handshake(*h.handshake);
    out.push_back(kTagHandshake);
    append_varint(out, static_cast<std::uint32_t>(body.size()));
    out.insert(out.end(), body.begin(), body.end());
  }
  out.push_back(kTagCiphertextLength);
  append_varint(out, h.ciphertext_length);
  return out;
}

MetadataHeader parse_header(ByteView data, std::size_t* consumed) {
  Cursor c(data);
  MetadataHeader h;
  c.expect(kTagVersion, "message version");
  h.message_version = c.byte("message version");
  if (h.message_version != ratchet::kMessageVersion)
    parse_fail("unsupported message version");
  c.expect(kTagRatchetKey, "ratchet key");
  if (c.byte("ratchet key length") != 32) parse_fail("ratchet key must be 32 bytes");
  h.ratchet_pub = *array_from<32>(c.take(32, "ratchet key"));
  c.expect(kTagCounter, "counter");
  h.counter = static_cast<std::uint32_t>(c.varint("counter", UINT32_MAX));
  c.expect(kTagPreviousCounter, "previous counter");
  h.previous_counter = static_cast<std::uint32_t>(c.varint("previous counter", UINT32_MAX));
  if (c.peek() == kTagHandshake) {
    c.byte("handshake");
    const auto len = c.varint("handshake length", 256);
    h.handshake = parse_handshake(c.take(static_cast<std::size_t>(len), "handshake"));
  }
  c.expect(kTagCiphertextLength, "ciphertext length");
  h.ciphertext_length = static_cast<std::uint32_t>(c.varint("ciphertext length", UINT32_MAX));
  if (consumed) *consumed = c.pos();
  return h;
}

std::string base64_encode(ByteView data) {
  std::string out(4 * ((data.size() + 2) / 3), '\0');
  if (data.empty()) return out;
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data.data(),
                                static_cast<int>(data.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::optional<Bytes> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) return std::nullopt;
  if (text.empty()) return Bytes{};
  std::size_t padding = 0;
  if (text.back() == '=') ++padding;
  if (text.size() >= 2 && text[text.size() - 2] == '=') ++padding;
  for (std::size_t i = 0; i < text.size() - padding; ++i)
    if (!is_b64_char(text[i])) return std::nullopt;
  // Reject non-canonical encodings: unused low bits before padding must be 0.
  const char last = text[text.size() - padding - 1];
  if (padding == 1 && (b64_value(last) & 0x03) != 0) return std::nullopt;
  if (padding == 2 && (b64_value(last) & 0x0f) != 0) return std::nullopt;

  Bytes out(text.size() / 4 * 3);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0 || static_cast<std::size_t>(n) != out.size()) return std::nullopt;
  out.resize(out.size() - padding);
  return out;
}

WireToken encode_token(const MetadataHeader& header, ByteView ciphertext,
                       const stream::Mac& mac) {
  if (header.ciphertext_length != ciphertext.size())
    throw Error(Errc::LengthMismatch, "header declares " +
                                          std::to_string(header.ciphertext_length) +
                                          " ciphertext bytes, got " +
                                          std::to_string(ciphertext.size()));
  Bytes payload = serialize_header(header);
  payload.insert(payload.end(), ciphertext.begin(), ciphertext.end());
  payload.insert(payload.end(), mac.begin(), mac.end());
  WireToken token;
  token.text.reserve(kGuardStart.size() + kGuardEnd.size() + 4 * (payload.size() + 2) / 3);
  token.text.append(kGuardStart);
  token.text.append(base64_encode(payload));
  token.text.append(kGuardEnd);
  return token;
}

DecodedToken decode_token(const WireToken& token) {
  std::string_view t = token.text;
  if (t.size() < kGuardStart.size() + kGuardEnd.size() || !t.starts_with(kGuardStart) ||
      !t.ends_with(kGuardEnd))
    throw Error(Errc::MalformedToken, "token delimiters missing");
  auto interior = t.substr(kGuardStart.size(), t.size() - kGuardStart.size() - kGuardEnd.size());
  auto payload = base64_decode(interior);
  if (!payload) throw Error(Errc::MalformedToken, "token interior is not valid base64");

  DecodedToken out;
  std::size_t header_len = 0;
  out.header = parse_header(*payload, &header_len);
  const std::size_t expected =
      header_len + std::size_t{out.header.ciphertext_length} + stream::kMacSize;
  if (payload->size() != expected)
    throw Error(Errc::LengthMismatch, "token payload is " + std::to_string(payload->size()) +
                                          " bytes, header implies " + std::to_string(expected));
  out.header_bytes.assign(payload->begin(), payload->begin() + static_cast<std::ptrdiff_t>(header_len));
  out.ciphertext.assign(payload->begin() + static_cast<std::ptrdiff_t>(header_len),
                        payload->end() - static_cast<std::ptrdiff_t>(stream::kMacSize));
  std::copy(payload->end() - static_cast<std::ptrdiff_t>(stream::kMacSize), payload->end(),
            out.mac.begin());
  return out;
}

std::vector<ScanItem> scan_tokens(std::string_view selection) {
  std::vector<ScanItem> items;
  std::size_t pos = 0;
  while (pos < selection.size()) {
    const std::size_t start = selection.find(kGuardStart, pos);
    const std::size_t end_any = selection.find(kGuardEnd, pos);
    if (start == std::string_view::npos) {
      if (end_any != std::string_view::npos)
        items.emplace_back(MalformedCandidate{end_any, "Guard-end without Guard-start"});
      break;
    }
    if (end_any != std::string_view::npos && end_any < start) {
      items.emplace_back(MalformedCandidate{end_any, "Guard-end without Guard-start"});
      pos = end_any + kGuardEnd.size();
      continue;
    }
    const std::size_t body = start + kGuardStart.size();
    const std::size_t end = selection.find(kGuardEnd, body);
    const std::size_t next_start = selection.find(kGuardStart, body);
    if (end == std::string_view::npos) {
      items.emplace_back(MalformedCandidate{start, "Guard-start without Guard-end"});
      if (next_start == std::string_view::npos) break;
      pos = next_start;
      continue;
    }
    if (next_start != std::string_view::npos && next_start < end) {
      items.emplace_back(MalformedCandidate{start, "Guard-start without Guard-end"});
      pos = next_start;
      continue;
    }

    std::string interior;
    for (char c : selection.substr(body, end - body))
      if (!is_space(c)) interior.push_back(c);
    pos = end + kGuardEnd.size();

    WireToken token{std::string(kGuardStart) + interior + std::string(kGuardEnd)};
    try {
      decode_token(token);
      items.emplace_back(std::move(token));
    } catch (const Error& e) {
      items.emplace_back(MalformedCandidate{start, e.what()});
    }
  }
  return items;
}

std::size_t overhead_bytes(std::size_t plaintext_length, std::uint32_t message_number) {
  MetadataHeader h;
  h.counter = message_number;
  h.previous_counter = message_number;
  h.ciphertext_length = static_cast<std::uint32_t>(plaintext_length);
  const std::size_t payload = serialize_header(h).size() + plaintext_length + stream::kMacSize;
  const std::size_t armored = 4 * ((payload + 2) / 3);
  return kGuardStart.size() + kGuardEnd.size() + armored - plaintext_length;
}

double approximate_overhead(std::size_t plaintext_length, std::uint32_t message_number) {
  const double l = static_cast<double>(plaintext_length);
  return 0.33 * l + 50.0 + std::floor(l / 128.0) +
         2.0 * std::floor(static_cast<double>(message_number) / 128.0);
}

void require_supported(Armor armor) {
  if (armor != Armor::Base64)
    throw Error(Errc::BadRequest, "only base64 armor is a supported wire format");
}

}  // namespace textguard::codec
