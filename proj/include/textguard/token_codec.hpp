#pragma once

// Armored wire format.
//
//   token   = "Guard-start" base64(header || ciphertext || mac) "Guard-end"
//   header  = 01 version
//             02 20 ratchet_pub[32]
//             03 varint(counter)
//             04 varint(previous_counter)
//             [06 varint(n) handshake[n]]
//             05 varint(ciphertext_length)
//   handshake = identity_pub[32] ephemeral_pub[32]
//               varint(signed_prekey_id) varint(one_time_prekey_id + 1 | 0)
//
// Varints are unsigned LEB128, canonical, at most 5 bytes. Base64 is RFC 4648
// with the standard alphabet and padding. The handshake field is present only
// on messages sent before the initiator has heard back from the responder.
// The length field always comes last so the ciphertext boundary is explicit.
//
// With every varint at one byte the header is 42 bytes; with the 8-byte MAC
// the fixed per-message metadata is 50 bytes.

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "textguard/crypto.hpp"
#include "textguard/ratchet.hpp"
#include "textguard/stream_cipher.hpp"

namespace textguard::codec {

inline constexpr std::string_view kGuardStart = "Guard-start";
inline constexpr std::string_view kGuardEnd = "Guard-end";
inline constexpr std::size_t kBaseHeaderSize = 42;
inline constexpr std::size_t kBaseMetadataSize = kBaseHeaderSize + stream::kMacSize;

struct MetadataHeader {
  std::uint8_t message_version = ratchet::kMessageVersion;
  Key32 ratchet_pub{};
  std::uint32_t counter = 0;
  std::uint32_t previous_counter = 0;
  std::uint32_t ciphertext_length = 0;
  std::optional<ratchet::HandshakeHeader> handshake;

  ratchet::HeaderFields fields() const { return {ratchet_pub, counter, previous_counter}; }
  friend bool operator==(const MetadataHeader&, const MetadataHeader&) = default;
};

std::size_t varint_size(std::uint32_t value);
void append_varint(Bytes& out, std::uint32_t value);

Bytes serialize_header(const MetadataHeader& header);
/// Parses a header from the front of `data`; `consumed` receives its length.
/// Throws HeaderParseError.
MetadataHeader parse_header(ByteView data, std::size_t* consumed = nullptr);

std::string base64_encode(ByteView data);
/// Strict: canonical padding, standard alphabet, no whitespace.
std::optional<Bytes> base64_decode(std::string_view text);

struct WireToken {
  std::string text;
  friend bool operator==(const WireToken&, const WireToken&) = default;
};

/// Throws LengthMismatch if header.ciphertext_length != ciphertext.size().
WireToken encode_token(const MetadataHeader& header, ByteView ciphertext,
                       const stream::Mac& mac);

struct DecodedToken {
  MetadataHeader header;
  Bytes header_bytes;
  Bytes ciphertext;
  stream::Mac mac{};
};

/// Inverse of encode_token. Throws MalformedToken (bad delimiters or base64)
/// or HeaderParseError / LengthMismatch (bad payload).
DecodedToken decode_token(const WireToken& token);

struct MalformedCandidate {
  std::size_t offset = 0;
  std::string reason;
};

/// One scan result, in selection order: either a well-formed token or a
/// candidate that could not be decoded.
using ScanItem = std::variant<WireToken, MalformedCandidate>;

/// Finds every Guard-delimited token in free text. Whitespace inside the
/// armored interior (line wrapping) is dropped; returned tokens are canonical.
std::vector<ScanItem> scan_tokens(std::string_view selection);

/// Total token length minus plaintext length, from the actual layout, for a
/// message of length `plaintext_length` with counter and previous counter
/// both equal to `message_number` and no handshake field.
std::size_t overhead_bytes(std::size_t plaintext_length, std::uint32_t message_number);

/// The closed-form estimate 0.33 L + 50 + floor(L/128) + 2 floor(n/128),
/// kept for comparison tables only.
double approximate_overhead(std::size_t plaintext_length, std::uint32_t message_number);

/// Alternate armor suggested by users; recognised but not a valid wire format.
enum class Armor { Base64, Base62 };
/// Throws BadRequest for anything but Base64.
void require_supported(Armor armor);

}  // namespace textguard::codec
