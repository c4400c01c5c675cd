#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace textguard {

enum class Errc {
  InvalidSeed,
  BundleRejected,
  PrekeyMissing,
  KeyErased,
  TooManySkipped,
  InvalidState,
  BadIndex,
  MacMismatch,
  HeaderParseError,
  LengthMismatch,
  MalformedToken,
  CaptureDenied,
  ContactNotFound,
  DirectoryUnavailable,
  NothingToDecrypt,
  Unrecoverable,
  ClockError,
  EmptySelection,
  StoreUnavailable,
  StoreCorrupt,
  SessionNotFound,
  CacheCorrupt,
  Rejected,
  NotFound,
  SpecError,
  FocusLost,
  GuiClosed,
  Busy,
  BadRequest,
  CryptoFailure,
};

/// Stable snake_case identifier, used in JSON error payloads.
std::string_view to_string(Errc code);

/// CLI exit code family: 3 store, 4 crypto/integrity, 5 network, 2 usage.
int exit_code(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  explicit Error(Errc code) : Error(code, std::string(to_string(code))) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace textguard
