#include "textguard/error.hpp"

namespace textguard {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::InvalidSeed: return "invalid_seed";
    case Errc::BundleRejected: return "bundle_rejected";
    case Errc::PrekeyMissing: return "prekey_missing";
    case Errc::KeyErased: return "key_erased";
    case Errc::TooManySkipped: return "too_many_skipped";
    case Errc::InvalidState: return "invalid_state";
    case Errc::BadIndex: return "bad_index";
    case Errc::MacMismatch: return "mac_mismatch";
    case Errc::HeaderParseError: return "header_parse_error";
    case Errc::LengthMismatch: return "length_mismatch";
    case Errc::MalformedToken: return "malformed_token";
    case Errc::CaptureDenied: return "capture_denied";
    case Errc::ContactNotFound: return "contact_not_found";
    case Errc::DirectoryUnavailable: return "directory_unavailable";
    case Errc::NothingToDecrypt: return "nothing_to_decrypt";
    case Errc::Unrecoverable: return "unrecoverable";
    case Errc::ClockError: return "clock_error";
    case Errc::EmptySelection: return "empty_selection";
    case Errc::StoreUnavailable: return "store_unavailable";
    case Errc::StoreCorrupt: return "store_corrupt";
    case Errc::SessionNotFound: return "session_not_found";
    case Errc::CacheCorrupt: return "cache_corrupt";
    case Errc::Rejected: return "rejected";
    case Errc::NotFound: return "not_found";
    case Errc::SpecError: return "spec_error";
    case Errc::FocusLost: return "focus_lost";
    case Errc::GuiClosed: return "gui_closed";
    case Errc::Busy: return "busy";
    case Errc::BadRequest: return "bad_request";
    case Errc::CryptoFailure: return "crypto_failure";
  }
  return "unknown";
}

int exit_code(Errc code) {
  switch (code) {
    case Errc::StoreUnavailable:
    case Errc::StoreCorrupt:
    case Errc::SessionNotFound:
    case Errc::CacheCorrupt:
    case Errc::ContactNotFound:
      return 3;
    case Errc::DirectoryUnavailable:
    case Errc::Rejected:
    case Errc::NotFound:
      return 5;
    case Errc::SpecError:
    case Errc::BadRequest:
    case Errc::InvalidSeed:
    case Errc::ClockError:
      return 2;
    default:
      return 4;
  }
}

}  // namespace textguard
