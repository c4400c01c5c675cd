#include "textguard/keystore.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>

#include "textguard/error.hpp"
#include "textguard/fsutil.hpp"

namespace textguard::store {

namespace stdfs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kCacheMagic = "TGC1";
constexpr std::size_t kNonceSize = 12;

[[noreturn]] void corrupt(const stdfs::path& file, const std::string& why) {
  throw Error(Errc::StoreCorrupt, file.string() + ": " + why);
}

template <std::size_t N>
std::array<std::uint8_t, N> hex_array(const json& j, const char* field, const stdfs::path& file) {
  if (!j.contains(field) || !j[field].is_string()) corrupt(file, std::string("missing ") + field);
  auto raw = from_hex(j[field].get<std::string>());
  if (!raw) corrupt(file, std::string("bad hex in ") + field);
  auto arr = array_from<N>(*raw);
  if (!arr) corrupt(file, std::string("wrong length for ") + field);
  return *arr;
}

json read_json(const stdfs::path& file) {
  auto raw = fs::read_file(file);
  if (!raw) throw Error(Errc::StoreUnavailable, file.string() + ": missing");
  try {
    return json::parse(raw->begin(), raw->end());
  } catch (const json::exception& e) {
    corrupt(file, e.what());
  }
}

void write_json(const stdfs::path& file, const json& j) {
  auto text = j.dump(2) + "\n";
  fs::write_file_atomic(file, as_bytes(text));
}

Key32 read_key_file(const stdfs::path& file) {
  auto raw = fs::read_file(file);
  if (!raw) throw Error(Errc::StoreUnavailable, file.string() + ": missing");
  auto key = array_from<32>(*raw);
  if (!key) corrupt(file, "expected 32 bytes");
  return *key;
}

std::uint32_t get_u32(const json& j, const char* field, const stdfs::path& file) {
  if (!j.contains(field) || !j[field].is_number_unsigned()) corrupt(file, std::string("missing ") + field);
  auto v = j[field].get<std::uint64_t>();
  if (v > 0xffffffffu) corrupt(file, std::string("out of range ") + field);
  return static_cast<std::uint32_t>(v);
}

void put_u64(Bytes& out, std::uint64_t v) {
  for (int i = 7; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace

bool valid_contact_id(std::string_view id) {
  if (id.empty() || id.size() > kMaxContactIdBytes) return false;
  for (unsigned char c : id)
    if (c < 0x20 || c == 0x7f) return false;
  // Reject malformed UTF-8 so ids survive the JSON index unchanged.
  std::size_t i = 0;
  while (i < id.size()) {
    unsigned char c = static_cast<unsigned char>(id[i]);
    std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xe ? 3 : (c >> 3) == 0x1e ? 4 : 0;
    if (len == 0 || i + len > id.size()) return false;
    for (std::size_t k = 1; k < len; ++k)
      if ((static_cast<unsigned char>(id[i + k]) & 0xc0) != 0x80) return false;
    i += len;
  }
  return true;
}

Key32 token_hash(std::string_view token_text) { return crypto::sha256(as_bytes(token_text)); }

Store::Store(stdfs::path root, crypto::Entropy& entropy)
    : root_(std::move(root)), entropy_(&entropy), mutex_(std::make_unique<std::mutex>()) {}

Store::Store(Store&&) noexcept = default;
Store& Store::operator=(Store&&) noexcept = default;
Store::~Store() {
  crypto::wipe(cache_key_);
  crypto::wipe(identity_.private_key);
}

bool Store::exists(const stdfs::path& root) {
  std::error_code ec;
  return stdfs::exists(root / "store.json", ec);
}

Store Store::init(const stdfs::path& root, std::optional<ByteView> seed, crypto::Entropy& entropy,
                  std::size_t one_time_prekeys) {
  if (exists(root)) throw Error(Errc::StoreUnavailable, root.string() + ": already initialized");
  fs::ensure_private_dir(root);
  fs::ensure_private_dir(root / "sessions");
  fs::ensure_private_dir(root / "cache");

  Store s(root, entropy);
  fs::FileLock lock(root / ".lock");
  s.identity_ = seed ? ratchet::generate_identity(*seed) : ratchet::generate_identity(entropy);
  auto prekeys = ratchet::LocalPreKeys::generate(s.identity_, one_time_prekeys, entropy);
  s.registration_id_ = prekeys.registration_id;
  s.cache_key_ = entropy.key32();

  fs::write_file_atomic(root / "identity.key", s.identity_.private_key);
  fs::write_file_atomic(root / "cache.key", s.cache_key_);
  s.save_prekeys(prekeys);
  // The index goes last: its presence marks a complete store.
  s.write_index();
  return s;
}

Store Store::open(const stdfs::path& root, crypto::Entropy& entropy) {
  if (!exists(root)) throw Error(Errc::StoreUnavailable, root.string() + ": no store here");
  Store s(root, entropy);
  s.identity_ = ratchet::generate_identity(read_key_file(root / "identity.key"));
  s.cache_key_ = read_key_file(root / "cache.key");
  s.load_index();
  return s;
}

void Store::load_index() {
  const auto file = root_ / "store.json";
  json j = read_json(file);
  if (!j.is_object()) corrupt(file, "not an object");
  if (get_u32(j, "format", file) != kStoreFormat) corrupt(file, "unsupported format");
  registration_id_ = get_u32(j, "registration_id", file);
  std::vector<ContactRecord> contacts;
  if (!j.contains("contacts") || !j["contacts"].is_array()) corrupt(file, "missing contacts");
  for (const auto& c : j["contacts"]) {
    ContactRecord r;
    if (!c.contains("id") || !c["id"].is_string()) corrupt(file, "contact without id");
    r.contact_id = c["id"].get<std::string>();
    r.identity_pub = hex_array<32>(c, "identity_pub", file);
    r.verified = c.value("verified", false);
    if (c.contains("pending_identity")) r.pending_identity = hex_array<32>(c, "pending_identity", file);
    contacts.push_back(std::move(r));
  }
  contacts_ = std::move(contacts);
}

void Store::write_index() const {
  json contacts = json::array();
  for (const auto& c : contacts_) {
    json e = {{"id", c.contact_id}, {"identity_pub", to_hex(c.identity_pub)}, {"verified", c.verified}};
    if (c.pending_identity) e["pending_identity"] = to_hex(*c.pending_identity);
    contacts.push_back(std::move(e));
  }
  json j = {{"format", kStoreFormat},
            {"registration_id", registration_id_},
            {"identity_pub", to_hex(identity_.public_key)},
            {"contacts", std::move(contacts)}};
  write_json(root_ / "store.json", j);
}

std::uint32_t Store::registration_id() const { return registration_id_; }

ratchet::LocalPreKeys Store::prekeys() const {
  std::lock_guard guard(*mutex_);
  const auto file = root_ / "prekeys.json";
  json j = read_json(file);
  ratchet::LocalPreKeys p;
  p.registration_id = get_u32(j, "registration_id", file);
  p.signed_prekey_id = get_u32(j, "signed_prekey_id", file);
  p.signed_prekey = crypto::DhKeyPair::from_private(hex_array<32>(j, "signed_prekey", file));
  p.signed_prekey_signature = hex_array<64>(j, "signature", file);
  p.next_one_time_id = get_u32(j, "next_one_time_id", file);
  if (!j.contains("one_time") || !j["one_time"].is_object()) corrupt(file, "missing one_time");
  for (const auto& [id, priv] : j["one_time"].items()) {
    std::uint32_t n = 0;
    try {
      n = static_cast<std::uint32_t>(std::stoul(id));
    } catch (const std::exception&) {
      corrupt(file, "bad one-time prekey id");
    }
    json holder = {{"k", priv}};
    p.one_time.emplace(n, crypto::DhKeyPair::from_private(hex_array<32>(holder, "k", file)));
  }
  return p;
}

void Store::save_prekeys(const ratchet::LocalPreKeys& p) {
  std::lock_guard guard(*mutex_);
  json one_time = json::object();
  for (const auto& [id, kp] : p.one_time) one_time[std::to_string(id)] = to_hex(kp.private_key);
  json j = {{"format", kStoreFormat},
            {"registration_id", p.registration_id},
            {"signed_prekey_id", p.signed_prekey_id},
            {"signed_prekey", to_hex(p.signed_prekey.private_key)},
            {"signature", to_hex(p.signed_prekey_signature)},
            {"one_time", std::move(one_time)},
            {"next_one_time_id", p.next_one_time_id}};
  write_json(root_ / "prekeys.json", j);
}

std::vector<ContactRecord> Store::contacts() const {
  std::lock_guard guard(*mutex_);
  const_cast<Store*>(this)->load_index();
  return contacts_;
}

std::optional<ContactRecord> Store::contact(std::string_view id) const {
  for (auto& c : contacts())
    if (c.contact_id == id) return c;
  return std::nullopt;
}

std::optional<ContactRecord> Store::contact_by_identity(const Key32& identity_pub) const {
  for (auto& c : contacts())
    if (c.identity_pub == identity_pub) return c;
  return std::nullopt;
}

ContactUpdate Store::observe_contact(std::string_view id, const Key32& identity_pub) {
  if (!valid_contact_id(id)) throw Error(Errc::BadRequest, "invalid contact id");
  std::lock_guard guard(*mutex_);
  fs::FileLock lock(root_ / ".lock");
  load_index();
  auto it = std::find_if(contacts_.begin(), contacts_.end(),
                         [&](const ContactRecord& c) { return c.contact_id == id; });
  if (it == contacts_.end()) {
    contacts_.push_back({std::string(id), identity_pub, false, std::nullopt});
    write_index();
    return ContactUpdate::Added;
  }
  if (it->identity_pub == identity_pub) return ContactUpdate::Unchanged;
  if (it->pending_identity != identity_pub) {
    it->pending_identity = identity_pub;
    write_index();
  }
  return ContactUpdate::KeyChanged;
}

void Store::verify_contact(std::string_view id) {
  std::lock_guard guard(*mutex_);
  fs::FileLock lock(root_ / ".lock");
  load_index();
  auto it = std::find_if(contacts_.begin(), contacts_.end(),
                         [&](const ContactRecord& c) { return c.contact_id == id; });
  if (it == contacts_.end()) throw Error(Errc::ContactNotFound, std::string(id));
  if (it->pending_identity) {
    it->identity_pub = *it->pending_identity;
    it->pending_identity.reset();
  }
  it->verified = true;
  write_index();
}

stdfs::path Store::session_path(std::string_view contact_id) const {
  return root_ / "sessions" / (to_hex(crypto::sha256(as_bytes(contact_id))) + ".session");
}

stdfs::path Store::cache_path(const Key32& hash) const {
  return root_ / "cache" / (to_hex(hash) + ".sealed");
}

bool Store::has_session(std::string_view contact_id) const {
  std::error_code ec;
  return stdfs::exists(session_path(contact_id), ec);
}

void Store::save_session(std::string_view contact_id, const ratchet::SessionState& session) {
  if (!contact(contact_id)) throw Error(Errc::ContactNotFound, std::string(contact_id));
  std::lock_guard guard(*mutex_);
  fs::FileLock lock(root_ / ".lock");
  auto blob = ratchet::serialize_session(session);
  fs::write_file_atomic(session_path(contact_id), blob);
  crypto::wipe(blob);
}

ratchet::SessionState Store::load_session(std::string_view contact_id) const {
  const auto file = session_path(contact_id);
  auto blob = fs::read_file(file);
  if (!blob) throw Error(Errc::SessionNotFound, std::string(contact_id));
  try {
    auto s = ratchet::deserialize_session(*blob);
    crypto::wipe(*blob);
    return s;
  } catch (const Error& e) {
    crypto::wipe(*blob);
    corrupt(file, e.what());
  }
}

void Store::delete_session(std::string_view contact_id) {
  std::lock_guard guard(*mutex_);
  std::error_code ec;
  stdfs::remove(session_path(contact_id), ec);
}

void Store::cache_put(const Key32& hash, std::string_view plaintext) {
  const auto now = std::chrono::duration_cast<std::chrono::microseconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                       .count();
  Bytes header(kCacheMagic.begin(), kCacheMagic.end());
  put_u64(header, static_cast<std::uint64_t>(now));
  Bytes nonce(kNonceSize);
  entropy_->fill(nonce);
  Bytes aad = header;
  aad.insert(aad.end(), hash.begin(), hash.end());
  auto sealed = crypto::aes256gcm_seal(cache_key_, nonce, aad, as_bytes(plaintext));

  Bytes file = header;
  file.insert(file.end(), nonce.begin(), nonce.end());
  file.insert(file.end(), sealed.begin(), sealed.end());
  std::lock_guard guard(*mutex_);
  fs::write_file_atomic(cache_path(hash), file);
}

std::optional<std::string> Store::cache_get(const Key32& hash) const {
  const auto path = cache_path(hash);
  auto file = fs::read_file(path);
  if (!file) return std::nullopt;
  const std::size_t header_size = kCacheMagic.size() + 8;
  if (file->size() < header_size + kNonceSize ||
      !std::equal(kCacheMagic.begin(), kCacheMagic.end(), file->begin()))
    throw Error(Errc::CacheCorrupt, path.string());
  Bytes aad(file->begin(), file->begin() + header_size);
  aad.insert(aad.end(), hash.begin(), hash.end());
  ByteView nonce(file->data() + header_size, kNonceSize);
  ByteView sealed(file->data() + header_size + kNonceSize, file->size() - header_size - kNonceSize);
  auto opened = crypto::aes256gcm_open(cache_key_, nonce, aad, sealed);
  if (!opened) throw Error(Errc::CacheCorrupt, path.string());
  std::string out = as_string(*opened);
  crypto::wipe(*opened);
  return out;
}

std::size_t Store::cache_size() const {
  std::size_t n = 0;
  std::error_code ec;
  for (const auto& e : stdfs::directory_iterator(root_ / "cache", ec))
    if (e.path().extension() == ".sealed") ++n;
  return n;
}

void Store::mark_seen(const Key32& hash) {
  if (was_seen(hash)) return;
  std::lock_guard guard(*mutex_);
  fs::FileLock lock(root_ / ".lock");
  auto existing = fs::read_file(root_ / "seen.log").value_or(Bytes{});
  auto line = to_hex(hash) + "\n";
  existing.insert(existing.end(), line.begin(), line.end());
  fs::write_file_atomic(root_ / "seen.log", existing);
}

bool Store::was_seen(const Key32& hash) const {
  auto raw = fs::read_file(root_ / "seen.log");
  if (!raw) return false;
  return as_string(*raw).find(to_hex(hash) + "\n") != std::string::npos;
}

}  // namespace textguard::store
