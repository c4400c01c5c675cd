#pragma once

// Small POSIX file helpers shared by the keystore and the file-backed
// directory. Everything written here is owner-only.

#include <filesystem>
#include <optional>

#include "textguard/crypto.hpp"

namespace textguard::fs {

namespace stdfs = std::filesystem;

/// Creates `dir` (and parents) and sets mode 0700. Throws StoreUnavailable.
void ensure_private_dir(const stdfs::path& dir);

/// Write to a temporary sibling, fsync, rename. Mode 0600.
/// Throws StoreUnavailable.
void write_file_atomic(const stdfs::path& path, ByteView data);

/// nullopt if the file does not exist; throws StoreUnavailable on other errors.
std::optional<Bytes> read_file(const stdfs::path& path);

/// Exclusive advisory lock (flock) held for the lifetime of the object.
class FileLock {
 public:
  explicit FileLock(const stdfs::path& lock_path);
  ~FileLock();
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

}  // namespace textguard::fs
