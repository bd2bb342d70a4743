#pragma once

#include "pheno/zoo_runner.hpp"

#include <mutex>
#include <set>
#include <string>
#include <vector>

namespace pheno {

inline constexpr int kStoreSchemaVersion = 1;

std::string record_to_json_line(const RunRecord& r);
/// Throws StoreError naming `where` on malformed input.
RunRecord record_from_json_line(const std::string& line, const std::string& where);

/// Append-only line-delimited run store.
class RunStore {
 public:
  /// Loads existing records. A malformed line raises StoreError unless
  /// `reset` is set, in which case the old file is moved aside.
  explicit RunStore(std::string path, bool reset = false);

  const std::string& path() const { return path_; }
  const std::vector<RunRecord>& records() const { return records_; }
  bool contains(const std::string& fingerprint) const;

  /// Writes one complete line and flushes; safe to call from several threads.
  void append(const RunRecord& r);

 private:
  std::string path_;
  std::vector<RunRecord> records_;
  std::set<std::string> fingerprints_;
  std::mutex mutex_;
};

/// Reads every record of a store file; missing files yield an empty list.
std::vector<RunRecord> load_records(const std::string& path);

}  // namespace pheno
