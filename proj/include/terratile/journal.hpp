#pragma once

// Append-only job journal for the load workflow. Each line is
// "<crc32 hex> <json>"; every append is fsync'd before it is acknowledged.
// A torn or corrupt tail (from a crash mid-append) is ignored on read and
// truncated when the journal is reopened for writing.

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "terratile/fault.hpp"

namespace terratile {

enum class JobState : std::uint8_t { Queued, Cutting, Cut, Loading, Loaded, Cleaned, Failed };

inline constexpr int kJobStateCount = 7;

std::string_view to_string(JobState state);
JobState parse_job_state(std::string_view text);

/// Legal single-step transitions; any state may move to failed, failed
/// only back to queued.
bool is_legal_transition(JobState from, JobState to);

struct JournalEntry {
  int job_id = 0;
  JobState state = JobState::Queued;
  int attempt = 0;
  std::int64_t ts_ms = 0;
  std::uint64_t bytes = 0;    // bytes processed by the phase this entry completes
  std::int64_t phase_ms = 0;  // wall time of that phase
  std::string error;
};

struct JobStatus {
  JobState state = JobState::Queued;
  int attempts = 0;
  std::map<JobState, std::int64_t> transitions;  // last timestamp per state
  std::string last_error;
};

/// Folds entries into per-job status. Jobs without entries are not listed.
std::map<int, JobStatus> replay_journal(const std::vector<JournalEntry>& entries);

class Journal {
 public:
  /// Opens (creating if needed) and truncates any torn tail.
  explicit Journal(std::filesystem::path path, bool sync = true, FaultInjector* faults = nullptr);
  ~Journal();
  Journal(const Journal&) = delete;
  Journal& operator=(const Journal&) = delete;

  /// Read-only parse; stops at the first damaged line.
  static std::vector<JournalEntry> read(const std::filesystem::path& path);

  void append(const JournalEntry& entry);
  std::vector<JournalEntry> entries() const;

 private:
  std::filesystem::path path_;
  bool sync_;
  FaultInjector* faults_;
  mutable std::mutex mutex_;
  std::vector<JournalEntry> entries_;
  int fd_ = -1;
  std::uint64_t size_ = 0;
};

}  // namespace terratile
