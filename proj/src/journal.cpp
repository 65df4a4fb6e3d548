#include "terratile/journal.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "terratile/common.hpp"

namespace terratile {

namespace {

constexpr std::string_view kStateNames[] = {"queued", "cutting", "cut", "loading",
                                            "loaded", "cleaned", "failed"};

std::string encode_line(const JournalEntry& e) {
  nlohmann::json j{{"job", e.job_id},         {"state", to_string(e.state)}, {"attempt", e.attempt},
                   {"ts", e.ts_ms},           {"bytes", e.bytes},            {"phase_ms", e.phase_ms}};
  if (!e.error.empty()) j["error"] = e.error;
  const std::string body = j.dump();
  char crc[9];
  std::snprintf(crc, sizeof crc, "%08x", crc32(body));
  return std::string(crc) + " " + body + "\n";
}

bool decode_line(std::string_view line, JournalEntry& out) {
  if (line.size() < 10 || line[8] != ' ') return false;
  std::uint32_t crc = 0;
  const auto [ptr, ec] = std::from_chars(line.data(), line.data() + 8, crc, 16);
  if (ec != std::errc() || ptr != line.data() + 8) return false;
  const std::string_view body = line.substr(9);
  if (crc32(body) != crc) return false;
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) return false;
  try {
    out.job_id = j.at("job").get<int>();
    out.state = parse_job_state(j.at("state").get<std::string>());
    out.attempt = j.at("attempt").get<int>();
    out.ts_ms = j.at("ts").get<std::int64_t>();
    out.bytes = j.value("bytes", std::uint64_t{0});
    out.phase_ms = j.value("phase_ms", std::int64_t{0});
    out.error = j.value("error", std::string());
  } catch (const std::exception&) {
    return false;
  }
  return true;
}

/// Parses complete, valid lines; returns the byte length they cover.
std::size_t parse_entries(std::string_view text, std::vector<JournalEntry>& out) {
  std::size_t at = 0;
  while (at < text.size()) {
    const std::size_t nl = text.find('\n', at);
    if (nl == std::string_view::npos) break;
    JournalEntry e;
    if (!decode_line(text.substr(at, nl - at), e)) break;
    out.push_back(std::move(e));
    at = nl + 1;
  }
  return at;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string_view to_string(JobState state) { return kStateNames[static_cast<int>(state)]; }

JobState parse_job_state(std::string_view text) {
  for (int i = 0; i < kJobStateCount; ++i) {
    if (kStateNames[i] == text) return static_cast<JobState>(i);
  }
  throw FormatError("unknown job state: " + std::string(text));
}

bool is_legal_transition(JobState from, JobState to) {
  if (to == JobState::Failed) return from != JobState::Failed;
  if (from == JobState::Failed) return to == JobState::Queued;
  return static_cast<int>(to) == static_cast<int>(from) + 1 && to != JobState::Failed;
}

std::map<int, JobStatus> replay_journal(const std::vector<JournalEntry>& entries) {
  std::map<int, JobStatus> out;
  for (const auto& e : entries) {
    JobStatus& s = out[e.job_id];
    s.state = e.state;
    s.attempts = std::max(s.attempts, e.attempt);
    s.transitions[e.state] = e.ts_ms;
    if (e.state == JobState::Failed) s.last_error = e.error;
  }
  return out;
}

Journal::Journal(std::filesystem::path path, bool sync, FaultInjector* faults)
    : path_(std::move(path)), sync_(sync), faults_(faults) {
  const std::string text = slurp(path_);
  size_ = parse_entries(text, entries_);
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw IoError("open " + path_.string() + ": " + std::strerror(errno));
  if (size_ < text.size()) {
    if (::ftruncate(fd_, static_cast<off_t>(size_)) != 0 || (sync_ && ::fsync(fd_) != 0)) {
      ::close(fd_);
      throw IoError("cannot truncate journal " + path_.string());
    }
  }
}

Journal::~Journal() {
  if (fd_ >= 0) ::close(fd_);
}

std::vector<JournalEntry> Journal::read(const std::filesystem::path& path) {
  std::vector<JournalEntry> out;
  parse_entries(slurp(path), out);
  return out;
}

void Journal::append(const JournalEntry& entry) {
  const std::string line = encode_line(entry);
  std::lock_guard lock(mutex_);
  checkpoint(faults_, "journal.append");
  auto write_at = [&](std::size_t from, std::size_t n) {
    std::size_t done = 0;
    while (done < n) {
      const ssize_t w = ::pwrite(fd_, line.data() + from + done, n - done,
                                 static_cast<off_t>(size_ + from + done));
      if (w < 0) {
        if (errno == EINTR) continue;
        throw IoError("journal write: " + std::string(std::strerror(errno)));
      }
      done += static_cast<std::size_t>(w);
    }
  };
  const std::size_t half = line.size() / 2;
  write_at(0, half);
  checkpoint(faults_, "journal.torn");
  write_at(half, line.size() - half);
  if (sync_ && ::fsync(fd_) != 0) throw IoError("journal fsync failed");
  size_ += line.size();
  entries_.push_back(entry);
  checkpoint(faults_, "journal.synced");
}

std::vector<JournalEntry> Journal::entries() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

}  // namespace terratile
