#pragma once

// Crash-injection hooks. Durable code paths call checkpoint() at the points
// where a process could die; tests install an injector that throws
// SimulatedCrash there and then reopen everything from disk.

#include <atomic>
#include <cstdint>
#include <exception>
#include <string>
#include <string_view>

namespace terratile {

/// Deliberately not derived from Error so that retry and error-reporting
/// paths never swallow it.
class SimulatedCrash : public std::exception {
 public:
  explicit SimulatedCrash(std::string site) : site_(std::move(site)) {}
  const char* what() const noexcept override { return site_.c_str(); }

 private:
  std::string site_;
};

class FaultInjector {
 public:
  virtual ~FaultInjector() = default;
  virtual void checkpoint(std::string_view site) = 0;
};

inline void checkpoint(FaultInjector* faults, std::string_view site) {
  if (faults != nullptr) faults->checkpoint(site);
}

/// Counts checkpoints; never fails.
class CheckpointCounter : public FaultInjector {
 public:
  void checkpoint(std::string_view) override { count_.fetch_add(1, std::memory_order_relaxed); }
  std::uint64_t count() const { return count_.load(); }

 private:
  std::atomic<std::uint64_t> count_{0};
};

/// Throws at the nth checkpoint (1-based) and at every checkpoint after it,
/// so sibling threads of the "dead" process stop at their next hook too.
class CrashAfter : public FaultInjector {
 public:
  explicit CrashAfter(std::uint64_t n) : target_(n) {}

  void checkpoint(std::string_view site) override {
    const std::uint64_t seen = seen_.fetch_add(1) + 1;
    if (seen >= target_) {
      crashed_.store(true);
      throw SimulatedCrash(std::string(site));
    }
  }
  bool crashed() const { return crashed_.load(); }

 private:
  std::uint64_t target_;
  std::atomic<std::uint64_t> seen_{0};
  std::atomic<bool> crashed_{false};
};

}  // namespace terratile
