#pragma once

#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "hwros/core.hpp"

namespace hwros {

/// Instrumentation points along the hardware-thread call path. Collected in
/// arrival order; tests check the event sequence against the documented
/// take protocol (command, dispatch, arena store, unblock, address response,
/// memory read).
struct TraceEvent {
  enum class Kind {
    CommandSent,
    DelegateDispatch,
    ArenaStore,
    DelegateUnblock,
    AddressResponse,
    MemifRead,
    MemifWrite,
  };
  Kind kind;
  u32 thread_id = 0;       // hardware thread id, 0 when not applicable
  std::string resource;    // topic/service name when known
  Addr addr = 0;
  u64 corr = 0;
};

class Tracer {
 public:
  using Sink = std::function<void(const TraceEvent&)>;

  void set_sink(Sink s) {
    std::lock_guard lock(mu_);
    sink_ = std::move(s);
  }

  void emit(TraceEvent ev) {
    std::lock_guard lock(mu_);
    if (sink_) sink_(ev);
  }

  bool active() const {
    std::lock_guard lock(mu_);
    return static_cast<bool>(sink_);
  }

 private:
  mutable std::mutex mu_;
  Sink sink_;
};

/// Convenience sink that records events into a vector.
class TraceLog {
 public:
  void attach(Tracer& t) {
    t.set_sink([this](const TraceEvent& ev) {
      std::lock_guard lock(mu_);
      events_.push_back(ev);
    });
  }

  std::vector<TraceEvent> snapshot() const {
    std::lock_guard lock(mu_);
    return events_;
  }

  void clear() {
    std::lock_guard lock(mu_);
    events_.clear();
  }

 private:
  mutable std::mutex mu_;
  std::vector<TraceEvent> events_;
};

}  // namespace hwros
