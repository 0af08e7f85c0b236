#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "dcsim/common.hpp"

namespace dcsim {

using EventId = std::uint64_t;

// Deterministic discrete-event kernel. Events fire in (fire_time, seq) order
// where seq is assigned at scheduling time, so two events scheduled for the
// same instant run in scheduling order. Single-threaded by contract.
class Engine {
 public:
  EventId schedule_at(TimeMs at, std::function<void()> handler) {
    if (at < now_) {
      throw Error("schedule_at: t=" + std::to_string(at) + " is in the past (now=" +
                  std::to_string(now_) + ")");
    }
    EventId id = next_seq_++;
    queue_.push(Entry{at, id, std::move(handler)});
    return id;
  }

  EventId schedule_after(DurationMs delay, std::function<void()> handler) {
    return schedule_at(now_ + delay, std::move(handler));
  }

  TimeMs now() const { return now_; }
  std::size_t processed() const { return processed_; }
  bool idle() const { return queue_.empty(); }

  // Processes every event with fire_time <= t_end; the clock lands on t_end.
  // Returns the number of events processed by this call.
  std::size_t run_until(TimeMs t_end) {
    std::size_t n = 0;
    while (!queue_.empty() && queue_.top().fire_time <= t_end) {
      n += step();
    }
    if (t_end > now_) now_ = t_end;
    return n;
  }

  std::size_t run_all() {
    std::size_t n = 0;
    while (!queue_.empty()) n += step();
    return n;
  }

 private:
  struct Entry {
    TimeMs fire_time;
    EventId seq;
    std::function<void()> handler;
  };
  struct Later {
    bool operator()(const Entry& a, const Entry& b) const {
      if (a.fire_time != b.fire_time) return a.fire_time > b.fire_time;
      return a.seq > b.seq;
    }
  };

  std::size_t step() {
    Entry e = queue_.top();
    queue_.pop();
    now_ = e.fire_time;
    ++processed_;
    try {
      e.handler();
    } catch (const std::exception& ex) {
      throw Error("event " + std::to_string(e.seq) + " at t=" + std::to_string(e.fire_time) +
                  "ms failed: " + ex.what());
    }
    return 1;
  }

  TimeMs now_ = 0;
  EventId next_seq_ = 0;
  std::size_t processed_ = 0;
  std::priority_queue<Entry, std::vector<Entry>, Later> queue_;
};

}  // namespace dcsim
