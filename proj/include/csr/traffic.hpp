#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <random>
#include <span>
#include <stdexcept>

#include "csr/random.hpp"

namespace csr {

struct TrafficConfig {
  double arrival_rate_per_slot = 0.02;  // per STA queue
  std::size_t queue_capacity = 100;

  friend bool operator==(const TrafficConfig&, const TrafficConfig&) = default;

  void validate() const {
    if (!(arrival_rate_per_slot >= 0.0)) throw std::invalid_argument("arrival_rate_per_slot must be >= 0");
    if (queue_capacity == 0) throw std::invalid_argument("queue_capacity must be positive");
  }
};

struct Packet {
  std::int64_t generation_slot = 0;
};

// FIFO for one (AP, STA) downlink flow.
class PacketQueue {
 public:
  explicit PacketQueue(std::size_t capacity = 100) : capacity_(capacity) {}

  std::size_t size() const { return packets_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return packets_.empty(); }
  bool full() const { return packets_.size() >= capacity_; }
  const Packet& front() const { return packets_.front(); }

  std::uint64_t arrivals() const { return arrivals_; }
  std::uint64_t drops() const { return drops_; }
  std::uint64_t departures() const { return departures_; }

  // Returns false (and counts a drop) when the buffer is full.
  bool push(std::int64_t slot) {
    ++arrivals_;
    if (full()) {
      ++drops_;
      return false;
    }
    if (!packets_.empty() && slot < packets_.back().generation_slot)
      throw std::logic_error("packet generation slots must be non-decreasing");
    packets_.push_back({slot});
    return true;
  }

  // Removes the head packet after a successful transmission; returns its delay in slots.
  std::int64_t dequeue_on_success(std::int64_t current_slot) {
    if (packets_.empty()) throw std::logic_error("dequeue_on_success on an empty queue");
    const std::int64_t delay = current_slot - packets_.front().generation_slot;
    packets_.pop_front();
    ++departures_;
    return delay;
  }

 private:
  std::size_t capacity_;
  std::deque<Packet> packets_;
  std::uint64_t arrivals_ = 0;
  std::uint64_t drops_ = 0;
  std::uint64_t departures_ = 0;
};

// Poisson(rate) arrivals into every queue, stamped with current_slot.
inline std::size_t arrivals_step(std::span<PacketQueue> queues, double rate_per_slot,
                                 std::int64_t current_slot, Rng& rng) {
  if (rate_per_slot < 0.0) throw std::invalid_argument("negative arrival rate");
  if (rate_per_slot == 0.0) return 0;
  std::poisson_distribution<int> arrivals(rate_per_slot);
  std::size_t dropped = 0;
  for (auto& q : queues) {
    const int n = arrivals(rng);
    for (int i = 0; i < n; ++i)
      if (!q.push(current_slot)) ++dropped;
  }
  return dropped;
}

}  // namespace csr
