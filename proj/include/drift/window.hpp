#pragma once

#include <cstddef>
#include <vector>

#include "drift/errors.hpp"
#include "drift/types.hpp"

namespace drift {

struct WindowSample {
  VehicleState state;
  ControlInput input;
  double t = 0.0;
};

/// Fixed-capacity ring buffer of recent (state, input, timestamp) triples.
/// Timestamps must be strictly increasing.
class TrajectoryWindow {
 public:
  explicit TrajectoryWindow(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ < 3) throw Error("TrajectoryWindow: capacity must be >= 3");
    buf_.reserve(capacity_);
  }

  void push(const VehicleState& s, const ControlInput& u, double t) {
    if (!buf_.empty() && t <= latest_t())
      throw Error("TrajectoryWindow: timestamps must be strictly increasing");
    if (buf_.size() < capacity_) {
      buf_.push_back({s, u, t});
    } else {
      buf_[head_] = {s, u, t};
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return buf_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool full() const { return buf_.size() == capacity_; }

  double latest_t() const {
    const std::size_t i = buf_.size() < capacity_ ? buf_.size() - 1
                                                  : (head_ + capacity_ - 1) % capacity_;
    return buf_[i].t;
  }

  /// Chronological copy of the contents.
  std::vector<WindowSample> snapshot() const {
    std::vector<WindowSample> out;
    out.reserve(buf_.size());
    if (buf_.size() < capacity_) {
      out = buf_;
    } else {
      for (std::size_t k = 0; k < capacity_; ++k)
        out.push_back(buf_[(head_ + k) % capacity_]);
    }
    return out;
  }

  void clear() {
    buf_.clear();
    head_ = 0;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<WindowSample> buf_;
};

}  // namespace drift
