#pragma once

#include <algorithm>
#include <deque>
#include <optional>
#include <vector>

#include "ebtrain/errors.hpp"
#include "ebtrain/mask.hpp"

namespace ebt {

struct EBDetectionResult {
  bool triggered = false;
  int epoch = -1;  // t*: the epoch whose mask is returned
  ChannelMask ticket;
};

/// Online emergence detector: keeps a FIFO of the last `window` consecutive-
/// epoch mask distances and triggers once the window is full and its maximum
/// drops strictly below epsilon. Distances are on the per-pair normalized
/// [0,1] scale.
class EBDetector {
 public:
  explicit EBDetector(double epsilon = 0.1, int window = 5) : epsilon_(epsilon), window_(window) {
    if (epsilon < 0.0) throw ConfigError("detector: epsilon must be >= 0");
    if (window < 1) throw ConfigError("detector: window length must be >= 1");
  }

  /// Feeds the mask drawn at the end of the current epoch. The first call
  /// only records the mask; later calls push one distance each.
  EBDetectionResult step(const ChannelMask& current) {
    ++epoch_;
    if (prev_) {
      if (prev_->size() != current.size()) {
        throw DimensionError("detector: mask length changed across epochs");
      }
      push(mask_distance(*prev_, current));
    }
    prev_ = current;
    prev_->source_epoch = epoch_;
    EBDetectionResult result;
    if (queue_.size() == static_cast<std::size_t>(window_) && max_window() < epsilon_) {
      result.triggered = true;
      result.epoch = epoch_;
      result.ticket = *prev_;
    }
    return result;
  }

  /// Distance-level entry point; step() delegates here. Exposed so the FIFO
  /// semantics can be exercised directly.
  void push(double distance) {
    if (queue_.size() == static_cast<std::size_t>(window_)) queue_.pop_front();
    queue_.push_back(distance);
  }

  bool window_full() const { return queue_.size() == static_cast<std::size_t>(window_); }

  double max_window() const {
    double m = 0.0;
    for (double d : queue_) m = std::max(m, d);
    return m;
  }

  void reset() {
    queue_.clear();
    prev_.reset();
    epoch_ = 0;
  }

  double epsilon() const { return epsilon_; }
  int window() const { return window_; }
  int epoch() const { return epoch_; }
  const std::deque<double>& queue() const { return queue_; }
  const std::optional<ChannelMask>& previous_mask() const { return prev_; }
  double last_distance() const { return queue_.empty() ? -1.0 : queue_.back(); }

  /// Checkpoint restore.
  void restore(const std::deque<double>& q, std::optional<ChannelMask> prev, int epoch) {
    if (q.size() > static_cast<std::size_t>(window_)) throw DataError("detector: saved queue longer than window");
    queue_ = q;
    prev_ = std::move(prev);
    epoch_ = epoch;
  }

 private:
  double epsilon_;
  int window_;
  std::deque<double> queue_;
  std::optional<ChannelMask> prev_;
  int epoch_ = 0;
};

/// Offline detection over a saved mask sequence; exactly equivalent to
/// folding EBDetector::step over the masks.
inline EBDetectionResult retroactive_detect(const std::vector<ChannelMask>& masks, double epsilon = 0.1,
                                            int window = 5) {
  EBDetector det(epsilon, window);
  for (const auto& m : masks) {
    const EBDetectionResult r = det.step(m);
    if (r.triggered) return r;
  }
  return {};
}

}  // namespace ebt
