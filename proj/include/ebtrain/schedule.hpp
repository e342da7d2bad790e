#pragma once

#include <cmath>
#include <vector>

#include "ebtrain/errors.hpp"

namespace ebt {

/// Step-decay schedule: lr(t) = initial * factor^(milestones passed by t).
struct LRSchedule {
  double initial = 0.1;
  std::vector<int> milestones;  // strictly increasing epoch numbers
  double factor = 0.1;          // decay per milestone, in (0,1)

  void validate() const {
    if (initial < 0.0) throw ConfigError("lr schedule: initial lr must be >= 0");
    if (!(factor > 0.0 && factor < 1.0)) throw ConfigError("lr schedule: decay factor must be in (0,1)");
    for (std::size_t i = 1; i < milestones.size(); ++i) {
      if (milestones[i] <= milestones[i - 1]) throw ConfigError("lr schedule: milestones must be strictly increasing");
    }
  }
};

inline double lr_at_epoch(const LRSchedule& s, int t) {
  if (t < 0) throw ConfigError("lr_at_epoch: epoch must be >= 0");
  double lr = s.initial;
  for (int m : s.milestones) {
    if (m <= t) lr *= s.factor;
  }
  return lr;
}

/// Default milestones at 50% and 75% of the epoch budget, mirroring the
/// 160-epoch [80,120] schedule at any scale.
inline LRSchedule scaled_schedule(double initial, int epochs, double factor = 0.1) {
  LRSchedule s;
  s.initial = initial;
  s.factor = factor;
  const int m1 = static_cast<int>(std::lround(0.50 * epochs));
  const int m2 = static_cast<int>(std::lround(0.75 * epochs));
  if (m1 >= 1) s.milestones.push_back(m1);
  if (m2 > m1) s.milestones.push_back(m2);
  return s;
}

}  // namespace ebt
