#pragma once

#include <cstddef>
#include <deque>

namespace podsim {

// Sliding window of recent lookup outcomes toward one foreign domain.
// The score is successes/W once the window is warm, successes/observed
// before that.
class DomainReputation {
 public:
  DomainReputation() = default;
  explicit DomainReputation(size_t window) : window_(window) {}

  double add(bool success) {
    outcomes_.push_back(success);
    if (success) ++successes_;
    if (outcomes_.size() > window_) {
      if (outcomes_.front()) --successes_;
      outcomes_.pop_front();
    }
    return score();
  }

  double score() const {
    if (outcomes_.empty()) return 1.0;
    return static_cast<double>(successes_) /
           static_cast<double>(outcomes_.size());
  }

  size_t observed() const { return outcomes_.size(); }
  bool warm() const { return outcomes_.size() >= window_; }
  size_t window() const { return window_; }

 private:
  size_t window_ = 20;
  size_t successes_ = 0;
  std::deque<bool> outcomes_;
};

}  // namespace podsim
