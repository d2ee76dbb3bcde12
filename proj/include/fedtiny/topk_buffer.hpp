#pragma once

#include <atomic>
#include <cstddef>
#include <span>
#include <vector>

namespace fedtiny {

struct GradEntry {
  std::size_t index = 0;
  double value = 0.0;

  friend bool operator==(const GradEntry&, const GradEntry&) = default;
};

// True when `a` ranks strictly ahead of `b`: larger |value|, then lower index.
inline bool ranks_above(const GradEntry& a, const GradEntry& b) noexcept {
  const double ma = a.value < 0 ? -a.value : a.value;
  const double mb = b.value < 0 ? -b.value : b.value;
  return ma != mb ? ma > mb : a.index < b.index;
}

// Bounded store of the `capacity` highest-ranked gradients pushed so far.
//
// Storage is a min-heap on rank with the weakest entry on top; a new entry
// replaces the top only if it ranks above it. Never holds more than
// `capacity` entries.
class TopKBuffer {
 public:
  explicit TopKBuffer(std::size_t capacity = 0);

  void push(std::size_t index, double value);

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return heap_.size(); }
  std::size_t peak_size() const noexcept { return peak_; }
  std::size_t pushes() const noexcept { return pushes_; }

  // Entries ordered by rank (|value| descending, index ascending).
  std::vector<GradEntry> entries() const;

  // Process-wide count of observed size > capacity events (must stay 0).
  static std::size_t capacity_violations() noexcept { return violations_.load(); }

 private:
  std::size_t capacity_ = 0;
  std::size_t peak_ = 0;
  std::size_t pushes_ = 0;
  std::vector<GradEntry> heap_;
  static inline std::atomic<std::size_t> violations_{0};
};

}  // namespace fedtiny
