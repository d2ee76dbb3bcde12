#include "fedtiny/topk_buffer.hpp"

#include <algorithm>

namespace fedtiny {

namespace {

// std heap functions build a max-heap under `less`; ranking "weaker" as
// greater puts the weakest entry on top.
struct WeakerOnTop {
  bool operator()(const GradEntry& a, const GradEntry& b) const noexcept {
    return ranks_above(a, b);
  }
};

}  // namespace

TopKBuffer::TopKBuffer(std::size_t capacity) : capacity_(capacity) { heap_.reserve(capacity); }

void TopKBuffer::push(std::size_t index, double value) {
  ++pushes_;
  if (capacity_ == 0) return;
  const GradEntry e{index, value};
  if (heap_.size() < capacity_) {
    heap_.push_back(e);
    std::push_heap(heap_.begin(), heap_.end(), WeakerOnTop{});
  } else if (ranks_above(e, heap_.front())) {
    std::pop_heap(heap_.begin(), heap_.end(), WeakerOnTop{});
    heap_.back() = e;
    std::push_heap(heap_.begin(), heap_.end(), WeakerOnTop{});
  }
  peak_ = std::max(peak_, heap_.size());
  if (heap_.size() > capacity_) ++violations_;
}

std::vector<GradEntry> TopKBuffer::entries() const {
  std::vector<GradEntry> out = heap_;
  std::sort(out.begin(), out.end(), ranks_above);
  return out;
}

}  // namespace fedtiny
