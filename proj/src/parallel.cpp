#include "fedtiny/parallel.hpp"

#include <cstdlib>
#include <string>

namespace fedtiny {

std::size_t default_workers() {
  if (const char* env = std::getenv("FEDTINY_WORKERS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace fedtiny
