#include "polarloc/buffer_pool.hpp"

#include <algorithm>
#include <cstdlib>
#include <mutex>
#include <unordered_map>

namespace ploc {
namespace {

constexpr std::size_t kMinPooledBytes = std::size_t{1} << 16;
constexpr std::size_t kMaxPooledBytes = std::size_t{3} << 30;
// Fixed alignment keeps vectorized reductions on the same summation order
// from run to run, wherever the buffer lands.
constexpr std::size_t kAlignment = 64;

struct Pool {
  std::mutex mutex;
  std::unordered_map<std::size_t, std::vector<void*>> free_lists;
  std::size_t parked = 0;

  ~Pool() {
    for (auto& [bytes, list] : free_lists)
      for (void* p : list) std::free(p);
  }
};

Pool& pool() {
  static Pool instance;
  return instance;
}

}  // namespace

namespace detail {

void* pool_allocate(std::size_t bytes) {
  if (bytes >= kMinPooledBytes) {
    auto& p = pool();
    std::lock_guard lock(p.mutex);
    auto it = p.free_lists.find(bytes);
    if (it != p.free_lists.end() && !it->second.empty()) {
      void* ptr = it->second.back();
      it->second.pop_back();
      p.parked -= bytes;
      return ptr;
    }
  }
  const std::size_t rounded = (std::max<std::size_t>(bytes, 1) + kAlignment - 1) / kAlignment * kAlignment;
  void* ptr = std::aligned_alloc(kAlignment, rounded);
  if (!ptr) throw std::bad_alloc();
  return ptr;
}

void pool_release(void* ptr, std::size_t bytes) noexcept {
  if (!ptr) return;
  if (bytes >= kMinPooledBytes) {
    auto& p = pool();
    std::lock_guard lock(p.mutex);
    if (p.parked + bytes <= kMaxPooledBytes) {
      try {
        p.free_lists[bytes].push_back(ptr);
        p.parked += bytes;
        return;
      } catch (...) {
      }
    }
  }
  std::free(ptr);
}

}  // namespace detail

std::size_t pooled_bytes() {
  auto& p = pool();
  std::lock_guard lock(p.mutex);
  return p.parked;
}

void release_pooled_buffers() {
  auto& p = pool();
  std::lock_guard lock(p.mutex);
  for (auto& [bytes, list] : p.free_lists)
    for (void* ptr : list) std::free(ptr);
  p.free_lists.clear();
  p.parked = 0;
}

}  // namespace ploc
