#pragma once

#include <cstddef>
#include <new>
#include <type_traits>
#include <utility>
#include <vector>

namespace ploc {

namespace detail {
// Large tensor buffers are recycled by exact byte size: a training step
// requests the same sizes every iteration, and fresh pages from the OS
// cost more than the arithmetic on them.
void* pool_allocate(std::size_t bytes);
void pool_release(void* p, std::size_t bytes) noexcept;
}  // namespace detail

/// Bytes currently parked in the buffer cache.
std::size_t pooled_bytes();
/// Returns every parked buffer to the system allocator.
void release_pooled_buffers();

template <typename T>
struct PooledAllocator {
  using value_type = T;

  PooledAllocator() = default;
  template <typename U>
  PooledAllocator(const PooledAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(detail::pool_allocate(n * sizeof(T))); }
  void deallocate(T* p, std::size_t n) noexcept { detail::pool_release(p, n * sizeof(T)); }

  // Default-initialize on resize(n) so arithmetic buffers are not zeroed
  // twice; assign(n, v) still fills.
  template <typename U>
  void construct(U* p) noexcept(std::is_nothrow_default_constructible_v<U>) {
    ::new (static_cast<void*>(p)) U;
  }
  template <typename U, typename... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }

  template <typename U>
  bool operator==(const PooledAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using PooledVector = std::vector<T, PooledAllocator<T>>;

}  // namespace ploc
