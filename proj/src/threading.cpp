#include "ncopt/threading.hpp"

#include <exception>
#include <thread>
#include <vector>

#include "ncopt/common.hpp"

namespace ncopt {

int hardware_threads() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

int resolve_threads(int requested) {
  NC_REQUIRE(requested >= 0, "thread count must be >= 0, got " << requested);
  return requested == 0 ? hardware_threads() : requested;
}

void parallel_for(int64_t begin, int64_t end, int threads,
                  const std::function<void(int64_t)>& fn) {
  const int64_t count = end - begin;
  if (count <= 0) return;
  threads = resolve_threads(threads);
  if (threads > count) threads = static_cast<int>(count);

  if (threads == 1) {
    for (int64_t i = begin; i < end; ++i) fn(i);
    return;
  }

  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  const int64_t chunk = (count + threads - 1) / threads;
  for (int w = 0; w < threads; ++w) {
    const int64_t lo = begin + w * chunk;
    const int64_t hi = std::min(end, lo + chunk);
    pool.emplace_back([&, w, lo, hi]() {
      try {
        for (int64_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace ncopt
