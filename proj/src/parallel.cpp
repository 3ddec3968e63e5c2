#include "mapattack/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace mapattack {

int worker_count() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  int workers = static_cast<int>(hw);
  if (const char* env = std::getenv("MAP_ATTACK_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) {
      workers = static_cast<int>(std::min<long>(v, 64));
    }
  }
  return std::max(1, workers);
}

void parallel_for(std::size_t n, int workers,
                  const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t k =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), n);
  if (k == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::atomic<bool> failed{false};

  auto body = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        fn(i);
      } catch (...) {
        if (!failed.exchange(true)) first_error = std::current_exception();
        return;
      }
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(k);
  for (std::size_t t = 0; t < k; ++t) threads.emplace_back(body);
  for (auto& t : threads) t.join();
  if (failed.load() && first_error) std::rethrow_exception(first_error);
}

}  // namespace mapattack
