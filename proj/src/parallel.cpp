#include "csnc/parallel.hpp"

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace csnc {

void parallel_ranges(std::size_t count, std::size_t workers,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, std::max<std::size_t>(count, 1)));
  const std::size_t per = count / workers, extra = count % workers;
  auto range = [&](std::size_t w) {
    const std::size_t begin = w * per + std::min(w, extra);
    return std::pair{begin, begin + per + (w < extra ? 1 : 0)};
  };
  if (workers == 1) {
    fn(0, count, 0);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        const auto [b, e] = range(w);
        fn(b, e, w);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  try {
    const auto [b, e] = range(0);
    fn(b, e, 0);
  } catch (...) {
    errors[0] = std::current_exception();
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::size_t hardware_threads() {
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

}  // namespace csnc
