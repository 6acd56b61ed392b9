#include "p3d/parallel.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace p3d {

namespace {
std::atomic<int> g_threads{1};
}

void set_thread_count(int n) {
    g_threads.store(n < 1 ? 1 : n);
}

int thread_count() {
    return g_threads.load();
}

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
    const int workers = static_cast<int>(std::min<int64_t>(thread_count(), n));
    if (workers <= 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (int64_t i = w; i < n; i += workers) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace p3d
