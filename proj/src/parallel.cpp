#include "msvar/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "msvar/errors.hpp"

namespace msvar {

namespace {

std::atomic<std::size_t> g_max_threads{1};

}  // namespace

std::size_t max_threads() { return g_max_threads.load(std::memory_order_relaxed); }

void set_max_threads(std::size_t n) {
    if (n == 0) throw ParameterError("thread count must be positive");
    g_max_threads.store(n, std::memory_order_relaxed);
}

void configure_threads_from_env() {
    const char* raw = std::getenv("MSVAR_THREADS");
    if (raw == nullptr) return;
    const std::string_view text(raw);
    std::size_t n = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), n);
    if (ec != std::errc{} || ptr != text.data() + text.size() || n == 0) {
        throw ParameterError("MSVAR_THREADS must be a positive integer, got '" + std::string(text) + "'");
    }
    set_max_threads(n);
}

void parallel_for(std::size_t count, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t grain) {
    const std::size_t workers =
        std::min(max_threads(), grain == 0 ? count : std::max<std::size_t>(1, count / grain));
    if (workers <= 1) {
        if (count > 0) body(0, count);
        return;
    }
    const std::size_t chunk = (count + workers - 1) / workers;
    std::vector<std::jthread> threads;
    threads.reserve(workers - 1);
    for (std::size_t t = 1; t < workers; ++t) {
        const std::size_t begin = t * chunk;
        const std::size_t end = std::min(count, begin + chunk);
        if (begin < end) threads.emplace_back([&body, begin, end] { body(begin, end); });
    }
    body(0, std::min(count, chunk));
}

}  // namespace msvar
