#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace streamperf {

struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// FNV-1a, used for content hashes and seed-stream derivation.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3 };

inline LogLevel log_level() {
    static LogLevel level = [] {
        const char* env = std::getenv("STREAMPERF_LOG");
        if (!env) return LogLevel::warn;
        std::string_view v(env);
        if (v == "debug") return LogLevel::debug;
        if (v == "info") return LogLevel::info;
        if (v == "warn") return LogLevel::warn;
        if (v == "error") return LogLevel::error;
        return LogLevel::warn;
    }();
    return level;
}

template <typename... Args>
void log(LogLevel lvl, const char* fmt, Args... args) {
    if (lvl < log_level()) return;
    static const char* names[] = {"debug", "info", "warn", "error"};
    std::fprintf(stderr, "[%s] ", names[static_cast<int>(lvl)]);
    std::fprintf(stderr, fmt, args...);
    std::fprintf(stderr, "\n");
}

inline void log_msg(LogLevel lvl, const std::string& msg) { log(lvl, "%s", msg.c_str()); }

// Static-partition-free worker pool: tasks are pulled from an atomic counter,
// results must be written to preallocated slots so merge order is by index.
inline void parallel_for(std::size_t n_tasks, int jobs, const std::function<void(std::size_t)>& fn) {
    if (jobs <= 1 || n_tasks <= 1) {
        for (std::size_t i = 0; i < n_tasks; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    std::atomic<bool> failed{false};
    std::string first_error;
    std::mutex err_mu;
    auto body = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= n_tasks || failed.load()) return;
            try {
                fn(i);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!failed.exchange(true)) first_error = e.what();
                return;
            }
        }
    };
    int n_workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n_tasks);
    workers.reserve(n_workers);
    for (int w = 0; w < n_workers; ++w) workers.emplace_back(body);
    for (auto& t : workers) t.join();
    if (failed.load()) throw std::runtime_error(first_error);
}

}  // namespace streamperf
