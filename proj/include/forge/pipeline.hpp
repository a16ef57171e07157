// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "forge/schema.hpp"

namespace forge {

/// Per-stage attrition of a branch run. requested == produced + sum(drops).
struct RunSummary {
    std::size_t requested = 0;
    std::size_t produced = 0;
    std::map<std::string, std::size_t> drops;
    std::vector<std::string> warnings;

    std::size_t dropped() const {
        std::size_t n = 0;
        for (const auto& [_, d] : drops) n += d;
        return n;
    }
    bool balanced() const { return requested == produced + dropped(); }

    Json to_json() const {
        return {{"requested", requested}, {"produced", produced}, {"drops", drops},
                {"balanced", balanced()}, {"warnings", warnings}};
    }
};

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads; results keep index order.
/// The first exception thrown by any job is rethrown after all threads join.
template <typename Fn>
auto parallel_map(std::size_t n, unsigned workers, Fn&& fn) -> std::vector<decltype(fn(std::size_t{}))> {
    using R = decltype(fn(std::size_t{}));
    std::vector<R> out(n);
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = next++; i < n; i = next++) out[i] = fn(i);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

} // namespace forge
