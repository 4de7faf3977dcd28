#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <optional>
#include <vector>

#include "skewstream/canvas.hpp"

namespace skewstream {

/// Operator-adjustable settings, versioned so every stage sees one total order of changes.
struct LiveParameters {
    std::uint64_t version = 0;
    double shear_px = 0.0;
    UpdateMode mode = UpdateMode::global;
    /// Channels to emit; empty means all.
    std::vector<int> channels;
    std::optional<double> exposure_ms;
    double stage_x_um = 0.0;
    double stage_y_um = 0.0;
};

class ParameterMailbox {
public:
    explicit ParameterMailbox(LiveParameters initial = {}) : current_(std::move(initial)) {
        version_.store(current_.version);
    }

    LiveParameters snapshot() const {
        std::lock_guard lock(mutex_);
        return current_;
    }

    std::uint64_t version() const noexcept { return version_.load(std::memory_order_acquire); }

    /// Applies mutate to a copy of the current parameters and publishes it under the next version.
    template <typename F>
    LiveParameters update(F&& mutate) {
        std::lock_guard lock(mutex_);
        LiveParameters next = current_;
        mutate(next);
        next.version = current_.version + 1;
        current_ = next;
        version_.store(next.version, std::memory_order_release);
        return next;
    }

private:
    mutable std::mutex mutex_;
    LiveParameters current_;
    std::atomic<std::uint64_t> version_{0};
};

}  // namespace skewstream
