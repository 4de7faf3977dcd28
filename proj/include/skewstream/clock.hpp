#pragma once

#include <chrono>
#include <cstdint>
#include <mutex>

namespace skewstream {

/// Monotonic time source in nanoseconds with sleep-until semantics.
class Clock {
public:
    virtual ~Clock() = default;
    virtual std::int64_t now_ns() = 0;
    virtual void sleep_until_ns(std::int64_t deadline_ns) = 0;
};

class SteadyClock final : public Clock {
public:
    SteadyClock() : epoch_(std::chrono::steady_clock::now()) {}
    std::int64_t now_ns() override;
    void sleep_until_ns(std::int64_t deadline_ns) override;

private:
    std::chrono::steady_clock::time_point epoch_;
};

/// Time only moves when someone sleeps or advances it; sleeping never blocks.
class VirtualClock final : public Clock {
public:
    explicit VirtualClock(std::int64_t start_ns = 0) : now_(start_ns) {}
    std::int64_t now_ns() override;
    void sleep_until_ns(std::int64_t deadline_ns) override;
    void advance_ns(std::int64_t delta_ns);

private:
    std::mutex mutex_;
    std::int64_t now_;
};

inline std::int64_t ms_to_ns(double ms) { return static_cast<std::int64_t>(ms * 1e6 + (ms >= 0 ? 0.5 : -0.5)); }
inline double ns_to_ms(std::int64_t ns) { return static_cast<double>(ns) * 1e-6; }

}  // namespace skewstream
