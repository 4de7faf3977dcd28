#include "skewstream/clock.hpp"

#include <thread>

namespace skewstream {

std::int64_t SteadyClock::now_ns() {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - epoch_).count();
}

void SteadyClock::sleep_until_ns(std::int64_t deadline_ns) {
    std::this_thread::sleep_until(epoch_ + std::chrono::nanoseconds(deadline_ns));
}

std::int64_t VirtualClock::now_ns() {
    std::lock_guard lock(mutex_);
    return now_;
}

void VirtualClock::sleep_until_ns(std::int64_t deadline_ns) {
    std::lock_guard lock(mutex_);
    if (deadline_ns > now_) now_ = deadline_ns;
}

void VirtualClock::advance_ns(std::int64_t delta_ns) {
    std::lock_guard lock(mutex_);
    now_ += delta_ns;
}

}  // namespace skewstream
