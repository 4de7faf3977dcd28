#pragma once

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>

#include "skewstream/error.hpp"

namespace skewstream {

/// FIFO with a hard capacity. A push into a full queue evicts the oldest item
/// (live view prefers fresh frames) and counts the drop.
template <typename T>
class BoundedQueue {
public:
    explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) {
            throw ParameterError("queue capacity must be positive");
        }
    }

    BoundedQueue(const BoundedQueue&) = delete;
    BoundedQueue& operator=(const BoundedQueue&) = delete;

    /// Returns true when an older item was dropped to make room. Pushing into a
    /// closed queue discards the item.
    bool push(T item) {
        bool dropped = false;
        {
            std::lock_guard lock(mutex_);
            if (closed_) {
                return false;
            }
            if (items_.size() == capacity_) {
                items_.pop_front();
                ++drops_;
                dropped = true;
            }
            items_.push_back(std::move(item));
            if (items_.size() > high_water_) high_water_ = items_.size();
        }
        ready_.notify_one();
        return dropped;
    }

    /// Blocks until an item is available; empty once closed and drained.
    std::optional<T> pop() {
        std::unique_lock lock(mutex_);
        ready_.wait(lock, [this] { return !items_.empty() || closed_; });
        if (items_.empty()) {
            return std::nullopt;
        }
        T item = std::move(items_.front());
        items_.pop_front();
        return item;
    }

    std::optional<T> try_pop() {
        std::lock_guard lock(mutex_);
        if (items_.empty()) {
            return std::nullopt;
        }
        T item = std::move(items_.front());
        items_.pop_front();
        return item;
    }

    void close() {
        {
            std::lock_guard lock(mutex_);
            closed_ = true;
        }
        ready_.notify_all();
    }

    std::size_t size() const {
        std::lock_guard lock(mutex_);
        return items_.size();
    }
    std::size_t capacity() const noexcept { return capacity_; }
    std::uint64_t drops() const {
        std::lock_guard lock(mutex_);
        return drops_;
    }
    std::size_t high_water() const {
        std::lock_guard lock(mutex_);
        return high_water_;
    }

private:
    const std::size_t capacity_;
    mutable std::mutex mutex_;
    std::condition_variable ready_;
    std::deque<T> items_;
    std::uint64_t drops_ = 0;
    std::size_t high_water_ = 0;
    bool closed_ = false;
};

}  // namespace skewstream
