#pragma once

#include <cstdint>
#include <string_view>

namespace skewstream {

/// How a fractional slice offset is discretized onto canvas rows.
enum class Interpolation { nearest, linear };

/// Half-open interval of canvas rows [begin, end).
struct RowInterval {
    int begin = 0;
    int end = 0;

    bool empty() const noexcept { return end <= begin; }
    int size() const noexcept { return empty() ? 0 : end - begin; }
    bool overlaps(RowInterval other) const noexcept {
        return !empty() && !other.empty() && begin < other.end && other.begin < end;
    }
    RowInterval united(RowInterval other) const noexcept {
        if (empty()) return other;
        if (other.empty()) return *this;
        return {begin < other.begin ? begin : other.begin, end > other.end ? end : other.end};
    }
    RowInterval intersected(RowInterval other) const noexcept {
        RowInterval r{begin > other.begin ? begin : other.begin, end < other.end ? end : other.end};
        return r.empty() ? RowInterval{} : r;
    }
    friend bool operator==(const RowInterval&, const RowInterval&) = default;
};

std::string_view to_string(Interpolation interp) noexcept;
Interpolation parse_interpolation(std::string_view text);

}  // namespace skewstream
