#include "skewstream/placement.hpp"

#include <fmt/format.h>

#include "skewstream/canvas.hpp"
#include "skewstream/error.hpp"

namespace skewstream {

std::string_view to_string(Interpolation interp) noexcept {
    return interp == Interpolation::nearest ? "nearest" : "linear";
}

Interpolation parse_interpolation(std::string_view text) {
    if (text == "nearest") return Interpolation::nearest;
    if (text == "linear") return Interpolation::linear;
    throw ParameterError(fmt::format("unknown interpolation '{}'", text));
}

std::string_view to_string(UpdateMode mode) noexcept {
    return mode == UpdateMode::global ? "global" : "rolling";
}

UpdateMode parse_update_mode(std::string_view text) {
    if (text == "global") return UpdateMode::global;
    if (text == "rolling") return UpdateMode::rolling;
    throw ParameterError(fmt::format("unknown update mode '{}'", text));
}

}  // namespace skewstream
