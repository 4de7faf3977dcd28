#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "skewstream/geometry.hpp"
#include "skewstream/parameters.hpp"
#include "skewstream/source.hpp"

namespace skewstream {

/// What a control session may change and the instrument it talks to.
struct ControlContext {
    SheetGeometry geometry;
    SourceCapabilities capabilities;
    std::vector<int> channel_ids;
    ParameterMailbox* mailbox = nullptr;
};

inline constexpr double kMaxExposureMs = 10'000.0;

/// Handles one JSON control message and returns its reply.
///
/// Requests are objects {"request_id": any, "type": ..., ...}:
///   set_view_angle {deg}      converted to shear, clamped to [0, max shear]
///   set_shear {px}            clamped to [0, max shear]
///   set_mode {mode}           "global" | "rolling"
///   set_exposure {ms}         0 < ms <= 10000, needs exposure control
///   set_channels {ids}        known channel ids; empty selects all
///   move_stage {dx_um, dy_um} relative move, needs a movable stage
/// Replies are {"type": "ack", "request_id", "applied": {...}, "notice"?} or
/// {"type": "nack", "request_id", "reason"}. Out-of-range values are clamped and
/// acknowledged with a notice; malformed or unsupported requests are refused.
nlohmann::json handle_control(const nlohmann::json& message, ControlContext& context);

/// Parses text first; unparseable input gets a nack with a null request_id.
nlohmann::json handle_control_text(std::string_view text, ControlContext& context);

}  // namespace skewstream
