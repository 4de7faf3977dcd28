#include "skewstream/control.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "skewstream/error.hpp"

namespace skewstream {

namespace {

struct Refusal {
    std::string reason;
};

double number_field(const nlohmann::json& msg, const char* key) {
    if (!msg.contains(key) || !msg[key].is_number()) {
        throw Refusal{fmt::format("field '{}' must be a number", key)};
    }
    const double v = msg[key].get<double>();
    if (!std::isfinite(v)) throw Refusal{fmt::format("field '{}' must be finite", key)};
    return v;
}

nlohmann::json ack(const nlohmann::json& request_id, nlohmann::json applied, const std::string& notice) {
    nlohmann::json reply{{"type", "ack"}, {"request_id", request_id}, {"applied", std::move(applied)}};
    if (!notice.empty()) reply["notice"] = notice;
    return reply;
}

nlohmann::json nack(const nlohmann::json& request_id, const std::string& reason) {
    return {{"type", "nack"}, {"request_id", request_id}, {"reason", reason}};
}

std::string clamp_notice(double requested, double applied, const char* unit) {
    if (requested == applied) return {};
    return fmt::format("requested {} {} clamped to {} {}", requested, unit, applied, unit);
}

nlohmann::json apply_shear(ControlContext& ctx, double shear, std::string notice) {
    const double s_max = max_shear_px(ctx.geometry);
    const double applied = std::clamp(shear, 0.0, s_max);
    if (notice.empty()) notice = clamp_notice(shear, applied, "px");
    const auto params = ctx.mailbox->update([&](LiveParameters& p) { p.shear_px = applied; });
    return nlohmann::json{{"shear_px", applied},
                          {"view_angle_deg", view_angle_from_shear(applied, ctx.geometry)},
                          {"version", params.version},
                          {"notice", notice}};
}

}  // namespace

nlohmann::json handle_control(const nlohmann::json& message, ControlContext& ctx) {
    if (!message.is_object()) return nack(nullptr, "control message must be a JSON object");
    const nlohmann::json request_id = message.contains("request_id") ? message["request_id"] : nlohmann::json();
    if (request_id.is_null()) return nack(nullptr, "missing request_id");
    if (!message.contains("type") || !message["type"].is_string()) return nack(request_id, "missing message type");
    if (ctx.mailbox == nullptr) return nack(request_id, "no pipeline attached");
    const auto type = message["type"].get<std::string>();

    try {
        if (type == "set_view_angle") {
            const double deg = number_field(message, "deg");
            // The inverse covers [0, 180 - alpha); anything beyond is steeper than the largest shear allows.
            const double limit = 180.0 - ctx.geometry.alpha_deg;
            double shear = 0.0;
            std::string notice;
            if (deg < 0.0) {
                notice = fmt::format("view angle {} deg below 0, clamped", deg);
            } else if (deg >= limit) {
                shear = max_shear_px(ctx.geometry);
                notice = fmt::format("view angle {} deg beyond the shear range, clamped", deg);
            } else {
                shear = shear_from_view_angle(deg, ctx.geometry);
                if (shear > max_shear_px(ctx.geometry)) {
                    notice = fmt::format("view angle {} deg beyond the shear range, clamped", deg);
                }
            }
            auto applied = apply_shear(ctx, shear, notice);
            notice = applied["notice"].get<std::string>();
            applied.erase("notice");
            return ack(request_id, std::move(applied), notice);
        }
        if (type == "set_shear") {
            auto applied = apply_shear(ctx, number_field(message, "px"), {});
            const auto notice = applied["notice"].get<std::string>();
            applied.erase("notice");
            return ack(request_id, std::move(applied), notice);
        }
        if (type == "set_mode") {
            if (!message.contains("mode") || !message["mode"].is_string()) {
                return nack(request_id, "field 'mode' must be \"global\" or \"rolling\"");
            }
            UpdateMode mode;
            try {
                mode = parse_update_mode(message["mode"].get<std::string>());
            } catch (const ParameterError& e) {
                return nack(request_id, e.what());
            }
            const auto params = ctx.mailbox->update([&](LiveParameters& p) { p.mode = mode; });
            return ack(request_id, {{"mode", to_string(mode)}, {"version", params.version}}, {});
        }
        if (type == "set_exposure") {
            const double ms = number_field(message, "ms");
            if (!ctx.capabilities.exposure_control) return nack(request_id, "unsupported: source has fixed exposure");
            if (ms <= 0.0) return nack(request_id, "exposure must be positive");
            const double applied = std::min(ms, kMaxExposureMs);
            const auto params = ctx.mailbox->update([&](LiveParameters& p) { p.exposure_ms = applied; });
            return ack(request_id, {{"exposure_ms", applied}, {"version", params.version}},
                       clamp_notice(ms, applied, "ms"));
        }
        if (type == "set_channels") {
            if (!message.contains("ids") || !message["ids"].is_array()) {
                return nack(request_id, "field 'ids' must be an array of channel ids");
            }
            std::vector<int> ids;
            for (const auto& id : message["ids"]) {
                if (!id.is_number_integer()) return nack(request_id, "channel ids must be integers");
                const int v = id.get<int>();
                if (std::find(ctx.channel_ids.begin(), ctx.channel_ids.end(), v) == ctx.channel_ids.end()) {
                    return nack(request_id, fmt::format("unknown channel {}", v));
                }
                if (std::find(ids.begin(), ids.end(), v) == ids.end()) ids.push_back(v);
            }
            const auto params = ctx.mailbox->update([&](LiveParameters& p) { p.channels = ids; });
            return ack(request_id, {{"ids", ids.empty() ? ctx.channel_ids : ids}, {"version", params.version}}, {});
        }
        if (type == "move_stage") {
            const double dx = number_field(message, "dx_um");
            const double dy = number_field(message, "dy_um");
            if (!ctx.capabilities.stage_moves) return nack(request_id, "unsupported: source has no movable stage");
            const auto params = ctx.mailbox->update([&](LiveParameters& p) {
                p.stage_x_um += dx;
                p.stage_y_um += dy;
            });
            return ack(request_id,
                       {{"stage_x_um", params.stage_x_um}, {"stage_y_um", params.stage_y_um},
                        {"version", params.version}},
                       {});
        }
    } catch (const Refusal& r) {
        return nack(request_id, r.reason);
    }
    return nack(request_id, fmt::format("unknown message type '{}'", type));
}

nlohmann::json handle_control_text(std::string_view text, ControlContext& context) {
    nlohmann::json message;
    try {
        message = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception&) {
        return nack(nullptr, "control message is not valid JSON");
    }
    return handle_control(message, context);
}

}  // namespace skewstream
