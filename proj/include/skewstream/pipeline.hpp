#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "skewstream/canvas.hpp"
#include "skewstream/channels.hpp"
#include "skewstream/geometry.hpp"
#include "skewstream/parameters.hpp"
#include "skewstream/source.hpp"
#include "skewstream/timings.hpp"
#include "skewstream/warp.hpp"

namespace skewstream {

/// A channel sub-frame in flight between acquisition and deskew, with the
/// frame period it was acquired under and any parameter change that takes
/// effect from this frame on.
struct FrameEnvelope {
    RawFrame frame;
    std::int64_t period_ns = 0;
    std::shared_ptr<const LiveParameters> parameters;
};

/// Deskew state of one channel: owns its canvas and applies shear/mode changes
/// at the points the update mode allows.
///
/// Global mode: a shear change waits for the current sweep to finish; frames of a
/// newer sweep discard an unfinished one (counted in incomplete_stacks). After a
/// switch to global mode the sweep already in progress is skipped.
/// Rolling mode: a shear change re-places the ring immediately.
class ChannelProcessor {
public:
    ChannelProcessor(int channel_id, const SheetGeometry& geom, double shear_px, Interpolation interp,
                     UpdateMode mode);

    struct Emission {
        ProjectionImage projection;
        StageTimings timings;  // acquisition and processing filled in
        std::int64_t last_frame_ns = 0;
    };

    std::optional<Emission> process(const FrameEnvelope& envelope);
    void apply(const LiveParameters& params);

    int channel_id() const noexcept { return channel_id_; }
    double shear_px() const noexcept;
    UpdateMode mode() const noexcept { return mode_; }
    std::int64_t incomplete_stacks() const noexcept { return incomplete_; }
    std::int64_t frames_processed() const noexcept { return processed_; }

private:
    void set_mode(UpdateMode mode);
    void begin_stack(const FrameEnvelope& env);

    int channel_id_;
    SheetGeometry geom_;
    Interpolation interp_;
    UpdateMode mode_;
    std::optional<GlobalAccumulator> global_;
    std::optional<RollingAccumulator> rolling_;
    std::optional<double> pending_shear_;
    std::optional<std::int64_t> skip_through_sweep_;
    std::optional<std::int64_t> last_sweep_;
    std::int64_t incomplete_ = 0;
    std::int64_t processed_ = 0;
    // Per-stack accounting.
    std::int64_t first_exposure_ns_ = 0;
    std::int64_t last_frame_ns_ = 0;
    double processing_ms_ = 0.0;
};

struct PipelineConfig {
    /// Geometry of one channel region (frame size = region size).
    SheetGeometry geometry;
    /// Regions of the camera frame; empty means one region covering the whole frame.
    ChannelLayout layout;
    /// Initial shear; empty selects the native shear.
    std::optional<double> shear_px;
    /// Output pitch after warping; <= 0 selects the geometry pixel pitch.
    double out_pitch_um = 0.0;
    Interpolation interp = Interpolation::linear;
    UpdateMode mode = UpdateMode::global;
    /// Acquisition -> deskew queue capacity, in stacks per channel.
    std::size_t acquire_queue_stacks = 2;
    /// Deskew -> emit queue capacity, in frames per channel.
    std::size_t emit_queue_frames = 2;

    void validate() const;
    double initial_shear() const;
};

struct RunLimits {
    std::optional<std::int64_t> max_frames;
    std::optional<std::int64_t> max_emissions;
};

/// Receives every emitted display image; the time spent here counts as plotting time.
using FrameSink = std::function<void(const DisplayImage&)>;

struct StackRecord {
    int channel_id = 0;
    std::int64_t sweep_index = 0;
    UpdateMode mode = UpdateMode::global;
    StageTimings timings;
    /// Emission time on the source clock.
    double emitted_at_ms = 0.0;
};

struct TelemetrySnapshot {
    std::int64_t frames_acquired = 0;
    std::int64_t frames_processed = 0;
    std::int64_t emissions = 0;
    std::int64_t stacks_completed = 0;
    std::int64_t incomplete_stacks = 0;
    std::uint64_t drops_acquire = 0;
    std::uint64_t drops_emit = 0;
    std::size_t acquire_queue_capacity = 0;
    std::size_t acquire_queue_high_water = 0;
    std::size_t emit_queue_capacity = 0;
    std::size_t emit_queue_high_water = 0;
    StageTimings last_timings;
    double emissions_per_s = 0.0;
    double volumes_per_s = 0.0;
    double lag_ms = 0.0;
    std::uint64_t parameters_version = 0;
    double shear_px = 0.0;
    double view_angle_deg = 0.0;
    UpdateMode mode = UpdateMode::global;
};

void to_json(nlohmann::json& j, const TelemetrySnapshot& t);

/// Acquire -> split -> deskew/accumulate -> warp -> emit.
///
/// run_threaded runs one acquisition thread, one deskew worker per channel and
/// one emit thread connected by drop-oldest bounded queues. run_deterministic
/// performs the same work on the calling thread and derives stage timings from
/// a queueing model: each channel's deskew stage and the emit stage are busy
/// for their measured compute time, frames arrive at their source timestamps.
class Pipeline {
public:
    explicit Pipeline(PipelineConfig config);

    const PipelineConfig& config() const noexcept { return config_; }
    ParameterMailbox& parameters() noexcept { return mailbox_; }

    TelemetrySnapshot telemetry() const;
    std::vector<StackRecord> history() const;

    TelemetrySnapshot run_deterministic(FrameSource& source, const FrameSink& sink, RunLimits limits = {});
    TelemetrySnapshot run_threaded(FrameSource& source, const FrameSink& sink, std::stop_token stop = {},
                                   RunLimits limits = {});

private:
    struct Shared;

    std::shared_ptr<const LiveParameters> poll_parameters(FrameSource& source, std::uint64_t& seen_version);
    bool emission_selected(const LiveParameters& params, int channel_id) const;
    DisplayImage render(const ChannelProcessor::Emission& e, const StageTimings& timings,
                        std::uint32_t drops) const;
    void record(const StackRecord& rec, const StageTimings& timings);
    void publish(const std::function<void(TelemetrySnapshot&)>& mutate);
    void reset_run();

    PipelineConfig config_;
    ChannelLayout layout_;
    ParameterMailbox mailbox_;
    mutable std::mutex telemetry_mutex_;
    std::shared_ptr<const TelemetrySnapshot> telemetry_;
    std::vector<StackRecord> history_;
};

}  // namespace skewstream
