#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "skewstream/clock.hpp"
#include "skewstream/geometry.hpp"
#include "skewstream/image.hpp"
#include "skewstream/phantom.hpp"

namespace skewstream {

/// external: the galvo staircase is preloaded and stepped by the camera's
/// exposure-out line, so it moves during readout. internal: software writes the
/// next level after each frame has been read out.
enum class TriggerMode { internal, external };

std::string_view to_string(TriggerMode mode) noexcept;
TriggerMode parse_trigger_mode(std::string_view text);

/// Default readout calibrated so exposure 0.1 ms x 50 slices gives 80 ms per volume (12.5 volumes/s).
inline constexpr double kDefaultReadoutMs = 1.5;

struct CameraTiming {
    double exposure_ms = 0.1;
    double readout_ms = kDefaultReadoutMs;
    TriggerMode trigger_mode = TriggerMode::external;

    void validate() const;
    double frame_period_ms() const noexcept { return exposure_ms + readout_ms; }
};

struct SliceEvents {
    double exposure_start_ms = 0.0;
    double exposure_end_ms = 0.0;
    double galvo_step_issue_ms = 0.0;
    double galvo_settled_ms = 0.0;
};

/// Event times (ms from the start of the stack) for one sweep.
struct TriggerSchedule {
    CameraTiming timing;
    std::vector<SliceEvents> slices;
    double frame_period_ms = 0.0;
    double stack_period_ms = 0.0;
    double volume_rate_hz = 0.0;
    /// Unmodelled digital lines (laser gating, filter wheel), recorded as notes only.
    std::vector<std::string> annotations;
};

/// Slice k exposes from k*(exposure+readout); the galvo step for the next slice
/// is issued at exposure end (external trigger) or at readout end (internal)
/// and settles galvo_settle_ms later. The step after the last slice is the flyback.
TriggerSchedule schedule(const CameraTiming& timing, const SheetGeometry& geom, double galvo_settle_ms = 0.0);

struct SettleViolation {
    int gap_index = 0;  // between slice gap_index and gap_index + 1
    double available_ms = 0.0;
    double required_ms = 0.0;
};

struct SettleReport {
    bool pass = true;
    std::vector<SettleViolation> violations;
};

/// Checks that the galvo can settle inside every inter-slice gap of the sweep.
SettleReport validate_settle(const TriggerSchedule& sched, double settle_time_ms);

struct GalvoWaveform {
    std::vector<double> levels_v;
    double volts_per_um = 0.0;
    double settle_time_ms = 0.0;

    /// Samples for `sweeps` consecutive sweeps (each sweep ends with the flyback to level 0).
    std::vector<double> sweep_sequence(int sweeps) const;
};

/// Level k = k * scan_step * volts_per_um, N levels per sweep.
GalvoWaveform galvo_staircase(const SheetGeometry& geom, double volts_per_um, double settle_time_ms = 0.0);

struct SourceCapabilities {
    bool stage_moves = false;
    bool exposure_control = false;
};

/// Pull-based frame producer owned by one acquisition worker.
class FrameSource {
public:
    virtual ~FrameSource() = default;

    /// Next frame, or nullopt at end of stream. SourceClosedError after close().
    virtual std::optional<RawFrame> next_frame() = 0;

    virtual const SheetGeometry& geometry() const = 0;
    virtual CameraTiming timing() const = 0;
    virtual SourceCapabilities capabilities() const = 0;
    virtual Clock& clock() = 0;

    /// UnsupportedError unless capabilities().exposure_control.
    virtual void set_exposure(double exposure_ms);
    /// UnsupportedError unless capabilities().stage_moves.
    virtual void set_stage_position(double x_um, double y_um);

    virtual void close() { closed_ = true; }
    bool closed() const noexcept { return closed_; }

protected:
    void ensure_open() const;

private:
    bool closed_ = false;
};

enum class Pacing { realtime, as_fast_as_possible };

struct JitterStats {
    std::size_t samples = 0;
    double mean_ms = 0.0;
    double p99_ms = 0.0;
    double max_ms = 0.0;
};

/// A scene rendered into one rectangle of the camera chip.
struct ChannelScene {
    PhantomScene scene;
    int x0 = 0;
    int y0 = 0;
};

struct SimulatedCameraOptions {
    Pacing pacing = Pacing::realtime;
    std::optional<std::uint64_t> noise_seed;
    /// Stop after this many frames; unbounded when empty.
    std::optional<std::int64_t> frame_limit;
};

/// Simulated camera plus galvo: frame k is slice k mod N of sweep k div N,
/// delivered at the end of its readout.
///
/// `geometry` describes one channel region; with several channel scenes the
/// camera frame is the bounding box of all regions.
class SimulatedCamera final : public FrameSource {
public:
    SimulatedCamera(std::vector<ChannelScene> channels, const SheetGeometry& geometry, const CameraTiming& timing,
                    Clock& clock, SimulatedCameraOptions options = {});
    SimulatedCamera(PhantomScene scene, const SheetGeometry& geometry, const CameraTiming& timing, Clock& clock,
                    SimulatedCameraOptions options = {});

    std::optional<RawFrame> next_frame() override;
    const SheetGeometry& geometry() const override { return camera_geometry_; }
    CameraTiming timing() const override { return timing_; }
    SourceCapabilities capabilities() const override { return {true, true}; }
    Clock& clock() override { return clock_; }

    void set_exposure(double exposure_ms) override;
    /// Moves the stage. A partially acquired sweep is abandoned and the next frame starts a new sweep at slice 0.
    void set_stage_position(double x_um, double y_um) override;

    /// Geometry of one channel region.
    const SheetGeometry& channel_geometry() const noexcept { return channel_geometry_; }
    JitterStats jitter() const;
    std::int64_t frames_delivered() const noexcept { return delivered_; }

private:
    const Image16& channel_slice(std::size_t channel, int slice);

    std::vector<ChannelScene> channels_;
    SheetGeometry channel_geometry_;
    SheetGeometry camera_geometry_;
    CameraTiming timing_;
    Clock& clock_;
    SimulatedCameraOptions options_;
    Vec3 stage_;
    std::vector<std::vector<std::optional<Image16>>> cache_;
    std::int64_t delivered_ = 0;
    int slice_ = 0;
    std::int64_t sweep_ = 0;
    std::optional<std::int64_t> next_exposure_start_ns_;
    std::vector<std::int64_t> jitter_ns_;
};

struct FileSourceOptions {
    Pacing pacing = Pacing::as_fast_as_possible;
};

struct TiffPage;

/// Geometry and timing stored next to a recorded stack.
struct StackMetadata {
    SheetGeometry geometry;
    CameraTiming timing;
    std::optional<std::size_t> frame_count;
};

/// Replays recorded frames in filename-lexicographic order.
class FileSource final : public FrameSource {
public:
    struct Entry {
        std::filesystem::path path;
        std::size_t frame = 0;                      // frame index inside a raw file
        std::shared_ptr<const TiffPage> tiff_page;  // set for TIFF pages
    };

    FileSource(std::vector<Entry> entries, const SheetGeometry& geometry, const CameraTiming& timing,
               std::unique_ptr<Clock> clock, FileSourceOptions options);

    std::optional<RawFrame> next_frame() override;
    const SheetGeometry& geometry() const override { return geometry_; }
    CameraTiming timing() const override { return timing_; }
    SourceCapabilities capabilities() const override { return {false, false}; }
    Clock& clock() override { return *clock_; }

    std::size_t frame_count() const noexcept { return entries_.size(); }

private:
    std::vector<Entry> entries_;
    SheetGeometry geometry_;
    CameraTiming timing_;
    std::unique_ptr<Clock> clock_;
    FileSourceOptions options_;
    std::size_t next_ = 0;
};

/// Opens a raw (.raw/.bin) or TIFF (.tif/.tiff) stack, or a directory of them.
/// Metadata comes from the argument or, when absent, from the sidecar.
std::unique_ptr<FileSource> open_stack(const std::filesystem::path& path,
                                       const std::optional<StackMetadata>& metadata = std::nullopt,
                                       FileSourceOptions options = {});

/// Replays an in-memory list of frames, stamping timestamps from the schedule.
class VectorSource final : public FrameSource {
public:
    VectorSource(std::vector<RawFrame> frames, const SheetGeometry& geometry, const CameraTiming& timing = {});

    std::optional<RawFrame> next_frame() override;
    const SheetGeometry& geometry() const override { return geometry_; }
    CameraTiming timing() const override { return timing_; }
    SourceCapabilities capabilities() const override { return {false, false}; }
    Clock& clock() override { return clock_; }

private:
    std::vector<RawFrame> frames_;
    SheetGeometry geometry_;
    CameraTiming timing_;
    VirtualClock clock_;
    std::size_t next_ = 0;
};

}  // namespace skewstream
