#include "skewstream/source.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "skewstream/error.hpp"
#include "skewstream/io.hpp"

namespace skewstream {

std::string_view to_string(TriggerMode mode) noexcept {
    return mode == TriggerMode::external ? "external" : "internal";
}

TriggerMode parse_trigger_mode(std::string_view text) {
    if (text == "external") return TriggerMode::external;
    if (text == "internal") return TriggerMode::internal;
    throw ParameterError(fmt::format("unknown trigger mode '{}'", text));
}

void CameraTiming::validate() const {
    if (!(exposure_ms >= 0.0) || !std::isfinite(exposure_ms)) {
        throw ParameterError(fmt::format("exposure must be >= 0 ms, got {}", exposure_ms));
    }
    if (!(readout_ms > 0.0) || !std::isfinite(readout_ms)) {
        throw ParameterError(fmt::format("readout must be > 0 ms, got {}", readout_ms));
    }
}

TriggerSchedule schedule(const CameraTiming& timing, const SheetGeometry& geom, double galvo_settle_ms) {
    timing.validate();
    geom.validate();
    if (!(galvo_settle_ms >= 0.0)) {
        throw ParameterError("galvo settle time must be non-negative");
    }
    TriggerSchedule out;
    out.timing = timing;
    out.frame_period_ms = timing.frame_period_ms();
    out.stack_period_ms = geom.slice_count * out.frame_period_ms;
    out.volume_rate_hz = 1000.0 / out.stack_period_ms;
    out.slices.reserve(geom.slice_count);
    for (int k = 0; k < geom.slice_count; ++k) {
        SliceEvents ev;
        ev.exposure_start_ms = k * out.frame_period_ms;
        ev.exposure_end_ms = ev.exposure_start_ms + timing.exposure_ms;
        ev.galvo_step_issue_ms =
            timing.trigger_mode == TriggerMode::external ? ev.exposure_end_ms : ev.exposure_end_ms + timing.readout_ms;
        ev.galvo_settled_ms = ev.galvo_step_issue_ms + galvo_settle_ms;
        out.slices.push_back(ev);
    }
    out.annotations = {
        "laser: gated high during each exposure window",
        "filter wheel: fixed for the duration of the sweep",
        fmt::format("galvo: {} trigger, flyback after slice {}", to_string(timing.trigger_mode),
                    geom.slice_count - 1),
    };
    return out;
}

SettleReport validate_settle(const TriggerSchedule& sched, double settle_time_ms) {
    SettleReport report;
    for (std::size_t k = 0; k + 1 < sched.slices.size(); ++k) {
        const double available = sched.slices[k + 1].exposure_start_ms - sched.slices[k].galvo_step_issue_ms;
        if (settle_time_ms > available + 1e-9) {
            report.violations.push_back({static_cast<int>(k), available, settle_time_ms});
        }
    }
    report.pass = report.violations.empty();
    return report;
}

std::vector<double> GalvoWaveform::sweep_sequence(int sweeps) const {
    std::vector<double> out;
    out.reserve(levels_v.size() * static_cast<std::size_t>(std::max(sweeps, 0)));
    for (int s = 0; s < sweeps; ++s) {
        out.insert(out.end(), levels_v.begin(), levels_v.end());
    }
    return out;
}

GalvoWaveform galvo_staircase(const SheetGeometry& geom, double volts_per_um, double settle_time_ms) {
    geom.validate();
    if (!(volts_per_um > 0.0)) {
        throw ParameterError(fmt::format("volts_per_um must be positive, got {}", volts_per_um));
    }
    GalvoWaveform wave;
    wave.volts_per_um = volts_per_um;
    wave.settle_time_ms = settle_time_ms;
    wave.levels_v.reserve(geom.slice_count);
    for (int k = 0; k < geom.slice_count; ++k) {
        wave.levels_v.push_back(k * geom.scan_step_um * volts_per_um);
    }
    return wave;
}

void FrameSource::set_exposure(double) { throw UnsupportedError("this source has no exposure control"); }

void FrameSource::set_stage_position(double, double) {
    throw UnsupportedError("this source cannot move the stage");
}

void FrameSource::ensure_open() const {
    if (closed_) {
        throw SourceClosedError("frame source is closed");
    }
}

namespace {

SheetGeometry bounding_geometry(const std::vector<ChannelScene>& channels, const SheetGeometry& geom) {
    SheetGeometry out = geom;
    int w = 0, h = 0;
    for (const auto& c : channels) {
        if (c.x0 < 0 || c.y0 < 0) throw ParameterError("channel origin must be non-negative");
        w = std::max(w, c.x0 + geom.frame_width_px);
        h = std::max(h, c.y0 + geom.frame_height_px);
    }
    out.frame_width_px = w;
    out.frame_height_px = h;
    return out;
}

}  // namespace

SimulatedCamera::SimulatedCamera(std::vector<ChannelScene> channels, const SheetGeometry& geometry,
                                 const CameraTiming& timing, Clock& clock, SimulatedCameraOptions options)
    : channels_(std::move(channels)), channel_geometry_(geometry), timing_(timing), clock_(clock),
      options_(options) {
    geometry.validate();
    timing.validate();
    if (channels_.empty()) {
        throw ParameterError("simulated camera needs at least one channel scene");
    }
    camera_geometry_ = bounding_geometry(channels_, geometry);
    cache_.assign(channels_.size(), std::vector<std::optional<Image16>>(geometry.slice_count));
}

SimulatedCamera::SimulatedCamera(PhantomScene scene, const SheetGeometry& geometry, const CameraTiming& timing,
                                 Clock& clock, SimulatedCameraOptions options)
    : SimulatedCamera(std::vector<ChannelScene>{ChannelScene{std::move(scene), 0, 0}}, geometry, timing, clock,
                      options) {}

const Image16& SimulatedCamera::channel_slice(std::size_t channel, int slice) {
    auto& slot = cache_[channel][slice];
    if (!slot) {
        slot = render_skewed_slice(channels_[channel].scene, channel_geometry_, slice, std::nullopt, stage_).pixels;
    }
    return *slot;
}

std::optional<RawFrame> SimulatedCamera::next_frame() {
    ensure_open();
    if (options_.frame_limit && delivered_ >= *options_.frame_limit) {
        return std::nullopt;
    }
    if (!next_exposure_start_ns_) {
        next_exposure_start_ns_ = clock_.now_ns();
    }
    const std::int64_t ready = *next_exposure_start_ns_ + ms_to_ns(timing_.frame_period_ms());
    next_exposure_start_ns_ = ready;

    RawFrame frame;
    if (options_.pacing == Pacing::realtime) {
        clock_.sleep_until_ns(ready);
        frame.timestamp_ns = clock_.now_ns();
        jitter_ns_.push_back(frame.timestamp_ns - ready);
    } else {
        frame.timestamp_ns = ready;
    }
    frame.slice_index = slice_;
    frame.sweep_index = sweep_;
    frame.pixels = Image16(camera_geometry_.frame_width_px, camera_geometry_.frame_height_px);
    for (std::size_t c = 0; c < channels_.size(); ++c) {
        Image16 noisy;
        const Image16* img = nullptr;
        if (options_.noise_seed) {
            const std::uint64_t seed = *options_.noise_seed ^ (0x9E3779B97F4A7C15ull * (sweep_ + 1)) ^ (c << 48);
            noisy = render_skewed_slice(channels_[c].scene, channel_geometry_, slice_, seed, stage_).pixels;
            img = &noisy;
        } else {
            img = &channel_slice(c, slice_);
        }
        for (int y = 0; y < img->height(); ++y) {
            auto src = img->row(y);
            std::copy(src.begin(), src.end(),
                      frame.pixels.row(channels_[c].y0 + y).begin() + channels_[c].x0);
        }
    }
    ++delivered_;
    if (++slice_ == channel_geometry_.slice_count) {
        slice_ = 0;
        ++sweep_;
    }
    return frame;
}

void SimulatedCamera::set_exposure(double exposure_ms) {
    CameraTiming next = timing_;
    next.exposure_ms = exposure_ms;
    next.validate();
    timing_ = next;
}

void SimulatedCamera::set_stage_position(double x_um, double y_um) {
    const Vec3 next{x_um, y_um, 0.0};
    if (next == stage_) return;
    stage_ = next;
    for (auto& channel : cache_) {
        std::fill(channel.begin(), channel.end(), std::nullopt);
    }
    if (slice_ != 0) {
        slice_ = 0;
        ++sweep_;
    }
}

JitterStats SimulatedCamera::jitter() const {
    JitterStats stats;
    stats.samples = jitter_ns_.size();
    if (jitter_ns_.empty()) return stats;
    std::vector<double> ms;
    ms.reserve(jitter_ns_.size());
    for (auto j : jitter_ns_) ms.push_back(ns_to_ms(j));
    std::sort(ms.begin(), ms.end());
    double sum = 0.0;
    for (double v : ms) sum += v;
    stats.mean_ms = sum / ms.size();
    stats.p99_ms = ms[std::min(ms.size() - 1, static_cast<std::size_t>(std::ceil(0.99 * ms.size())) - 1)];
    stats.max_ms = ms.back();
    return stats;
}

FileSource::FileSource(std::vector<Entry> entries, const SheetGeometry& geometry, const CameraTiming& timing,
                       std::unique_ptr<Clock> clock, FileSourceOptions options)
    : entries_(std::move(entries)), geometry_(geometry), timing_(timing), clock_(std::move(clock)),
      options_(options) {}

std::optional<RawFrame> FileSource::next_frame() {
    ensure_open();
    if (next_ >= entries_.size()) {
        return std::nullopt;
    }
    const auto k = static_cast<std::int64_t>(next_);
    const Entry& entry = entries_[next_++];
    RawFrame frame;
    frame.pixels = entry.tiff_page
                       ? read_tiff_page(entry.path, *entry.tiff_page)
                       : read_raw_frame(entry.path, geometry_.frame_width_px, geometry_.frame_height_px, entry.frame);
    if (frame.width() != geometry_.frame_width_px || frame.height() != geometry_.frame_height_px) {
        throw MetadataError(fmt::format("frame {} of {} is {}x{}, metadata says {}x{}", k, entry.path.string(),
                                        frame.width(), frame.height(), geometry_.frame_width_px,
                                        geometry_.frame_height_px),
                            "width");
    }
    frame.slice_index = static_cast<int>(k % geometry_.slice_count);
    frame.sweep_index = k / geometry_.slice_count;
    const std::int64_t ready = (k + 1) * ms_to_ns(timing_.frame_period_ms());
    if (options_.pacing == Pacing::realtime) {
        clock_->sleep_until_ns(ready);
        frame.timestamp_ns = clock_->now_ns();
    } else {
        clock_->sleep_until_ns(ready);  // virtual clock in replay mode; never blocks
        frame.timestamp_ns = ready;
    }
    return frame;
}

namespace {

bool is_raw(const std::filesystem::path& p) {
    const auto ext = p.extension().string();
    return ext == ".raw" || ext == ".bin";
}

bool is_tiff(const std::filesystem::path& p) {
    const auto ext = p.extension().string();
    return ext == ".tif" || ext == ".tiff";
}

}  // namespace

namespace {

std::unique_ptr<FileSource> open_stack_impl(const std::filesystem::path& path,
                                            const std::optional<StackMetadata>& metadata,
                                            const MetadataOverrides& overrides, FileSourceOptions options) {
    namespace fs = std::filesystem;
    if (!fs::exists(path)) {
        throw IoError(fmt::format("stack path {} does not exist", path.string()));
    }
    std::vector<fs::path> files;
    if (fs::is_directory(path)) {
        for (const auto& e : fs::directory_iterator(path)) {
            if (e.is_regular_file() && (is_raw(e.path()) || is_tiff(e.path()))) files.push_back(e.path());
        }
        std::sort(files.begin(), files.end(),
                  [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
        if (files.empty()) {
            throw IoError(fmt::format("directory {} holds no .raw/.bin/.tif/.tiff frames", path.string()));
        }
    } else if (is_raw(path) || is_tiff(path)) {
        files.push_back(path);
    } else {
        throw IoError(fmt::format("unrecognised stack file extension: {}", path.string()));
    }

    std::optional<std::pair<int, int>> dims;
    std::vector<std::vector<TiffPage>> directories(files.size());
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (is_tiff(files[i])) {
            directories[i] = read_tiff_directory(files[i]);
            if (!dims && !directories[i].empty()) dims = {{directories[i][0].width, directories[i][0].height}};
        }
    }
    const StackMetadata meta = metadata ? *metadata : resolve_metadata(path, overrides, dims);
    meta.geometry.validate();
    meta.timing.validate();
    const int w = meta.geometry.frame_width_px;
    const int h = meta.geometry.frame_height_px;

    std::vector<FileSource::Entry> entries;
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (is_tiff(files[i])) {
            for (const auto& page : directories[i]) {
                if (page.width != w || page.height != h) {
                    throw MetadataError(fmt::format("TIFF page of {}x{} in {} disagrees with metadata {}x{}",
                                                    page.width, page.height, files[i].string(), w, h),
                                        "width");
                }
                entries.push_back({files[i], 0, std::make_shared<const TiffPage>(page)});
            }
        } else {
            const std::size_t n = raw_frame_count(files[i], w, h);
            for (std::size_t f = 0; f < n; ++f) entries.push_back({files[i], f, nullptr});
        }
    }
    if (meta.frame_count && *meta.frame_count != entries.size()) {
        throw MetadataError(fmt::format("metadata declares {} frames but {} were found", *meta.frame_count,
                                        entries.size()),
                            "frame_count");
    }
    std::unique_ptr<Clock> clock;
    if (options.pacing == Pacing::realtime) {
        clock = std::make_unique<SteadyClock>();
    } else {
        clock = std::make_unique<VirtualClock>();
    }
    return std::make_unique<FileSource>(std::move(entries), meta.geometry, meta.timing, std::move(clock), options);
}

}  // namespace

std::unique_ptr<FileSource> open_stack(const std::filesystem::path& path,
                                       const std::optional<StackMetadata>& metadata, FileSourceOptions options) {
    return open_stack_impl(path, metadata, {}, options);
}

std::unique_ptr<FileSource> open_stack_with_overrides(const std::filesystem::path& path,
                                                      const MetadataOverrides& overrides, FileSourceOptions options) {
    return open_stack_impl(path, std::nullopt, overrides, options);
}

VectorSource::VectorSource(std::vector<RawFrame> frames, const SheetGeometry& geometry, const CameraTiming& timing)
    : frames_(std::move(frames)), geometry_(geometry), timing_(timing) {}

std::optional<RawFrame> VectorSource::next_frame() {
    ensure_open();
    if (next_ >= frames_.size()) return std::nullopt;
    RawFrame frame = frames_[next_++];
    const auto ready = static_cast<std::int64_t>(next_) * ms_to_ns(timing_.frame_period_ms());
    clock_.sleep_until_ns(ready);
    frame.timestamp_ns = ready;
    return frame;
}

}  // namespace skewstream
