#include "skewstream/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "skewstream/bounded_queue.hpp"
#include "skewstream/error.hpp"

namespace skewstream {

namespace {

using WallClock = std::chrono::steady_clock;

double elapsed_ms(WallClock::time_point since) {
    return std::chrono::duration<double, std::milli>(WallClock::now() - since).count();
}

double clamp_shear(double shear_px, const SheetGeometry& geom) {
    return std::clamp(shear_px, 0.0, max_shear_px(geom));
}

}  // namespace

// --- ChannelProcessor ------------------------------------------------------------

ChannelProcessor::ChannelProcessor(int channel_id, const SheetGeometry& geom, double shear_px, Interpolation interp,
                                   UpdateMode mode)
    : channel_id_(channel_id), geom_(geom), interp_(interp), mode_(mode) {
    geom_.validate();
    const double s = clamp_shear(shear_px, geom_);
    if (mode_ == UpdateMode::global) {
        global_.emplace(geom_, s, interp_);
    } else {
        rolling_.emplace(geom_, s, interp_);
    }
}

double ChannelProcessor::shear_px() const noexcept {
    if (pending_shear_) return *pending_shear_;
    return global_ ? global_->shear_px() : rolling_->shear_px();
}

void ChannelProcessor::set_mode(UpdateMode mode) {
    if (mode == mode_) return;
    const double s = shear_px();
    pending_shear_.reset();
    if (mode == UpdateMode::global) {
        rolling_.reset();
        global_.emplace(geom_, s, interp_);
        // The sweep in progress started under rolling updates; wait for the next one.
        skip_through_sweep_ = last_sweep_;
    } else {
        global_.reset();
        rolling_.emplace(geom_, s, interp_);
        skip_through_sweep_.reset();
    }
    mode_ = mode;
}

void ChannelProcessor::apply(const LiveParameters& params) {
    set_mode(params.mode);
    const double s = clamp_shear(params.shear_px, geom_);
    if (rolling_) {
        rolling_->set_shear(s);
    } else if (global_->empty()) {
        global_->set_shear(s);
        pending_shear_.reset();
    } else if (s != global_->shear_px()) {
        pending_shear_ = s;
    } else {
        pending_shear_.reset();
    }
}

void ChannelProcessor::begin_stack(const FrameEnvelope& env) {
    first_exposure_ns_ = env.frame.timestamp_ns - env.period_ns;
    processing_ms_ = 0.0;
}

std::optional<ChannelProcessor::Emission> ChannelProcessor::process(const FrameEnvelope& env) {
    if (env.parameters) apply(*env.parameters);
    const RawFrame& frame = env.frame;
    const auto start = WallClock::now();
    last_sweep_ = frame.sweep_index;
    ++processed_;

    if (rolling_) {
        begin_stack(env);
        auto update = rolling_->replace(frame, channel_id_);
        Emission e;
        e.projection = std::move(update.emission);
        e.timings.acquisition_ms = ns_to_ms(frame.timestamp_ns - first_exposure_ns_);
        e.timings.processing_ms = elapsed_ms(start);
        e.last_frame_ns = frame.timestamp_ns;
        return e;
    }

    if (skip_through_sweep_) {
        if (frame.sweep_index <= *skip_through_sweep_) return std::nullopt;
        skip_through_sweep_.reset();
    }
    if (global_->sweep() && *global_->sweep() != frame.sweep_index) {
        if (frame.sweep_index < *global_->sweep()) return std::nullopt;
        // Frames were lost or the sweep was restarted; the partial sweep cannot be completed.
        global_->reset();
        ++incomplete_;
    }
    if (global_->empty()) {
        if (pending_shear_) {
            global_->set_shear(*pending_shear_);
            pending_shear_.reset();
        }
        begin_stack(env);
    }
    global_->place(frame);
    last_frame_ns_ = frame.timestamp_ns;
    if (!global_->complete()) {
        processing_ms_ += elapsed_ms(start);
        return std::nullopt;
    }
    Emission e;
    e.projection = global_->finalize(channel_id_);
    processing_ms_ += elapsed_ms(start);
    e.timings.acquisition_ms = ns_to_ms(last_frame_ns_ - first_exposure_ns_);
    e.timings.processing_ms = processing_ms_;
    e.last_frame_ns = last_frame_ns_;
    if (pending_shear_) {
        global_->set_shear(*pending_shear_);
        pending_shear_.reset();
    }
    return e;
}

// --- configuration and telemetry --------------------------------------------------

void PipelineConfig::validate() const {
    geometry.validate();
    if (acquire_queue_stacks == 0 || emit_queue_frames == 0) {
        throw ParameterError("queue capacities must be positive");
    }
    for (const auto& r : layout.regions) {
        if (r.width != geometry.frame_width_px || r.height != geometry.frame_height_px) {
            throw ParameterError(fmt::format("channel {} region is {}x{} but the geometry frame is {}x{}",
                                             r.channel_id, r.width, r.height, geometry.frame_width_px,
                                             geometry.frame_height_px));
        }
    }
    const double s = initial_shear();
    if (!(s >= 0.0) || s > max_shear_px(geometry)) {
        throw ParameterError(fmt::format("shear {} px outside [0, {}]", s, max_shear_px(geometry)));
    }
    (void)output_extent(geometry, s);
}

double PipelineConfig::initial_shear() const { return shear_px.value_or(native_shear_px(geometry)); }

void to_json(nlohmann::json& j, const TelemetrySnapshot& t) {
    j = nlohmann::json{
        {"frames_acquired", t.frames_acquired},
        {"frames_processed", t.frames_processed},
        {"emissions", t.emissions},
        {"stacks_completed", t.stacks_completed},
        {"incomplete_stacks", t.incomplete_stacks},
        {"drops", {{"acquire", t.drops_acquire}, {"emit", t.drops_emit}}},
        {"queues",
         {{"acquire", {{"capacity", t.acquire_queue_capacity}, {"high_water", t.acquire_queue_high_water}}},
          {"emit", {{"capacity", t.emit_queue_capacity}, {"high_water", t.emit_queue_high_water}}}}},
        {"last_timings", t.last_timings},
        {"emissions_per_s", t.emissions_per_s},
        {"volumes_per_s", t.volumes_per_s},
        {"lag_ms", t.lag_ms},
        {"parameters_version", t.parameters_version},
        {"shear_px", t.shear_px},
        {"view_angle_deg", t.view_angle_deg},
        {"mode", to_string(t.mode)},
    };
}

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) {
    config_.validate();
    layout_ = config_.layout.regions.empty()
                  ? ChannelLayout::single(config_.geometry.frame_width_px, config_.geometry.frame_height_px)
                  : config_.layout;
    LiveParameters initial;
    initial.shear_px = config_.initial_shear();
    initial.mode = config_.mode;
    mailbox_.update([&](LiveParameters& p) {
        p = initial;
    });
    reset_run();
}

void Pipeline::reset_run() {
    auto t = std::make_shared<TelemetrySnapshot>();
    const auto params = mailbox_.snapshot();
    t->parameters_version = params.version;
    t->shear_px = params.shear_px;
    t->view_angle_deg = view_angle_from_shear(params.shear_px, config_.geometry);
    t->mode = params.mode;
    std::lock_guard lock(telemetry_mutex_);
    telemetry_ = std::move(t);
    history_.clear();
}

TelemetrySnapshot Pipeline::telemetry() const {
    std::lock_guard lock(telemetry_mutex_);
    return *telemetry_;
}

std::vector<StackRecord> Pipeline::history() const {
    std::lock_guard lock(telemetry_mutex_);
    return history_;
}

void Pipeline::publish(const std::function<void(TelemetrySnapshot&)>& mutate) {
    std::lock_guard lock(telemetry_mutex_);
    auto next = std::make_shared<TelemetrySnapshot>(*telemetry_);
    mutate(*next);
    telemetry_ = std::move(next);
}

void Pipeline::record(const StackRecord& rec, const StageTimings& timings) {
    std::lock_guard lock(telemetry_mutex_);
    history_.push_back(rec);
    auto next = std::make_shared<TelemetrySnapshot>(*telemetry_);
    ++next->emissions;
    if (rec.mode == UpdateMode::global) ++next->stacks_completed;
    next->last_timings = timings;
    next->lag_ms = timings.lag_ms;

    // Rates over the emissions of the first channel seen.
    const int channel = history_.front().channel_id;
    std::int64_t count = 0, volumes = 0;
    double first = 0.0, last = 0.0, first_volume = 0.0, last_volume = 0.0;
    for (const auto& r : history_) {
        if (r.channel_id != channel) continue;
        if (count++ == 0) first = r.emitted_at_ms;
        last = r.emitted_at_ms;
        if (r.mode == UpdateMode::global) {
            if (volumes++ == 0) first_volume = r.emitted_at_ms;
            last_volume = r.emitted_at_ms;
        }
    }
    next->emissions_per_s = count > 1 && last > first ? 1000.0 * static_cast<double>(count - 1) / (last - first) : 0.0;
    next->volumes_per_s = volumes > 1 && last_volume > first_volume
                              ? 1000.0 * static_cast<double>(volumes - 1) / (last_volume - first_volume)
                              : 0.0;
    telemetry_ = std::move(next);
}

std::shared_ptr<const LiveParameters> Pipeline::poll_parameters(FrameSource& source, std::uint64_t& seen_version) {
    if (mailbox_.version() == seen_version) return nullptr;
    const auto params = mailbox_.snapshot();
    seen_version = params.version;
    const auto caps = source.capabilities();
    if (params.exposure_ms && caps.exposure_control && *params.exposure_ms != source.timing().exposure_ms) {
        source.set_exposure(*params.exposure_ms);
    }
    publish([&](TelemetrySnapshot& t) {
        t.parameters_version = params.version;
        t.shear_px = clamp_shear(params.shear_px, config_.geometry);
        t.view_angle_deg = view_angle_from_shear(t.shear_px, config_.geometry);
        t.mode = params.mode;
    });
    return std::make_shared<const LiveParameters>(params);
}

bool Pipeline::emission_selected(const LiveParameters& params, int channel_id) const {
    return params.channels.empty() ||
           std::find(params.channels.begin(), params.channels.end(), channel_id) != params.channels.end();
}

DisplayImage Pipeline::render(const ChannelProcessor::Emission& e, const StageTimings& timings,
                              std::uint32_t drops) const {
    const auto view = ViewTransform::from_shear(config_.geometry, e.projection.shear_px, config_.out_pitch_um);
    DisplayImage out = warp_and_emit(e.projection, view, timings, config_.geometry.pixel_pitch_um);
    out.drops = drops;
    return out;
}

// --- deterministic mode ----------------------------------------------------------

namespace {

struct StagePosition {
    double x = 0.0;
    double y = 0.0;
};

void move_stage_if_requested(FrameSource& source, const LiveParameters& params, StagePosition& applied) {
    if (params.stage_x_um == applied.x && params.stage_y_um == applied.y) return;
    if (source.capabilities().stage_moves) source.set_stage_position(params.stage_x_um, params.stage_y_um);
    applied = {params.stage_x_um, params.stage_y_um};
}

std::vector<ChannelProcessor> make_processors(const PipelineConfig& config, const ChannelLayout& layout,
                                              const LiveParameters& params) {
    std::vector<ChannelProcessor> out;
    for (const auto& r : layout.regions) {
        out.emplace_back(r.channel_id, config.geometry, params.shear_px, config.interp, params.mode);
    }
    return out;
}

void check_camera_frame(const RawFrame& frame, const ChannelLayout& layout, bool& checked) {
    if (checked) return;
    layout.validate(frame.width(), frame.height());
    checked = true;
}

}  // namespace

TelemetrySnapshot Pipeline::run_deterministic(FrameSource& source, const FrameSink& sink, RunLimits limits) {
    reset_run();
    std::uint64_t seen_version = 0;
    StagePosition stage;
    auto initial = mailbox_.snapshot();
    auto processors = make_processors(config_, layout_, initial);
    std::shared_ptr<const LiveParameters> current = std::make_shared<const LiveParameters>(initial);

    // Modelled stage availability on the source clock (ms).
    std::vector<double> deskew_free(processors.size(), 0.0);
    double emit_free = 0.0;
    bool layout_checked = false;
    std::int64_t frames = 0;
    std::int64_t emissions = 0;

    while (!limits.max_frames || frames < *limits.max_frames) {
        if (limits.max_emissions && emissions >= *limits.max_emissions) break;
        std::shared_ptr<const LiveParameters> changed = poll_parameters(source, seen_version);
        if (changed) {
            current = changed;
            move_stage_if_requested(source, *current, stage);
        }
        const std::int64_t period_ns = ms_to_ns(source.timing().frame_period_ms());
        auto frame = source.next_frame();
        if (!frame) break;
        ++frames;
        check_camera_frame(*frame, layout_, layout_checked);
        auto parts = split_channels(*frame, layout_);
        publish([](TelemetrySnapshot& t) { ++t.frames_acquired; });

        const double arrival_ms = ns_to_ms(frame->timestamp_ns);
        for (std::size_t c = 0; c < parts.size(); ++c) {
            FrameEnvelope env{std::move(parts[c]), period_ns, changed};
            const auto start = WallClock::now();
            auto emission = processors[c].process(env);
            deskew_free[c] = std::max(deskew_free[c], arrival_ms) + elapsed_ms(start);
            publish([&](TelemetrySnapshot& t) {
                ++t.frames_processed;
                t.incomplete_stacks = 0;
                for (const auto& p : processors) t.incomplete_stacks += p.incomplete_stacks();
            });
            if (!emission || !emission_selected(*current, processors[c].channel_id())) continue;

            StageTimings timings = emission->timings;
            const auto plot_start = WallClock::now();
            const DisplayImage display = render(*emission, timings, 0);
            if (sink) sink(display);
            timings.plotting_ms = elapsed_ms(plot_start);
            emit_free = std::max(emit_free, deskew_free[c]) + timings.plotting_ms;
            timings.lag_ms = emit_free - ns_to_ms(emission->last_frame_ns);
            record(StackRecord{processors[c].channel_id(), emission->projection.sweep_index,
                               emission->projection.mode, timings, emit_free},
                   timings);
            ++emissions;
        }
    }
    return telemetry();
}

// --- threaded mode ---------------------------------------------------------------

namespace {

struct EmitItem {
    ChannelProcessor::Emission emission;
    std::shared_ptr<const LiveParameters> parameters;
};

}  // namespace

TelemetrySnapshot Pipeline::run_threaded(FrameSource& source, const FrameSink& sink, std::stop_token stop,
                                         RunLimits limits) {
    reset_run();
    const auto initial = mailbox_.snapshot();
    auto processors = make_processors(config_, layout_, initial);
    const std::size_t channels = processors.size();
    const std::size_t acquire_capacity =
        config_.acquire_queue_stacks * static_cast<std::size_t>(config_.geometry.slice_count);
    const std::size_t emit_capacity = config_.emit_queue_frames * channels;

    std::vector<std::unique_ptr<BoundedQueue<FrameEnvelope>>> acquire_queues;
    for (std::size_t c = 0; c < channels; ++c) {
        acquire_queues.push_back(std::make_unique<BoundedQueue<FrameEnvelope>>(acquire_capacity));
    }
    BoundedQueue<EmitItem> emit_queue(emit_capacity);
    std::stop_source halt;
    std::atomic<std::int64_t> emissions{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto fail = [&](std::exception_ptr e) {
        {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = e;
        }
        halt.request_stop();
    };

    publish([&](TelemetrySnapshot& t) {
        t.acquire_queue_capacity = acquire_capacity;
        t.emit_queue_capacity = emit_capacity;
    });

    auto queue_stats = [&] {
        std::uint64_t drops = 0;
        std::size_t high = 0;
        for (const auto& q : acquire_queues) {
            drops += q->drops();
            high = std::max(high, q->high_water());
        }
        return std::pair{drops, high};
    };

    std::jthread emitter([&] {
        try {
            while (auto item = emit_queue.pop()) {
                if (!emission_selected(*item->parameters, item->emission.projection.channel_id)) continue;
                StageTimings timings = item->emission.timings;
                const auto plot_start = WallClock::now();
                const auto total_drops = queue_stats().first + emit_queue.drops();
                const DisplayImage display = render(
                    item->emission, timings,
                    static_cast<std::uint32_t>(std::min<std::uint64_t>(total_drops, UINT32_MAX)));
                if (sink) sink(display);
                timings.plotting_ms = elapsed_ms(plot_start);
                const double now_ms = ns_to_ms(source.clock().now_ns());
                timings.lag_ms = std::max(0.0, now_ms - ns_to_ms(item->emission.last_frame_ns));
                record(StackRecord{item->emission.projection.channel_id, item->emission.projection.sweep_index,
                                   item->emission.projection.mode, timings, now_ms},
                       timings);
                if (limits.max_emissions && ++emissions >= *limits.max_emissions) halt.request_stop();
            }
        } catch (...) {
            fail(std::current_exception());
        }
    });

    std::atomic<std::size_t> workers_left{channels};
    std::vector<std::jthread> workers;
    for (std::size_t c = 0; c < channels; ++c) {
        workers.emplace_back([&, c] {
            auto current = std::make_shared<const LiveParameters>(initial);
            try {
                while (auto env = acquire_queues[c]->pop()) {
                    if (env->parameters) current = env->parameters;
                    auto emission = processors[c].process(*env);
                    publish([&](TelemetrySnapshot& t) {
                        ++t.frames_processed;
                        t.incomplete_stacks = 0;
                        for (const auto& p : processors) t.incomplete_stacks += p.incomplete_stacks();
                    });
                    if (emission) emit_queue.push(EmitItem{std::move(*emission), current});
                }
            } catch (...) {
                fail(std::current_exception());
            }
            if (--workers_left == 0) emit_queue.close();
        });
    }

    // Acquisition runs on the calling thread.
    try {
        std::uint64_t seen_version = 0;
        StagePosition stage;
        bool layout_checked = false;
        std::int64_t frames = 0;
        while (!stop.stop_requested() && !halt.stop_requested()) {
            if (limits.max_frames && frames >= *limits.max_frames) break;
            auto changed = poll_parameters(source, seen_version);
            if (changed) move_stage_if_requested(source, *changed, stage);
            const std::int64_t period_ns = ms_to_ns(source.timing().frame_period_ms());
            auto frame = source.next_frame();
            if (!frame) break;
            ++frames;
            check_camera_frame(*frame, layout_, layout_checked);
            auto parts = split_channels(*frame, layout_);
            for (std::size_t c = 0; c < channels; ++c) {
                acquire_queues[c]->push(FrameEnvelope{std::move(parts[c]), period_ns, changed});
            }
            const auto [drops, high] = queue_stats();
            publish([&](TelemetrySnapshot& t) {
                ++t.frames_acquired;
                t.drops_acquire = drops;
                t.acquire_queue_high_water = high;
            });
        }
    } catch (...) {
        fail(std::current_exception());
    }
    for (auto& q : acquire_queues) q->close();
    workers.clear();
    emitter.join();

    const auto [drops, high] = queue_stats();
    publish([&](TelemetrySnapshot& t) {
        t.drops_acquire = drops;
        t.acquire_queue_high_water = high;
        t.drops_emit = emit_queue.drops();
        t.emit_queue_high_water = emit_queue.high_water();
    });
    if (failure) std::rethrow_exception(failure);
    return telemetry();
}

}  // namespace skewstream
