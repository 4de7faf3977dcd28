#pragma once

#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace skewstream {

/// Per-stack stage durations. lag_ms runs from the last slice of the stack
/// being acquired to its projection being emitted.
struct StageTimings {
    double acquisition_ms = 0.0;
    double processing_ms = 0.0;
    double plotting_ms = 0.0;
    double lag_ms = 0.0;
};

void to_json(nlohmann::json& j, const StageTimings& t);
void from_json(const nlohmann::json& j, StageTimings& t);

enum class Bottleneck { acquisition_limited, processing_limited, plotting_limited };

std::string_view to_string(Bottleneck b) noexcept;

struct BottleneckReport {
    Bottleneck stage = Bottleneck::acquisition_limited;
    /// Least-squares slope of lag_ms against stack index.
    double lag_slope_ms_per_stack = 0.0;
    /// Slope below 5% of the mean acquisition time per stack.
    bool lag_bounded = true;
    double mean_acquisition_ms = 0.0;
    double mean_processing_ms = 0.0;
    double mean_plotting_ms = 0.0;
};

/// Slowest stage by mean per-stack duration. Ties go to the earlier stage, so
/// equal times report acquisition_limited. Needs at least three stacks.
BottleneckReport classify_bottleneck(std::span<const StageTimings> history);

/// Stage timings of a three-stage pipeline with unbounded queues.
///
/// Each stack takes acq_ms to acquire as frames_per_stack equal exposures.
/// Processing of a stack starts with its first frame (or once the previous
/// stack is processed) and cannot end before its last frame plus one frame's
/// share of processing. Plotting starts once the stack is processed and the
/// previous plot is done.
std::vector<StageTimings> simulate_stage_queue(double acq_ms, double proc_ms, double plot_ms, int stacks,
                                               int frames_per_stack);

double least_squares_slope(std::span<const double> ys);

}  // namespace skewstream
