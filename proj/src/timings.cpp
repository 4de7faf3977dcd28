#include "skewstream/timings.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "skewstream/error.hpp"

namespace skewstream {

void to_json(nlohmann::json& j, const StageTimings& t) {
    j = {{"acquisition_ms", t.acquisition_ms},
         {"processing_ms", t.processing_ms},
         {"plotting_ms", t.plotting_ms},
         {"lag_ms", t.lag_ms}};
}

void from_json(const nlohmann::json& j, StageTimings& t) {
    t.acquisition_ms = j.at("acquisition_ms").get<double>();
    t.processing_ms = j.at("processing_ms").get<double>();
    t.plotting_ms = j.at("plotting_ms").get<double>();
    t.lag_ms = j.at("lag_ms").get<double>();
}

std::string_view to_string(Bottleneck b) noexcept {
    switch (b) {
        case Bottleneck::acquisition_limited: return "acquisition_limited";
        case Bottleneck::processing_limited: return "processing_limited";
        case Bottleneck::plotting_limited: return "plotting_limited";
    }
    return "acquisition_limited";
}

double least_squares_slope(std::span<const double> ys) {
    const auto n = static_cast<double>(ys.size());
    if (ys.size() < 2) return 0.0;
    const double mean_x = (n - 1.0) / 2.0;
    const double mean_y = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < ys.size(); ++i) {
        const double dx = static_cast<double>(i) - mean_x;
        sxy += dx * (ys[i] - mean_y);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

BottleneckReport classify_bottleneck(std::span<const StageTimings> history) {
    if (history.size() < 3) {
        throw InsufficientDataError(
            fmt::format("bottleneck classification needs at least 3 stacks, got {}", history.size()));
    }
    BottleneckReport report;
    std::vector<double> lags;
    for (const auto& t : history) {
        report.mean_acquisition_ms += t.acquisition_ms;
        report.mean_processing_ms += t.processing_ms;
        report.mean_plotting_ms += t.plotting_ms;
        lags.push_back(t.lag_ms);
    }
    const auto n = static_cast<double>(history.size());
    report.mean_acquisition_ms /= n;
    report.mean_processing_ms /= n;
    report.mean_plotting_ms /= n;

    // Strictly-greater comparisons give ties to the earlier stage.
    report.stage = Bottleneck::acquisition_limited;
    double slowest = report.mean_acquisition_ms;
    if (report.mean_processing_ms > slowest) {
        report.stage = Bottleneck::processing_limited;
        slowest = report.mean_processing_ms;
    }
    if (report.mean_plotting_ms > slowest) {
        report.stage = Bottleneck::plotting_limited;
    }
    report.lag_slope_ms_per_stack = least_squares_slope(lags);
    report.lag_bounded = report.lag_slope_ms_per_stack <= 0.05 * report.mean_acquisition_ms;
    return report;
}

std::vector<StageTimings> simulate_stage_queue(double acq_ms, double proc_ms, double plot_ms, int stacks,
                                               int frames_per_stack) {
    if (stacks < 0 || frames_per_stack < 1 || acq_ms < 0.0 || proc_ms < 0.0 || plot_ms < 0.0) {
        throw ParameterError("stage queue simulation needs non-negative durations and >= 1 frame per stack");
    }
    std::vector<StageTimings> out;
    out.reserve(static_cast<std::size_t>(stacks));
    double processed = 0.0;
    double plotted = 0.0;
    const double per_frame = proc_ms / frames_per_stack;
    for (int k = 0; k < stacks; ++k) {
        const double acquired = (k + 1) * acq_ms;
        const double first_frame = k * acq_ms + acq_ms / frames_per_stack;
        const double start = std::max(first_frame, processed);
        processed = std::max(acquired + per_frame, start + proc_ms);
        plotted = std::max(processed, plotted) + plot_ms;
        out.push_back({acq_ms, proc_ms, plot_ms, plotted - acquired});
    }
    return out;
}

}  // namespace skewstream
