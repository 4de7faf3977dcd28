#include <cstring>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>
#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "skewstream/bench.hpp"
#include "skewstream/error.hpp"
#include "skewstream/geometry.hpp"
#include "skewstream/packet.hpp"
#include "skewstream/phantom.hpp"
#include "skewstream/pipeline.hpp"
#include "skewstream/source.hpp"
#include "skewstream/timings.hpp"
#include "skewstream/warp.hpp"

namespace py = pybind11;
using namespace skewstream;

namespace {

using U16Array = py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>;

py::array_t<std::uint16_t> to_numpy(const Image16& img) {
    py::array_t<std::uint16_t> out({img.height(), img.width()});
    if (img.size() > 0) std::memcpy(out.mutable_data(), img.pixels().data(), img.size() * sizeof(std::uint16_t));
    return out;
}

Image16 image_from(const U16Array& a) {
    if (a.ndim() != 2) throw ParameterError("expected a 2-D uint16 array (height, width)");
    const auto h = static_cast<int>(a.shape(0));
    const auto w = static_cast<int>(a.shape(1));
    return Image16(w, h, std::vector<std::uint16_t>(a.data(), a.data() + a.size()));
}

std::vector<RawFrame> frames_from(const U16Array& stack, int slice_count) {
    if (stack.ndim() != 3) throw ParameterError("expected a 3-D uint16 stack (frames, height, width)");
    const auto n = static_cast<int>(stack.shape(0));
    const auto h = static_cast<int>(stack.shape(1));
    const auto w = static_cast<int>(stack.shape(2));
    const std::size_t plane = static_cast<std::size_t>(w) * h;
    std::vector<RawFrame> frames;
    frames.reserve(n);
    for (int k = 0; k < n; ++k) {
        RawFrame f;
        const auto* p = stack.data() + k * plane;
        f.pixels = Image16(w, h, std::vector<std::uint16_t>(p, p + plane));
        f.slice_index = k % slice_count;
        f.sweep_index = k / slice_count;
        frames.push_back(std::move(f));
    }
    return frames;
}

py::array_t<std::uint16_t> stack_to_numpy(const std::vector<RawFrame>& frames) {
    if (frames.empty()) return py::array_t<std::uint16_t>(std::vector<py::ssize_t>{0, 0, 0});
    const int w = frames.front().width();
    const int h = frames.front().height();
    py::array_t<std::uint16_t> out({static_cast<py::ssize_t>(frames.size()), py::ssize_t{h}, py::ssize_t{w}});
    auto* dst = out.mutable_data();
    for (const auto& f : frames) {
        std::memcpy(dst, f.pixels.pixels().data(), f.pixels.size() * sizeof(std::uint16_t));
        dst += f.pixels.size();
    }
    return out;
}

py::dict timings_dict(const StageTimings& t) {
    py::dict d;
    d["acquisition_ms"] = t.acquisition_ms;
    d["processing_ms"] = t.processing_ms;
    d["plotting_ms"] = t.plotting_ms;
    d["lag_ms"] = t.lag_ms;
    return d;
}

StageTimings timings_from(const py::handle& h) {
    const auto d = h.cast<py::dict>();
    StageTimings t;
    t.acquisition_ms = d["acquisition_ms"].cast<double>();
    t.processing_ms = d["processing_ms"].cast<double>();
    t.plotting_ms = d["plotting_ms"].cast<double>();
    t.lag_ms = d.contains("lag_ms") ? d["lag_ms"].cast<double>() : 0.0;
    return t;
}

py::list deskew(const U16Array& stack, const SheetGeometry& geom, std::optional<double> view_angle_deg,
                std::optional<double> shear_px, Interpolation interp, double out_pitch_um) {
    if (view_angle_deg && shear_px) throw ParameterError("give view_angle_deg or shear_px, not both");
    PipelineConfig config;
    config.geometry = geom;
    config.interp = interp;
    config.out_pitch_um = out_pitch_um;
    config.shear_px = view_angle_deg ? std::optional(shear_from_view_angle(*view_angle_deg, geom)) : shear_px;
    Pipeline pipeline(config);
    VectorSource source(frames_from(stack, geom.slice_count), geom);
    std::vector<DisplayImage> shown;
    {
        py::gil_scoped_release release;
        pipeline.run_deterministic(source, [&](const DisplayImage& d) { shown.push_back(d); });
    }
    py::list out;
    for (const auto& d : shown) {
        py::dict v;
        v["image"] = to_numpy(d.pixels);
        v["sweep_index"] = d.sweep_index;
        v["view_angle_deg"] = d.view_angle_deg;
        v["shear_px"] = d.shear_px;
        v["warp_scale"] = d.warp_scale;
        v["row_pitch_um"] = d.row_pitch_um;
        v["column_pitch_um"] = d.column_pitch_um;
        out.append(v);
    }
    return out;
}

py::dict decode_packet(const py::bytes& data) {
    const std::string_view view = data;
    const auto p = decode_frame_packet({reinterpret_cast<const std::uint8_t*>(view.data()), view.size()});
    const auto& h = p.header;
    py::dict d;
    d["version"] = h.version;
    d["pixel_format"] = std::string(to_string(h.pixel_format));
    d["mode"] = std::string(to_string(h.mode));
    d["channel_id"] = h.channel_id;
    d["width"] = h.width;
    d["height"] = h.height;
    d["sweep_index"] = h.sweep_index;
    d["slice_index"] = h.slice_index;
    d["view_angle_deg"] = h.view_angle_centideg / 100.0;
    d["gray8_offset"] = h.gray8_offset;
    d["gray8_scale"] = h.gray8_scale;
    d["timings"] = timings_dict(h.timings);
    d["drops"] = h.drops;
    d["row_pitch_um"] = h.row_pitch_um;
    d["column_pitch_um"] = h.column_pitch_um;
    d["pixels"] = to_numpy(p.pixels);
    return d;
}

py::bytes encode_packet(const U16Array& image, const std::string& pixel_format, double view_angle_deg,
                        int channel_id, std::int64_t sweep_index) {
    DisplayImage d;
    d.pixels = image_from(image);
    d.view_angle_deg = view_angle_deg;
    d.channel_id = channel_id;
    d.sweep_index = sweep_index;
    const auto bytes = encode_frame_packet(d, parse_pixel_format(pixel_format));
    return {reinterpret_cast<const char*>(bytes.data()), bytes.size()};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Deskew, projection and timing model for oblique lightsheet stacks.";
    m.attr("__version__") = SKEWSTREAM_VERSION;

    auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ParameterError>(m, "ParameterError", PyExc_ValueError);
    py::register_exception<CapacityError>(m, "CapacityError", error.ptr());
    py::register_exception<MetadataError>(m, "MetadataError", error.ptr());
    py::register_exception<FormatError>(m, "FormatError", error.ptr());

    py::enum_<Interpolation>(m, "Interpolation")
        .value("nearest", Interpolation::nearest)
        .value("linear", Interpolation::linear);

    py::class_<SheetGeometry>(m, "SheetGeometry")
        .def(py::init([](double alpha_deg, double scan_step_um, double pixel_pitch_um, int slice_count, int width,
                         int height) {
                 return SheetGeometry{alpha_deg, scan_step_um, pixel_pitch_um, slice_count, width, height};
             }),
             py::arg("alpha_deg") = 30.0, py::arg("scan_step_um") = 0.115, py::arg("pixel_pitch_um") = 0.115,
             py::arg("slice_count") = 1, py::arg("frame_width_px") = 1, py::arg("frame_height_px") = 1)
        .def_readwrite("alpha_deg", &SheetGeometry::alpha_deg)
        .def_readwrite("scan_step_um", &SheetGeometry::scan_step_um)
        .def_readwrite("pixel_pitch_um", &SheetGeometry::pixel_pitch_um)
        .def_readwrite("slice_count", &SheetGeometry::slice_count)
        .def_readwrite("frame_width_px", &SheetGeometry::frame_width_px)
        .def_readwrite("frame_height_px", &SheetGeometry::frame_height_px)
        .def("validate", &SheetGeometry::validate)
        .def(py::self == py::self)
        .def("__repr__", [](const SheetGeometry& g) {
            return "SheetGeometry(alpha_deg=" + std::to_string(g.alpha_deg) +
                   ", scan_step_um=" + std::to_string(g.scan_step_um) +
                   ", pixel_pitch_um=" + std::to_string(g.pixel_pitch_um) +
                   ", slice_count=" + std::to_string(g.slice_count) +
                   ", frame_width_px=" + std::to_string(g.frame_width_px) +
                   ", frame_height_px=" + std::to_string(g.frame_height_px) + ")";
        });

    py::class_<CameraTiming>(m, "CameraTiming")
        .def(py::init([](double exposure_ms, double readout_ms, const std::string& trigger_mode) {
                 return CameraTiming{exposure_ms, readout_ms, parse_trigger_mode(trigger_mode)};
             }),
             py::arg("exposure_ms") = 0.1, py::arg("readout_ms") = kDefaultReadoutMs,
             py::arg("trigger_mode") = "external")
        .def_readwrite("exposure_ms", &CameraTiming::exposure_ms)
        .def_readwrite("readout_ms", &CameraTiming::readout_ms)
        .def_property(
            "trigger_mode", [](const CameraTiming& t) { return std::string(to_string(t.trigger_mode)); },
            [](CameraTiming& t, const std::string& s) { t.trigger_mode = parse_trigger_mode(s); })
        .def("frame_period_ms", &CameraTiming::frame_period_ms)
        .def("validate", &CameraTiming::validate);

    m.def("shear_factor", &shear_factor, py::arg("scan_step_um"), py::arg("alpha_deg"));
    m.def("native_shear_px", py::overload_cast<const SheetGeometry&>(&native_shear_px), py::arg("geometry"));
    m.def("max_shear_px", &max_shear_px, py::arg("geometry"));
    m.def(
        "output_extent",
        [](const SheetGeometry& g, double shear_px) {
            const auto e = output_extent(g, shear_px);
            return py::make_tuple(e.width_px, e.height_px);
        },
        py::arg("geometry"), py::arg("shear_px"), "(width, height) of the deskewed canvas in pixels.");
    m.def(
        "physical_extent",
        [](int width_px, int height_px, double pitch_um) {
            const auto p = physical_extent({width_px, height_px}, pitch_um);
            return py::make_tuple(p.width_um, p.height_um);
        },
        py::arg("width_px"), py::arg("height_px"), py::arg("pixel_pitch_um"));
    m.def("view_angle_from_shear", &view_angle_from_shear, py::arg("shear_px"), py::arg("geometry"));
    m.def("shear_from_view_angle", &shear_from_view_angle, py::arg("view_angle_deg"), py::arg("geometry"));
    m.def("warp_factor", &warp_factor, py::arg("shear_px"), py::arg("geometry"), py::arg("out_pitch_um"));

    m.def(
        "_default_scene_json", [](const SheetGeometry& g) { return default_scene(g).to_json().dump(); },
        py::arg("geometry"));
    m.def(
        "_render_stack",
        [](const SheetGeometry& g, const std::optional<std::string>& scene_json,
           std::optional<std::uint64_t> noise_seed) {
            const PhantomScene scene =
                scene_json ? PhantomScene::from_json(nlohmann::json::parse(*scene_json)) : default_scene(g);
            std::vector<RawFrame> frames;
            {
                py::gil_scoped_release release;
                frames = render_stack(scene, g, noise_seed);
            }
            return stack_to_numpy(frames);
        },
        py::arg("geometry"), py::arg("scene_json") = py::none(), py::arg("noise_seed") = py::none());

    m.def(
        "reference_deskew",
        [](const U16Array& stack, const SheetGeometry& g, double shear_px, Interpolation interp) {
            const auto frames = frames_from(stack, g.slice_count);
            return to_numpy(reference_deskew(frames, g, shear_px, interp));
        },
        py::arg("stack"), py::arg("geometry"), py::arg("shear_px"), py::arg("interp") = Interpolation::nearest,
        "Batch deskew of one sweep: per-pixel maximum of every slice placed at k * shear_px.");
    m.def("deskew", &deskew, py::arg("stack"), py::arg("geometry"), py::kw_only(),
          py::arg("view_angle_deg") = py::none(), py::arg("shear_px") = py::none(),
          py::arg("interp") = Interpolation::linear, py::arg("out_pitch_um") = 0.0,
          "Streams a (frames, height, width) stack through the pipeline; one projection per complete sweep.");
    m.def(
        "warp_rows", [](const U16Array& image, double scale) { return to_numpy(warp_rows(image_from(image), scale)); },
        py::arg("image"), py::arg("scale"));

    m.def(
        "validate_settle",
        [](const CameraTiming& t, const SheetGeometry& g, double settle_ms) {
            const auto report = validate_settle(schedule(t, g, settle_ms), settle_ms);
            py::list violations;
            for (const auto& v : report.violations) {
                violations.append(py::make_tuple(v.gap_index, v.available_ms, v.required_ms));
            }
            py::dict d;
            d["pass"] = report.pass;
            d["violations"] = violations;
            return d;
        },
        py::arg("timing"), py::arg("geometry"), py::arg("settle_ms"));
    m.def(
        "volume_rate_hz", [](const CameraTiming& t, const SheetGeometry& g) { return schedule(t, g).volume_rate_hz; },
        py::arg("timing"), py::arg("geometry"));
    m.def(
        "simulate_stage_queue",
        [](double acq_ms, double proc_ms, double plot_ms, int stacks, int frames_per_stack) {
            py::list out;
            for (const auto& t : simulate_stage_queue(acq_ms, proc_ms, plot_ms, stacks, frames_per_stack)) {
                out.append(timings_dict(t));
            }
            return out;
        },
        py::arg("acquisition_ms"), py::arg("processing_ms"), py::arg("plotting_ms"), py::arg("stacks"),
        py::arg("frames_per_stack"));
    m.def(
        "classify_bottleneck",
        [](const py::list& history) {
            std::vector<StageTimings> h;
            for (const auto& item : history) h.push_back(timings_from(item));
            const auto r = classify_bottleneck(h);
            py::dict d;
            d["stage"] = std::string(to_string(r.stage));
            d["lag_slope_ms_per_stack"] = r.lag_slope_ms_per_stack;
            d["lag_bounded"] = r.lag_bounded;
            return d;
        },
        py::arg("history"));
    m.def(
        "kendall_tau",
        [](const std::vector<double>& xs, const std::vector<double>& ys) { return kendall_tau(xs, ys); },
        py::arg("xs"), py::arg("ys"));

    m.def("encode_frame_packet", &encode_packet, py::arg("image"), py::arg("pixel_format") = "gray16",
          py::arg("view_angle_deg") = 0.0, py::arg("channel_id") = 0, py::arg("sweep_index") = 0);
    m.def("decode_frame_packet", &decode_packet, py::arg("data"));
}
