#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "splitloc/cli.hpp"
#include "splitloc/config.hpp"
#include "splitloc/io_error.hpp"
#include "splitloc/optim.hpp"
#include "splitloc/simnet.hpp"

namespace py = pybind11;
using namespace splitloc;

namespace {

py::array_t<double> image_to_array(const AoaTofImage& img) {
    py::array_t<double> arr({img.n_angle, img.n_tof});
    std::copy(img.pixels.begin(), img.pixels.end(), arr.mutable_data());
    return arr;
}

py::array_t<std::complex<double>> csi_to_array(const CsiMatrix& csi) {
    py::array_t<std::complex<double>> arr({csi.n_subcarriers, csi.n_antennas});
    std::copy(csi.values.begin(), csi.values.end(), arr.mutable_data());
    return arr;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "split-architecture WiFi localization core";

    py::register_exception<SingularGeometry>(m, "SingularGeometry");
    py::register_exception<InsufficientBearings>(m, "InsufficientBearings");
    py::register_exception<IoError>(m, "IoError");

    py::class_<Vec2>(m, "Vec2")
        .def(py::init<double, double>(), py::arg("x") = 0.0, py::arg("y") = 0.0)
        .def_readwrite("x", &Vec2::x)
        .def_readwrite("y", &Vec2::y)
        .def("__repr__", [](const Vec2& v) {
            return "Vec2(" + std::to_string(v.x) + ", " + std::to_string(v.y) + ")";
        });

    py::class_<ApPose>(m, "ApPose")
        .def(py::init<double, double, double>(), py::arg("x"), py::arg("y"),
             py::arg("phi") = 0.0)
        .def_readwrite("x", &ApPose::x)
        .def_readwrite("y", &ApPose::y)
        .def_readwrite("phi", &ApPose::orientation_phi);

    py::class_<Reflector>(m, "Reflector")
        .def(py::init<double, double, double, double, double>(), py::arg("x1"), py::arg("y1"),
             py::arg("x2"), py::arg("y2"), py::arg("loss_db") = 6.0)
        .def_readwrite("loss_db", &Reflector::loss_db);

    py::class_<RadioConfig>(m, "RadioConfig")
        .def_static("preset", &RadioConfig::preset, py::arg("name"))
        .def_readonly("bandwidth_hz", &RadioConfig::bandwidth_hz)
        .def_readonly("n_subcarriers", &RadioConfig::n_subcarriers)
        .def_readonly("n_antennas", &RadioConfig::n_antennas)
        .def_property_readonly("wavelength_m", &RadioConfig::wavelength_m);

    py::class_<Environment>(m, "Environment")
        .def(py::init<>())
        .def_readwrite("ap_poses", &Environment::ap_poses)
        .def_readwrite("reflectors", &Environment::reflectors)
        .def_readwrite("xmin", &Environment::xmin)
        .def_readwrite("ymin", &Environment::ymin)
        .def_readwrite("xmax", &Environment::xmax)
        .def_readwrite("ymax", &Environment::ymax)
        .def_readwrite("snr_db", &Environment::snr_db)
        .def_readwrite("nlos_ap_indices", &Environment::nlos_ap_indices);

    py::class_<ImageGrid>(m, "ImageGrid")
        .def(py::init<>())
        .def_readwrite("n_angle_bins", &ImageGrid::n_angle_bins)
        .def_readwrite("n_tof_bins", &ImageGrid::n_tof_bins)
        .def("angle_center", &ImageGrid::angle_center)
        .def("tof_center", &ImageGrid::tof_center);

    py::class_<CsiMatrix>(m, "CsiMatrix")
        .def_readonly("ap_index", &CsiMatrix::ap_index)
        .def_readonly("true_aoa_local", &CsiMatrix::true_aoa_local)
        .def_readonly("true_tof_s", &CsiMatrix::true_tof_s)
        .def_property_readonly("values", &csi_to_array);

    py::class_<AoaTofImage>(m, "AoaTofImage")
        .def_readonly("ap_index", &AoaTofImage::ap_index)
        .def_property_readonly("pixels", &image_to_array);

    py::class_<Dataset>(m, "Dataset")
        .def_readonly("n_ap", &Dataset::n_ap)
        .def_readonly("n_angle", &Dataset::n_angle)
        .def_readonly("n_tof", &Dataset::n_tof)
        .def_readonly("radio_preset_id", &Dataset::radio_preset_id)
        .def("__len__", &Dataset::size)
        .def("image",
             [](const Dataset& ds, size_t rec, int ap) {
                 if (rec >= ds.size() || ap < 0 || ap >= ds.n_ap)
                     throw py::index_error();
                 const auto src = ds.image(rec, ap);
                 py::array_t<float> arr({ds.n_angle, ds.n_tof});
                 std::copy(src.begin(), src.end(), arr.mutable_data());
                 return arr;
             })
        .def("gt_xy",
             [](const Dataset& ds, size_t rec) {
                 if (rec >= ds.size())
                     throw py::index_error();
                 return std::make_pair(ds.records[rec].gt_x, ds.records[rec].gt_y);
             })
        .def("gt_aoa", [](const Dataset& ds, size_t rec) {
            if (rec >= ds.size())
                throw py::index_error();
            return ds.records[rec].gt_aoa_local;
        });

    m.def("synth_csi",
          [](const Environment& env, double x, double y, int ap_index,
             const RadioConfig& radio, uint64_t seed) {
              return synth_csi(env, Vec2{x, y}, ap_index, radio, Substream(seed));
          },
          py::arg("env"), py::arg("x"), py::arg("y"), py::arg("ap_index"), py::arg("radio"),
          py::arg("seed") = 0);

    m.def("aoa_tof_image", &aoa_tof_image, py::arg("csi"), py::arg("radio"), py::arg("grid"));
    m.def("peak_aoa", &peak_aoa, py::arg("image"));

    m.def("generate_dataset",
          [](const Environment& env, const RadioConfig& radio, const ImageGrid& grid,
             int n_points, const std::string& sampler, uint64_t seed, double step) {
              GenerateOptions opt;
              opt.n_points = n_points;
              opt.sampler = sampler_from_name(sampler);
              opt.trajectory_step = step;
              return generate_dataset(env, radio, grid, opt, RngService(seed));
          },
          py::arg("env"), py::arg("radio"), py::arg("grid"), py::arg("n_points"),
          py::arg("sampler") = "random", py::arg("seed") = 1,
          py::arg("trajectory_step") = 0.2);

    m.def("write_dataset", &write_dataset, py::arg("dataset"), py::arg("path"));
    m.def("read_dataset", &read_dataset, py::arg("path"));

    m.def("wrap_angle", &wrap_angle);
    m.def("to_global_frame", &to_global_frame, py::arg("theta_local"), py::arg("pose"));
    m.def("huber", &huber, py::arg("pred"), py::arg("target"), py::arg("delta"));

    m.def("triangulate",
          [](const std::vector<double>& angles, const std::vector<ApPose>& poses) {
              const auto t = triangulate(angles, poses);
              return py::make_tuple(t.point.x, t.point.y, t.condition);
          },
          py::arg("angles_global"), py::arg("poses"));

    m.def("triangulate_backward",
          [](const std::vector<double>& angles, const std::vector<ApPose>& poses, double ux,
             double uy) {
              const auto t = triangulate(angles, poses);
              return triangulate_backward(angles, poses, t, Vec2{ux, uy});
          },
          py::arg("angles_global"), py::arg("poses"), py::arg("upstream_x"),
          py::arg("upstream_y"));

    m.def("geometric_loss",
          [](const std::vector<double>& pred, const std::vector<double>& gt,
             const std::vector<ApPose>& poses, double gt_x, double gt_y,
             const std::string& kind, bool want_grad) {
              LossWeights w;
              const auto r = geometric_loss(pred, gt, poses, Vec2{gt_x, gt_y}, w,
                                            huber_kind_from_name(kind), want_grad);
              py::dict d;
              d["loss"] = r.loss;
              d["singular"] = r.singular;
              d["grad"] = r.grad;
              return d;
          },
          py::arg("theta_pred"), py::arg("theta_gt"), py::arg("poses"), py::arg("gt_x"),
          py::arg("gt_y"), py::arg("kind") = "huber", py::arg("want_grad") = false);

    m.def("one_cycle_lr", &one_cycle_lr, py::arg("step"), py::arg("total_steps"),
          py::arg("max_lr"), py::arg("warmup_frac") = 0.3, py::arg("div_factor") = 25.0,
          py::arg("final_div") = 1e4);

    m.def("percentile",
          [](std::vector<double> values, double p) {
              std::sort(values.begin(), values.end());
              return percentile_interp(values, p);
          },
          py::arg("values"), py::arg("p"));

    m.def("run_cli", &run_cli, py::arg("args"),
          "run the command line driver; returns the exit code");
}
