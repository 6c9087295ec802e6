#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "bimloc/error.h"
#include "bimloc/eval.h"
#include "bimloc/experiment.h"
#include "bimloc/fusion.h"
#include "bimloc/geometry.h"
#include "bimloc/model.h"
#include "bimloc/registration.h"

namespace py = pybind11;
using namespace bimloc;

namespace {

using PointArray = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

std::vector<Vec3> to_points(const PointArray& a) {
  std::vector<Vec3> out(static_cast<std::size_t>(a.rows()));
  for (Eigen::Index i = 0; i < a.rows(); ++i) out[static_cast<std::size_t>(i)] = a.row(i).transpose();
  return out;
}

PointArray from_points(const std::vector<Vec3>& pts) {
  PointArray a(static_cast<Eigen::Index>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) a.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  return a;
}

Scan make_scan(const PointArray& points, std::optional<std::vector<double>> densities,
               std::optional<std::vector<double>> weights) {
  Scan s;
  s.points = to_points(points);
  s.densities = std::move(densities);
  s.weights = std::move(weights);
  s.validate();
  return s;
}

py::dict report_dict(const MetricsReport& r) {
  py::dict d;
  d["pos_max_eig_mm2"] = r.position.max_eigenvalue;
  d["pos_trace_mm2"] = r.position.trace;
  d["rot_max_eig_mrad2"] = r.rotation.max_eigenvalue;
  d["rot_trace_mrad2"] = r.rotation.trace;
  d["rmse_mm"] = r.accuracy_rmse_mm;
  d["failure_pct"] = r.failure_rate_pct;
  d["n_localized"] = r.n_localized;
  d["n_total"] = r.n_total;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Selective, density-weighted point-to-plane ICP localization";

  static py::exception<Error> error(m, "BimlocError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, e.what());
    }
  });

  py::class_<RigidTransform>(m, "RigidTransform")
      .def(py::init<>())
      .def(py::init<const Mat3&, const Vec3&>(), py::arg("rotation"), py::arg("translation"))
      .def_static("rot_z", &RigidTransform::RotZ, py::arg("angle_rad"), py::arg("translation") = Vec3::Zero())
      .def_static("from_quaternion", &RigidTransform::FromQuaternion, py::arg("wxyz"), py::arg("translation"))
      .def_property_readonly("rotation", &RigidTransform::rotation)
      .def_property_readonly("translation", &RigidTransform::translation)
      .def("matrix", &RigidTransform::matrix)
      .def("inverse", [](const RigidTransform& t) { return invert(t); })
      .def("__matmul__", [](const RigidTransform& a, const RigidTransform& b) { return a * b; })
      .def("apply", [](const RigidTransform& t, const PointArray& pts) {
        return from_points(transform_points(t, to_points(pts)));
      })
      .def("__repr__", [](const RigidTransform& t) {
        const Vec3 x = t.translation();
        return "RigidTransform(t=[" + std::to_string(x.x()) + ", " + std::to_string(x.y()) + ", " +
               std::to_string(x.z()) + "])";
      });

  m.def("se3_exp", &se3_exp, py::arg("twist"));
  m.def("pose_delta", [](const RigidTransform& a, const RigidTransform& b) {
    const PoseDelta d = pose_delta(a, b);
    return py::make_tuple(d.translation_norm, d.rotation_angle);
  }, "Translation norm [m] and rotation angle [rad] between two poses.");

  m.def("weights_binary", [](const PointArray& pts, std::vector<double> d, double delta) {
    const Scan s = weights_binary(make_scan(pts, std::move(d), std::nullopt), delta);
    return py::make_tuple(from_points(s.points), *s.weights);
  }, py::arg("points"), py::arg("densities"), py::arg("delta") = kDefaultDelta);
  m.def("weights_linear", [](const PointArray& pts, std::vector<double> d, double delta_prime) {
    return *weights_linear(make_scan(pts, std::move(d), std::nullopt), delta_prime).weights;
  }, py::arg("points"), py::arg("densities"), py::arg("delta_prime") = kDefaultDeltaPrime);

  m.def("covariance_summary", [](const PointArray& samples) {
    const Repeatability r = covariance_summary(to_points(samples));
    return py::make_tuple(r.max_eigenvalue, r.trace);
  }, "Largest eigenvalue and trace of the sample covariance of an (n, 3) array.");

  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def_static("load", &load_experiment_config, py::arg("path"))
      .def_readwrite("n_scans", &ExperimentConfig::n_scans)
      .def_readwrite("n_executions", &ExperimentConfig::n_executions)
      .def_readwrite("seed", &ExperimentConfig::seed)
      .def_readwrite("map_density", &ExperimentConfig::map_density)
      .def_readwrite("robot_pose", &ExperimentConfig::robot_pose)
      .def_property(
          "range_noise", [](const ExperimentConfig& c) { return c.rig.lidar.range_noise; },
          [](ExperimentConfig& c, double v) { c.rig.lidar.range_noise = v; })
      .def_property(
          "azimuth_step_deg", [](const ExperimentConfig& c) { return c.rig.lidar.azimuth_step_deg; },
          [](ExperimentConfig& c, double v) { c.rig.lidar.azimuth_step_deg = v; })
      .def_property_readonly("reference_ids",
                             [](const ExperimentConfig& c) { return c.references.surface_ids; })
      .def("initial_guess", &ExperimentConfig::initial_guess);

  m.def("all_methods", [] {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& meth : all_methods()) {
      out.emplace_back(std::string(to_string(meth.icp)), std::string(to_string(meth.scan)));
    }
    return out;
  }, "The six (icp, scan) method pairs in report order.");

  m.def("run_matrix", [](const ExperimentConfig& cfg) {
    MatrixResult r;
    {
      py::gil_scoped_release release;
      r = run_matrix(cfg);
    }
    py::dict rows;
    for (const auto& run : r.runs) {
      rows[py::make_tuple(std::string(to_string(run.method.icp)), std::string(to_string(run.method.scan)))] =
          report_dict(run.averaged);
    }
    return py::make_tuple(r.report_csv, rows);
  }, py::arg("config"), "Runs all six methods; returns (report_csv, {(icp, scan): metrics}).");

  m.def("simulate_scan", [](const ExperimentConfig& cfg, std::size_t index) {
    const ExperimentScene scene = build_experiment_scene(cfg);
    const TrialFrame f = generate_trial(scene.scene, cfg.robot_pose, index, cfg.rig, cfg.seed);
    std::vector<py::array_t<double>> images;
    for (const auto& img : f.images) {
      py::array_t<double> a({img.height, img.width});
      std::copy(img.scores.begin(), img.scores.end(), a.mutable_data());
      images.push_back(std::move(a));
    }
    return py::make_tuple(from_points(f.scan.points), images);
  }, py::arg("config"), py::arg("index") = 0,
     "LiDAR points (sensor frame) and density images of one simulated scan.");

  m.def("localize", [](const ExperimentConfig& cfg, const PointArray& scan_points,
                       const std::vector<py::array_t<double, py::array::c_style | py::array::forcecast>>& images,
                       const RigidTransform& init, const std::string& icp, const std::string& scan_mode) {
    LocalizeOnceInput in;
    in.scan.points = to_points(scan_points);
    for (const auto& a : images) {
      if (a.ndim() != 2) throw Error(ErrorCode::kInvalidArgument, "density images must be 2-D");
      DensityImage img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
      std::copy(a.data(), a.data() + a.size(), img.scores.begin());
      in.images.push_back(std::move(img));
    }
    in.model = build_experiment_scene(cfg).as_planned;
    in.references = cfg.references;
    in.init = init;
    in.method = {icp_mode_from_string(icp), scan_mode_from_string(scan_mode)};
    in.rig = cfg.rig;
    in.fusion = cfg.fusion;
    in.params = cfg.localize;
    in.map_density = cfg.map_density;
    in.map_seed = cfg.map_seed;
    const LocalizationResult r = localize_once(in);
    py::dict d;
    d["localized"] = r.localized();
    d["transform"] = r.transform() ? py::cast(*r.transform()) : py::none();
    d["failure_reason"] = r.failure() ? py::cast(std::string(to_string(*r.failure()))) : py::none();
    return d;
  }, py::arg("config"), py::arg("scan"), py::arg("images"), py::arg("init"),
     py::arg("icp") = "selective", py::arg("scan_mode") = "full");
}
