#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <optional>
#include <sstream>

#include "hddf/classifier_model.hpp"
#include "hddf/cli.hpp"
#include "hddf/errors.hpp"
#include "hddf/factor_graph.hpp"
#include "hddf/fusion.hpp"
#include "hddf/gaussian.hpp"
#include "hddf/geometry.hpp"
#include "hddf/hybrid_belief.hpp"
#include "hddf/metrics.hpp"
#include "hddf/rng.hpp"
#include "hddf/simulator.hpp"

namespace py = pybind11;
using namespace hddf;

PYBIND11_MODULE(_core, m) {
  m.doc() =
      "Distributed hybrid (discrete class + continuous pose) belief "
      "estimation for multi-robot semantic SLAM";

  py::register_exception<ContractViolation>(m, "ContractViolation",
                                            PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<UnderconstrainedGraph>(m, "UnderconstrainedGraph",
                                                PyExc_RuntimeError);
  py::register_exception<DecodeError>(m, "DecodeError", PyExc_ValueError);

  // ---- geometry -----------------------------------------------------------
  py::class_<Pose2>(m, "Pose2")
      .def(py::init<>())
      .def(py::init<double, double, double>(), py::arg("x"), py::arg("y"),
           py::arg("theta"))
      .def_readwrite("x", &Pose2::x)
      .def_readwrite("y", &Pose2::y)
      .def_readwrite("theta", &Pose2::theta)
      .def("vec", &Pose2::vec)
      .def("__repr__", [](const Pose2& p) {
        std::ostringstream os;
        os << "Pose2(" << p.x << ", " << p.y << ", " << p.theta << ")";
        return os.str();
      });
  m.def("wrap_angle", &wrap_angle);
  m.def("compose", &compose);
  m.def("inverse", &inverse);
  m.def("between", &between);
  m.def("local_diff", &local_diff);
  m.def("retract", &retract);
  m.def("distance_xy", &distance_xy);

  // ---- variables and densities -------------------------------------------
  py::class_<VariableKey>(m, "VariableKey")
      .def_static("robot_pose", &VariableKey::robot_pose, py::arg("robot"),
                  py::arg("step"))
      .def_static("object_pose", &VariableKey::object_pose,
                  py::arg("object_id"))
      .def_readonly("owner", &VariableKey::owner)
      .def_readonly("index", &VariableKey::index)
      .def("str", &VariableKey::str)
      .def("__repr__", &VariableKey::str)
      .def("__eq__",
           [](const VariableKey& a, const VariableKey& b) { return a == b; })
      .def("__lt__",
           [](const VariableKey& a, const VariableKey& b) { return a < b; })
      .def("__hash__", [](const VariableKey& v) {
        return py::hash(py::str(v.str()));
      });

  py::class_<GaussianDensity>(m, "GaussianDensity")
      .def(py::init<>())
      .def(py::init<std::vector<VariableKey>, Eigen::MatrixXd,
                    Eigen::VectorXd, std::vector<Pose2>>(),
           py::arg("vars"), py::arg("lambda_"), py::arg("eta"),
           py::arg("lin_points"))
      .def_static("isotropic_prior", &GaussianDensity::isotropic_prior,
                  py::arg("var"), py::arg("center"), py::arg("sigma"))
      .def_property_readonly("vars", &GaussianDensity::vars)
      .def_property_readonly("lambda_", &GaussianDensity::lambda)
      .def_property_readonly("eta", &GaussianDensity::eta)
      .def_property_readonly("lin_points", &GaussianDensity::lin_points)
      .def("empty", &GaussianDensity::empty)
      .def("dim", &GaussianDensity::dim)
      .def("has", &GaussianDensity::has)
      .def("is_positive_definite", &GaussianDensity::is_positive_definite)
      .def("mean_pose", &GaussianDensity::mean_pose)
      .def("mean_all", &GaussianDensity::mean_all)
      .def("covariance", &GaussianDensity::covariance);
  m.def("multiply", &multiply);
  m.def("divide", &divide);
  m.def("marginalize", &marginalize);

  // ---- classifier models --------------------------------------------------
  py::class_<SemanticMeasurement>(m, "SemanticMeasurement")
      .def(py::init<>())
      .def(py::init([](std::uint64_t oid, const Eigen::VectorXd& probs) {
             return SemanticMeasurement{oid, probs};
           }),
           py::arg("object_id"), py::arg("probs"))
      .def_readwrite("object_id", &SemanticMeasurement::object_id)
      .def_readwrite("probs", &SemanticMeasurement::probs);

  py::class_<ViewpointModel, std::shared_ptr<ViewpointModel>>(m,
                                                              "ViewpointModel")
      .def("num_classes", &ViewpointModel::num_classes)
      .def("viewpoint_dependent", &ViewpointModel::viewpoint_dependent)
      .def("mean", &ViewpointModel::mean, py::arg("c"), py::arg("psi"),
           py::arg("theta") = 0.0)
      .def("covariance", &ViewpointModel::covariance, py::arg("c"),
           py::arg("psi"), py::arg("theta") = 0.0);
  py::class_<AliasingSimulationModel, ViewpointModel,
             std::shared_ptr<AliasingSimulationModel>>(
      m, "AliasingSimulationModel")
      .def(py::init<>())
      .def(py::init<const Eigen::Matrix2d&>(), py::arg("sqrt_info"));
  py::class_<ConstantModel, ViewpointModel, std::shared_ptr<ConstantModel>>(
      m, "ConstantModel")
      .def(py::init<std::vector<Eigen::VectorXd>, Eigen::MatrixXd>(),
           py::arg("means"), py::arg("cov"));
  py::class_<LookupModel, ViewpointModel, std::shared_ptr<LookupModel>>(
      m, "LookupModel");
  m.def(
      "load_lookup_model",
      [](const std::string& path) {
        return std::shared_ptr<LookupModel>(load_lookup_model(path));
      },
      py::arg("path"));
  m.def("semantic_log_likelihood", &semantic_log_likelihood, py::arg("model"),
        py::arg("z"), py::arg("c"), py::arg("robot"), py::arg("object"));
  m.def(
      "sample_semantic",
      [](const ViewpointModel& model, ClassLabel c, const Pose2& rel,
         std::uint64_t object_id, std::uint64_t seed) {
        auto rng = make_rng(seed);
        return sample_semantic(model, c, rel, object_id, rng);
      },
      py::arg("model"), py::arg("c"), py::arg("rel"), py::arg("object_id"),
      py::arg("seed"));

  // ---- hybrid belief ------------------------------------------------------
  py::class_<ClassRealization>(m, "ClassRealization")
      .def(py::init<>())
      .def(py::init([](std::map<std::uint64_t, ClassLabel> classes) {
             ClassRealization r;
             r.classes = std::move(classes);
             return r;
           }),
           py::arg("classes"))
      .def_readwrite("classes", &ClassRealization::classes)
      .def("restricted_to", &ClassRealization::restricted_to)
      .def("str", &ClassRealization::str)
      .def("__repr__", &ClassRealization::str)
      .def("__eq__", [](const ClassRealization& a,
                        const ClassRealization& b) { return a == b; })
      .def("__lt__", [](const ClassRealization& a,
                        const ClassRealization& b) { return a < b; })
      .def("__hash__",
           [](const ClassRealization& r) { return r.hash(); });

  py::class_<Hypothesis>(m, "Hypothesis")
      .def_readonly("realization", &Hypothesis::realization)
      .def_readonly("belief", &Hypothesis::belief)
      .def_readonly("log_weight", &Hypothesis::log_weight);

  py::class_<GeometricMeasurement>(m, "GeometricMeasurement")
      .def(py::init<>())
      .def(py::init([](std::uint64_t oid, const Pose2& measured,
                       const Mat3& cov) {
             return GeometricMeasurement{oid, measured, cov};
           }),
           py::arg("object_id"), py::arg("measured"), py::arg("cov"))
      .def_readwrite("object_id", &GeometricMeasurement::object_id)
      .def_readwrite("measured", &GeometricMeasurement::measured)
      .def_readwrite("cov", &GeometricMeasurement::cov);

  py::class_<StepInputs>(m, "StepInputs")
      .def(py::init<>())
      .def_readwrite("odometry", &StepInputs::odometry)
      .def_readwrite("odometry_cov", &StepInputs::odometry_cov)
      .def_readwrite("geo", &StepInputs::geo)
      .def_readwrite("sem", &StepInputs::sem)
      .def_readwrite("model", &StepInputs::model)
      .def_readwrite("n_samples", &StepInputs::n_samples)
      .def_readwrite("seed", &StepInputs::seed);

  py::class_<ExternalTerm>(m, "ExternalTerm")
      .def(py::init<>())
      .def_readwrite("continuous", &ExternalTerm::continuous)
      .def_readwrite("log_discrete", &ExternalTerm::log_discrete);

  py::class_<HybridBelief>(m, "HybridBelief")
      .def(py::init<std::uint32_t, int, const Pose2&, const Mat3&>(),
           py::arg("robot_id"), py::arg("num_classes"), py::arg("initial"),
           py::arg("initial_cov"))
      .def("robot_id", &HybridBelief::robot_id)
      .def("num_classes", &HybridBelief::num_classes)
      .def("current_step", &HybridBelief::current_step)
      .def("current_pose_key", &HybridBelief::current_pose_key)
      .def("known_objects", &HybridBelief::known_objects)
      .def("hypotheses", &HybridBelief::hypotheses,
           py::return_value_policy::reference_internal)
      .def("expand_for_new_objects", &HybridBelief::expand_for_new_objects,
           py::arg("new_ids"), py::arg("class_prior"), py::arg("pose_priors"))
      .def("local_update", &HybridBelief::local_update, py::arg("inputs"))
      .def("distributed_update", &HybridBelief::distributed_update,
           py::arg("inputs"), py::arg("external"))
      .def(
          "distributed_update",
          [](HybridBelief& hb, const StepInputs& in,
             const ExternalUpdate& ext) {
            hb.distributed_update(in, ext.resolver());
          },
          py::arg("inputs"), py::arg("external"))
      .def("prune", &HybridBelief::prune, py::arg("ratio_threshold"))
      .def("class_marginal", &HybridBelief::class_marginal,
           py::arg("object_id"))
      .def("weighted_mean_poses", &HybridBelief::weighted_mean_poses)
      .def("weighted_position_sqrt_cov",
           &HybridBelief::weighted_position_sqrt_cov, py::arg("var"));

  // ---- fusion protocol ----------------------------------------------------
  py::class_<SlotEntry>(m, "SlotEntry")
      .def(py::init<>())
      .def_readwrite("realization", &SlotEntry::realization)
      .def_readwrite("xi", &SlotEntry::xi)
      .def_readwrite("log_phi", &SlotEntry::log_phi);

  py::class_<StackSlot>(m, "StackSlot")
      .def(py::init<>())
      .def_readwrite("robot_id", &StackSlot::robot_id)
      .def_readwrite("timestamp", &StackSlot::timestamp)
      .def_readwrite("payload", &StackSlot::payload)
      .def("object_ids", &StackSlot::object_ids);

  py::class_<Stack>(m, "Stack")
      .def(py::init<>())
      .def_readwrite("owner", &Stack::owner)
      .def_readwrite("slots", &Stack::slots)
      .def("timestamp_of", &Stack::timestamp_of);

  py::class_<RobotContribution>(m, "RobotContribution")
      .def_readonly("objects", &RobotContribution::objects)
      .def_readonly("terms", &RobotContribution::terms);

  py::class_<ExternalUpdate>(m, "ExternalUpdate")
      .def_readonly("contributions", &ExternalUpdate::contributions)
      .def_readonly("pruning_mismatches", &ExternalUpdate::pruning_mismatches)
      .def("identity", &ExternalUpdate::identity)
      .def("mentioned_objects", &ExternalUpdate::mentioned_objects)
      .def("resolve", &ExternalUpdate::resolve, py::arg("realization"));

  m.def("build_own_slot", &build_own_slot, py::arg("local"), py::arg("step"));
  m.def("merge_stacks", &merge_stacks, py::arg("mine"), py::arg("received"));
  m.def("compute_external_update", &compute_external_update,
        py::arg("current"), py::arg("previous"), py::arg("self_id"),
        py::arg("double_count") = false);
  m.def("serialize_stack", [](const Stack& s) {
    const std::vector<std::uint8_t> bytes = serialize_stack(s);
    return py::bytes(reinterpret_cast<const char*>(bytes.data()),
                     bytes.size());
  });
  m.def("deserialize_stack", [](const py::bytes& payload) {
    const std::string buf = payload;
    std::vector<std::uint8_t> bytes(buf.begin(), buf.end());
    return deserialize_stack(bytes);
  });

  // ---- simulator and metrics ----------------------------------------------
  py::enum_<Mode>(m, "Mode")
      .value("Local", Mode::Local)
      .value("Distributed", Mode::Distributed)
      .value("DoubleCount", Mode::DoubleCount);
  m.def("mode_name", &mode_name);

  py::class_<RobotConfig>(m, "RobotConfig")
      .def_readonly("id", &RobotConfig::id)
      .def_readonly("start", &RobotConfig::start)
      .def_readonly("waypoints", &RobotConfig::waypoints)
      .def_readonly("speed", &RobotConfig::speed);
  py::class_<ObjectConfig>(m, "ObjectConfig")
      .def_readonly("id", &ObjectConfig::id)
      .def_readonly("pose", &ObjectConfig::pose)
      .def_readonly("true_class", &ObjectConfig::true_class);
  py::class_<ScenarioConfig>(m, "ScenarioConfig")
      .def_readonly("robots", &ScenarioConfig::robots)
      .def_readonly("objects", &ScenarioConfig::objects)
      .def_readonly("num_classes", &ScenarioConfig::num_classes)
      .def_readonly("steps", &ScenarioConfig::steps)
      .def_readonly("sensing_range_m", &ScenarioConfig::sensing_range_m)
      .def_readonly("comm_range_m", &ScenarioConfig::comm_range_m)
      .def_readonly("model", &ScenarioConfig::model)
      .def_readwrite("prune_ratio", &ScenarioConfig::prune_ratio)
      .def_readwrite("n_samples", &ScenarioConfig::n_samples)
      .def_readwrite("seed", &ScenarioConfig::seed)
      .def("validate", &ScenarioConfig::validate);
  m.def("load_scenario", &load_scenario, py::arg("path"));

  py::class_<StepMetrics>(m, "StepMetrics")
      .def_readonly("msde", &StepMetrics::msde)
      .def_readonly("robot_pos_err", &StepMetrics::robot_pos_err)
      .def_readonly("obj_pos_err", &StepMetrics::obj_pos_err)
      .def_readonly("sqrt_cov", &StepMetrics::sqrt_cov);
  py::class_<MetricRow>(m, "MetricRow")
      .def_readonly("step", &MetricRow::step)
      .def_readonly("robot", &MetricRow::robot)
      .def_readonly("mode", &MetricRow::mode)
      .def_readonly("metric", &MetricRow::metric)
      .def_readonly("value", &MetricRow::value);
  py::class_<RunResult>(m, "RunResult")
      .def_readonly("mode", &RunResult::mode)
      .def_readonly("seed", &RunResult::seed)
      .def_readonly("metrics", &RunResult::metrics)
      .def_readonly("stack_timestamps", &RunResult::stack_timestamps)
      .def_readonly("class_marginals", &RunResult::class_marginals)
      .def_readonly("comm_pairs", &RunResult::comm_pairs)
      .def_readonly("final_means", &RunResult::final_means)
      .def_readonly("pruning_mismatches", &RunResult::pruning_mismatches)
      .def_readonly("wall_time_s", &RunResult::wall_time_s)
      .def("rows", &RunResult::rows);
  m.def(
      "run",
      [](const ScenarioConfig& cfg, Mode mode,
         std::optional<std::uint64_t> seed) {
        return seed ? run(cfg, mode, *seed) : run(cfg, mode);
      },
      py::arg("config"), py::arg("mode"), py::arg("seed") = py::none(),
      py::call_guard<py::gil_scoped_release>());

  m.def("msde", &msde, py::arg("class_marginal"), py::arg("true_class"));
  m.def("weighted_position_error", &weighted_position_error, py::arg("belief"),
        py::arg("var"), py::arg("truth"));
  m.def(
      "cli_main",
      [](const std::vector<std::string>& args) { return cli_main(args); },
      py::arg("args"), py::call_guard<py::gil_scoped_release>());
}
