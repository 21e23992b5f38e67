#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <json.hpp>

#include "lanemerge/core/flat_config.hpp"
#include "lanemerge/core/kinematics.hpp"
#include "lanemerge/core/wire.hpp"
#include "lanemerge/env/dataset.hpp"
#include "lanemerge/fusion/fusion.hpp"
#include "lanemerge/harness/stack.hpp"
#include "lanemerge/kpi/kpi.hpp"
#include "lanemerge/rl/agent.hpp"
#include "lanemerge/rl/checkpoint.hpp"

namespace py = pybind11;
using namespace lanemerge;

namespace {

rl::Variant variant_of(const std::string& name) {
    if (name == "dqn") return rl::Variant::Plain;
    if (name == "dueling") return rl::Variant::Dueling;
    throw py::value_error("variant must be 'dqn' or 'dueling'");
}

// Values cross the boundary as JSON text; the Python package turns them into dicts.
std::string extrapolate_json(const std::string& rud_json, Millis t_ref) {
    const Rud r = wire::rud_from_json(nlohmann::json::parse(rud_json));
    return wire::to_json(fusion::extrapolate(r, t_ref)).dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Lane-merge coordination core";

    py::register_exception<wire::WireError>(m, "WireError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<rl::CheckpointError>(m, "CheckpointError", PyExc_IOError);
    py::register_exception<InvariantError>(m, "InvariantError", PyExc_ValueError);

    m.def("roundtrip_envelope", [](const std::string& line) { return wire::encode_envelope(wire::decode_envelope(line)); },
          py::arg("line"), "Decode one NDJSON envelope and encode it again.");
    m.def("advance",
          [](double x, double y, double speed, double accel, double heading, double dt) {
              const auto k = advance(KinematicState{{x, y}, speed, accel, heading}, dt);
              return py::make_tuple(k.position.x, k.position.y, k.speed);
          },
          py::arg("x"), py::arg("y"), py::arg("speed"), py::arg("acceleration"), py::arg("heading"), py::arg("dt"),
          "Uniformly accelerated motion; returns (x, y, speed).");
    m.def("extrapolate_json", &extrapolate_json, py::arg("rud_json"), py::arg("t_ref"));
    m.def("percentile", [](const std::vector<double>& s, double p) { return kpi::percentile(s, p); }, py::arg("samples"),
          py::arg("p"));
    m.def("ecdf",
          [](const std::vector<double>& s) {
              const auto e = kpi::ecdf(s);
              return py::make_tuple(e.values, e.fractions);
          },
          py::arg("samples"));
    m.def("synthetic_instances",
          [](std::uint64_t seed, std::size_t n) {
              std::vector<std::string> lines;
              for (const auto& inst : env::generate_synthetic(seed, n)) lines.push_back(env::instance_to_json_line(inst));
              return lines;
          },
          py::arg("seed"), py::arg("count"));
    m.def("summarize_logs",
          [](const std::filesystem::path& spill) {
              const auto records = kpi::read_spill(spill);
              return kpi::summary_json(kpi::summarize(records));
          },
          py::arg("path"), "KPI summary JSON of an NDJSON log spill.");

    py::class_<rl::QNetwork>(m, "QNetwork")
        .def(py::init([](const std::string& variant, std::vector<int> dims, int actions, std::uint64_t seed) {
                 return rl::QNetwork(variant_of(variant), std::move(dims), actions, seed);
             }),
             py::arg("variant"), py::arg("dims"), py::arg("actions") = 5, py::arg("seed") = 1)
        .def_static("load", [](const std::filesystem::path& p) { return rl::load_checkpoint(p); }, py::arg("path"))
        .def("q_values",
             [](const rl::QNetwork& net, const std::vector<double>& state) {
                 if (state.size() != rl::kStateDim) throw py::value_error("state must have 21 entries");
                 rl::StateVector s{};
                 std::copy(state.begin(), state.end(), s.begin());
                 const Eigen::VectorXd q = net.q_values(s);
                 return std::vector<double>(q.data(), q.data() + q.size());
             },
             py::arg("state"))
        .def_property_readonly("variant", [](const rl::QNetwork& n) { return std::string(rl::to_string(n.variant())); })
        .def_property_readonly("actions", &rl::QNetwork::n_actions);

    m.def("train",
          [](const std::string& variant, std::size_t steps, std::uint64_t seed, std::size_t instances,
             std::uint64_t data_seed, const std::optional<std::filesystem::path>& out) {
              rl::TrainConfig cfg;
              cfg.variant = variant_of(variant);
              cfg.total_env_steps = steps;
              cfg.seed = seed;
              if (steps < cfg.learning_starts * 2) {
                  cfg.learning_starts = steps / 4;
                  cfg.epsilon_decay_steps = std::max<std::size_t>(1, steps / 2);
              }
              const auto pool = env::generate_synthetic(data_seed, instances);
              rl::TrainResult r;
              {
                  py::gil_scoped_release release;
                  r = rl::train(pool, cfg);
              }
              if (out) rl::save_checkpoint(*out, r.net, cfg);
              py::dict d;
              d["episodes"] = r.episodes;
              d["env_steps"] = r.env_steps;
              d["terminal_success"] = r.histogram.terminal_success();
              d["success"] = r.outcomes.success;
              d["net"] = r.net;
              return d;
          },
          py::arg("variant") = "dueling", py::arg("steps") = 5000, py::arg("seed") = 1, py::arg("instances") = 50,
          py::arg("data_seed") = 11, py::arg("out") = std::nullopt);

    m.def("run_stack",
          [](const std::string& config_text, const std::filesystem::path& model, const std::filesystem::path& out) {
              auto s = harness::scenario_from_config(FlatConfig::parse(config_text));
              if (!s.human_baseline) s.model_path = model;
              s.out_dir = out;
              harness::StackResult r;
              {
                  py::gil_scoped_release release;
                  r = harness::run_stack(s);
              }
              return py::make_tuple(r.exit_code, r.summary_json);
          },
          py::arg("config"), py::arg("model"), py::arg("out"),
          "In-process stack run from flat config text; returns (exit_code, summary_json).");
}
