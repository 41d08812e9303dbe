// Python bindings for the simulator core: dataset generation, partitioners,
// mask machinery, server aggregation and the full experiment loop.

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <span>

#include "fedcac/config.hpp"
#include "fedcac/errors.hpp"
#include "fedcac/mask.hpp"
#include "fedcac/orchestrator.hpp"
#include "fedcac/rng.hpp"

namespace py = pybind11;
using namespace fedcac;

namespace {

Matrix matrix_from_rows(const std::vector<std::vector<double>>& rows) {
  Matrix out(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != out.cols) {
      throw ConfigError("rows have inconsistent lengths");
    }
    for (std::size_t c = 0; c < out.cols; ++c) out(r, c) = rows[r][c];
  }
  return out;
}

std::vector<std::vector<double>> matrix_to_rows(const Matrix& m) {
  std::vector<std::vector<double>> rows(m.rows, std::vector<double>(m.cols));
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) rows[r][c] = m(r, c);
  }
  return rows;
}

py::dict metrics_to_dict(const RoundMetrics& m) {
  py::dict out;
  out["round"] = m.round;
  out["mean_accuracy"] = m.mean_accuracy;
  out["per_client_accuracy"] = m.per_client_accuracy;
  if (m.threshold) out["threshold"] = *m.threshold;
  if (m.mean_collab_size) out["mean_collab_size"] = *m.mean_collab_size;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Personalized federated learning simulator (FedCAC and baselines)";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<DataError>(m, "DataError");
  py::register_exception<PartitionError>(m, "PartitionError");
  py::register_exception<SerializationError>(m, "SerializationError");

  py::enum_<Algorithm>(m, "Algorithm")
      .value("FEDCAC", Algorithm::FedCac)
      .value("FEDAVG", Algorithm::FedAvg)
      .value("SEPARATE", Algorithm::Separate)
      .value("FEDPER", Algorithm::FedPer);

  py::enum_<Selector>(m, "Selector")
      .value("SENSITIVITY", Selector::Sensitivity)
      .value("RANDOM", Selector::Random)
      .value("SENSITIVITY_REVERSE", Selector::SensitivityReverse);

  py::enum_<CollaborationMode>(m, "CollaborationMode")
      .value("TIME_VARYING", CollaborationMode::TimeVarying)
      .value("NONE", CollaborationMode::None)
      .value("FIXED_NUMBER", CollaborationMode::FixedNumber);

  py::enum_<NoncriticalMode>(m, "NoncriticalMode")
      .value("ALL", NoncriticalMode::All)
      .value("AS_CRITICAL", NoncriticalMode::AsCritical);

  py::enum_<PartitionMode>(m, "PartitionMode")
      .value("PATHOLOGICAL", PartitionMode::Pathological)
      .value("DIRICHLET", PartitionMode::Dirichlet);

  py::enum_<Activation>(m, "Activation")
      .value("RELU", Activation::Relu)
      .value("TANH", Activation::Tanh);

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("features",
                             [](const Dataset& d) { return matrix_to_rows(d.features); })
      .def_readonly("labels", &Dataset::labels)
      .def_readonly("num_classes", &Dataset::num_classes)
      .def("__len__", [](const Dataset& d) { return d.size(); });

  py::class_<ClientShard>(m, "ClientShard")
      .def_readonly("client_id", &ClientShard::client_id)
      .def_readonly("train", &ClientShard::train)
      .def_readonly("test", &ClientShard::test);

  py::class_<PartitionSpec>(m, "PartitionSpec")
      .def(py::init<>())
      .def_readwrite("mode", &PartitionSpec::mode)
      .def_readwrite("num_clients", &PartitionSpec::num_clients)
      .def_readwrite("classes_per_client", &PartitionSpec::classes_per_client)
      .def_readwrite("alpha", &PartitionSpec::alpha)
      .def_readwrite("train_per_client", &PartitionSpec::train_per_client)
      .def_readwrite("test_per_client", &PartitionSpec::test_per_client)
      .def_readwrite("seed", &PartitionSpec::seed);

  py::class_<BlobSpec>(m, "BlobSpec")
      .def(py::init<>())
      .def_readwrite("num_classes", &BlobSpec::num_classes)
      .def_readwrite("dims", &BlobSpec::dims)
      .def_readwrite("samples_per_class", &BlobSpec::samples_per_class)
      .def_readwrite("separation", &BlobSpec::separation);

  py::class_<MlpSpec>(m, "MlpSpec")
      .def(py::init<>())
      .def_readwrite("layer_widths", &MlpSpec::layer_widths)
      .def_readwrite("activation", &MlpSpec::activation)
      .def_readwrite("use_norm_layer", &MlpSpec::use_norm_layer);

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_readwrite("algorithm", &RunConfig::algorithm)
      .def_readwrite("selector", &RunConfig::selector)
      .def_readwrite("collaboration", &RunConfig::collaboration)
      .def_readwrite("fixed_k", &RunConfig::fixed_k)
      .def_readwrite("noncritical_mode", &RunConfig::noncritical_mode)
      .def_readwrite("num_clients", &RunConfig::num_clients)
      .def_readwrite("rounds", &RunConfig::rounds)
      .def_readwrite("epochs", &RunConfig::epochs)
      .def_readwrite("tau", &RunConfig::tau)
      .def_readwrite("beta", &RunConfig::beta)
      .def_readwrite("lr", &RunConfig::lr)
      .def_readwrite("batch_size", &RunConfig::batch_size)
      .def_readwrite("data", &RunConfig::data)
      .def_readwrite("partition", &RunConfig::partition)
      .def_readwrite("model", &RunConfig::model)
      .def_readwrite("seed", &RunConfig::seed)
      .def_readwrite("workers", &RunConfig::workers);

  py::class_<SensitivityMap>(m, "SensitivityMap")
      .def("layer_values",
           [](const SensitivityMap& s, std::size_t i) { return s.layers.at(i).values; })
      .def("__len__", [](const SensitivityMap& s) { return s.layers.size(); });

  py::class_<CriticalMask>(m, "CriticalMask")
      .def_property_readonly("tau", [](const CriticalMask& mask) { return mask.tau; })
      .def("layer_bits",
           [](const CriticalMask& mask, std::size_t i) {
             return std::vector<int>(mask.layers.at(i).bits.begin(),
                                     mask.layers.at(i).bits.end());
           })
      .def("popcount", &CriticalMask::popcount)
      .def("total_count", &CriticalMask::total_count)
      .def("bits_equal", &CriticalMask::bits_equal)
      .def("__len__", [](const CriticalMask& mask) { return mask.layers.size(); });

  m.def("generate_blobs", &generate_blobs, py::arg("num_classes"), py::arg("dims"),
        py::arg("samples_per_class"), py::arg("separation"), py::arg("seed"),
        "Gaussian blob dataset with pairwise-separated class centers");
  m.def("make_partition", &make_partition, py::arg("data"), py::arg("spec"));

  m.def(
      "mask_from_bits",
      [](const std::vector<std::vector<int>>& layers, double tau) {
        CriticalMask mask;
        mask.tau = tau;
        for (const auto& bits : layers) {
          MaskLayer layer;
          layer.bits.reserve(bits.size());
          for (int b : bits) layer.bits.push_back(b ? 1 : 0);
          mask.layers.push_back(std::move(layer));
        }
        return mask;
      },
      py::arg("layers"), py::arg("tau") = 0.0);
  m.def("serialize_mask",
        [](const CriticalMask& mask) {
          const auto bytes = serialize_mask(mask);
          return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
        });
  m.def("deserialize_mask", [](const py::bytes& payload) {
    const std::string_view view = payload;
    return deserialize_mask(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t*>(view.data()), view.size()));
  });
  m.def("overlap_ratio", &overlap_ratio, py::arg("a"), py::arg("b"));

  m.def(
      "compute_threshold",
      [](const std::vector<std::vector<double>>& overlap, int round, double beta) {
        const ThresholdInfo info = compute_threshold(matrix_from_rows(overlap), round, beta);
        return py::make_tuple(info.o_avg, info.o_max, info.threshold);
      },
      py::arg("overlap"), py::arg("round"), py::arg("beta"),
      "Returns (o_avg, o_max, threshold)");
  m.def(
      "select_collaborators",
      [](const std::vector<std::vector<double>>& overlap, double threshold) {
        return select_collaborators(matrix_from_rows(overlap), threshold);
      },
      py::arg("overlap"), py::arg("threshold"));
  m.def(
      "fixed_number_collaborators",
      [](const std::vector<std::vector<double>>& overlap, int k) {
        return fixed_number_collaborators(matrix_from_rows(overlap), k);
      },
      py::arg("overlap"), py::arg("k"));

  m.def(
      "run",
      [](const RunConfig& config) {
        RunResult result;
        {
          py::gil_scoped_release release;
          result = run(config);
        }
        py::list history;
        for (const auto& metrics : result.history) history.append(metrics_to_dict(metrics));
        py::dict out;
        out["history"] = history;
        out["best_accuracy"] = result.best_accuracy;
        out["mask_bytes_per_round"] = result.mask_bytes_per_round;
        out["model_bytes_fp32_per_round"] = result.model_bytes_fp32_per_round;
        return out;
      },
      py::arg("config"), "Execute the full round loop; returns history and best accuracy");

  m.def(
      "gradient_angle_probe",
      [](const RunConfig& config, int client_a, int client_b) {
        std::vector<std::optional<double>> angles;
        {
          py::gil_scoped_release release;
          angles = gradient_angle_probe(config, client_a, client_b);
        }
        return angles;
      },
      py::arg("config"), py::arg("client_a"), py::arg("client_b"));

  m.def(
      "overlap_similarity_study",
      [](const RunConfig& config) {
        std::vector<OverlapStudyRow> rows;
        {
          py::gil_scoped_release release;
          rows = overlap_similarity_study(config);
        }
        py::list out;
        for (const auto& row : rows) {
          out.append(py::make_tuple(row.pair_type, row.mean_overlap));
        }
        return out;
      },
      py::arg("config"));

  m.attr("__version__") = "0.1.0";
}
