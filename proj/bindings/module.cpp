#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstdint>
#include <optional>
#include <vector>

#include "calens/calibration.hpp"
#include "calens/errors.hpp"
#include "calens/evaluation.hpp"
#include "calens/io.hpp"
#include "calens/losses.hpp"
#include "calens/models.hpp"
#include "calens/synthdata.hpp"
#include "calens/types.hpp"

namespace py = pybind11;
using namespace calens;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

SampleGrid grid_of(const py::array& array) {
  std::vector<std::uint32_t> shape;
  for (py::ssize_t d = 0; d < array.ndim(); ++d) {
    shape.push_back(static_cast<std::uint32_t>(array.shape(d)));
  }
  return SampleGrid(shape);
}

BinaryMask to_mask(const U8Array& array) {
  std::vector<std::uint8_t> values(array.data(), array.data() + array.size());
  return BinaryMask(grid_of(array), std::move(values));
}

Heatmap to_heatmap(const F64Array& array) {
  std::vector<double> values(array.data(), array.data() + array.size());
  return Heatmap(grid_of(array), std::move(values));
}

py::array values_array(const BinaryMask& mask) {
  std::vector<py::ssize_t> shape(mask.grid().shape().begin(), mask.grid().shape().end());
  py::array_t<std::uint8_t> out(shape);
  std::copy(mask.values().begin(), mask.values().end(), out.mutable_data());
  return out;
}

py::array values_array(const Heatmap& heatmap) {
  std::vector<py::ssize_t> shape(heatmap.grid().shape().begin(), heatmap.grid().shape().end());
  py::array_t<double> out(shape);
  std::copy(heatmap.values().begin(), heatmap.values().end(), out.mutable_data());
  return out;
}

std::vector<BinaryMask> to_masks(const std::vector<U8Array>& arrays) {
  std::vector<BinaryMask> masks;
  masks.reserve(arrays.size());
  for (const U8Array& a : arrays) masks.push_back(to_mask(a));
  return masks;
}

Dataset to_dataset(const std::vector<F64Array>& features, const std::vector<U8Array>& labels) {
  if (features.size() != labels.size() || features.empty()) {
    throw InvalidArgumentError("need one label array per feature array");
  }
  Dataset data{grid_of(features[0]), {}, {}};
  for (std::size_t i = 0; i < features.size(); ++i) {
    data.features.emplace_back(features[i].data(), features[i].data() + features[i].size());
    data.labels.push_back(to_mask(labels[i]));
  }
  return data;
}

LossWeights to_weights(const std::vector<double>& w) { return LossWeights{w}; }

// Loss entry point over voxel-major [voxels, classes] arrays.
py::tuple loss_to_tuple(const LossResult& result, py::ssize_t voxels, py::ssize_t classes) {
  py::array_t<double> grad({voxels, classes});
  std::copy(result.grad.begin(), result.grad.end(), grad.mutable_data());
  return py::make_tuple(result.loss, grad);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Calibrated segmentation ensembles: losses, calibration solve, "
            "heatmaps and evaluation metrics";

  py::register_exception<Error>(m, "CalensError");

  // ---- types ----
  py::class_<BinaryMask>(m, "BinaryMask")
      .def(py::init([](const U8Array& values) { return to_mask(values); }), py::arg("values"))
      .def_property_readonly("values", [](const BinaryMask& self) { return values_array(self); })
      .def_property_readonly("shape",
                             [](const BinaryMask& self) { return self.grid().shape(); })
      .def("foreground_count", &BinaryMask::foreground_count);

  py::class_<Heatmap>(m, "Heatmap")
      .def(py::init([](const F64Array& values) { return to_heatmap(values); }), py::arg("values"))
      .def_property_readonly("values", [](const Heatmap& self) { return values_array(self); })
      .def_property_readonly("shape", [](const Heatmap& self) { return self.grid().shape(); });

  // ---- synthdata ----
  m.def("analytic_probability", py::vectorize(analytic_probability), py::arg("x"));
  m.def("analytic_probability_with_prior", py::vectorize(analytic_probability_with_prior),
        py::arg("t"), py::arg("prior"));
  m.def(
      "generate_gaussian1d",
      [](std::size_t n, std::uint64_t seed) {
        Gaussian1DDataset ds = generate_gaussian1d(n, seed);
        py::array_t<double> xs(static_cast<py::ssize_t>(ds.xs.size()));
        std::copy(ds.xs.begin(), ds.xs.end(), xs.mutable_data());
        py::array_t<std::uint8_t> labels(static_cast<py::ssize_t>(ds.labels.size()));
        std::copy(ds.labels.begin(), ds.labels.end(), labels.mutable_data());
        return py::make_tuple(xs, labels);
      },
      py::arg("n"), py::arg("seed"), "Returns (features, labels)");
  m.def(
      "generate_blob2d",
      [](std::size_t num_images, std::uint32_t height, std::uint32_t width,
         std::uint64_t seed) {
        Blob2DDataset ds = generate_blob2d(num_images, SampleGrid({height, width}), seed);
        py::list images, gt;
        for (std::size_t i = 0; i < num_images; ++i) {
          py::array_t<double> img({static_cast<py::ssize_t>(height),
                                   static_cast<py::ssize_t>(width)});
          std::copy(ds.images[i].begin(), ds.images[i].end(), img.mutable_data());
          images.append(img);
          gt.append(values_array(ds.ground_truth[i]));
        }
        py::array_t<double> prior({static_cast<py::ssize_t>(height),
                                   static_cast<py::ssize_t>(width)});
        std::copy(ds.foreground_prior.begin(), ds.foreground_prior.end(), prior.mutable_data());
        return py::make_tuple(images, gt, prior);
      },
      py::arg("num_images"), py::arg("height"), py::arg("width"), py::arg("seed"),
      "Returns (images, ground_truth, foreground_prior)");

  // ---- losses ----
  m.def(
      "weighted_cross_entropy",
      [](const U8Array& y, const F64Array& p, const std::vector<double>& w) {
        if (y.ndim() != 2 || p.ndim() != 2) {
          throw InvalidArgumentError("expected [voxels, classes] arrays");
        }
        LossResult r = weighted_cross_entropy_raw(
            std::span<const std::uint8_t>(y.data(), static_cast<std::size_t>(y.size())),
            std::span<const double>(p.data(), static_cast<std::size_t>(p.size())),
            static_cast<std::size_t>(y.shape(1)), to_weights(w));
        return loss_to_tuple(r, y.shape(0), y.shape(1));
      },
      py::arg("y"), py::arg("p"), py::arg("w"));
  m.def(
      "weighted_tversky_loss",
      [](const U8Array& y, const F64Array& p, const std::vector<double>& w, double eps) {
        if (y.ndim() != 2 || p.ndim() != 2) {
          throw InvalidArgumentError("expected [voxels, classes] arrays");
        }
        LossResult r = weighted_tversky_loss_raw(
            std::span<const std::uint8_t>(y.data(), static_cast<std::size_t>(y.size())),
            std::span<const double>(p.data(), static_cast<std::size_t>(p.size())),
            static_cast<std::size_t>(y.shape(1)), to_weights(w), eps);
        return loss_to_tuple(r, y.shape(0), y.shape(1));
      },
      py::arg("y"), py::arg("p"), py::arg("w"), py::arg("eps") = kDefaultTverskyEps);
  m.def(
      "combined_loss",
      [](const U8Array& y, const F64Array& p, const std::vector<double>& w, double eps) {
        if (y.ndim() != 2 || p.ndim() != 2) {
          throw InvalidArgumentError("expected [voxels, classes] arrays");
        }
        LossResult r = combined_loss_raw(
            std::span<const std::uint8_t>(y.data(), static_cast<std::size_t>(y.size())),
            std::span<const double>(p.data(), static_cast<std::size_t>(p.size())),
            static_cast<std::size_t>(y.shape(1)), to_weights(w), eps);
        return loss_to_tuple(r, y.shape(0), y.shape(1));
      },
      py::arg("y"), py::arg("p"), py::arg("w"), py::arg("eps") = kDefaultTverskyEps);

  // ---- models ----
  py::class_<TrainerParams>(m, "TrainerParams")
      .def(py::init<>())
      .def_readwrite("epochs", &TrainerParams::epochs)
      .def_readwrite("learning_rate", &TrainerParams::learning_rate)
      .def_readwrite("momentum", &TrainerParams::momentum)
      .def_readwrite("tversky_eps", &TrainerParams::tversky_eps)
      .def_readwrite("hidden_width", &TrainerParams::hidden_width)
      .def_readwrite("dropout_probability", &TrainerParams::dropout_probability);

  py::class_<EnsembleSpec>(m, "EnsembleSpec")
      .def(py::init<>())
      .def_readwrite("w_dsc", &EnsembleSpec::w_dsc)
      .def_readwrite("offsets", &EnsembleSpec::offsets)
      .def_readwrite("folds", &EnsembleSpec::folds)
      .def_readwrite("seed", &EnsembleSpec::seed)
      .def_property(
          "model", [](const EnsembleSpec& self) { return to_string(self.model); },
          [](EnsembleSpec& self, const std::string& kind) {
            self.model = model_kind_from_string(kind);
          })
      .def_readwrite("trainer", &EnsembleSpec::trainer)
      .def_readwrite("threads", &EnsembleSpec::threads)
      .def("weights", &EnsembleSpec::weights);

  py::class_<DropoutSpec>(m, "DropoutSpec")
      .def(py::init<>())
      .def_readwrite("drop_probability", &DropoutSpec::drop_probability)
      .def_readwrite("passes", &DropoutSpec::passes);

  py::class_<ToyModel>(m, "ToyModel")
      .def_property_readonly("kind", [](const ToyModel& self) { return to_string(self.kind); })
      .def_readonly("parameters", &ToyModel::parameters)
      .def_readonly("loss_weight", &ToyModel::loss_weight)
      .def_readonly("seed", &ToyModel::seed)
      .def("decision_threshold", &ToyModel::decision_threshold);

  m.def(
      "train_member",
      [](const std::vector<F64Array>& features, const std::vector<U8Array>& labels,
         const std::string& kind, double loss_weight, std::uint64_t seed,
         const TrainerParams& params) {
        return train_member(to_dataset(features, labels), model_kind_from_string(kind),
                            loss_weight, seed, params);
      },
      py::arg("features"), py::arg("labels"), py::arg("kind"), py::arg("loss_weight"),
      py::arg("seed"), py::arg("params") = TrainerParams{});
  m.def(
      "predict_foreground",
      [](const ToyModel& model, const F64Array& features) {
        std::vector<double> p = predict_foreground(
            model, std::span<const double>(features.data(),
                                           static_cast<std::size_t>(features.size())));
        py::array_t<double> out(static_cast<py::ssize_t>(p.size()));
        std::copy(p.begin(), p.end(), out.mutable_data());
        return out;
      },
      py::arg("model"), py::arg("features"));
  m.def(
      "predict_mask",
      [](const ToyModel& model, const F64Array& features) {
        return values_array(predict_mask(
            model, grid_of(features),
            std::span<const double>(features.data(),
                                    static_cast<std::size_t>(features.size()))));
      },
      py::arg("model"), py::arg("features"));
  m.def(
      "cross_val_predict",
      [](const std::vector<F64Array>& features, const std::vector<U8Array>& labels,
         const std::string& kind, double loss_weight, std::size_t folds, std::uint64_t seed,
         const TrainerParams& params) {
        CrossValResult result = cross_val_predict(to_dataset(features, labels),
                                                  model_kind_from_string(kind), loss_weight,
                                                  folds, seed, params);
        py::list masks;
        for (const BinaryMask& mask : result.masks) masks.append(values_array(mask));
        return py::make_tuple(masks, result.fold_of_item);
      },
      py::arg("features"), py::arg("labels"), py::arg("kind"), py::arg("loss_weight"),
      py::arg("folds"), py::arg("seed"), py::arg("params") = TrainerParams{},
      "Returns (cv_masks, fold_of_item)");

  py::class_<CalibratedEnsemble>(m, "CalibratedEnsemble")
      .def_readonly("weights", &CalibratedEnsemble::weights)
      .def_readonly("members", &CalibratedEnsemble::members)
      .def_readonly("fold_of_item", &CalibratedEnsemble::fold_of_item)
      .def(
          "cv_masks",
          [](const CalibratedEnsemble& self, std::size_t weight_index) {
            py::list masks;
            for (const BinaryMask& mask : self.cv_masks.at(weight_index)) {
              masks.append(values_array(mask));
            }
            return masks;
          },
          py::arg("weight_index"));

  m.def(
      "train_calibrated_ensemble",
      [](const std::vector<F64Array>& features, const std::vector<U8Array>& labels,
         const EnsembleSpec& spec) {
        return train_calibrated_ensemble(to_dataset(features, labels), spec);
      },
      py::arg("features"), py::arg("labels"), py::arg("spec"));
  m.def(
      "uncalibrated_ensemble",
      [](const std::vector<F64Array>& features, const std::vector<U8Array>& labels,
         const std::string& kind, double loss_weight, const std::vector<std::uint64_t>& seeds,
         const TrainerParams& params) {
        return uncalibrated_ensemble(to_dataset(features, labels),
                                     model_kind_from_string(kind), loss_weight, seeds, params);
      },
      py::arg("features"), py::arg("labels"), py::arg("kind"), py::arg("loss_weight"),
      py::arg("seeds"), py::arg("params") = TrainerParams{});
  m.def(
      "dropout_heatmap",
      [](const ToyModel& model, const F64Array& features, const DropoutSpec& spec,
         std::uint64_t seed) {
        return values_array(dropout_heatmap(
            model, grid_of(features),
            std::span<const double>(features.data(), static_cast<std::size_t>(features.size())),
            spec, seed));
      },
      py::arg("model"), py::arg("features"), py::arg("spec"), py::arg("seed"));

  // ---- calibration ----
  py::class_<PatternHistogram>(m, "PatternHistogram")
      .def(py::init<std::size_t>(), py::arg("n_models"))
      .def_property_readonly("n_models", &PatternHistogram::n_models)
      .def("add", &PatternHistogram::add, py::arg("pattern"), py::arg("voxels"),
           py::arg("foreground"))
      .def("merge", &PatternHistogram::merge)
      .def("total_voxels", &PatternHistogram::total_voxels)
      .def("entries", [](const PatternHistogram& self) {
        py::dict out;
        for (const auto& [pattern, counts] : self.entries()) {
          out[py::int_(pattern)] =
              py::make_tuple(counts.voxel_count, counts.foreground_count);
        }
        return out;
      });

  py::class_<CalibrationCoefficients>(m, "CalibrationCoefficients")
      .def_readonly("a", &CalibrationCoefficients::a)
      .def_readonly("residual_norm", &CalibrationCoefficients::residual_norm)
      .def_readonly("dropped_patterns", &CalibrationCoefficients::dropped_patterns)
      .def_readonly("zero_pattern_fg_rate", &CalibrationCoefficients::zero_pattern_fg_rate)
      .def_readonly("zero_pattern_voxels", &CalibrationCoefficients::zero_pattern_voxels)
      .def_readonly("degenerate", &CalibrationCoefficients::degenerate);

  m.def(
      "count_patterns",
      [](const std::vector<U8Array>& masks, const U8Array& gt) {
        return count_patterns(to_masks(masks), to_mask(gt));
      },
      py::arg("masks"), py::arg("gt"));
  m.def(
      "solve_coefficients",
      [](const PatternHistogram& histogram, const std::string& weighting, bool nonnegative) {
        SolveOptions options;
        options.weighting = weighting == "equal" ? RowWeighting::equal : RowWeighting::counts;
        options.nonnegative = nonnegative;
        return solve_coefficients(histogram, options);
      },
      py::arg("histogram"), py::arg("weighting") = "counts", py::arg("nonnegative") = false);
  m.def(
      "compose_heatmap",
      [](const std::vector<U8Array>& masks, const std::vector<double>& coefficients) {
        ComposedHeatmap composed =
            compose_heatmap(to_masks(masks), std::span<const double>(coefficients));
        return py::make_tuple(values_array(composed.heatmap), composed.clipped_low,
                              composed.clipped_high);
      },
      py::arg("masks"), py::arg("coefficients"),
      "Returns (heatmap, clipped_low, clipped_high)");
  m.def(
      "mean_heatmap",
      [](const std::vector<U8Array>& masks) {
        return values_array(mean_heatmap(to_masks(masks)));
      },
      py::arg("masks"));

  // ---- evaluation ----
  py::class_<CalibrationCurve>(m, "CalibrationCurve")
      .def_readonly("eval_points", &CalibrationCurve::eval_points)
      .def_readonly("observed_fg_rate", &CalibrationCurve::observed_fg_rate)
      .def_readonly("effective_weight", &CalibrationCurve::effective_weight)
      .def_readonly("valid", &CalibrationCurve::valid)
      .def_readonly("bandwidth", &CalibrationCurve::bandwidth);

  py::class_<PrevalenceConsistency>(m, "PrevalenceConsistency")
      .def_readonly("ground_truth", &PrevalenceConsistency::ground_truth)
      .def_readonly("prediction", &PrevalenceConsistency::prediction);

  py::class_<Quartiles>(m, "Quartiles")
      .def_readonly("q25", &Quartiles::q25)
      .def_readonly("q50", &Quartiles::q50)
      .def_readonly("q75", &Quartiles::q75);

  py::class_<FlagReport>(m, "FlagReport")
      .def_readonly("fp_probabilities", &FlagReport::fp_probabilities)
      .def_readonly("fn_probabilities", &FlagReport::fn_probabilities)
      .def_readonly("fp_quartiles", &FlagReport::fp_quartiles)
      .def_readonly("fn_quartiles", &FlagReport::fn_quartiles);

  m.def(
      "dsc", [](const U8Array& s, const U8Array& p) { return dsc(to_mask(s), to_mask(p)); },
      py::arg("s"), py::arg("p"));
  m.def(
      "estimated_dsc",
      [](const F64Array& h, const U8Array& p) { return estimated_dsc(to_heatmap(h), to_mask(p)); },
      py::arg("h"), py::arg("p"));
  m.def(
      "calibration_curve",
      [](const F64Array& h, const U8Array& gt, double bandwidth) {
        return calibration_curve(to_heatmap(h), to_mask(gt), bandwidth);
      },
      py::arg("h"), py::arg("gt"), py::arg("bandwidth") = 0.05);
  m.def(
      "expected_calibration_error",
      [](const F64Array& h, const U8Array& gt, std::size_t bins) {
        return expected_calibration_error(to_heatmap(h), to_mask(gt), bins);
      },
      py::arg("h"), py::arg("gt"), py::arg("bins") = 10);
  m.def(
      "expected_calibration_error_soft",
      [](const F64Array& h, const F64Array& reference, std::size_t bins) {
        return expected_calibration_error(to_heatmap(h), to_heatmap(reference), bins);
      },
      py::arg("h"), py::arg("reference"), py::arg("bins") = 10);
  m.def(
      "union_sensitivity",
      [](const std::vector<U8Array>& masks, const U8Array& gt) {
        return union_sensitivity(to_masks(masks), to_mask(gt));
      },
      py::arg("masks"), py::arg("gt"));
  m.def(
      "intersection_precision",
      [](const std::vector<U8Array>& masks, const U8Array& gt) {
        return intersection_precision(to_masks(masks), to_mask(gt));
      },
      py::arg("masks"), py::arg("gt"));
  m.def(
      "prevalence_consistency",
      [](const F64Array& h, const U8Array& pred, const U8Array& gt, double bandwidth) {
        return prevalence_consistency(to_heatmap(h), to_mask(pred), to_mask(gt), bandwidth);
      },
      py::arg("h"), py::arg("pred"), py::arg("gt"), py::arg("bandwidth") = 0.05);
  m.def(
      "flag_disagreements",
      [](const F64Array& h, const U8Array& annotation, const U8Array& gt) {
        return flag_disagreements(to_heatmap(h), to_mask(annotation), to_mask(gt));
      },
      py::arg("h"), py::arg("annotation"), py::arg("gt"));
  m.def("quartiles", &quartiles, py::arg("values"));

  // ---- io ----
  m.def(
      "write_mask", [](const std::filesystem::path& path,
                       const U8Array& values) { write_array(path, to_mask(values)); },
      py::arg("path"), py::arg("values"));
  m.def(
      "write_heatmap", [](const std::filesystem::path& path,
                          const F64Array& values) { write_array(path, to_heatmap(values)); },
      py::arg("path"), py::arg("values"));
  m.def(
      "read_array",
      [](const std::filesystem::path& path) -> py::object {
        ArrayFile file = read_array(path);
        std::vector<py::ssize_t> shape(file.grid.shape().begin(), file.grid.shape().end());
        if (file.dtype == ArrayDType::uint8) {
          py::array_t<std::uint8_t> out(shape);
          std::copy(file.u8.begin(), file.u8.end(), out.mutable_data());
          return out;
        }
        py::array_t<double> out(shape);
        std::copy(file.f64.begin(), file.f64.end(), out.mutable_data());
        return out;
      },
      py::arg("path"));

  m.attr("__version__") = "0.1.0";
}
