#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "calens/types.hpp"

namespace calens {

enum class ModelKind {
  threshold1d,  // predicts foreground iff the feature exceeds a threshold
  logistic,     // sigmoid(a * x + b) on the scalar feature
  mlp,          // one tanh hidden layer on the scalar feature
};

ModelKind model_kind_from_string(const std::string& name);
std::string to_string(ModelKind kind);

// Full-batch gradient descent settings (Nesterov momentum).
struct TrainerParams {
  std::size_t epochs = 500;
  double learning_rate = 0.1;
  double momentum = 0.9;
  double tversky_eps = 1.0;
  std::size_t hidden_width = 16;        // mlp only
  double dropout_probability = 0.0;     // mlp training-time dropout
};

// A trained desk-scale classifier applied independently per voxel.
struct ToyModel {
  ModelKind kind = ModelKind::logistic;
  std::vector<double> parameters;
  double loss_weight = 0.0;
  std::uint64_t seed = 0;
  std::size_t hidden_width = 0;  // mlp only

  // Feature value where the foreground probability crosses 0.5 (threshold1d
  // and logistic kinds).
  double decision_threshold() const;
};

// Item-addressable supervised data: items share one grid (a single voxel for
// the 1D task, an image for the 2D task).
struct Dataset {
  SampleGrid item_grid;
  std::vector<std::vector<double>> features;
  std::vector<BinaryMask> labels;

  std::size_t items() const { return features.size(); }
};

struct Gaussian1DDataset;
struct Blob2DDataset;
Dataset dataset_from(const Gaussian1DDataset& source);
Dataset dataset_from(const Blob2DDataset& source);

// Loss weights {w_dsc - k | k in offsets} with shared training settings and
// fold layout.
struct EnsembleSpec {
  double w_dsc = 0.0;
  std::vector<int> offsets = {-3, -2, -1, 0, 1, 2, 3};
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  ModelKind model = ModelKind::logistic;
  TrainerParams trainer;
  std::size_t threads = 1;

  std::vector<double> weights() const;
  void validate() const;
};

struct DropoutSpec {
  double drop_probability = 0.1;
  std::size_t passes = 7;

  void validate() const;
};

ToyModel train_member(const Dataset& data, ModelKind kind, double loss_weight,
                      std::uint64_t seed, const TrainerParams& params);

// Foreground probability per voxel of one item.
std::vector<double> predict_foreground(const ToyModel& model, std::span<const double> features);
SoftPrediction predict_soft(const ToyModel& model, const SampleGrid& grid,
                            std::span<const double> features);
// Foreground iff probability > 0.5; ties go to background.
BinaryMask predict_mask(const ToyModel& model, const SampleGrid& grid,
                        std::span<const double> features);

// Mean of the members' foreground probabilities, thresholded at 0.5. Used to
// turn the per-fold models of one loss weight into a single test-time mask.
BinaryMask ensemble_mask(std::span<const ToyModel> members, const SampleGrid& grid,
                         std::span<const double> features);

struct CrossValResult {
  std::vector<BinaryMask> masks;            // one per item, in dataset order
  std::vector<std::size_t> fold_of_item;
  std::vector<ToyModel> fold_models;
};

// Every item predicted exactly once by the model whose training fold
// excluded it. Items are shuffled by seed, then split into contiguous blocks.
CrossValResult cross_val_predict(const Dataset& data, ModelKind kind, double loss_weight,
                                 std::size_t folds, std::uint64_t seed,
                                 const TrainerParams& params);

struct CalibratedEnsemble {
  std::vector<double> weights;
  std::vector<std::vector<ToyModel>> members;    // [weight][fold]
  std::vector<std::vector<BinaryMask>> cv_masks; // [weight][item]
  std::vector<std::size_t> fold_of_item;
};

// One full cross-validation per loss weight; all weights share the fold
// partition. The cv masks feed the calibration solve.
CalibratedEnsemble train_calibrated_ensemble(const Dataset& data, const EnsembleSpec& spec);

// Baseline: identical models trained on the full data with different seeds.
std::vector<ToyModel> uncalibrated_ensemble(const Dataset& data, ModelKind kind,
                                            double loss_weight,
                                            std::span<const std::uint64_t> seeds,
                                            const TrainerParams& params, std::size_t threads = 1);

// Baseline: stochastic forward passes of an mlp with hidden units dropped at
// drop_probability. The heatmap is the pixel-wise mean of the pass masks.
std::vector<BinaryMask> dropout_pass_masks(const ToyModel& model, const SampleGrid& grid,
                                           std::span<const double> features,
                                           const DropoutSpec& spec, std::uint64_t seed);
Heatmap dropout_heatmap(const ToyModel& model, const SampleGrid& grid,
                        std::span<const double> features, const DropoutSpec& spec,
                        std::uint64_t seed);

}  // namespace calens
