#include "calens/models.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <mutex>
#include <thread>

#include "calens/errors.hpp"
#include "calens/losses.hpp"
#include "calens/rng.hpp"
#include "calens/synthdata.hpp"

namespace calens {

namespace {

enum Stream : std::uint64_t {
  kInitStream = 10,
  kFoldStream = 11,
  kInferenceDropout = 12,
  kTrainingDropout = 13,
};

struct FlatBatch {
  std::vector<double> x;
  std::vector<std::uint8_t> onehot;  // voxel-major, 2 classes

  std::size_t voxels() const { return x.size(); }
};

FlatBatch flatten(const Dataset& data, std::span<const std::size_t> items) {
  FlatBatch batch;
  std::size_t total = items.size() * data.item_grid.voxel_count();
  batch.x.reserve(total);
  batch.onehot.reserve(total * 2);
  for (std::size_t item : items) {
    const auto& features = data.features[item];
    const auto labels = data.labels[item].values();
    for (std::size_t i = 0; i < features.size(); ++i) {
      batch.x.push_back(features[i]);
      batch.onehot.push_back(static_cast<std::uint8_t>(1 - labels[i]));
      batch.onehot.push_back(labels[i]);
    }
  }
  return batch;
}

std::vector<std::size_t> all_items(const Dataset& data) {
  std::vector<std::size_t> items(data.items());
  for (std::size_t i = 0; i < items.size(); ++i) items[i] = i;
  return items;
}

// ---- logistic ----

void logistic_forward(std::span<const double> params, std::span<const double> x,
                      std::vector<double>& p) {
  p.resize(x.size() * 2);
  for (std::size_t i = 0; i < x.size(); ++i) {
    double p1 = sigmoid(params[0] * x[i] + params[1]);
    p[i * 2] = 1.0 - p1;
    p[i * 2 + 1] = p1;
  }
}

void logistic_backward(std::span<const double> params, std::span<const double> x,
                       std::span<const double> p, std::span<const double> grad_p,
                       std::span<double> grad_params) {
  double ga = 0.0, gb = 0.0;
  (void)params;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double p1 = p[i * 2 + 1];
    double dz = (grad_p[i * 2 + 1] - grad_p[i * 2]) * p1 * (1.0 - p1);
    ga += dz * x[i];
    gb += dz;
  }
  grad_params[0] = ga;
  grad_params[1] = gb;
}

// ---- mlp ----

struct MlpDims {
  std::size_t hidden;
  std::size_t w1() const { return 0; }
  std::size_t b1() const { return hidden; }
  std::size_t w2() const { return 2 * hidden; }     // [c * hidden + j]
  std::size_t b2() const { return 4 * hidden; }
  std::size_t total() const { return 4 * hidden + 2; }
};

// Forward pass; `drop_keep` (when non-null) holds the per-voxel-per-unit
// inverted-dropout scale (0 or 1/(1-q)) and must have voxels*hidden entries.
void mlp_forward(std::span<const double> params, MlpDims dims, std::span<const double> x,
                 const std::vector<double>* drop_keep, std::vector<double>& hidden,
                 std::vector<double>& p) {
  const std::size_t h = dims.hidden;
  hidden.resize(x.size() * h);
  p.resize(x.size() * 2);
  for (std::size_t i = 0; i < x.size(); ++i) {
    double z0 = params[dims.b2()];
    double z1 = params[dims.b2() + 1];
    for (std::size_t j = 0; j < h; ++j) {
      double a = std::tanh(params[dims.w1() + j] * x[i] + params[dims.b1() + j]);
      if (drop_keep) a *= (*drop_keep)[i * h + j];
      hidden[i * h + j] = a;
      z0 += params[dims.w2() + j] * a;
      z1 += params[dims.w2() + h + j] * a;
    }
    double m = std::max(z0, z1);
    double e0 = std::exp(z0 - m);
    double e1 = std::exp(z1 - m);
    double inv = 1.0 / (e0 + e1);
    p[i * 2] = e0 * inv;
    p[i * 2 + 1] = e1 * inv;
  }
}

void mlp_backward(std::span<const double> params, MlpDims dims, std::span<const double> x,
                  const std::vector<double>* drop_keep, std::span<const double> hidden,
                  std::span<const double> p, std::span<const double> grad_p,
                  std::span<double> grad_params) {
  const std::size_t h = dims.hidden;
  std::fill(grad_params.begin(), grad_params.end(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    double p0 = p[i * 2], p1 = p[i * 2 + 1];
    double g0 = grad_p[i * 2], g1 = grad_p[i * 2 + 1];
    double dot = g0 * p0 + g1 * p1;
    double dz0 = p0 * (g0 - dot);
    double dz1 = p1 * (g1 - dot);
    grad_params[dims.b2()] += dz0;
    grad_params[dims.b2() + 1] += dz1;
    for (std::size_t j = 0; j < h; ++j) {
      double a = hidden[i * h + j];
      grad_params[dims.w2() + j] += dz0 * a;
      grad_params[dims.w2() + h + j] += dz1 * a;
      double da = dz0 * params[dims.w2() + j] + dz1 * params[dims.w2() + h + j];
      if (drop_keep) {
        double keep = (*drop_keep)[i * h + j];
        if (keep == 0.0) continue;
        da *= keep;
        a /= keep;  // pre-dropout activation
      }
      double du = da * (1.0 - a * a);
      grad_params[dims.w1() + j] += du * x[i];
      grad_params[dims.b1() + j] += du;
    }
  }
}

// ---- threshold scan ----

double binary_prediction_loss(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn,
                              std::uint64_t n, double w, double eps) {
  const double log_floor = std::log(kProbabilityFloor);
  double ce = -(std::exp(-w) * static_cast<double>(fn) + static_cast<double>(fp)) * log_floor /
              static_cast<double>(n);
  double fp_share = sigmoid(w);
  double fn_share = sigmoid(-w);
  double numer = static_cast<double>(tp) + eps;
  double denom = static_cast<double>(tp) + fp_share * static_cast<double>(fp) +
                 fn_share * static_cast<double>(fn) + eps;
  return ce + (1.0 - numer / denom);
}

ToyModel train_threshold1d(const FlatBatch& batch, double loss_weight, std::uint64_t seed,
                           const TrainerParams& params) {
  std::vector<std::size_t> order(batch.voxels());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return batch.x[a] < batch.x[b]; });

  std::uint64_t positives = 0;
  for (std::size_t i = 0; i < batch.voxels(); ++i) positives += batch.onehot[i * 2 + 1];
  const std::uint64_t n = batch.voxels();

  // Sweep the threshold upward; samples at or below it flip to background.
  std::uint64_t tp = positives, fp = n - positives, fn = 0;
  double best_loss = binary_prediction_loss(tp, fp, fn, n, loss_weight, params.tversky_eps);
  double best_t = batch.x[order.front()] - 1.0;
  std::size_t i = 0;
  while (i < n) {
    double value = batch.x[order[i]];
    while (i < n && batch.x[order[i]] == value) {
      if (batch.onehot[order[i] * 2 + 1]) {
        --tp;
        ++fn;
      } else {
        --fp;
      }
      ++i;
    }
    double candidate =
        i < n ? 0.5 * (value + batch.x[order[i]]) : batch.x[order.back()] + 1.0;
    double loss = binary_prediction_loss(tp, fp, fn, n, loss_weight, params.tversky_eps);
    if (loss < best_loss) {
      best_loss = loss;
      best_t = candidate;
    }
  }
  ToyModel model;
  model.kind = ModelKind::threshold1d;
  model.parameters = {best_t};
  model.loss_weight = loss_weight;
  model.seed = seed;
  return model;
}

// ---- gradient training ----

ToyModel train_gradient(const FlatBatch& batch, ModelKind kind, double loss_weight,
                        std::uint64_t seed, const TrainerParams& params) {
  CounterRng init_rng = CounterRng(seed).derive(kInitStream);
  MlpDims dims{params.hidden_width};

  std::vector<double> theta;
  if (kind == ModelKind::logistic) {
    theta = {0.5 * init_rng.next_normal(), 0.5 * init_rng.next_normal()};
  } else {
    theta.resize(dims.total());
    for (std::size_t j = 0; j < dims.hidden; ++j) {
      theta[dims.w1() + j] = init_rng.next_normal();
      theta[dims.b1() + j] = init_rng.next_normal();
    }
    double scale = 1.0 / std::sqrt(static_cast<double>(dims.hidden));
    for (std::size_t k = 0; k < 2 * dims.hidden; ++k) {
      theta[dims.w2() + k] = scale * init_rng.next_normal();
    }
    theta[dims.b2()] = 0.0;
    theta[dims.b2() + 1] = 0.0;
  }

  const LossWeights weights = LossWeights::uniform(loss_weight);
  const bool use_dropout = kind == ModelKind::mlp && params.dropout_probability > 0.0;
  CounterRng dropout_root = CounterRng(seed).derive(kTrainingDropout);

  std::vector<double> velocity(theta.size(), 0.0);
  std::vector<double> grad(theta.size(), 0.0);
  std::vector<double> lookahead(theta.size(), 0.0);
  std::vector<double> p, hidden, keep;

  for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
    // Nesterov: evaluate the gradient at theta + momentum * velocity.
    for (std::size_t k = 0; k < theta.size(); ++k) {
      lookahead[k] = theta[k] + params.momentum * velocity[k];
    }
    const std::vector<double>* keep_ptr = nullptr;
    if (use_dropout) {
      CounterRng epoch_rng = dropout_root.derive(epoch);
      keep.resize(batch.voxels() * dims.hidden);
      double inv_keep = 1.0 / (1.0 - params.dropout_probability);
      for (double& k : keep) {
        k = epoch_rng.next_unit() < params.dropout_probability ? 0.0 : inv_keep;
      }
      keep_ptr = &keep;
    }

    LossResult loss;
    if (kind == ModelKind::logistic) {
      logistic_forward(lookahead, batch.x, p);
      loss = combined_loss_raw(batch.onehot, p, 2, weights, params.tversky_eps);
      logistic_backward(lookahead, batch.x, p, loss.grad, grad);
    } else {
      mlp_forward(lookahead, dims, batch.x, keep_ptr, hidden, p);
      loss = combined_loss_raw(batch.onehot, p, 2, weights, params.tversky_eps);
      mlp_backward(lookahead, dims, batch.x, keep_ptr, hidden, p, loss.grad, grad);
    }
    if (!std::isfinite(loss.loss)) {
      throw DivergedTrainingError("loss became non-finite at epoch " + std::to_string(epoch));
    }
    for (std::size_t k = 0; k < theta.size(); ++k) {
      velocity[k] = params.momentum * velocity[k] - params.learning_rate * grad[k];
      theta[k] += velocity[k];
    }
  }
  for (double v : theta) {
    if (!std::isfinite(v)) {
      throw DivergedTrainingError("parameters became non-finite");
    }
  }

  ToyModel model;
  model.kind = kind;
  model.parameters = std::move(theta);
  model.loss_weight = loss_weight;
  model.seed = seed;
  model.hidden_width = kind == ModelKind::mlp ? dims.hidden : 0;
  return model;
}

// Deterministic worker pool; results are keyed by job index, never by
// completion order.
void run_jobs(std::size_t count, std::size_t threads,
              const std::function<void(std::size_t)>& job) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        job(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  std::size_t workers = std::min(threads, count);
  pool.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

struct FoldPartition {
  std::vector<std::size_t> fold_of_item;
  std::vector<std::vector<std::size_t>> items_per_fold;
};

FoldPartition make_folds(std::size_t items, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) {
    throw InvalidArgumentError("cross-validation needs at least 2 folds");
  }
  if (items < folds) {
    throw TooFewSamplesError("need at least one sample per fold");
  }
  std::vector<std::size_t> order(items);
  for (std::size_t i = 0; i < items; ++i) order[i] = i;
  CounterRng(seed).derive(kFoldStream).shuffle(order);

  FoldPartition partition;
  partition.fold_of_item.resize(items);
  partition.items_per_fold.resize(folds);
  for (std::size_t f = 0; f < folds; ++f) {
    std::size_t begin = f * items / folds;
    std::size_t end = (f + 1) * items / folds;
    for (std::size_t k = begin; k < end; ++k) {
      partition.fold_of_item[order[k]] = f;
      partition.items_per_fold[f].push_back(order[k]);
    }
  }
  return partition;
}

std::vector<std::size_t> training_items(const FoldPartition& partition, std::size_t fold,
                                        std::size_t items) {
  std::vector<std::size_t> keep;
  keep.reserve(items);
  for (std::size_t i = 0; i < items; ++i) {
    if (partition.fold_of_item[i] != fold) keep.push_back(i);
  }
  return keep;
}

}  // namespace

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "threshold1d") return ModelKind::threshold1d;
  if (name == "logistic") return ModelKind::logistic;
  if (name == "mlp") return ModelKind::mlp;
  throw InvalidArgumentError("unknown model kind: " + name);
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::threshold1d: return "threshold1d";
    case ModelKind::logistic: return "logistic";
    case ModelKind::mlp: return "mlp";
  }
  return "unknown";
}

double ToyModel::decision_threshold() const {
  switch (kind) {
    case ModelKind::threshold1d:
      return parameters[0];
    case ModelKind::logistic:
      return parameters[0] != 0.0 ? -parameters[1] / parameters[0]
                                  : std::numeric_limits<double>::quiet_NaN();
    case ModelKind::mlp:
      break;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

Dataset dataset_from(const Gaussian1DDataset& source) {
  Dataset data{SampleGrid({1}), {}, {}};
  data.features.reserve(source.xs.size());
  data.labels.reserve(source.xs.size());
  for (std::size_t i = 0; i < source.xs.size(); ++i) {
    data.features.push_back({source.xs[i]});
    data.labels.emplace_back(data.item_grid, std::vector<std::uint8_t>{source.labels[i]});
  }
  return data;
}

Dataset dataset_from(const Blob2DDataset& source) {
  Dataset data{source.grid, source.images, source.ground_truth};
  return data;
}

std::vector<double> EnsembleSpec::weights() const {
  std::vector<double> result;
  result.reserve(offsets.size());
  for (int k : offsets) result.push_back(w_dsc - static_cast<double>(k));
  return result;
}

void EnsembleSpec::validate() const {
  if (offsets.empty()) {
    throw InvalidArgumentError("ensemble needs at least one loss weight");
  }
  std::vector<double> w = weights();
  bool increasing = true, decreasing = true;
  for (std::size_t i = 1; i < w.size(); ++i) {
    if (w[i] <= w[i - 1]) increasing = false;
    if (w[i] >= w[i - 1]) decreasing = false;
  }
  if (w.size() > 1 && !increasing && !decreasing) {
    throw InvalidArgumentError("ensemble weights must be strictly monotone");
  }
  if (folds < 2) {
    throw InvalidArgumentError("ensemble needs at least 2 folds");
  }
}

void DropoutSpec::validate() const {
  if (!(drop_probability > 0.0 && drop_probability < 1.0)) {
    throw InvalidArgumentError("drop probability must lie in (0,1)");
  }
  if (passes < 1) {
    throw InvalidArgumentError("need at least one dropout pass");
  }
}

ToyModel train_member(const Dataset& data, ModelKind kind, double loss_weight,
                      std::uint64_t seed, const TrainerParams& params) {
  if (data.items() == 0) {
    throw TooFewSamplesError("cannot train on an empty dataset");
  }
  FlatBatch batch = flatten(data, all_items(data));
  if (kind == ModelKind::threshold1d) {
    return train_threshold1d(batch, loss_weight, seed, params);
  }
  return train_gradient(batch, kind, loss_weight, seed, params);
}

std::vector<double> predict_foreground(const ToyModel& model, std::span<const double> features) {
  std::vector<double> p1(features.size());
  switch (model.kind) {
    case ModelKind::threshold1d:
      for (std::size_t i = 0; i < features.size(); ++i) {
        p1[i] = features[i] > model.parameters[0] ? 1.0 : 0.0;
      }
      break;
    case ModelKind::logistic:
      for (std::size_t i = 0; i < features.size(); ++i) {
        p1[i] = sigmoid(model.parameters[0] * features[i] + model.parameters[1]);
      }
      break;
    case ModelKind::mlp: {
      MlpDims dims{model.hidden_width};
      std::vector<double> hidden, p;
      mlp_forward(model.parameters, dims, features, nullptr, hidden, p);
      for (std::size_t i = 0; i < features.size(); ++i) p1[i] = p[i * 2 + 1];
      break;
    }
  }
  return p1;
}

SoftPrediction predict_soft(const ToyModel& model, const SampleGrid& grid,
                            std::span<const double> features) {
  if (features.size() != grid.voxel_count()) {
    throw GridMismatchError("feature count does not match the grid");
  }
  return binary_soft_prediction(grid, predict_foreground(model, features));
}

BinaryMask predict_mask(const ToyModel& model, const SampleGrid& grid,
                        std::span<const double> features) {
  if (features.size() != grid.voxel_count()) {
    throw GridMismatchError("feature count does not match the grid");
  }
  std::vector<double> p1 = predict_foreground(model, features);
  std::vector<std::uint8_t> values(p1.size());
  for (std::size_t i = 0; i < p1.size(); ++i) values[i] = p1[i] > 0.5 ? 1 : 0;
  return BinaryMask(grid, std::move(values));
}

BinaryMask ensemble_mask(std::span<const ToyModel> members, const SampleGrid& grid,
                         std::span<const double> features) {
  if (members.empty()) {
    throw InvalidArgumentError("ensemble mask needs at least one member");
  }
  if (features.size() != grid.voxel_count()) {
    throw GridMismatchError("feature count does not match the grid");
  }
  std::vector<double> mean(features.size(), 0.0);
  for (const ToyModel& member : members) {
    std::vector<double> p1 = predict_foreground(member, features);
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += p1[i];
  }
  std::vector<std::uint8_t> values(mean.size());
  const double n = static_cast<double>(members.size());
  for (std::size_t i = 0; i < mean.size(); ++i) values[i] = mean[i] / n > 0.5 ? 1 : 0;
  return BinaryMask(grid, std::move(values));
}

CrossValResult cross_val_predict(const Dataset& data, ModelKind kind, double loss_weight,
                                 std::size_t folds, std::uint64_t seed,
                                 const TrainerParams& params) {
  FoldPartition partition = make_folds(data.items(), folds, seed);
  CrossValResult result;
  result.fold_of_item = partition.fold_of_item;
  result.fold_models.reserve(folds);
  for (std::size_t f = 0; f < folds; ++f) {
    FlatBatch batch = flatten(data, training_items(partition, f, data.items()));
    std::uint64_t member_seed = splitmix_at(seed, f);
    if (kind == ModelKind::threshold1d) {
      result.fold_models.push_back(train_threshold1d(batch, loss_weight, member_seed, params));
    } else {
      result.fold_models.push_back(train_gradient(batch, kind, loss_weight, member_seed, params));
    }
  }
  result.masks.reserve(data.items());
  for (std::size_t item = 0; item < data.items(); ++item) {
    const ToyModel& model = result.fold_models[partition.fold_of_item[item]];
    result.masks.push_back(predict_mask(model, data.item_grid, data.features[item]));
  }
  return result;
}

CalibratedEnsemble train_calibrated_ensemble(const Dataset& data, const EnsembleSpec& spec) {
  spec.validate();
  if (data.items() == 0) {
    throw TooFewSamplesError("cannot train on an empty dataset");
  }
  FoldPartition partition = make_folds(data.items(), spec.folds, spec.seed);

  CalibratedEnsemble ensemble;
  ensemble.weights = spec.weights();
  ensemble.fold_of_item = partition.fold_of_item;
  ensemble.members.assign(ensemble.weights.size(), {});
  for (auto& fold_models : ensemble.members) {
    fold_models.resize(spec.folds);
  }

  const std::size_t jobs = ensemble.weights.size() * spec.folds;
  run_jobs(jobs, spec.threads, [&](std::size_t job) {
    std::size_t wi = job / spec.folds;
    std::size_t fold = job % spec.folds;
    FlatBatch batch = flatten(data, training_items(partition, fold, data.items()));
    std::uint64_t member_seed = splitmix_at(spec.seed, fold);
    ToyModel model;
    if (spec.model == ModelKind::threshold1d) {
      model = train_threshold1d(batch, ensemble.weights[wi], member_seed, spec.trainer);
    } else {
      model = train_gradient(batch, spec.model, ensemble.weights[wi], member_seed, spec.trainer);
    }
    ensemble.members[wi][fold] = std::move(model);
  });

  ensemble.cv_masks.reserve(ensemble.weights.size());
  for (std::size_t wi = 0; wi < ensemble.weights.size(); ++wi) {
    std::vector<BinaryMask> masks;
    masks.reserve(data.items());
    for (std::size_t item = 0; item < data.items(); ++item) {
      const ToyModel& model = ensemble.members[wi][partition.fold_of_item[item]];
      masks.push_back(predict_mask(model, data.item_grid, data.features[item]));
    }
    ensemble.cv_masks.push_back(std::move(masks));
  }
  return ensemble;
}

std::vector<ToyModel> uncalibrated_ensemble(const Dataset& data, ModelKind kind,
                                            double loss_weight,
                                            std::span<const std::uint64_t> seeds,
                                            const TrainerParams& params, std::size_t threads) {
  if (seeds.empty()) {
    throw InvalidArgumentError("need at least one seed");
  }
  if (data.items() == 0) {
    throw TooFewSamplesError("cannot train on an empty dataset");
  }
  FlatBatch batch = flatten(data, all_items(data));
  std::vector<ToyModel> members(seeds.size());
  run_jobs(seeds.size(), threads, [&](std::size_t i) {
    if (kind == ModelKind::threshold1d) {
      members[i] = train_threshold1d(batch, loss_weight, seeds[i], params);
    } else {
      members[i] = train_gradient(batch, kind, loss_weight, seeds[i], params);
    }
  });
  return members;
}

std::vector<BinaryMask> dropout_pass_masks(const ToyModel& model, const SampleGrid& grid,
                                           std::span<const double> features,
                                           const DropoutSpec& spec, std::uint64_t seed) {
  if (model.kind != ModelKind::mlp) {
    throw UnsupportedModelKindError("dropout inference requires an mlp model");
  }
  spec.validate();
  if (features.size() != grid.voxel_count()) {
    throw GridMismatchError("feature count does not match the grid");
  }
  MlpDims dims{model.hidden_width};
  CounterRng root = CounterRng(seed).derive(kInferenceDropout);
  const double inv_keep = 1.0 / (1.0 - spec.drop_probability);

  std::vector<BinaryMask> masks;
  masks.reserve(spec.passes);
  std::vector<double> keep(features.size() * dims.hidden);
  std::vector<double> hidden, p;
  for (std::size_t pass = 0; pass < spec.passes; ++pass) {
    CounterRng pass_rng = root.derive(pass);
    for (double& k : keep) {
      k = pass_rng.next_unit() < spec.drop_probability ? 0.0 : inv_keep;
    }
    mlp_forward(model.parameters, dims, features, &keep, hidden, p);
    std::vector<std::uint8_t> values(features.size());
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = p[i * 2 + 1] > 0.5 ? 1 : 0;
    masks.emplace_back(grid, std::move(values));
  }
  return masks;
}

Heatmap dropout_heatmap(const ToyModel& model, const SampleGrid& grid,
                        std::span<const double> features, const DropoutSpec& spec,
                        std::uint64_t seed) {
  std::vector<BinaryMask> masks = dropout_pass_masks(model, grid, features, spec, seed);
  std::vector<double> values(grid.voxel_count(), 0.0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::size_t fired = 0;
    for (const BinaryMask& mask : masks) fired += mask.values()[i];
    values[i] = static_cast<double>(fired) / static_cast<double>(masks.size());
  }
  return Heatmap(grid, std::move(values));
}

}  // namespace calens
