#include "calens/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "calens/calibration.hpp"
#include "calens/errors.hpp"
#include "calens/evaluation.hpp"
#include "calens/io.hpp"
#include "calens/models.hpp"
#include "calens/rng.hpp"
#include "calens/synthdata.hpp"
#include "calens/types.hpp"

namespace fs = std::filesystem;

namespace calens::cli {

namespace {

std::string stem_name(std::size_t index) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%04zu", index);
  return buffer;
}

// ---------------------------------------------------------------- datasets

struct DiskDataset {
  std::string task;
  std::vector<std::string> stems;
  std::vector<SampleGrid> file_grids;
  std::vector<std::vector<double>> file_features;
  std::vector<BinaryMask> file_gt;  // empty when the gt directory is absent
  Dataset items{SampleGrid({1}), {}, {}};
  // item -> (file index, voxel offset inside the file)
  std::vector<std::pair<std::size_t, std::size_t>> item_locus;
};

DiskDataset load_disk_dataset(const fs::path& root, const std::string& task,
                              bool require_gt) {
  DiskDataset ds;
  ds.task = task;
  fs::path images_dir = root / "images";
  fs::path gt_dir = root / "gt";
  ds.stems = list_stems(images_dir);
  if (ds.stems.empty()) {
    throw IoError("no .calb files under " + images_dir.string());
  }
  bool have_gt = fs::is_directory(gt_dir);
  if (require_gt && !have_gt) {
    throw IoError("missing gt directory under " + root.string());
  }
  if (have_gt) {
    std::vector<std::string> gt_stems = list_stems(gt_dir);
    if (gt_stems != ds.stems) {
      throw IoError("images/ and gt/ stems differ under " + root.string());
    }
  }
  for (const std::string& stem : ds.stems) {
    ArrayFile image = read_array(images_dir / (stem + ".calb"));
    if (image.dtype != ArrayDType::float64) {
      throw IoError("image " + stem + " is not a float64 array");
    }
    ds.file_grids.push_back(image.grid);
    ds.file_features.push_back(std::move(image.f64));
    if (have_gt) {
      BinaryMask gt = read_mask(gt_dir / (stem + ".calb"));
      validate_same_grid(gt.grid(), ds.file_grids.back());
      ds.file_gt.push_back(std::move(gt));
    }
  }

  if (task == "gaussian1d") {
    // Every voxel is an independent sample.
    ds.items.item_grid = SampleGrid({1});
    for (std::size_t f = 0; f < ds.stems.size(); ++f) {
      for (std::size_t i = 0; i < ds.file_features[f].size(); ++i) {
        ds.items.features.push_back({ds.file_features[f][i]});
        if (have_gt) {
          ds.items.labels.emplace_back(
              ds.items.item_grid, std::vector<std::uint8_t>{ds.file_gt[f].values()[i]});
        }
        ds.item_locus.emplace_back(f, i);
      }
    }
  } else {
    // Every file is one image item; all files must share a grid.
    ds.items.item_grid = ds.file_grids[0];
    for (std::size_t f = 0; f < ds.stems.size(); ++f) {
      if (ds.file_grids[f] != ds.items.item_grid) {
        throw IoError("blob2d images must share one grid");
      }
      ds.items.features.push_back(ds.file_features[f]);
      if (have_gt) ds.items.labels.push_back(ds.file_gt[f]);
      ds.item_locus.emplace_back(f, 0);
    }
  }
  return ds;
}

// Reassemble per-item masks into per-file arrays and write them.
void write_item_masks(const DiskDataset& ds, std::span<const BinaryMask> item_masks,
                      const fs::path& dir) {
  for (std::size_t f = 0; f < ds.stems.size(); ++f) {
    std::vector<std::uint8_t> values(ds.file_grids[f].voxel_count(), 0);
    bool touched = false;
    for (std::size_t item = 0; item < ds.item_locus.size(); ++item) {
      if (ds.item_locus[item].first != f) continue;
      touched = true;
      std::span<const std::uint8_t> mask = item_masks[item].values();
      std::copy(mask.begin(), mask.end(),
                values.begin() + static_cast<std::ptrdiff_t>(ds.item_locus[item].second));
    }
    if (!touched) continue;
    write_array(dir / (ds.stems[f] + ".calb"), BinaryMask(ds.file_grids[f], std::move(values)));
  }
}

// ------------------------------------------------------------------- synth

int cmd_synth(const std::string& task, std::size_t n, std::uint64_t seed,
              const fs::path& out, const std::string& grid_text) {
  if (task == "gaussian1d") {
    Gaussian1DDataset ds = generate_gaussian1d(n, seed);
    SampleGrid grid({static_cast<std::uint32_t>(n)});
    write_array(out / "images" / "0000.calb", grid, ds.xs);
    write_array(out / "gt" / "0000.calb", grid, std::span<const std::uint8_t>(ds.labels));
    std::vector<double> analytic(n);
    for (std::size_t i = 0; i < n; ++i) analytic[i] = analytic_probability(ds.xs[i]);
    write_array(out / "analytic" / "0000.calb", grid, analytic);
    std::size_t positives = 0;
    for (std::uint8_t label : ds.labels) positives += label;
    std::cout << "task=gaussian1d samples=" << n << " seed=" << seed
              << " label1_fraction=" << format_g6(static_cast<double>(positives) / n) << "\n";
    return 0;
  }

  // blob2d
  std::uint32_t height = 32, width = 32;
  if (!grid_text.empty()) {
    std::size_t x = grid_text.find('x');
    if (x == std::string::npos) {
      throw ConfigError("--grid expects HxW, e.g. 32x32");
    }
    height = static_cast<std::uint32_t>(std::stoul(grid_text.substr(0, x)));
    width = static_cast<std::uint32_t>(std::stoul(grid_text.substr(x + 1)));
  }
  SampleGrid grid({height, width});
  Blob2DDataset ds = generate_blob2d(n, grid, seed);
  double fg_total = 0.0;
  for (std::size_t img = 0; img < n; ++img) {
    std::string stem = stem_name(img);
    write_array(out / "images" / (stem + ".calb"), grid, ds.images[img]);
    write_array(out / "gt" / (stem + ".calb"), ds.ground_truth[img]);
    std::vector<double> analytic(grid.voxel_count());
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      analytic[i] = analytic_probability_with_prior(ds.images[img][i], ds.foreground_prior[i]);
    }
    write_array(out / "analytic" / (stem + ".calb"), grid, analytic);
    fg_total += static_cast<double>(ds.ground_truth[img].foreground_count()) /
                static_cast<double>(grid.voxel_count());
  }
  write_array(out / "prior.calb", grid, ds.foreground_prior);
  std::cout << "task=blob2d images=" << n << " grid=" << height << "x" << width
            << " seed=" << seed << " mean_fg_fraction=" << format_g6(fg_total / n) << "\n";
  return 0;
}

// ------------------------------------------------------------------- train

int cmd_train(const fs::path& config_path, std::size_t threads_override) {
  RunConfig config = parse_run_config(config_path);
  if (threads_override > 0) config.ensemble.threads = threads_override;

  DiskDataset train = load_disk_dataset(config.dataset.train_dir, config.dataset.task, true);
  const fs::path& out = config.output_dir;

  CalibratedEnsemble ensemble = train_calibrated_ensemble(train.items, config.ensemble);

  Table manifest;
  manifest.header = {"role", "weight", "fold", "seed", "kind", "file"};
  for (std::size_t wi = 0; wi < ensemble.weights.size(); ++wi) {
    fs::path preds_dir = out / "preds" / weight_dir_name(ensemble.weights[wi]);
    write_item_masks(train, ensemble.cv_masks[wi], preds_dir);
    for (std::size_t fold = 0; fold < ensemble.members[wi].size(); ++fold) {
      const ToyModel& model = ensemble.members[wi][fold];
      fs::path model_file = out / "models" / weight_dir_name(ensemble.weights[wi]) /
                            ("fold" + std::to_string(fold) + ".calb");
      write_array(model_file, SampleGrid({static_cast<std::uint32_t>(model.parameters.size())}),
                  model.parameters);
      manifest.rows.push_back({"calibrated", format_full(model.loss_weight),
                               std::to_string(fold), std::to_string(model.seed),
                               to_string(model.kind),
                               model_file.lexically_relative(out).generic_string()});
    }
  }

  // Baselines share the ensemble's centre weight w_dsc and the full data.
  std::vector<ToyModel> uncal =
      uncalibrated_ensemble(train.items, config.ensemble.model, config.ensemble.w_dsc,
                            config.uncalibrated_seeds, config.ensemble.trainer,
                            config.ensemble.threads);
  for (std::size_t m = 0; m < uncal.size(); ++m) {
    fs::path model_file = out / "models" / "uncalibrated" / ("m" + std::to_string(m) + ".calb");
    write_array(model_file, SampleGrid({static_cast<std::uint32_t>(uncal[m].parameters.size())}),
                uncal[m].parameters);
    manifest.rows.push_back({"uncalibrated", format_full(uncal[m].loss_weight), "-",
                             std::to_string(uncal[m].seed), to_string(uncal[m].kind),
                             model_file.lexically_relative(out).generic_string()});
  }

  TrainerParams dropout_trainer = config.ensemble.trainer;
  dropout_trainer.dropout_probability = config.dropout.drop_probability;
  ToyModel dropout_model = train_member(train.items, ModelKind::mlp, config.ensemble.w_dsc,
                                        config.dropout_seed, dropout_trainer);
  {
    fs::path model_file = out / "models" / "dropout.calb";
    write_array(model_file,
                SampleGrid({static_cast<std::uint32_t>(dropout_model.parameters.size())}),
                dropout_model.parameters);
    manifest.rows.push_back({"dropout", format_full(dropout_model.loss_weight), "-",
                             std::to_string(dropout_model.seed), to_string(dropout_model.kind),
                             model_file.lexically_relative(out).generic_string()});
  }
  write_report(out / "manifest.csv", manifest);

  // Test-time predictions, when a test split is configured.
  if (!config.dataset.test_dir.empty()) {
    DiskDataset test = load_disk_dataset(config.dataset.test_dir, config.dataset.task, false);
    for (std::size_t f = 0; f < test.stems.size(); ++f) {
      const SampleGrid& grid = test.file_grids[f];
      std::span<const double> features(test.file_features[f]);
      const std::string file_name = test.stems[f] + ".calb";

      for (std::size_t wi = 0; wi < ensemble.weights.size(); ++wi) {
        BinaryMask mask = ensemble_mask(ensemble.members[wi], grid, features);
        write_array(out / "test_preds" / weight_dir_name(ensemble.weights[wi]) / file_name, mask);
      }

      std::vector<BinaryMask> uncal_masks;
      uncal_masks.reserve(uncal.size());
      for (std::size_t m = 0; m < uncal.size(); ++m) {
        uncal_masks.push_back(predict_mask(uncal[m], grid, features));
        write_array(out / "members" / "uncalibrated" / ("m" + std::to_string(m)) / file_name,
                    uncal_masks.back());
      }
      write_array(out / "heatmaps" / "uncalibrated" / file_name,
                  mean_heatmap(uncal_masks));

      // Majority vote of the uncalibrated members is the working prediction.
      {
        std::vector<std::uint8_t> vote(grid.voxel_count());
        for (std::size_t i = 0; i < vote.size(); ++i) {
          std::size_t fired = 0;
          for (const BinaryMask& m : uncal_masks) fired += m.values()[i];
          vote[i] = 2 * fired > uncal_masks.size() ? 1 : 0;
        }
        write_array(out / "pred" / file_name, BinaryMask(grid, std::move(vote)));
      }

      std::uint64_t pass_seed = splitmix_at(config.dropout_seed, f);
      std::vector<BinaryMask> pass_masks =
          dropout_pass_masks(dropout_model, grid, features, config.dropout, pass_seed);
      for (std::size_t p = 0; p < pass_masks.size(); ++p) {
        write_array(out / "members" / "dropout" / ("p" + std::to_string(p)) / file_name,
                    pass_masks[p]);
      }
      write_array(out / "heatmaps" / "dropout" / file_name, mean_heatmap(pass_masks));
    }
  }

  std::cout << "trained " << ensemble.weights.size() << "x" << config.ensemble.folds
            << " calibrated members, " << uncal.size()
            << " uncalibrated members, 1 dropout model\n";
  return 0;
}

// --------------------------------------------------------------- calibrate

struct WeightDir {
  double weight;
  fs::path dir;
};

std::vector<WeightDir> weight_subdirs(const fs::path& preds_root) {
  if (!fs::is_directory(preds_root)) {
    throw IoError("not a directory: " + preds_root.string());
  }
  std::vector<WeightDir> dirs;
  for (const auto& entry : fs::directory_iterator(preds_root)) {
    if (!entry.is_directory()) continue;
    std::string name = entry.path().filename().string();
    if (name.empty() || name[0] != 'w') continue;
    try {
      dirs.push_back(WeightDir{std::stod(name.substr(1)), entry.path()});
    } catch (const std::exception&) {
      throw IoError("cannot parse weight from directory name " + name);
    }
  }
  if (dirs.empty()) {
    throw IoError("no per-weight subdirectories under " + preds_root.string());
  }
  std::sort(dirs.begin(), dirs.end(),
            [](const WeightDir& a, const WeightDir& b) { return a.weight < b.weight; });
  return dirs;
}

// Member masks per stem, ordered by ascending weight.
std::vector<std::vector<BinaryMask>> load_member_masks(const std::vector<WeightDir>& dirs,
                                                       const std::vector<std::string>& stems) {
  for (const WeightDir& wd : dirs) {
    if (list_stems(wd.dir) != stems) {
      throw IoError("prediction stems under " + wd.dir.string() +
                    " do not match the ground truth");
    }
  }
  std::vector<std::vector<BinaryMask>> per_stem;
  per_stem.reserve(stems.size());
  for (const std::string& stem : stems) {
    std::vector<BinaryMask> members;
    members.reserve(dirs.size());
    for (const WeightDir& wd : dirs) {
      members.push_back(read_mask(wd.dir / (stem + ".calb")));
    }
    per_stem.push_back(std::move(members));
  }
  return per_stem;
}

int cmd_calibrate(const fs::path& preds_root, const fs::path& gt_dir, const fs::path& out_path,
                  const std::string& weighting, bool nonnegative) {
  std::vector<WeightDir> dirs = weight_subdirs(preds_root);
  std::vector<std::string> stems = list_stems(gt_dir);
  if (stems.empty()) {
    throw IoError("no ground-truth masks under " + gt_dir.string());
  }
  std::vector<std::vector<BinaryMask>> members = load_member_masks(dirs, stems);
  std::vector<BinaryMask> gt;
  gt.reserve(stems.size());
  for (const std::string& stem : stems) {
    gt.push_back(read_mask(gt_dir / (stem + ".calb")));
  }

  PatternHistogram histogram = count_patterns(members, gt);
  SolveOptions options;
  options.weighting = weighting == "equal" ? RowWeighting::equal : RowWeighting::counts;
  options.nonnegative = nonnegative;
  CalibrationCoefficients coefficients = solve_coefficients(histogram, options);

  // Dry-run composition over the training predictions for the clip counts.
  std::size_t clipped_low = 0, clipped_high = 0;
  for (const auto& stem_members : members) {
    ComposedHeatmap composed = compose_heatmap(stem_members, coefficients);
    clipped_low += composed.clipped_low;
    clipped_high += composed.clipped_high;
  }

  std::vector<double> weights;
  weights.reserve(dirs.size());
  for (const WeightDir& wd : dirs) weights.push_back(wd.weight);
  write_coefficients(out_path, weights, coefficients);

  for (std::size_t k = 0; k < weights.size(); ++k) {
    std::cout << "w=" << format_g6(weights[k]) << " a=" << format_g6(coefficients.a[k]) << "\n";
  }
  std::cout << "residual_norm=" << format_g6(coefficients.residual_norm)
            << " zero_pattern_fg_rate=" << format_g6(coefficients.zero_pattern_fg_rate)
            << " clipped_low=" << clipped_low << " clipped_high=" << clipped_high << "\n";
  if (coefficients.degenerate) {
    std::cerr << "warning: degenerate calibration system; wrote the minimum-norm solution\n";
    return 5;
  }
  return 0;
}

// ---------------------------------------------------------------- evaluate

struct SourceSpec {
  std::string name;
  fs::path heatmap_dir;    // set for --heatmaps
  fs::path compose_preds;  // set for --compose
  fs::path compose_coeffs;
  fs::path members_dir;    // optional --members attachment
};

struct NamedPath {
  std::string name;
  std::string value;
};

NamedPath parse_named(const std::string& text, const std::string& flag) {
  std::size_t eq = text.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == text.size()) {
    throw ConfigError(flag + " expects name=path, got \"" + text + "\"");
  }
  return NamedPath{text.substr(0, eq), text.substr(eq + 1)};
}

BinaryMask concat_masks(std::span<const BinaryMask> masks) {
  std::size_t total = 0;
  for (const BinaryMask& m : masks) total += m.values().size();
  std::vector<std::uint8_t> values;
  values.reserve(total);
  for (const BinaryMask& m : masks) {
    values.insert(values.end(), m.values().begin(), m.values().end());
  }
  return BinaryMask(SampleGrid({static_cast<std::uint32_t>(total)}), std::move(values));
}

Heatmap concat_heatmaps(std::span<const Heatmap> maps) {
  std::size_t total = 0;
  for (const Heatmap& h : maps) total += h.values().size();
  std::vector<double> values;
  values.reserve(total);
  for (const Heatmap& h : maps) {
    values.insert(values.end(), h.values().begin(), h.values().end());
  }
  return Heatmap(SampleGrid({static_cast<std::uint32_t>(total)}), std::move(values));
}

std::vector<BinaryMask> read_mask_dir(const fs::path& dir, const std::vector<std::string>& stems) {
  if (list_stems(dir) != stems) {
    throw IoError("stems under " + dir.string() + " do not match the ground truth");
  }
  std::vector<BinaryMask> masks;
  masks.reserve(stems.size());
  for (const std::string& stem : stems) masks.push_back(read_mask(dir / (stem + ".calb")));
  return masks;
}

int cmd_evaluate(const std::vector<std::string>& heatmap_args,
                 const std::vector<std::string>& compose_args,
                 const std::vector<std::string>& member_args, const fs::path& gt_dir,
                 const fs::path& pred_dir, const fs::path& annotation_dir,
                 const fs::path& analytic_dir, const fs::path& report_dir, double bandwidth,
                 std::size_t bins) {
  if (heatmap_args.empty() && compose_args.empty()) {
    throw ConfigError("evaluate needs at least one --heatmaps or --compose source");
  }

  std::vector<SourceSpec> sources;
  for (const std::string& arg : heatmap_args) {
    NamedPath np = parse_named(arg, "--heatmaps");
    sources.push_back(SourceSpec{np.name, np.value, {}, {}, {}});
  }
  for (const std::string& arg : compose_args) {
    NamedPath np = parse_named(arg, "--compose");
    std::size_t colon = np.value.rfind(':');
    if (colon == std::string::npos) {
      throw ConfigError("--compose expects name=preds_dir:coeffs_file");
    }
    sources.push_back(
        SourceSpec{np.name, {}, np.value.substr(0, colon), np.value.substr(colon + 1), {}});
  }
  for (const std::string& arg : member_args) {
    NamedPath np = parse_named(arg, "--members");
    bool found = false;
    for (SourceSpec& source : sources) {
      if (source.name == np.name) {
        source.members_dir = np.value;
        found = true;
      }
    }
    if (!found) {
      throw ConfigError("--members names unknown source \"" + np.name + "\"");
    }
  }

  std::vector<std::string> stems = list_stems(gt_dir);
  if (stems.empty()) {
    throw IoError("no ground-truth masks under " + gt_dir.string());
  }
  std::vector<BinaryMask> gt = read_mask_dir(gt_dir, stems);

  std::vector<BinaryMask> pred;
  if (!pred_dir.empty()) pred = read_mask_dir(pred_dir, stems);
  std::vector<BinaryMask> annotation;
  if (!annotation_dir.empty()) annotation = read_mask_dir(annotation_dir, stems);
  std::vector<Heatmap> analytic;
  if (!analytic_dir.empty()) {
    if (list_stems(analytic_dir) != stems) {
      throw IoError("analytic stems do not match the ground truth");
    }
    for (const std::string& stem : stems) {
      analytic.push_back(read_heatmap(analytic_dir / (stem + ".calb")));
    }
  }

  Table summary;
  summary.header = {"source",          "ece",
                    "ece_analytic",    "union_sensitivity",
                    "intersection_precision", "mean_true_dsc",
                    "mean_estimated_dsc",     "mean_abs_dsc_error"};

  for (const SourceSpec& source : sources) {
    std::vector<Heatmap> heatmaps;
    std::optional<std::vector<std::vector<BinaryMask>>> member_masks;  // [stem][member]
    std::size_t clipped_low = 0, clipped_high = 0;

    if (!source.heatmap_dir.empty()) {
      if (list_stems(source.heatmap_dir) != stems) {
        throw IoError("heatmap stems under " + source.heatmap_dir.string() +
                      " do not match the ground truth");
      }
      for (const std::string& stem : stems) {
        heatmaps.push_back(read_heatmap(source.heatmap_dir / (stem + ".calb")));
      }
    } else {
      std::vector<WeightDir> dirs = weight_subdirs(source.compose_preds);
      CoefficientsFile coeffs = read_coefficients(source.compose_coeffs);
      if (coeffs.coefficients.a.size() != dirs.size()) {
        throw IoError("coefficient count does not match the member directories");
      }
      member_masks = load_member_masks(dirs, stems);
      for (const auto& stem_members : *member_masks) {
        ComposedHeatmap composed = compose_heatmap(stem_members, coeffs.coefficients);
        clipped_low += composed.clipped_low;
        clipped_high += composed.clipped_high;
        heatmaps.push_back(std::move(composed.heatmap));
      }
    }
    if (!source.members_dir.empty()) {
      // Root has one subdirectory per member.
      std::vector<fs::path> member_dirs;
      for (const auto& entry : fs::directory_iterator(source.members_dir)) {
        if (entry.is_directory()) member_dirs.push_back(entry.path());
      }
      std::sort(member_dirs.begin(), member_dirs.end());
      if (member_dirs.empty()) {
        throw IoError("no member subdirectories under " + source.members_dir.string());
      }
      std::vector<std::vector<BinaryMask>> per_stem(stems.size());
      for (const fs::path& dir : member_dirs) {
        std::vector<BinaryMask> masks = read_mask_dir(dir, stems);
        for (std::size_t s = 0; s < stems.size(); ++s) {
          per_stem[s].push_back(std::move(masks[s]));
        }
      }
      member_masks = std::move(per_stem);
    }

    for (std::size_t s = 0; s < stems.size(); ++s) {
      validate_pair(gt[s], heatmaps[s]);
    }

    // Calibration curve and ECE over all voxels of all images.
    CalibrationCurve curve = calibration_curve(heatmaps, gt, bandwidth);
    write_report(report_dir / (source.name + "_calibration_curve.csv"), curve_table(curve));

    Heatmap all_h = concat_heatmaps(heatmaps);
    BinaryMask all_gt = concat_masks(gt);
    double ece = expected_calibration_error(all_h, all_gt, bins);
    std::optional<double> ece_analytic;
    if (!analytic.empty()) {
      ece_analytic = expected_calibration_error(all_h, concat_heatmaps(analytic), bins);
    }

    std::optional<double> union_sens, inter_prec;
    if (member_masks) {
      // Aggregate the set metrics over all images by concatenating voxels.
      std::vector<BinaryMask> concat_members;
      std::size_t n_members = (*member_masks)[0].size();
      for (std::size_t m = 0; m < n_members; ++m) {
        std::vector<BinaryMask> per_image;
        per_image.reserve(stems.size());
        for (std::size_t s = 0; s < stems.size(); ++s) {
          per_image.push_back((*member_masks)[s][m]);
        }
        concat_members.push_back(concat_masks(per_image));
      }
      union_sens = union_sensitivity(concat_members, all_gt);
      inter_prec = intersection_precision(concat_members, all_gt);
    }

    std::optional<double> mean_true, mean_est, mean_err;
    if (!pred.empty()) {
      Table dsc_table;
      dsc_table.header = {"stem", "true_dsc", "estimated_dsc"};
      double sum_true = 0.0, sum_est = 0.0, sum_err = 0.0;
      for (std::size_t s = 0; s < stems.size(); ++s) {
        double true_dsc = dsc(gt[s], pred[s]);
        double est_dsc = estimated_dsc(heatmaps[s], pred[s]);
        sum_true += true_dsc;
        sum_est += est_dsc;
        sum_err += std::abs(est_dsc - true_dsc);
        dsc_table.rows.push_back({stems[s], format_g6(true_dsc), format_g6(est_dsc)});
      }
      write_report(report_dir / (source.name + "_dsc.csv"), dsc_table);
      mean_true = sum_true / static_cast<double>(stems.size());
      mean_est = sum_est / static_cast<double>(stems.size());
      mean_err = sum_err / static_cast<double>(stems.size());

      PrevalenceConsistency curves = prevalence_consistency(heatmaps, pred, gt, bandwidth);
      write_report(report_dir / (source.name + "_prevalence.csv"), paired_curve_table(curves));
    }

    std::vector<std::pair<std::string, std::optional<double>>> metrics;
    metrics.emplace_back("ece", ece);
    metrics.emplace_back("ece_analytic", ece_analytic);
    metrics.emplace_back("union_sensitivity", union_sens);
    metrics.emplace_back("intersection_precision", inter_prec);
    metrics.emplace_back("mean_true_dsc", mean_true);
    metrics.emplace_back("mean_estimated_dsc", mean_est);
    metrics.emplace_back("mean_abs_dsc_error", mean_err);
    metrics.emplace_back("clipped_low", source.heatmap_dir.empty()
                                             ? std::optional<double>(clipped_low)
                                             : std::nullopt);
    metrics.emplace_back("clipped_high", source.heatmap_dir.empty()
                                              ? std::optional<double>(clipped_high)
                                              : std::nullopt);

    if (!annotation.empty()) {
      FlagReport flags = flag_disagreements(heatmaps, annotation, gt);
      write_report(report_dir / (source.name + "_flags.csv"), flag_table(flags));
      metrics.emplace_back("fp_flag_q25", flags.fp_quartiles.q25);
      metrics.emplace_back("fp_flag_q50", flags.fp_quartiles.q50);
      metrics.emplace_back("fp_flag_q75", flags.fp_quartiles.q75);
      metrics.emplace_back("fn_flag_q25", flags.fn_quartiles.q25);
      metrics.emplace_back("fn_flag_q50", flags.fn_quartiles.q50);
      metrics.emplace_back("fn_flag_q75", flags.fn_quartiles.q75);
    }
    write_report(report_dir / (source.name + "_metrics.csv"), metrics_table(metrics));

    auto cell = [](const std::optional<double>& v) { return v ? format_g6(*v) : "na"; };
    summary.rows.push_back({source.name, format_g6(ece), cell(ece_analytic), cell(union_sens),
                            cell(inter_prec), cell(mean_true), cell(mean_est), cell(mean_err)});
    std::cout << "source=" << source.name << " ece=" << format_g6(ece);
    if (ece_analytic) std::cout << " ece_analytic=" << format_g6(*ece_analytic);
    std::cout << "\n";
  }

  write_report(report_dir / "summary.csv", summary);
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Calibrated segmentation ensembles: synthetic data, training, "
               "calibration and evaluation"};
  app.require_subcommand(1);

  // synth
  std::string synth_task;
  std::size_t synth_n = 0;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  std::string synth_grid;
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--task", synth_task, "gaussian1d or blob2d")
      ->required()
      ->check(CLI::IsMember({"gaussian1d", "blob2d"}));
  synth->add_option("--n", synth_n, "Sample count (gaussian1d) or image count (blob2d)")
      ->required();
  synth->add_option("--seed", synth_seed, "Generator seed")->default_val(0);
  synth->add_option("--out", synth_out, "Output dataset directory")->required();
  synth->add_option("--grid", synth_grid, "Blob2d grid as HxW (default 32x32)");

  // train
  std::string train_config;
  std::size_t train_threads = 0;
  CLI::App* train = app.add_subcommand("train", "Train the calibrated ensemble and baselines");
  train->add_option("--config", train_config, "Run configuration (JSON)")->required();
  train->add_option("--threads", train_threads, "Cap training parallelism");

  // calibrate
  std::string cal_preds, cal_gt, cal_out, cal_weighting = "counts";
  bool cal_nonnegative = false;
  CLI::App* calibrate =
      app.add_subcommand("calibrate", "Fit combination coefficients from prediction patterns");
  calibrate->add_option("--preds", cal_preds, "Root of per-weight prediction directories")
      ->required();
  calibrate->add_option("--gt", cal_gt, "Ground-truth mask directory")->required();
  calibrate->add_option("--out", cal_out, "Coefficients output file")->required();
  calibrate->add_option("--weighting", cal_weighting, "Row weighting: counts or equal")
      ->check(CLI::IsMember({"counts", "equal"}));
  calibrate->add_flag("--nonnegative", cal_nonnegative, "Constrain coefficients to be >= 0");

  // evaluate
  std::vector<std::string> eval_heatmaps, eval_compose, eval_members;
  std::string eval_gt, eval_pred, eval_annotation, eval_analytic, eval_report;
  double eval_bandwidth = 0.05;
  std::size_t eval_bins = 10;
  CLI::App* evaluate = app.add_subcommand("evaluate", "Evaluate heatmap sources against ground truth");
  evaluate->add_option("--heatmaps", eval_heatmaps, "Heatmap source as name=dir (repeatable)");
  evaluate->add_option("--compose", eval_compose,
                       "Composed source as name=preds_dir:coeffs_file (repeatable)");
  evaluate->add_option("--members", eval_members,
                       "Member masks for set metrics as name=dir (repeatable)");
  evaluate->add_option("--gt", eval_gt, "Ground-truth mask directory")->required();
  evaluate->add_option("--pred", eval_pred, "Binary prediction directory");
  evaluate->add_option("--annotation", eval_annotation, "Annotation mask directory");
  evaluate->add_option("--analytic", eval_analytic, "Analytic probability directory");
  evaluate->add_option("--report", eval_report, "Report output directory")->required();
  evaluate->add_option("--bandwidth", eval_bandwidth, "Parzen kernel bandwidth")
      ->default_val(0.05);
  evaluate->add_option("--bins", eval_bins, "Calibration error bins")->default_val(10);

  std::vector<const char*> argv;
  argv.push_back("calens");
  for (const std::string& arg : args) argv.push_back(arg.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
    if (*synth) {
      return cmd_synth(synth_task, synth_n, synth_seed, synth_out, synth_grid);
    }
    if (*train) {
      return cmd_train(train_config, train_threads);
    }
    if (*calibrate) {
      return cmd_calibrate(cal_preds, cal_gt, cal_out, cal_weighting, cal_nonnegative);
    }
    if (*evaluate) {
      return cmd_evaluate(eval_heatmaps, eval_compose, eval_members, eval_gt, eval_pred,
                          eval_annotation, eval_analytic, eval_report, eval_bandwidth,
                          eval_bins);
    }
    return 2;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidCountError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidGridError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidBandwidthError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DivergedTrainingError& e) {
    std::cerr << "error: training diverged: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace calens::cli
