#include "calens/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "calens/errors.hpp"

namespace calens {

namespace {

constexpr char kMagic[4] = {'C', 'A', 'L', 'B'};

void append_u32_le(std::vector<std::uint8_t>& out, std::uint32_t value) {
  out.push_back(static_cast<std::uint8_t>(value & 0xFF));
  out.push_back(static_cast<std::uint8_t>((value >> 8) & 0xFF));
  out.push_back(static_cast<std::uint8_t>((value >> 16) & 0xFF));
  out.push_back(static_cast<std::uint8_t>((value >> 24) & 0xFF));
}

void append_f64_le(std::vector<std::uint8_t>& out, double value) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(value);
  for (int shift = 0; shift < 64; shift += 8) {
    out.push_back(static_cast<std::uint8_t>((bits >> shift) & 0xFF));
  }
}

std::vector<std::uint8_t> encode_header(const SampleGrid& grid, ArrayDType dtype) {
  std::vector<std::uint8_t> out;
  out.reserve(7 + 4 * grid.ndim());
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(kArrayFormatVersion);
  out.push_back(static_cast<std::uint8_t>(dtype));
  out.push_back(static_cast<std::uint8_t>(grid.ndim()));
  for (std::uint32_t extent : grid.shape()) append_u32_le(out, extent);
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) {
    throw IoError("read failed for " + path.string());
  }
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw IoError("write failed for " + path.string());
  }
}

double parse_double(const std::string& text) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw IoError("malformed number: " + text);
  }
  return value;
}

}  // namespace

std::vector<std::uint8_t> encode_array(const SampleGrid& grid,
                                       std::span<const std::uint8_t> values) {
  if (values.size() != grid.voxel_count()) {
    throw LengthMismatchError("payload does not match the grid");
  }
  std::vector<std::uint8_t> out = encode_header(grid, ArrayDType::uint8);
  out.insert(out.end(), values.begin(), values.end());
  return out;
}

std::vector<std::uint8_t> encode_array(const SampleGrid& grid, std::span<const double> values) {
  if (values.size() != grid.voxel_count()) {
    throw LengthMismatchError("payload does not match the grid");
  }
  std::vector<std::uint8_t> out = encode_header(grid, ArrayDType::float64);
  out.reserve(out.size() + values.size() * 8);
  for (double v : values) append_f64_le(out, v);
  return out;
}

ArrayFile decode_array(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 7) {
    throw CorruptHeaderError("array container shorter than its fixed header");
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CorruptHeaderError("bad magic bytes");
  }
  if (bytes[4] != kArrayFormatVersion) {
    throw UnsupportedVersionError("unsupported container version " + std::to_string(bytes[4]));
  }
  std::uint8_t dtype_code = bytes[5];
  if (dtype_code > 1) {
    throw CorruptHeaderError("unknown dtype code " + std::to_string(dtype_code));
  }
  std::uint8_t ndim = bytes[6];
  if (ndim < 1 || ndim > 3) {
    throw CorruptHeaderError("unsupported dimensionality " + std::to_string(ndim));
  }
  std::size_t header_size = 7 + 4 * static_cast<std::size_t>(ndim);
  if (bytes.size() < header_size) {
    throw CorruptHeaderError("array container truncated inside the extents");
  }
  std::vector<std::uint32_t> extents(ndim);
  for (std::uint8_t d = 0; d < ndim; ++d) {
    std::uint32_t v = 0;
    for (int b = 3; b >= 0; --b) {
      v = (v << 8) | bytes[7 + 4 * static_cast<std::size_t>(d) + static_cast<std::size_t>(b)];
    }
    extents[d] = v;
    if (v == 0) {
      throw CorruptHeaderError("zero extent in array container");
    }
  }
  SampleGrid grid{extents};
  ArrayDType dtype = static_cast<ArrayDType>(dtype_code);
  std::size_t value_size = dtype == ArrayDType::uint8 ? 1 : 8;
  std::size_t expected = header_size + grid.voxel_count() * value_size;
  if (bytes.size() != expected) {
    throw LengthMismatchError("payload holds " + std::to_string(bytes.size() - header_size) +
                              " bytes, expected " + std::to_string(expected - header_size));
  }
  ArrayFile file{grid, dtype, {}, {}};
  if (dtype == ArrayDType::uint8) {
    file.u8.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header_size), bytes.end());
  } else {
    file.f64.resize(grid.voxel_count());
    for (std::size_t i = 0; i < file.f64.size(); ++i) {
      std::uint64_t bits = 0;
      for (int b = 7; b >= 0; --b) {
        bits = (bits << 8) | bytes[header_size + i * 8 + static_cast<std::size_t>(b)];
      }
      file.f64[i] = std::bit_cast<double>(bits);
    }
  }
  return file;
}

void write_array(const std::filesystem::path& path, const BinaryMask& mask) {
  write_file_bytes(path, encode_array(mask.grid(), mask.values()));
}

void write_array(const std::filesystem::path& path, const Heatmap& heatmap) {
  write_file_bytes(path, encode_array(heatmap.grid(), heatmap.values()));
}

void write_array(const std::filesystem::path& path, const SampleGrid& grid,
                 std::span<const double> values) {
  write_file_bytes(path, encode_array(grid, values));
}

void write_array(const std::filesystem::path& path, const SampleGrid& grid,
                 std::span<const std::uint8_t> values) {
  write_file_bytes(path, encode_array(grid, values));
}

ArrayFile read_array(const std::filesystem::path& path) {
  return decode_array(read_file_bytes(path));
}

BinaryMask read_mask(const std::filesystem::path& path) {
  ArrayFile file = read_array(path);
  if (file.dtype != ArrayDType::uint8) {
    throw CorruptHeaderError(path.string() + " does not hold a uint8 mask");
  }
  return BinaryMask(file.grid, std::move(file.u8));
}

Heatmap read_heatmap(const std::filesystem::path& path) {
  ArrayFile file = read_array(path);
  if (file.dtype != ArrayDType::float64) {
    throw CorruptHeaderError(path.string() + " does not hold a float64 heatmap");
  }
  return Heatmap(file.grid, std::move(file.f64));
}

std::string format_g6(double value) {
  char buffer[64];
  auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value,
                                 std::chars_format::general, 6);
  if (ec != std::errc()) {
    throw IoError("number formatting failed");
  }
  return std::string(buffer, ptr);
}

std::string format_full(double value) {
  char buffer[64];
  auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  if (ec != std::errc()) {
    throw IoError("number formatting failed");
  }
  return std::string(buffer, ptr);
}

std::string render_csv(const Table& table) {
  std::string out;
  auto append_row = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out.push_back(',');
      out += cells[i];
    }
    out.push_back('\n');
  };
  append_row(table.header);
  for (const auto& row : table.rows) append_row(row);
  return out;
}

void write_report(const std::filesystem::path& path, const Table& table) {
  std::string text = render_csv(table);
  write_file_bytes(path, std::span<const std::uint8_t>(
                             reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Table curve_table(const CalibrationCurve& curve) {
  Table table;
  table.header = {"eval_point", "observed_fg_rate", "effective_weight", "valid"};
  for (std::size_t t = 0; t < curve.eval_points.size(); ++t) {
    table.rows.push_back({format_g6(curve.eval_points[t]), format_g6(curve.observed_fg_rate[t]),
                          format_g6(curve.effective_weight[t]), curve.valid[t] ? "1" : "0"});
  }
  return table;
}

Table paired_curve_table(const PrevalenceConsistency& curves) {
  Table table;
  table.header = {"eval_point", "gt_fg_rate", "pred_fg_rate", "effective_weight", "valid"};
  const CalibrationCurve& gt = curves.ground_truth;
  const CalibrationCurve& pred = curves.prediction;
  for (std::size_t t = 0; t < gt.eval_points.size(); ++t) {
    table.rows.push_back({format_g6(gt.eval_points[t]), format_g6(gt.observed_fg_rate[t]),
                          format_g6(pred.observed_fg_rate[t]), format_g6(gt.effective_weight[t]),
                          gt.valid[t] ? "1" : "0"});
  }
  return table;
}

Table flag_table(const FlagReport& report) {
  Table table;
  table.header = {"kind", "probability"};
  for (double v : report.fp_probabilities) table.rows.push_back({"fp", format_g6(v)});
  for (double v : report.fn_probabilities) table.rows.push_back({"fn", format_g6(v)});
  return table;
}

Table metrics_table(std::span<const std::pair<std::string, std::optional<double>>> metrics) {
  Table table;
  table.header = {"metric", "value"};
  for (const auto& [name, value] : metrics) {
    table.rows.push_back({name, value ? format_g6(*value) : "na"});
  }
  return table;
}

void write_coefficients(const std::filesystem::path& path, std::span<const double> model_weights,
                        const CalibrationCoefficients& coefficients) {
  if (model_weights.size() != coefficients.a.size()) {
    throw LengthMismatchError("one model weight per coefficient required");
  }
  std::string out = "calens-coefficients,1\n";
  out += "n_models," + std::to_string(coefficients.a.size()) + "\n";
  out += std::string("weighting,") +
         (coefficients.options.weighting == RowWeighting::counts ? "counts" : "equal") + "\n";
  out += std::string("nonnegative,") + (coefficients.options.nonnegative ? "1" : "0") + "\n";
  out += std::string("degenerate,") + (coefficients.degenerate ? "1" : "0") + "\n";
  out += "residual_norm," + format_full(coefficients.residual_norm) + "\n";
  out += "zero_pattern_fg_rate," + format_full(coefficients.zero_pattern_fg_rate) + "\n";
  out += "zero_pattern_voxels," + std::to_string(coefficients.zero_pattern_voxels) + "\n";
  out += "w,a\n";
  for (std::size_t k = 0; k < coefficients.a.size(); ++k) {
    out += format_full(model_weights[k]) + "," + format_full(coefficients.a[k]) + "\n";
  }
  write_file_bytes(path, std::span<const std::uint8_t>(
                             reinterpret_cast<const std::uint8_t*>(out.data()), out.size()));
}

CoefficientsFile read_coefficients(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes = read_file_bytes(path);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::string line;
  CoefficientsFile file;
  bool in_table = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::size_t comma = line.find(',');
    if (comma == std::string::npos) {
      throw IoError("malformed coefficients line " + std::to_string(line_no));
    }
    std::string key = line.substr(0, comma);
    std::string value = line.substr(comma + 1);
    if (line_no == 1) {
      if (key != "calens-coefficients" || value != "1") {
        throw IoError("not a calens coefficients file: " + path.string());
      }
      continue;
    }
    if (in_table) {
      file.model_weights.push_back(parse_double(key));
      file.coefficients.a.push_back(parse_double(value));
      continue;
    }
    if (key == "w" && value == "a") {
      in_table = true;
    } else if (key == "n_models") {
      // size checked after parsing
    } else if (key == "weighting") {
      file.coefficients.options.weighting =
          value == "equal" ? RowWeighting::equal : RowWeighting::counts;
    } else if (key == "nonnegative") {
      file.coefficients.options.nonnegative = value == "1";
    } else if (key == "degenerate") {
      file.coefficients.degenerate = value == "1";
    } else if (key == "residual_norm") {
      file.coefficients.residual_norm = parse_double(value);
    } else if (key == "zero_pattern_fg_rate") {
      file.coefficients.zero_pattern_fg_rate = parse_double(value);
    } else if (key == "zero_pattern_voxels") {
      file.coefficients.zero_pattern_voxels = static_cast<std::uint64_t>(parse_double(value));
    } else {
      throw IoError("unknown coefficients key: " + key);
    }
  }
  if (file.coefficients.a.empty()) {
    throw IoError("coefficients file holds no coefficients: " + path.string());
  }
  return file;
}

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& object, std::initializer_list<const char*> known,
                         const std::string& where) {
  for (const auto& [key, value] : object.items()) {
    bool ok = false;
    for (const char* candidate : known) {
      if (key == candidate) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw ConfigError("unknown key \"" + key + "\" in " + where);
    }
  }
}

}  // namespace

RunConfig parse_run_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) {
    throw ConfigError("config root must be an object");
  }
  reject_unknown_keys(doc, {"dataset", "ensemble", "dropout", "uncalibrated_seeds",
                            "evaluation", "output_dir"},
                      "config root");

  RunConfig config;
  try {
    if (!doc.contains("dataset") || !doc.contains("output_dir")) {
      throw ConfigError("config requires \"dataset\" and \"output_dir\"");
    }
    const json& dataset = doc.at("dataset");
    reject_unknown_keys(dataset, {"task", "train_dir", "test_dir"}, "dataset");
    config.dataset.task = dataset.at("task").get<std::string>();
    if (config.dataset.task != "gaussian1d" && config.dataset.task != "blob2d") {
      throw ConfigError("dataset.task must be gaussian1d or blob2d");
    }
    config.dataset.train_dir = dataset.at("train_dir").get<std::string>();
    if (dataset.contains("test_dir")) {
      config.dataset.test_dir = dataset.at("test_dir").get<std::string>();
    }
    config.output_dir = doc.at("output_dir").get<std::string>();

    if (doc.contains("ensemble")) {
      const json& ensemble = doc.at("ensemble");
      reject_unknown_keys(ensemble,
                          {"w_dsc", "offsets", "folds", "seed", "model", "epochs",
                           "learning_rate", "momentum", "tversky_eps", "hidden_width",
                           "threads"},
                          "ensemble");
      if (ensemble.contains("w_dsc")) config.ensemble.w_dsc = ensemble.at("w_dsc").get<double>();
      if (ensemble.contains("offsets")) {
        config.ensemble.offsets = ensemble.at("offsets").get<std::vector<int>>();
      }
      if (ensemble.contains("folds")) {
        config.ensemble.folds = ensemble.at("folds").get<std::size_t>();
      }
      if (ensemble.contains("seed")) {
        config.ensemble.seed = ensemble.at("seed").get<std::uint64_t>();
      }
      if (ensemble.contains("model")) {
        config.ensemble.model = model_kind_from_string(ensemble.at("model").get<std::string>());
      }
      if (ensemble.contains("epochs")) {
        config.ensemble.trainer.epochs = ensemble.at("epochs").get<std::size_t>();
      }
      if (ensemble.contains("learning_rate")) {
        config.ensemble.trainer.learning_rate = ensemble.at("learning_rate").get<double>();
      }
      if (ensemble.contains("momentum")) {
        config.ensemble.trainer.momentum = ensemble.at("momentum").get<double>();
      }
      if (ensemble.contains("tversky_eps")) {
        config.ensemble.trainer.tversky_eps = ensemble.at("tversky_eps").get<double>();
      }
      if (ensemble.contains("hidden_width")) {
        config.ensemble.trainer.hidden_width = ensemble.at("hidden_width").get<std::size_t>();
      }
      if (ensemble.contains("threads")) {
        config.ensemble.threads = ensemble.at("threads").get<std::size_t>();
      }
    }
    if (doc.contains("dropout")) {
      const json& dropout = doc.at("dropout");
      reject_unknown_keys(dropout, {"drop_probability", "passes", "seed"}, "dropout");
      if (dropout.contains("drop_probability")) {
        config.dropout.drop_probability = dropout.at("drop_probability").get<double>();
      }
      if (dropout.contains("passes")) {
        config.dropout.passes = dropout.at("passes").get<std::size_t>();
      }
      if (dropout.contains("seed")) {
        config.dropout_seed = dropout.at("seed").get<std::uint64_t>();
      }
    }
    if (doc.contains("uncalibrated_seeds")) {
      config.uncalibrated_seeds =
          doc.at("uncalibrated_seeds").get<std::vector<std::uint64_t>>();
      if (config.uncalibrated_seeds.empty()) {
        throw ConfigError("uncalibrated_seeds must not be empty");
      }
    }
    if (doc.contains("evaluation")) {
      const json& evaluation = doc.at("evaluation");
      reject_unknown_keys(evaluation, {"bandwidth", "bins"}, "evaluation");
      if (evaluation.contains("bandwidth")) {
        config.bandwidth = evaluation.at("bandwidth").get<double>();
      }
      if (evaluation.contains("bins")) {
        config.bins = evaluation.at("bins").get<std::size_t>();
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config value: ") + e.what());
  }

  config.ensemble.validate();
  config.dropout.validate();
  if (!(config.bandwidth > 0.0 && config.bandwidth <= 0.5)) {
    throw ConfigError("evaluation.bandwidth must lie in (0, 0.5]");
  }
  if (config.bins < 2) {
    throw ConfigError("evaluation.bins must be at least 2");
  }
  return config;
}

RunConfig parse_run_config(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes = read_file_bytes(path);
  return parse_run_config_text(std::string(bytes.begin(), bytes.end()));
}

std::vector<std::string> list_stems(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw IoError("not a directory: " + dir.string());
  }
  std::vector<std::string> stems;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".calb") {
      stems.push_back(entry.path().stem().string());
    }
  }
  std::sort(stems.begin(), stems.end());
  return stems;
}

std::string weight_dir_name(double weight) { return "w" + format_full(weight); }

}  // namespace calens
