#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "calens/calibration.hpp"
#include "calens/evaluation.hpp"
#include "calens/models.hpp"
#include "calens/types.hpp"

namespace calens {

// Binary array container ("CALB"): 4-byte magic, 1-byte version, 1-byte
// dtype (0 = uint8, 1 = float64), 1-byte ndim, ndim little-endian uint32
// extents, then the row-major little-endian payload. Round-trips are
// byte-identical on any platform.
constexpr std::uint8_t kArrayFormatVersion = 1;

enum class ArrayDType : std::uint8_t {
  uint8 = 0,
  float64 = 1,
};

struct ArrayFile {
  SampleGrid grid;
  ArrayDType dtype;
  std::vector<std::uint8_t> u8;   // filled when dtype == uint8
  std::vector<double> f64;        // filled when dtype == float64
};

std::vector<std::uint8_t> encode_array(const SampleGrid& grid, std::span<const std::uint8_t> values);
std::vector<std::uint8_t> encode_array(const SampleGrid& grid, std::span<const double> values);
ArrayFile decode_array(std::span<const std::uint8_t> bytes);

void write_array(const std::filesystem::path& path, const BinaryMask& mask);
void write_array(const std::filesystem::path& path, const Heatmap& heatmap);
void write_array(const std::filesystem::path& path, const SampleGrid& grid,
                 std::span<const double> values);
void write_array(const std::filesystem::path& path, const SampleGrid& grid,
                 std::span<const std::uint8_t> values);

ArrayFile read_array(const std::filesystem::path& path);
BinaryMask read_mask(const std::filesystem::path& path);
Heatmap read_heatmap(const std::filesystem::path& path);

// Locale-independent decimal formatting ('.' separator always).
std::string format_g6(double value);        // 6 significant digits (reports)
std::string format_full(double value);      // shortest round-trip (records)

// Comma-delimited tables with a header row and fixed 6-significant-digit
// number formatting; byte-deterministic for identical inputs.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

std::string render_csv(const Table& table);
void write_report(const std::filesystem::path& path, const Table& table);

Table curve_table(const CalibrationCurve& curve);
Table paired_curve_table(const PrevalenceConsistency& curves);
Table flag_table(const FlagReport& report);
// Metric rows; nullopt renders as "na".
Table metrics_table(std::span<const std::pair<std::string, std::optional<double>>> metrics);

// Plain-text record of a calibration solve: per-model loss weight and
// coefficient plus the solve diagnostics.
void write_coefficients(const std::filesystem::path& path, std::span<const double> model_weights,
                        const CalibrationCoefficients& coefficients);

struct CoefficientsFile {
  std::vector<double> model_weights;
  CalibrationCoefficients coefficients;
};

CoefficientsFile read_coefficients(const std::filesystem::path& path);

// Run configuration (JSON document). Unknown keys are rejected; every field
// not present falls back to the documented default.
struct DatasetConfig {
  std::string task;  // "gaussian1d" | "blob2d"
  std::filesystem::path train_dir;
  std::filesystem::path test_dir;
};

struct RunConfig {
  DatasetConfig dataset;
  EnsembleSpec ensemble;
  DropoutSpec dropout;
  std::uint64_t dropout_seed = 99;
  std::vector<std::uint64_t> uncalibrated_seeds = {1, 2, 3, 4, 5, 6, 7};
  double bandwidth = 0.05;
  std::size_t bins = 10;
  std::filesystem::path output_dir;
};

RunConfig parse_run_config(const std::filesystem::path& path);
RunConfig parse_run_config_text(const std::string& text);

// Sorted stems of the *.calb files in a directory.
std::vector<std::string> list_stems(const std::filesystem::path& dir);

// Canonical directory name for a per-weight prediction subdirectory.
std::string weight_dir_name(double weight);

}  // namespace calens
