#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "calens/errors.hpp"
#include "calens/io.hpp"
#include "calens/rng.hpp"

using namespace calens;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("calens_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("array container round-trips both dtypes") {
  fs::path dir = temp_dir("io_roundtrip");

  BinaryMask mask(SampleGrid({3, 3}), {0, 1, 0, 1, 1, 0, 0, 0, 1});
  write_array(dir / "mask.calb", mask);
  BinaryMask mask_back = read_mask(dir / "mask.calb");
  CHECK(mask_back == mask);

  std::vector<double> values = {0.0, 0.25, 1.0, 1e-300, 0.875};
  write_array(dir / "values.calb", SampleGrid({5}), values);
  ArrayFile file = read_array(dir / "values.calb");
  CHECK(file.dtype == ArrayDType::float64);
  CHECK(file.f64 == values);
}

TEST_CASE("randomized round-trips are byte-identical") {
  CounterRng rng(404);
  for (int round = 0; round < 200; ++round) {
    std::size_t ndim = 1 + rng.next_below(3);
    std::vector<std::uint32_t> shape;
    for (std::size_t d = 0; d < ndim; ++d) {
      shape.push_back(1 + static_cast<std::uint32_t>(rng.next_below(6)));
    }
    SampleGrid grid(shape);
    std::vector<std::uint8_t> bytes;
    if (rng.next_u64() & 1u) {
      std::vector<std::uint8_t> values(grid.voxel_count());
      for (auto& v : values) v = static_cast<std::uint8_t>(rng.next_below(256));
      bytes = encode_array(grid, std::span<const std::uint8_t>(values));
    } else {
      std::vector<double> values(grid.voxel_count());
      for (auto& v : values) v = rng.next_uniform(-10.0, 10.0);
      bytes = encode_array(grid, std::span<const double>(values));
    }
    ArrayFile decoded = decode_array(bytes);
    std::vector<std::uint8_t> reencoded =
        decoded.dtype == ArrayDType::uint8
            ? encode_array(decoded.grid, std::span<const std::uint8_t>(decoded.u8))
            : encode_array(decoded.grid, std::span<const double>(decoded.f64));
    CHECK(reencoded == bytes);
  }
}

TEST_CASE("corrupt headers are rejected with the specific error") {
  std::vector<double> values = {0.5, 0.25};
  std::vector<std::uint8_t> good = encode_array(SampleGrid({2}), std::span<const double>(values));

  SUBCASE("wrong magic") {
    auto bad = good;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_array(bad), CorruptHeaderError);
  }
  SUBCASE("unsupported version") {
    auto bad = good;
    bad[4] = 9;
    CHECK_THROWS_AS(decode_array(bad), UnsupportedVersionError);
  }
  SUBCASE("unknown dtype") {
    auto bad = good;
    bad[5] = 7;
    CHECK_THROWS_AS(decode_array(bad), CorruptHeaderError);
  }
  SUBCASE("bad ndim") {
    auto bad = good;
    bad[6] = 4;
    CHECK_THROWS_AS(decode_array(bad), CorruptHeaderError);
  }
  SUBCASE("truncated payload") {
    auto bad = good;
    bad.pop_back();
    CHECK_THROWS_AS(decode_array(bad), LengthMismatchError);
  }
  SUBCASE("trailing garbage") {
    auto bad = good;
    bad.push_back(0);
    CHECK_THROWS_AS(decode_array(bad), LengthMismatchError);
  }
  SUBCASE("empty file") {
    CHECK_THROWS_AS(decode_array(std::vector<std::uint8_t>{}), CorruptHeaderError);
  }
}

TEST_CASE("report formatting is deterministic and 6-significant-digit") {
  CHECK(format_g6(0.5) == "0.5");
  CHECK(format_g6(1.0 / 3.0) == "0.333333");
  CHECK(format_g6(123456789.0) == "1.23457e+08");

  Table table;
  table.header = {"a", "b"};
  table.rows.push_back({format_g6(1.0), format_g6(0.123456789)});
  std::string csv = render_csv(table);
  CHECK(csv == "a,b\n1,0.123457\n");

  fs::path dir = temp_dir("io_report");
  write_report(dir / "t.csv", table);
  write_report(dir / "t2.csv", table);
  std::ifstream a(dir / "t.csv"), b(dir / "t2.csv");
  std::string ta((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string tb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(ta == tb);
}

TEST_CASE("coefficients file round-trips") {
  fs::path dir = temp_dir("io_coeffs");
  CalibrationCoefficients coeffs;
  coeffs.a = {0.53333333333333333, 0.23333333333333334};
  coeffs.residual_norm = 0.01234;
  coeffs.zero_pattern_fg_rate = 0.002;
  coeffs.zero_pattern_voxels = 10;
  coeffs.degenerate = false;
  std::vector<double> weights = {-1.0, 2.5};
  write_coefficients(dir / "c.txt", weights, coeffs);

  CoefficientsFile file = read_coefficients(dir / "c.txt");
  CHECK(file.model_weights == weights);
  CHECK(file.coefficients.a == coeffs.a);
  CHECK(file.coefficients.residual_norm == coeffs.residual_norm);
  CHECK(file.coefficients.zero_pattern_fg_rate == coeffs.zero_pattern_fg_rate);
  CHECK(file.coefficients.zero_pattern_voxels == coeffs.zero_pattern_voxels);
}

TEST_CASE("run config applies defaults and rejects unknown keys") {
  std::string good = R"({
    "dataset": {"task": "gaussian1d", "train_dir": "d/train", "test_dir": "d/test"},
    "ensemble": {"w_dsc": 0.5, "folds": 3, "seed": 7},
    "output_dir": "out"
  })";
  RunConfig config = parse_run_config_text(good);
  CHECK(config.dataset.task == "gaussian1d");
  CHECK(config.ensemble.w_dsc == 0.5);
  CHECK(config.ensemble.folds == 3);
  CHECK(config.ensemble.offsets == std::vector<int>{-3, -2, -1, 0, 1, 2, 3});
  CHECK(config.ensemble.trainer.epochs == 500);
  CHECK(config.ensemble.trainer.learning_rate == 0.1);
  CHECK(config.ensemble.trainer.momentum == 0.9);
  CHECK(config.dropout.drop_probability == 0.1);
  CHECK(config.dropout.passes == 7);
  CHECK(config.uncalibrated_seeds.size() == 7);
  CHECK(config.bandwidth == 0.05);
  CHECK(config.bins == 10);

  CHECK_THROWS_AS(parse_run_config_text(R"({"dataset": {"task": "gaussian1d",
    "train_dir": "d"}, "output_dir": "o", "surprise": 1})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config_text(R"({"dataset": {"task": "nope",
    "train_dir": "d"}, "output_dir": "o"})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config_text(R"({"dataset": {"task": "gaussian1d",
    "train_dir": "d"}, "ensemble": {"folds": 1}, "output_dir": "o"})"),
                  Error);
  CHECK_THROWS_AS(parse_run_config_text("not json"), ConfigError);
}

TEST_CASE("weight directory names are canonical") {
  CHECK(weight_dir_name(3.0) == "w3");
  CHECK(weight_dir_name(-2.0) == "w-2");
  CHECK(weight_dir_name(0.5) == "w0.5");
}
