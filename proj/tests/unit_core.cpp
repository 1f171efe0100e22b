#include <doctest.h>

#include "calens/errors.hpp"
#include "calens/rng.hpp"
#include "calens/types.hpp"

using namespace calens;

TEST_CASE("sample grid validation") {
  CHECK(SampleGrid({4, 4}).voxel_count() == 16);
  CHECK(SampleGrid({8}).voxel_count() == 8);
  CHECK(SampleGrid({2, 3, 4}).voxel_count() == 24);
  CHECK_THROWS_AS(SampleGrid({}), InvalidGridError);
  CHECK_THROWS_AS(SampleGrid({1, 2, 3, 4}), InvalidGridError);
  CHECK_THROWS_AS(SampleGrid({4, 0}), InvalidGridError);
}

TEST_CASE("validate_pair") {
  BinaryMask a(SampleGrid({4, 4}), std::vector<std::uint8_t>(16, 0));
  BinaryMask b(SampleGrid({4, 4}), std::vector<std::uint8_t>(16, 1));
  CHECK_NOTHROW(validate_pair(a, b));

  Heatmap h(SampleGrid({4, 5}), std::vector<double>(20, 0.5));
  CHECK_THROWS_AS(validate_pair(a, h), GridMismatchError);

  BinaryMask c(SampleGrid({8}), std::vector<std::uint8_t>(8, 0));
  BinaryMask d(SampleGrid({8}), std::vector<std::uint8_t>(8, 1));
  CHECK_NOTHROW(validate_pair(c, d));
}

TEST_CASE("mask and heatmap invariants") {
  CHECK_THROWS_AS(BinaryMask(SampleGrid({2}), {0, 2}), InvalidArgumentError);
  CHECK_THROWS_AS(BinaryMask(SampleGrid({3}), {0, 1}), LengthMismatchError);
  CHECK_THROWS_AS(Heatmap(SampleGrid({2}), {0.5, 1.5}), InvalidArgumentError);
  CHECK_THROWS_AS(Heatmap(SampleGrid({2}), {-0.1, 0.5}), InvalidArgumentError);
}

TEST_CASE("one-hot and soft prediction invariants") {
  CHECK_NOTHROW(OneHotLabel(SampleGrid({2}), 2, {1, 0, 0, 1}));
  CHECK_THROWS_AS(OneHotLabel(SampleGrid({2}), 2, {1, 1, 0, 1}), InvalidArgumentError);
  CHECK_NOTHROW(SoftPrediction(SampleGrid({1}), 2, {0.3, 0.7}));
  CHECK_THROWS_AS(SoftPrediction(SampleGrid({1}), 2, {0.3, 0.6}), InvalidArgumentError);
  CHECK_THROWS_AS(SoftPrediction(SampleGrid({1}), 2, {-0.1, 1.1}), InvalidArgumentError);
}

TEST_CASE("binary heatmap converts to mask and back losslessly") {
  CounterRng rng(17);
  for (int round = 0; round < 20; ++round) {
    std::size_t n = 1 + rng.next_below(50);
    std::vector<std::uint8_t> values(n);
    for (auto& v : values) v = static_cast<std::uint8_t>(rng.next_u64() & 1u);
    BinaryMask mask(SampleGrid({static_cast<std::uint32_t>(n)}), values);
    Heatmap h = heatmap_from_mask(mask);
    BinaryMask back = mask_from_heatmap(h);
    CHECK(back == mask);
  }
  Heatmap soft(SampleGrid({2}), {0.5, 1.0});
  CHECK_THROWS_AS(mask_from_heatmap(soft), InvalidArgumentError);
}

TEST_CASE("one-hot with a single foreground class round-trips through a mask") {
  CounterRng rng(23);
  std::vector<std::uint8_t> values(40);
  for (auto& v : values) v = static_cast<std::uint8_t>(rng.next_u64() & 1u);
  BinaryMask mask(SampleGrid({40}), values);
  OneHotLabel onehot = onehot_from_mask(mask);
  CHECK(onehot.num_classes() == 2);
  CHECK(mask_from_onehot(onehot) == mask);
}
