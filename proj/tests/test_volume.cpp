#include <doctest.h>

#include "dbtmask/errors.hpp"
#include "dbtmask/volume.hpp"
#include "test_support.hpp"

using namespace dbtmask;
using namespace dbtmask::testing;

namespace {

DbtVolume stack_of(int n_slices) { return make_volume(1, 1, n_slices, std::vector<std::uint16_t>(n_slices, 0)); }

}  // namespace

TEST_CASE("central slice is the lower middle") {
  CHECK(central_slice_index(stack_of(1)) == 0);
  CHECK(central_slice_index(stack_of(101)) == 50);
  CHECK(central_slice_index(stack_of(100)) == 49);
  CHECK(central_slice_index(2) == 0);
}

TEST_CASE("percentile slice rounds half up") {
  CHECK(percentile_slice_index(stack_of(100), 0.2) == 20);
  CHECK(percentile_slice_index(stack_of(100), 0.8) == 79);
  CHECK(percentile_slice_index(stack_of(37), 0.0) == 0);
  CHECK(percentile_slice_index(stack_of(37), 1.0) == 36);
  // 0.5 * 3 = 1.5 rounds up.
  CHECK(percentile_slice_index(4, 0.5) == 2);
  CHECK_THROWS_AS(percentile_slice_index(stack_of(10), -0.01), DomainError);
  CHECK_THROWS_AS(percentile_slice_index(stack_of(10), 1.01), DomainError);
  CHECK_THROWS_AS(percentile_slice_index(stack_of(10), std::nan("")), DomainError);
}

TEST_CASE("percentile slice is monotone and in range") {
  for (int n = 1; n <= 60; ++n) {
    int previous = 0;
    for (int k = 0; k <= 200; ++k) {
      const int s = percentile_slice_index(n, k / 200.0);
      CHECK(s >= previous);
      CHECK(s <= n - 1);
      previous = s;
    }
  }
}

TEST_CASE("normalize_slice maps min to 0 and max to 1") {
  const auto v = make_volume(1, 3, 1, {100, 200, 300});
  CHECK(normalize_slice(v, 0).values == std::vector<double>{0.0, 0.5, 1.0});

  const auto constant = make_volume(1, 3, 1, {7, 7, 7});
  CHECK(normalize_slice(constant, 0).values == std::vector<double>{0.0, 0.0, 0.0});

  const auto full = make_volume(1, 2, 1, {0, 65535});
  CHECK(normalize_slice(full, 0).values == std::vector<double>{0.0, 1.0});

  CHECK_THROWS_AS(normalize_slice(full, 1), DomainError);
  CHECK_THROWS_AS(normalize_slice(full, -1), DomainError);
}

TEST_CASE("normalization is per slice") {
  const auto v = make_volume(1, 2, 2, {0, 10, 500, 1000});
  CHECK(normalize_slice(v, 0).values == std::vector<double>{0.0, 1.0});
  CHECK(normalize_slice(v, 1).values == std::vector<double>{0.0, 1.0});
}

TEST_CASE("normalization is invariant to positive affine maps") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int rows = uniform_int(rng, 1, 12);
    const int cols = uniform_int(rng, 1, 12);
    std::vector<std::uint16_t> raw(static_cast<std::size_t>(rows) * cols);
    for (auto& x : raw) x = static_cast<std::uint16_t>(uniform_int(rng, 0, 1000));
    const int a = uniform_int(rng, 1, 60);
    const int b = uniform_int(rng, 0, 5000);
    std::vector<std::uint16_t> mapped(raw.size());
    for (std::size_t k = 0; k < raw.size(); ++k) mapped[k] = static_cast<std::uint16_t>(a * raw[k] + b);
    CHECK(normalize_slice(raw, rows, cols) == normalize_slice(mapped, rows, cols));
  }
}

TEST_CASE("normalization is idempotent after requantization") {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const int rows = uniform_int(rng, 1, 10);
    const int cols = uniform_int(rng, 1, 10);
    const auto raw = random_raw_slice(rng, rows, cols, uniform_int(rng, 1, 8));
    const NormalizedSlice once = normalize_slice(raw, rows, cols);
    const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
    std::vector<std::uint16_t> requantized(raw.size());
    for (std::size_t k = 0; k < raw.size(); ++k) {
      requantized[k] = static_cast<std::uint16_t>(std::lround(*lo + once.values[k] * (*hi - *lo)));
    }
    CHECK(normalize_slice(requantized, rows, cols) == once);
    for (double x : once.values) {
      CHECK(x >= 0.0);
      CHECK(x <= 1.0);
    }
  }
}

TEST_CASE("volume construction validates its invariants") {
  CHECK_THROWS_AS(make_volume(0, 1, 1, {}), ValidationError);
  CHECK_THROWS_AS(make_volume(2, 2, 1, {1, 2, 3}), ValidationError);
  CHECK_THROWS_AS(make_volume(1, 1, 1, {1}, {0.0, 0.1}), ValidationError);
  CHECK_THROWS_AS(make_volume(1, 1, 1, {1}, {0.1, -1.0}), ValidationError);
  const auto v = make_volume(2, 3, 2, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
  CHECK(v.at(1, 1, 2) == 11);
  CHECK(v.slice(1).front() == 6);
}

TEST_CASE("view and VAD names round-trip") {
  for (View v : {View::RCC, View::LCC, View::RMLO, View::LMLO}) CHECK(parse_view(to_string(v)) == v);
  for (VadCategory c : kAllVadCategories) CHECK(parse_vad(to_string(c)) == c);
  CHECK_THROWS_AS(parse_view("CC"), ValidationError);
  CHECK(vad_from_percent(25) == VadCategory::B0_25);
  CHECK(vad_from_percent(26) == VadCategory::B26_50);
  CHECK(vad_from_percent(51) == VadCategory::B51_75);
  CHECK(vad_from_percent(100) == VadCategory::B76_100);
}
