#include <doctest.h>

#include "dbtmask/errors.hpp"
#include "dbtmask/geometry.hpp"
#include "test_support.hpp"

using namespace dbtmask;
using namespace dbtmask::testing;

TEST_CASE("rectangle rasterizes to the centers it encloses") {
  const PolygonRoi roi = rectangle(0.5, 0.5, 3.5, 2.5);
  const BinaryMask2D mask = rasterize_polygon(roi, 5, 5);
  CHECK(mask == oracle_rasterize(roi, 5, 5));
  CHECK(mask.popcount() == 6);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) CHECK(mask.at(i, j) == (i >= 1 && i <= 2 && j >= 1 && j <= 3));
  }
}

TEST_CASE("centers on edges follow the top-left rule") {
  // Edges pass exactly through centers: x = 1 and y = 1 are included,
  // x = 3 and y = 3 are not.
  const BinaryMask2D mask = rasterize_polygon(rectangle(1, 1, 3, 3), 5, 5);
  CHECK(mask.popcount() == 4);
  CHECK(mask.at(1, 1));
  CHECK(mask.at(2, 2));
  CHECK_FALSE(mask.at(3, 2));
  CHECK_FALSE(mask.at(2, 3));
}

TEST_CASE("adjacent polygons sharing an edge do not overlap") {
  const BinaryMask2D left = rasterize_polygon(rectangle(0, 0, 2, 4), 5, 5);
  const BinaryMask2D right = rasterize_polygon(rectangle(2, 0, 4, 4), 5, 5);
  const BinaryMask2D both = rasterize_polygon(rectangle(0, 0, 4, 4), 5, 5);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      CHECK_FALSE((left.at(i, j) && right.at(i, j)));
      CHECK((left.at(i, j) || right.at(i, j)) == both.at(i, j));
    }
  }
}

TEST_CASE("polygon validation") {
  CHECK_THROWS_AS(rasterize_polygon({{{0, 0}, {0, 0}, {1, 1}}, 0}, 5, 5), ValidationError);
  CHECK_THROWS_AS(rasterize_polygon({{{0, 0}, {1, 1}}, 0}, 5, 5), ValidationError);
  CHECK_THROWS_AS(rasterize_polygon({{{0, 0}, {1, 1}, {0, 0}}, 0}, 5, 5), ValidationError);
  CHECK_THROWS_AS(rasterize_polygon(rectangle(-0.6, 0, 2, 2), 5, 5), ValidationError);
  CHECK_THROWS_AS(rasterize_polygon(rectangle(0, 0, 4.6, 2), 5, 5), ValidationError);
  CHECK_THROWS_AS(rasterize_polygon({{{0, 0}, {std::nan(""), 1}, {1, 1}}, 0}, 5, 5), ValidationError);
  CHECK_NOTHROW(rasterize_polygon(rectangle(-0.5, -0.5, 4.5, 4.5), 5, 5));
}

TEST_CASE("polygon covering the grid sets every pixel") {
  const BinaryMask2D mask = rasterize_polygon(rectangle(-0.5, -0.5, 6.5, 4.5), 5, 7);
  CHECK(mask.popcount() == 35);
}

TEST_CASE("self-intersecting polygons use the even-odd rule") {
  // Bow tie crossing at (2, 2).
  const PolygonRoi bow{{{0, 0}, {4, 4}, {4, 0}, {0, 4}}, 0};
  const BinaryMask2D mask = rasterize_polygon(bow, 5, 5);
  CHECK(mask == oracle_rasterize(bow, 5, 5));
  CHECK(mask.at(2, 3));
  CHECK_FALSE(mask.at(0, 2));
}

TEST_CASE("rasterization matches the point-in-polygon oracle") {
  Rng rng(21);
  for (int trial = 0; trial < 400; ++trial) {
    const int rows = uniform_int(rng, 1, 64);
    const int cols = uniform_int(rng, 1, 64);
    const PolygonRoi roi = random_polygon(rng, rows, cols);
    REQUIRE(rasterize_polygon(roi, rows, cols) == oracle_rasterize(roi, rows, cols));
  }
}

TEST_CASE("integer translation translates the mask") {
  Rng rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    PolygonRoi roi = random_polygon(rng, 20, 20);
    for (auto& p : roi.vertices) {
      p.x = std::min(p.x, 14.5);
      p.y = std::min(p.y, 14.5);
    }
    try {
      validate_polygon(roi, 30, 30);
    } catch (const ValidationError&) {
      continue;
    }
    const int dx = uniform_int(rng, 0, 5);
    const int dy = uniform_int(rng, 0, 5);
    PolygonRoi moved = roi;
    for (auto& p : moved.vertices) p = {p.x + dx, p.y + dy};
    const BinaryMask2D a = rasterize_polygon(roi, 30, 30);
    const BinaryMask2D b = rasterize_polygon(moved, 30, 30);
    for (int i = 0; i + dy < 30; ++i) {
      for (int j = 0; j + dx < 30; ++j) REQUIRE(a.at(i, j) == b.at(i + dy, j + dx));
    }
  }
}

TEST_CASE("rectangle pixel counts converge to the analytic area") {
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const double x0 = uniform_real(rng, -0.5, 30);
    const double y0 = uniform_real(rng, -0.5, 30);
    const double w = uniform_real(rng, 1, 30);
    const double h = uniform_real(rng, 1, 30);
    const BinaryMask2D m = rasterize_polygon(rectangle(x0, y0, x0 + w, y0 + h), 64, 64);
    const double perimeter = 2 * (w + h);
    CHECK(std::abs(static_cast<double>(m.popcount()) - w * h) <= perimeter / 2 + 1);
  }
}

TEST_CASE("mask_area") {
  const BinaryMask2D empty(5, 5);
  CHECK(mask_area(empty, {0.1, 0.1}).pixels == 0);
  CHECK(mask_area(empty, {0.1, 0.1}).area_mm2 == 0.0);

  const BinaryMask2D six = rasterize_polygon(rectangle(0.5, 0.5, 3.5, 2.5), 5, 5);
  const MaskArea a = mask_area(six, {0.1, 0.1});
  CHECK(a.pixels == 6);
  CHECK(a.area_mm2 == doctest::Approx(0.06).epsilon(1e-12));

  BinaryMask2D full(5, 5, std::vector<std::uint8_t>(25, 1));
  CHECK(mask_area(full, {1, 1}).pixels == 25);
  CHECK(mask_area(full, {1, 1}).area_mm2 == 25.0);
}
