#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dbtmask/geometry.hpp"
#include "dbtmask/volume.hpp"

namespace dbtmask {

enum class DenseShape { CYLINDER, ELLIPSOID };

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

// Synthetic DBT-like volume: a bright dense body in a uniform fat
// background. Coordinates follow pixel centers (x = column, y = row,
// z = slice). A CYLINDER is elliptic in-plane and spans |z - center.z| <= rz.
struct PhantomSpec {
  int rows = 128;
  int cols = 96;
  int n_slices = 40;
  DenseShape dense_shape = DenseShape::CYLINDER;
  Vec3 dense_center{47.5, 63.5, 19.5};
  Vec3 dense_radii{20.0, 30.0, 20.0};
  double fat_intensity = 0.25;
  double dense_intensity = 0.75;
  // Standard deviation of additive noise, in units of the full [0, 1] range.
  double noise_sigma = 0.0;
  // Slices at each end that get blurred; the outermost slice gets
  // edge_blur_sigma_px and the sigma falls off linearly inward.
  int edge_blur_slices = 0;
  double edge_blur_sigma_px = 3.0;
  std::uint64_t seed = 1;
  std::string patient_id = "PHANTOM";
  View view = View::RCC;
  PixelSpacing spacing{0.1, 0.1};
};

// Throws ValidationError describing the first violated rule.
void validate_phantom_spec(const PhantomSpec& spec);

struct Phantom {
  DbtVolume volume;
  // Noise-free shape membership of voxel centers, one mask per slice.
  std::vector<BinaryMask2D> truth;
};

// Deterministic in spec (including seed).
Phantom generate_phantom(const PhantomSpec& spec);

// Sigma of the Gaussian applied to slice s (0 when s is not blurred).
double edge_blur_sigma(const PhantomSpec& spec, int s);

// JSON form used by the CLI; missing keys keep their defaults.
PhantomSpec phantom_spec_from_json(const std::string& text);
std::string phantom_spec_to_json(const PhantomSpec& spec);

}  // namespace dbtmask
