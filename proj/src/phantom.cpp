#include "dbtmask/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <json.hpp>

#include "dbtmask/errors.hpp"

namespace dbtmask {

namespace {

bool inside_shape(const PhantomSpec& spec, double x, double y, double z) {
  const double dx = (x - spec.dense_center.x) / spec.dense_radii.x;
  const double dy = (y - spec.dense_center.y) / spec.dense_radii.y;
  const double dz = (z - spec.dense_center.z) / spec.dense_radii.z;
  if (spec.dense_shape == DenseShape::CYLINDER) {
    return dx * dx + dy * dy <= 1.0 && std::abs(dz) <= 1.0;
  }
  return dx * dx + dy * dy + dz * dz <= 1.0;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable blur with edge replication.
void blur_slice(std::vector<double>& img, int rows, int cols, double sigma) {
  const std::vector<double> k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  std::vector<double> tmp(img.size());
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      double acc = 0.0;
      for (int d = -radius; d <= radius; ++d) {
        const int jj = std::clamp(j + d, 0, cols - 1);
        acc += k[d + radius] * img[static_cast<std::size_t>(i) * cols + jj];
      }
      tmp[static_cast<std::size_t>(i) * cols + j] = acc;
    }
  }
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      double acc = 0.0;
      for (int d = -radius; d <= radius; ++d) {
        const int ii = std::clamp(i + d, 0, rows - 1);
        acc += k[d + radius] * tmp[static_cast<std::size_t>(ii) * cols + j];
      }
      img[static_cast<std::size_t>(i) * cols + j] = acc;
    }
  }
}

}  // namespace

void validate_phantom_spec(const PhantomSpec& spec) {
  if (spec.rows < 1 || spec.cols < 1 || spec.n_slices < 1) {
    throw ValidationError("phantom dimensions must be positive");
  }
  const Vec3& r = spec.dense_radii;
  const Vec3& c = spec.dense_center;
  if (!(r.x > 0 && r.y > 0 && r.z > 0)) throw ValidationError("dense_radii must be positive");
  if (c.x - r.x < -0.5 || c.x + r.x > spec.cols - 0.5) {
    throw ValidationError("dense shape exceeds the grid along x (columns)");
  }
  if (c.y - r.y < -0.5 || c.y + r.y > spec.rows - 0.5) {
    throw ValidationError("dense shape exceeds the grid along y (rows)");
  }
  if (c.z - r.z < -0.5 || c.z + r.z > spec.n_slices - 0.5) {
    throw ValidationError("dense shape exceeds the grid along z (slices)");
  }
  if (!(spec.fat_intensity >= 0.0 && spec.fat_intensity < 1.0)) {
    throw ValidationError("fat_intensity must be in [0, 1)");
  }
  if (!(spec.dense_intensity > spec.fat_intensity && spec.dense_intensity <= 1.0)) {
    throw ValidationError("dense_intensity must be in (fat_intensity, 1]");
  }
  if (!(spec.noise_sigma >= 0.0) || !std::isfinite(spec.noise_sigma)) {
    throw ValidationError("noise_sigma must be >= 0");
  }
  if (spec.edge_blur_slices < 0 || 2 * spec.edge_blur_slices > spec.n_slices) {
    throw ValidationError("edge_blur_slices must be in [0, n_slices / 2]");
  }
  if (spec.edge_blur_slices > 0 && !(spec.edge_blur_sigma_px > 0.0)) {
    throw ValidationError("edge_blur_sigma_px must be positive");
  }
  if (!(spec.spacing.row_mm > 0.0 && spec.spacing.col_mm > 0.0)) {
    throw ValidationError("pixel spacing must be positive");
  }
}

double edge_blur_sigma(const PhantomSpec& spec, int s) {
  const int e = spec.edge_blur_slices;
  if (e == 0) return 0.0;
  const int depth = std::min(s, spec.n_slices - 1 - s);  // 0 at the outermost slice
  if (depth >= e) return 0.0;
  return spec.edge_blur_sigma_px * static_cast<double>(e - depth) / static_cast<double>(e);
}

Phantom generate_phantom(const PhantomSpec& spec) {
  validate_phantom_spec(spec);
  const int rows = spec.rows;
  const int cols = spec.cols;
  const std::size_t plane = static_cast<std::size_t>(rows) * cols;

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<std::uint16_t> voxels(plane * spec.n_slices);
  std::vector<BinaryMask2D> truth;
  truth.reserve(spec.n_slices);
  std::vector<double> img(plane);
  for (int s = 0; s < spec.n_slices; ++s) {
    BinaryMask2D gt(rows, cols);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) {
        const bool dense = inside_shape(spec, j, i, s);
        gt.set(i, j, dense);
        img[static_cast<std::size_t>(i) * cols + j] = dense ? spec.dense_intensity : spec.fat_intensity;
      }
    }
    if (spec.noise_sigma > 0.0) {
      for (double& v : img) v += spec.noise_sigma * noise(rng);
    }
    if (const double sigma = edge_blur_sigma(spec, s); sigma > 0.0) blur_slice(img, rows, cols, sigma);
    for (std::size_t k = 0; k < plane; ++k) {
      voxels[s * plane + k] = static_cast<std::uint16_t>(std::lround(std::clamp(img[k], 0.0, 1.0) * 65535.0));
    }
    truth.push_back(std::move(gt));
  }
  return {DbtVolume(spec.patient_id, spec.view, rows, cols, spec.n_slices, spec.spacing, std::move(voxels)),
          std::move(truth)};
}

PhantomSpec phantom_spec_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("phantom spec is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("phantom spec must be a JSON object");
  PhantomSpec spec;
  try {
    spec.rows = j.value("rows", spec.rows);
    spec.cols = j.value("cols", spec.cols);
    spec.n_slices = j.value("n_slices", spec.n_slices);
    if (j.contains("dense_shape")) {
      const auto shape = j.at("dense_shape").get<std::string>();
      if (shape == "CYLINDER") {
        spec.dense_shape = DenseShape::CYLINDER;
      } else if (shape == "ELLIPSOID") {
        spec.dense_shape = DenseShape::ELLIPSOID;
      } else {
        throw ValidationError("dense_shape must be CYLINDER or ELLIPSOID");
      }
    }
    const auto read_vec = [&](const char* key, Vec3& v) {
      if (!j.contains(key)) return;
      const auto& a = j.at(key);
      if (!a.is_array() || a.size() != 3) throw ValidationError(std::string(key) + " must be [x, y, z]");
      v = {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
    };
    read_vec("dense_center", spec.dense_center);
    read_vec("dense_radii", spec.dense_radii);
    spec.fat_intensity = j.value("fat_intensity", spec.fat_intensity);
    spec.dense_intensity = j.value("dense_intensity", spec.dense_intensity);
    spec.noise_sigma = j.value("noise_sigma", spec.noise_sigma);
    spec.edge_blur_slices = j.value("edge_blur_slices", spec.edge_blur_slices);
    spec.edge_blur_sigma_px = j.value("edge_blur_sigma_px", spec.edge_blur_sigma_px);
    spec.seed = j.value("seed", spec.seed);
    spec.patient_id = j.value("patient_id", spec.patient_id);
    if (j.contains("view")) spec.view = parse_view(j.at("view").get<std::string>());
    if (j.contains("pixel_spacing_mm")) {
      const auto& a = j.at("pixel_spacing_mm");
      if (!a.is_array() || a.size() != 2) throw ValidationError("pixel_spacing_mm must be [row_mm, col_mm]");
      spec.spacing = {a[0].get<double>(), a[1].get<double>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("phantom spec has a field of the wrong type: ") + e.what());
  }
  validate_phantom_spec(spec);
  return spec;
}

std::string phantom_spec_to_json(const PhantomSpec& spec) {
  nlohmann::ordered_json j;
  j["rows"] = spec.rows;
  j["cols"] = spec.cols;
  j["n_slices"] = spec.n_slices;
  j["dense_shape"] = spec.dense_shape == DenseShape::CYLINDER ? "CYLINDER" : "ELLIPSOID";
  j["dense_center"] = {spec.dense_center.x, spec.dense_center.y, spec.dense_center.z};
  j["dense_radii"] = {spec.dense_radii.x, spec.dense_radii.y, spec.dense_radii.z};
  j["fat_intensity"] = spec.fat_intensity;
  j["dense_intensity"] = spec.dense_intensity;
  j["noise_sigma"] = spec.noise_sigma;
  j["edge_blur_slices"] = spec.edge_blur_slices;
  j["edge_blur_sigma_px"] = spec.edge_blur_sigma_px;
  j["seed"] = spec.seed;
  j["patient_id"] = spec.patient_id;
  j["view"] = std::string(to_string(spec.view));
  j["pixel_spacing_mm"] = {spec.spacing.row_mm, spec.spacing.col_mm};
  return j.dump(2) + "\n";
}

}  // namespace dbtmask
