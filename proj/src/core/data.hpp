#ifndef CNML_CORE_DATA_HPP
#define CNML_CORE_DATA_HPP

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace cnml {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Labeled classification dataset. Inputs are row-per-example.
struct Dataset {
  Mat inputs;              // n x d
  Eigen::VectorXi labels;  // n, values in [0, num_classes)
  int num_classes = 0;

  Dataset() = default;
  Dataset(Mat in, Eigen::VectorXi lab, int k);

  Eigen::Index size() const { return inputs.rows(); }
  Eigen::Index dim() const { return inputs.cols(); }

  // Throws on label range violations, non-finite inputs, or empty shapes.
  void validate() const;

  // Contiguous row range [start, start+count).
  Dataset slice(Eigen::Index start, Eigen::Index count) const;

  // This dataset with (x, y) appended; used by per-label retraining.
  Dataset with_appended(const Vec& x, int label) const;
};

// One synthetic Gaussian blob per class, in spec-list order.
struct BlobSpec {
  Eigen::Vector2d mean;
  double std = 1.0;
  Eigen::Index count = 1;
  std::uint64_t seed = 0;
};

Dataset make_blobs(const std::vector<BlobSpec>& specs);

// Axis-aligned evaluation grid, `resolution` cells per axis. Points are
// cell centers, so resolution=1 evaluates the domain midpoint.
struct GridSpec {
  double x_min, x_max, y_min, y_max;
  int resolution;

  void validate() const;
  double x_at(int i) const { return x_min + (i + 0.5) * (x_max - x_min) / resolution; }
  double y_at(int j) const { return y_min + (j + 0.5) * (y_max - y_min) / resolution; }
};

// Evaluates `predict` at every cell center and returns resolution^2 rows of
// (x0, x1, probs...). Row-major: the x0 index varies slowest.
Mat heatmap(const std::function<Vec(const Vec&)>& predict, const GridSpec& grid,
            int num_classes);

// Rotates side x side images (flattened row-major into d = side^2 inputs)
// about the image center with bilinear interpolation; out-of-bounds reads
// are zero. With `random_angle_seed`, each image gets its own uniform angle
// in [0, 360) and `angle_degrees` is ignored. Labels pass through.
Dataset rotate_square_images(const Dataset& data, int side, double angle_degrees,
                             std::optional<std::uint64_t> random_angle_seed = {});

// Rotates 2-D inputs about the origin; the plane analogue of the image
// rotation, used to build out-of-distribution splits for 2-D tasks.
Dataset rotate_points(const Dataset& data, double angle_degrees,
                      std::optional<std::uint64_t> random_angle_seed = {});

// Delimited-text dataset format: header "x0,...,x{d-1},label", one row per
// example, 17 significant digits on save so a round trip is bit-exact.
Dataset load_dataset(const std::string& path, int num_classes);
void save_dataset(const Dataset& data, const std::string& path);

}  // namespace cnml

#endif
