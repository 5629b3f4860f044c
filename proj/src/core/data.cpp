#include "data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "errors.hpp"
#include "rng.hpp"

namespace cnml {

Dataset::Dataset(Mat in, Eigen::VectorXi lab, int k)
    : inputs(std::move(in)), labels(std::move(lab)), num_classes(k) {
  validate();
}

void Dataset::validate() const {
  require(num_classes >= 2, "dataset needs at least 2 classes");
  require(inputs.rows() >= 1 && inputs.cols() >= 1,
          "dataset needs n >= 1 and d >= 1");
  require(labels.size() == inputs.rows(),
          "label count does not match input rows");
  if (!inputs.allFinite())
    throw Error(ErrorKind::ContractViolation, "dataset inputs contain non-finite values");
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && labels[i] < num_classes,
            "label out of range at row " + std::to_string(i));
  }
}

Dataset Dataset::slice(Eigen::Index start, Eigen::Index count) const {
  require(start >= 0 && count >= 1 && start + count <= size(),
          "dataset slice out of range");
  return Dataset(inputs.middleRows(start, count), labels.segment(start, count),
                 num_classes);
}

Dataset Dataset::with_appended(const Vec& x, int label) const {
  require(x.size() == dim(), "appended point dimension mismatch");
  require(label >= 0 && label < num_classes, "appended label out of range");
  Mat in(size() + 1, dim());
  in.topRows(size()) = inputs;
  in.row(size()) = x.transpose();
  Eigen::VectorXi lab(size() + 1);
  lab.head(size()) = labels;
  lab[size()] = label;
  return Dataset(std::move(in), std::move(lab), num_classes);
}

Dataset make_blobs(const std::vector<BlobSpec>& specs) {
  require(specs.size() >= 2, "make_blobs needs at least 2 classes");
  Eigen::Index total = 0;
  for (const auto& s : specs) {
    require(s.std > 0.0, "blob std must be positive");
    require(s.count >= 1, "blob count must be at least 1");
    total += s.count;
  }
  Mat inputs(total, 2);
  Eigen::VectorXi labels(total);
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < specs.size(); ++c) {
    RandomStream rng(specs[c].seed);
    for (Eigen::Index i = 0; i < specs[c].count; ++i, ++row) {
      inputs(row, 0) = specs[c].mean[0] + specs[c].std * rng.normal();
      inputs(row, 1) = specs[c].mean[1] + specs[c].std * rng.normal();
      labels[row] = static_cast<int>(c);
    }
  }
  return Dataset(std::move(inputs), std::move(labels),
                 static_cast<int>(specs.size()));
}

void GridSpec::validate() const {
  require(x_min < x_max && y_min < y_max, "grid bounds must be ordered");
  require(resolution >= 1, "grid resolution must be positive");
}

Mat heatmap(const std::function<Vec(const Vec&)>& predict, const GridSpec& grid,
            int num_classes) {
  grid.validate();
  require(num_classes >= 2, "heatmap needs k >= 2");
  const int res = grid.resolution;
  Mat table(static_cast<Eigen::Index>(res) * res, 2 + num_classes);
  Vec x(2);
  Eigen::Index row = 0;
  for (int i = 0; i < res; ++i) {
    for (int j = 0; j < res; ++j, ++row) {
      x[0] = grid.x_at(i);
      x[1] = grid.y_at(j);
      Vec probs = predict(x);
      require(probs.size() == num_classes, "heatmap closure returned wrong arity");
      table(row, 0) = x[0];
      table(row, 1) = x[1];
      table.row(row).tail(num_classes) = probs.transpose();
    }
  }
  return table;
}

namespace {

// Bilinear sample of a row-major side x side image, zero outside the grid.
double sample_bilinear(const double* img, int side, double r, double c) {
  const int r0 = static_cast<int>(std::floor(r));
  const int c0 = static_cast<int>(std::floor(c));
  const double fr = r - r0;
  const double fc = c - c0;
  auto at = [&](int rr, int cc) -> double {
    if (rr < 0 || rr >= side || cc < 0 || cc >= side) return 0.0;
    return img[rr * side + cc];
  };
  return (1 - fr) * (1 - fc) * at(r0, c0) + (1 - fr) * fc * at(r0, c0 + 1) +
         fr * (1 - fc) * at(r0 + 1, c0) + fr * fc * at(r0 + 1, c0 + 1);
}

constexpr double kDegToRad = 0.017453292519943295769236907684886;

}  // namespace

Dataset rotate_square_images(const Dataset& data, int side, double angle_degrees,
                             std::optional<std::uint64_t> random_angle_seed) {
  require(side >= 1 && static_cast<Eigen::Index>(side) * side == data.dim(),
          "input dimension is not side*side");
  std::optional<RandomStream> rng;
  if (random_angle_seed) rng.emplace(*random_angle_seed);

  const double center = (side - 1) / 2.0;
  Mat out(data.size(), data.dim());
  std::vector<double> img(static_cast<std::size_t>(data.dim()));
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    double angle = rng ? rng->uniform(0.0, 360.0) : angle_degrees;
    const double a = angle * kDegToRad;
    const double ca = std::cos(a);
    const double sa = std::sin(a);
    for (Eigen::Index m = 0; m < data.dim(); ++m) img[m] = data.inputs(i, m);
    // Inverse map: each output pixel reads from the source rotated by -angle.
    for (int r = 0; r < side; ++r) {
      for (int c = 0; c < side; ++c) {
        const double dy = r - center;
        const double dx = c - center;
        const double sr = center + (sa * dx + ca * dy);
        const double sc = center + (ca * dx - sa * dy);
        out(i, r * side + c) = sample_bilinear(img.data(), side, sr, sc);
      }
    }
  }
  return Dataset(std::move(out), data.labels, data.num_classes);
}

Dataset rotate_points(const Dataset& data, double angle_degrees,
                      std::optional<std::uint64_t> random_angle_seed) {
  require(data.dim() == 2, "rotate_points requires 2-D inputs");
  std::optional<RandomStream> rng;
  if (random_angle_seed) rng.emplace(*random_angle_seed);
  Mat out(data.size(), 2);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    double angle = rng ? rng->uniform(0.0, 360.0) : angle_degrees;
    const double a = angle * kDegToRad;
    const double ca = std::cos(a);
    const double sa = std::sin(a);
    out(i, 0) = ca * data.inputs(i, 0) - sa * data.inputs(i, 1);
    out(i, 1) = sa * data.inputs(i, 0) + ca * data.inputs(i, 1);
  }
  return Dataset(std::move(out), data.labels, data.num_classes);
}

Dataset load_dataset(const std::string& path, int num_classes) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open dataset file: " + path);

  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorKind::ParseError, path + ": missing header row");
  // Header "x0,...,x{d-1},label" fixes d.
  Eigen::Index d = 0;
  {
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() < 2 || fields.back() != "label")
      throw Error(ErrorKind::ParseError, path + ": header must end with 'label'");
    d = static_cast<Eigen::Index>(fields.size()) - 1;
  }

  std::vector<double> values;
  std::vector<int> labels;
  Eigen::Index n = 0;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    Eigen::Index col = 0;
    while (std::getline(ss, field, ',')) {
      const char* s = field.c_str();
      char* end = nullptr;
      double v = std::strtod(s, &end);
      if (end == s || *end != '\0')
        throw Error(ErrorKind::ParseError,
                    path + ": malformed value at line " + std::to_string(lineno));
      if (col < d) {
        values.push_back(v);
      } else {
        labels.push_back(static_cast<int>(v));
      }
      ++col;
    }
    if (col != d + 1)
      throw Error(ErrorKind::ParseError,
                  path + ": expected " + std::to_string(d + 1) +
                      " fields at line " + std::to_string(lineno));
    ++n;
  }
  if (n == 0) throw Error(ErrorKind::ParseError, path + ": no data rows");

  Mat inputs(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) inputs(i, j) = values[i * d + j];
  Eigen::VectorXi lab(n);
  for (Eigen::Index i = 0; i < n; ++i) lab[i] = labels[i];
  return Dataset(std::move(inputs), std::move(lab), num_classes);
}

void save_dataset(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write dataset file: " + path);
  for (Eigen::Index j = 0; j < data.dim(); ++j) out << "x" << j << ",";
  out << "label\n";
  char buf[40];
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = 0; j < data.dim(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", data.inputs(i, j));
      out << buf << ",";
    }
    out << data.labels[i] << "\n";
  }
}

}  // namespace cnml
