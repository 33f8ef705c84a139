#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cdsd {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major array of doubles. Rank 0 is a scalar.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<double> values);
  static Tensor from_eigen(const Eigen::MatrixXd& m);
  static Tensor from_vector(const Eigen::VectorXd& v);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return shape_.size() == 2 ? shape_[1] : shape_.size() == 1 ? shape_[0] : 1; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  /// Value of a single-element tensor.
  double item() const;

  Eigen::MatrixXd to_eigen() const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace cdsd
