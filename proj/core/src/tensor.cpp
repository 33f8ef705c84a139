#include "cdsd/tensor.hpp"

#include <functional>
#include <numeric>
#include <sstream>

namespace cdsd {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::from_eigen(const Eigen::MatrixXd& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) t.at(r, c) = m(r, c);
  return t;
}

Tensor Tensor::from_vector(const Eigen::VectorXd& v) {
  return Tensor({1, static_cast<std::size_t>(v.size())}, std::vector<double>(v.data(), v.data() + v.size()));
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_string(shape_));
  }
  return data_[0];
}

Eigen::MatrixXd Tensor::to_eigen() const {
  Eigen::MatrixXd m(rows(), cols());
  for (std::size_t r = 0; r < rows(); ++r)
    for (std::size_t c = 0; c < cols(); ++c) m(r, c) = data_[r * cols() + c];
  return m;
}

}  // namespace cdsd
