#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "daf/errors.hpp"

namespace daf::num {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using Matrix = MatrixX<double>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    os << (i ? "x" : "") << shape[i];
  }
  os << ']';
  return os.str();
}

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

/// Dense array of any rank backed by an Eigen matrix.
///
/// The leading dimension maps to matrix rows and the trailing dimensions are
/// flattened row-major into columns, so a `[C_out x C_in x s]` convolution
/// kernel is stored as a `C_out x (C_in*s)` matrix and a rank-1 array of
/// length n is an `n x 1` column. Row-major flattening of the whole array is
/// therefore the row-major flattening of the backing matrix.
template <typename Scalar>
class DenseArray {
 public:
  using Storage = MatrixX<Scalar>;

  DenseArray() = default;

  explicit DenseArray(Shape shape) : shape_(std::move(shape)) {
    validate_shape(shape_);
    storage_ = Storage::Zero(rows_for(shape_), cols_for(shape_));
  }

  DenseArray(Shape shape, Storage values) : shape_(std::move(shape)), storage_(std::move(values)) {
    validate_shape(shape_);
    if (storage_.rows() != rows_for(shape_) || storage_.cols() != cols_for(shape_)) {
      throw DimensionError("array storage " + std::to_string(storage_.rows()) + "x" +
                           std::to_string(storage_.cols()) + " does not hold shape " +
                           shape_string(shape_));
    }
  }

  static DenseArray from_matrix(Storage values) {
    Shape shape{values.rows(), values.cols()};
    return DenseArray(std::move(shape), std::move(values));
  }

  static DenseArray from_row_major(Shape shape, std::span<const Scalar> data) {
    DenseArray out(std::move(shape));
    if (static_cast<Index>(data.size()) != out.size()) {
      throw DimensionError("row-major buffer of " + std::to_string(data.size()) +
                           " values does not fill shape " + shape_string(out.shape_));
    }
    Index k = 0;
    for (Index r = 0; r < out.storage_.rows(); ++r) {
      for (Index c = 0; c < out.storage_.cols(); ++c) out.storage_(r, c) = data[k++];
    }
    return out;
  }

  const Shape& shape() const noexcept { return shape_; }
  Index size() const noexcept { return storage_.size(); }
  Index rank() const noexcept { return static_cast<Index>(shape_.size()); }

  Storage& matrix() noexcept { return storage_; }
  const Storage& matrix() const noexcept { return storage_; }

  std::vector<Scalar> to_row_major() const {
    std::vector<Scalar> out;
    out.reserve(static_cast<std::size_t>(storage_.size()));
    for (Index r = 0; r < storage_.rows(); ++r) {
      for (Index c = 0; c < storage_.cols(); ++c) out.push_back(storage_(r, c));
    }
    return out;
  }

  bool all_finite() const { return storage_.allFinite(); }

  void set_zero() { storage_.setZero(); }

  friend bool operator==(const DenseArray& a, const DenseArray& b) {
    return a.shape_ == b.shape_ && a.storage_ == b.storage_;
  }

 private:
  static void validate_shape(const Shape& shape) {
    if (shape.empty()) throw DimensionError("array shape must have at least one dimension");
    for (Index d : shape) {
      if (d <= 0) throw DimensionError("array dimensions must be positive, got " + shape_string(shape));
    }
  }
  static Index rows_for(const Shape& shape) { return shape.front(); }
  static Index cols_for(const Shape& shape) {
    return std::accumulate(shape.begin() + 1, shape.end(), Index{1}, std::multiplies<>());
  }

  Shape shape_{};
  Storage storage_{};
};

using NumArray = DenseArray<double>;

}  // namespace daf::num
