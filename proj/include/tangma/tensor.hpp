#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tangma {

/// Raised when tensor shapes do not line up for an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an input lies outside an operation's mathematical domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised when a caller breaks an operation's precondition (non-scalar
/// backward root, optimizer step without gradients, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense row-major array with shape metadata.
///
/// Storage is shared between a tensor and the views produced by reshape(),
/// so reshaping never copies. Values are treated as immutable once an
/// operation has produced them; the only writers are constructors and the
/// optimizer updating leaf parameters through mutable_data().
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : data_(std::make_shared<std::vector<T>>()) {}

  explicit Tensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(std::make_shared<std::vector<T>>(tangma::numel(shape_), fill)) {}

  Tensor(Shape shape, std::vector<T> values)
      : shape_(std::move(shape)), data_(std::make_shared<std::vector<T>>(std::move(values))) {
    if (tangma::numel(shape_) != data_->size()) {
      throw ShapeError("tensor of shape " + to_string(shape_) + " needs " +
                       std::to_string(tangma::numel(shape_)) + " values, got " +
                       std::to_string(data_->size()));
    }
  }

  static Tensor scalar(T value) { return Tensor({1}, std::vector<T>{value}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t numel() const noexcept { return data_->size(); }
  bool empty() const noexcept { return data_->empty(); }

  std::span<const T> data() const noexcept { return {data_->data(), data_->size()}; }
  std::span<T> mutable_data() noexcept { return {data_->data(), data_->size()}; }

  const T& operator[](std::size_t i) const { return (*data_)[i]; }
  T item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape_));
    return (*data_)[0];
  }

  /// View with a new shape over the same storage.
  Tensor reshape(Shape shape) const {
    if (tangma::numel(shape) != numel()) {
      throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    Tensor view;
    view.shape_ = std::move(shape);
    view.data_ = data_;
    return view;
  }

  /// Deep copy with independent storage.
  Tensor clone() const { return Tensor(shape_, std::vector<T>(*data_)); }

  /// Element-type conversion (float training tensors <-> double check tensors).
  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_->begin(), data_->end());
    return Tensor<U>(shape_, std::move(out));
  }

  bool shares_storage_with(const Tensor& other) const noexcept { return data_ == other.data_; }

 private:
  Shape shape_;
  std::shared_ptr<std::vector<T>> data_;
};

template <typename T>
bool operator==(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() && std::ranges::equal(a.data(), b.data());
}

}  // namespace tangma
