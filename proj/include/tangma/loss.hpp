#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tangma/autodiff.hpp"
#include "tangma/tensor.hpp"

namespace tangma {

class LabelError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

namespace detail {

inline void check_logits(const Shape& s, const char* op) {
  if (s.size() != 2 || s[1] < 2) throw ShapeError(std::string(op) + ": expected [B x C] logits with C >= 2, got " + to_string(s));
}

// log sum_j exp(z_j) for one row, shifted by the row maximum.
template <typename T>
T log_sum_exp(const T* row, std::size_t classes) {
  const T m = *std::max_element(row, row + classes);
  T acc{0};
  for (std::size_t j = 0; j < classes; ++j) acc += std::exp(row[j] - m);
  return m + std::log(acc);
}

}  // namespace detail

/// Row-wise softmax, computed with the max-shift.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  detail::check_logits(logits.shape(), "softmax");
  const std::size_t rows = logits.dim(0), classes = logits.dim(1);
  Tensor<T> out(logits.shape());
  auto o = out.mutable_data();
  const auto z = logits.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = z.data() + r * classes;
    const T m = *std::max_element(row, row + classes);
    T sum{0};
    for (std::size_t j = 0; j < classes; ++j) sum += o[r * classes + j] = std::exp(row[j] - m);
    for (std::size_t j = 0; j < classes; ++j) o[r * classes + j] /= sum;
  }
  return out;
}

/// Mean over the batch of -z_y + log sum_j exp(z_j).
/// Gradient: (softmax(z) - onehot(y)) / B.
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const int> labels) {
  detail::check_logits(logits.shape(), "cross_entropy");
  const std::size_t rows = logits.shape()[0], classes = logits.shape()[1];
  if (labels.size() != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(rows) + " logit rows but " + std::to_string(labels.size()) +
                     " labels");
  }
  if (rows == 0) throw ShapeError("cross_entropy: empty batch");
  const auto z = logits.value().data();
  std::vector<T> lse(rows);
  T total{0};
  for (std::size_t r = 0; r < rows; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw LabelError("cross_entropy: label " + std::to_string(y) + " at row " + std::to_string(r) +
                       " outside [0, " + std::to_string(classes) + ")");
    }
    lse[r] = detail::log_sum_exp(z.data() + r * classes, classes);
    total += lse[r] - z[r * classes + static_cast<std::size_t>(y)];
  }
  std::vector<int> y(labels.begin(), labels.end());
  return make_result<T>("cross_entropy", Tensor<T>::scalar(total / static_cast<T>(rows)), {logits},
                        [rows, classes, lse = std::move(lse), y = std::move(y)](Node<T>& self) {
                          auto& Z = *self.inputs[0];
                          const auto z = Z.value.data();
                          auto g = Z.grad_buffer();
                          const T s = self.grad[0] / static_cast<T>(rows);
                          for (std::size_t r = 0; r < rows; ++r) {
                            for (std::size_t j = 0; j < classes; ++j) {
                              const T p = std::exp(z[r * classes + j] - lse[r]);
                              g[r * classes + j] += s * (p - (static_cast<int>(j) == y[r] ? T{1} : T{0}));
                            }
                          }
                        });
}

template <typename T>
Var<T> cross_entropy(const Var<T>& logits, const std::vector<int>& labels) {
  return cross_entropy(logits, std::span<const int>(labels));
}

/// Per-row argmax; ties go to the lowest index.
template <typename T>
std::vector<int> predict(const Tensor<T>& logits) {
  detail::check_logits(logits.shape(), "predict");
  const std::size_t rows = logits.dim(0), classes = logits.dim(1);
  const auto z = logits.data();
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = z.data() + r * classes;
    out[r] = static_cast<int>(std::max_element(row, row + classes) - row);
  }
  return out;
}

/// Fraction of matching labels, in [0, 1].
inline double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) {
    throw ShapeError("accuracy: " + std::to_string(predicted.size()) + " predictions vs " +
                     std::to_string(truth.size()) + " labels");
  }
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

}  // namespace tangma
