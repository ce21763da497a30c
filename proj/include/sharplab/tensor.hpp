#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sharplab {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. Every tensor in the library is one of these.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<double> values);
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  /// Leading dimension; for matrices the row count.
  std::size_t rows() const;
  /// Product of all trailing dimensions; for matrices the column count.
  std::size_t cols() const;

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  double* raw() noexcept { return data_.data(); }
  const double* raw() const noexcept { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  double item() const;
  bool all_finite() const;
  double sum() const;
  double frobenius_norm() const;

  /// Throws std::domain_error if any entry is NaN or infinite.
  void require_finite(std::string_view what) const;

  Tensor reshaped(Shape shape) const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double s);

  /// Bitwise equality of shape and contents.
  friend bool operator==(const Tensor& a, const Tensor& b);

 private:
  Shape shape_;
  std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);
Tensor operator*(double s, Tensor a);

Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& m);
/// C = op(A) op(B) for 2-D operands.
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a = false,
              bool transpose_b = false);
/// Accumulates op(A) op(B) into `out` (shape must already match).
void matmul_accumulate(const Tensor& a, const Tensor& b, bool transpose_a,
                       bool transpose_b, Tensor& out, double alpha = 1.0);
Tensor identity(std::size_t n);
Tensor kron(const Tensor& a, const Tensor& b);
/// Square matrix with `v` on the diagonal.
Tensor diag(const Tensor& v);
double dot(const Tensor& a, const Tensor& b);

/// ||a-b||_F / max(||a||_F, ||b||_F, 1e-12).
double relative_error(const Tensor& a, const Tensor& b);

/// Ordered name -> tensor mapping; iteration follows insertion order.
class NamedTensors {
 public:
  void insert(std::string name, Tensor value);
  bool contains(std::string_view name) const;
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;

  std::size_t size() const noexcept { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Tensor& operator[](std::size_t i) { return tensors_[i]; }
  const Tensor& operator[](std::size_t i) const { return tensors_[i]; }
  const std::vector<std::string>& names() const noexcept { return names_; }

  std::size_t total_size() const;
  NamedTensors zeros_like() const;

  friend bool operator==(const NamedTensors& a, const NamedTensors& b);

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Gradient of a scalar with respect to every registered parameter.
using GradMap = NamedTensors;

double global_norm(const NamedTensors& tensors);

}  // namespace sharplab
