#include "sharplab/tensor.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace sharplab {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw std::invalid_argument(std::string(what) + ": expected a matrix, got shape " +
                                shape_string(t.shape()));
  }
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
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

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw std::invalid_argument("Tensor: zero-sized dimension");
  }
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw std::invalid_argument("Tensor: zero-sized dimension");
  }
  if (shape_size(shape_) != data_.size()) {
    throw std::invalid_argument("Tensor: shape " + shape_string(shape_) +
                                " does not match data length " +
                                std::to_string(data_.size()));
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, std::vector<double>{value}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::initializer_list<double> values) {
  return Tensor(Shape{rows, cols}, std::vector<double>(values));
}

std::size_t Tensor::rows() const { return shape_.empty() ? 0 : shape_[0]; }

std::size_t Tensor::cols() const {
  if (shape_.empty()) return 0;
  std::size_t n = 1;
  for (std::size_t i = 1; i < shape_.size(); ++i) n *= shape_[i];
  return n;
}

double Tensor::item() const {
  if (data_.size() != 1) throw std::invalid_argument("Tensor::item: tensor is not a scalar");
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::require_finite(std::string_view what) const {
  if (!all_finite()) throw std::domain_error(std::string(what) + ": non-finite entry");
}

double Tensor::sum() const {
  double s = 0.0;
  for (double v : data_) s += v;
  return s;
}

double Tensor::frobenius_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw std::invalid_argument("Tensor::reshaped: incompatible shape " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (other.shape_ != shape_) throw std::invalid_argument("Tensor +=: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  if (other.shape_ != shape_) throw std::invalid_argument("Tensor -=: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

bool operator==(const Tensor& a, const Tensor& b) {
  if (a.shape_ != b.shape_) return false;
  return a.data_.empty() ||
         std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(double)) == 0;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }
Tensor operator*(double s, Tensor a) { return a *= s; }

Tensor hadamard(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("hadamard: shape mismatch");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

Tensor transpose(const Tensor& m) {
  require_matrix(m, "transpose");
  Tensor out(Shape{m.cols(), m.rows()});
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out.at(c, r) = m.at(r, c);
  return out;
}

void matmul_accumulate(const Tensor& a, const Tensor& b, bool transpose_a, bool transpose_b,
                       Tensor& out, double alpha) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = transpose_a ? a.cols() : a.rows();
  const std::size_t k = transpose_a ? a.rows() : a.cols();
  const std::size_t kb = transpose_b ? b.cols() : b.rows();
  const std::size_t n = transpose_b ? b.rows() : b.cols();
  if (k != kb) {
    throw std::invalid_argument("matmul: inner dimensions differ (" + shape_string(a.shape()) +
                                " vs " + shape_string(b.shape()) + ")");
  }
  if (out.shape() != Shape{m, n}) throw std::invalid_argument("matmul: output shape mismatch");
  MapC A(a.raw(), a.rows(), a.cols());
  MapC B(b.raw(), b.rows(), b.cols());
  MapM C(out.raw(), m, n);
  if (!transpose_a && !transpose_b) {
    C.noalias() += alpha * (A * B);
  } else if (transpose_a && !transpose_b) {
    C.noalias() += alpha * (A.transpose() * B);
  } else if (!transpose_a && transpose_b) {
    C.noalias() += alpha * (A * B.transpose());
  } else {
    C.noalias() += alpha * (A.transpose() * B.transpose());
  }
}

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a, bool transpose_b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = transpose_a ? a.cols() : a.rows();
  const std::size_t n = transpose_b ? b.rows() : b.cols();
  Tensor out(Shape{m, n});
  matmul_accumulate(a, b, transpose_a, transpose_b, out);
  return out;
}

Tensor identity(std::size_t n) {
  Tensor out(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) out.at(i, i) = 1.0;
  return out;
}

Tensor kron(const Tensor& a, const Tensor& b) {
  require_matrix(a, "kron");
  require_matrix(b, "kron");
  const std::size_t br = b.rows(), bc = b.cols();
  Tensor out(Shape{a.rows() * br, a.cols() * bc});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double s = a.at(i, j);
      if (s == 0.0) continue;
      for (std::size_t p = 0; p < br; ++p)
        for (std::size_t q = 0; q < bc; ++q) out.at(i * br + p, j * bc + q) = s * b.at(p, q);
    }
  return out;
}

Tensor diag(const Tensor& v) {
  Tensor out(Shape{v.size(), v.size()});
  for (std::size_t i = 0; i < v.size(); ++i) out.at(i, i) = v[i];
  return out;
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double relative_error(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw std::invalid_argument("relative_error: size mismatch");
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += (a[i] - b[i]) * (a[i] - b[i]);
  const double denom = std::max({a.frobenius_norm(), b.frobenius_norm(), 1e-12});
  return std::sqrt(diff) / denom;
}

void NamedTensors::insert(std::string name, Tensor value) {
  if (index_.contains(name)) throw std::invalid_argument("duplicate tensor name: " + name);
  index_.emplace(name, tensors_.size());
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
}

bool NamedTensors::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

Tensor& NamedTensors::at(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("unknown tensor: " + std::string(name));
  return tensors_[it->second];
}

const Tensor& NamedTensors::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("unknown tensor: " + std::string(name));
  return tensors_[it->second];
}

std::size_t NamedTensors::total_size() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

NamedTensors NamedTensors::zeros_like() const {
  NamedTensors out;
  for (std::size_t i = 0; i < size(); ++i) out.insert(names_[i], Tensor(tensors_[i].shape()));
  return out;
}

bool operator==(const NamedTensors& a, const NamedTensors& b) {
  return a.names_ == b.names_ && a.tensors_ == b.tensors_;
}

double global_norm(const NamedTensors& tensors) {
  double s = 0.0;
  for (std::size_t i = 0; i < tensors.size(); ++i)
    for (double v : tensors[i].data()) s += v * v;
  return std::sqrt(s);
}

}  // namespace sharplab
