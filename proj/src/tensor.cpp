#include "mapattack/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "mapattack/errors.hpp"

namespace mapattack {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in)
    : shape(std::move(shape_in)), data(std::move(data_in)) {
  if (shape_product(shape) != data.size()) {
    throw ShapeError("tensor: data length does not match shape product");
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape_in) {
  const std::size_t n = shape_product(shape_in);
  return Tensor(std::move(shape_in), std::vector<double>(n, 0.0));
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = a;
  for (double& x : out.data) x *= s;
  return out;
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) acc += a.data[i] * b.data[i];
  return acc;
}

double l2_norm(const Tensor& t) {
  double acc = 0.0;
  for (double x : t.data) acc += x * x;
  return std::sqrt(acc);
}

double linf_norm(const Tensor& t) {
  double m = 0.0;
  for (double x : t.data) m = std::max(m, std::abs(x));
  return m;
}

Tensor add_rowwise(const Tensor& matrix, const Tensor& row) {
  if (matrix.rank() != 2 || row.rank() != 1 || matrix.extent(1) != row.extent(0)) {
    throw ShapeError("add_rowwise: expected [n, d] matrix and [d] row");
  }
  Tensor out = matrix;
  const std::size_t rows = out.extent(0);
  const std::size_t cols = out.extent(1);
  for (std::size_t r = 0; r < rows; ++r) {
    double* dst = out.data.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) dst[c] += row.data[c];
  }
  return out;
}

Tensor clip01(Tensor t) {
  for (double& x : t.data) x = std::clamp(x, 0.0, 1.0);
  return t;
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.data.begin(), t.data.end(),
                     [](double x) { return std::isfinite(x); });
}

void ensure_finite(const Tensor& t, const std::string& context) {
  if (!all_finite(t)) {
    throw DomainError(context + ": tensor contains NaN or Inf");
  }
}

}  // namespace mapattack
