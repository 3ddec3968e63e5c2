#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace mapattack {

/// Dense n-dimensional array of doubles, row-major.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in);

  static Tensor zeros(std::vector<std::size_t> shape_in);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  /// Extent along dimension `d` (0 for out-of-rank queries on empty tensors).
  std::size_t extent(std::size_t d) const { return d < shape.size() ? shape[d] : 0; }

  // 2-d accessors; only valid when rank() == 2.
  double& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  bool operator==(const Tensor& other) const = default;
};

// Elementwise arithmetic. Shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
double dot(const Tensor& a, const Tensor& b);

double l2_norm(const Tensor& t);
double linf_norm(const Tensor& t);

/// Adds a 1-d vector to every row of a 2-d tensor.
Tensor add_rowwise(const Tensor& matrix, const Tensor& row);

/// Componentwise clamp into [0, 1].
Tensor clip01(Tensor t);

/// True when every entry is finite.
bool all_finite(const Tensor& t);

/// Throws DomainError naming `context` when a non-finite entry is present.
void ensure_finite(const Tensor& t, const std::string& context);

}  // namespace mapattack
