#pragma once

#include <string>
#include <vector>

#include "core/error.hpp"

namespace cisskip {

// Dense row-major matrix of 64-bit floats. Everything here is sized for the
// mask generator (a few hundred per side at most); shape mismatches throw
// ShapeError naming both operands.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols);
  Matrix(int rows, int cols, std::vector<double> data);

  static Matrix identity(int n);
  static Matrix full(int rows, int cols, double value);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double operator()(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }
  double& operator()(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }

  const std::vector<double>& values() const { return data_; }
  std::vector<double>& values() { return data_; }
  const double* data() const { return data_.data(); }
  double* data() { return data_.data(); }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_str() const;

  bool all_finite() const;
  // Throws NumericError naming `what` if any entry is NaN/Inf.
  void require_finite(const std::string& what) const;

  bool operator==(const Matrix& other) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// ---- elementary ops (all pure) ----

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& m, double k);

// m[i][j] + bias(0, j); bias must be 1 x m.cols.
Matrix add_row_broadcast(const Matrix& m, const Matrix& bias);
// Column sums as a 1 x cols matrix.
Matrix col_sums(const Matrix& m);

// Half-open slices and block assignment.
Matrix slice_cols(const Matrix& m, int c0, int c1);
Matrix slice_rows(const Matrix& m, int r0, int r1);
void assign_cols(Matrix& dst, int c0, const Matrix& src);

// ---- activations ----

// Numerically stabilized per-row softmax (max subtraction).
Matrix softmax_rows(const Matrix& m);
// dX given softmax output y and upstream dY.
Matrix softmax_rows_backward(const Matrix& y, const Matrix& dy);

Matrix sigmoid(const Matrix& m);
// Exact (erf-based) GELU: x * Phi(x).
Matrix gelu(const Matrix& m);
// GELU derivative evaluated at the pre-activation x.
Matrix gelu_grad(const Matrix& x);

double gelu_scalar(double x);
double gelu_grad_scalar(double x);
double sigmoid_scalar(double x);

// ---- layer norm ----

struct LayerNormCache {
  Matrix normalized;            // (x - mu) / sqrt(var + eps), per row
  std::vector<double> inv_std;  // 1 / sqrt(var + eps), per row
};

// Per-row normalization followed by the affine gamma/beta (both 1 x cols).
// Variance is the biased (1/n) estimate.
Matrix layer_norm(const Matrix& m, const Matrix& gamma, const Matrix& beta, double eps,
                  LayerNormCache* cache = nullptr);

struct LayerNormGrads {
  Matrix dx;
  Matrix dgamma;  // 1 x cols
  Matrix dbeta;   // 1 x cols
};

LayerNormGrads layer_norm_backward(const LayerNormCache& cache, const Matrix& gamma,
                                   const Matrix& dy);

}  // namespace cisskip
