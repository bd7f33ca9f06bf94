#include "core/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cisskip {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shapes differ, " + a.shape_str() + " vs " +
                     b.shape_str());
  }
}

}  // namespace

Matrix::Matrix(int rows, int cols) : rows_(rows), cols_(cols) {
  if (rows < 0 || cols < 0) throw ShapeError("matrix: negative dimensions");
  data_.assign(static_cast<size_t>(rows) * cols, 0.0);
}

Matrix::Matrix(int rows, int cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows < 0 || cols < 0) throw ShapeError("matrix: negative dimensions");
  if (data_.size() != static_cast<size_t>(rows) * cols) {
    throw ShapeError("matrix: data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str());
  }
}

Matrix Matrix::identity(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::full(int rows, int cols, double value) {
  Matrix m(rows, cols);
  for (double& v : m.data_) v = value;
  return m;
}

std::string Matrix::shape_str() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

bool Matrix::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Matrix::require_finite(const std::string& what) const {
  if (!all_finite()) throw NumericError("non-finite value in " + what);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + a.shape_str() + " vs " +
                     b.shape_str());
  }
  Matrix out(a.rows(), b.cols());
  const int n = a.rows(), k = a.cols(), m = b.cols();
  for (int i = 0; i < n; ++i) {
    const double* arow = a.data() + static_cast<size_t>(i) * k;
    double* orow = out.data() + static_cast<size_t>(i) * m;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b.data() + static_cast<size_t>(p) * m;
      for (int j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  for (size_t i = 0; i < out.size(); ++i) out.values()[i] += b.values()[i];
  return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "sub");
  Matrix out = a;
  for (size_t i = 0; i < out.size(); ++i) out.values()[i] -= b.values()[i];
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  for (size_t i = 0; i < out.size(); ++i) out.values()[i] *= b.values()[i];
  return out;
}

Matrix scale(const Matrix& m, double k) {
  Matrix out = m;
  for (double& v : out.values()) v *= k;
  return out;
}

Matrix add_row_broadcast(const Matrix& m, const Matrix& bias) {
  if (bias.rows() != 1 || bias.cols() != m.cols()) {
    throw ShapeError("add_row_broadcast: bias " + bias.shape_str() + " does not match " +
                     m.shape_str());
  }
  Matrix out = m;
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) out(i, j) += bias(0, j);
  return out;
}

Matrix col_sums(const Matrix& m) {
  Matrix out(1, m.cols());
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) out(0, j) += m(i, j);
  return out;
}

Matrix slice_cols(const Matrix& m, int c0, int c1) {
  if (c0 < 0 || c1 > m.cols() || c0 > c1) {
    throw ShapeError("slice_cols: [" + std::to_string(c0) + "," + std::to_string(c1) +
                     ") out of range for " + m.shape_str());
  }
  Matrix out(m.rows(), c1 - c0);
  for (int i = 0; i < m.rows(); ++i)
    for (int j = c0; j < c1; ++j) out(i, j - c0) = m(i, j);
  return out;
}

Matrix slice_rows(const Matrix& m, int r0, int r1) {
  if (r0 < 0 || r1 > m.rows() || r0 > r1) {
    throw ShapeError("slice_rows: [" + std::to_string(r0) + "," + std::to_string(r1) +
                     ") out of range for " + m.shape_str());
  }
  Matrix out(r1 - r0, m.cols());
  for (int i = r0; i < r1; ++i)
    for (int j = 0; j < m.cols(); ++j) out(i - r0, j) = m(i, j);
  return out;
}

void assign_cols(Matrix& dst, int c0, const Matrix& src) {
  if (src.rows() != dst.rows() || c0 < 0 || c0 + src.cols() > dst.cols()) {
    throw ShapeError("assign_cols: block " + src.shape_str() + " at column " +
                     std::to_string(c0) + " does not fit " + dst.shape_str());
  }
  for (int i = 0; i < src.rows(); ++i)
    for (int j = 0; j < src.cols(); ++j) dst(i, c0 + j) = src(i, j);
}

Matrix softmax_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (int i = 0; i < m.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < m.cols(); ++j) mx = std::max(mx, m(i, j));
    double sum = 0.0;
    for (int j = 0; j < m.cols(); ++j) {
      double e = std::exp(m(i, j) - mx);
      out(i, j) = e;
      sum += e;
    }
    for (int j = 0; j < m.cols(); ++j) out(i, j) /= sum;
  }
  return out;
}

Matrix softmax_rows_backward(const Matrix& y, const Matrix& dy) {
  require_same_shape(y, dy, "softmax_rows_backward");
  Matrix dx(y.rows(), y.cols());
  for (int i = 0; i < y.rows(); ++i) {
    double dot = 0.0;
    for (int j = 0; j < y.cols(); ++j) dot += dy(i, j) * y(i, j);
    for (int j = 0; j < y.cols(); ++j) dx(i, j) = (dy(i, j) - dot) * y(i, j);
  }
  return dx;
}

double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad_scalar(double x) {
  double phi_cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  double phi_pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return phi_cdf + x * phi_pdf;
}

Matrix sigmoid(const Matrix& m) {
  Matrix out = m;
  for (double& v : out.values()) v = sigmoid_scalar(v);
  return out;
}

Matrix gelu(const Matrix& m) {
  Matrix out = m;
  for (double& v : out.values()) v = gelu_scalar(v);
  return out;
}

Matrix gelu_grad(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.values()) v = gelu_grad_scalar(v);
  return out;
}

Matrix layer_norm(const Matrix& m, const Matrix& gamma, const Matrix& beta, double eps,
                  LayerNormCache* cache) {
  if (gamma.rows() != 1 || gamma.cols() != m.cols() || beta.rows() != 1 ||
      beta.cols() != m.cols()) {
    throw ShapeError("layer_norm: gamma " + gamma.shape_str() + " / beta " + beta.shape_str() +
                     " do not match " + m.shape_str());
  }
  if (eps <= 0.0) throw RangeError("layer_norm: eps must be > 0");
  const int n = m.cols();
  Matrix normalized(m.rows(), n);
  std::vector<double> inv_std(m.rows());
  for (int i = 0; i < m.rows(); ++i) {
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += m(i, j);
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      double d = m(i, j) - mean;
      var += d * d;
    }
    var /= n;
    double inv = 1.0 / std::sqrt(var + eps);
    inv_std[i] = inv;
    for (int j = 0; j < n; ++j) normalized(i, j) = (m(i, j) - mean) * inv;
  }
  Matrix out(m.rows(), n);
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < n; ++j) out(i, j) = normalized(i, j) * gamma(0, j) + beta(0, j);
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

LayerNormGrads layer_norm_backward(const LayerNormCache& cache, const Matrix& gamma,
                                   const Matrix& dy) {
  const Matrix& xhat = cache.normalized;
  require_same_shape(xhat, dy, "layer_norm_backward");
  const int n = xhat.cols();
  LayerNormGrads g;
  g.dx = Matrix(xhat.rows(), n);
  g.dgamma = Matrix(1, n);
  g.dbeta = Matrix(1, n);
  for (int i = 0; i < xhat.rows(); ++i) {
    double mean_g = 0.0, mean_gx = 0.0;
    for (int j = 0; j < n; ++j) {
      double gj = gamma(0, j) * dy(i, j);
      mean_g += gj;
      mean_gx += gj * xhat(i, j);
      g.dgamma(0, j) += dy(i, j) * xhat(i, j);
      g.dbeta(0, j) += dy(i, j);
    }
    mean_g /= n;
    mean_gx /= n;
    for (int j = 0; j < n; ++j) {
      double gj = gamma(0, j) * dy(i, j);
      g.dx(i, j) = (gj - mean_g - xhat(i, j) * mean_gx) * cache.inv_std[i];
    }
  }
  return g;
}

}  // namespace cisskip
