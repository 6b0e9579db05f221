#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "h2ulv/error.hpp"

namespace h2ulv {

// Row-major dense matrix of doubles. Value type; copies are deep.
class DenseBlock {
 public:
  DenseBlock() = default;
  DenseBlock(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
  DenseBlock(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, ErrorKind::dimension_mismatch,
            "DenseBlock: data length does not match dimensions");
  }
  DenseBlock(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      require(r.size() == cols_, ErrorKind::dimension_mismatch, "DenseBlock: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static DenseBlock identity(std::size_t n) {
    DenseBlock m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  double* row(std::size_t i) noexcept { return data_.data() + i * cols_; }
  const double* row(std::size_t i) const noexcept { return data_.data() + i * cols_; }
  const std::vector<double>& values() const noexcept { return data_; }

  DenseBlock block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const {
    require(r0 + nr <= rows_ && c0 + nc <= cols_, ErrorKind::dimension_mismatch,
            "DenseBlock::block out of range");
    DenseBlock out(nr, nc);
    for (std::size_t i = 0; i < nr; ++i)
      std::copy_n(row(r0 + i) + c0, nc, out.row(i));
    return out;
  }

  void set_block(std::size_t r0, std::size_t c0, const DenseBlock& src) {
    require(r0 + src.rows() <= rows_ && c0 + src.cols() <= cols_, ErrorKind::dimension_mismatch,
            "DenseBlock::set_block out of range");
    for (std::size_t i = 0; i < src.rows(); ++i)
      std::copy_n(src.row(i), src.cols(), row(r0 + i) + c0);
  }

  DenseBlock transposed() const {
    DenseBlock t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  double frobenius_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const DenseBlock& a, const DenseBlock& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline DenseBlock hconcat(const DenseBlock& a, const DenseBlock& b) {
  if (a.cols() == 0) return b;
  if (b.cols() == 0) return a;
  require(a.rows() == b.rows(), ErrorKind::dimension_mismatch, "hconcat: row counts differ");
  DenseBlock out(a.rows(), a.cols() + b.cols());
  out.set_block(0, 0, a);
  out.set_block(0, a.cols(), b);
  return out;
}

inline DenseBlock vconcat(const DenseBlock& a, const DenseBlock& b) {
  if (a.rows() == 0) return b;
  if (b.rows() == 0) return a;
  require(a.cols() == b.cols(), ErrorKind::dimension_mismatch, "vconcat: column counts differ");
  DenseBlock out(a.rows() + b.rows(), a.cols());
  out.set_block(0, 0, a);
  out.set_block(a.rows(), 0, b);
  return out;
}

inline DenseBlock subtract(const DenseBlock& a, const DenseBlock& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::dimension_mismatch,
          "subtract: shapes differ");
  DenseBlock out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
  return out;
}

enum class Side { left, right };

// Every kernel below accumulates each output entry in a fixed ascending order
// over the inner index, so appending zero padding to any operand never changes
// the values in the unpadded region.
namespace kernel {

// C += alpha * A * B, all row-major, A m×k, B k×n.
inline void gemm_nn(std::size_t m, std::size_t n, std::size_t k, double alpha, const double* a,
                    std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  constexpr std::size_t kJ = 256;
  constexpr std::size_t kK = 128;
  for (std::size_t j0 = 0; j0 < n; j0 += kJ) {
    const std::size_t j1 = std::min(n, j0 + kJ);
    for (std::size_t k0 = 0; k0 < k; k0 += kK) {
      const std::size_t k1 = std::min(k, k0 + kK);
      std::size_t i = 0;
      for (; i + 4 <= m; i += 4) {
        double* c0 = c + i * ldc;
        double* c1 = c0 + ldc;
        double* c2 = c1 + ldc;
        double* c3 = c2 + ldc;
        for (std::size_t p = k0; p < k1; ++p) {
          const double a0 = alpha * a[i * lda + p];
          const double a1 = alpha * a[(i + 1) * lda + p];
          const double a2 = alpha * a[(i + 2) * lda + p];
          const double a3 = alpha * a[(i + 3) * lda + p];
          const double* br = b + p * ldb;
          for (std::size_t j = j0; j < j1; ++j) {
            const double bv = br[j];
            c0[j] += a0 * bv;
            c1[j] += a1 * bv;
            c2[j] += a2 * bv;
            c3[j] += a3 * bv;
          }
        }
      }
      for (; i < m; ++i) {
        double* ci = c + i * ldc;
        for (std::size_t p = k0; p < k1; ++p) {
          const double av = alpha * a[i * lda + p];
          const double* br = b + p * ldb;
          for (std::size_t j = j0; j < j1; ++j) ci[j] += av * br[j];
        }
      }
    }
  }
}

inline std::vector<double> transpose_copy(const double* src, std::size_t rows, std::size_t cols) {
  std::vector<double> t(rows * cols);
  constexpr std::size_t kT = 32;
  for (std::size_t i0 = 0; i0 < rows; i0 += kT)
    for (std::size_t j0 = 0; j0 < cols; j0 += kT)
      for (std::size_t i = i0; i < std::min(rows, i0 + kT); ++i)
        for (std::size_t j = j0; j < std::min(cols, j0 + kT); ++j) t[j * rows + i] = src[i * cols + j];
  return t;
}

// L X = B in place on B (n×m), L lower n×n.
inline void trsm_lower_left(std::size_t n, std::size_t m, const double* l, std::size_t ldl, double* b,
                            std::size_t ldb) {
  for (std::size_t i = 0; i < n; ++i) {
    double* bi = b + i * ldb;
    for (std::size_t p = 0; p < i; ++p) {
      const double lv = l[i * ldl + p];
      const double* bp = b + p * ldb;
      for (std::size_t j = 0; j < m; ++j) bi[j] -= lv * bp[j];
    }
    const double d = l[i * ldl + i];
    for (std::size_t j = 0; j < m; ++j) bi[j] /= d;
  }
}

// Lᵀ X = B in place on B (n×m), L lower n×n.
inline void trsm_lower_trans_left(std::size_t n, std::size_t m, const double* l, std::size_t ldl,
                                  double* b, std::size_t ldb) {
  for (std::size_t ii = n; ii-- > 0;) {
    double* bi = b + ii * ldb;
    for (std::size_t p = ii + 1; p < n; ++p) {
      const double lv = l[p * ldl + ii];
      const double* bp = b + p * ldb;
      for (std::size_t j = 0; j < m; ++j) bi[j] -= lv * bp[j];
    }
    const double d = l[ii * ldl + ii];
    for (std::size_t j = 0; j < m; ++j) bi[j] /= d;
  }
}

}  // namespace kernel

// C += scale * op(A) * op(B).
inline void multiply_into(DenseBlock& c, const DenseBlock& a, const DenseBlock& b, bool transpose_a,
                          bool transpose_b, double scale = 1.0) {
  const std::size_t m = transpose_a ? a.cols() : a.rows();
  const std::size_t ka = transpose_a ? a.rows() : a.cols();
  const std::size_t kb = transpose_b ? b.cols() : b.rows();
  const std::size_t n = transpose_b ? b.rows() : b.cols();
  require(ka == kb, ErrorKind::dimension_mismatch,
          "multiply: inner dimensions " + std::to_string(ka) + " and " + std::to_string(kb) + " differ");
  require(c.rows() == m && c.cols() == n, ErrorKind::dimension_mismatch,
          "multiply: accumulation target has wrong shape");
  if (m == 0 || n == 0 || ka == 0) return;
  std::vector<double> at, bt;
  const double* ap = a.data();
  const double* bp = b.data();
  if (transpose_a) {
    at = kernel::transpose_copy(a.data(), a.rows(), a.cols());
    ap = at.data();
  }
  if (transpose_b) {
    bt = kernel::transpose_copy(b.data(), b.rows(), b.cols());
    bp = bt.data();
  }
  kernel::gemm_nn(m, n, ka, scale, ap, ka, bp, n, c.data(), n);
}

inline DenseBlock multiply(const DenseBlock& a, const DenseBlock& b, bool transpose_a = false,
                           bool transpose_b = false, double scale = 1.0) {
  const std::size_t m = transpose_a ? a.cols() : a.rows();
  const std::size_t n = transpose_b ? b.rows() : b.cols();
  DenseBlock c(m, n);
  multiply_into(c, a, b, transpose_a, transpose_b, scale);
  return c;
}

// Lower Cholesky factor. Reads the lower triangle after checking symmetry.
inline DenseBlock cholesky(const DenseBlock& a) {
  require(a.rows() == a.cols(), ErrorKind::dimension_mismatch, "cholesky: matrix is not square");
  const std::size_t n = a.rows();
  const double scale = a.max_abs();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(a(i, j) - a(j, i)) > 1e-10 * scale)
        fail(ErrorKind::invalid_argument, "cholesky: matrix is not symmetric at (" + std::to_string(i) +
                                              ", " + std::to_string(j) + ")");
  DenseBlock l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    const double* lj = l.row(j);
    double d = a(j, j);
    for (std::size_t p = 0; p < j; ++p) d -= lj[p] * lj[p];
    if (!(d > 0.0) || !std::isfinite(d)) throw NotPositiveDefinite(j, d);
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      const double* li = l.row(i);
      double s = a(i, j);
      for (std::size_t p = 0; p < j; ++p) s -= li[p] * lj[p];
      l(i, j) = s / ljj;
    }
  }
  return l;
}

// Solves op(L) X = B (side left) or X op(L) = B (side right), op = transpose when requested.
inline DenseBlock tri_solve(const DenseBlock& l, const DenseBlock& b, Side side, bool transposed) {
  require(l.rows() == l.cols(), ErrorKind::dimension_mismatch, "tri_solve: L is not square");
  const std::size_t n = l.rows();
  for (std::size_t i = 0; i < n; ++i)
    if (l(i, i) == 0.0)
      fail(ErrorKind::singular, "tri_solve: zero diagonal entry at " + std::to_string(i));
  if (side == Side::left) {
    require(b.rows() == n, ErrorKind::dimension_mismatch, "tri_solve: B rows do not match L");
    DenseBlock x = b;
    if (n == 0 || x.cols() == 0) return x;
    if (transposed)
      kernel::trsm_lower_trans_left(n, x.cols(), l.data(), n, x.data(), x.cols());
    else
      kernel::trsm_lower_left(n, x.cols(), l.data(), n, x.data(), x.cols());
    return x;
  }
  require(b.cols() == n, ErrorKind::dimension_mismatch, "tri_solve: B columns do not match L");
  if (n == 0 || b.rows() == 0) return b;
  // X L^T = B  <=>  L X^T = B^T ;  X L = B  <=>  L^T X^T = B^T
  std::vector<double> xt = kernel::transpose_copy(b.data(), b.rows(), n);
  if (transposed)
    kernel::trsm_lower_left(n, b.rows(), l.data(), n, xt.data(), b.rows());
  else
    kernel::trsm_lower_trans_left(n, b.rows(), l.data(), n, xt.data(), b.rows());
  return DenseBlock(b.rows(), n, kernel::transpose_copy(xt.data(), n, b.rows()));
}

// Zero-pads to rows×cols; the original occupies the top-left corner.
inline DenseBlock pad(const DenseBlock& a, std::size_t rows, std::size_t cols) {
  require(rows >= a.rows() && cols >= a.cols(), ErrorKind::dimension_mismatch, "pad: target smaller than block");
  if (rows == a.rows() && cols == a.cols()) return a;
  DenseBlock out(rows, cols);
  out.set_block(0, 0, a);
  return out;
}

// Zero padding plus a unit diagonal in the padded region, so the padded matrix stays SPD.
inline DenseBlock pad_for_cholesky(const DenseBlock& a, std::size_t padded_n) {
  require(a.rows() == a.cols(), ErrorKind::dimension_mismatch, "pad_for_cholesky: block is not square");
  require(padded_n >= a.rows(), ErrorKind::invalid_argument, "pad_for_cholesky: padded size smaller than block");
  DenseBlock out = pad(a, padded_n, padded_n);
  for (std::size_t i = a.rows(); i < padded_n; ++i) out(i, i) = 1.0;
  return out;
}

enum class OpKind { cholesky, tri_solve, multiply, diag_fill };

inline const char* to_string(OpKind k) {
  switch (k) {
    case OpKind::cholesky: return "cholesky";
    case OpKind::tri_solve: return "tri_solve";
    case OpKind::multiply: return "multiply";
    case OpKind::diag_fill: return "diag_fill";
  }
  return "unknown";
}

// Leading-order flop counts. cholesky: n = m (square); tri_solve: triangle n, m right-hand
// columns; multiply: (m×k)·(k×n).
inline std::uint64_t flop_count(OpKind kind, std::uint64_t m, std::uint64_t n, std::uint64_t k = 0) {
  switch (kind) {
    case OpKind::cholesky: return m * m * m / 3;
    case OpKind::tri_solve: return n * n * m;
    case OpKind::multiply: return 2 * m * n * k;
    case OpKind::diag_fill: return 0;
  }
  return 0;
}

inline std::size_t round_up4(std::size_t n) { return (n + 3) / 4 * 4; }

}  // namespace h2ulv
