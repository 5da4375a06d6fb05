// Brute-force reference computations shared by the unit and acceptance tests.
#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

namespace tsf::oracle {

using Mat = std::vector<std::vector<double>>;

/// Degree-`order` least-squares fit weights over `window` samples from the
/// explicit normal equations (A^T A) c = A^T y, solved by Gauss-Jordan
/// elimination and evaluated at sample `eval_at`.
inline std::vector<double> savgol_normal_equations(std::size_t window, std::size_t order, std::size_t eval_at) {
  const std::size_t n = order + 1;
  const double half = static_cast<double>(window / 2);
  Mat a(window, std::vector<double>(n));
  for (std::size_t i = 0; i < window; ++i) {
    for (std::size_t p = 0; p < n; ++p) a[i][p] = std::pow(static_cast<double>(i) - half, static_cast<double>(p));
  }
  // Augmented [A^T A | A^T].
  Mat m(n, std::vector<double>(n + window, 0.0));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      for (std::size_t i = 0; i < window; ++i) m[r][c] += a[i][r] * a[i][c];
    }
    for (std::size_t i = 0; i < window; ++i) m[r][n + i] = a[i][r];
  }
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t pivot = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(m[r][c]) > std::abs(m[pivot][c])) pivot = r;
    }
    std::swap(m[c], m[pivot]);
    const double d = m[c][c];
    for (auto& v : m[c]) v /= d;
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = m[r][c];
      for (std::size_t k = 0; k < n + window; ++k) m[r][k] -= f * m[c][k];
    }
  }
  std::vector<double> w(window, 0.0);
  const double t = static_cast<double>(eval_at) - half;
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t i = 0; i < window; ++i) w[i] += std::pow(t, static_cast<double>(p)) * m[p][n + i];
  }
  return w;
}

/// Attention one query at a time: lambda_{n,i} = exp(q_n.k_i / sqrt(dk)) / Z_n
/// over the allowed keys, then out_n = sum_i lambda_{n,i} v_i. `allowed` is
/// Lq x Lk row-major, empty for no mask. Returns (output, weights).
inline std::pair<Mat, Mat> attention(const Mat& q, const Mat& k, const Mat& v, const std::vector<bool>& allowed = {}) {
  const double dk = static_cast<double>(q[0].size());
  Mat out(q.size(), std::vector<double>(v[0].size(), 0.0));
  Mat lambda(q.size(), std::vector<double>(k.size(), 0.0));
  for (std::size_t n = 0; n < q.size(); ++n) {
    double z = 0.0;
    for (std::size_t i = 0; i < k.size(); ++i) {
      if (!allowed.empty() && !allowed[n * k.size() + i]) continue;
      double dot = 0.0;
      for (std::size_t d = 0; d < q[n].size(); ++d) dot += q[n][d] * k[i][d];
      lambda[n][i] = std::exp(dot / std::sqrt(dk));
      z += lambda[n][i];
    }
    for (std::size_t i = 0; i < k.size(); ++i) {
      lambda[n][i] /= z;
      for (std::size_t d = 0; d < v[i].size(); ++d) out[n][d] += lambda[n][i] * v[i][d];
    }
  }
  return {out, lambda};
}

}  // namespace tsf::oracle
