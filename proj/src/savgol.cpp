#include "tsf/savgol.hpp"

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace tsf {

namespace {

void validate(std::size_t window, std::size_t order) {
  if (window % 2 == 0) throw std::invalid_argument("savgol: window length must be odd, got " + std::to_string(window));
  if (window <= order) {
    throw std::invalid_argument("savgol: window " + std::to_string(window) + " must exceed polynomial order " +
                                std::to_string(order));
  }
}

// Rows: polynomial evaluated at each window position (x centred on the window).
Eigen::MatrixXd smoothing_matrix(std::size_t window, std::size_t order) {
  const auto half = static_cast<double>(window / 2);
  Eigen::MatrixXd vander(window, order + 1);
  for (std::size_t i = 0; i < window; ++i) {
    const double x = static_cast<double>(i) - half;
    double p = 1.0;
    for (std::size_t j = 0; j <= order; ++j, p *= x) vander(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = p;
  }
  // Least-squares pseudo-inverse via column-pivoted QR.
  const Eigen::MatrixXd pinv = vander.colPivHouseholderQr().solve(Eigen::MatrixXd::Identity(
      static_cast<Eigen::Index>(window), static_cast<Eigen::Index>(window)));
  return vander * pinv;
}

}  // namespace

std::vector<double> savgol_weights(std::size_t window, std::size_t order, std::size_t eval_at) {
  validate(window, order);
  if (eval_at >= window) throw std::invalid_argument("savgol: evaluation offset outside the window");
  const Eigen::MatrixXd hat = smoothing_matrix(window, order);
  std::vector<double> w(window);
  for (std::size_t i = 0; i < window; ++i) w[i] = hat(static_cast<Eigen::Index>(eval_at), static_cast<Eigen::Index>(i));
  return w;
}

std::vector<double> savgol_smooth(std::span<const double> series, std::size_t window, std::size_t order) {
  validate(window, order);
  const std::size_t n = series.size();
  if (n < window) {
    throw std::invalid_argument("savgol: window " + std::to_string(window) + " larger than series of length " +
                                std::to_string(n));
  }
  const Eigen::MatrixXd hat = smoothing_matrix(window, order);
  const std::size_t half = window / 2;
  auto apply = [&](std::size_t row, std::size_t first) {
    double acc = 0.0;
    for (std::size_t i = 0; i < window; ++i) acc += hat(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(i)) * series[first + i];
    return acc;
  };
  std::vector<double> out(n);
  for (std::size_t t = 0; t < half; ++t) out[t] = apply(t, 0);
  for (std::size_t t = half; t + half < n; ++t) out[t] = apply(half, t - half);
  for (std::size_t t = n - half; t < n; ++t) out[t] = apply(t - (n - window), n - window);
  return out;
}

}  // namespace tsf
