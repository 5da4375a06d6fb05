#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace tsf {

/// Weights w such that sum_i w[i] * y[i] over a window of `window` samples
/// equals the degree-`order` least-squares polynomial fit evaluated at
/// sample `eval_at` of that window.
std::vector<double> savgol_weights(std::size_t window, std::size_t order, std::size_t eval_at);

/// Savitzky-Golay smoothing. Interior points use the centred fit; the first
/// and last window/2 points are evaluated from the fit on the first/last
/// full window, so the output has the input's length.
/// Throws std::invalid_argument for an even window, window <= order, or a
/// series shorter than the window.
std::vector<double> savgol_smooth(std::span<const double> series, std::size_t window, std::size_t order);

}  // namespace tsf
