#pragma once

#include <cstddef>
#include <span>

#include "loadwave/error.hpp"

namespace loadwave {

/// Load frequency ratio: mean over cores of current clock / max clock.
/// Shared by the host sensor and the simulated governor.
inline double frequency_load_ratio(std::span<const double> current_hz, std::span<const double> max_hz) {
  if (current_hz.empty()) fail(ErrorCode::invalid_argument, "no cores in frequency reading");
  if (current_hz.size() != max_hz.size()) fail(ErrorCode::invalid_argument, "core count mismatch");
  const double n = static_cast<double>(current_hz.size());
  double y = 0.0;
  for (std::size_t i = 0; i < current_hz.size(); ++i) {
    if (!(max_hz[i] > 0.0)) fail(ErrorCode::invalid_argument, "max clock must be positive");
    y += (1.0 / n) * (current_hz[i] / max_hz[i]);
  }
  return y;
}

}  // namespace loadwave
