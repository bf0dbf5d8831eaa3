#pragma once

#include <array>
#include <cstdint>

namespace dsaqc {

using Rgb8 = std::array<std::uint8_t, 3>;

/// Viridis lookup for v in [0,1] (clamped), nearest of 256 entries.
Rgb8 viridis(double v);

}  // namespace dsaqc
