#pragma once

#include "s2l/core/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace s2l::losses {

// Cell indices drawn per class. With several grids the indices address the
// concatenation of the grids in order.
struct PixelSample {
    std::vector<std::size_t> foreground;
    std::vector<std::size_t> background;

    // Both classes merged, ascending.
    std::vector<std::size_t> combined() const;
    std::size_t size() const noexcept { return foreground.size() + background.size(); }
};

// Uniform sampling without replacement of at most `cap` cells per class;
// ignore cells are never drawn. Deterministic for a given seed.
PixelSample sample_pixels(const DownscaledLabelMap& labels, std::size_t cap, std::uint64_t seed);
PixelSample sample_pixels(std::span<const DownscaledLabelMap> labels, std::size_t cap, std::uint64_t seed);

}  // namespace s2l::losses
