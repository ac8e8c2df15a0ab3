#pragma once

#include "s2l/core/loss_config.hpp"
#include "s2l/core/types.hpp"

#include <string>
#include <vector>

namespace s2l {

// Invariant checks for the core types. Each returns the names of the
// violated invariants; an empty list means the value is well formed.
std::vector<std::string> validate(const ImageGrid& image);
std::vector<std::string> validate(const PredictionGrid& pred);
std::vector<std::string> validate(const ScribbleMap& scribbles);
std::vector<std::string> validate(const PseudoLabelMap& pseudo);
std::vector<std::string> validate(const DownscaledLabelMap& labels);
std::vector<std::string> validate(const FeatureTap& tap);
std::vector<std::string> validate(const EmbeddingGrid& grid);
std::vector<std::string> validate(const BasicEmbeddingGrid<float>& grid);
std::vector<std::string> validate(const LossConfig& cfg);

bool is_power_of_two(int value) noexcept;

// Shape of the pooled grid for a source dimension at factor delta.
inline int pooled_extent(int extent, int delta) noexcept { return (extent + delta - 1) / delta; }

}  // namespace s2l
