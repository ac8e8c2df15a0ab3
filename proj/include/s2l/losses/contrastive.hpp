#pragma once

#include "s2l/core/loss_config.hpp"
#include "s2l/core/types.hpp"
#include "s2l/losses/sampling.hpp"

#include <optional>
#include <span>
#include <vector>

namespace s2l::losses {

// Binary target for a pair of cell labels (each 0 or 1).
int pair_label(int a, int b, PairOp op) noexcept;

template <typename Real>
struct ContrastiveResult {
    double value = 0.0;
    std::size_t cells = 0;
    std::size_t pairs = 0;
    // d value / d z per grid, laid out like the grid; empty unless requested.
    std::vector<std::vector<Real>> grad;
};

// Pixel-embedding contrastive regularizer: the mean, over ordered pairs
// (i, j) with i != j, of BCE(pair_label(y_i, y_j), sigmoid(cos(z_i, z_j) / tau)).
//
// Without a sample every non-ignore cell of every grid takes part; with one
// only the sampled cells do. Throws DegeneratePairSet with fewer than two
// cells and LossError for a zero embedding or a sample that names an ignore
// cell.
template <typename Real>
ContrastiveResult<Real> contrastive_loss_batch(std::span<const BasicEmbeddingGrid<Real>> embeddings,
                                               std::span<const DownscaledLabelMap> labels, double tau, PairOp op,
                                               const PixelSample* sample, bool with_grad);

double contrastive_loss(const EmbeddingGrid& embeddings, const DownscaledLabelMap& labels, double tau, PairOp op,
                        const std::optional<PixelSample>& sample = std::nullopt);

extern template ContrastiveResult<float> contrastive_loss_batch<float>(std::span<const BasicEmbeddingGrid<float>>,
                                                                       std::span<const DownscaledLabelMap>, double,
                                                                       PairOp, const PixelSample*, bool);
extern template ContrastiveResult<double> contrastive_loss_batch<double>(
    std::span<const BasicEmbeddingGrid<double>>, std::span<const DownscaledLabelMap>, double, PairOp,
    const PixelSample*, bool);

}  // namespace s2l::losses
