#pragma once

#include "s2l/core/loss_config.hpp"
#include "s2l/core/types.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace s2l::losses {

// Per-term values of the combined objective. `contrastive[k]` is empty when
// scale k was skipped because its pair set was degenerate.
struct LossBreakdown {
    double total = 0.0;
    double scribble = 0.0;
    double pseudo = 0.0;
    std::vector<std::optional<double>> contrastive;
};

enum class DegeneratePolicy { propagate, skip };

// Inputs of one contrastive scale for a batch: one embedding grid and one
// pooled label map per image.
template <typename Real>
struct ScaleBatch {
    std::span<const BasicEmbeddingGrid<Real>> embeddings;
    std::span<const DownscaledLabelMap> labels;
};

template <typename Real>
struct TotalLossResult {
    LossBreakdown breakdown;
    // d total / d t per image.
    std::vector<std::vector<double>> pred_grad;
    // d total / d z per scale, per image.
    std::vector<std::vector<std::vector<Real>>> embedding_grad;
};

// total = scribble + alpha * pseudo + sum_k weight_k * contrastive_k, with the
// per-scale cell sampling capped at cfg.sample_cap per class. Scale k draws
// its sample from `sample_seed` mixed with k.
template <typename Real>
TotalLossResult<Real> total_loss_batch(std::span<const PredictionGrid> preds, std::span<const ScribbleMap> scribbles,
                                       std::span<const PseudoLabelMap> pseudo,
                                       std::span<const ScaleBatch<Real>> scales, const LossConfig& cfg,
                                       std::uint64_t sample_seed, bool with_grad, DegeneratePolicy policy);

// Single image, one embedding grid and label map per configured scale.
LossBreakdown total_loss(const PredictionGrid& pred, const ScribbleMap& scribbles, const PseudoLabelMap& pseudo,
                         std::span<const EmbeddingGrid> taps, std::span<const DownscaledLabelMap> downscaled,
                         const LossConfig& cfg, std::uint64_t sample_seed = 0);

std::uint64_t scale_seed(std::uint64_t sample_seed, std::size_t scale_index) noexcept;

extern template TotalLossResult<float> total_loss_batch<float>(std::span<const PredictionGrid>,
                                                               std::span<const ScribbleMap>,
                                                               std::span<const PseudoLabelMap>,
                                                               std::span<const ScaleBatch<float>>, const LossConfig&,
                                                               std::uint64_t, bool, DegeneratePolicy);
extern template TotalLossResult<double> total_loss_batch<double>(std::span<const PredictionGrid>,
                                                                 std::span<const ScribbleMap>,
                                                                 std::span<const PseudoLabelMap>,
                                                                 std::span<const ScaleBatch<double>>,
                                                                 const LossConfig&, std::uint64_t, bool,
                                                                 DegeneratePolicy);

}  // namespace s2l::losses
