#include "s2l/losses/total.hpp"

#include "s2l/losses/bce.hpp"
#include "s2l/losses/contrastive.hpp"
#include "s2l/losses/pixel_losses.hpp"
#include "s2l/losses/sampling.hpp"

namespace s2l::losses {

std::uint64_t scale_seed(std::uint64_t sample_seed, std::size_t scale_index) noexcept {
    // splitmix64 finalizer over the pair
    std::uint64_t z = sample_seed + 0x9E3779B97F4A7C15ULL * (scale_index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

template <typename Real>
TotalLossResult<Real> total_loss_batch(std::span<const PredictionGrid> preds, std::span<const ScribbleMap> scribbles,
                                       std::span<const PseudoLabelMap> pseudo,
                                       std::span<const ScaleBatch<Real>> scales, const LossConfig& cfg,
                                       std::uint64_t sample_seed, bool with_grad, DegeneratePolicy policy) {
    if (scales.size() != cfg.scales.size()) {
        throw LossError("total loss: " + std::to_string(scales.size()) + " scale inputs for " +
                        std::to_string(cfg.scales.size()) + " configured scales");
    }
    TotalLossResult<Real> out;
    auto& b = out.breakdown;

    const auto ls = scribble_loss_batch(preds, scribbles, with_grad);
    const auto lp = pseudo_loss_batch(preds, pseudo, with_grad);
    b.scribble = ls.value;
    b.pseudo = lp.value;
    b.total = b.scribble + cfg.alpha * b.pseudo;
    if (with_grad) {
        out.pred_grad = ls.grad;
        for (std::size_t k = 0; k < out.pred_grad.size(); ++k) {
            for (std::size_t i = 0; i < out.pred_grad[k].size(); ++i) {
                out.pred_grad[k][i] += cfg.alpha * lp.grad[k][i];
            }
        }
        out.embedding_grad.resize(scales.size());
    }

    b.contrastive.resize(scales.size());
    for (std::size_t s = 0; s < scales.size(); ++s) {
        const auto& spec = cfg.scales[s];
        const auto& in = scales[s];
        try {
            const auto sample = sample_pixels(in.labels, cfg.sample_cap, scale_seed(sample_seed, s));
            auto lc = contrastive_loss_batch<Real>(in.embeddings, in.labels, spec.tau, cfg.pair_op, &sample,
                                                   with_grad);
            b.contrastive[s] = lc.value;
            b.total += spec.weight * lc.value;
            if (with_grad) {
                for (auto& g : lc.grad) {
                    for (auto& v : g) v *= static_cast<Real>(spec.weight);
                }
                out.embedding_grad[s] = std::move(lc.grad);
            }
        } catch (const DegeneratePairSet&) {
            if (policy == DegeneratePolicy::propagate) throw;
            b.contrastive[s].reset();
            if (with_grad) {
                out.embedding_grad[s].resize(in.embeddings.size());
                for (std::size_t g = 0; g < in.embeddings.size(); ++g) {
                    out.embedding_grad[s][g].assign(in.embeddings[g].embeddings().values().size(), Real(0));
                }
            }
        }
    }
    return out;
}

LossBreakdown total_loss(const PredictionGrid& pred, const ScribbleMap& scribbles, const PseudoLabelMap& pseudo,
                         std::span<const EmbeddingGrid> taps, std::span<const DownscaledLabelMap> downscaled,
                         const LossConfig& cfg, std::uint64_t sample_seed) {
    if (taps.size() != downscaled.size()) throw LossError("total loss: taps and label maps differ in count");
    std::vector<ScaleBatch<double>> scales;
    for (std::size_t s = 0; s < taps.size(); ++s) scales.push_back({taps.subspan(s, 1), downscaled.subspan(s, 1)});
    return total_loss_batch<double>({&pred, 1}, {&scribbles, 1}, {&pseudo, 1}, scales, cfg, sample_seed, false,
                                    DegeneratePolicy::propagate)
        .breakdown;
}

template TotalLossResult<float> total_loss_batch<float>(std::span<const PredictionGrid>, std::span<const ScribbleMap>,
                                                        std::span<const PseudoLabelMap>,
                                                        std::span<const ScaleBatch<float>>, const LossConfig&,
                                                        std::uint64_t, bool, DegeneratePolicy);
template TotalLossResult<double> total_loss_batch<double>(std::span<const PredictionGrid>,
                                                          std::span<const ScribbleMap>,
                                                          std::span<const PseudoLabelMap>,
                                                          std::span<const ScaleBatch<double>>, const LossConfig&,
                                                          std::uint64_t, bool, DegeneratePolicy);

}  // namespace s2l::losses
