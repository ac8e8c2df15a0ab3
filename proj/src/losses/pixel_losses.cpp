#include "s2l/losses/pixel_losses.hpp"

#include "s2l/losses/bce.hpp"

#include <string>

namespace s2l::losses {

namespace {

template <typename LabelSource>
PixelLossResult pooled_bce(std::span<const PredictionGrid> preds, std::span<const LabelSource> labels,
                           bool with_grad) {
    if (preds.size() != labels.size()) throw LossError("loss: prediction and label batch sizes differ");
    PixelLossResult out;
    CompensatedSum sum;
    for (std::size_t k = 0; k < preds.size(); ++k) {
        if (preds[k].height() != labels[k].height() || preds[k].width() != labels[k].width()) {
            throw LossError("loss: prediction and label shapes differ");
        }
    }
    if (with_grad) out.grad.resize(preds.size());
    for (std::size_t k = 0; k < preds.size(); ++k) {
        const auto& pred = preds[k];
        const auto& lab = labels[k];
        if (with_grad) out.grad[k].assign(pred.size(), 0.0);
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const Label l = lab[i];
            if (!is_confident(l)) continue;
            const double target = l == Label::foreground ? 1.0 : 0.0;
            sum.add(bce(target, pred[i]));
            ++out.count;
        }
    }
    if (out.count == 0) return out;
    const double inv = 1.0 / static_cast<double>(out.count);
    out.value = sum.value() * inv;
    if (with_grad) {
        for (std::size_t k = 0; k < preds.size(); ++k) {
            for (std::size_t i = 0; i < preds[k].size(); ++i) {
                const Label l = labels[k][i];
                if (!is_confident(l)) continue;
                out.grad[k][i] = bce_grad(l == Label::foreground ? 1.0 : 0.0, preds[k][i]) * inv;
            }
        }
    }
    return out;
}

// Read-only label view over a scribble map so the pooled kernel can index it.
struct ScribbleLabels {
    const ScribbleMap* map;
    int height() const { return map->height(); }
    int width() const { return map->width(); }
    Label operator[](std::size_t i) const { return map->label(i); }
};

}  // namespace

PixelLossResult scribble_loss_batch(std::span<const PredictionGrid> preds, std::span<const ScribbleMap> scribbles,
                                    bool with_grad) {
    std::vector<ScribbleLabels> views;
    views.reserve(scribbles.size());
    for (const auto& s : scribbles) views.push_back({&s});
    auto out = pooled_bce<ScribbleLabels>(preds, views, with_grad);
    if (out.count == 0) throw LossError("no scribbled pixels");
    return out;
}

double scribble_loss(const PredictionGrid& pred, const ScribbleMap& scribbles) {
    return scribble_loss_batch({&pred, 1}, {&scribbles, 1}, false).value;
}

PixelLossResult pseudo_loss_batch(std::span<const PredictionGrid> preds, std::span<const PseudoLabelMap> pseudo,
                                  bool with_grad) {
    return pooled_bce<PseudoLabelMap>(preds, pseudo, with_grad);
}

double pseudo_loss(const PredictionGrid& pred, const PseudoLabelMap& pseudo) {
    return pseudo_loss_batch({&pred, 1}, {&pseudo, 1}, false).value;
}

double s2l_loss(const PredictionGrid& pred, const ScribbleMap& scribbles, const PseudoLabelMap& pseudo,
                double alpha) {
    return scribble_loss(pred, scribbles) + alpha * pseudo_loss(pred, pseudo);
}

}  // namespace s2l::losses
