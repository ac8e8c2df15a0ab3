#pragma once

#include "s2l/core/types.hpp"

#include <span>
#include <vector>

namespace s2l::losses {

// Loss over a batch of prediction grids. `grad[k]` holds d value / d t for
// every pixel of grid k (zero outside the supervised set); it is empty when
// the gradient was not requested.
struct PixelLossResult {
    double value = 0.0;
    std::size_t count = 0;
    std::vector<std::vector<double>> grad;
};

// Mean BCE over the scribbled pixels Omega. Throws LossError when Omega is empty.
double scribble_loss(const PredictionGrid& pred, const ScribbleMap& scribbles);
// Pooled over every scribbled pixel of the batch.
PixelLossResult scribble_loss_batch(std::span<const PredictionGrid> preds, std::span<const ScribbleMap> scribbles,
                                    bool with_grad);

// Mean BCE over the confident pseudo-labelled pixels; 0 when there are none.
double pseudo_loss(const PredictionGrid& pred, const PseudoLabelMap& pseudo);
PixelLossResult pseudo_loss_batch(std::span<const PredictionGrid> preds, std::span<const PseudoLabelMap> pseudo,
                                  bool with_grad);

double s2l_loss(const PredictionGrid& pred, const ScribbleMap& scribbles, const PseudoLabelMap& pseudo,
                double alpha);

}  // namespace s2l::losses
