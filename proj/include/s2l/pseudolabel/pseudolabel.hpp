#pragma once

#include "s2l/core/archive.hpp"
#include "s2l/core/types.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace s2l::pseudolabel {

class PseudoLabelError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct FilterConfig {
    double momentum = 0.2;
    double threshold = 0.8;
    int refresh_period = 5;

    friend bool operator==(const FilterConfig&, const FilterConfig&) = default;
};

// Violated invariant names, empty when valid.
std::vector<std::string> validate(const FilterConfig& cfg);

// Running average of one training image's predictions. Each pixel keeps its
// own first-touch state so that crops can update part of the image.
class EmaTracker {
public:
    EmaTracker() = default;
    explicit EmaTracker(double momentum);
    EmaTracker(double momentum, int height, int width);
    EmaTracker(double momentum, Raster<double> ema, std::uint64_t update_count);
    EmaTracker(double momentum, Raster<double> ema, Raster<std::uint8_t> seen, std::uint64_t update_count);

    double momentum() const noexcept { return momentum_; }
    std::uint64_t update_count() const noexcept { return update_count_; }
    bool initialized() const noexcept { return update_count_ > 0; }
    const Raster<double>& ema() const noexcept { return ema_; }
    const Raster<std::uint8_t>& seen() const noexcept { return seen_; }
    bool seen(std::size_t i) const noexcept { return seen_[i] != 0; }
    int height() const noexcept { return ema_.height(); }
    int width() const noexcept { return ema_.width(); }

    friend bool operator==(const EmaTracker&, const EmaTracker&) = default;

private:
    friend EmaTracker& ema_update(EmaTracker&, const PredictionGrid&);
    friend EmaTracker& ema_update(EmaTracker&, const PredictionGrid&, int, int);

    double momentum_ = 0.2;
    Raster<double> ema_;
    Raster<std::uint8_t> seen_;
    std::uint64_t update_count_ = 0;
};

// First call stores pred; later calls blend m * ema + (1 - m) * pred.
EmaTracker& ema_update(EmaTracker& tracker, const PredictionGrid& pred);
// Same rule on the window of pred's shape at (y0, x0); the tracker must be sized.
EmaTracker& ema_update(EmaTracker& tracker, const PredictionGrid& patch, int y0, int x0);

// Pixels never updated are ignore unless scribbled.
PseudoLabelMap filter_pseudo(const EmaTracker& tracker, const ScribbleMap& scribbles, double threshold);

DownscaledLabelMap downscale_labels(const PseudoLabelMap& pseudo, const ScribbleMap& scribbles, int delta,
                                    double nu1, double nu2);

// 0 = background, 255 = foreground, 128 = ignore.
Raster<std::uint8_t> to_u8(const Raster<Label>& labels);
Raster<Label> from_u8(const Raster<std::uint8_t>& raster);

void encode(Archive& archive, const std::string& prefix, const EmaTracker& tracker);
EmaTracker decode_tracker(const Archive& archive, const std::string& prefix);

}  // namespace s2l::pseudolabel
