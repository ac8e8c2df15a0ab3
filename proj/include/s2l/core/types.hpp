#pragma once

#include "s2l/core/raster.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace s2l {

// Tri-state pixel label. For scribbles `ignore` reads as "unlabeled".
enum class Label : std::uint8_t { background = 0, foreground = 1, ignore = 2 };

inline constexpr bool is_confident(Label l) noexcept { return l != Label::ignore; }

// Input image, H x W x C_in, values normalized to [0,1] once ingested.
class ImageGrid {
public:
    ImageGrid() = default;
    explicit ImageGrid(Raster<float> pixels) : pixels_(std::move(pixels)) {}

    int height() const noexcept { return pixels_.height(); }
    int width() const noexcept { return pixels_.width(); }
    int channels() const noexcept { return pixels_.channels(); }
    float operator()(int y, int x, int c = 0) const noexcept { return pixels_(y, x, c); }
    const Raster<float>& pixels() const noexcept { return pixels_; }

    friend bool operator==(const ImageGrid&, const ImageGrid&) = default;

private:
    Raster<float> pixels_;
};

// Per-pixel foreground probability t = f(x).
class PredictionGrid {
public:
    PredictionGrid() = default;
    explicit PredictionGrid(Raster<double> probs) : probs_(std::move(probs)) {}
    PredictionGrid(int height, int width, std::vector<double> probs)
        : probs_(height, width, 1, std::move(probs)) {}

    int height() const noexcept { return probs_.height(); }
    int width() const noexcept { return probs_.width(); }
    std::size_t size() const noexcept { return probs_.cell_count(); }
    double operator()(int y, int x) const noexcept { return probs_(y, x); }
    double operator[](std::size_t i) const noexcept { return probs_[i]; }
    std::span<const double> values() const noexcept { return probs_.values(); }
    const Raster<double>& raster() const noexcept { return probs_; }

    friend bool operator==(const PredictionGrid&, const PredictionGrid&) = default;

private:
    Raster<double> probs_;
};

// Sparse scribble annotation. Stored as per-pixel stroke flags so that a
// malformed map (a pixel on both a foreground and a background stroke) stays
// representable and can be reported by validate().
class ScribbleMap {
public:
    static constexpr std::uint8_t kForeground = 1;
    static constexpr std::uint8_t kBackground = 2;

    ScribbleMap() = default;
    explicit ScribbleMap(Raster<std::uint8_t> flags);
    ScribbleMap(int height, int width, std::span<const std::size_t> foreground,
                std::span<const std::size_t> background);

    static ScribbleMap from_labels(const Raster<Label>& labels);

    int height() const noexcept { return flags_.height(); }
    int width() const noexcept { return flags_.width(); }
    std::size_t size() const noexcept { return flags_.cell_count(); }

    bool is_foreground(std::size_t i) const noexcept { return (flags_[i] & kForeground) != 0; }
    bool is_background(std::size_t i) const noexcept { return (flags_[i] & kBackground) != 0; }
    // Conflicting pixels read as ignore.
    Label label(std::size_t i) const noexcept;
    Label label(int y, int x) const noexcept { return label(flags_.index(y, x)); }

    // Omega+, Omega-, and Omega, as ascending pixel indices.
    const std::vector<std::size_t>& foreground() const noexcept { return foreground_; }
    const std::vector<std::size_t>& background() const noexcept { return background_; }
    std::vector<std::size_t> labeled() const;

    const Raster<std::uint8_t>& flags() const noexcept { return flags_; }

    friend bool operator==(const ScribbleMap& a, const ScribbleMap& b) { return a.flags_ == b.flags_; }

private:
    void index_sets();

    Raster<std::uint8_t> flags_;
    std::vector<std::size_t> foreground_;
    std::vector<std::size_t> background_;
};

// Pseudo-label y-hat; Omega_p is the set of non-ignore pixels.
class PseudoLabelMap {
public:
    PseudoLabelMap() = default;
    explicit PseudoLabelMap(Raster<Label> labels) : labels_(std::move(labels)) {}

    int height() const noexcept { return labels_.height(); }
    int width() const noexcept { return labels_.width(); }
    std::size_t size() const noexcept { return labels_.cell_count(); }
    Label operator[](std::size_t i) const noexcept { return labels_[i]; }
    Label operator()(int y, int x) const noexcept { return labels_(y, x); }
    std::size_t confident_count() const noexcept;
    const Raster<Label>& labels() const noexcept { return labels_; }

    friend bool operator==(const PseudoLabelMap&, const PseudoLabelMap&) = default;

private:
    Raster<Label> labels_;
};

// Block-pooled tri-state labels at scale delta, for a source of
// source_height x source_width pixels.
class DownscaledLabelMap {
public:
    DownscaledLabelMap() = default;
    DownscaledLabelMap(Raster<Label> labels, int delta, double nu1, double nu2, int source_height,
                       int source_width)
        : labels_(std::move(labels)),
          delta_(delta),
          nu1_(nu1),
          nu2_(nu2),
          source_height_(source_height),
          source_width_(source_width) {}

    int height() const noexcept { return labels_.height(); }
    int width() const noexcept { return labels_.width(); }
    std::size_t size() const noexcept { return labels_.cell_count(); }
    Label operator[](std::size_t i) const noexcept { return labels_[i]; }
    Label operator()(int y, int x) const noexcept { return labels_(y, x); }
    int delta() const noexcept { return delta_; }
    double nu1() const noexcept { return nu1_; }
    double nu2() const noexcept { return nu2_; }
    int source_height() const noexcept { return source_height_; }
    int source_width() const noexcept { return source_width_; }
    const Raster<Label>& labels() const noexcept { return labels_; }

    friend bool operator==(const DownscaledLabelMap&, const DownscaledLabelMap&) = default;

private:
    Raster<Label> labels_;
    int delta_ = 1;
    double nu1_ = 0.0;
    double nu2_ = 1.0;
    int source_height_ = 0;
    int source_width_ = 0;
};

// Decoder feature v at stage `tap` (1-based) of a network with
// `stage_count` decoder stages; resolution is 1/delta of the input.
template <typename Real>
class BasicFeatureTap {
public:
    BasicFeatureTap() = default;
    BasicFeatureTap(Raster<Real> features, int tap, int delta, int stage_count)
        : features_(std::move(features)), tap_(tap), delta_(delta), stage_count_(stage_count) {}

    int height() const noexcept { return features_.height(); }
    int width() const noexcept { return features_.width(); }
    int channels() const noexcept { return features_.channels(); }
    int tap() const noexcept { return tap_; }
    int delta() const noexcept { return delta_; }
    int stage_count() const noexcept { return stage_count_; }
    const Raster<Real>& features() const noexcept { return features_; }

    friend bool operator==(const BasicFeatureTap&, const BasicFeatureTap&) = default;

private:
    Raster<Real> features_;
    int tap_ = 0;
    int delta_ = 1;
    int stage_count_ = 0;
};

// Projected embeddings z, one C'-vector per cell.
template <typename Real>
class BasicEmbeddingGrid {
public:
    BasicEmbeddingGrid() = default;
    explicit BasicEmbeddingGrid(Raster<Real> embeddings, int delta = 1)
        : embeddings_(std::move(embeddings)), delta_(delta) {}

    int height() const noexcept { return embeddings_.height(); }
    int width() const noexcept { return embeddings_.width(); }
    int dim() const noexcept { return embeddings_.channels(); }
    std::size_t size() const noexcept { return embeddings_.cell_count(); }
    int delta() const noexcept { return delta_; }
    std::span<const Real> operator[](std::size_t i) const noexcept { return embeddings_.cell(i); }
    const Raster<Real>& embeddings() const noexcept { return embeddings_; }

    friend bool operator==(const BasicEmbeddingGrid&, const BasicEmbeddingGrid&) = default;

private:
    Raster<Real> embeddings_;
    int delta_ = 1;
};

using FeatureTap = BasicFeatureTap<double>;
using EmbeddingGrid = BasicEmbeddingGrid<double>;

}  // namespace s2l
