#pragma once

// Seeded random fixtures for property-style tests.

#include "s2l/core/types.hpp"

#include <random>
#include <vector>

namespace fixture {

using Rng = std::mt19937_64;

inline s2l::PredictionGrid random_prediction(Rng& rng, int h, int w, double lo = 0.05, double hi = 0.95) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(static_cast<std::size_t>(h * w));
    for (auto& x : v) x = u(rng);
    return s2l::PredictionGrid(h, w, std::move(v));
}

// Each pixel is a foreground stroke with p_fg, a background stroke with p_bg.
inline s2l::ScribbleMap random_scribbles(Rng& rng, int h, int w, double p_fg = 0.15, double p_bg = 0.15) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    s2l::Raster<std::uint8_t> flags(h, w, 1, 0);
    for (std::size_t i = 0; i < flags.cell_count(); ++i) {
        const double r = u(rng);
        if (r < p_fg) flags[i] = s2l::ScribbleMap::kForeground;
        else if (r < p_fg + p_bg) flags[i] = s2l::ScribbleMap::kBackground;
    }
    // Keep Omega non-empty.
    if (flags[0] == 0) flags[0] = s2l::ScribbleMap::kForeground;
    return s2l::ScribbleMap(std::move(flags));
}

inline s2l::Raster<s2l::Label> random_labels(Rng& rng, int h, int w, double p_ignore) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    s2l::Raster<s2l::Label> labels(h, w, 1, s2l::Label::ignore);
    for (std::size_t i = 0; i < labels.cell_count(); ++i) {
        const double r = u(rng);
        if (r < p_ignore) continue;
        labels[i] = r < p_ignore + (1.0 - p_ignore) / 2 ? s2l::Label::foreground : s2l::Label::background;
    }
    return labels;
}

inline s2l::PseudoLabelMap random_pseudo(Rng& rng, int h, int w, double p_ignore = 0.3) {
    return s2l::PseudoLabelMap(random_labels(rng, h, w, p_ignore));
}

inline s2l::DownscaledLabelMap random_pooled(Rng& rng, int h, int w, double p_ignore = 0.3) {
    return s2l::DownscaledLabelMap(random_labels(rng, h, w, p_ignore), 1, 0.0, 1.0, h, w);
}

inline s2l::EmbeddingGrid random_embeddings(Rng& rng, int h, int w, int dim) {
    std::normal_distribution<double> n(0.0, 1.0);
    s2l::Raster<double> r(h, w, dim);
    for (auto& v : r.values()) v = n(rng);
    return s2l::EmbeddingGrid(std::move(r));
}

inline std::vector<int> label_ints(const s2l::DownscaledLabelMap& m) {
    std::vector<int> out(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        out[i] = m[i] == s2l::Label::ignore ? -1 : (m[i] == s2l::Label::foreground ? 1 : 0);
    }
    return out;
}

inline std::vector<std::vector<double>> cell_vectors(const s2l::EmbeddingGrid& g) {
    std::vector<std::vector<double>> out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) out[i].assign(g[i].begin(), g[i].end());
    return out;
}

}  // namespace fixture
