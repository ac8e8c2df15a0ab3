#include "s2l/core/validate.hpp"

#include <cmath>

namespace s2l {

namespace {

template <typename Raster>
void check_extent(const Raster& r, std::vector<std::string>& out) {
    if (r.height() < 1) out.emplace_back("height >= 1");
    if (r.width() < 1) out.emplace_back("width >= 1");
}

template <typename T>
bool all_finite(std::span<const T> values) {
    for (T v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

bool valid_label(Label l) {
    return static_cast<std::uint8_t>(l) <= static_cast<std::uint8_t>(Label::ignore);
}

template <typename Real>
std::vector<std::string> validate_embeddings(const BasicEmbeddingGrid<Real>& grid) {
    std::vector<std::string> out;
    check_extent(grid.embeddings(), out);
    if (grid.dim() < 1) out.emplace_back("embedding dim >= 1");
    if (!all_finite(grid.embeddings().values())) out.emplace_back("finite embeddings");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        bool nonzero = false;
        for (Real v : grid[i]) nonzero = nonzero || v != Real(0);
        if (!nonzero) {
            out.emplace_back("nonzero embeddings");
            break;
        }
    }
    return out;
}

}  // namespace

bool is_power_of_two(int value) noexcept { return value >= 1 && (value & (value - 1)) == 0; }

std::vector<std::string> validate(const ImageGrid& image) {
    std::vector<std::string> out;
    check_extent(image.pixels(), out);
    if (image.channels() < 1) out.emplace_back("channels >= 1");
    const auto values = image.pixels().values();
    if (!all_finite(values)) {
        out.emplace_back("finite pixels");
        return out;
    }
    for (float v : values) {
        if (v < 0.0f || v > 1.0f) {
            out.emplace_back("pixels in [0,1]");
            break;
        }
    }
    return out;
}

std::vector<std::string> validate(const PredictionGrid& pred) {
    std::vector<std::string> out;
    check_extent(pred.raster(), out);
    for (double v : pred.values()) {
        if (!(v >= 0.0 && v <= 1.0)) {
            out.emplace_back("probabilities in [0,1]");
            break;
        }
    }
    return out;
}

std::vector<std::string> validate(const ScribbleMap& scribbles) {
    std::vector<std::string> out;
    check_extent(scribbles.flags(), out);
    const auto flags = scribbles.flags().values();
    for (auto f : flags) {
        if (f > (ScribbleMap::kForeground | ScribbleMap::kBackground)) {
            out.emplace_back("stroke flags");
            break;
        }
    }
    for (auto f : flags) {
        if ((f & ScribbleMap::kForeground) && (f & ScribbleMap::kBackground)) {
            out.emplace_back("disjointness");
            break;
        }
    }
    if (scribbles.foreground().empty() && scribbles.background().empty()) out.emplace_back("nonempty");
    return out;
}

std::vector<std::string> validate(const PseudoLabelMap& pseudo) {
    std::vector<std::string> out;
    check_extent(pseudo.labels(), out);
    for (Label l : pseudo.labels().values()) {
        if (!valid_label(l)) {
            out.emplace_back("labels in {0,1,ignore}");
            break;
        }
    }
    return out;
}

std::vector<std::string> validate(const DownscaledLabelMap& labels) {
    std::vector<std::string> out;
    check_extent(labels.labels(), out);
    if (!is_power_of_two(labels.delta())) {
        out.emplace_back("scale not a power of two");
    } else if (labels.height() != pooled_extent(labels.source_height(), labels.delta()) ||
               labels.width() != pooled_extent(labels.source_width(), labels.delta())) {
        out.emplace_back("pooled shape");
    }
    if (!(labels.nu1() >= 0.0 && labels.nu1() <= 1.0 && labels.nu2() >= 0.0 && labels.nu2() <= 1.0)) {
        out.emplace_back("thresholds in [0,1]");
    }
    if (!(labels.nu1() <= labels.nu2())) out.emplace_back("nu1 <= nu2");
    for (Label l : labels.labels().values()) {
        if (!valid_label(l)) {
            out.emplace_back("labels in {0,1,ignore}");
            break;
        }
    }
    return out;
}

std::vector<std::string> validate(const FeatureTap& tap) {
    std::vector<std::string> out;
    check_extent(tap.features(), out);
    if (!(tap.tap() > 0 && tap.tap() <= tap.stage_count())) out.emplace_back("tap index in (0, n]");
    if (!is_power_of_two(tap.delta())) out.emplace_back("scale not a power of two");
    if (tap.channels() < 1) out.emplace_back("channels >= 1");
    if (!all_finite(tap.features().values())) out.emplace_back("finite features");
    return out;
}

std::vector<std::string> validate(const EmbeddingGrid& grid) { return validate_embeddings(grid); }
std::vector<std::string> validate(const BasicEmbeddingGrid<float>& grid) { return validate_embeddings(grid); }

std::vector<std::string> validate(const LossConfig& cfg) {
    std::vector<std::string> out;
    if (!(cfg.alpha >= 0.0)) out.emplace_back("alpha >= 0");
    if (!(cfg.nu1 >= 0.0 && cfg.nu1 <= 1.0 && cfg.nu2 >= 0.0 && cfg.nu2 <= 1.0)) {
        out.emplace_back("thresholds in [0,1]");
    }
    if (!(cfg.nu1 <= cfg.nu2)) out.emplace_back("nu1 <= nu2");
    if (cfg.sample_cap < 1) out.emplace_back("sample_cap >= 1");
    for (const auto& s : cfg.scales) {
        if (!(s.weight >= 0.0)) out.emplace_back("scale weight >= 0");
        if (!(s.tau > 0.0)) out.emplace_back("temperature > 0");
        if (!is_power_of_two(s.delta)) out.emplace_back("scale not a power of two");
        if (s.tap < 1) out.emplace_back("tap index >= 1");
    }
    return out;
}

}  // namespace s2l
