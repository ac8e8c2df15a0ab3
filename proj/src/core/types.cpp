#include "s2l/core/types.hpp"

#include "s2l/core/loss_config.hpp"

#include <algorithm>
#include <iterator>

namespace s2l {

ScribbleMap::ScribbleMap(Raster<std::uint8_t> flags) : flags_(std::move(flags)) { index_sets(); }

ScribbleMap::ScribbleMap(int height, int width, std::span<const std::size_t> foreground,
                         std::span<const std::size_t> background)
    : flags_(height, width, 1, std::uint8_t{0}) {
    for (auto i : foreground) {
        if (i >= flags_.cell_count()) throw std::out_of_range("scribble index outside the grid");
        flags_[i] |= kForeground;
    }
    for (auto i : background) {
        if (i >= flags_.cell_count()) throw std::out_of_range("scribble index outside the grid");
        flags_[i] |= kBackground;
    }
    index_sets();
}

ScribbleMap ScribbleMap::from_labels(const Raster<Label>& labels) {
    Raster<std::uint8_t> flags(labels.height(), labels.width(), 1, std::uint8_t{0});
    for (std::size_t i = 0; i < labels.cell_count(); ++i) {
        if (labels[i] == Label::foreground) flags[i] = kForeground;
        else if (labels[i] == Label::background) flags[i] = kBackground;
    }
    return ScribbleMap(std::move(flags));
}

Label ScribbleMap::label(std::size_t i) const noexcept {
    switch (flags_[i] & (kForeground | kBackground)) {
        case kForeground: return Label::foreground;
        case kBackground: return Label::background;
        default: return Label::ignore;
    }
}

std::vector<std::size_t> ScribbleMap::labeled() const {
    std::vector<std::size_t> out;
    out.reserve(foreground_.size() + background_.size());
    std::set_union(foreground_.begin(), foreground_.end(), background_.begin(), background_.end(),
                   std::back_inserter(out));
    return out;
}

void ScribbleMap::index_sets() {
    foreground_.clear();
    background_.clear();
    for (std::size_t i = 0; i < flags_.cell_count(); ++i) {
        if (flags_[i] & kForeground) foreground_.push_back(i);
        if (flags_[i] & kBackground) background_.push_back(i);
    }
}

std::size_t PseudoLabelMap::confident_count() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(labels_.values().begin(), labels_.values().end(), [](Label l) { return is_confident(l); }));
}

std::string_view to_string(PairOp op) noexcept {
    switch (op) {
        case PairOp::logical_or: return "or";
        case PairOp::logical_and: return "and";
        case PairOp::logical_xnor: return "xnor";
    }
    return "or";
}

std::optional<PairOp> parse_pair_op(std::string_view name) noexcept {
    if (name == "or") return PairOp::logical_or;
    if (name == "and") return PairOp::logical_and;
    if (name == "xnor") return PairOp::logical_xnor;
    return std::nullopt;
}

std::vector<ScaleSpec> default_scales(int stage_count) {
    // Last decoder stage at full resolution, third-from-last at quarter resolution.
    return {ScaleSpec{stage_count, 1, 0.3, 0.5}, ScaleSpec{stage_count - 2, 4, 0.1, 10.0}};
}

}  // namespace s2l
