#include "s2l/pseudolabel/pseudolabel.hpp"

#include "s2l/core/validate.hpp"

#include <algorithm>

namespace s2l::pseudolabel {

std::vector<std::string> validate(const FilterConfig& cfg) {
    std::vector<std::string> out;
    if (!(cfg.momentum >= 0.0 && cfg.momentum <= 1.0)) out.emplace_back("momentum in [0,1]");
    if (!(cfg.threshold > 0.5 && cfg.threshold <= 1.0)) out.emplace_back("threshold in (0.5,1]");
    if (cfg.refresh_period < 1) out.emplace_back("refresh_period >= 1");
    return out;
}

EmaTracker::EmaTracker(double momentum) : momentum_(momentum) {
    if (!(momentum >= 0.0 && momentum <= 1.0)) throw PseudoLabelError("ema: momentum outside [0,1]");
}

EmaTracker::EmaTracker(double momentum, int height, int width)
    : EmaTracker(momentum, Raster<double>(height, width, 1, 0.0), Raster<std::uint8_t>(height, width, 1, 0), 0) {}

EmaTracker::EmaTracker(double momentum, Raster<double> ema, std::uint64_t update_count)
    : EmaTracker(momentum) {
    seen_ = Raster<std::uint8_t>(ema.height(), ema.width(), 1, update_count > 0 ? 1 : 0);
    ema_ = std::move(ema);
    update_count_ = update_count;
}

EmaTracker::EmaTracker(double momentum, Raster<double> ema, Raster<std::uint8_t> seen, std::uint64_t update_count)
    : EmaTracker(momentum) {
    if (!seen.same_shape(ema)) throw PseudoLabelError("ema: seen mask does not match ema shape");
    ema_ = std::move(ema);
    seen_ = std::move(seen);
    update_count_ = update_count;
}

namespace {

void blend(double m, double& ema, std::uint8_t& seen, double pred) {
    // clamp guards against rounding drift past 1
    ema = seen ? std::clamp(m * ema + (1.0 - m) * pred, 0.0, 1.0) : pred;
    seen = 1;
}

}  // namespace

EmaTracker& ema_update(EmaTracker& t, const PredictionGrid& pred) {
    if (t.ema_.empty() && t.update_count_ == 0) {
        t.ema_ = Raster<double>(pred.height(), pred.width(), 1, 0.0);
        t.seen_ = Raster<std::uint8_t>(pred.height(), pred.width(), 1, 0);
    }
    if (pred.height() != t.ema_.height() || pred.width() != t.ema_.width()) {
        throw PseudoLabelError("ema: prediction " + std::to_string(pred.height()) + "x" +
                               std::to_string(pred.width()) + " does not match tracker " +
                               std::to_string(t.ema_.height()) + "x" + std::to_string(t.ema_.width()));
    }
    for (std::size_t i = 0; i < pred.size(); ++i) blend(t.momentum_, t.ema_[i], t.seen_[i], pred[i]);
    ++t.update_count_;
    return t;
}

EmaTracker& ema_update(EmaTracker& t, const PredictionGrid& patch, int y0, int x0) {
    if (t.ema_.empty()) throw PseudoLabelError("ema: window update on an unsized tracker");
    if (y0 < 0 || x0 < 0 || y0 + patch.height() > t.ema_.height() || x0 + patch.width() > t.ema_.width()) {
        throw PseudoLabelError("ema: window outside the tracked image");
    }
    for (int y = 0; y < patch.height(); ++y) {
        for (int x = 0; x < patch.width(); ++x) {
            const auto i = t.ema_.index(y0 + y, x0 + x);
            blend(t.momentum_, t.ema_[i], t.seen_[i], patch(y, x));
        }
    }
    ++t.update_count_;
    return t;
}

PseudoLabelMap filter_pseudo(const EmaTracker& tracker, const ScribbleMap& scribbles, double threshold) {
    if (!tracker.initialized()) throw PseudoLabelError("filter: tracker has no updates");
    const auto& ema = tracker.ema();
    if (scribbles.height() != ema.height() || scribbles.width() != ema.width()) {
        throw PseudoLabelError("filter: scribble map does not match tracker shape");
    }
    Raster<Label> out(ema.height(), ema.width(), 1, Label::ignore);
    for (std::size_t i = 0; i < out.cell_count(); ++i) {
        if (!tracker.seen(i)) continue;
        if (ema[i] >= threshold) out[i] = Label::foreground;
        else if (1.0 - ema[i] >= threshold) out[i] = Label::background;
    }
    for (auto i : scribbles.foreground()) out[i] = Label::foreground;
    for (auto i : scribbles.background()) out[i] = Label::background;
    // a pixel on both strokes carries no label
    for (auto i : scribbles.foreground()) {
        if (scribbles.is_background(i)) out[i] = Label::ignore;
    }
    return PseudoLabelMap(std::move(out));
}

DownscaledLabelMap downscale_labels(const PseudoLabelMap& pseudo, const ScribbleMap& scribbles, int delta,
                                    double nu1, double nu2) {
    if (!is_power_of_two(delta)) throw PseudoLabelError("downscale: delta " + std::to_string(delta) + " is not a power of two");
    if (!(nu1 <= nu2)) throw PseudoLabelError("downscale: nu1 > nu2");
    const int h = pseudo.height();
    const int w = pseudo.width();
    if (scribbles.height() != h || scribbles.width() != w) {
        throw PseudoLabelError("downscale: scribble map does not match pseudo-label shape");
    }
    const int ph = pooled_extent(h, delta);
    const int pw = pooled_extent(w, delta);
    std::vector<int> ones(static_cast<std::size_t>(ph) * pw, 0);
    std::vector<int> counted(ones.size(), 0);
    std::vector<std::uint8_t> strokes(ones.size(), 0);
    for (int y = 0; y < h; ++y) {
        const std::size_t row = static_cast<std::size_t>(y / delta) * pw;
        for (int x = 0; x < w; ++x) {
            const std::size_t c = row + x / delta;
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            strokes[c] |= scribbles.flags()[i];
            const Label l = pseudo[i];
            if (l == Label::ignore) continue;
            ones[c] += l == Label::foreground;
            ++counted[c];
        }
    }
    Raster<Label> out(ph, pw, 1, Label::ignore);
    for (std::size_t c = 0; c < out.cell_count(); ++c) {
        const bool fg = strokes[c] & ScribbleMap::kForeground;
        const bool bg = strokes[c] & ScribbleMap::kBackground;
        if (fg || bg) {
            out[c] = fg && bg ? Label::ignore : (fg ? Label::foreground : Label::background);
            continue;
        }
        if (counted[c] == 0) continue;
        const double mu = static_cast<double>(ones[c]) / counted[c];
        if (mu <= nu1) out[c] = Label::background;
        else if (mu >= nu2) out[c] = Label::foreground;
    }
    return DownscaledLabelMap(std::move(out), delta, nu1, nu2, h, w);
}

Raster<std::uint8_t> to_u8(const Raster<Label>& labels) {
    Raster<std::uint8_t> out(labels.height(), labels.width(), 1);
    for (std::size_t i = 0; i < out.cell_count(); ++i) {
        switch (labels[i]) {
            case Label::background: out[i] = 0; break;
            case Label::foreground: out[i] = 255; break;
            default: out[i] = 128; break;
        }
    }
    return out;
}

Raster<Label> from_u8(const Raster<std::uint8_t>& raster) {
    if (raster.channels() != 1) throw PseudoLabelError("label raster must have one channel");
    Raster<Label> out(raster.height(), raster.width(), 1);
    for (std::size_t i = 0; i < out.cell_count(); ++i) {
        switch (raster[i]) {
            case 0: out[i] = Label::background; break;
            case 255: out[i] = Label::foreground; break;
            case 128: out[i] = Label::ignore; break;
            default: throw PseudoLabelError("label raster value " + std::to_string(raster[i]) + " is not 0, 128 or 255");
        }
    }
    return out;
}

void encode(Archive& archive, const std::string& prefix, const EmaTracker& t) {
    const double m = t.momentum();
    const std::uint64_t n = t.update_count();
    archive.put<double>(prefix + ".momentum", std::span(&m, 1));
    archive.put<std::uint64_t>(prefix + ".updates", std::span(&n, 1));
    archive.put<double>(prefix + ".ema",
                        {static_cast<std::uint64_t>(t.height()), static_cast<std::uint64_t>(t.width())},
                        t.ema().values());
    archive.put<std::uint8_t>(prefix + ".seen",
                              {static_cast<std::uint64_t>(t.height()), static_cast<std::uint64_t>(t.width())},
                              t.seen().values());
}

EmaTracker decode_tracker(const Archive& archive, const std::string& prefix) {
    const auto m = archive.get<double>(prefix + ".momentum");
    const auto n = archive.get<std::uint64_t>(prefix + ".updates");
    const auto& e = archive.require(prefix + ".ema");
    if (m.size() != 1 || n.size() != 1 || e.shape.size() != 2) {
        throw ArchiveError("archive: malformed tracker '" + prefix + "'");
    }
    Raster<double> ema(static_cast<int>(e.shape[0]), static_cast<int>(e.shape[1]), 1,
                       archive.get<double>(prefix + ".ema"));
    Raster<std::uint8_t> seen(ema.height(), ema.width(), 1, archive.get<std::uint8_t>(prefix + ".seen"));
    return EmaTracker(m[0], std::move(ema), std::move(seen), n[0]);
}

}  // namespace s2l::pseudolabel
