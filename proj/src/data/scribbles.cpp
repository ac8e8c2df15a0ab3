#include "s2l/data/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace s2l::data {

std::vector<std::string> validate(const ScribbleConfig& cfg) {
    std::vector<std::string> out;
    if (cfg.stroke_width < 1) out.emplace_back("stroke_width >= 1");
    if (!(cfg.coverage >= 0.0 && cfg.coverage < 1.0)) out.emplace_back("coverage in [0,1)");
    return out;
}

namespace {

using Rng = std::mt19937_64;

// Pixels whose (2r+1)^2 window lies inside the image and carries the same id.
std::vector<std::uint8_t> interior(const Raster<std::uint32_t>& ids, int r, bool background) {
    const int h = ids.height(), w = ids.width();
    std::vector<std::uint8_t> out(ids.cell_count(), 0);
    for (int y = r; y < h - r; ++y) {
        for (int x = r; x < w - r; ++x) {
            const auto id = ids(y, x);
            if ((id == 0) != background) continue;
            bool ok = true;
            for (int dy = -r; dy <= r && ok; ++dy) {
                for (int dx = -r; dx <= r; ++dx) {
                    if (ids(y + dy, x + dx) != id) {
                        ok = false;
                        break;
                    }
                }
            }
            out[ids.index(y, x)] = ok;
        }
    }
    return out;
}

class Strokes {
public:
    Strokes(int h, int w, int half) : h_(h), w_(w), half_(half), mark_(static_cast<std::size_t>(h) * w, 0) {}

    // Adds the pixel and its square neighbourhood of radius half; returns pixels added.
    int add(int y, int x, std::uint8_t flag, std::size_t limit, int radius = -1) {
        const int r = radius < 0 ? half_ : radius;
        int added = 0;
        for (int dy = -r; dy <= r; ++dy) {
            for (int dx = -r; dx <= r; ++dx) {
                const int py = y + dy, px = x + dx;
                if (py < 0 || px < 0 || py >= h_ || px >= w_ || count_ >= limit) continue;
                auto& m = mark_[static_cast<std::size_t>(py) * w_ + px];
                if (m) continue;
                m = flag;
                ++count_;
                ++added;
            }
        }
        return added;
    }

    std::size_t count() const { return count_; }

    ScribbleMap finish() const {
        std::vector<std::size_t> fg, bg;
        for (std::size_t i = 0; i < mark_.size(); ++i) {
            if (mark_[i] == ScribbleMap::kForeground) fg.push_back(i);
            if (mark_[i] == ScribbleMap::kBackground) bg.push_back(i);
        }
        return ScribbleMap(h_, w_, fg, bg);
    }

private:
    int h_, w_, half_;
    std::vector<std::uint8_t> mark_;
    std::size_t count_ = 0;
};

// Pixels on the ray from (y, x) along theta, one per unit step, while `ok` holds.
template <typename Ok>
std::vector<std::pair<int, int>> walk(int y, int x, double theta, int steps, Ok ok) {
    std::vector<std::pair<int, int>> out;
    for (int t = 1; t <= steps; ++t) {
        const int py = static_cast<int>(std::lround(y + t * std::sin(theta)));
        const int px = static_cast<int>(std::lround(x + t * std::cos(theta)));
        if (!ok(py, px)) break;
        if (out.empty() || out.back() != std::pair{py, px}) out.emplace_back(py, px);
    }
    return out;
}

}  // namespace

ScribbleMap synthesize_scribbles(const InstanceMap& mask, const ScribbleConfig& cfg) {
    if (const auto bad = validate(cfg); !bad.empty()) throw DataError("scribbles: invalid config: " + bad.front());
    const auto& ids = mask.ids();
    const int h = ids.height(), w = ids.width();
    const int half = (cfg.stroke_width - 1) / 2;
    const auto target = static_cast<std::size_t>(std::lround(cfg.coverage * h * w));
    Rng rng(cfg.seed);
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
    Strokes strokes(h, w, half);

    // foreground: about half of the budget, split over instances
    const auto inner = interior(ids, half + 1, false);
    const std::uint32_t k = mask.count();
    const int per_instance = k ? std::max<int>(1, static_cast<int>(target / 2 / k)) : 0;
    std::vector<double> sy(k + 1, 0), sx(k + 1, 0), n(k + 1, 0), inner_n(k + 1, 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto id = ids(y, x);
            if (!id) continue;
            sy[id] += y;
            sx[id] += x;
            n[id] += 1;
            inner_n[id] += inner[ids.index(y, x)];
        }
    }
    for (std::uint32_t id = 1; id <= k; ++id) {
        const double cy = sy[id] / n[id], cx = sx[id] / n[id];
        const bool has_inner = inner_n[id] > 0;
        // start at the usable pixel nearest the centroid
        int by = -1, bx = -1;
        double best = 1e300;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (ids(y, x) != id || (has_inner && !inner[ids.index(y, x)])) continue;
                const double d = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                if (d < best) {
                    best = d;
                    by = y;
                    bx = x;
                }
            }
        }
        const double theta = angle(rng);
        if (!has_inner) {
            // too small for the stroke width
            strokes.add(by, bx, ScribbleMap::kForeground, target + h * w, 0);
            continue;
        }
        const auto ok = [&](int y, int x) { return y >= 0 && x >= 0 && y < h && x < w && inner[ids.index(y, x)] && ids(y, x) == id; };
        const int reach = (per_instance - 1) / 2;
        auto fwd = walk(by, bx, theta, reach, ok);
        auto back = walk(by, bx, theta + std::numbers::pi, per_instance - 1 - static_cast<int>(fwd.size()), ok);
        strokes.add(by, bx, ScribbleMap::kForeground, target + h * w);
        for (auto [y, x] : fwd) strokes.add(y, x, ScribbleMap::kForeground, target + h * w);
        for (auto [y, x] : back) strokes.add(y, x, ScribbleMap::kForeground, target + h * w);
    }

    // background: straight strokes clear of every instance until the target is met
    const auto outer = interior(ids, half + 1, true);
    std::vector<std::size_t> starts;
    for (std::size_t i = 0; i < outer.size(); ++i) {
        if (outer[i]) starts.push_back(i);
    }
    if (!starts.empty()) {
        std::uniform_int_distribution<std::size_t> pick(0, starts.size() - 1);
        std::uniform_int_distribution<int> length(8, 24);
        const auto ok = [&](int y, int x) { return y >= 0 && x >= 0 && y < h && x < w && outer[ids.index(y, x)]; };
        for (int attempt = 0; attempt < 10000 && strokes.count() < target; ++attempt) {
            const auto s = starts[pick(rng)];
            const int y0 = static_cast<int>(s / w), x0 = static_cast<int>(s % w);
            const double theta = 2 * angle(rng);
            strokes.add(y0, x0, ScribbleMap::kBackground, target);
            for (auto [y, x] : walk(y0, x0, theta, length(rng), ok)) strokes.add(y, x, ScribbleMap::kBackground, target);
        }
    }
    return strokes.finish();
}

}  // namespace s2l::data
