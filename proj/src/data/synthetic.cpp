#include "s2l/data/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace s2l::data {

std::vector<std::string> validate(const SynthConfig& cfg) {
    std::vector<std::string> out;
    if (cfg.size_multiple < 1 || cfg.height < 1 || cfg.width < 1 || cfg.height % cfg.size_multiple != 0 ||
        cfg.width % cfg.size_multiple != 0) {
        out.emplace_back("size divisible by network downsampling factor");
    }
    const auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!(unit(cfg.fg_low) && unit(cfg.fg_high) && unit(cfg.bg_low) && unit(cfg.bg_high) && cfg.fg_low <= cfg.fg_high &&
          cfg.bg_low <= cfg.bg_high)) {
        out.emplace_back("intensities in [0,1]");
    }
    if (cfg.min_blobs < 0 || cfg.min_blobs > cfg.max_blobs) out.emplace_back("blob count range");
    if (!(cfg.min_radius >= 3.0 && cfg.min_radius <= cfg.max_radius)) out.emplace_back("blob radius range");
    if (cfg.blob_gap < 1) out.emplace_back("blob_gap >= 1");
    if (!(cfg.distractor_density >= 0.0)) out.emplace_back("distractor_density >= 0");
    if (!(cfg.noise_sigma >= 0.0)) out.emplace_back("noise_sigma >= 0");
    return out;
}

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

struct Canvas {
    int h, w;
    std::vector<std::uint32_t> ids;
    // blobs dilated by the gap: nothing else may touch these pixels
    std::vector<std::uint8_t> blocked;
    std::vector<float> value;

    Canvas(int h_, int w_) : h(h_), w(w_), ids(static_cast<std::size_t>(h_) * w_, 0), blocked(ids.size(), 0), value(ids.size(), 0.f) {}
    std::size_t at(int y, int x) const { return static_cast<std::size_t>(y) * w + x; }
    bool inside(int y, int x) const { return y >= 0 && x >= 0 && y < h && x < w; }

    void block_around(const std::vector<std::size_t>& pixels, int gap) {
        for (auto p : pixels) {
            const int y = static_cast<int>(p / w), x = static_cast<int>(p % w);
            for (int dy = -gap; dy <= gap; ++dy) {
                for (int dx = -gap; dx <= gap; ++dx) {
                    if (inside(y + dy, x + dx)) blocked[at(y + dy, x + dx)] = 1;
                }
            }
        }
    }
};

bool place_blob(Canvas& c, const SynthConfig& cfg, Rng& rng, std::uint32_t id) {
    for (int attempt = 0; attempt < 400; ++attempt) {
        const double a = uniform(rng, cfg.min_radius, cfg.max_radius);
        const double b = a * uniform(rng, 0.6, 1.0);
        const double th = uniform(rng, 0.0, std::numbers::pi);
        const double lo_y = a + 1, hi_y = c.h - a - 2, lo_x = a + 1, hi_x = c.w - a - 2;
        if (hi_y <= lo_y || hi_x <= lo_x) return false;
        const double cy = uniform(rng, lo_y, hi_y), cx = uniform(rng, lo_x, hi_x);
        const double ct = std::cos(th), st = std::sin(th);
        std::vector<std::size_t> pixels;
        bool clear = true;
        const int r = static_cast<int>(std::ceil(a)) + 1;
        for (int y = static_cast<int>(cy) - r; y <= static_cast<int>(cy) + r && clear; ++y) {
            for (int x = static_cast<int>(cx) - r; x <= static_cast<int>(cx) + r; ++x) {
                const double dy = y - cy, dx = x - cx;
                const double u = (dx * ct + dy * st) / a, v = (-dx * st + dy * ct) / b;
                if (u * u + v * v > 1.0) continue;
                if (!c.inside(y, x) || c.blocked[c.at(y, x)]) {
                    clear = false;
                    break;
                }
                pixels.push_back(c.at(y, x));
            }
        }
        if (!clear || pixels.empty()) continue;
        const auto level = static_cast<float>(uniform(rng, cfg.fg_low, cfg.fg_high));
        for (auto p : pixels) {
            c.ids[p] = id;
            c.value[p] = level;
        }
        c.block_around(pixels, cfg.blob_gap);
        return true;
    }
    return false;
}

// Two-segment bent streak, two pixels thick.
void place_distractor(Canvas& c, const SynthConfig& cfg, Rng& rng) {
    for (int attempt = 0; attempt < 50; ++attempt) {
        double y = uniform(rng, 0, c.h), x = uniform(rng, 0, c.w);
        double th = uniform(rng, 0.0, 2 * std::numbers::pi);
        const double len = uniform(rng, 16.0, 32.0);
        const double bend = uniform(rng, -0.6, 0.6);
        std::vector<std::size_t> pixels;
        bool clear = true;
        for (double t = 0; t <= len && clear; t += 0.5) {
            if (t >= len / 2 && t < len / 2 + 0.5) th += bend;
            y += 0.5 * std::sin(th);
            x += 0.5 * std::cos(th);
            const int iy = static_cast<int>(std::floor(y)), ix = static_cast<int>(std::floor(x));
            for (int k = 0; k < 4; ++k) {
                const int py = iy + k / 2, px = ix + k % 2;
                if (!c.inside(py, px)) continue;
                if (c.blocked[c.at(py, px)]) {
                    clear = false;
                    break;
                }
                pixels.push_back(c.at(py, px));
            }
        }
        if (!clear || pixels.empty()) continue;
        const auto level = static_cast<float>(uniform(rng, cfg.fg_low, cfg.fg_high));
        for (auto p : pixels) c.value[p] = level;
        return;
    }
}

SyntheticSample make_image(const SynthConfig& cfg, int index) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(index)};
    Rng rng(seq);
    Canvas c(cfg.height, cfg.width);

    const int n_blobs = std::uniform_int_distribution<int>(cfg.min_blobs, cfg.max_blobs)(rng);
    for (int k = 1; k <= n_blobs; ++k) {
        if (!place_blob(c, cfg, rng, static_cast<std::uint32_t>(k))) {
            throw DataError("synthetic: infeasible packing, placed " + std::to_string(k - 1) + " of " +
                            std::to_string(n_blobs) + " blobs on " + std::to_string(cfg.height) + "x" +
                            std::to_string(cfg.width));
        }
    }

    // smooth shading that stays inside [bg_low, bg_high]
    const double f1 = uniform(rng, 0.5, 2.0) * 2 * std::numbers::pi / cfg.height;
    const double f2 = uniform(rng, 0.5, 2.0) * 2 * std::numbers::pi / cfg.width;
    const double p1 = uniform(rng, 0, 2 * std::numbers::pi), p2 = uniform(rng, 0, 2 * std::numbers::pi);
    for (int y = 0; y < c.h; ++y) {
        for (int x = 0; x < c.w; ++x) {
            if (c.ids[c.at(y, x)]) continue;
            const double s = 0.5 + 0.25 * std::sin(f1 * y + p1) + 0.25 * std::sin(f2 * x + p2);
            c.value[c.at(y, x)] = static_cast<float>(cfg.bg_low + (cfg.bg_high - cfg.bg_low) * s);
        }
    }

    const double mean = cfg.distractor_density * cfg.height * cfg.width / 1e4;
    const int n_distractors = mean > 0 ? std::poisson_distribution<int>(mean)(rng) : 0;
    for (int k = 0; k < n_distractors; ++k) place_distractor(c, cfg, rng);

    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<float> pixels(c.value.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        const double n = cfg.noise_sigma > 0 ? std::clamp(noise(rng), -2.5, 2.5) * cfg.noise_sigma : 0.0;
        const double v = std::clamp(c.value[i] + n, 0.0, 1.0);
        // stored at 16-bit precision so that a written dataset reads back identically
        pixels[i] = static_cast<float>(std::lround(v * 65535.0)) / 65535.f;
    }
    return {ImageGrid(Raster<float>(cfg.height, cfg.width, 1, std::move(pixels))),
            InstanceMap(Raster<std::uint32_t>(cfg.height, cfg.width, 1, std::move(c.ids)))};
}

}  // namespace

std::vector<SyntheticSample> generate_synthetic(const SynthConfig& cfg, int n_images) {
    if (const auto bad = validate(cfg); !bad.empty()) throw DataError("synthetic: invalid config: " + bad.front());
    if (n_images < 0) throw DataError("synthetic: negative image count");
    std::vector<SyntheticSample> out;
    out.reserve(static_cast<std::size_t>(n_images));
    for (int i = 0; i < n_images; ++i) out.push_back(make_image(cfg, i));
    return out;
}

}  // namespace s2l::data
