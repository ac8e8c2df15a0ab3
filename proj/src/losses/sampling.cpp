#include "s2l/losses/sampling.hpp"

#include "s2l/losses/bce.hpp"

#include <algorithm>
#include <iterator>
#include <random>

namespace s2l::losses {

std::vector<std::size_t> PixelSample::combined() const {
    std::vector<std::size_t> out;
    out.reserve(size());
    std::merge(foreground.begin(), foreground.end(), background.begin(), background.end(), std::back_inserter(out));
    return out;
}

PixelSample sample_pixels(std::span<const DownscaledLabelMap> labels, std::size_t cap, std::uint64_t seed) {
    if (cap < 1) throw LossError("sample cap must be at least 1");
    std::vector<std::size_t> fg;
    std::vector<std::size_t> bg;
    std::size_t offset = 0;
    for (const auto& map : labels) {
        for (std::size_t i = 0; i < map.size(); ++i) {
            if (map[i] == Label::foreground) fg.push_back(offset + i);
            else if (map[i] == Label::background) bg.push_back(offset + i);
        }
        offset += map.size();
    }
    if (fg.empty() && bg.empty()) throw DegeneratePairSet("no confident pixels at this scale");

    // std::sample keeps the relative order, so the draws stay ascending.
    std::mt19937_64 rng(seed);
    PixelSample out;
    out.foreground.reserve(std::min(cap, fg.size()));
    out.background.reserve(std::min(cap, bg.size()));
    std::sample(fg.begin(), fg.end(), std::back_inserter(out.foreground), cap, rng);
    std::sample(bg.begin(), bg.end(), std::back_inserter(out.background), cap, rng);
    return out;
}

PixelSample sample_pixels(const DownscaledLabelMap& labels, std::size_t cap, std::uint64_t seed) {
    return sample_pixels(std::span<const DownscaledLabelMap>(&labels, 1), cap, seed);
}

}  // namespace s2l::losses
