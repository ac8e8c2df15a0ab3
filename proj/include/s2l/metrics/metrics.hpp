#pragma once

#include "s2l/core/raster.hpp"
#include "s2l/core/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace s2l::metrics {

class MetricError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

using BinaryMask = Raster<std::uint8_t>;

// 0 = background, k >= 1 = instance k; ids contiguous 1..K.
class InstanceMap {
public:
    InstanceMap() = default;
    // Throws if ids are not contiguous.
    explicit InstanceMap(Raster<std::uint32_t> ids);

    int height() const noexcept { return ids_.height(); }
    int width() const noexcept { return ids_.width(); }
    std::size_t size() const noexcept { return ids_.cell_count(); }
    std::uint32_t count() const noexcept { return count_; }
    std::uint32_t operator[](std::size_t i) const noexcept { return ids_[i]; }
    std::uint32_t operator()(int y, int x) const noexcept { return ids_(y, x); }
    const Raster<std::uint32_t>& ids() const noexcept { return ids_; }
    BinaryMask foreground() const;

    friend bool operator==(const InstanceMap&, const InstanceMap&) = default;

private:
    Raster<std::uint32_t> ids_;
    std::uint32_t count_ = 0;
};

// Violated invariant names: "ids contiguous", "instances 4-connected".
std::vector<std::string> validate(const InstanceMap& map);

// |P and G| / |P or G|, 1 when both are empty.
double iou(const BinaryMask& pred, const BinaryMask& gt);

// 4-connected components, numbered in row-major order of first pixel.
InstanceMap extract_instances(const BinaryMask& mask);

// Mean over GT instances of the best Dice with any predicted instance.
double mdice(const InstanceMap& pred, const InstanceMap& gt);

BinaryMask binarize(const PredictionGrid& pred, double threshold = 0.5);

struct ImageScore {
    std::string image_id;
    double iou = 0.0;
    double mdice = 0.0;
    std::uint32_t n_gt_instances = 0;
    std::uint32_t n_pred_instances = 0;
};

ImageScore score_image(const std::string& id, const PredictionGrid& pred, const InstanceMap& gt,
                       double threshold = 0.5);

// Unweighted means of the per-image rows; instance counts are summed.
ImageScore aggregate(const std::vector<ImageScore>& rows, const std::string& id = "mean");

// Header, one row per image, then the aggregate row.
void write_csv(std::ostream& out, const std::vector<ImageScore>& rows);

}  // namespace s2l::metrics
