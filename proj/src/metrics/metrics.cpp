#include "s2l/metrics/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <ostream>

namespace s2l::metrics {

namespace {

void check_shape(int h1, int w1, int h2, int w2, const char* what) {
    if (h1 != h2 || w1 != w2) {
        throw MetricError(fmt::format("{}: shapes {}x{} and {}x{} differ", what, h1, w1, h2, w2));
    }
}

}  // namespace

InstanceMap::InstanceMap(Raster<std::uint32_t> ids) : ids_(std::move(ids)) {
    std::uint32_t top = 0;
    for (auto v : ids_.values()) top = std::max(top, v);
    std::vector<bool> seen(top + 1, false);
    for (auto v : ids_.values()) seen[v] = true;
    for (std::uint32_t k = 1; k <= top; ++k) {
        if (!seen[k]) throw MetricError(fmt::format("instance map: id {} missing below max id {}", k, top));
    }
    count_ = top;
}

BinaryMask InstanceMap::foreground() const {
    BinaryMask m(height(), width(), 1);
    for (std::size_t i = 0; i < size(); ++i) m[i] = ids_[i] != 0;
    return m;
}

std::vector<std::string> validate(const InstanceMap& map) {
    std::vector<std::string> out;
    // contiguity is enforced on construction; connectivity is checked by
    // relabelling each instance on its own
    const auto& ids = map.ids();
    std::vector<int> components(map.count() + 1, 0);
    Raster<std::uint8_t> visited(map.height(), map.width(), 1, 0);
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < map.size(); ++s) {
        if (ids[s] == 0 || visited[s]) continue;
        ++components[ids[s]];
        stack.push_back(s);
        visited[s] = 1;
        while (!stack.empty()) {
            const std::size_t i = stack.back();
            stack.pop_back();
            const int y = static_cast<int>(i / map.width()), x = static_cast<int>(i % map.width());
            const int ny[] = {y - 1, y + 1, y, y}, nx[] = {x, x, x - 1, x + 1};
            for (int k = 0; k < 4; ++k) {
                if (!ids.contains(ny[k], nx[k])) continue;
                const std::size_t j = ids.index(ny[k], nx[k]);
                if (!visited[j] && ids[j] == ids[i]) visited[j] = 1, stack.push_back(j);
            }
        }
    }
    if (std::any_of(components.begin() + 1, components.end(), [](int c) { return c != 1; })) {
        out.emplace_back("instances 4-connected");
    }
    return out;
}

double iou(const BinaryMask& pred, const BinaryMask& gt) {
    check_shape(pred.height(), pred.width(), gt.height(), gt.width(), "iou");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.cell_count(); ++i) {
        const bool p = pred[i] != 0, g = gt[i] != 0;
        inter += p && g;
        uni += p || g;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

InstanceMap extract_instances(const BinaryMask& mask) {
    Raster<std::uint32_t> ids(mask.height(), mask.width(), 1, 0);
    std::uint32_t next = 0;
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < mask.cell_count(); ++s) {
        if (!mask[s] || ids[s]) continue;
        ids[s] = ++next;
        stack.push_back(s);
        while (!stack.empty()) {
            const std::size_t i = stack.back();
            stack.pop_back();
            const int y = static_cast<int>(i / mask.width()), x = static_cast<int>(i % mask.width());
            const int ny[] = {y - 1, y + 1, y, y}, nx[] = {x, x, x - 1, x + 1};
            for (int k = 0; k < 4; ++k) {
                if (!mask.contains(ny[k], nx[k])) continue;
                const std::size_t j = mask.index(ny[k], nx[k]);
                if (mask[j] && !ids[j]) ids[j] = next, stack.push_back(j);
            }
        }
    }
    return InstanceMap(std::move(ids));
}

double mdice(const InstanceMap& pred, const InstanceMap& gt) {
    check_shape(pred.height(), pred.width(), gt.height(), gt.width(), "mdice");
    if (gt.count() == 0) throw MetricError("mdice: ground truth has no instances");
    std::vector<std::size_t> gt_area(gt.count() + 1, 0), pred_area(pred.count() + 1, 0);
    // sparse overlap counts keyed by (gt, pred)
    std::vector<std::vector<std::pair<std::uint32_t, std::size_t>>> overlap(gt.count() + 1);
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const auto g = gt[i], p = pred[i];
        ++gt_area[g];
        ++pred_area[p];
        if (g == 0 || p == 0) continue;
        auto& row = overlap[g];
        auto it = std::find_if(row.begin(), row.end(), [p](const auto& e) { return e.first == p; });
        if (it == row.end()) row.emplace_back(p, 1);
        else ++it->second;
    }
    double sum = 0.0;
    for (std::uint32_t g = 1; g <= gt.count(); ++g) {
        double best = 0.0;
        for (const auto& [p, n] : overlap[g]) {
            best = std::max(best, 2.0 * static_cast<double>(n) / static_cast<double>(pred_area[p] + gt_area[g]));
        }
        sum += best;
    }
    return sum / gt.count();
}

BinaryMask binarize(const PredictionGrid& pred, double threshold) {
    BinaryMask m(pred.height(), pred.width(), 1);
    for (std::size_t i = 0; i < pred.size(); ++i) m[i] = pred[i] >= threshold;
    return m;
}

ImageScore score_image(const std::string& id, const PredictionGrid& pred, const InstanceMap& gt, double threshold) {
    const auto mask = binarize(pred, threshold);
    const auto inst = extract_instances(mask);
    ImageScore s;
    s.image_id = id;
    s.iou = iou(mask, gt.foreground());
    s.mdice = mdice(inst, gt);
    s.n_gt_instances = gt.count();
    s.n_pred_instances = inst.count();
    return s;
}

ImageScore aggregate(const std::vector<ImageScore>& rows, const std::string& id) {
    ImageScore a;
    a.image_id = id;
    for (const auto& r : rows) {
        a.iou += r.iou;
        a.mdice += r.mdice;
        a.n_gt_instances += r.n_gt_instances;
        a.n_pred_instances += r.n_pred_instances;
    }
    if (!rows.empty()) {
        a.iou /= static_cast<double>(rows.size());
        a.mdice /= static_cast<double>(rows.size());
    }
    return a;
}

void write_csv(std::ostream& out, const std::vector<ImageScore>& rows) {
    const auto line = [&](const ImageScore& r) {
        out << fmt::format("{},{:.6f},{:.6f},{},{}\n", r.image_id, r.iou, r.mdice, r.n_gt_instances,
                           r.n_pred_instances);
    };
    out << "image_id,iou,mdice,n_gt_instances,n_pred_instances\n";
    for (const auto& r : rows) line(r);
    line(aggregate(rows));
}

}  // namespace s2l::metrics
