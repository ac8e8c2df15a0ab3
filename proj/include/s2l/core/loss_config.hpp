#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace s2l {

// How the binary target of an embedding pair is formed from the two cell labels.
enum class PairOp { logical_or, logical_and, logical_xnor };

std::string_view to_string(PairOp op) noexcept;
std::optional<PairOp> parse_pair_op(std::string_view name) noexcept;

// One contrastive regularizer: embeddings from decoder stage `tap`, labels
// pooled at factor `delta`, temperature `tau`, weight `weight` (lambda).
struct ScaleSpec {
    int tap = 0;
    int delta = 1;
    double tau = 0.3;
    double weight = 0.5;

    friend bool operator==(const ScaleSpec&, const ScaleSpec&) = default;
};

// Full-resolution (delta 1) and quarter-resolution (delta 4) regularizers
// for a decoder with `stage_count` stages.
std::vector<ScaleSpec> default_scales(int stage_count = 5);

struct LossConfig {
    double alpha = 0.5;
    double nu1 = 0.0;
    double nu2 = 1.0;
    std::vector<ScaleSpec> scales = default_scales();
    std::size_t sample_cap = 6000;
    PairOp pair_op = PairOp::logical_or;

    friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

}  // namespace s2l
