#include "s2l/losses/contrastive.hpp"

#include "s2l/losses/bce.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

namespace s2l::losses {

int pair_label(int a, int b, PairOp op) noexcept {
    switch (op) {
        case PairOp::logical_or: return (a | b) & 1;
        case PairOp::logical_and: return a & b & 1;
        case PairOp::logical_xnor: return a == b ? 1 : 0;
    }
    return 0;
}

namespace {

template <typename Real>
using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using RowArray = Eigen::Array<Real, 1, Eigen::Dynamic>;

// Rows of the similarity block per pass, sized so one block stays in cache.
std::size_t block_rows(std::size_t cells) {
    constexpr std::size_t kBlockElements = std::size_t{1} << 22;
    return std::clamp<std::size_t>(kBlockElements / std::max<std::size_t>(cells, 1), 64, 512);
}

struct CellRef {
    std::size_t grid;
    std::size_t cell;
};

template <typename Real>
ContrastiveResult<Real> pair_kernel(std::span<const BasicEmbeddingGrid<Real>> grids, const std::vector<CellRef>& cells,
                                    const std::vector<int>& labels, double tau, PairOp op, bool with_grad) {
    const std::size_t n = cells.size();
    const int dim = grids.front().dim();
    ContrastiveResult<Real> out;
    out.cells = n;
    out.pairs = n * (n - 1);

    RowMatrix<Real> unit(static_cast<Eigen::Index>(n), dim);
    std::vector<Real> norms(n);
    for (std::size_t r = 0; r < n; ++r) {
        const auto z = grids[cells[r].grid][cells[r].cell];
        double sq = 0.0;
        for (int c = 0; c < dim; ++c) sq += static_cast<double>(z[c]) * static_cast<double>(z[c]);
        if (!(sq > 0.0) || !std::isfinite(sq)) {
            throw LossError("contrastive loss: embedding with zero or non-finite norm");
        }
        norms[r] = static_cast<Real>(std::sqrt(sq));
        for (int c = 0; c < dim; ++c) unit(static_cast<Eigen::Index>(r), c) = z[c] / norms[r];
    }

    // Pair targets are one of four rows: y, 1 - y, all ones, all zeros.
    RowArray<Real> y(static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < n; ++r) y[static_cast<Eigen::Index>(r)] = static_cast<Real>(labels[r]);
    const RowArray<Real> not_y = Real(1) - y;
    const RowArray<Real> ones = RowArray<Real>::Ones(static_cast<Eigen::Index>(n));
    const RowArray<Real> zeros = RowArray<Real>::Zero(static_cast<Eigen::Index>(n));
    auto target_row = [&](int label) -> const RowArray<Real>& {
        const int with_one = pair_label(label, 1, op);
        const int with_zero = pair_label(label, 0, op);
        if (with_one && with_zero) return ones;
        if (!with_one && !with_zero) return zeros;
        return with_one ? y : not_y;
    };

    const Real inv_tau = static_cast<Real>(1.0 / tau);
    const Real clamp = static_cast<Real>(kLogitClamp);
    const double pair_scale = 2.0 / static_cast<double>(out.pairs);

    RowMatrix<Real> dunit;
    if (with_grad) dunit = RowMatrix<Real>::Zero(static_cast<Eigen::Index>(n), dim);

    // Only the upper triangle is evaluated; each unordered pair stands for
    // both ordered pairs, which share the same similarity and target.
    CompensatedSum total;
    const std::size_t rows_per_block = block_rows(n);
    RowMatrix<Real> block;
    RowArray<Real> e, sp;
    for (std::size_t r0 = 0; r0 + 1 < n; r0 += rows_per_block) {
        const auto rows = static_cast<Eigen::Index>(std::min(rows_per_block, n - r0));
        const auto cols = static_cast<Eigen::Index>(n - r0);
        const auto start = static_cast<Eigen::Index>(r0);
        block.noalias() = unit.middleRows(start, rows) * unit.bottomRows(cols).transpose();
        for (Eigen::Index r = 0; r < rows; ++r) {
            // Columns 0..r of this row are at or below the diagonal.
            const Eigen::Index first = r + 1;
            const Eigen::Index len = cols - first;
            auto srow = block.row(r);
            if (len <= 0) {
                srow.setZero();
                continue;
            }
            const Real* t = target_row(labels[r0 + static_cast<std::size_t>(r)]).data() + start + first;
            Real* x = srow.data() + first;
            for (Eigen::Index j = 0; j < len; ++j) x[j] = std::min(std::max(x[j] * inv_tau, -clamp), clamp);
            auto xs = srow.segment(first, len).array();
            e.resize(len);
            sp.resize(len);
            e = (-xs.abs()).exp();
            sp = e.log1p();
            // softplus(x) - t * x == BCE(t, sigmoid(x))
            sp += xs.max(Real(0)) - Eigen::Map<const RowArray<Real>>(t, len) * xs;
            total.add(static_cast<double>(sp.sum()));
            if (with_grad) {
                const Real* ep = e.data();
                for (Eigen::Index j = 0; j < len; ++j) {
                    const Real v = x[j];
                    const Real q = Real(1) / (Real(1) + ep[j]);
                    const Real lo = ep[j] * q;
                    const Real sig = v >= Real(0) ? q : lo;
                    const Real active = std::fabs(v) < clamp ? inv_tau : Real(0);
                    x[j] = (sig - t[j]) * active;
                }
                srow.head(first).setZero();
            }
        }
        if (with_grad) {
            const Real w = static_cast<Real>(pair_scale);
            dunit.middleRows(start, rows).noalias() += w * (block * unit.bottomRows(cols));
            dunit.bottomRows(cols).noalias() += w * (block.transpose() * unit.middleRows(start, rows));
        }
    }
    out.value = total.value() * pair_scale;

    if (with_grad) {
        out.grad.resize(grids.size());
        for (std::size_t g = 0; g < grids.size(); ++g) {
            out.grad[g].assign(grids[g].size() * static_cast<std::size_t>(dim), Real(0));
        }
        // Back through z / ||z||.
        for (std::size_t r = 0; r < n; ++r) {
            const auto row = static_cast<Eigen::Index>(r);
            const Real proj = unit.row(row).dot(dunit.row(row));
            Real* dst = out.grad[cells[r].grid].data() + cells[r].cell * static_cast<std::size_t>(dim);
            for (int c = 0; c < dim; ++c) {
                dst[c] = (dunit(row, c) - unit(row, c) * proj) / norms[r];
            }
        }
    }
    return out;
}

}  // namespace

template <typename Real>
ContrastiveResult<Real> contrastive_loss_batch(std::span<const BasicEmbeddingGrid<Real>> embeddings,
                                               std::span<const DownscaledLabelMap> labels, double tau, PairOp op,
                                               const PixelSample* sample, bool with_grad) {
    if (!(tau > 0.0)) throw LossError("contrastive loss: temperature must be positive");
    if (embeddings.size() != labels.size()) throw LossError("contrastive loss: batch sizes differ");
    if (embeddings.empty()) throw DegeneratePairSet("degenerate pair set");
    for (std::size_t g = 0; g < embeddings.size(); ++g) {
        if (embeddings[g].height() != labels[g].height() || embeddings[g].width() != labels[g].width()) {
            throw LossError("contrastive loss: embedding grid and label grid shapes differ");
        }
        if (embeddings[g].dim() != embeddings.front().dim()) {
            throw LossError("contrastive loss: embedding dims differ across the batch");
        }
    }

    std::vector<std::size_t> offsets(embeddings.size() + 1, 0);
    for (std::size_t g = 0; g < embeddings.size(); ++g) offsets[g + 1] = offsets[g] + embeddings[g].size();

    std::vector<CellRef> cells;
    std::vector<int> cell_labels;
    auto add_cell = [&](std::size_t global) {
        const auto g = static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), global) -
                                                offsets.begin()) - 1;
        const std::size_t local = global - offsets[g];
        const Label l = labels[g][local];
        if (!is_confident(l)) throw LossError("contrastive loss: sample contains an ignore cell");
        cells.push_back({g, local});
        cell_labels.push_back(l == Label::foreground ? 1 : 0);
    };

    if (sample != nullptr) {
        const auto chosen = sample->combined();
        for (std::size_t k = 0; k < chosen.size(); ++k) {
            if (chosen[k] >= offsets.back()) throw LossError("contrastive loss: sample index outside the grid");
            if (k > 0 && chosen[k] == chosen[k - 1]) throw LossError("contrastive loss: duplicate sample index");
            add_cell(chosen[k]);
        }
    } else {
        for (std::size_t g = 0; g < embeddings.size(); ++g) {
            for (std::size_t i = 0; i < labels[g].size(); ++i) {
                if (is_confident(labels[g][i])) add_cell(offsets[g] + i);
            }
        }
    }
    if (cells.size() < 2) throw DegeneratePairSet("degenerate pair set");
    return pair_kernel<Real>(embeddings, cells, cell_labels, tau, op, with_grad);
}

double contrastive_loss(const EmbeddingGrid& embeddings, const DownscaledLabelMap& labels, double tau, PairOp op,
                        const std::optional<PixelSample>& sample) {
    return contrastive_loss_batch<double>({&embeddings, 1}, {&labels, 1}, tau, op, sample ? &*sample : nullptr,
                                          false)
        .value;
}

template ContrastiveResult<float> contrastive_loss_batch<float>(std::span<const BasicEmbeddingGrid<float>>,
                                                                std::span<const DownscaledLabelMap>, double, PairOp,
                                                                const PixelSample*, bool);
template ContrastiveResult<double> contrastive_loss_batch<double>(std::span<const BasicEmbeddingGrid<double>>,
                                                                  std::span<const DownscaledLabelMap>, double,
                                                                  PairOp, const PixelSample*, bool);

}  // namespace s2l::losses
