#pragma once

// Reference implementations used only by tests. They follow the textbook
// formulas directly (plain loops, no blocking, no shared helpers with the
// library) so that agreement with the library is meaningful.

#include "s2l/core/loss_config.hpp"
#include "s2l/core/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

inline double clamped_bce(double target, double p) {
    const double eps = 1e-7;
    p = std::min(std::max(p, eps), 1.0 - eps);
    return -(target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Truth table of the pair target, written out by hand.
inline int pair_target(int a, int b, s2l::PairOp op) {
    static const int kOr[2][2] = {{0, 1}, {1, 1}};
    static const int kAnd[2][2] = {{0, 0}, {0, 1}};
    static const int kXnor[2][2] = {{1, 0}, {0, 1}};
    switch (op) {
        case s2l::PairOp::logical_or: return kOr[a][b];
        case s2l::PairOp::logical_and: return kAnd[a][b];
        case s2l::PairOp::logical_xnor: return kXnor[a][b];
    }
    return -1;
}

// Mean over i in the labelled set of BCE(label_i, t_i); labels are 0/1 or -1
// for "not in the set".
inline double mean_bce(const std::vector<double>& t, const std::vector<int>& labels) {
    double sum = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (labels[i] < 0) continue;
        sum += clamped_bce(labels[i], t[i]);
        ++count;
    }
    return count == 0 ? 0.0 : sum / count;
}

// Double loop over ordered pairs i != j of the cells with label >= 0.
inline double naive_contrastive(const std::vector<std::vector<double>>& z, const std::vector<int>& labels,
                                double tau, s2l::PairOp op) {
    std::vector<std::size_t> cells;
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (labels[i] >= 0) cells.push_back(i);
    }
    double sum = 0.0;
    long pairs = 0;
    for (std::size_t a : cells) {
        for (std::size_t b : cells) {
            if (a == b) continue;
            double dot = 0.0, na = 0.0, nb = 0.0;
            for (std::size_t c = 0; c < z[a].size(); ++c) {
                dot += z[a][c] * z[b][c];
                na += z[a][c] * z[a][c];
                nb += z[b][c] * z[b][c];
            }
            const double cosine = dot / (std::sqrt(na) * std::sqrt(nb));
            sum += clamped_bce(pair_target(labels[a], labels[b], op), sigmoid(cosine / tau));
            ++pairs;
        }
    }
    return sum / static_cast<double>(pairs);
}

// Central differences of f at x, one coordinate at a time.
inline std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                              std::vector<double> x, double h) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f(x);
        x[i] = keep - h;
        const double down = f(x);
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

// ||a - b|| / max(||a||, ||b||), the error measure used by the gradient checks.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double scale = std::max(std::sqrt(na), std::sqrt(nb));
    return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

// Pooled label of one block, written from the definition: mean of the
// non-ignore pseudo labels, scribbles in the block override, conflicting
// scribbles give ignore.
inline s2l::Label pooled_block(const s2l::PseudoLabelMap& pseudo, const s2l::ScribbleMap& scribbles, int by, int bx,
                               int delta, double nu1, double nu2) {
    bool has_fg = false, has_bg = false;
    double ones = 0.0;
    int counted = 0;
    for (int y = by * delta; y < std::min(pseudo.height(), (by + 1) * delta); ++y) {
        for (int x = bx * delta; x < std::min(pseudo.width(), (bx + 1) * delta); ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * pseudo.width() + x;
            if (scribbles.label(i) == s2l::Label::foreground) has_fg = true;
            if (scribbles.label(i) == s2l::Label::background) has_bg = true;
            const s2l::Label l = pseudo(y, x);
            if (l == s2l::Label::ignore) continue;
            ones += l == s2l::Label::foreground ? 1.0 : 0.0;
            ++counted;
        }
    }
    if (has_fg && has_bg) return s2l::Label::ignore;
    if (has_fg) return s2l::Label::foreground;
    if (has_bg) return s2l::Label::background;
    if (counted == 0) return s2l::Label::ignore;
    const double mean = ones / counted;
    // Cases are tried in order, so nu1 == nu2 == mean reads as background.
    if (mean <= nu1) return s2l::Label::background;
    if (mean >= nu2) return s2l::Label::foreground;
    return s2l::Label::ignore;
}

}  // namespace oracle
