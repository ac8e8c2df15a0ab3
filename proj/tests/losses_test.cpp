#include "s2l/losses/bce.hpp"
#include "s2l/losses/contrastive.hpp"
#include "s2l/losses/pixel_losses.hpp"
#include "s2l/losses/sampling.hpp"
#include "s2l/losses/total.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

using namespace s2l;
using namespace s2l::losses;

namespace {

std::vector<int> scribble_ints(const ScribbleMap& s) {
    std::vector<int> out(s.size(), -1);
    for (auto i : s.foreground()) out[i] = 1;
    for (auto i : s.background()) out[i] = 0;
    return out;
}

std::vector<int> pseudo_ints(const PseudoLabelMap& p) {
    std::vector<int> out(p.size(), -1);
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] != Label::ignore) out[i] = p[i] == Label::foreground ? 1 : 0;
    }
    return out;
}

std::vector<double> values_of(const PredictionGrid& p) { return {p.values().begin(), p.values().end()}; }

EmbeddingGrid grid_from(int h, int w, int dim, const std::vector<double>& flat) {
    return EmbeddingGrid(Raster<double>(h, w, dim, flat));
}

DownscaledLabelMap pooled_from(int h, int w, std::vector<Label> labels) {
    return DownscaledLabelMap(Raster<Label>(h, w, 1, std::move(labels)), 1, 0.0, 1.0, h, w);
}

}  // namespace

TEST_CASE("scribble loss worked examples") {
    SUBCASE("perfect prediction leaves only the clamp residue") {
        const std::size_t fg[] = {0, 2};
        const std::size_t bg[] = {1};
        ScribbleMap s(1, 3, fg, bg);
        PredictionGrid pred(1, 3, {1.0, 0.0, 1.0});
        const double v = scribble_loss(pred, s);
        CHECK(v == doctest::Approx(std::log(1.0 / (1.0 - kProbEpsilon))).epsilon(1e-9));
        CHECK(v < 1e-6);
    }
    SUBCASE("single foreground scribble at t = 0.5") {
        const std::size_t fg[] = {1};
        ScribbleMap s(1, 2, fg, {});
        PredictionGrid pred(1, 2, {0.9, 0.5});
        CHECK(scribble_loss(pred, s) == doctest::Approx(0.6931471805599453).epsilon(1e-12));
    }
    SUBCASE("three scribbled pixels") {
        const std::size_t fg[] = {0, 1};
        const std::size_t bg[] = {2};
        ScribbleMap s(1, 4, fg, bg);
        PredictionGrid pred(1, 4, {0.9, 0.8, 0.3, 0.99});
        // (-ln 0.9 - ln 0.8 - ln 0.7) / 3, evaluated independently.
        CHECK(scribble_loss(pred, s) == doctest::Approx(0.22839300363692283).epsilon(1e-12));
    }
    SUBCASE("empty omega is an error") {
        ScribbleMap s(2, 2, {}, {});
        PredictionGrid pred(2, 2, std::vector<double>(4, 0.5));
        CHECK_THROWS_WITH_AS(scribble_loss(pred, s), "no scribbled pixels", LossError);
    }
    SUBCASE("shape mismatch") {
        const std::size_t fg[] = {0};
        ScribbleMap s(2, 2, fg, {});
        PredictionGrid pred(1, 4, std::vector<double>(4, 0.5));
        CHECK_THROWS_AS(scribble_loss(pred, s), LossError);
    }
}

TEST_CASE("pseudo loss worked examples") {
    PredictionGrid pred(2, 2, {0.25, 0.6, 0.7, 0.1});
    SUBCASE("empty confident set gives zero") {
        PseudoLabelMap p(Raster<Label>(2, 2, 1, Label::ignore));
        CHECK(pseudo_loss(pred, p) == 0.0);
    }
    SUBCASE("one pseudo-foreground pixel") {
        Raster<Label> r(2, 2, 1, Label::ignore);
        r[0] = Label::foreground;
        CHECK(pseudo_loss(pred, PseudoLabelMap(r)) == doctest::Approx(1.3862943611198906).epsilon(1e-12));
    }
    SUBCASE("mixed four-pixel set matches the double-loop oracle") {
        PseudoLabelMap p(Raster<Label>(2, 2, 1, {Label::foreground, Label::background, Label::foreground,
                                                 Label::background}));
        const double expected = oracle::mean_bce(values_of(pred), pseudo_ints(p));
        CHECK(std::abs(pseudo_loss(pred, p) - expected) <= 1e-9);
    }
}

TEST_CASE("s2l loss is the weighted sum of its parts") {
    fixture::Rng rng(3);
    const auto pred = fixture::random_prediction(rng, 8, 8);
    const auto s = fixture::random_scribbles(rng, 8, 8);
    const auto p = fixture::random_pseudo(rng, 8, 8);
    CHECK(s2l_loss(pred, s, p, 0.0) == scribble_loss(pred, s));
    const double sep = oracle::mean_bce(values_of(pred), scribble_ints(s)) +
                       0.5 * oracle::mean_bce(values_of(pred), pseudo_ints(p));
    CHECK(std::abs(s2l_loss(pred, s, p, 0.5) - sep) <= 1e-12);
}

TEST_CASE("pair label truth table") {
    CHECK(pair_label(1, 0, PairOp::logical_or) == 1);
    CHECK(pair_label(0, 0, PairOp::logical_or) == 0);
    CHECK(pair_label(0, 0, PairOp::logical_xnor) == 1);
    for (auto op : {PairOp::logical_or, PairOp::logical_and, PairOp::logical_xnor}) {
        for (int a = 0; a < 2; ++a) {
            for (int b = 0; b < 2; ++b) CHECK(pair_label(a, b, op) == oracle::pair_target(a, b, op));
        }
    }
}

TEST_CASE("pixel sampling") {
    SUBCASE("cap not binding returns every confident cell") {
        std::vector<Label> l(25, Label::ignore);
        for (int i = 0; i < 10; ++i) l[i] = Label::foreground;
        for (int i = 10; i < 20; ++i) l[i] = Label::background;
        const auto m = pooled_from(5, 5, l);
        const auto s = sample_pixels(m, 6000, 1);
        CHECK(s.foreground.size() == 10);
        CHECK(s.background.size() == 10);
        CHECK(s.size() == 20);
    }
    SUBCASE("cap binds at 6000 distinct indices") {
        std::vector<Label> l(100 * 101, Label::background);
        std::fill(l.begin(), l.begin() + 10000, Label::foreground);
        const auto m = pooled_from(100, 101, l);
        const auto s = sample_pixels(m, 6000, 42);
        CHECK(s.foreground.size() == 6000);
        CHECK(std::set<std::size_t>(s.foreground.begin(), s.foreground.end()).size() == 6000);
        CHECK(std::all_of(s.foreground.begin(), s.foreground.end(), [](auto i) { return i < 10000; }));
        CHECK(s.background.size() == 100);
    }
    SUBCASE("fixed seed is reproducible, other seeds differ") {
        fixture::Rng rng(5);
        const auto m = fixture::random_pooled(rng, 40, 40, 0.2);
        const auto a = sample_pixels(m, 100, 9);
        const auto b = sample_pixels(m, 100, 9);
        const auto c = sample_pixels(m, 100, 10);
        CHECK(a.foreground == b.foreground);
        CHECK(a.background == b.background);
        CHECK(a.foreground != c.foreground);
    }
    SUBCASE("ignore cells are never drawn") {
        fixture::Rng rng(6);
        const auto m = fixture::random_pooled(rng, 30, 30, 0.5);
        const auto s = sample_pixels(m, 50, 1);
        for (auto i : s.combined()) CHECK(m[i] != Label::ignore);
        for (auto i : s.foreground) CHECK(m[i] == Label::foreground);
        for (auto i : s.background) CHECK(m[i] == Label::background);
    }
    SUBCASE("no confident cell is an error") {
        const auto m = pooled_from(2, 2, std::vector<Label>(4, Label::ignore));
        CHECK_THROWS_WITH_AS(sample_pixels(m, 10, 0), "no confident pixels at this scale", DegeneratePairSet);
    }
    SUBCASE("indices across a batch address the concatenation") {
        const auto a = pooled_from(1, 3, {Label::ignore, Label::foreground, Label::ignore});
        const auto b = pooled_from(1, 2, {Label::background, Label::foreground});
        const DownscaledLabelMap maps[] = {a, b};
        const auto s = sample_pixels(maps, 10, 0);
        CHECK(s.foreground == std::vector<std::size_t>{1, 4});
        CHECK(s.background == std::vector<std::size_t>{3});
    }
}

TEST_CASE("contrastive loss worked examples") {
    SUBCASE("identical unit embeddings, both foreground") {
        const auto z = grid_from(1, 2, 2, {1.0, 0.0, 1.0, 0.0});
        const auto m = pooled_from(1, 2, {Label::foreground, Label::foreground});
        // -ln(sigmoid(1))
        CHECK(contrastive_loss(z, m, 1.0, PairOp::logical_or) == doctest::Approx(0.3132616875182228).epsilon(1e-12));
    }
    SUBCASE("orthogonal embeddings, foreground and background") {
        const auto z = grid_from(1, 2, 2, {1.0, 0.0, 0.0, 1.0});
        const auto m = pooled_from(1, 2, {Label::foreground, Label::background});
        CHECK(contrastive_loss(z, m, 1.0, PairOp::logical_or) == doctest::Approx(0.6931471805599453).epsilon(1e-12));
    }
    SUBCASE("full-population sample equals exhaustive evaluation") {
        fixture::Rng rng(17);
        for (int trial = 0; trial < 10; ++trial) {
            const auto z = fixture::random_embeddings(rng, 8, 8, 5);
            const auto m = fixture::random_pooled(rng, 8, 8);
            const auto sample = sample_pixels(m, 1000, static_cast<std::uint64_t>(trial));
            for (auto op : {PairOp::logical_or, PairOp::logical_and, PairOp::logical_xnor}) {
                CHECK(std::abs(contrastive_loss(z, m, 0.3, op, sample) - contrastive_loss(z, m, 0.3, op)) <= 1e-9);
            }
        }
    }
    SUBCASE("matches the naive double loop") {
        fixture::Rng rng(23);
        for (int trial = 0; trial < 10; ++trial) {
            const auto z = fixture::random_embeddings(rng, 8, 8, 4);
            const auto m = fixture::random_pooled(rng, 8, 8);
            for (double tau : {0.1, 0.3, 1.0}) {
                for (auto op : {PairOp::logical_or, PairOp::logical_and, PairOp::logical_xnor}) {
                    const double expected =
                        oracle::naive_contrastive(fixture::cell_vectors(z), fixture::label_ints(m), tau, op);
                    CHECK(std::abs(contrastive_loss(z, m, tau, op) - expected) <= 1e-9);
                }
            }
        }
    }
    SUBCASE("degenerate pair sets and bad inputs") {
        const auto z = grid_from(1, 2, 1, {1.0, 2.0});
        const auto one = pooled_from(1, 2, {Label::foreground, Label::ignore});
        CHECK_THROWS_WITH_AS(contrastive_loss(z, one, 1.0, PairOp::logical_or), "degenerate pair set",
                             DegeneratePairSet);
        const auto both = pooled_from(1, 2, {Label::foreground, Label::background});
        const auto zero = grid_from(1, 2, 1, {0.0, 2.0});
        CHECK_THROWS_AS(contrastive_loss(zero, both, 1.0, PairOp::logical_or), LossError);
        CHECK_THROWS_AS(contrastive_loss(z, both, 0.0, PairOp::logical_or), LossError);
        PixelSample bad;
        bad.foreground = {1};
        bad.background = {0};
        CHECK_THROWS_AS(contrastive_loss(z, one, 1.0, PairOp::logical_or, bad), LossError);
    }
}

TEST_CASE("contrastive loss properties") {
    fixture::Rng rng(31);
    std::uniform_real_distribution<double> scale(0.1, 10.0);
    for (int trial = 0; trial < 20; ++trial) {
        const auto z = fixture::random_embeddings(rng, 6, 7, 3);
        const auto m = fixture::random_pooled(rng, 6, 7);
        for (auto op : {PairOp::logical_or, PairOp::logical_and, PairOp::logical_xnor}) {
            const double base = contrastive_loss(z, m, 0.3, op);
            CHECK(base >= 0.0);

            // positive rescaling of any embedding
            Raster<double> r = z.embeddings();
            for (std::size_t i = 0; i < r.cell_count(); ++i) {
                const double s = scale(rng);
                for (auto& v : r.cell(i)) v *= s;
            }
            CHECK(std::abs(contrastive_loss(EmbeddingGrid(r), m, 0.3, op) - base) < 1e-9);

            // permuting the cell enumeration (embeddings and labels together)
            std::vector<std::size_t> perm(z.size());
            std::iota(perm.begin(), perm.end(), 0);
            std::shuffle(perm.begin(), perm.end(), rng);
            Raster<double> pz(z.height(), z.width(), z.dim());
            Raster<Label> pl(m.height(), m.width(), 1);
            for (std::size_t i = 0; i < perm.size(); ++i) {
                std::copy(z[perm[i]].begin(), z[perm[i]].end(), pz.cell(i).begin());
                pl[i] = m[perm[i]];
            }
            const DownscaledLabelMap pm(pl, 1, 0.0, 1.0, m.height(), m.width());
            CHECK(std::abs(contrastive_loss(EmbeddingGrid(pz), pm, 0.3, op) - base) < 1e-9);
        }
    }
}

TEST_CASE("temperature monotonicity on a mismatched pair") {
    // target 0 (xnor of fg/bg), cosine > 0: loss grows as tau shrinks
    fixture::Rng rng(37);
    std::uniform_real_distribution<double> angle(0.05, 1.5);
    const auto m = pooled_from(1, 2, {Label::foreground, Label::background});
    for (int trial = 0; trial < 50; ++trial) {
        const double a = angle(rng);
        const auto z = grid_from(1, 2, 2, {1.0, 0.0, std::cos(a), std::sin(a)});
        double previous = 0.0;
        for (double tau : {2.0, 1.0, 0.5, 0.3, 0.2, 0.1, 0.05}) {
            const double v = contrastive_loss(z, m, tau, PairOp::logical_xnor);
            CHECK(v >= previous);
            previous = v;
        }
    }
}

TEST_CASE("gradient checks against central differences") {
    fixture::Rng rng(41);
    const double h = 1e-4;
    SUBCASE("scribble and pseudo losses") {
        for (int trial = 0; trial < 5; ++trial) {
            const auto pred = fixture::random_prediction(rng, 8, 8);
            const auto s = fixture::random_scribbles(rng, 8, 8);
            const auto p = fixture::random_pseudo(rng, 8, 8);
            const auto ls = scribble_loss_batch({&pred, 1}, {&s, 1}, true);
            const auto fd_s = oracle::central_difference(
                [&](const std::vector<double>& t) { return scribble_loss(PredictionGrid(8, 8, t), s); },
                values_of(pred), h);
            CHECK(oracle::relative_error(ls.grad[0], fd_s) <= 1e-4);

            const auto lp = pseudo_loss_batch({&pred, 1}, {&p, 1}, true);
            const auto fd_p = oracle::central_difference(
                [&](const std::vector<double>& t) { return pseudo_loss(PredictionGrid(8, 8, t), p); },
                values_of(pred), h);
            CHECK(oracle::relative_error(lp.grad[0], fd_p) <= 1e-4);
        }
    }
    SUBCASE("contrastive loss, every pair op and temperature") {
        for (double tau : {0.1, 0.3, 1.0}) {
            for (auto op : {PairOp::logical_or, PairOp::logical_and, PairOp::logical_xnor}) {
                const auto z = fixture::random_embeddings(rng, 8, 8, 4);
                const auto m = fixture::random_pooled(rng, 8, 8);
                const auto r = contrastive_loss_batch<double>({&z, 1}, {&m, 1}, tau, op, nullptr, true);
                const std::vector<double> flat(z.embeddings().values().begin(), z.embeddings().values().end());
                const auto fd = oracle::central_difference(
                    [&](const std::vector<double>& v) { return contrastive_loss(grid_from(8, 8, 4, v), m, tau, op); },
                    flat, h);
                const double err = oracle::relative_error(r.grad[0], fd);
                INFO("tau=" << tau << " op=" << to_string(op) << " err=" << err);
                CHECK(err <= 1e-4);
            }
        }
    }
}

TEST_CASE("single-precision kernel tracks the double kernel") {
    fixture::Rng rng(43);
    const auto z = fixture::random_embeddings(rng, 16, 16, 8);
    const auto m = fixture::random_pooled(rng, 16, 16);
    Raster<float> zf(16, 16, 8);
    for (std::size_t i = 0; i < zf.values().size(); ++i) zf[i] = static_cast<float>(z.embeddings()[i]);
    const BasicEmbeddingGrid<float> gf(zf);
    const auto d = contrastive_loss_batch<double>({&z, 1}, {&m, 1}, 0.1, PairOp::logical_or, nullptr, true);
    const auto f = contrastive_loss_batch<float>({&gf, 1}, {&m, 1}, 0.1, PairOp::logical_or, nullptr, true);
    CHECK(f.value == doctest::Approx(d.value).epsilon(1e-5));
    std::vector<double> fg(f.grad[0].begin(), f.grad[0].end());
    CHECK(oracle::relative_error(fg, d.grad[0]) <= 1e-4);
}

TEST_CASE("total loss") {
    fixture::Rng rng(47);
    const auto pred = fixture::random_prediction(rng, 8, 8);
    const auto s = fixture::random_scribbles(rng, 8, 8);
    const auto p = fixture::random_pseudo(rng, 8, 8);
    const EmbeddingGrid taps[] = {fixture::random_embeddings(rng, 8, 8, 4), fixture::random_embeddings(rng, 2, 2, 4)};
    const DownscaledLabelMap pooled[] = {
        fixture::random_pooled(rng, 8, 8),
        DownscaledLabelMap(Raster<Label>(2, 2, 1, {Label::foreground, Label::background, Label::background,
                                                   Label::ignore}),
                           4, 0.0, 1.0, 8, 8)};

    SUBCASE("regularizers disabled reduce to the s2l loss") {
        LossConfig cfg;
        cfg.scales[0].weight = 0.0;
        cfg.scales[1].weight = 0.0;
        CHECK(total_loss(pred, s, p, taps, pooled, cfg).total == s2l_loss(pred, s, p, cfg.alpha));
    }
    SUBCASE("defaults equal the hand-assembled weighted sum") {
        const LossConfig cfg;
        const auto b = total_loss(pred, s, p, taps, pooled, cfg);
        const double expected =
            oracle::mean_bce(values_of(pred), scribble_ints(s)) +
            0.5 * oracle::mean_bce(values_of(pred), pseudo_ints(p)) +
            0.5 * oracle::naive_contrastive(fixture::cell_vectors(taps[0]), fixture::label_ints(pooled[0]), 0.3,
                                            PairOp::logical_or) +
            10.0 * oracle::naive_contrastive(fixture::cell_vectors(taps[1]), fixture::label_ints(pooled[1]), 0.1,
                                             PairOp::logical_or);
        CHECK(std::abs(b.total - expected) <= 1e-9);
        REQUIRE(b.contrastive.size() == 2);
        CHECK(std::abs(b.total - (b.scribble + 0.5 * b.pseudo + 0.5 * *b.contrastive[0] +
                                  10.0 * *b.contrastive[1])) <= 1e-12);
    }
    SUBCASE("single scale") {
        LossConfig cfg;
        cfg.scales.resize(1);
        const auto b = total_loss(pred, s, p, std::span(taps, 1), std::span(pooled, 1), cfg);
        CHECK(std::abs(b.total - (s2l_loss(pred, s, p, 0.5) +
                                  0.5 * contrastive_loss(taps[0], pooled[0], 0.3, PairOp::logical_or))) <= 1e-12);
    }
    SUBCASE("degenerate scale is skipped or propagated by policy") {
        const DownscaledLabelMap empty(Raster<Label>(2, 2, 1, Label::ignore), 4, 0.0, 1.0, 8, 8);
        const LossConfig cfg;
        const DownscaledLabelMap with_empty[] = {pooled[0], empty};
        CHECK_THROWS_AS(total_loss(pred, s, p, taps, with_empty, cfg), DegeneratePairSet);
        std::vector<ScaleBatch<double>> scales{{std::span(taps, 1), std::span(with_empty, 1)},
                                               {std::span(taps + 1, 1), std::span(with_empty + 1, 1)}};
        const auto r = total_loss_batch<double>({&pred, 1}, {&s, 1}, {&p, 1}, scales, cfg, 0, true,
                                                DegeneratePolicy::skip);
        CHECK(r.breakdown.contrastive[0].has_value());
        CHECK_FALSE(r.breakdown.contrastive[1].has_value());
        CHECK(r.embedding_grad[1][0] == std::vector<double>(16, 0.0));
    }
    SUBCASE("gradient of the combined objective") {
        const LossConfig cfg;
        std::vector<ScaleBatch<double>> scales{{std::span(taps, 1), std::span(pooled, 1)},
                                               {std::span(taps + 1, 1), std::span(pooled + 1, 1)}};
        const auto r =
            total_loss_batch<double>({&pred, 1}, {&s, 1}, {&p, 1}, scales, cfg, 0, true, DegeneratePolicy::propagate);
        const auto fd = oracle::central_difference(
            [&](const std::vector<double>& t) { return total_loss(PredictionGrid(8, 8, t), s, p, taps, pooled, cfg).total; },
            values_of(pred), 1e-4);
        CHECK(oracle::relative_error(r.pred_grad[0], fd) <= 1e-4);
        const std::vector<double> flat(taps[1].embeddings().values().begin(), taps[1].embeddings().values().end());
        const auto fdz = oracle::central_difference(
            [&](const std::vector<double>& v) {
                const EmbeddingGrid moved[] = {taps[0], grid_from(2, 2, 4, v)};
                return total_loss(pred, s, p, moved, pooled, cfg).total;
            },
            flat, 1e-4);
        CHECK(oracle::relative_error(r.embedding_grad[1][0], fdz) <= 1e-4);
    }
}
