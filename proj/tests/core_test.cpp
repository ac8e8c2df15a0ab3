#include "s2l/core/archive.hpp"
#include "s2l/core/serialize.hpp"
#include "s2l/core/validate.hpp"
#include "support/fixtures.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

using namespace s2l;

TEST_CASE("validate: well-formed and malformed grids") {
    SUBCASE("mid-range prediction is valid") {
        PredictionGrid pred(4, 4, std::vector<double>(16, 0.5));
        CHECK(validate(pred).empty());
    }
    SUBCASE("prediction outside [0,1]") {
        PredictionGrid pred(1, 2, {0.5, 1.5});
        CHECK(validate(pred) == std::vector<std::string>{"probabilities in [0,1]"});
    }
    SUBCASE("pixel on both strokes breaks disjointness") {
        const std::size_t fg[] = {0, 3};
        const std::size_t bg[] = {3, 5};
        ScribbleMap s(3, 3, fg, bg);
        CHECK(validate(s) == std::vector<std::string>{"disjointness"});
        CHECK(s.label(std::size_t{3}) == Label::ignore);
    }
    SUBCASE("empty scribble map") {
        ScribbleMap s(2, 2, {}, {});
        CHECK(validate(s) == std::vector<std::string>{"nonempty"});
    }
    SUBCASE("delta 3 is not a power of two") {
        DownscaledLabelMap m(Raster<Label>(2, 2, 1, Label::ignore), 3, 0.0, 1.0, 6, 6);
        CHECK(validate(m) == std::vector<std::string>{"scale not a power of two"});
    }
    SUBCASE("pooled shape uses ceiling division") {
        DownscaledLabelMap ok(Raster<Label>(3, 2, 1, Label::ignore), 4, 0.0, 1.0, 10, 8);
        CHECK(validate(ok).empty());
        DownscaledLabelMap bad(Raster<Label>(2, 2, 1, Label::ignore), 4, 0.0, 1.0, 10, 8);
        CHECK(validate(bad) == std::vector<std::string>{"pooled shape"});
    }
    SUBCASE("nu order") {
        DownscaledLabelMap m(Raster<Label>(1, 1, 1, Label::ignore), 1, 0.8, 0.2, 1, 1);
        CHECK(validate(m) == std::vector<std::string>{"nu1 <= nu2"});
    }
    SUBCASE("image checks") {
        CHECK(validate(ImageGrid(Raster<float>(2, 2, 1, 0.25f))).empty());
        CHECK(validate(ImageGrid(Raster<float>(2, 2, 1, 1.5f))) == std::vector<std::string>{"pixels in [0,1]"});
        Raster<float> nan(1, 1, 1, std::numeric_limits<float>::quiet_NaN());
        CHECK(validate(ImageGrid(nan)) == std::vector<std::string>{"finite pixels"});
        CHECK(validate(ImageGrid(Raster<float>(0, 3, 1))) == std::vector<std::string>{"height >= 1"});
    }
    SUBCASE("embeddings must be finite and nonzero") {
        Raster<double> r(1, 2, 2, 0.0);
        r(0, 0, 0) = 1.0;
        CHECK(validate(EmbeddingGrid(r)) == std::vector<std::string>{"nonzero embeddings"});
        r(0, 1, 1) = std::numeric_limits<double>::infinity();
        CHECK(validate(EmbeddingGrid(r)) == std::vector<std::string>{"finite embeddings"});
    }
    SUBCASE("feature tap index range") {
        FeatureTap tap(Raster<double>(2, 2, 3, 0.1), 6, 1, 5);
        CHECK(validate(tap) == std::vector<std::string>{"tap index in (0, n]"});
    }
    SUBCASE("pseudo labels outside the enumeration") {
        Raster<Label> r(1, 2, 1, Label::foreground);
        r[1] = static_cast<Label>(7);
        CHECK(validate(PseudoLabelMap(r)) == std::vector<std::string>{"labels in {0,1,ignore}"});
    }
}

TEST_CASE("loss config defaults") {
    LossConfig cfg;
    CHECK(validate(cfg).empty());
    CHECK(cfg.alpha == 0.5);
    REQUIRE(cfg.scales.size() == 2);
    CHECK(cfg.scales[0] == ScaleSpec{5, 1, 0.3, 0.5});
    CHECK(cfg.scales[1] == ScaleSpec{3, 4, 0.1, 10.0});
    CHECK(cfg.nu1 == 0.0);
    CHECK(cfg.nu2 == 1.0);
    CHECK(cfg.sample_cap == 6000);
    CHECK(cfg.pair_op == PairOp::logical_or);

    cfg.scales[0].tau = 0.0;
    cfg.alpha = -1.0;
    cfg.sample_cap = 0;
    const auto v = validate(cfg);
    CHECK(std::find(v.begin(), v.end(), "temperature > 0") != v.end());
    CHECK(std::find(v.begin(), v.end(), "alpha >= 0") != v.end());
    CHECK(std::find(v.begin(), v.end(), "sample_cap >= 1") != v.end());
}

TEST_CASE("pair op names round-trip") {
    for (auto op : {PairOp::logical_or, PairOp::logical_and, PairOp::logical_xnor}) {
        CHECK(parse_pair_op(to_string(op)) == op);
    }
    CHECK_FALSE(parse_pair_op("nand").has_value());
}

TEST_CASE("scribble sets partition the labelled pixels") {
    fixture::Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const auto s = fixture::random_scribbles(rng, 9, 11);
        const auto omega = s.labeled();
        std::set<std::size_t> fg(s.foreground().begin(), s.foreground().end());
        std::set<std::size_t> bg(s.background().begin(), s.background().end());
        std::set<std::size_t> all(omega.begin(), omega.end());
        for (auto i : fg) CHECK(bg.count(i) == 0);
        std::set<std::size_t> joined = fg;
        joined.insert(bg.begin(), bg.end());
        CHECK(joined == all);
        for (std::size_t i = 0; i < s.size(); ++i) {
            CHECK((s.label(i) != Label::ignore) == (all.count(i) == 1));
        }
    }
}

TEST_CASE("serialization round-trips bit for bit") {
    fixture::Rng rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        Raster<float> px(5, 7, 3);
        for (auto& v : px.values()) v = static_cast<float>(u(rng));
        const ImageGrid image(px);
        CHECK(deserialize<ImageGrid>(serialize(image)) == image);

        const auto pred = fixture::random_prediction(rng, 6, 3, 0.0, 1.0);
        const auto pred_back = deserialize<PredictionGrid>(serialize(pred));
        CHECK(pred_back == pred);
        CHECK(serialize(pred_back) == serialize(pred));

        const auto scribbles = fixture::random_scribbles(rng, 4, 9);
        CHECK(deserialize<ScribbleMap>(serialize(scribbles)) == scribbles);

        const auto pseudo = fixture::random_pseudo(rng, 8, 8);
        CHECK(deserialize<PseudoLabelMap>(serialize(pseudo)) == pseudo);

        const DownscaledLabelMap pooled(fixture::random_labels(rng, 3, 2, 0.4), 4, 0.1 * trial / 20.0,
                                        1.0 - 1e-3 * trial, 10, 8);
        CHECK(deserialize<DownscaledLabelMap>(serialize(pooled)) == pooled);

        Raster<double> feat(4, 4, 6);
        for (auto& v : feat.values()) v = u(rng) - 0.5;
        const FeatureTap tap(feat, 3, 4, 5);
        CHECK(deserialize<FeatureTap>(serialize(tap)) == tap);

        const auto emb = fixture::random_embeddings(rng, 3, 5, 4);
        CHECK(deserialize<EmbeddingGrid>(serialize(emb)) == emb);
    }
}

TEST_CASE("archive rejects malformed input") {
    CHECK_THROWS_AS(Archive::from_bytes("JUNK!"), ArchiveError);
    Archive a;
    const std::vector<float> v{1.f, 2.f, 3.f};
    a.put<float>("w", std::span<const float>(v));
    auto bytes = a.to_bytes();
    CHECK(bytes.substr(0, 5) == "SSEG1");
    CHECK(Archive::from_bytes(bytes).get<float>("w") == v);
    CHECK_THROWS_AS(Archive::from_bytes(bytes.substr(0, bytes.size() - 2)), ArchiveError);
    CHECK_THROWS_AS(Archive::from_bytes(bytes).get<double>("w"), ArchiveError);
    CHECK_THROWS_AS(Archive::from_bytes(bytes).get<float>("missing"), ArchiveError);
    ScribbleMap out;
    CHECK_THROWS_AS(decode(a, out), ArchiveError);
}
