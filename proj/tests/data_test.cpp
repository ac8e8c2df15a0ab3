#include "s2l/core/validate.hpp"
#include "s2l/data/data.hpp"

#include <doctest.h>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

using namespace s2l;
using namespace s2l::data;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("s2l_data_test_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

const std::vector<SyntheticSample>& default_set() {
    static const auto set = [] {
        SynthConfig cfg;
        cfg.seed = 11;
        return generate_synthetic(cfg, 64);
    }();
    return set;
}

}  // namespace

TEST_CASE("synthetic generation is deterministic") {
    SynthConfig cfg;
    cfg.seed = 5;
    const auto a = generate_synthetic(cfg, 3);
    const auto b = generate_synthetic(cfg, 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(a[i].image == b[i].image);
        CHECK(a[i].mask == b[i].mask);
    }
    cfg.seed = 6;
    CHECK_FALSE(generate_synthetic(cfg, 1)[0].image == a[0].image);
}

TEST_CASE("64 images at defaults pass every validator") {
    const auto& set = default_set();
    REQUIRE(set.size() == 64);
    const SynthConfig cfg;
    for (const auto& s : set) {
        CHECK(validate(s.image).empty());
        CHECK(s.image.height() == 128);
        CHECK(s.image.width() == 128);
        CHECK(s.mask.height() == 128);
        CHECK(metrics::validate(s.mask).empty());
        CHECK(s.mask.count() >= static_cast<std::uint32_t>(cfg.min_blobs));
        CHECK(s.mask.count() <= static_cast<std::uint32_t>(cfg.max_blobs));
    }
}

TEST_CASE("distractors carry nucleus intensity but are not instances") {
    // background without distractors never exceeds bg_high + 2.5 sigma
    const SynthConfig cfg;
    const double ceiling = cfg.bg_high + 2.5 * cfg.noise_sigma + 1e-6;
    std::size_t bright_background = 0;
    for (const auto& s : default_set()) {
        for (std::size_t i = 0; i < s.mask.size(); ++i) {
            if (s.mask[i] == 0 && s.image.pixels()[i] > ceiling) ++bright_background;
        }
    }
    CHECK(bright_background > 500);
}

TEST_CASE("without distractors the background is separable by intensity") {
    SynthConfig cfg;
    cfg.distractor_density = 0.0;
    cfg.seed = 3;
    for (const auto& s : generate_synthetic(cfg, 8)) {
        float bg_max = 0.f, fg_min = 1.f;
        for (std::size_t i = 0; i < s.mask.size(); ++i) {
            const float v = s.image.pixels()[i];
            if (s.mask[i]) fg_min = std::min(fg_min, v);
            else bg_max = std::max(bg_max, v);
        }
        CHECK(bg_max < fg_min);
    }
}

TEST_CASE("synthetic config errors") {
    SynthConfig cfg;
    cfg.min_blobs = cfg.max_blobs = 200;
    CHECK_THROWS_AS(generate_synthetic(cfg, 1), DataError);
    SynthConfig odd;
    odd.height = 100;
    CHECK(validate(odd) == std::vector<std::string>{"size divisible by network downsampling factor"});
    CHECK_THROWS_AS(generate_synthetic(odd, 1), DataError);
    SynthConfig dark;
    dark.fg_high = 1.5;
    CHECK(validate(dark) == std::vector<std::string>{"intensities in [0,1]"});
}

TEST_CASE("scribbles respect the source mask and the coverage target") {
    int index = 0;
    for (const auto& s : default_set()) {
        const ScribbleMap scr = synthesize_scribbles(s.mask, {1, 0.01, static_cast<std::uint64_t>(index++)});
        CHECK(validate(scr).empty());
        const auto n = scr.foreground().size() + scr.background().size();
        CHECK(n >= 131);
        CHECK(n <= 197);
        std::set<std::uint32_t> hit;
        const auto& ids = s.mask.ids();
        for (auto i : scr.foreground()) {
            const int y = static_cast<int>(i) / 128, x = static_cast<int>(i) % 128;
            const auto id = ids[i];
            REQUIRE(id != 0);
            hit.insert(id);
            // erosion safe: the 3x3 neighbourhood belongs to the same instance
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) CHECK(ids(y + dy, x + dx) == id);
            }
        }
        CHECK(hit.size() == s.mask.count());
        for (auto i : scr.background()) CHECK(ids[i] == 0);
    }
}

TEST_CASE("wide strokes stay inside their instance") {
    const auto& s = default_set()[0];
    const auto scr = synthesize_scribbles(s.mask, {3, 0.02, 1});
    for (auto i : scr.foreground()) CHECK(s.mask[i] != 0);
    for (auto i : scr.background()) CHECK(s.mask[i] == 0);
    CHECK(synthesize_scribbles(s.mask, {3, 0.02, 1}) == scr);
    CHECK_FALSE(synthesize_scribbles(s.mask, {3, 0.02, 2}) == scr);
}

TEST_CASE("instances too small for a stroke get one pixel") {
    std::vector<std::uint32_t> ids(25, 0);
    ids[12] = 1;
    const InstanceMap dot(Raster<std::uint32_t>(5, 5, 1, ids));
    const auto scr = synthesize_scribbles(dot, {1, 0.01, 0});
    CHECK(scr.foreground() == std::vector<std::size_t>{12});

    ids.assign(25, 0);
    for (int i : {6, 7, 8, 11, 12, 13, 16, 17, 18}) ids[static_cast<std::size_t>(i)] = 1;
    const auto square = synthesize_scribbles(InstanceMap(Raster<std::uint32_t>(5, 5, 1, ids)), {1, 0.0, 0});
    CHECK(square.foreground() == std::vector<std::size_t>{12});
}

TEST_CASE("dataset write and read reproduce identical grids") {
    TempDir dir("roundtrip");
    const auto& set = default_set();
    std::vector<SyntheticSample> samples(set.begin(), set.begin() + 4);
    std::vector<ScribbleMap> scr;
    for (const auto& s : samples) scr.push_back(synthesize_scribbles(s.mask, {}));
    const auto written = save_dataset(dir.path, samples, scr, {"train", "train", "val", "val"});
    const auto manifest = read_manifest(dir.path / "manifest.tsv");
    CHECK(manifest.records == written.records);
    CHECK(validate(manifest).empty());
    const auto loaded = load_dataset(manifest);
    REQUIRE(loaded.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(loaded[i].image == samples[i].image);
        CHECK(*loaded[i].mask == samples[i].mask);
        CHECK(loaded[i].scribbles == scr[i]);
    }
    CHECK(loaded[2].split == "val");
    CHECK(load_dataset(manifest, {1, {}, "train"}).size() == 2);
    CHECK(manifest.indices("val") == std::vector<std::size_t>{2, 3});
}

TEST_CASE("raster ingestion") {
    TempDir dir("ingest");
    cv::Mat wide(2, 2, CV_16UC1, cv::Scalar(0));
    wide.at<std::uint16_t>(0, 1) = 65535;
    cv::imwrite((dir.path / "wide.png").string(), wide);
    const auto img = read_image(dir.path / "wide.png");
    CHECK(img(0, 1) == 1.0f);
    CHECK(img(0, 0) == 0.0f);

    cv::Mat rgb(1, 2, CV_8UC3, cv::Scalar(0, 0, 0));
    rgb.at<cv::Vec3b>(0, 0) = cv::Vec3b(0, 0, 255);  // pure red, BGR order
    cv::imwrite((dir.path / "rgb.png").string(), rgb);
    const auto gray = read_image(dir.path / "rgb.png", 1);
    CHECK(gray.channels() == 1);
    CHECK(gray(0, 0) == doctest::Approx(0.299).epsilon(1e-6));
    const auto colour = read_image(dir.path / "rgb.png", 3);
    CHECK(colour.channels() == 3);
    CHECK(colour(0, 0, 0) == 1.0f);
    CHECK(colour(0, 0, 2) == 0.0f);

    cv::Mat ids(1, 4, CV_16UC1);
    ids.at<std::uint16_t>(0, 0) = 0;
    ids.at<std::uint16_t>(0, 1) = 7;
    ids.at<std::uint16_t>(0, 2) = 3;
    ids.at<std::uint16_t>(0, 3) = 7;
    cv::imwrite((dir.path / "ids.png").string(), ids);
    const auto mask = read_mask(dir.path / "ids.png");
    CHECK(mask.count() == 2);
    CHECK(mask[1] == 2);
    CHECK(mask[2] == 1);

    cv::Mat bad(1, 1, CV_8UC1, cv::Scalar(9));
    cv::imwrite((dir.path / "bad.png").string(), bad);
    CHECK_THROWS_AS(read_scribbles(dir.path / "bad.png"), DataError);
}

TEST_CASE("ingestion errors") {
    TempDir dir("errors");
    CHECK_FALSE(is_lossless_path("a.jpg"));
    CHECK(is_lossless_path("a.TIFF"));
    CHECK_THROWS_AS(write_image(dir.path / "x.jpg", default_set()[0].image), DataError);
    CHECK_THROWS_AS(read_image(dir.path / "missing.png"), DataError);
    {
        std::ofstream(dir.path / "junk.png") << "not a png";
    }
    CHECK_THROWS_AS(read_image(dir.path / "junk.png"), DataError);

    // image and scribble shapes disagree
    write_image(dir.path / "a.png", default_set()[0].image);
    write_scribbles(dir.path / "s.png", ScribbleMap(4, 4, std::vector<std::size_t>{0}, {}));
    DatasetManifest m{dir.path, {{"a.png", "", "s.png", "train"}}};
    CHECK_THROWS_AS(load_dataset(m), DataError);

    m.records = {{"a.png", "", "", "train"}};
    CHECK(validate(m).size() == 1);
    m.records = {{"gone.png", "", "", "val"}};
    CHECK(validate(m).size() == 1);
    CHECK_THROWS_AS(load_dataset(m), DataError);

    {
        std::ofstream(dir.path / "short.tsv") << "a.png\tb.png\n";
    }
    CHECK_THROWS_AS(read_manifest(dir.path / "short.tsv"), DataError);
    CHECK_THROWS_AS(read_manifest(dir.path / "none.tsv"), DataError);
}

TEST_CASE("records with only a mask get synthesized scribbles") {
    TempDir dir("maskonly");
    const auto& s = default_set()[1];
    write_image(dir.path / "i.png", s.image);
    write_mask(dir.path / "m.png", s.mask);
    const DatasetManifest m{dir.path, {{"i.png", "m.png", "", "train"}}};
    const auto a = load_dataset(m);
    CHECK(validate(a[0].scribbles).empty());
    CHECK(a[0].scribbles == synthesize_scribbles(s.mask, {}));
}

TEST_CASE("k-fold splits") {
    const auto folds = split_folds(20, 4, 9);
    REQUIRE(folds.size() == 4);
    std::vector<int> seen(20, 0);
    for (const auto& f : folds) {
        CHECK(f.val.size() == 5);
        CHECK(f.train.size() == 15);
        for (auto i : f.val) ++seen[i];
        for (auto i : f.val) CHECK_FALSE(std::binary_search(f.train.begin(), f.train.end(), i));
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
    CHECK(split_folds(20, 4, 9)[2].val == folds[2].val);

    bool differs = false;
    for (std::size_t j = 0; j < 4; ++j) differs |= split_folds(20, 4, 10)[j].val != folds[j].val;
    CHECK(differs);

    const auto ragged = split_folds(10, 3, 1);
    std::vector<std::size_t> sizes;
    for (const auto& f : ragged) sizes.push_back(f.val.size());
    CHECK(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()) <= 1);
    CHECK_THROWS_AS(split_folds(3, 4, 0), DataError);
    CHECK_THROWS_AS(split_folds(10, 1, 0), DataError);
}
