#include "s2l/trainer/trainer.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

using namespace s2l;
using namespace s2l::trainer;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("s2l_trainer_test_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::vector<data::Sample> tiny_set(int n, std::uint64_t seed, int offset = 0) {
    data::SynthConfig sc;
    sc.height = sc.width = 32;
    sc.min_blobs = 1;
    sc.max_blobs = 3;
    sc.min_radius = 3;
    sc.max_radius = 5;
    sc.seed = seed;
    const auto set = data::generate_synthetic(sc, n + offset);
    std::vector<data::Sample> out;
    for (int i = offset; i < n + offset; ++i) {
        data::Sample s;
        s.id = std::to_string(i);
        s.image = set[static_cast<std::size_t>(i)].image;
        s.mask = set[static_cast<std::size_t>(i)].mask;
        s.scribbles = data::synthesize_scribbles(*s.mask, {1, 0.05, static_cast<std::uint64_t>(i)});
        out.push_back(std::move(s));
    }
    return out;
}

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.network.widths = {4, 8, 16};
    cfg.network.depth = 3;
    cfg.loss.scales = default_scales(3);
    cfg.loss.sample_cap = 300;
    cfg.crop_size = 16;
    cfg.batch_size = 4;
    cfg.eval_batch_size = 4;
    cfg.warmup_epochs = 2;
    cfg.main_epochs = 4;
    cfg.filter.refresh_period = 2;
    cfg.projection_dim = 8;
    cfg.seed = 5;
    return cfg;
}

const std::vector<data::Sample>& train_set() {
    static const auto s = tiny_set(8, 3);
    return s;
}

const std::vector<data::Sample>& val_set() {
    static const auto s = tiny_set(2, 3, 8);
    return s;
}

RunLog run(const TrainConfig& cfg) {
    auto st = init_state(cfg, train_set());
    train(st, train_set(), val_set());
    return st.log;
}

}  // namespace

TEST_CASE("one warm-up epoch logs a single scribble-only record") {
    auto cfg = tiny_config();
    cfg.warmup_epochs = 1;
    auto st = init_state(cfg, train_set());
    run_warmup(st, train_set(), val_set());
    REQUIRE(st.log.records.size() == 1);
    const auto& r = st.log.records[0];
    CHECK(r.epoch == 1);
    CHECK(r.stage == "warmup");
    CHECK(std::isfinite(r.scribble));
    CHECK(r.scribble > 0);
    CHECK(r.total == r.scribble);
    CHECK_FALSE(r.pseudo);
    CHECK(r.contrastive.empty());
    CHECK(r.refreshed);
    CHECK(st.pseudo.size() == train_set().size());
    CHECK(st.downscaled.size() == train_set().size());
}

TEST_CASE("warm-up fits a fully scribbled image") {
    auto set = tiny_set(1, 21);
    auto& s = set[0];
    const auto fg = s.mask->foreground();
    Raster<Label> all(fg.height(), fg.width(), 1);
    for (std::size_t i = 0; i < all.cell_count(); ++i) all[i] = fg[i] ? Label::foreground : Label::background;
    s.scribbles = ScribbleMap::from_labels(all);

    TrainConfig cfg;
    cfg.crop_size = 32;
    cfg.batch_size = 1;
    cfg.warmup_epochs = 200;
    auto st = init_state(cfg, set);
    run_warmup(st, set, {});
    REQUIRE(st.log.records.size() == 200);
    CHECK(st.log.records.back().scribble < 0.05);
}

TEST_CASE("identical seeds give identical run logs") {
    const auto cfg = tiny_config();
    const auto a = run(cfg);
    const auto b = run(cfg);
    REQUIRE(a.records.size() == 6);
    CHECK(same_outcome(a, b));
    auto other = cfg;
    other.seed = 6;
    CHECK_FALSE(same_outcome(a, run(other)));
}

TEST_CASE("every record satisfies the breakdown identity") {
    const auto cfg = tiny_config();
    const auto log = run(cfg);
    for (const auto& r : log.records) {
        double sum = r.scribble;
        if (r.stage == "warmup") {
            CHECK_FALSE(r.pseudo);
            CHECK(r.contrastive.empty());
            CHECK(r.skipped == 0);
        } else {
            REQUIRE(r.pseudo);
            REQUIRE(r.contrastive.size() == cfg.loss.scales.size());
            sum += cfg.loss.alpha * *r.pseudo;
            for (std::size_t k = 0; k < r.contrastive.size(); ++k) sum += cfg.loss.scales[k].weight * r.contrastive[k].value();
        }
        CHECK(std::abs(r.total - sum) <= 1e-6);
        CHECK(r.steps == 2);
    }
}

TEST_CASE("zero regularizer weights reduce the total to the S2L terms") {
    auto cfg = tiny_config();
    for (auto& s : cfg.loss.scales) s.weight = 0.0;
    const auto log = run(cfg);
    for (const auto& r : log.records) {
        if (r.stage != "main") continue;
        CHECK(std::abs(r.total - (r.scribble + cfg.loss.alpha * *r.pseudo)) <= 1e-6);
    }
}

TEST_CASE("pseudo-labels refresh at main epochs divisible by the period") {
    auto cfg = tiny_config();
    cfg.main_epochs = 6;
    cfg.filter.refresh_period = 3;
    const auto log = run(cfg);
    REQUIRE(log.records.size() == 8);
    for (const auto& r : log.records) {
        const int main_epoch = r.epoch - cfg.warmup_epochs;
        const bool expected = r.stage == "warmup" ? r.epoch == cfg.warmup_epochs : main_epoch % 3 == 0;
        CHECK(r.refreshed == expected);
        CHECK((r.omega_p > 0) == (r.epoch >= cfg.warmup_epochs));
    }
}

TEST_CASE("epochs increase by one and stages do not interleave") {
    const auto log = run(tiny_config());
    for (std::size_t i = 0; i < log.records.size(); ++i) {
        CHECK(log.records[i].epoch == static_cast<int>(i) + 1);
        CHECK(log.records[i].stage == (i < 2 ? "warmup" : "main"));
    }
}

TEST_CASE("main stage without warm-up is refused") {
    auto st = init_state(tiny_config(), train_set());
    CHECK_THROWS_AS(run_main(st, train_set(), val_set()), TrainError);
}

TEST_CASE("resume at any epoch boundary reproduces the run") {
    const auto cfg = tiny_config();
    const auto full = run(cfg);
    TempDir dir("resume");
    for (int stop : {1, 2, 3, 5}) {
        auto st = init_state(cfg, train_set());
        train(st, train_set(), val_set(), {}, stop);
        CHECK(st.epoch == stop);
        const auto path = dir.path / ("stop" + std::to_string(stop) + ".ckpt");
        save_checkpoint(path, st);
        auto resumed = load_checkpoint(path, train_set());
        CHECK(resumed.epoch == stop);
        CHECK(resumed.cfg == cfg);
        train(resumed, train_set(), val_set());
        CHECK(same_outcome(resumed.log, full));
    }
}

TEST_CASE("checkpoints reject mismatched datasets and missing files") {
    const auto cfg = tiny_config();
    TempDir dir("ckpt");
    auto st = init_state(cfg, train_set());
    train(st, train_set(), val_set(), {}, 1);
    save_checkpoint(dir.path / "a.ckpt", st);
    CHECK_THROWS_AS(load_checkpoint(dir.path / "a.ckpt", tiny_set(3, 3)), TrainError);
    CHECK_THROWS_AS(load_checkpoint(dir.path / "none.ckpt", train_set()), TrainError);
    CHECK_THROWS_AS(load_network(dir.path / "none.ckpt"), TrainError);
    CHECK(load_trackers(dir.path / "a.ckpt").size() == train_set().size());

    TrainConfig echoed;
    auto net = load_network(dir.path / "a.ckpt", &echoed);
    CHECK(echoed == cfg);
    const auto a = predict(net, val_set());
    const auto b = predict(st.net, val_set());
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("divergence is reported") {
    auto cfg = tiny_config();
    auto st = init_state(cfg, train_set());
    for (auto* p : st.net.parameters()) {
        if (p->name == "head.bias") p->value[0] = std::numeric_limits<float>::quiet_NaN();
    }
    CHECK_THROWS_WITH_AS(run_warmup(st, train_set(), {}), doctest::Contains("divergence"), TrainError);
}

TEST_CASE("evaluation of exact and empty predictions") {
    const auto& val = val_set();
    std::vector<PredictionGrid> exact;
    for (const auto& s : val) {
        const auto fg = s.mask->foreground();
        std::vector<double> p(fg.cell_count());
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = fg[i] ? 1.0 : 0.0;
        exact.emplace_back(fg.height(), fg.width(), std::move(p));
    }
    for (const auto& sc : score(exact, val)) {
        CHECK(sc.iou == 1.0);
        CHECK(sc.mdice == 1.0);
    }

    auto net = model::UNet<float>(tiny_config().network, 1);
    for (auto* p : net.parameters()) {
        if (p->name == "head.weight") std::fill(p->value.begin(), p->value.end(), 0.0f);
        if (p->name == "head.bias") p->value[0] = -40.0f;
    }
    const auto scores = evaluate(net, val);
    REQUIRE(scores.size() == val.size());
    for (const auto& sc : scores) CHECK(sc.iou == 0.0);

    std::ostringstream csv;
    metrics::write_csv(csv, scores);
    int lines = 0;
    std::string line;
    std::istringstream in(csv.str());
    while (std::getline(in, line)) ++lines;
    CHECK(lines == static_cast<int>(val.size()) + 2);
}

TEST_CASE("run log csv and json round trip") {
    const auto log = run(tiny_config());
    CHECK(same_outcome(runlog_from_json(nlohmann::json::parse(to_json(log).dump())), log));
    std::ostringstream csv;
    write_csv(csv, log);
    std::istringstream in(csv.str());
    std::string header;
    std::getline(in, header);
    CHECK(header == "epoch,stage,total,L_s,L_p,L_c1,L_c2,skipped,steps,omega_p,refreshed,val_iou,val_mdice,wall_s");
    int rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    CHECK(rows == static_cast<int>(log.records.size()));
}

TEST_CASE("git blob hash matches git") {
    CHECK(git_blob_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    CHECK(git_blob_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("config parsing is strict and names the key") {
    using nlohmann::json;
    CHECK(config_from_json(json::object()) == TrainConfig{});
    CHECK(config_from_json(to_json(tiny_config())) == tiny_config());
    CHECK_THROWS_WITH_AS(config_from_json(json{{"seed", "x"}}), doctest::Contains("'seed'"), ConfigError);
    CHECK_THROWS_WITH_AS(config_from_json(json{{"sed", 1}}), doctest::Contains("'sed'"), ConfigError);
    CHECK_THROWS_WITH_AS(config_from_json(json{{"optimizer", {{"lr", true}}}}), doctest::Contains("'optimizer.lr'"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(config_from_json(json{{"loss", {{"pair_op", "xor"}}}}), doctest::Contains("loss.pair_op"),
                         ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"main_epochs", 3}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"warmup_epochs", 0}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"crop_size", 60}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"loss", {{"scales", {{{"tap", 5}, {"delta", 4}}}}}}}), ConfigError);
}

TEST_CASE("overrides replace nested values") {
    auto doc = to_json(TrainConfig{});
    apply_override(doc, "optimizer.lr=0.01");
    apply_override(doc, "loss.pair_op=and");
    apply_override(doc, "seed=9");
    const auto cfg = config_from_json(doc);
    CHECK(cfg.optimizer.lr == 0.01);
    CHECK(cfg.loss.pair_op == PairOp::logical_and);
    CHECK(cfg.seed == 9);
    CHECK_THROWS_AS(apply_override(doc, "seed"), ConfigError);
    CHECK_THROWS_AS(apply_override(doc, "seed.x=1"), ConfigError);
    CHECK_THROWS_AS(apply_override(doc, ".x=1"), ConfigError);
}

TEST_CASE("scale selection picks the ablation arms") {
    const TrainConfig cfg;
    CHECK(select_scales(cfg, {}).empty());
    const auto one = select_scales(cfg, {1});
    REQUIRE(one.size() == 1);
    CHECK(one[0] == cfg.loss.scales[0]);
    const auto both = select_scales(cfg, {1, 4});
    CHECK(both == cfg.loss.scales);
    CHECK(select_scales(cfg, {4}).front().tap == cfg.network.depth - 2);
    CHECK_THROWS_AS(select_scales(cfg, {2}), ConfigError);
    CHECK_THROWS_AS(select_scales(cfg, {1, 1}), ConfigError);
}

TEST_CASE("config keys cover every section with defaults") {
    const auto keys = config_keys();
    const auto has = [&](const std::string& k) {
        return std::any_of(keys.begin(), keys.end(), [&](const ConfigKey& c) { return c.key == k; });
    };
    for (const char* k : {"warmup_epochs", "main_epochs", "seed", "optimizer.lr", "filter.refresh_period", "loss.alpha",
                          "loss.pair_op", "loss.scales", "network.widths", "augment.flips"}) {
        CHECK(has(k));
    }
}
