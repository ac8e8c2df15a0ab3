#include "s2l/losses/contrastive.hpp"
#include "s2l/losses/pixel_losses.hpp"
#include "s2l/losses/sampling.hpp"
#include "s2l/losses/total.hpp"
#include "s2l/trainer/trainer.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <malloc.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>

using namespace s2l;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Verdict {
    bool pass = true;
    std::string detail;
};

std::vector<double> values_of(const PredictionGrid& p) { return {p.values().begin(), p.values().end()}; }

EmbeddingGrid grid_from(int h, int w, int dim, const std::vector<double>& flat) {
    return EmbeddingGrid(Raster<double>(h, w, dim, flat));
}

Verdict gradient_suite() {
    const auto started = Clock::now();
    fixture::Rng rng(101);
    const double h = 1e-4;
    double worst = 0.0;
    int checks = 0;
    for (int trial = 0; trial < 10; ++trial) {
        const auto pred = fixture::random_prediction(rng, 8, 8);
        const auto s = fixture::random_scribbles(rng, 8, 8);
        const auto p = fixture::random_pseudo(rng, 8, 8);
        const auto ls = losses::scribble_loss_batch({&pred, 1}, {&s, 1}, true);
        worst = std::max(worst, oracle::relative_error(ls.grad[0], oracle::central_difference(
                                                                      [&](const std::vector<double>& t) {
                                                                          return losses::scribble_loss(PredictionGrid(8, 8, t), s);
                                                                      },
                                                                      values_of(pred), h)));
        const auto lp = losses::pseudo_loss_batch({&pred, 1}, {&p, 1}, true);
        worst = std::max(worst, oracle::relative_error(lp.grad[0], oracle::central_difference(
                                                                      [&](const std::vector<double>& t) {
                                                                          return losses::pseudo_loss(PredictionGrid(8, 8, t), p);
                                                                      },
                                                                      values_of(pred), h)));
        checks += 2;
    }
    for (int trial = 0; trial < 3; ++trial) {
        for (double tau : {0.1, 0.3, 1.0}) {
            for (auto op : {PairOp::logical_or, PairOp::logical_and, PairOp::logical_xnor}) {
                const auto z = fixture::random_embeddings(rng, 8, 8, 4);
                const auto m = fixture::random_pooled(rng, 8, 8);
                const auto r = losses::contrastive_loss_batch<double>({&z, 1}, {&m, 1}, tau, op, nullptr, true);
                const std::vector<double> flat(z.embeddings().values().begin(), z.embeddings().values().end());
                const auto fd = oracle::central_difference(
                    [&](const std::vector<double>& v) { return losses::contrastive_loss(grid_from(8, 8, 4, v), m, tau, op); },
                    flat, h);
                worst = std::max(worst, oracle::relative_error(r.grad[0], fd));
                ++checks;
            }
        }
    }
    const double took = seconds_since(started);
    return {worst <= 1e-4 && took < 30.0,
            fmt::format("{} gradient checks, max relative error {:.2e} (<= 1e-4), {:.1f} s (< 30 s)", checks, worst, took)};
}

Verdict pair_oracle() {
    fixture::Rng rng(202);
    const double taus[] = {0.1, 0.3, 1.0};
    const PairOp ops[] = {PairOp::logical_or, PairOp::logical_and, PairOp::logical_xnor};
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const auto z = fixture::random_embeddings(rng, 8, 8, 6);
        const auto m = fixture::random_pooled(rng, 8, 8);
        const double tau = taus[trial % 3];
        const auto op = ops[(trial / 3) % 3];
        const auto sample = losses::sample_pixels(m, 64, static_cast<std::uint64_t>(trial));
        const double got = losses::contrastive_loss(z, m, tau, op, sample);
        const double want = oracle::naive_contrastive(fixture::cell_vectors(z), fixture::label_ints(m), tau, op);
        worst = std::max(worst, std::abs(got - want));
    }
    return {worst <= 1e-9, fmt::format("50 fixtures, max |sampled - naive| {:.2e} (<= 1e-9)", worst)};
}

Verdict downscale_oracle() {
    fixture::Rng rng(303);
    std::uniform_int_distribution<int> side(1, 32), scale(0, 2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    long cells = 0, mismatches = 0, overridden = 0, conflicts = 0;
    std::set<int> deltas;
    for (int trial = 0; trial < 1000; ++trial) {
        const int h = side(rng), w = side(rng), delta = 1 << scale(rng);
        deltas.insert(delta);
        const auto p = fixture::random_pseudo(rng, h, w, u(rng));
        const auto s = fixture::random_scribbles(rng, h, w, 0.04, 0.04);
        const auto d = pseudolabel::downscale_labels(p, s, delta, 0.0, 1.0);
        if (d.height() != (h + delta - 1) / delta || d.width() != (w + delta - 1) / delta) {
            ++mismatches;
            continue;
        }
        for (int by = 0; by < d.height(); ++by) {
            for (int bx = 0; bx < d.width(); ++bx) {
                ++cells;
                if (d(by, bx) != oracle::pooled_block(p, s, by, bx, delta, 0.0, 1.0)) ++mismatches;
                bool fg = false, bg = false;
                for (int y = by * delta; y < std::min(h, (by + 1) * delta); ++y) {
                    for (int x = bx * delta; x < std::min(w, (bx + 1) * delta); ++x) {
                        fg = fg || s.label(y, x) == Label::foreground;
                        bg = bg || s.label(y, x) == Label::background;
                    }
                }
                overridden += fg != bg;
                conflicts += fg && bg;
            }
        }
    }
    const bool covered = deltas.size() == 3 && overridden > 0 && conflicts > 0;
    return {mismatches == 0 && covered,
            fmt::format("1000 grids, {} cells, {} mismatches; deltas {{1,2,4}} covered: {}; {} scribble-override and {} "
                        "conflict blocks",
                        cells, mismatches, deltas.size() == 3 ? "yes" : "no", overridden, conflicts)};
}

Verdict loss_identities() {
    fixture::Rng rng(404);
    std::uniform_real_distribution<double> weight(0.0, 12.0), scale(0.1, 10.0);
    double worst_sum = 0.0, worst_scale = 0.0;
    bool reduces = true;
    for (int trial = 0; trial < 100; ++trial) {
        const auto pred = fixture::random_prediction(rng, 8, 8);
        const auto s = fixture::random_scribbles(rng, 8, 8);
        const auto p = fixture::random_pseudo(rng, 8, 8);
        const EmbeddingGrid taps[] = {fixture::random_embeddings(rng, 8, 8, 4), fixture::random_embeddings(rng, 4, 4, 4)};
        const DownscaledLabelMap pooled[] = {fixture::random_pooled(rng, 8, 8),
                                             DownscaledLabelMap(fixture::random_labels(rng, 4, 4, 0.2), 2, 0.0, 1.0, 8, 8)};
        LossConfig cfg;
        cfg.alpha = weight(rng);
        cfg.scales[0].weight = weight(rng);
        cfg.scales[1].weight = weight(rng);
        cfg.scales[1].delta = 2;
        const auto b = losses::total_loss(pred, s, p, taps, pooled, cfg);
        const double sum = b.scribble + cfg.alpha * b.pseudo + cfg.scales[0].weight * b.contrastive[0].value() +
                           cfg.scales[1].weight * b.contrastive[1].value();
        worst_sum = std::max(worst_sum, std::abs(b.total - sum));

        LossConfig off = cfg;
        off.alpha = 0.0;
        off.scales[0].weight = off.scales[1].weight = 0.0;
        reduces = reduces && losses::total_loss(pred, s, p, taps, pooled, off).total == losses::scribble_loss(pred, s);

        Raster<double> r = taps[0].embeddings();
        for (std::size_t i = 0; i < r.cell_count(); ++i) {
            const double k = scale(rng);
            for (auto& v : r.cell(i)) v *= k;
        }
        const double base = losses::contrastive_loss(taps[0], pooled[0], 0.3, PairOp::logical_or);
        worst_scale = std::max(worst_scale,
                               std::abs(losses::contrastive_loss(EmbeddingGrid(r), pooled[0], 0.3, PairOp::logical_or) - base));
    }
    return {worst_sum <= 1e-6 && reduces && worst_scale < 1e-9,
            fmt::format("100 fixtures: breakdown residual {:.2e} (<= 1e-6); zero weights give scribble loss exactly: {}; "
                        "rescaling changes contrastive loss by {:.2e} (< 1e-9)",
                        worst_sum, reduces ? "yes" : "no", worst_scale)};
}

metrics::BinaryMask mask(int h, int w, std::initializer_list<int> on) {
    metrics::BinaryMask m(h, w, 1, 0);
    for (int i : on) m[static_cast<std::size_t>(i)] = 1;
    return m;
}

metrics::InstanceMap random_instances(fixture::Rng& rng, int h, int w) {
    std::uniform_int_distribution<int> count(1, 5), y0(0, h - 1), x0(0, w - 1), ext(1, 4);
    metrics::BinaryMask m(h, w, 1, 0);
    for (int k = count(rng); k > 0; --k) {
        const int y = y0(rng), x = x0(rng), eh = ext(rng), ew = ext(rng);
        for (int yy = y; yy < std::min(h, y + eh); ++yy) {
            for (int xx = x; xx < std::min(w, x + ew); ++xx) m(yy, xx) = 1;
        }
    }
    return metrics::extract_instances(m);
}

Verdict metric_checks() {
    int failed = 0;
    const auto block = mask(4, 4, {0, 1, 4, 5});
    failed += metrics::iou(block, block) != 1.0;
    failed += metrics::iou(block, mask(4, 4, {10, 11, 14, 15})) != 0.0;
    failed += metrics::iou(block, mask(4, 4, {1, 2, 5, 6})) != 2.0 / 6.0;
    failed += metrics::iou(mask(2, 2, {}), mask(2, 2, {})) != 1.0;
    const metrics::InstanceMap g4(Raster<std::uint32_t>(2, 2, 1, {1, 1, 1, 1}));
    const metrics::InstanceMap inside(Raster<std::uint32_t>(2, 2, 1, {1, 1, 0, 0}));
    failed += metrics::mdice(inside, g4) != 4.0 / 6.0;
    const metrics::InstanceMap two(Raster<std::uint32_t>(2, 4, 1, {1, 1, 0, 2, 1, 1, 0, 2}));
    failed += metrics::mdice(two, two) != 1.0;
    failed += metrics::mdice(metrics::InstanceMap(Raster<std::uint32_t>(2, 4, 1, {0, 0, 1, 0, 0, 0, 1, 0})), two) != 0.0;
    const int worked_failed = failed;

    // per-GT exact reproduction, the condition under which mDice is 1
    const auto reproduced = [](const metrics::InstanceMap& pred, const metrics::InstanceMap& gt) {
        for (std::uint32_t g = 1; g <= gt.count(); ++g) {
            std::uint32_t id = 0;
            for (std::size_t i = 0; i < gt.size(); ++i) {
                if (gt[i] == g) id = pred[i];
            }
            if (id == 0) return false;
            for (std::size_t i = 0; i < gt.size(); ++i) {
                if ((gt[i] == g) != (pred[i] == id)) return false;
            }
        }
        return true;
    };
    fixture::Rng rng(505);
    std::uniform_int_distribution<int> pick(0, 143);
    int self_ok = 0, iff_ok = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto gt = random_instances(rng, 12, 12);
        self_ok += metrics::mdice(gt, gt) == 1.0;
        auto flipped = gt.foreground();
        const auto i = static_cast<std::size_t>(pick(rng));
        flipped[i] = !flipped[i];
        const auto pred = metrics::extract_instances(flipped);
        iff_ok += (metrics::mdice(pred, gt) == 1.0) == reproduced(pred, gt);
    }
    return {worked_failed == 0 && self_ok == 100 && iff_ok == 100,
            fmt::format("worked examples {}/7 exact; self-comparisons with mDice 1: {}/100; mDice 1 iff perfect match: {}/100",
                        7 - worked_failed, self_ok, iff_ok)};
}

// Seeded synthetic set written to disk and read back through the manifest.
struct Dataset {
    std::vector<data::Sample> train, val;
};

Dataset make_dataset(const fs::path& dir, int n_train, int n_val, std::uint64_t seed) {
    trainer::SynthRunConfig cfg;
    cfg.count = n_train + n_val;
    cfg.val_count = n_val;
    cfg.seed = seed;
    cfg.images.seed = cfg.scribbles.seed = seed;
    const auto samples = data::generate_synthetic(cfg.images, static_cast<std::size_t>(cfg.count));
    std::vector<ScribbleMap> scribbles;
    std::vector<std::string> splits;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        auto sc = cfg.scribbles;
        sc.seed = seed + i;
        scribbles.push_back(data::synthesize_scribbles(samples[i].mask, sc));
        splits.emplace_back(static_cast<int>(i) < n_train ? "train" : "val");
    }
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto manifest = data::save_dataset(dir, samples, scribbles, splits);
    data::LoadOptions opt;
    opt.split = "train";
    Dataset out;
    out.train = data::load_dataset(data::read_manifest(dir / "manifest.tsv"), opt);
    opt.split = "val";
    out.val = data::load_dataset(data::read_manifest(dir / "manifest.tsv"), opt);
    return out;
}

struct Arm {
    std::string name;
    std::vector<int> deltas;
};

struct RunResult {
    double iou = 0.0, mdice = 0.0, seconds = 0.0;
};

RunResult train_arm(const Arm& arm, std::uint64_t seed, const Dataset& ds, const fs::path& out) {
    trainer::TrainConfig cfg;
    cfg.seed = seed;
    cfg.loss.scales = trainer::select_scales(cfg, arm.deltas);
    const auto started = Clock::now();
    auto st = trainer::init_state(cfg, ds.train);
    trainer::train(st, ds.train, ds.val);
    const auto scores = trainer::evaluate(st.net, ds.val, cfg.eval_batch_size);
    const auto mean = metrics::aggregate(scores);
    RunResult r{mean.iou, mean.mdice, seconds_since(started)};
    std::ofstream csv(out / fmt::format("runlog_{}_seed{}.csv", arm.name, seed));
    trainer::write_csv(csv, st.log);
    fmt::print("  {:<8} seed {}  mDice {:.4f}  IoU {:.4f}  {:.0f} s\n", arm.name, seed, r.mdice, r.iou, r.seconds);
    std::fflush(stdout);
    return r;
}

double median3(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

Verdict end_to_end(const fs::path& out, bool ablation) {
    const auto ds = make_dataset(out / "dataset", 64, 16, 2024);
    const std::vector<Arm> arms{{"S2L", {}}, {"+R1x1", {1}}, {"+R4x4", {4}}, {"+both", {1, 4}}};
    const std::uint64_t seeds[] = {0, 1, 2};

    fmt::print("  defaults, 64 train / 16 val, 128x128 with distractors\n");
    const auto full = train_arm(arms[3], seeds[0], ds, out);
    const bool fast = full.seconds <= 900.0;
    const bool accurate = full.iou >= 0.85;
    std::string detail = fmt::format("full pipeline {:.0f} s (<= 900 s), validation IoU {:.4f} (>= 0.85)", full.seconds, full.iou);
    if (!ablation) return {fast && accurate, detail + "; ablation skipped"};

    std::vector<std::vector<RunResult>> results(arms.size());
    for (std::size_t a = 0; a < arms.size(); ++a) {
        for (auto seed : seeds) {
            if (a == 3 && seed == seeds[0]) results[a].push_back(full);
            else results[a].push_back(train_arm(arms[a], seed, ds, out));
        }
    }
    std::vector<double> med_iou, med_dice;
    std::string table = "| Method | synthetic (mDice / IoU), median of 3 seeds |\n|---|---|\n";
    for (std::size_t a = 0; a < arms.size(); ++a) {
        std::vector<double> i, d;
        for (const auto& r : results[a]) {
            i.push_back(r.iou);
            d.push_back(r.mdice);
        }
        med_iou.push_back(median3(i));
        med_dice.push_back(median3(d));
        table += fmt::format("| {} | {:.4f} / {:.4f} |\n", arms[a].name, med_dice.back(), med_iou.back());
    }
    std::ofstream(out / "ablation_table.md") << table;
    fmt::print("\n{}\n", table);

    const double base = med_iou[0];
    const bool trend = std::max({med_iou[1], med_iou[2], med_iou[3]}) >= base;
    double worst_drop = 0.0;
    for (std::size_t a = 1; a < arms.size(); ++a) worst_drop = std::max(worst_drop, base - med_iou[a]);
    fmt::print("  soft threshold (no arm below S2L by more than 0.02): {} (largest drop {:.4f})\n",
               worst_drop <= 0.02 ? "met" : "not met", worst_drop);
    detail += fmt::format("; 4 arms x 3 seeds completed; best contrastive arm median IoU {:.4f} vs S2L {:.4f} ({})",
                          std::max({med_iou[1], med_iou[2], med_iou[3]}), base, trend ? "matches or exceeds" : "below");
    return {fast && accurate && trend, detail};
}

Verdict determinism(const fs::path& out) {
    const auto ds = make_dataset(out / "dataset_small", 8, 4, 99);
    trainer::TrainConfig cfg;
    cfg.seed = 3;
    cfg.warmup_epochs = 2;
    cfg.main_epochs = 5;
    const auto run = [&](int until) {
        auto st = trainer::init_state(cfg, ds.train);
        trainer::train(st, ds.train, ds.val, {}, until);
        return st;
    };
    const auto a = run(-1);
    const auto b = run(-1);
    const bool same = trainer::same_outcome(a.log, b.log);
    {
        std::ofstream fa(out / "determinism_a.csv"), fb(out / "determinism_b.csv");
        trainer::write_csv(fa, a.log);
        trainer::write_csv(fb, b.log);
    }
    int resumed_ok = 0;
    const int stops[] = {1, 2, 4};
    for (int stop : stops) {
        auto partial = run(stop);
        const auto path = out / fmt::format("resume_at_{}.ckpt", stop);
        trainer::save_checkpoint(path, partial);
        auto resumed = trainer::load_checkpoint(path, ds.train);
        trainer::train(resumed, ds.train, ds.val);
        resumed_ok += trainer::same_outcome(resumed.log, a.log);
        std::ofstream fr(out / fmt::format("determinism_resume_{}.csv", stop));
        trainer::write_csv(fr, resumed.log);
    }
    return {same && resumed_ok == 3,
            fmt::format("two seeded runs identical: {}; resume after epochs 1, 2, 4 reproduces the uninterrupted log: {}/3",
                        same ? "yes" : "no", resumed_ok)};
}

}  // namespace

int main(int argc, char** argv) {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);

    CLI::App app{"Acceptance checks"};
    std::string out = "acceptance_out";
    std::vector<int> only;
    bool no_ablation = false;
    app.add_option("--out", out, "directory for run logs and the ablation table");
    app.add_option("--only", only, "run only these checks (1-7)");
    app.add_flag("--no-ablation", no_ablation, "end-to-end run without the ablation arms");
    CLI11_PARSE(app, argc, argv);
    fs::create_directories(out);

    struct Check {
        int id;
        const char* name;
        std::function<Verdict()> run;
    };
    const std::vector<Check> checks{
        {1, "gradient suite", gradient_suite},
        {2, "pair oracle", pair_oracle},
        {3, "downscale oracle", downscale_oracle},
        {4, "loss identities", loss_identities},
        {5, "metric hand-checks", metric_checks},
        {6, "desk-scale end-to-end", [&] { return end_to_end(out, !no_ablation); }},
        {7, "determinism and resume", [&] { return determinism(out); }},
    };
    bool all = true;
    std::ofstream summary(fs::path(out) / "acceptance.txt");
    for (const auto& c : checks) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        const auto line = fmt::format("[{}] check {}: {}: {}", v.pass ? "PASS" : "FAIL", c.id, c.name, v.detail);
        fmt::print("{}\n", line);
        std::fflush(stdout);
        summary << line << '\n';
        summary.flush();
        all = all && v.pass;
    }
    return all ? 0 : 1;
}
