#include "s2l/trainer/trainer.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <malloc.h>

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace s2l;
using trainer::ConfigError;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Per-command options; not every command reads every field.
struct RunSpec {
    std::string config;
    std::string out;
    std::string data;
    std::optional<std::uint64_t> seed;
    bool no_contrastive = false;
    std::string scales;
    std::string pair_op;
    bool resume = false;
    int stop_after = -1;
    std::vector<std::string> overrides;
    // eval
    std::vector<std::string> checkpoints;
    std::string labels;
    std::string split;
    bool plots = false;
    // export-pseudo
    std::string checkpoint;
    std::string deltas;
};

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file " + path + ": " + e.what());
    }
}

// Config file, then --seed, then key=value overrides; absent keys take defaults
// when the document is parsed.
json config_doc(const RunSpec& spec) {
    json doc = spec.config.empty() ? json::object() : read_json_file(spec.config);
    if (spec.seed) doc["seed"] = *spec.seed;
    for (const auto& o : spec.overrides) trainer::apply_override(doc, o);
    return doc;
}

std::vector<int> parse_int_list(const std::string& text, const char* flag) {
    std::vector<int> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError(fmt::format("{}: '{}' is not a comma-separated list of integers", flag, text));
        }
    }
    return out;
}

fs::path manifest_path(const std::string& data) {
    if (data.empty()) throw ConfigError("--data: a manifest path is required");
    fs::path p(data);
    if (fs::is_directory(p)) p /= "manifest.tsv";
    if (!fs::is_regular_file(p)) throw ConfigError("--data: manifest " + p.string() + " does not exist");
    return p;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
}

fs::path output_dir(const std::string& out) {
    if (out.empty()) throw ConfigError("--out: an output directory is required");
    fs::create_directories(out);
    return out;
}

std::vector<data::Sample> load_split(const data::DatasetManifest& manifest, const std::string& split, int channels) {
    data::LoadOptions opt;
    opt.channels = channels;
    opt.split = split;
    return data::load_dataset(manifest, opt);
}

int cmd_synth(const RunSpec& spec) {
    const auto cfg = trainer::synth_config_from_json(config_doc(spec));
    const auto dir = output_dir(spec.out);
    const auto samples = data::generate_synthetic(cfg.images, static_cast<std::size_t>(cfg.count));
    std::vector<ScribbleMap> scribbles;
    std::vector<std::string> splits;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        auto sc = cfg.scribbles;
        sc.seed = cfg.seed + i;
        scribbles.push_back(data::synthesize_scribbles(samples[i].mask, sc));
        splits.emplace_back(static_cast<int>(i) < cfg.count - cfg.val_count ? "train" : "val");
    }
    data::save_dataset(dir, samples, scribbles, splits);
    write_text(dir / "synth_config.json", trainer::to_json(cfg).dump(2) + "\n");
    fmt::print("wrote {} samples ({} train, {} val) to {}\n", cfg.count, cfg.count - cfg.val_count, cfg.val_count,
               dir.string());
    return 0;
}

trainer::TrainConfig train_config(const RunSpec& spec) {
    RunSpec s = spec;
    if (!spec.pair_op.empty()) s.overrides.insert(s.overrides.begin(), "loss.pair_op=" + json(spec.pair_op).dump());
    auto cfg = trainer::config_from_json(config_doc(s));
    if (spec.no_contrastive && !spec.scales.empty()) throw ConfigError("--no-contrastive and --scales exclude each other");
    if (spec.no_contrastive) cfg.loss.scales.clear();
    if (!spec.scales.empty()) cfg.loss.scales = trainer::select_scales(cfg, parse_int_list(spec.scales, "--scales"));
    if (const auto bad = trainer::validate(cfg); !bad.empty()) throw ConfigError("invalid config: " + bad.front());
    return cfg;
}

int cmd_train(const RunSpec& spec) {
    const auto cfg = train_config(spec);
    const auto mpath = manifest_path(spec.data);
    const auto manifest = data::read_manifest(mpath);
    const auto dir = output_dir(spec.out);
    write_text(dir / "config.json", trainer::to_json(cfg).dump(2) + "\n");

    const auto train = load_split(manifest, "train", cfg.network.in_channels);
    const auto val = load_split(manifest, "val", cfg.network.in_channels);
    if (train.empty()) throw trainer::TrainError("manifest " + mpath.string() + " has no 'train' records");

    const auto ckpt = dir / "checkpoint.ckpt";
    trainer::TrainState st;
    if (spec.resume && fs::exists(ckpt)) {
        st = trainer::load_checkpoint(ckpt, train);
        if (!(st.cfg == cfg)) throw ConfigError("--resume: configuration differs from the one stored in " + ckpt.string());
        fmt::print("resuming at epoch {}\n", st.epoch);
    } else {
        st = trainer::init_state(cfg, train);
    }

    const auto hash = trainer::git_blob_hash(read_text(mpath));
    const auto started = std::chrono::steady_clock::now();
    const auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count(); };
    const auto write_log = [&](const trainer::TrainState& s) {
        std::ofstream csv(dir / "runlog.csv");
        trainer::write_csv(csv, s.log);
    };
    trainer::train(st, train, val, [&](const trainer::TrainState& s, const trainer::EpochRecord& r) {
        std::string terms = fmt::format("L_s {:.4f}", r.scribble);
        if (r.pseudo) terms += fmt::format("  L_p {:.4f}", *r.pseudo);
        for (std::size_t k = 0; k < r.contrastive.size(); ++k) terms += fmt::format("  L_c{} {:.4f}", k + 1, r.contrastive[k].value_or(0.0));
        fmt::print("epoch {:3d} {:6s} total {:.4f}  {}  |Omega_p| {}  val IoU {:.4f} mDice {:.4f}  {:.1f}s\n", r.epoch, r.stage,
                   r.total, terms, r.omega_p, r.val_iou, r.val_mdice, r.wall_seconds);
        std::fflush(stdout);
        write_log(s);
        if (s.epoch % s.cfg.checkpoint_every == 0) trainer::save_checkpoint(ckpt, s);
    }, spec.stop_after);
    write_log(st);
    trainer::save_checkpoint(ckpt, st);
    trainer::write_run_summary(dir / "run_summary.json", st, hash, elapsed());
    fmt::print("checkpoint {}\n", ckpt.string());
    return 0;
}

std::string label_for(const fs::path& ckpt) {
    if (ckpt.stem() == "checkpoint" && ckpt.has_parent_path() && !ckpt.parent_path().filename().empty()) {
        return ckpt.parent_path().filename().string();
    }
    return ckpt.stem().string();
}

std::string svg_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else out += c;
    }
    return out;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

// Total loss and validation IoU against epoch, one polyline per run.
std::string loss_curves_svg(const std::vector<std::string>& labels, const std::vector<trainer::RunLog>& logs) {
    const double w = 720, h = 300, pad = 48;
    int max_epoch = 1;
    double max_loss = 1e-9;
    for (const auto& log : logs) {
        for (const auto& r : log.records) {
            max_epoch = std::max(max_epoch, r.epoch);
            max_loss = std::max(max_loss, r.total);
        }
    }
    std::string svg = fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="12">)"
                                  "\n",
                                  w, 2 * h);
    const auto panel = [&](double top, const char* title, double ymax, auto value) {
        svg += fmt::format(R"(<text x="{}" y="{}">{}</text>)"
                           "\n",
                           pad, top + 20, title);
        svg += fmt::format(R"(<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#999"/>)"
                           "\n",
                           pad, top + pad, w - 2 * pad, h - 2 * pad);
        svg += fmt::format(R"(<text x="{}" y="{}" text-anchor="end">{:.3g}</text>)"
                           "\n",
                           pad - 4, top + pad + 4, ymax);
        svg += fmt::format(R"(<text x="{}" y="{}" text-anchor="middle">epoch {}</text>)"
                           "\n",
                           w - pad, top + h - pad + 16, max_epoch);
        for (std::size_t k = 0; k < logs.size(); ++k) {
            std::string pts;
            for (const auto& r : logs[k].records) {
                const double x = pad + (w - 2 * pad) * r.epoch / max_epoch;
                const double y = top + h - pad - (h - 2 * pad) * std::clamp(value(r) / ymax, 0.0, 1.0);
                pts += fmt::format("{:.1f},{:.1f} ", x, y);
            }
            const char* color = kPalette[k % std::size(kPalette)];
            svg += fmt::format(R"(<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>)"
                               "\n",
                               color, pts);
            svg += fmt::format(R"(<text x="{}" y="{}" fill="{}">{}</text>)"
                               "\n",
                               pad + 140 + 120 * static_cast<double>(k), top + 20, color, svg_escape(labels[k]));
        }
    };
    panel(0, "total loss", max_loss, [](const trainer::EpochRecord& r) { return r.total; });
    panel(h, "validation IoU", 1.0, [](const trainer::EpochRecord& r) { return r.val_iou; });
    return svg + "</svg>\n";
}

// mDice and IoU per checkpoint as grouped bars.
std::string metric_bars_svg(const std::vector<std::string>& labels, const std::vector<metrics::ImageScore>& means) {
    const double h = 300, pad = 48, group = 90, bar = 30;
    const double w = 2 * pad + group * static_cast<double>(labels.size());
    std::string svg = fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="12">)"
                                  "\n",
                                  w, h + 40);
    svg += fmt::format(R"(<text x="{}" y="20"><tspan fill="{}">mDice</tspan> / <tspan fill="{}">IoU</tspan></text>)"
                       "\n",
                       pad, kPalette[0], kPalette[1]);
    const double base = h - pad + 20;
    svg += fmt::format(R"(<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#999"/>)"
                       "\n",
                       pad, base, w - pad, base);
    for (std::size_t k = 0; k < labels.size(); ++k) {
        const double x0 = pad + group * static_cast<double>(k) + 10;
        const double vals[2] = {means[k].mdice, means[k].iou};
        for (int j = 0; j < 2; ++j) {
            const double bh = (h - 2 * pad) * std::clamp(vals[j], 0.0, 1.0);
            svg += fmt::format(R"(<rect x="{}" y="{:.1f}" width="{}" height="{:.1f}" fill="{}"/>)"
                               "\n",
                               x0 + j * bar, base - bh, bar - 2, bh, kPalette[j]);
            svg += fmt::format(R"(<text x="{}" y="{:.1f}" text-anchor="middle" font-size="10">{:.3f}</text>)"
                               "\n",
                               x0 + j * bar + bar / 2, base - bh - 3, vals[j]);
        }
        svg += fmt::format(R"(<text x="{}" y="{}" text-anchor="middle">{}</text>)"
                           "\n",
                           x0 + bar, base + 16, svg_escape(labels[k]));
    }
    return svg + "</svg>\n";
}

int cmd_eval(const RunSpec& spec) {
    if (spec.checkpoints.empty()) throw ConfigError("eval: at least one checkpoint is required");
    const auto mpath = manifest_path(spec.data);
    const auto manifest = data::read_manifest(mpath);
    const auto dir = output_dir(spec.out);
    std::vector<std::string> labels;
    if (!spec.labels.empty()) {
        std::stringstream ss(spec.labels);
        for (std::string item; std::getline(ss, item, ',');) labels.push_back(item);
        if (labels.size() != spec.checkpoints.size()) throw ConfigError("--labels: one label per checkpoint expected");
    } else {
        for (const auto& c : spec.checkpoints) labels.push_back(label_for(c));
    }

    std::vector<metrics::ImageScore> means;
    std::vector<trainer::RunLog> logs;
    for (std::size_t k = 0; k < spec.checkpoints.size(); ++k) {
        trainer::TrainConfig cfg;
        auto net = trainer::load_network(spec.checkpoints[k], &cfg);
        const auto samples = load_split(manifest, spec.split, cfg.network.in_channels);
        const auto scores = trainer::evaluate(net, samples, cfg.eval_batch_size);
        if (scores.empty()) throw trainer::TrainError("split '" + spec.split + "' has no records with masks");
        std::ofstream csv(dir / (labels[k] + "_metrics.csv"));
        metrics::write_csv(csv, scores);
        means.push_back(metrics::aggregate(scores, labels[k]));
        if (spec.plots) logs.push_back(trainer::load_runlog(spec.checkpoints[k]));
    }

    std::size_t width = 10;
    for (const auto& l : labels) width = std::max(width, l.size());
    const std::string column = spec.split + " (mDice / IoU)";
    std::string table = fmt::format("| {:<{}} | {} |\n|{:-<{}}|{:-<{}}|\n", "checkpoint", width, column, "", width + 2, "",
                                    column.size() + 2);
    for (std::size_t k = 0; k < labels.size(); ++k) {
        const auto cell = fmt::format("{:.4f} / {:.4f}", means[k].mdice, means[k].iou);
        table += fmt::format("| {:<{}} | {:<{}} |\n", labels[k], width, cell, column.size());
    }
    std::cout << table;
    write_text(dir / "table.md", table);
    if (spec.plots) {
        write_text(dir / "loss_curves.svg", loss_curves_svg(labels, logs));
        write_text(dir / "metric_bars.svg", metric_bars_svg(labels, means));
    }
    return 0;
}

int cmd_export(const RunSpec& spec) {
    if (spec.checkpoint.empty()) throw ConfigError("--checkpoint: a training checkpoint is required");
    const auto mpath = manifest_path(spec.data);
    const auto manifest = data::read_manifest(mpath);
    const auto dir = output_dir(spec.out);
    const auto trackers = trainer::load_trackers(spec.checkpoint);
    trainer::TrainConfig cfg;
    trainer::load_network(spec.checkpoint, &cfg);
    std::vector<int> deltas;
    if (!spec.deltas.empty()) deltas = parse_int_list(spec.deltas, "--delta");
    else {
        for (const auto& s : cfg.loss.scales) deltas.push_back(s.delta);
    }
    for (int d : deltas) {
        if (d < 1) throw ConfigError("--delta: values must be positive");
    }

    const auto train = load_split(manifest, "train", cfg.network.in_channels);
    if (train.size() != trackers.size()) {
        throw trainer::TrainError(fmt::format("checkpoint tracks {} training images, the manifest lists {}; export needs the "
                                              "manifest the checkpoint was trained on",
                                              trackers.size(), train.size()));
    }
    for (std::size_t i = 0; i < train.size(); ++i) {
        const auto& s = train[i];
        const auto pseudo = pseudolabel::filter_pseudo(trackers[i], s.scribbles, cfg.filter.threshold);
        data::write_gray8(dir / (s.id + "_pseudo.png"), pseudolabel::to_u8(pseudo.labels()));
        for (int d : deltas) {
            const auto pooled = pseudolabel::downscale_labels(pseudo, s.scribbles, d, cfg.loss.nu1, cfg.loss.nu2);
            data::write_gray8(dir / fmt::format("{}_pseudo_d{}.png", s.id, d), pseudolabel::to_u8(pooled.labels()));
        }
    }
    fmt::print("wrote pseudo-labels of {} images to {}\n", train.size(), dir.string());
    return 0;
}

std::string keys_footer(const json& defaults, const std::string& heading) {
    std::string out = "\n" + heading + "\n";
    for (const auto& k : trainer::config_keys(defaults)) out += fmt::format("  {} = {}\n", k.key, k.default_value);
    return out;
}

void add_common(CLI::App* cmd, RunSpec& spec) {
    cmd->add_option("--config", spec.config, "JSON config file");
    cmd->add_option("--out", spec.out, "output directory")->required();
    cmd->add_option("--seed", spec.seed, "random seed (overrides the config)");
    cmd->add_option("overrides", spec.overrides, "key=value config overrides");
}

}  // namespace

int main(int argc, char** argv) {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);

    CLI::App app{"Scribble-supervised cell segmentation with multiscale contrastive regularization"};
    app.require_subcommand(1);
    RunSpec spec;

    const auto train_keys = keys_footer(trainer::to_json(trainer::TrainConfig{}), "Training config keys (defaults):");
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset with scribbles and a manifest");
    add_common(synth, spec);
    synth->footer(keys_footer(trainer::to_json(trainer::SynthRunConfig{}), "Config keys (defaults):"));

    auto* train = app.add_subcommand("train", "warm-up then main-stage training");
    add_common(train, spec);
    train->add_option("--data", spec.data, "manifest file or dataset directory")->required();
    train->add_flag("--no-contrastive", spec.no_contrastive, "train without contrastive regularizers");
    train->add_option("--scales", spec.scales, "comma-separated deltas of the regularizers to keep, e.g. 1,4");
    train->add_option("--pair-op", spec.pair_op, "pair labeling: or, and, xnor");
    train->add_flag("--resume", spec.resume, "continue from <out>/checkpoint.ckpt when present");
    train->add_option("--stop-after", spec.stop_after, "stop after this epoch; continue later with --resume");
    train->footer(train_keys);

    auto* eval = app.add_subcommand("eval", "score checkpoints and print an mDice / IoU table");
    eval->add_option("checkpoints", spec.checkpoints, "checkpoint files")->required();
    eval->add_option("--data", spec.data, "manifest file or dataset directory")->required();
    eval->add_option("--out", spec.out, "output directory")->required();
    eval->add_option("--split", spec.split, "split to score")->default_val("val");
    eval->add_option("--labels", spec.labels, "comma-separated row labels");
    eval->add_flag("--plots", spec.plots, "also write loss_curves.svg and metric_bars.svg");
    eval->footer(train_keys + "Evaluation uses the config stored in each checkpoint.\n");

    auto* exp = app.add_subcommand("export-pseudo", "write pseudo-label rasters from a training checkpoint");
    exp->add_option("--checkpoint", spec.checkpoint, "checkpoint written by train")->required();
    exp->add_option("--data", spec.data, "manifest the checkpoint was trained on")->required();
    exp->add_option("--out", spec.out, "output directory")->required();
    exp->add_option("--delta", spec.deltas, "comma-separated block sizes (default: the configured scales)");
    exp->footer(train_keys + "Export uses the config stored in the checkpoint.\n");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*synth) return cmd_synth(spec);
        if (*train) return cmd_train(spec);
        if (*eval) return cmd_eval(spec);
        return cmd_export(spec);
    } catch (const ConfigError& e) {
        fmt::print(stderr, "config error: {}\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    }
}
