#include "s2l/trainer/trainer.hpp"

#include "s2l/losses/bce.hpp"
#include "s2l/losses/pixel_losses.hpp"
#include "s2l/losses/total.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

namespace s2l::trainer {

namespace {

using Clock = std::chrono::steady_clock;

// The eight symmetries of the square: quarter turns, then an optional mirror.
struct Dihedral {
    int turns = 0;
    bool mirror = false;
};

// Cell of the source window shown at (y, x) of the transformed n x n window.
std::pair<int, int> source(Dihedral d, int y, int x, int n) {
    int a = y, b = x;
    for (int k = 0; k < d.turns; ++k) {
        const int t = a;
        a = b;
        b = n - 1 - t;
    }
    if (d.mirror) b = n - 1 - b;
    return {a, b};
}

template <typename T>
Raster<T> window(const Raster<T>& r, int y0, int x0, int n, Dihedral d) {
    const int c = r.channels();
    Raster<T> out(n, n, c);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const auto [sy, sx] = source(d, y, x, n);
            for (int k = 0; k < c; ++k) out(y, x, k) = r(y0 + sy, x0 + sx, k);
        }
    }
    return out;
}

template <typename T>
Raster<T> unwindow(const Raster<T>& r, Dihedral d) {
    const int n = r.height(), c = r.channels();
    Raster<T> out(n, n, c);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const auto [sy, sx] = source(d, y, x, n);
            for (int k = 0; k < c; ++k) out(sy, sx, k) = r(y, x, k);
        }
    }
    return out;
}

std::mt19937_64 epoch_rng(const TrainConfig& cfg, int epoch) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(epoch), 0x7261696eu};
    return std::mt19937_64(seq);
}

struct BatchItem {
    std::size_t index;
    int y0, x0;
    Dihedral d;
};

int crop_extent(const TrainConfig& cfg, const std::vector<data::Sample>& train) {
    int side = cfg.crop_size;
    for (const auto& s : train) side = std::min({side, s.image.height(), s.image.width()});
    const int multiple = 1 << (cfg.network.depth - 1);
    side -= side % multiple;
    if (side < multiple) throw TrainError("training images are smaller than the network downsampling factor");
    return side;
}

int offset_step(const TrainConfig& cfg) {
    int q = 1;
    for (const auto& s : cfg.loss.scales) q = std::max(q, s.delta);
    return q;
}

struct StepOutcome {
    bool applied = false;
    losses::LossBreakdown breakdown;
};

StepOutcome train_step(TrainState& st, const std::vector<data::Sample>& train, const std::vector<BatchItem>& items,
                       int n, bool main_stage, bool track_ema, std::uint64_t sample_seed) {
    const auto& cfg = st.cfg;
    const int batch = static_cast<int>(items.size());
    model::Tensor<float> x(batch, n, n, cfg.network.in_channels);
    std::vector<ScribbleMap> scribbles;
    std::vector<PseudoLabelMap> pseudo;
    for (int b = 0; b < batch; ++b) {
        const auto& it = items[static_cast<std::size_t>(b)];
        const auto& s = train[it.index];
        model::set_item(x, b, window(s.image.pixels(), it.y0, it.x0, n, it.d).storage());
        scribbles.emplace_back(window(s.scribbles.flags(), it.y0, it.x0, n, it.d));
        if (main_stage) pseudo.emplace_back(window(st.pseudo[it.index].labels(), it.y0, it.x0, n, it.d));
    }
    std::vector<int> taps;
    if (main_stage) {
        for (const auto& s : cfg.loss.scales) taps.push_back(s.tap);
    }

    st.net.zero_grad();
    for (auto& h : st.heads) h.zero_grad();
    auto out = st.net.forward(x, true, taps);
    std::vector<PredictionGrid> preds;
    for (int b = 0; b < batch; ++b) preds.emplace_back(model::item_raster<float, double>(out.prob, b));

    StepOutcome result;
    std::vector<std::vector<double>> pred_grad;
    std::map<int, model::Tensor<float>> dtaps;
    try {
        if (!main_stage) {
            auto ls = losses::scribble_loss_batch(preds, scribbles, true);
            result.breakdown.scribble = result.breakdown.total = ls.value;
            pred_grad = std::move(ls.grad);
        } else {
            const std::size_t n_scales = cfg.loss.scales.size();
            std::vector<model::Tensor<float>> z(n_scales);
            std::vector<std::vector<BasicEmbeddingGrid<float>>> grids(n_scales);
            std::vector<std::vector<DownscaledLabelMap>> labels(n_scales);
            std::vector<losses::ScaleBatch<float>> scales;
            for (std::size_t s = 0; s < n_scales; ++s) {
                const auto& spec = cfg.loss.scales[s];
                z[s] = st.heads[s].forward(out.taps.at(spec.tap), true);
                const int m = n / spec.delta;
                for (int b = 0; b < batch; ++b) {
                    const auto& it = items[static_cast<std::size_t>(b)];
                    grids[s].emplace_back(model::item_raster<float, float>(z[s], b), spec.delta);
                    labels[s].emplace_back(window(st.downscaled[it.index][s].labels(), it.y0 / spec.delta,
                                                  it.x0 / spec.delta, m, it.d),
                                           spec.delta, cfg.loss.nu1, cfg.loss.nu2, n, n);
                }
                scales.push_back({grids[s], labels[s]});
            }
            auto res = losses::total_loss_batch<float>(preds, scribbles, pseudo, scales, cfg.loss, sample_seed, true,
                                                       losses::DegeneratePolicy::skip);
            result.breakdown = std::move(res.breakdown);
            pred_grad = std::move(res.pred_grad);
            for (std::size_t s = 0; s < n_scales; ++s) {
                model::Tensor<float> dz(z[s].n, z[s].h, z[s].w, z[s].c);
                for (int b = 0; b < batch; ++b) model::set_item(dz, b, res.embedding_grad[s][static_cast<std::size_t>(b)]);
                model::add_into(dtaps[cfg.loss.scales[s].tap], st.heads[s].backward(dz));
            }
        }
    } catch (const losses::LossError&) {
        // no scribbled pixel in any crop of the batch
        return result;
    }
    if (!std::isfinite(result.breakdown.total)) {
        throw TrainError("divergence: non-finite loss at epoch " + std::to_string(st.epoch + 1));
    }

    model::Tensor<float> dlogits(batch, n, n, 1);
    for (int b = 0; b < batch; ++b) {
        const auto& g = pred_grad[static_cast<std::size_t>(b)];
        const std::size_t base = static_cast<std::size_t>(b) * n * n;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double t = out.prob.data[base + i];
            dlogits.data[base + i] = static_cast<float>(g[i] * t * (1.0 - t));
        }
    }
    st.net.backward(dlogits, dtaps);
    st.optimizer.step(st.parameters());
    result.applied = true;

    if (track_ema) {
        for (int b = 0; b < batch; ++b) {
            const auto& it = items[static_cast<std::size_t>(b)];
            PredictionGrid crop(unwindow(preds[static_cast<std::size_t>(b)].raster(), it.d));
            pseudolabel::ema_update(st.trackers[it.index], crop, it.y0, it.x0);
        }
    }
    return result;
}

EpochRecord run_epoch(TrainState& st, const std::vector<data::Sample>& train, const std::vector<data::Sample>& val,
                      bool main_stage) {
    const auto started = Clock::now();
    const auto& cfg = st.cfg;
    const int epoch = st.epoch + 1;
    auto rng = epoch_rng(cfg, epoch);
    const int n = crop_extent(cfg, train);
    const int q = offset_step(cfg);

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.stage = main_stage ? "main" : "warmup";
    const std::size_t n_scales = main_stage ? cfg.loss.scales.size() : 0;
    std::vector<double> contrastive(n_scales, 0.0);
    double pseudo_sum = 0.0;
    const bool track_ema = epoch >= cfg.ema_start_epoch;

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
        std::vector<BatchItem> items;
        for (std::size_t k = start; k < std::min(order.size(), start + cfg.batch_size); ++k) {
            const auto& img = train[order[k]].image;
            BatchItem it{order[k], 0, 0, {}};
            it.y0 = q * std::uniform_int_distribution<int>(0, (img.height() - n) / q)(rng);
            it.x0 = q * std::uniform_int_distribution<int>(0, (img.width() - n) / q)(rng);
            if (cfg.augment.rotations) it.d.turns = std::uniform_int_distribution<int>(0, 3)(rng);
            if (cfg.augment.flips) it.d.mirror = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
            items.push_back(it);
        }
        const std::uint64_t sample_seed = rng();
        const auto step = train_step(st, train, items, n, main_stage, track_ema, sample_seed);
        if (!step.applied) continue;
        ++rec.steps;
        const auto& bd = step.breakdown;
        rec.total += bd.total;
        rec.scribble += bd.scribble;
        pseudo_sum += bd.pseudo;
        for (std::size_t s = 0; s < n_scales; ++s) {
            if (bd.contrastive[s]) contrastive[s] += *bd.contrastive[s];
            else ++rec.skipped;
        }
    }
    if (rec.steps > 0) {
        const double k = rec.steps;
        rec.total /= k;
        rec.scribble /= k;
        pseudo_sum /= k;
        for (auto& c : contrastive) c /= k;
    }
    if (main_stage) {
        rec.pseudo = pseudo_sum;
        for (double c : contrastive) rec.contrastive.emplace_back(c);
    }

    const int main_epoch = epoch - cfg.warmup_epochs;
    if ((!main_stage && epoch == cfg.warmup_epochs) || (main_stage && main_epoch % cfg.filter.refresh_period == 0)) {
        refresh_pseudo(st, train);
        rec.refreshed = true;
    }
    for (const auto& p : st.pseudo) rec.omega_p += p.confident_count();

    if (!val.empty()) {
        const auto scores = evaluate(st.net, val, cfg.eval_batch_size);
        if (!scores.empty()) {
            const auto agg = metrics::aggregate(scores);
            rec.val_iou = agg.iou;
            rec.val_mdice = agg.mdice;
        }
    }
    st.epoch = epoch;
    rec.wall_seconds = std::chrono::duration<double>(Clock::now() - started).count();
    st.log.records.push_back(rec);
    return rec;
}

}  // namespace

std::vector<model::Param<float>*> TrainState::parameters() {
    auto out = net.parameters();
    for (auto& h : heads) {
        for (auto* p : h.parameters()) out.push_back(p);
    }
    return out;
}

TrainState init_state(const TrainConfig& cfg, const std::vector<data::Sample>& train) {
    if (const auto bad = validate(cfg); !bad.empty()) throw ConfigError("invalid config: " + bad.front());
    if (train.empty()) throw TrainError("empty training set");
    TrainState st;
    st.cfg = cfg;
    st.net = model::UNet<float>(cfg.network, cfg.seed);
    for (std::size_t s = 0; s < cfg.loss.scales.size(); ++s) {
        const auto& spec = cfg.loss.scales[s];
        st.heads.emplace_back("head" + std::to_string(s),
                              model::ProjectionHeadConfig{st.net.stage_channels(spec.tap), cfg.projection_dim, cfg.projection_depth},
                              cfg.seed + 1 + s);
        st.log.scale_weights.push_back(spec.weight);
    }
    st.optimizer = model::Adam<float>(cfg.optimizer);
    for (const auto& s : train) {
        if (s.image.channels() != cfg.network.in_channels) {
            throw TrainError("image " + s.id + " has " + std::to_string(s.image.channels()) + " channels, the network expects " +
                             std::to_string(cfg.network.in_channels));
        }
        if (s.scribbles.height() != s.image.height() || s.scribbles.width() != s.image.width()) {
            throw TrainError("image " + s.id + ": scribble map shape differs from the image");
        }
        st.trackers.emplace_back(cfg.filter.momentum, s.image.height(), s.image.width());
    }
    crop_extent(cfg, train);
    return st;
}

void refresh_pseudo(TrainState& st, const std::vector<data::Sample>& train) {
    const auto& cfg = st.cfg;
    st.pseudo.clear();
    st.downscaled.clear();
    for (std::size_t i = 0; i < train.size(); ++i) {
        const auto& scr = train[i].scribbles;
        if (st.trackers[i].initialized()) {
            st.pseudo.push_back(pseudolabel::filter_pseudo(st.trackers[i], scr, cfg.filter.threshold));
        } else {
            Raster<Label> only(scr.height(), scr.width(), 1, Label::ignore);
            for (std::size_t p = 0; p < scr.size(); ++p) only[p] = scr.label(p);
            st.pseudo.emplace_back(std::move(only));
        }
        std::vector<DownscaledLabelMap> pooled;
        for (const auto& s : cfg.loss.scales) {
            pooled.push_back(pseudolabel::downscale_labels(st.pseudo.back(), scr, s.delta, cfg.loss.nu1, cfg.loss.nu2));
        }
        st.downscaled.push_back(std::move(pooled));
    }
}

void run_warmup(TrainState& st, const std::vector<data::Sample>& train, const std::vector<data::Sample>& val,
                const EpochCallback& on_epoch, int until) {
    const int last = until < 0 ? st.cfg.warmup_epochs : std::min(until, st.cfg.warmup_epochs);
    while (st.epoch < last) {
        const auto rec = run_epoch(st, train, val, false);
        if (on_epoch) on_epoch(st, rec);
    }
}

void run_main(TrainState& st, const std::vector<data::Sample>& train, const std::vector<data::Sample>& val,
              const EpochCallback& on_epoch, int until) {
    const int end = st.cfg.warmup_epochs + st.cfg.main_epochs;
    const int last = until < 0 ? end : std::min(until, end);
    if (st.epoch < last && (st.epoch < st.cfg.warmup_epochs || st.pseudo.size() != train.size())) {
        throw TrainError("main stage needs a finished warm-up (pseudo-labels missing)");
    }
    while (st.epoch < last) {
        const auto rec = run_epoch(st, train, val, true);
        if (on_epoch) on_epoch(st, rec);
    }
}

void train(TrainState& st, const std::vector<data::Sample>& train_set, const std::vector<data::Sample>& val,
           const EpochCallback& on_epoch, int until) {
    run_warmup(st, train_set, val, on_epoch, until);
    run_main(st, train_set, val, on_epoch, until);
}

std::vector<PredictionGrid> predict(model::UNet<float>& net, const std::vector<data::Sample>& samples, int batch_size) {
    std::vector<PredictionGrid> out;
    std::size_t i = 0;
    while (i < samples.size()) {
        std::vector<const ImageGrid*> batch{&samples[i].image};
        while (i + batch.size() < samples.size() && static_cast<int>(batch.size()) < batch_size &&
               samples[i + batch.size()].image.height() == samples[i].image.height() &&
               samples[i + batch.size()].image.width() == samples[i].image.width()) {
            batch.push_back(&samples[i + batch.size()].image);
        }
        const auto res = net.forward(model::to_tensor<float>(std::span<const ImageGrid* const>(batch)), false);
        for (int b = 0; b < static_cast<int>(batch.size()); ++b) out.emplace_back(model::item_raster<float, double>(res.prob, b));
        i += batch.size();
    }
    return out;
}

std::vector<metrics::ImageScore> score(const std::vector<PredictionGrid>& preds, const std::vector<data::Sample>& samples) {
    std::vector<metrics::ImageScore> out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].mask) out.push_back(metrics::score_image(samples[i].id, preds[i], *samples[i].mask));
    }
    return out;
}

std::vector<metrics::ImageScore> evaluate(model::UNet<float>& net, const std::vector<data::Sample>& samples,
                                          int batch_size) {
    return score(predict(net, samples, batch_size), samples);
}

}  // namespace s2l::trainer
