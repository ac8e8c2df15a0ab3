#include "s2l/model/unet.hpp"

#include <algorithm>
#include <cmath>

namespace s2l::model {

std::vector<std::string> validate(const NetworkConfig& cfg) {
    std::vector<std::string> out;
    if (cfg.depth < 2) out.emplace_back("depth >= 2");
    if (cfg.widths.empty() || std::any_of(cfg.widths.begin(), cfg.widths.end(), [](int w) { return w < 1; })) {
        out.emplace_back("widths positive");
    }
    if (cfg.in_channels < 1) out.emplace_back("in_channels >= 1");
    if (cfg.convs_per_block < 1) out.emplace_back("convs_per_block >= 1");
    return out;
}

std::vector<std::string> validate(const ProjectionHeadConfig& cfg) {
    std::vector<std::string> out;
    if (cfg.in_dim < 1) out.emplace_back("in_dim >= 1");
    if (cfg.out_dim < 1) out.emplace_back("out_dim >= 1");
    if (cfg.depth < 1) out.emplace_back("head depth >= 1");
    return out;
}

template <typename Real>
UNet<Real>::UNet(const NetworkConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    if (auto v = validate(cfg); !v.empty()) throw ModelError("network config: " + v.front());
    const int d = cfg.depth;
    int in = cfg.in_channels;
    for (int k = 0; k + 1 < d; ++k) {
        encoder_.emplace_back("enc" + std::to_string(k), in, cfg.width(k), cfg.convs_per_block);
        pools_.emplace_back();
        in = cfg.width(k);
    }
    decoder_.emplace_back("dec1", in, cfg.width(d - 1), cfg.convs_per_block);
    stage_channels_.push_back(cfg.width(d - 1));
    for (int stage = 2; stage <= d; ++stage) {
        const int level = d - stage;
        decoder_.emplace_back("dec" + std::to_string(stage), cfg.width(level + 1) + cfg.width(level), cfg.width(level),
                              cfg.convs_per_block);
        stage_channels_.push_back(cfg.width(level));
    }
    head_ = Conv2d<Real>("head", cfg.width(0), 1, 1, true);

    std::mt19937_64 rng(seed);
    for (auto& b : encoder_) b.init(rng);
    for (auto& b : decoder_) b.init(rng);
    head_.init(rng);
}

template <typename Real>
int UNet<Real>::stage_delta(int stage) const {
    if (stage < 1 || stage > cfg_.depth) throw ModelError("invalid decoder stage " + std::to_string(stage));
    return 1 << (cfg_.depth - stage);
}

template <typename Real>
int UNet<Real>::stage_channels(int stage) const {
    stage_delta(stage);
    return stage_channels_[stage - 1];
}

template <typename Real>
NetworkOutput<Real> UNet<Real>::forward(const Tensor<Real>& x, bool train, std::span<const int> taps) {
    for (int t : taps) stage_delta(t);
    if (x.h % size_multiple() != 0 || x.w % size_multiple() != 0) {
        throw ModelError("input " + std::to_string(x.h) + "x" + std::to_string(x.w) + " not divisible by " +
                         std::to_string(size_multiple()));
    }
    NetworkOutput<Real> out;
    std::vector<Tensor<Real>> skips;
    Tensor<Real> h = x;
    for (std::size_t k = 0; k < encoder_.size(); ++k) {
        skips.push_back(encoder_[k].forward(h, train));
        h = pools_[k].forward(skips.back(), train);
    }
    const auto tapped = [&](int stage) { return std::find(taps.begin(), taps.end(), stage) != taps.end(); };
    h = decoder_[0].forward(h, train);
    if (tapped(1)) out.taps[1] = h;
    for (int stage = 2; stage <= cfg_.depth; ++stage) {
        const int level = cfg_.depth - stage;
        h = decoder_[stage - 1].forward(concat(upsample2(h), skips[level]), train);
        skips[level] = Tensor<Real>();
        if (tapped(stage)) out.taps[stage] = h;
    }
    out.logits = head_.forward(h, train);
    out.prob = out.logits;
    for (auto& v : out.prob.data) v = Real(1) / (Real(1) + std::exp(-v));
    return out;
}

template <typename Real>
void UNet<Real>::backward(const Tensor<Real>& dlogits, const std::map<int, Tensor<Real>>& dtaps) {
    const auto with_tap = [&](Tensor<Real> g, int stage) {
        if (auto it = dtaps.find(stage); it != dtaps.end()) add_into(g, it->second);
        return g;
    };
    const int d = cfg_.depth;
    std::vector<Tensor<Real>> dskips(encoder_.size());
    Tensor<Real> g = with_tap(head_.backward(dlogits), d);
    for (int stage = d; stage >= 2; --stage) {
        const int level = d - stage;
        const Tensor<Real> dcat = decoder_[stage - 1].backward(g);
        Tensor<Real> dup;
        split(dcat, stage_channels_[stage - 2], dup, dskips[level]);
        g = with_tap(upsample2_backward(dup), stage - 1);
    }
    g = decoder_[0].backward(g);
    for (std::size_t k = encoder_.size(); k-- > 0;) {
        Tensor<Real> ds = pools_[k].backward(g);
        add_into(ds, dskips[k]);
        g = encoder_[k].backward(ds);
    }
}

template <typename Real>
std::vector<Param<Real>*> UNet<Real>::parameters() {
    std::vector<Param<Real>*> out;
    for (auto& b : encoder_) b.collect(out);
    for (auto& b : decoder_) b.collect(out);
    head_.collect(out);
    return out;
}

template <typename Real>
std::vector<Buffer<Real>> UNet<Real>::buffers() {
    std::vector<Buffer<Real>> out;
    for (auto& b : encoder_) b.collect(out);
    for (auto& b : decoder_) b.collect(out);
    return out;
}

template <typename Real>
std::size_t UNet<Real>::parameter_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->value.size();
    return n;
}

template <typename Real>
void UNet<Real>::zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
}

template <typename Real>
ProjectionHead<Real>::ProjectionHead(const std::string& name, const ProjectionHeadConfig& cfg, std::uint64_t seed)
    : cfg_(cfg) {
    if (auto v = validate(cfg); !v.empty()) throw ModelError("projection head config: " + v.front());
    int in = cfg.in_dim;
    for (int i = 0; i < cfg.depth; ++i) {
        const bool last = i + 1 == cfg.depth;
        const std::string n = name + "." + std::to_string(i);
        convs_.emplace_back(n + ".conv", in, cfg.out_dim, 1, last);
        if (!last) {
            norms_.emplace_back(n + ".bn", cfg.out_dim);
            relus_.emplace_back();
        }
        in = cfg.out_dim;
    }
    std::mt19937_64 rng(seed);
    for (auto& c : convs_) c.init(rng);
}

template <typename Real>
Tensor<Real> ProjectionHead<Real>::forward(const Tensor<Real>& x, bool train) {
    if (x.c != cfg_.in_dim) {
        throw ModelError("projection head expects " + std::to_string(cfg_.in_dim) + " channels, got " +
                         std::to_string(x.c));
    }
    Tensor<Real> h = x;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        h = convs_[i].forward(h, train);
        if (i < norms_.size()) {
            h = norms_[i].forward(h, train);
            h = relus_[i].forward(h, train);
        }
    }
    return h;
}

template <typename Real>
Tensor<Real> ProjectionHead<Real>::backward(const Tensor<Real>& dy) {
    Tensor<Real> g = dy;
    for (std::size_t i = convs_.size(); i-- > 0;) {
        if (i < norms_.size()) {
            g = relus_[i].backward(g);
            g = norms_[i].backward(g);
        }
        g = convs_[i].backward(g);
    }
    return g;
}

template <typename Real>
std::vector<Param<Real>*> ProjectionHead<Real>::parameters() {
    std::vector<Param<Real>*> out;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        convs_[i].collect(out);
        if (i < norms_.size()) norms_[i].collect(out);
    }
    return out;
}

template <typename Real>
std::vector<Buffer<Real>> ProjectionHead<Real>::buffers() {
    std::vector<Buffer<Real>> out;
    for (auto& n : norms_) n.collect(out);
    return out;
}

template <typename Real>
void ProjectionHead<Real>::zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
}

template <typename Real>
void Adam<Real>::step(const std::vector<Param<Real>*>& params) {
    if (m_.empty()) {
        for (auto* p : params) {
            m_.emplace_back(p->value.size(), Real(0));
            v_.emplace_back(p->value.size(), Real(0));
        }
    }
    if (m_.size() != params.size()) throw ModelError("adam: parameter list changed between steps");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const Real b1 = static_cast<Real>(cfg_.beta1), b2 = static_cast<Real>(cfg_.beta2);
    const Real step = static_cast<Real>(cfg_.lr / c1);
    const Real inv_c2 = static_cast<Real>(1.0 / c2);
    const Real eps = static_cast<Real>(cfg_.eps);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = *params[k];
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const Real g = p.grad[i];
            m[i] = b1 * m[i] + (1 - b1) * g;
            v[i] = b2 * v[i] + (1 - b2) * g * g;
            p.value[i] -= step * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
        }
    }
}

template <typename Real>
void Adam<Real>::save(Archive& archive, const std::string& prefix) const {
    const std::uint64_t t = t_;
    archive.put<std::uint64_t>(prefix + ".t", std::span(&t, 1));
    for (std::size_t k = 0; k < m_.size(); ++k) {
        archive.put<Real>(prefix + ".m." + std::to_string(k), std::span<const Real>(m_[k]));
        archive.put<Real>(prefix + ".v." + std::to_string(k), std::span<const Real>(v_[k]));
    }
}

template <typename Real>
void Adam<Real>::load(const Archive& archive, const std::string& prefix) {
    const auto t = archive.get<std::uint64_t>(prefix + ".t");
    if (t.size() != 1) throw ArchiveError("archive: malformed optimizer state");
    t_ = t[0];
    m_.clear();
    v_.clear();
    for (std::size_t k = 0; archive.contains(prefix + ".m." + std::to_string(k)); ++k) {
        m_.push_back(archive.get<Real>(prefix + ".m." + std::to_string(k)));
        v_.push_back(archive.get<Real>(prefix + ".v." + std::to_string(k)));
    }
}

template <typename Real>
void save_state(Archive& archive, const std::string& prefix, const std::vector<Param<Real>*>& params,
                const std::vector<Buffer<Real>>& buffers) {
    for (const auto* p : params) archive.put<Real>(prefix + p->name, std::span<const Real>(p->value));
    for (const auto& b : buffers) archive.put<Real>(prefix + b.name, std::span<const Real>(*b.values));
}

template <typename Real>
void load_state(const Archive& archive, const std::string& prefix, const std::vector<Param<Real>*>& params,
                const std::vector<Buffer<Real>>& buffers) {
    const auto fetch = [&](const std::string& name, std::vector<Real>& dst) {
        auto v = archive.get<Real>(prefix + name);
        if (v.size() != dst.size()) {
            throw ArchiveError("archive: '" + prefix + name + "' has " + std::to_string(v.size()) + " values, expected " +
                               std::to_string(dst.size()));
        }
        dst = std::move(v);
    };
    for (auto* p : params) fetch(p->name, p->value);
    for (const auto& b : buffers) fetch(b.name, *b.values);
}

template <typename Real>
Tensor<Real> to_tensor(std::span<const ImageGrid* const> images) {
    if (images.empty()) throw ModelError("empty image batch");
    const auto& first = *images.front();
    Tensor<Real> t(static_cast<int>(images.size()), first.height(), first.width(), first.channels());
    for (std::size_t b = 0; b < images.size(); ++b) {
        const auto& im = *images[b];
        if (im.height() != t.h || im.width() != t.w || im.channels() != t.c) throw ModelError("image batch shapes differ");
        std::copy(im.pixels().values().begin(), im.pixels().values().end(), t.data.begin() + b * t.item_size());
    }
    return t;
}

template <typename Real>
Tensor<Real> to_tensor(const ImageGrid& image) {
    const ImageGrid* p = &image;
    return to_tensor<Real>(std::span<const ImageGrid* const>(&p, 1));
}

template <typename Real, typename Out>
Raster<Out> item_raster(const Tensor<Real>& t, int b) {
    const auto first = t.data.begin() + static_cast<std::ptrdiff_t>(b * t.item_size());
    return Raster<Out>(t.h, t.w, t.c, std::vector<Out>(first, first + static_cast<std::ptrdiff_t>(t.item_size())));
}

template <typename Real, typename In>
void set_item(Tensor<Real>& t, int b, const std::vector<In>& interleaved) {
    if (interleaved.size() != t.item_size()) throw ModelError("set_item: size mismatch");
    std::copy(interleaved.begin(), interleaved.end(), t.data.begin() + static_cast<std::ptrdiff_t>(b * t.item_size()));
}

template <typename Real>
std::pair<PredictionGrid, std::vector<FeatureTap>> forward_with_taps(UNet<Real>& net, const ImageGrid& image,
                                                                     std::span<const int> taps) {
    auto out = net.forward(to_tensor<Real>(image), false, taps);
    PredictionGrid pred(item_raster<Real, double>(out.prob, 0));
    std::vector<FeatureTap> features;
    for (int t : taps) {
        features.emplace_back(item_raster<Real, double>(out.taps.at(t), 0), t, net.stage_delta(t), net.stage_count());
    }
    return {std::move(pred), std::move(features)};
}

template <typename Real>
EmbeddingGrid project(ProjectionHead<Real>& head, const FeatureTap& tap) {
    if (tap.channels() != head.config().in_dim) {
        throw ModelError("projection head expects " + std::to_string(head.config().in_dim) + " channels, tap has " +
                         std::to_string(tap.channels()));
    }
    Tensor<Real> x(1, tap.height(), tap.width(), tap.channels());
    set_item(x, 0, std::vector<double>(tap.features().values().begin(), tap.features().values().end()));
    return EmbeddingGrid(item_raster<Real, double>(head.forward(x, false), 0), tap.delta());
}

#define S2L_INSTANTIATE(Real)                                                                                      \
    template class UNet<Real>;                                                                                     \
    template class ProjectionHead<Real>;                                                                           \
    template class Adam<Real>;                                                                                     \
    template void save_state<Real>(Archive&, const std::string&, const std::vector<Param<Real>*>&,                 \
                                   const std::vector<Buffer<Real>>&);                                              \
    template void load_state<Real>(const Archive&, const std::string&, const std::vector<Param<Real>*>&,           \
                                   const std::vector<Buffer<Real>>&);                                              \
    template Tensor<Real> to_tensor<Real>(std::span<const ImageGrid* const>);                                      \
    template Tensor<Real> to_tensor<Real>(const ImageGrid&);                                                       \
    template Raster<Real> item_raster<Real, Real>(const Tensor<Real>&, int);                                       \
    template void set_item<Real, float>(Tensor<Real>&, int, const std::vector<float>&);                            \
    template void set_item<Real, double>(Tensor<Real>&, int, const std::vector<double>&);                          \
    template std::pair<PredictionGrid, std::vector<FeatureTap>> forward_with_taps<Real>(UNet<Real>&,               \
                                                                                       const ImageGrid&,           \
                                                                                       std::span<const int>);      \
    template EmbeddingGrid project<Real>(ProjectionHead<Real>&, const FeatureTap&);

S2L_INSTANTIATE(float)
S2L_INSTANTIATE(double)
template Raster<double> item_raster<float, double>(const Tensor<float>&, int);
template Raster<float> item_raster<double, float>(const Tensor<double>&, int);

#undef S2L_INSTANTIATE

}  // namespace s2l::model
