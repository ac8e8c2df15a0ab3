#pragma once

#include "s2l/core/archive.hpp"
#include "s2l/core/types.hpp"
#include "s2l/model/layers.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

namespace s2l::model {

struct NetworkConfig {
    // Level k uses widths[min(k, size - 1)].
    std::vector<int> widths{16, 32, 64, 128};
    // Resolution levels; the decoder has `depth` stages, stage 1 being the
    // bottleneck at 1/2^(depth-1) and stage `depth` at full resolution.
    int depth = 5;
    int in_channels = 1;
    int convs_per_block = 2;

    int width(int level) const { return widths[std::min<std::size_t>(level, widths.size() - 1)]; }
    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

struct ProjectionHeadConfig {
    int in_dim = 16;
    int out_dim = 32;
    // Convolutions in the head; all but the last are followed by BN + ReLU.
    int depth = 2;
    friend bool operator==(const ProjectionHeadConfig&, const ProjectionHeadConfig&) = default;
};

std::vector<std::string> validate(const NetworkConfig& cfg);
std::vector<std::string> validate(const ProjectionHeadConfig& cfg);

template <typename Real>
struct NetworkOutput {
    Tensor<Real> logits;
    Tensor<Real> prob;
    // Requested decoder stage outputs, keyed by stage.
    std::map<int, Tensor<Real>> taps;
};

template <typename Real>
class UNet {
public:
    UNet() = default;
    UNet(const NetworkConfig& cfg, std::uint64_t seed);

    const NetworkConfig& config() const noexcept { return cfg_; }
    int stage_count() const noexcept { return cfg_.depth; }
    int stage_delta(int stage) const;
    int stage_channels(int stage) const;
    // Spatial sizes must be multiples of this.
    int size_multiple() const noexcept { return 1 << (cfg_.depth - 1); }

    // train = true uses batch statistics and keeps what backward needs.
    NetworkOutput<Real> forward(const Tensor<Real>& x, bool train, std::span<const int> taps = {});
    // Gradients w.r.t. the logits and, optionally, the tapped stage outputs.
    void backward(const Tensor<Real>& dlogits, const std::map<int, Tensor<Real>>& dtaps = {});

    std::vector<Param<Real>*> parameters();
    std::vector<Buffer<Real>> buffers();
    std::size_t parameter_count();
    void zero_grad();

private:
    NetworkConfig cfg_;
    std::vector<ConvBlock<Real>> encoder_;
    std::vector<MaxPool<Real>> pools_;
    // decoder_[0] is stage 1 (bottleneck)
    std::vector<ConvBlock<Real>> decoder_;
    Conv2d<Real> head_;
    std::vector<int> stage_channels_;
};

template <typename Real>
class ProjectionHead {
public:
    ProjectionHead() = default;
    ProjectionHead(const std::string& name, const ProjectionHeadConfig& cfg, std::uint64_t seed);

    const ProjectionHeadConfig& config() const noexcept { return cfg_; }
    Tensor<Real> forward(const Tensor<Real>& x, bool train);
    Tensor<Real> backward(const Tensor<Real>& dy);

    std::vector<Param<Real>*> parameters();
    std::vector<Buffer<Real>> buffers();
    void zero_grad();

private:
    ProjectionHeadConfig cfg_;
    std::vector<Conv2d<Real>> convs_;
    std::vector<BatchNorm<Real>> norms_;
    std::vector<Relu<Real>> relus_;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

template <typename Real>
class Adam {
public:
    Adam() = default;
    explicit Adam(const AdamConfig& cfg) : cfg_(cfg) {}

    void step(const std::vector<Param<Real>*>& params);
    std::uint64_t steps() const noexcept { return t_; }

    void save(Archive& archive, const std::string& prefix) const;
    void load(const Archive& archive, const std::string& prefix);

private:
    AdamConfig cfg_;
    std::uint64_t t_ = 0;
    std::vector<std::vector<Real>> m_, v_;
};

// Named parameters and buffers under `prefix`.
template <typename Real>
void save_state(Archive& archive, const std::string& prefix, const std::vector<Param<Real>*>& params,
                const std::vector<Buffer<Real>>& buffers);
template <typename Real>
void load_state(const Archive& archive, const std::string& prefix, const std::vector<Param<Real>*>& params,
                const std::vector<Buffer<Real>>& buffers);

// Grid <-> tensor conversion. Images of one batch must share a shape.
template <typename Real>
Tensor<Real> to_tensor(std::span<const ImageGrid* const> images);
template <typename Real>
Tensor<Real> to_tensor(const ImageGrid& image);
// Batch item b of a tensor as an interleaved H x W x C raster, and back.
template <typename Real, typename Out = Real>
Raster<Out> item_raster(const Tensor<Real>& t, int b);
template <typename Real, typename In>
void set_item(Tensor<Real>& t, int b, const std::vector<In>& interleaved);

// Evaluation-mode helpers on single images.
template <typename Real>
std::pair<PredictionGrid, std::vector<FeatureTap>> forward_with_taps(UNet<Real>& net, const ImageGrid& image,
                                                                     std::span<const int> taps);
template <typename Real>
EmbeddingGrid project(ProjectionHead<Real>& head, const FeatureTap& tap);

}  // namespace s2l::model
