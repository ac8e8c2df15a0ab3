#pragma once

#include "s2l/model/tensor.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace s2l::model {

template <typename Real>
struct Param {
    std::string name;
    std::vector<Real> value;
    std::vector<Real> grad;

    Param() = default;
    Param(std::string n, std::size_t count, Real fill = Real(0))
        : name(std::move(n)), value(count, fill), grad(count, Real(0)) {}
    void zero_grad() { std::fill(grad.begin(), grad.end(), Real(0)); }
};

// Non-trainable state that still belongs in a checkpoint.
template <typename Real>
struct Buffer {
    std::string name;
    std::vector<Real>* values;
};

template <typename Real>
class Conv2d {
public:
    Conv2d() = default;
    // kernel 1 or 3, zero padding keeps the spatial size.
    Conv2d(std::string name, int in, int out, int kernel, bool bias);

    void init(std::mt19937_64& rng);
    Tensor<Real> forward(const Tensor<Real>& x, bool keep);
    Tensor<Real> backward(const Tensor<Real>& dy);

    int in_channels() const noexcept { return in_; }
    int out_channels() const noexcept { return out_; }
    void collect(std::vector<Param<Real>*>& out);

    Param<Real> weight;
    Param<Real> bias;

private:
    int in_ = 0, out_ = 0, k_ = 1;
    bool has_bias_ = false;
    int n_ = 0, h_ = 0, w_ = 0;
    std::vector<Real> col_;
};

template <typename Real>
class BatchNorm {
public:
    BatchNorm() = default;
    BatchNorm(std::string name, int channels, Real momentum = Real(0.1), Real eps = Real(1e-5));

    Tensor<Real> forward(const Tensor<Real>& x, bool train);
    Tensor<Real> backward(const Tensor<Real>& dy);
    void collect(std::vector<Param<Real>*>& out);
    void collect(std::vector<Buffer<Real>>& out);

    Param<Real> gamma;
    Param<Real> beta;
    std::vector<Real> running_mean;
    std::vector<Real> running_var;

private:
    std::string name_;
    int channels_ = 0;
    Real momentum_ = Real(0.1);
    Real eps_ = Real(1e-5);
    std::vector<Real> xhat_;
    std::vector<Real> inv_std_;
};

template <typename Real>
class Relu {
public:
    Tensor<Real> forward(const Tensor<Real>& x, bool keep);
    Tensor<Real> backward(const Tensor<Real>& dy) const;

private:
    std::vector<std::uint8_t> active_;
};

// 2x2 max pooling, stride 2; spatial dims must be even.
template <typename Real>
class MaxPool {
public:
    Tensor<Real> forward(const Tensor<Real>& x, bool keep);
    Tensor<Real> backward(const Tensor<Real>& dy) const;

private:
    std::vector<std::uint8_t> argmax_;
    int h_ = 0, w_ = 0;
};

// Nearest-neighbour x2 upsampling.
template <typename Real>
Tensor<Real> upsample2(const Tensor<Real>& x);
template <typename Real>
Tensor<Real> upsample2_backward(const Tensor<Real>& dy);

// conv3x3 -> BN -> ReLU, repeated.
template <typename Real>
class ConvBlock {
public:
    ConvBlock() = default;
    ConvBlock(const std::string& name, int in, int out, int convs);

    void init(std::mt19937_64& rng);
    Tensor<Real> forward(const Tensor<Real>& x, bool train);
    Tensor<Real> backward(const Tensor<Real>& dy);
    void collect(std::vector<Param<Real>*>& out);
    void collect(std::vector<Buffer<Real>>& out);

private:
    std::vector<Conv2d<Real>> convs_;
    std::vector<BatchNorm<Real>> norms_;
    std::vector<Relu<Real>> relus_;
};

}  // namespace s2l::model
