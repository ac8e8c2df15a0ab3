#include "s2l/model/layers.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace s2l::model {

namespace {

template <typename Real>
using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Real>
using MapMat = Eigen::Map<Mat<Real>>;
template <typename Real>
using ConstMapMat = Eigen::Map<const Mat<Real>>;
template <typename Real>
using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

// Per-channel sums over pixels. Eigen's rowwise().sum() on a mapped buffer
// peels by address, so the rounding would depend on where the heap put it.
template <typename Expr>
Vec<typename Expr::Scalar> channel_sums(const Expr& m) {
    Vec<typename Expr::Scalar> acc = Vec<typename Expr::Scalar>::Zero(m.rows());
    for (Eigen::Index p = 0; p < m.cols(); ++p) acc += m.col(p);
    return acc;
}

// Column p holds the 3x3 neighbourhood of pixel p, ordered (ky, kx, ci);
// zero outside the image.
template <typename Real>
void im2col3(const Tensor<Real>& x, Real* col) {
    const int c = x.c;
    const std::size_t k = 9u * c;
    Real* dst = col;
    for (int b = 0; b < x.n; ++b) {
        for (int y = 0; y < x.h; ++y) {
            for (int xx = 0; xx < x.w; ++xx, dst += k) {
                Real* d = dst;
                for (int ky = -1; ky <= 1; ++ky) {
                    const int sy = y + ky;
                    for (int kx = -1; kx <= 1; ++kx, d += c) {
                        const int sx = xx + kx;
                        if (sy < 0 || sy >= x.h || sx < 0 || sx >= x.w) {
                            std::fill(d, d + c, Real(0));
                        } else {
                            std::memcpy(d, &x.data[((static_cast<std::size_t>(b) * x.h + sy) * x.w + sx) * c],
                                        sizeof(Real) * c);
                        }
                    }
                }
            }
        }
    }
}

template <typename Real>
void col2im3(const Real* col, Tensor<Real>& dx) {
    const int c = dx.c;
    const std::size_t k = 9u * c;
    const Real* src = col;
    for (int b = 0; b < dx.n; ++b) {
        for (int y = 0; y < dx.h; ++y) {
            for (int xx = 0; xx < dx.w; ++xx, src += k) {
                const Real* s = src;
                for (int ky = -1; ky <= 1; ++ky) {
                    const int sy = y + ky;
                    for (int kx = -1; kx <= 1; ++kx, s += c) {
                        const int sx = xx + kx;
                        if (sy < 0 || sy >= dx.h || sx < 0 || sx >= dx.w) continue;
                        Real* d = &dx.data[((static_cast<std::size_t>(b) * dx.h + sy) * dx.w + sx) * c];
                        for (int i = 0; i < c; ++i) d[i] += s[i];
                    }
                }
            }
        }
    }
}

}  // namespace

template <typename Real>
Conv2d<Real>::Conv2d(std::string name, int in, int out, int kernel, bool bias)
    : weight(name + ".weight", static_cast<std::size_t>(out) * in * kernel * kernel),
      in_(in), out_(out), k_(kernel), has_bias_(bias) {
    if (kernel != 1 && kernel != 3) throw ModelError("conv: kernel must be 1 or 3");
    if (in < 1 || out < 1) throw ModelError("conv: channel counts must be positive");
    if (bias) this->bias = Param<Real>(name + ".bias", static_cast<std::size_t>(out));
}

template <typename Real>
void Conv2d<Real>::init(std::mt19937_64& rng) {
    // He normal, fan-in
    std::normal_distribution<double> n(0.0, std::sqrt(2.0 / (in_ * k_ * k_)));
    for (auto& v : weight.value) v = static_cast<Real>(n(rng));
    std::fill(bias.value.begin(), bias.value.end(), Real(0));
}

template <typename Real>
Tensor<Real> Conv2d<Real>::forward(const Tensor<Real>& x, bool keep) {
    if (x.c != in_) throw ModelError("conv " + weight.name + ": expected " + std::to_string(in_) + " channels, got " + std::to_string(x.c));
    const auto p = static_cast<Eigen::Index>(x.pixels());
    const int kk = in_ * k_ * k_;
    std::vector<Real> scratch;
    const Real* col = x.data.data();
    if (k_ == 3) {
        auto& buf = keep ? col_ : scratch;
        buf.resize(static_cast<std::size_t>(kk) * p);
        im2col3(x, buf.data());
        col = buf.data();
    } else if (keep) {
        col_ = x.data;
    }
    n_ = x.n, h_ = x.h, w_ = x.w;
    Tensor<Real> y(x.n, x.h, x.w, out_);
    MapMat<Real> ym(y.data.data(), out_, p);
    ym.noalias() = ConstMapMat<Real>(weight.value.data(), out_, kk) * ConstMapMat<Real>(col, kk, p);
    if (has_bias_) ym.colwise() += Eigen::Map<const Vec<Real>>(bias.value.data(), out_);
    return y;
}

template <typename Real>
Tensor<Real> Conv2d<Real>::backward(const Tensor<Real>& dy) {
    const auto p = static_cast<Eigen::Index>(dy.pixels());
    const int kk = in_ * k_ * k_;
    if (col_.size() != static_cast<std::size_t>(kk) * p) throw ModelError("conv " + weight.name + ": backward without cached forward");
    ConstMapMat<Real> dym(dy.data.data(), out_, p);
    ConstMapMat<Real> colm(col_.data(), kk, p);
    MapMat<Real>(weight.grad.data(), out_, kk).noalias() += dym * colm.transpose();
    if (has_bias_) Eigen::Map<Vec<Real>>(bias.grad.data(), out_) += channel_sums(dym);
    Tensor<Real> dx(n_, h_, w_, in_);
    if (k_ == 1) {
        MapMat<Real>(dx.data.data(), in_, p).noalias() = ConstMapMat<Real>(weight.value.data(), out_, kk).transpose() * dym;
    } else {
        // reuse the cache as the column gradient
        MapMat<Real> dcol(col_.data(), kk, p);
        dcol.noalias() = ConstMapMat<Real>(weight.value.data(), out_, kk).transpose() * dym;
        col2im3(col_.data(), dx);
    }
    col_.clear();
    col_.shrink_to_fit();
    return dx;
}

template <typename Real>
void Conv2d<Real>::collect(std::vector<Param<Real>*>& out) {
    out.push_back(&weight);
    if (has_bias_) out.push_back(&bias);
}

template <typename Real>
BatchNorm<Real>::BatchNorm(std::string name, int channels, Real momentum, Real eps)
    : gamma(name + ".gamma", channels, Real(1)),
      beta(name + ".beta", channels, Real(0)),
      running_mean(channels, Real(0)),
      running_var(channels, Real(1)),
      name_(std::move(name)),
      channels_(channels),
      momentum_(momentum),
      eps_(eps) {}

template <typename Real>
Tensor<Real> BatchNorm<Real>::forward(const Tensor<Real>& x, bool train) {
    if (x.c != channels_) throw ModelError("batchnorm " + name_ + ": channel mismatch");
    Tensor<Real> y(x.n, x.h, x.w, x.c);
    const auto m = static_cast<Eigen::Index>(x.pixels());
    ConstMapMat<Real> xm(x.data.data(), channels_, m);
    MapMat<Real> ym(y.data.data(), channels_, m);
    Eigen::Map<const Vec<Real>> g(gamma.value.data(), channels_), bt(beta.value.data(), channels_);
    if (train) {
        if (m < 2) throw ModelError("batchnorm " + name_ + ": need at least two values per channel");
        const Vec<Real> mean = channel_sums(xm) / static_cast<Real>(m);
        const Vec<Real> var = channel_sums((xm.colwise() - mean).array().square().matrix()) / static_cast<Real>(m);
        const Vec<Real> inv = (var.array() + eps_).rsqrt().matrix();
        xhat_.resize(x.size());
        MapMat<Real> xh(xhat_.data(), channels_, m);
        xh = ((xm.colwise() - mean).array().colwise() * inv.array()).matrix();
        ym = ((xh.array().colwise() * g.array()).colwise() + bt.array()).matrix();
        inv_std_.assign(inv.data(), inv.data() + channels_);
        for (int c = 0; c < channels_; ++c) {
            running_mean[c] = (1 - momentum_) * running_mean[c] + momentum_ * mean[c];
            running_var[c] = (1 - momentum_) * running_var[c] + momentum_ * var[c] * static_cast<Real>(m) / static_cast<Real>(m - 1);
        }
    } else {
        Vec<Real> scale(channels_), shift(channels_);
        for (int c = 0; c < channels_; ++c) {
            scale[c] = gamma.value[c] / std::sqrt(running_var[c] + eps_);
            shift[c] = beta.value[c] - running_mean[c] * scale[c];
        }
        ym = ((xm.array().colwise() * scale.array()).colwise() + shift.array()).matrix();
    }
    return y;
}

template <typename Real>
Tensor<Real> BatchNorm<Real>::backward(const Tensor<Real>& dy) {
    if (xhat_.size() != dy.size()) throw ModelError("batchnorm " + name_ + ": backward without cached forward");
    Tensor<Real> dx(dy.n, dy.h, dy.w, dy.c);
    const auto m = static_cast<Eigen::Index>(dy.pixels());
    ConstMapMat<Real> gm(dy.data.data(), channels_, m);
    ConstMapMat<Real> xh(xhat_.data(), channels_, m);
    const Vec<Real> sum_g = channel_sums(gm);
    const Vec<Real> sum_gx = channel_sums(gm.cwiseProduct(xh));
    Eigen::Map<Vec<Real>>(gamma.grad.data(), channels_) += sum_gx;
    Eigen::Map<Vec<Real>>(beta.grad.data(), channels_) += sum_g;
    Vec<Real> k(channels_);
    for (int c = 0; c < channels_; ++c) k[c] = gamma.value[c] * inv_std_[c] / static_cast<Real>(m);
    MapMat<Real>(dx.data.data(), channels_, m) =
        (((static_cast<Real>(m) * gm).colwise() - sum_g).array() - xh.array().colwise() * sum_gx.array()).colwise() *
        k.array();
    xhat_.clear();
    xhat_.shrink_to_fit();
    return dx;
}

template <typename Real>
void BatchNorm<Real>::collect(std::vector<Param<Real>*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
}

template <typename Real>
void BatchNorm<Real>::collect(std::vector<Buffer<Real>>& out) {
    out.push_back({name_ + ".running_mean", &running_mean});
    out.push_back({name_ + ".running_var", &running_var});
}

template <typename Real>
Tensor<Real> Relu<Real>::forward(const Tensor<Real>& x, bool keep) {
    Tensor<Real> y = x;
    if (keep) active_.resize(x.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        const bool on = y.data[i] > Real(0);
        if (!on) y.data[i] = Real(0);
        if (keep) active_[i] = on;
    }
    return y;
}

template <typename Real>
Tensor<Real> Relu<Real>::backward(const Tensor<Real>& dy) const {
    if (active_.size() != dy.size()) throw ModelError("relu: backward without cached forward");
    Tensor<Real> dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) {
        if (!active_[i]) dx.data[i] = Real(0);
    }
    return dx;
}

template <typename Real>
Tensor<Real> MaxPool<Real>::forward(const Tensor<Real>& x, bool keep) {
    if (x.h % 2 != 0 || x.w % 2 != 0) throw ModelError("maxpool: odd spatial size " + x.shape_string());
    Tensor<Real> y(x.n, x.h / 2, x.w / 2, x.c);
    if (keep) argmax_.resize(y.size());
    h_ = x.h, w_ = x.w;
    const int c = x.c;
    for (int b = 0; b < x.n; ++b) {
        for (int y2 = 0; y2 < y.h; ++y2) {
            for (int x2 = 0; x2 < y.w; ++x2) {
                const std::size_t o = ((static_cast<std::size_t>(b) * y.h + y2) * y.w + x2) * c;
                const Real* src[4];
                for (int k = 0; k < 4; ++k) {
                    src[k] = &x.data[((static_cast<std::size_t>(b) * x.h + 2 * y2 + k / 2) * x.w + 2 * x2 + k % 2) * c];
                }
                for (int ch = 0; ch < c; ++ch) {
                    std::uint8_t best = 0;
                    for (std::uint8_t k = 1; k < 4; ++k) {
                        if (src[k][ch] > src[best][ch]) best = k;
                    }
                    y.data[o + ch] = src[best][ch];
                    if (keep) argmax_[o + ch] = best;
                }
            }
        }
    }
    return y;
}

template <typename Real>
Tensor<Real> MaxPool<Real>::backward(const Tensor<Real>& dy) const {
    if (argmax_.size() != dy.size()) throw ModelError("maxpool: backward without cached forward");
    Tensor<Real> dx(dy.n, h_, w_, dy.c);
    const int c = dy.c;
    for (int b = 0; b < dy.n; ++b) {
        for (int y2 = 0; y2 < dy.h; ++y2) {
            for (int x2 = 0; x2 < dy.w; ++x2) {
                const std::size_t o = ((static_cast<std::size_t>(b) * dy.h + y2) * dy.w + x2) * c;
                for (int ch = 0; ch < c; ++ch) {
                    const int k = argmax_[o + ch];
                    dx.at(b, 2 * y2 + k / 2, 2 * x2 + k % 2, ch) = dy.data[o + ch];
                }
            }
        }
    }
    return dx;
}

template <typename Real>
Tensor<Real> upsample2(const Tensor<Real>& x) {
    Tensor<Real> y(x.n, x.h * 2, x.w * 2, x.c);
    const std::size_t row = static_cast<std::size_t>(y.w) * x.c;
    for (int b = 0; b < x.n; ++b) {
        for (int yy = 0; yy < x.h; ++yy) {
            Real* dst = y.ptr(b, 2 * yy, 0);
            for (int xx = 0; xx < x.w; ++xx) {
                const Real* src = x.ptr(b, yy, xx);
                std::memcpy(dst + 2 * xx * x.c, src, sizeof(Real) * x.c);
                std::memcpy(dst + (2 * xx + 1) * x.c, src, sizeof(Real) * x.c);
            }
            std::memcpy(dst + row, dst, sizeof(Real) * row);
        }
    }
    return y;
}

template <typename Real>
Tensor<Real> upsample2_backward(const Tensor<Real>& dy) {
    Tensor<Real> dx(dy.n, dy.h / 2, dy.w / 2, dy.c);
    const int c = dy.c;
    for (int b = 0; b < dx.n; ++b) {
        for (int yy = 0; yy < dx.h; ++yy) {
            for (int xx = 0; xx < dx.w; ++xx) {
                Real* d = dx.ptr(b, yy, xx);
                const Real* s00 = dy.ptr(b, 2 * yy, 2 * xx);
                const Real* s01 = s00 + c;
                const Real* s10 = dy.ptr(b, 2 * yy + 1, 2 * xx);
                const Real* s11 = s10 + c;
                for (int ch = 0; ch < c; ++ch) d[ch] = s00[ch] + s01[ch] + s10[ch] + s11[ch];
            }
        }
    }
    return dx;
}

template <typename Real>
ConvBlock<Real>::ConvBlock(const std::string& name, int in, int out, int convs) {
    if (convs < 1) throw ModelError("block " + name + ": needs at least one convolution");
    for (int i = 0; i < convs; ++i) {
        const std::string n = name + "." + std::to_string(i);
        convs_.emplace_back(n + ".conv", i == 0 ? in : out, out, 3, false);
        norms_.emplace_back(n + ".bn", out);
        relus_.emplace_back();
    }
}

template <typename Real>
void ConvBlock<Real>::init(std::mt19937_64& rng) {
    for (auto& c : convs_) c.init(rng);
}

template <typename Real>
Tensor<Real> ConvBlock<Real>::forward(const Tensor<Real>& x, bool train) {
    Tensor<Real> h;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        h = convs_[i].forward(i == 0 ? x : h, train);
        h = norms_[i].forward(h, train);
        h = relus_[i].forward(h, train);
    }
    return h;
}

template <typename Real>
Tensor<Real> ConvBlock<Real>::backward(const Tensor<Real>& dy) {
    Tensor<Real> g = dy;
    for (std::size_t i = convs_.size(); i-- > 0;) {
        g = relus_[i].backward(g);
        g = norms_[i].backward(g);
        g = convs_[i].backward(g);
    }
    return g;
}

template <typename Real>
void ConvBlock<Real>::collect(std::vector<Param<Real>*>& out) {
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        convs_[i].collect(out);
        norms_[i].collect(out);
    }
}

template <typename Real>
void ConvBlock<Real>::collect(std::vector<Buffer<Real>>& out) {
    for (auto& n : norms_) n.collect(out);
}

#define S2L_INSTANTIATE(Real)                                          \
    template class Conv2d<Real>;                                       \
    template class BatchNorm<Real>;                                    \
    template class Relu<Real>;                                         \
    template class MaxPool<Real>;                                      \
    template class ConvBlock<Real>;                                    \
    template Tensor<Real> upsample2<Real>(const Tensor<Real>&);        \
    template Tensor<Real> upsample2_backward<Real>(const Tensor<Real>&);

S2L_INSTANTIATE(float)
S2L_INSTANTIATE(double)

#undef S2L_INSTANTIATE

}  // namespace s2l::model
