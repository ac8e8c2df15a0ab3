#pragma once

#include <cstddef>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace s2l::model {

class ModelError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Activations in N x H x W x C order: the channels of a pixel are
// contiguous, so a batch is a C x (N*H*W) column-major matrix and one batch
// item is an interleaved H x W x C raster.
template <typename Real>
struct Tensor {
    int n = 0, h = 0, w = 0, c = 0;
    std::vector<Real> data;

    Tensor() = default;
    Tensor(int batch, int height, int width, int channels, Real fill = Real(0))
        : n(batch), h(height), w(width), c(channels),
          data(static_cast<std::size_t>(batch) * height * width * channels, fill) {}

    // Pixels in the whole batch.
    std::size_t pixels() const noexcept { return static_cast<std::size_t>(n) * h * w; }
    std::size_t item_size() const noexcept { return static_cast<std::size_t>(h) * w * c; }
    std::size_t size() const noexcept { return data.size(); }

    Real* pixel(std::size_t p) noexcept { return data.data() + p * c; }
    const Real* pixel(std::size_t p) const noexcept { return data.data() + p * c; }

    Real& at(int b, int y, int x, int ch) noexcept { return data[((static_cast<std::size_t>(b) * h + y) * w + x) * c + ch]; }
    Real at(int b, int y, int x, int ch) const noexcept {
        return data[((static_cast<std::size_t>(b) * h + y) * w + x) * c + ch];
    }

    Real* ptr(int b, int y, int x) noexcept { return data.data() + ((static_cast<std::size_t>(b) * h + y) * w + x) * c; }
    const Real* ptr(int b, int y, int x) const noexcept {
        return data.data() + ((static_cast<std::size_t>(b) * h + y) * w + x) * c;
    }

    bool same_shape(const Tensor& o) const noexcept { return c == o.c && n == o.n && h == o.h && w == o.w; }
    std::string shape_string() const {
        return std::to_string(n) + "x" + std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
    }
};

// Channel-wise concatenation.
template <typename Real>
Tensor<Real> concat(const Tensor<Real>& a, const Tensor<Real>& b) {
    if (a.n != b.n || a.h != b.h || a.w != b.w) throw ModelError("concat: " + a.shape_string() + " vs " + b.shape_string());
    Tensor<Real> out(a.n, a.h, a.w, a.c + b.c);
    for (std::size_t p = 0; p < a.pixels(); ++p) {
        std::memcpy(out.pixel(p), a.pixel(p), sizeof(Real) * a.c);
        std::memcpy(out.pixel(p) + a.c, b.pixel(p), sizeof(Real) * b.c);
    }
    return out;
}

// Inverse of concat for gradients: the first `first_channels` go to a.
template <typename Real>
void split(const Tensor<Real>& g, int first_channels, Tensor<Real>& a, Tensor<Real>& b) {
    a = Tensor<Real>(g.n, g.h, g.w, first_channels);
    b = Tensor<Real>(g.n, g.h, g.w, g.c - first_channels);
    for (std::size_t p = 0; p < g.pixels(); ++p) {
        std::memcpy(a.pixel(p), g.pixel(p), sizeof(Real) * a.c);
        std::memcpy(b.pixel(p), g.pixel(p) + a.c, sizeof(Real) * b.c);
    }
}

template <typename Real>
void add_into(Tensor<Real>& acc, const Tensor<Real>& g) {
    if (acc.data.empty()) {
        acc = g;
        return;
    }
    if (!acc.same_shape(g)) throw ModelError("gradient shape " + g.shape_string() + " vs " + acc.shape_string());
    for (std::size_t i = 0; i < acc.size(); ++i) acc.data[i] += g.data[i];
}

}  // namespace s2l::model
