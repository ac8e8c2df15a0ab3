#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace s2l {

// Dense H x W x C raster stored interleaved (all channels of a cell are
// contiguous), row-major over cells.
template <typename T>
class Raster {
public:
    using value_type = T;

    Raster() = default;

    Raster(int height, int width, int channels = 1, T fill = T{})
        : height_(height), width_(width), channels_(channels) {
        check_dims();
        values_.assign(cell_count() * static_cast<std::size_t>(channels_), fill);
    }

    Raster(int height, int width, int channels, std::vector<T> values)
        : height_(height), width_(width), channels_(channels), values_(std::move(values)) {
        check_dims();
        if (values_.size() != cell_count() * static_cast<std::size_t>(channels_)) {
            throw std::invalid_argument("raster: value count " + std::to_string(values_.size()) +
                                        " does not match " + std::to_string(height_) + "x" +
                                        std::to_string(width_) + "x" + std::to_string(channels_));
        }
    }

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    int channels() const noexcept { return channels_; }
    bool empty() const noexcept { return values_.empty(); }

    std::size_t cell_count() const noexcept {
        return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
    }

    std::size_t index(int y, int x) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }

    bool contains(int y, int x) const noexcept { return y >= 0 && x >= 0 && y < height_ && x < width_; }

    T& operator()(int y, int x, int c = 0) noexcept { return values_[index(y, x) * channels_ + c]; }
    const T& operator()(int y, int x, int c = 0) const noexcept { return values_[index(y, x) * channels_ + c]; }

    T& operator[](std::size_t i) noexcept { return values_[i]; }
    const T& operator[](std::size_t i) const noexcept { return values_[i]; }

    std::span<T> cell(std::size_t i) noexcept { return {values_.data() + i * channels_, static_cast<std::size_t>(channels_)}; }
    std::span<const T> cell(std::size_t i) const noexcept {
        return {values_.data() + i * channels_, static_cast<std::size_t>(channels_)};
    }

    std::span<T> values() noexcept { return values_; }
    std::span<const T> values() const noexcept { return values_; }
    std::vector<T>& storage() noexcept { return values_; }
    const std::vector<T>& storage() const noexcept { return values_; }

    bool same_shape(int height, int width) const noexcept { return height_ == height && width_ == width; }
    template <typename U>
    bool same_shape(const Raster<U>& other) const noexcept {
        return height_ == other.height() && width_ == other.width();
    }

    friend bool operator==(const Raster&, const Raster&) = default;

private:
    void check_dims() const {
        if (height_ < 0 || width_ < 0 || channels_ < 0) {
            throw std::invalid_argument("raster: negative dimension");
        }
    }

    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<T> values_;
};

}  // namespace s2l
