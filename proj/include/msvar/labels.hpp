#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace msvar {

/// Label value excluded from losses and metrics.
inline constexpr std::uint8_t kIgnoreLabel = 255;

/// Per-pixel class index, row-major.
class LabelMap {
public:
    LabelMap() = default;
    LabelMap(std::size_t height, std::size_t width, std::uint8_t fill = 0);
    LabelMap(std::size_t height, std::size_t width, std::vector<std::uint8_t> labels);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return labels_.size(); }

    std::uint8_t operator()(std::size_t row, std::size_t col) const { return labels_[row * width_ + col]; }
    std::uint8_t& operator()(std::size_t row, std::size_t col) { return labels_[row * width_ + col]; }
    std::uint8_t operator[](std::size_t idx) const { return labels_[idx]; }
    std::uint8_t& operator[](std::size_t idx) { return labels_[idx]; }

    const std::vector<std::uint8_t>& labels() const noexcept { return labels_; }

    bool same_shape(const LabelMap& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_;
    }
    /// One past the largest non-ignored label; 0 when every pixel is ignored.
    std::size_t num_classes() const noexcept;

    friend bool operator==(const LabelMap&, const LabelMap&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<std::uint8_t> labels_;
};

}  // namespace msvar
