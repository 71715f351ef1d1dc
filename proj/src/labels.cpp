#include "msvar/labels.hpp"

#include "msvar/errors.hpp"

namespace msvar {

LabelMap::LabelMap(std::size_t height, std::size_t width, std::uint8_t fill)
    : height_(height), width_(width), labels_(height * width, fill) {
    if (height == 0 || width == 0) throw InputError("LabelMap: height and width must be at least 1");
}

LabelMap::LabelMap(std::size_t height, std::size_t width, std::vector<std::uint8_t> labels)
    : height_(height), width_(width), labels_(std::move(labels)) {
    if (height == 0 || width == 0) throw InputError("LabelMap: height and width must be at least 1");
    if (labels_.size() != height * width) throw InputError("LabelMap: buffer length does not match H*W");
}

std::size_t LabelMap::num_classes() const noexcept {
    std::size_t n = 0;
    for (auto l : labels_) {
        if (l != kIgnoreLabel && static_cast<std::size_t>(l) + 1 > n) n = static_cast<std::size_t>(l) + 1;
    }
    return n;
}

}  // namespace msvar
