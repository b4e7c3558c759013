#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "crossdehaze/error.hpp"

namespace crossdehaze {

enum class Channel { R = 0, G = 1, B = 2 };

/// 3-channel float raster in [0,1], planar channel-major layout:
/// data[c*W*H + y*W + x]. Values outside [0,1] may appear in intermediate
/// math; images handed across module boundaries are clamped.
struct Image {
    static constexpr int kChannels = 3;

    int width = 0;
    int height = 0;
    std::vector<float> data;

    Image() = default;
    Image(int w, int h, float fill = 0.0f)
        : width(w), height(h), data(static_cast<size_t>(w) * h * kChannels, fill) {
        require(w >= 1 && h >= 1, Errc::invalid_argument, "image dimensions must be positive");
    }

    size_t plane() const { return static_cast<size_t>(width) * height; }
    size_t samples() const { return plane() * kChannels; }

    float& at(int c, int y, int x) { return data[static_cast<size_t>(c) * plane() + static_cast<size_t>(y) * width + x]; }
    float at(int c, int y, int x) const { return data[static_cast<size_t>(c) * plane() + static_cast<size_t>(y) * width + x]; }

    bool same_dims(const Image& o) const { return width == o.width && height == o.height; }

    bool operator==(const Image& o) const { return width == o.width && height == o.height && data == o.data; }
};

inline void clamp01_inplace(Image& img) {
    for (float& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
}

inline Image clamped01(Image img) {
    clamp01_inplace(img);
    return img;
}

/// Arithmetic mean of one channel's samples. Accumulates in double in
/// index order, so the result is deterministic.
inline double channel_mean(const Image& img, Channel channel) {
    require(img.plane() > 0, Errc::invalid_argument, "channel_mean: empty image");
    const size_t n = img.plane();
    const float* p = img.data.data() + static_cast<size_t>(channel) * n;
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) sum += p[i];
    return sum / static_cast<double>(n);
}

/// Exact sub-rectangle copy of all channels.
inline Image crop(const Image& img, int x, int y, int w, int h) {
    require(w >= 1 && h >= 1, Errc::out_of_range, "crop: empty rectangle");
    require(x >= 0 && y >= 0 && x + w <= img.width && y + h <= img.height,
            Errc::out_of_range, "crop: rectangle out of bounds");
    Image out(w, h);
    for (int c = 0; c < Image::kChannels; ++c)
        for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx)
                out.at(c, yy, xx) = img.at(c, y + yy, x + xx);
    return out;
}

}  // namespace crossdehaze
