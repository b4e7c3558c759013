#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "crossdehaze/image.hpp"
#include "crossdehaze/rng.hpp"

namespace crossdehaze {

namespace detail {

/// Low-frequency field in [0,1]: random values on a coarse grid,
/// bilinearly interpolated. Cell size bounds the per-pixel slope at
/// 1/cell, which is what the smoothness guarantees below rely on.
inline std::vector<float> smooth_field(Rng& rng, int width, int height, int cell) {
    const int gw = (width + cell - 1) / cell + 1;
    const int gh = (height + cell - 1) / cell + 1;
    std::vector<double> grid(static_cast<size_t>(gw) * gh);
    for (double& g : grid) g = rng.next_double();

    std::vector<float> field(static_cast<size_t>(width) * height);
    for (int y = 0; y < height; ++y) {
        const double gy = static_cast<double>(y) / cell;
        const int y0 = static_cast<int>(gy);
        const double fy = gy - y0;
        for (int x = 0; x < width; ++x) {
            const double gx = static_cast<double>(x) / cell;
            const int x0 = static_cast<int>(gx);
            const double fx = gx - x0;
            const double v00 = grid[static_cast<size_t>(y0) * gw + x0];
            const double v01 = grid[static_cast<size_t>(y0) * gw + x0 + 1];
            const double v10 = grid[static_cast<size_t>(y0 + 1) * gw + x0];
            const double v11 = grid[static_cast<size_t>(y0 + 1) * gw + x0 + 1];
            const double top = v00 + (v01 - v00) * fx;
            const double bot = v10 + (v11 - v10) * fx;
            field[static_cast<size_t>(y) * width + x] = static_cast<float>(top + (bot - top) * fy);
        }
    }
    return field;
}

}  // namespace detail

/// Procedural clean scene: a bilinear gradient between four random corner
/// colors, `complexity` random solid rectangles and disks, and a little
/// low-frequency noise. Pure function of (rng state, width, height,
/// complexity); output clamped to [0,1].
inline Image gen_scene(Rng& rng, int width, int height, int complexity) {
    require(width >= 8 && height >= 8, Errc::invalid_argument, "gen_scene: dimensions must be >= 8");
    require(complexity >= 0, Errc::invalid_argument, "gen_scene: complexity must be >= 0");

    Image img(width, height);

    // corner colors, drawn channel-major: c00, c01, c10, c11 per channel
    double corners[3][4];
    for (int c = 0; c < 3; ++c)
        for (int k = 0; k < 4; ++k) corners[c][k] = rng.uniform(0.05, 0.95);

    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < height; ++y) {
            const double fy = height > 1 ? static_cast<double>(y) / (height - 1) : 0.0;
            for (int x = 0; x < width; ++x) {
                const double fx = width > 1 ? static_cast<double>(x) / (width - 1) : 0.0;
                const double top = corners[c][0] + (corners[c][1] - corners[c][0]) * fx;
                const double bot = corners[c][2] + (corners[c][3] - corners[c][2]) * fx;
                img.at(c, y, x) = static_cast<float>(top + (bot - top) * fy);
            }
        }

    const int min_dim = std::min(width, height);
    for (int s = 0; s < complexity; ++s) {
        const bool disk = rng.next_double() < 0.5;
        float color[3];
        for (int c = 0; c < 3; ++c) color[c] = static_cast<float>(rng.uniform(0.0, 1.0));
        if (disk) {
            const int cx = static_cast<int>(rng.uniform_int(0, width - 1));
            const int cy = static_cast<int>(rng.uniform_int(0, height - 1));
            const int r = static_cast<int>(rng.uniform_int(min_dim / 10 + 1, std::max(min_dim / 3, min_dim / 10 + 2)));
            const int y0 = std::max(0, cy - r), y1 = std::min(height - 1, cy + r);
            const int x0 = std::max(0, cx - r), x1 = std::min(width - 1, cx + r);
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x)
                    if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r)
                        for (int c = 0; c < 3; ++c) img.at(c, y, x) = color[c];
        } else {
            const int w = static_cast<int>(rng.uniform_int(width / 8 + 1, std::max(width / 2, width / 8 + 2)));
            const int h = static_cast<int>(rng.uniform_int(height / 8 + 1, std::max(height / 2, height / 8 + 2)));
            const int x0 = static_cast<int>(rng.uniform_int(0, std::max(0, width - w)));
            const int y0 = static_cast<int>(rng.uniform_int(0, std::max(0, height - h)));
            for (int y = y0; y < std::min(height, y0 + h); ++y)
                for (int x = x0; x < std::min(width, x0 + w); ++x)
                    for (int c = 0; c < 3; ++c) img.at(c, y, x) = color[c];
        }
    }

    constexpr float kNoiseAmp = 0.06f;
    const int cell = std::max(6, min_dim / 4);
    for (int c = 0; c < 3; ++c) {
        auto noise = detail::smooth_field(rng, width, height, cell);
        float* plane = img.data.data() + static_cast<size_t>(c) * img.plane();
        for (size_t i = 0; i < img.plane(); ++i)
            plane[i] += kNoiseAmp * (2.0f * noise[i] - 1.0f);
    }

    clamp01_inplace(img);
    return img;
}

}  // namespace crossdehaze
