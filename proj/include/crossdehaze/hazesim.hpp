#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>

#include "crossdehaze/dataset.hpp"
#include "crossdehaze/image.hpp"
#include "crossdehaze/rng.hpp"
#include "crossdehaze/scene.hpp"

namespace crossdehaze {

/// Scattering-model parameters: I(x) = J(x)·t(x) + A·(1 − t(x)).
struct HazeParams {
    std::array<double, 3> ambient;  // A, per channel, in [0.7, 1]
    double transmission;            // t, constant mode, in [0.25, 0.65]
    double thickness;               // s, depth-mode attenuation, in [0.35, 0.75]
};

/// In depth mode the transmission field is t(x) = clamp(exp(-s*k*d(x)),
/// t_min, 1) with a fixed depth scale k, so sampled thickness values land
/// in the same transmission range the constant mode draws from.
constexpr double kDepthScale = 3.0;
constexpr double kTransmissionFloor = 0.05;

struct DepthMap {
    int width = 0;
    int height = 0;
    std::vector<float> values;  // [0,1], row-major

    float at(int y, int x) const { return values[static_cast<size_t>(y) * width + x]; }
};

enum class HazeMode { constant_t, depth };

/// Draws A (per channel), t, s uniformly from their intervals, in that
/// fixed order.
inline HazeParams sample_haze_params(Rng& rng) {
    HazeParams p;
    for (int c = 0; c < 3; ++c) p.ambient[c] = rng.uniform(0.7, 1.0);
    p.transmission = rng.uniform(0.25, 0.65);
    p.thickness = rng.uniform(0.35, 0.75);
    return p;
}

/// Applies the scattering model per pixel and channel; output clamped to
/// [0,1]. Without a depth map, t is params.transmission everywhere.
inline Image apply_haze(const Image& clean, const HazeParams& params,
                        const DepthMap* depth = nullptr) {
    if (depth) {
        require(depth->width == clean.width && depth->height == clean.height,
                Errc::dimension_mismatch, "apply_haze: depth map dimensions differ from image");
    }
    Image out(clean.width, clean.height);
    for (int y = 0; y < clean.height; ++y) {
        for (int x = 0; x < clean.width; ++x) {
            double t = params.transmission;
            if (depth) {
                t = std::exp(-params.thickness * kDepthScale * static_cast<double>(depth->at(y, x)));
                t = std::clamp(t, kTransmissionFloor, 1.0);
            }
            for (int c = 0; c < 3; ++c) {
                const double j = clean.at(c, y, x);
                out.at(c, y, x) = static_cast<float>(j * t + params.ambient[c] * (1.0 - t));
            }
        }
    }
    clamp01_inplace(out);
    return out;
}

/// Smooth depth field: a tilted plane plus low-frequency noise, stretched
/// to span [0,1] exactly. The plane dominates the mix so normalization
/// cannot amplify local steps past the smoothness bound.
inline DepthMap gen_depth(Rng& rng, int width, int height) {
    require(width >= 8 && height >= 8, Errc::invalid_argument, "gen_depth: dimensions must be >= 8");

    const double u = rng.uniform(0.5, 1.0);
    const double v = rng.uniform(0.5, 1.0);
    const int cell = std::max(6, std::min(width, height) / 4);
    auto noise = detail::smooth_field(rng, width, height, cell);

    DepthMap d;
    d.width = width;
    d.height = height;
    d.values.resize(static_cast<size_t>(width) * height);

    constexpr double kNoiseShare = 0.2;
    float lo = 1e9f, hi = -1e9f;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const double ramp = (u * x / (width - 1) + v * y / (height - 1)) / (u + v);
            const float val = static_cast<float>((1.0 - kNoiseShare) * ramp +
                                                 kNoiseShare * noise[static_cast<size_t>(y) * width + x]);
            d.values[static_cast<size_t>(y) * width + x] = val;
            lo = std::min(lo, val);
            hi = std::max(hi, val);
        }

    const float span = hi - lo;
    for (float& val : d.values) val = (val - lo) / span;
    return d;
}

/// n (hazy, clean) pairs from procedurally generated scenes. Each sample
/// draws from its own split stream, so the result does not depend on any
/// evaluation order.
inline Dataset synth_dataset(Rng& rng, int n, int width, int height, HazeMode mode,
                             int complexity = 5) {
    require(n >= 1, Errc::invalid_argument, "synth_dataset: n must be >= 1");
    Dataset ds;
    ds.pairs.resize(n);
    Rng scenes = rng.split("scenes");
    for (int i = 0; i < n; ++i) {
        Rng sample = scenes.split(static_cast<uint64_t>(i));
        DatasetPair& p = ds.pairs[i];
        char buf[16];
        std::snprintf(buf, sizeof buf, "%05d", i);
        p.id = buf;
        p.provenance = "synthetic";
        p.clean = gen_scene(sample, width, height, complexity);
        HazeParams hp = sample_haze_params(sample);
        if (mode == HazeMode::depth) {
            DepthMap depth = gen_depth(sample, width, height);
            p.hazy = apply_haze(p.clean, hp, &depth);
        } else {
            p.hazy = apply_haze(p.clean, hp);
        }
    }
    return ds;
}

}  // namespace crossdehaze
