#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "crossdehaze/dataset.hpp"
#include "crossdehaze/image.hpp"

namespace crossdehaze {

/// Per-channel gamma factors of the power transform O = I^(1/gamma).
/// A component of 1 is the identity for that channel.
struct GammaTriple {
    double r = 1.0, g = 1.0, b = 1.0;

    double operator[](int c) const { return c == 0 ? r : c == 1 ? g : b; }
    double& operator[](int c) { return c == 0 ? r : c == 1 ? g : b; }
};

struct ChannelStats {
    static constexpr int kBins = 64;

    std::array<double, 3> mean{};                          // pixel-weighted, [0,1]
    std::array<std::array<uint64_t, kBins>, 3> histogram{};
    uint64_t sample_count = 0;                             // pixels per channel
};

namespace detail {

// Neumaier-compensated accumulator; sequential order keeps the result
// independent of how work was chunked.
struct CompensatedSum {
    double sum = 0.0, comp = 0.0;
    void add(double v) {
        const double t = sum + v;
        if (std::abs(sum) >= std::abs(v))
            comp += (sum - t) + v;
        else
            comp += (v - t) + sum;
        sum = t;
    }
    double value() const { return sum + comp; }
};

inline int histogram_bin(double v) {
    const int bin = static_cast<int>(v * ChannelStats::kBins);
    return std::clamp(bin, 0, ChannelStats::kBins - 1);
}

}  // namespace detail

/// Pixel-weighted per-channel means plus 64-bin histograms over the
/// pooled pixel population of all images.
inline ChannelStats dataset_channel_means(std::span<const Image> images) {
    require(!images.empty(), Errc::invalid_argument, "dataset_channel_means: empty image list");
    ChannelStats stats;
    std::array<detail::CompensatedSum, 3> sums;
    for (const Image& img : images) {
        const size_t n = img.plane();
        for (int c = 0; c < 3; ++c) {
            const float* p = img.data.data() + static_cast<size_t>(c) * n;
            for (size_t i = 0; i < n; ++i) {
                sums[c].add(p[i]);
                ++stats.histogram[c][detail::histogram_bin(p[i])];
            }
        }
        stats.sample_count += n;
    }
    for (int c = 0; c < 3; ++c)
        stats.mean[c] = sums[c].value() / static_cast<double>(stats.sample_count);
    return stats;
}

inline ChannelStats dataset_channel_means(const std::vector<Image>& images) {
    return dataset_channel_means(std::span<const Image>(images));
}

/// Stats over the hazy images of a dataset (what the gamma solve uses).
inline ChannelStats hazy_channel_stats(const Dataset& ds) {
    std::vector<Image> hazy;
    hazy.reserve(ds.size());
    for (const auto& p : ds.pairs) hazy.push_back(p.hazy);
    return dataset_channel_means(hazy);
}

/// Solves Mean_target = Mean_source^(1/gamma) per channel:
/// gamma_c = ln(source_c) / ln(target_c), with both means in [0,1].
/// Means within kMeanGuard of 0 or 1 make the log ratio singular and are
/// rejected naming the offending channel.
inline GammaTriple solve_gamma(const ChannelStats& source, const ChannelStats& target) {
    constexpr double kMeanGuard = 1e-4;
    static constexpr const char* kNames[3] = {"R", "G", "B"};
    GammaTriple gamma;
    for (int c = 0; c < 3; ++c) {
        for (double m : {source.mean[c], target.mean[c]}) {
            require(m > kMeanGuard && m < 1.0 - kMeanGuard, Errc::singular_statistics,
                    std::string("channel ") + kNames[c] + " mean " + std::to_string(m) +
                        " too close to 0 or 1 for a gamma solve");
        }
        gamma[c] = std::log(source.mean[c]) / std::log(target.mean[c]);
    }
    return gamma;
}

/// Per-pixel power transform O_c = I_c^(1/gamma_c) on [0,1]. 0 and 1 are
/// fixed points, so no clamping is needed.
inline Image apply_gamma(const Image& img, const GammaTriple& gamma) {
    for (int c = 0; c < 3; ++c)
        require(gamma[c] > 0.0, Errc::invalid_argument, "apply_gamma: gamma components must be positive");
    Image out(img.width, img.height);
    const size_t n = img.plane();
    for (int c = 0; c < 3; ++c) {
        const double inv = 1.0 / gamma[c];
        const float* src = img.data.data() + static_cast<size_t>(c) * n;
        float* dst = out.data.data() + static_cast<size_t>(c) * n;
        for (size_t i = 0; i < n; ++i)
            dst[i] = static_cast<float>(std::pow(static_cast<double>(src[i]), inv));
    }
    return out;
}

struct AlignResult {
    Dataset dataset;
    GammaTriple gamma;
    ChannelStats source_stats;  // hazy-image stats before alignment
};

/// Channel migration: gamma solved from the source's hazy statistics
/// against the target statistics, then applied to both images of every
/// pair so the supervision target moves consistently. The input dataset
/// is left untouched; output provenance is "aligned".
inline AlignResult align_dataset(const Dataset& source, const ChannelStats& target_stats) {
    require(!source.empty(), Errc::invalid_argument, "align_dataset: empty source dataset");
    AlignResult result;
    result.source_stats = hazy_channel_stats(source);
    result.gamma = solve_gamma(result.source_stats, target_stats);
    result.dataset.pairs.reserve(source.size());
    for (const auto& p : source.pairs) {
        DatasetPair out;
        out.id = p.id;
        out.provenance = "aligned";
        out.hazy = apply_gamma(p.hazy, result.gamma);
        out.clean = apply_gamma(p.clean, result.gamma);
        result.dataset.pairs.push_back(std::move(out));
    }
    return result;
}

/// Writes the RGB distribution comparison of two stats as CSV:
/// bin_low,bin_high,a_r,a_g,a_b,b_r,b_g,b_b with counts normalized to
/// frequencies.
inline void channel_histogram_csv(const ChannelStats& a, const ChannelStats& b,
                                  const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(Errc::io_failure, "cannot write " + path.string());
    out << "bin_low,bin_high,a_r,a_g,a_b,b_r,b_g,b_b\n";
    const double width = 1.0 / ChannelStats::kBins;
    char buf[64];
    for (int bin = 0; bin < ChannelStats::kBins; ++bin) {
        std::snprintf(buf, sizeof buf, "%.6f,%.6f", bin * width, (bin + 1) * width);
        out << buf;
        for (const ChannelStats* s : {&a, &b})
            for (int c = 0; c < 3; ++c) {
                std::snprintf(buf, sizeof buf, ",%.9f",
                              static_cast<double>(s->histogram[c][bin]) / static_cast<double>(s->sample_count));
                out << buf;
            }
        out << "\n";
    }
    if (!out) fail(Errc::io_failure, "write failed for " + path.string());
}

}  // namespace crossdehaze
