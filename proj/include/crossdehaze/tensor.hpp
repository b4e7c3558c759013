#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "crossdehaze/error.hpp"
#include "crossdehaze/image.hpp"

namespace crossdehaze {

/// Dense n-d value array. The network uses (channels, height, width)
/// tensors for feature maps and 1-d/2-d tensors for vector parameters.
/// T is float in training mode and double in gradient-check mode.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        require(static_cast<int64_t>(data.size()) == count(shape), Errc::dimension_mismatch,
                "tensor data length does not match shape");
    }

    static int64_t count(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<int> s) {
        Tensor t;
        t.data.assign(static_cast<size_t>(count(s)), T(0));
        t.shape = std::move(s);
        return t;
    }

    static Tensor full(std::vector<int> s, T v) {
        Tensor t = zeros(std::move(s));
        for (T& x : t.data) x = v;
        return t;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    // (C,H,W) accessors
    int chans() const { return shape[0]; }
    int height() const { return shape[1]; }
    int width() const { return shape[2]; }
    T& at3(int c, int y, int x) {
        return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    T at3(int c, int y, int x) const {
        return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
    }

    void fill(T v) {
        for (T& x : data) x = v;
    }
};

template <typename T>
Tensor<T> tensor_from_image(const Image& img) {
    Tensor<T> t = Tensor<T>::zeros({Image::kChannels, img.height, img.width});
    for (size_t i = 0; i < img.data.size(); ++i) t.data[i] = static_cast<T>(img.data[i]);
    return t;
}

/// Clamped [0,1] export of a (3,H,W) tensor — the form metrics score.
template <typename T>
Image image_from_tensor_clamped(const Tensor<T>& t) {
    require(t.ndim() == 3 && t.chans() == Image::kChannels, Errc::dimension_mismatch,
            "image export needs a (3,H,W) tensor");
    Image img(t.width(), t.height());
    for (size_t i = 0; i < img.data.size(); ++i)
        img.data[i] = std::clamp(static_cast<float>(t.data[i]), 0.0f, 1.0f);
    return img;
}

}  // namespace crossdehaze
