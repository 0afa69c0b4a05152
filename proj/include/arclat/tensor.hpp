#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "arclat/errors.hpp"

namespace arclat {

// Dense row-major tensor of doubles. Shape conventions in this codebase:
// (N, C, H, W) for feature maps, (N, F) for flattened features.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        data.assign(numel_of(shape), 0.0);
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t e : s) n *= e;
        return n;
    }

    std::size_t numel() const { return data.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    double& at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    double at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    double& at2(std::size_t n, std::size_t f) { return data[n * shape[1] + f]; }
    double at2(std::size_t n, std::size_t f) const { return data[n * shape[1] + f]; }

    // Same data, new shape; element count must match.
    Tensor reshaped(std::vector<std::size_t> s) const {
        if (numel_of(s) != numel()) throw ShapeMismatch("reshape changes element count");
        Tensor t;
        t.shape = std::move(s);
        t.data = data;
        return t;
    }

    std::string shape_str() const {
        std::string s = "(";
        for (std::size_t i = 0; i < shape.size(); ++i)
            s += (i ? "," : "") + std::to_string(shape[i]);
        return s + ")";
    }
};

inline void require_shape(const Tensor& t, const std::vector<std::size_t>& s, const char* what) {
    if (t.shape != s) {
        Tensor probe;
        probe.shape = s;
        throw ShapeMismatch(std::string(what) + ": got " + t.shape_str() + ", expected " +
                            probe.shape_str());
    }
}

}  // namespace arclat
