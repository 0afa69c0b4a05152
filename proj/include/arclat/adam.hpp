#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "arclat/model.hpp"

namespace arclat {

// Adam with bias correction. First and second moments are kept in one flat
// buffer laid out in the parameter order of the first step; that order must
// not change between steps.
struct Adam {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    std::vector<double> m, v;
    std::uint64_t t = 0;

    void step(const std::vector<ParamRef>& params) {
        std::size_t total = 0;
        for (const auto& p : params) total += p.value->numel();
        if (m.empty()) {
            m.assign(total, 0.0);
            v.assign(total, 0.0);
        }
        ARCLAT_CHECK(m.size() == total, "parameter count changed between optimizer steps");

        ++t;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        std::size_t o = 0;
        for (const auto& p : params) {
            for (std::size_t i = 0; i < p.value->numel(); ++i, ++o) {
                const double g = p.grad->data[i];
                m[o] = beta1 * m[o] + (1.0 - beta1) * g;
                v[o] = beta2 * v[o] + (1.0 - beta2) * g * g;
                const double mhat = m[o] / c1;
                const double vhat = v[o] / c2;
                p.value->data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }
};

}  // namespace arclat
