#pragma once

#include <random>

#include "arclat/tensor.hpp"

namespace arclat {

enum class Mode { Train, Eval };

// All layers cache what their backward pass needs during forward. backward
// accumulates parameter gradients (call zero_grad between steps) and returns
// the gradient with respect to the layer input. Eval-mode forwards cache
// nothing and consume no randomness.

struct Conv2d {
    std::size_t in_ch = 0, out_ch = 0, ksize = 3, stride = 1, pad = 1;
    Tensor weight;  // (out_ch, in_ch, k, k)
    Tensor bias;    // (out_ch)
    Tensor wgrad, bgrad;

    Conv2d() = default;
    Conv2d(std::size_t ic, std::size_t oc, std::size_t k = 3, std::size_t s = 1, std::size_t p = 1);

    std::vector<std::size_t> out_shape(const std::vector<std::size_t>& in) const;
    Tensor forward(const Tensor& x, Mode mode);
    Tensor backward(const Tensor& gy);
    void zero_grad();

   private:
    Tensor cached_x;
};

struct MaxPool2d {
    Tensor forward(const Tensor& x, Mode mode);
    Tensor backward(const Tensor& gy);

   private:
    std::vector<std::size_t> argmax;  // flat input index per output cell
    std::vector<std::size_t> in_shape;
};

struct Relu {
    Tensor forward(const Tensor& x, Mode mode);
    Tensor backward(const Tensor& gy);

   private:
    std::vector<unsigned char> gate;  // 1 where x >= 0
};

struct Linear {
    std::size_t in_f = 0, out_f = 0;
    Tensor weight;  // (out_f, in_f)
    Tensor bias;    // (out_f)
    Tensor wgrad, bgrad;

    Linear() = default;
    Linear(std::size_t in, std::size_t out);

    Tensor forward(const Tensor& x, Mode mode);  // x: (N, in_f)
    Tensor backward(const Tensor& gy);
    void zero_grad();

   private:
    Tensor cached_x;
};

// Transposed convolution, 3x3, stride 2, pad 1, output padding 1: the exact
// adjoint of Conv2d(k=3, s=2, p=1) on the doubled spatial extent, so
// (C, h, w) -> (out_ch, 2h, 2w).
struct ConvTranspose2d {
    std::size_t in_ch = 0, out_ch = 0;
    Tensor weight;  // (in_ch, out_ch, 3, 3)
    Tensor bias;    // (out_ch)
    Tensor wgrad, bgrad;

    ConvTranspose2d() = default;
    ConvTranspose2d(std::size_t ic, std::size_t oc);

    Tensor forward(const Tensor& x, Mode mode);
    Tensor backward(const Tensor& gy);
    void zero_grad();

   private:
    Tensor cached_x;
};

struct BatchNorm2d {
    std::size_t channels = 0;
    double momentum = 0.1, eps = 1e-5;
    Tensor gamma, beta;            // (C)
    Tensor ggrad, bgrad;           // (C)
    Tensor running_mean, running_var;  // (C); var stored unbiased

    BatchNorm2d() = default;
    explicit BatchNorm2d(std::size_t c);

    Tensor forward(const Tensor& x, Mode mode);
    Tensor backward(const Tensor& gy);
    void zero_grad();

   private:
    Tensor cached_xhat;
    std::vector<double> inv_std;  // per channel, train mode
};

// Contiguous square blocks of a feature map are zeroed; survivors are
// rescaled so the expected activation is preserved. size=1 degenerates to
// plain dropout. Identity in eval mode and at rate 0.
struct DropBlock {
    double rate = 0.2;
    std::size_t size = 3;

    DropBlock() = default;
    DropBlock(double r, std::size_t s) : rate(r), size(s) {}

    // rng may be null in eval mode or at rate 0; those paths draw nothing.
    Tensor forward(const Tensor& x, Mode mode, std::mt19937_64* rng);
    Tensor backward(const Tensor& gy);

   private:
    std::vector<double> mask;  // per cell: 0 or the kept-rescale factor
    bool identity = true;
};

// Identity on channel 0 (positions), ReLU on channel 1 (gaps).
struct OutputHead {
    Tensor forward(const Tensor& x, Mode mode);
    Tensor backward(const Tensor& gy);

   private:
    std::vector<unsigned char> gate;
};

// im2col/col2im used by both convolution directions; exposed for tests that
// build the dense convolution matrix by impulse probing.
void im2col(const double* x, std::size_t ch, std::size_t h, std::size_t w, std::size_t ksize,
            std::size_t stride, std::size_t pad, double* cols);
void col2im(const double* cols, std::size_t ch, std::size_t h, std::size_t w, std::size_t ksize,
            std::size_t stride, std::size_t pad, double* x);
inline std::size_t conv_out_extent(std::size_t in, std::size_t ksize, std::size_t stride,
                                   std::size_t pad) {
    return (in + 2 * pad - ksize) / stride + 1;
}

}  // namespace arclat
