#pragma once

#include "shadownet/tensor.hpp"

namespace shadownet {

enum class Padding { valid, same };

// Output spatial extent; throws ShapeError when the window does not fit.
int conv_out_dim(int in, int k, int stride, Padding p, const char* dim_name);
// Leading pad for "same" (TensorFlow convention: total pad split, extra at the
// trailing edge).
int pad_before(int in, int out, int k, int stride, Padding p);

namespace ops {

// Dot-product kernels accumulate in double with fixed kh -> kw -> cin term
// order and round once at the store, so an independent oracle using the same
// accumulator and order matches bitwise, and per-round additive mask noise
// cancels against the unmask terms down to the final rounding.

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int stride,
                 Padding padding);

// w is (kh, kw, n): output channel i depends on input channel i only.
template <typename T>
Tensor<T> dwconv2d(const Tensor<T>& x, const Tensor<T>& w, int stride,
                   Padding padding);

// w is (1, 1, cin, n).
template <typename T>
Tensor<T> pointwise_conv(const Tensor<T>& x, const Tensor<T>& w);

// Flattens x to (1, 1, count) then applies pointwise_conv; w is (1, 1, n, m).
template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& w);

// Per-channel y = gamma * (x - mean) / sqrt(var + eps) + beta. Parameter
// tensors are (1, 1, c).
template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, const Tensor<T>& gamma,
                    const Tensor<T>& beta, const Tensor<T>& mean,
                    const Tensor<T>& variance, T eps);

template <typename T>
Tensor<T> relu6(const Tensor<T>& x);

// Valid-window pooling.
template <typename T>
Tensor<T> avg_pool(const Tensor<T>& x, int window, int stride);
template <typename T>
Tensor<T> max_pool(const Tensor<T>& x, int window, int stride);

// Max-stabilized, over every element.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

// ---- allocation-free kernels on raw storage ----
// In-place variants satisfy: writing element i only needs elements >= i of the
// same buffer (pointwise/shuffle go through a per-pixel scratch).

namespace span {

// Pointwise mix (1,1,cin,n) applied in place over h*w pixels; out pixel p
// starts at p*n while input pixel p starts at p*cin (n <= cin required for
// in-place use; data/out may alias with that guarantee, or not alias at all).
template <typename T>
void pointwise(const T* in, int pixels, int cin, const T* filt, int n, T* out,
               T* pixel_tmp);

// Scatter shuffle: out channel perm[i] = in channel i * scale[i]. scale may be
// null (unit scales). In-place safe via pixel_tmp.
template <typename T>
void shuffle(T* data, int pixels, int c, const int* perm, const T* scale,
             T* pixel_tmp);

template <typename T>
void batchnorm(T* data, int pixels, int c, const T* gamma, const T* beta,
               const T* mean, const T* variance, T eps);

template <typename T>
void relu6(T* data, size_t count);

// data += sign * m, elementwise.
template <typename T>
void axpy_mask(T* data, const T* m, size_t count, T sign);

// a += b.
template <typename T>
void add(T* a, const T* b, size_t count);

template <typename T>
void softmax(T* data, size_t count);

template <typename T>
void avg_pool(const T* in, int h, int w, int c, int window, int stride, T* out);
template <typename T>
void max_pool(const T* in, int h, int w, int c, int window, int stride, T* out);

// Full convolution into a caller-provided buffer (used for unmask terms).
template <typename T>
void conv2d(const T* in, int h, int w, int cin, const T* filt, int kh, int kw,
            int n, int stride, Padding padding, T* out);
template <typename T>
void dwconv2d(const T* in, int h, int w, int c, const T* filt, int kh, int kw,
              int stride, Padding padding, T* out);

}  // namespace span

}  // namespace ops
}  // namespace shadownet
