#include "rectify/kernels.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>

#include "rectify/tensor.hpp"

namespace rectify {

namespace serial_kern {
void matmul(const float*, const float*, float*, int, int, int, bool, bool);
void matmul_tn(const float*, const float*, float*, int, int, int, bool);
void add_rows(const float*, const float*, float*, int, int);
void col_sums(const float*, float*, int, int);
void gelu_forward(const float*, float*, std::int64_t);
void gelu_backward(const float*, const float*, float*, std::int64_t);
void layernorm_forward(const float*, const float*, const float*, float*, float*, float*, int, int, float);
void layernorm_backward(const float*, const float*, const float*, const float*, const float*,
                        float*, float*, float*, int, int);
void softmax_rows(const float*, float*, int, int, bool);
void softmax_rows_backward(const float*, const float*, float*, int, int);
void attention_forward(const float*, const float*, const float*, float*, float*, int, int, int);
void attention_backward(const float*, const float*, const float*, const float*, const float*,
                        float*, float*, float*, int, int, int);
}  // namespace serial_kern

namespace omp_kern {
void matmul(const float*, const float*, float*, int, int, int, bool, bool);
void matmul_tn(const float*, const float*, float*, int, int, int, bool);
void add_rows(const float*, const float*, float*, int, int);
void col_sums(const float*, float*, int, int);
void gelu_forward(const float*, float*, std::int64_t);
void gelu_backward(const float*, const float*, float*, std::int64_t);
void layernorm_forward(const float*, const float*, const float*, float*, float*, float*, int, int, float);
void layernorm_backward(const float*, const float*, const float*, const float*, const float*,
                        float*, float*, float*, int, int);
void softmax_rows(const float*, float*, int, int, bool);
void softmax_rows_backward(const float*, const float*, float*, int, int);
void attention_forward(const float*, const float*, const float*, float*, float*, int, int, int);
void attention_backward(const float*, const float*, const float*, const float*, const float*,
                        float*, float*, float*, int, int, int);
}  // namespace omp_kern

namespace {
std::atomic<bool> g_parallel{true};
}

void set_parallel_kernels(bool on) { g_parallel.store(on); }
bool parallel_kernels() { return g_parallel.load(); }

bool Tensor::all_finite() const {
    for (float v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

void check_finite(const Tensor& t, const std::string& what) {
    if (!t.all_finite()) throw std::runtime_error("non-finite values in " + what);
}

namespace kern {

#define RECTIFY_DISPATCH(fn, ...)                          \
    do {                                                   \
        if (g_parallel.load()) omp_kern::fn(__VA_ARGS__);  \
        else serial_kern::fn(__VA_ARGS__);                 \
    } while (0)

void matmul(const float* a, const float* b, float* c, int m, int k, int n,
            bool trans_b, bool accumulate) {
    RECTIFY_DISPATCH(matmul, a, b, c, m, k, n, trans_b, accumulate);
}
void matmul_tn(const float* a, const float* b, float* c, int m, int r, int cols,
               bool accumulate) {
    RECTIFY_DISPATCH(matmul_tn, a, b, c, m, r, cols, accumulate);
}
void add_rows(const float* x, const float* b, float* y, int rows, int cols) {
    RECTIFY_DISPATCH(add_rows, x, b, y, rows, cols);
}
void col_sums(const float* x, float* out, int rows, int cols) {
    RECTIFY_DISPATCH(col_sums, x, out, rows, cols);
}
void gelu_forward(const float* x, float* y, std::int64_t n) {
    RECTIFY_DISPATCH(gelu_forward, x, y, n);
}
void gelu_backward(const float* x, const float* dy, float* dx, std::int64_t n) {
    RECTIFY_DISPATCH(gelu_backward, x, dy, dx, n);
}
void layernorm_forward(const float* x, const float* w, const float* b, float* y,
                       float* mean, float* rstd, int rows, int cols, float eps) {
    RECTIFY_DISPATCH(layernorm_forward, x, w, b, y, mean, rstd, rows, cols, eps);
}
void layernorm_backward(const float* x, const float* w, const float* dy,
                        const float* mean, const float* rstd,
                        float* dx, float* dw, float* db, int rows, int cols) {
    RECTIFY_DISPATCH(layernorm_backward, x, w, dy, mean, rstd, dx, dw, db, rows, cols);
}
void softmax_rows(const float* x, float* y, int rows, int cols, bool causal) {
    RECTIFY_DISPATCH(softmax_rows, x, y, rows, cols, causal);
}
void softmax_rows_backward(const float* y, const float* dy, float* dx, int rows, int cols) {
    RECTIFY_DISPATCH(softmax_rows_backward, y, dy, dx, rows, cols);
}
void attention_forward(const float* q, const float* k, const float* v, float* out,
                       float* probs, int t, int d, int n_heads) {
    RECTIFY_DISPATCH(attention_forward, q, k, v, out, probs, t, d, n_heads);
}
void attention_backward(const float* q, const float* k, const float* v, const float* probs,
                        const float* dout, float* dq, float* dk, float* dv,
                        int t, int d, int n_heads) {
    RECTIFY_DISPATCH(attention_backward, q, k, v, probs, dout, dq, dk, dv, t, d, n_heads);
}

#undef RECTIFY_DISPATCH

}  // namespace kern
}  // namespace rectify
