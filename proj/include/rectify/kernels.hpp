#pragma once

#include <cstdint>

namespace rectify {

// Runtime switch between the OpenMP kernels and the serial reference ones.
// Both variants accumulate each output element in double over the same index
// order, so results are bit-identical; the tests assert exactly that and the
// bench target measures the gap.
void set_parallel_kernels(bool on);
bool parallel_kernels();

namespace kern {

// C[m,n] = sum_k A[m,k] * B[k,n]        (trans_b = false, B is [k,n])
// C[m,n] = sum_k A[m,k] * B[n,k]        (trans_b = true,  B is [n,k])
// When accumulate, adds into C instead of overwriting.
void matmul(const float* a, const float* b, float* c, int m, int k, int n,
            bool trans_b, bool accumulate);

// C[r,c] = sum_i A[i,r] * B[i,c]  (A is [m,r], B is [m,c]; C = A^T B).
void matmul_tn(const float* a, const float* b, float* c, int m, int r, int cols,
               bool accumulate);

void add_rows(const float* x, const float* b, float* y, int rows, int cols);   // y = x + b per row
void col_sums(const float* x, float* out, int rows, int cols);                 // out[c] = sum_r x[r,c]

void gelu_forward(const float* x, float* y, std::int64_t n);
void gelu_backward(const float* x, const float* dy, float* dx, std::int64_t n);  // accumulates into dx

// Per-row layernorm; saves mean and rstd per row for the backward pass.
void layernorm_forward(const float* x, const float* w, const float* b, float* y,
                       float* mean, float* rstd, int rows, int cols, float eps);
void layernorm_backward(const float* x, const float* w, const float* dy,
                        const float* mean, const float* rstd,
                        float* dx, float* dw, float* db, int rows, int cols);

// Row-wise softmax with optional causal mask (row r attends to cols <= r).
void softmax_rows(const float* x, float* y, int rows, int cols, bool causal);
void softmax_rows_backward(const float* y, const float* dy, float* dx, int rows, int cols);

// Fused causal multi-head self attention over one sequence.
// q,k,v: [t, d] with d = n_heads * head_dim (head h occupies columns [h*hd, (h+1)*hd)).
// probs: caller-provided buffer [n_heads * t * t] filled with per-head attention rows.
void attention_forward(const float* q, const float* k, const float* v, float* out,
                       float* probs, int t, int d, int n_heads);
void attention_backward(const float* q, const float* k, const float* v, const float* probs,
                        const float* dout, float* dq, float* dk, float* dv,
                        int t, int d, int n_heads);

}  // namespace kern
}  // namespace rectify
