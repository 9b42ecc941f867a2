// Serial reference kernels. These are the ground truth the OpenMP variants
// are tested against (bit-identical: same per-element accumulation order).

#include "rectify/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace rectify::serial_kern {

void matmul(const float* a, const float* b, float* c, int m, int k, int n,
            bool trans_b, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            if (trans_b) {
                const float* arow = a + static_cast<std::size_t>(i) * k;
                const float* brow = b + static_cast<std::size_t>(j) * k;
                for (int p = 0; p < k; ++p) acc += static_cast<double>(arow[p]) * brow[p];
            } else {
                for (int p = 0; p < k; ++p)
                    acc += static_cast<double>(a[static_cast<std::size_t>(i) * k + p]) *
                           b[static_cast<std::size_t>(p) * n + j];
            }
            std::size_t idx = static_cast<std::size_t>(i) * n + j;
            c[idx] = accumulate ? c[idx] + static_cast<float>(acc) : static_cast<float>(acc);
        }
    }
}

void matmul_tn(const float* a, const float* b, float* c, int m, int r, int cols,
               bool accumulate) {
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < cols; ++j) {
            double acc = 0.0;
            for (int p = 0; p < m; ++p)
                acc += static_cast<double>(a[static_cast<std::size_t>(p) * r + i]) *
                       b[static_cast<std::size_t>(p) * cols + j];
            std::size_t idx = static_cast<std::size_t>(i) * cols + j;
            c[idx] = accumulate ? c[idx] + static_cast<float>(acc) : static_cast<float>(acc);
        }
    }
}

void add_rows(const float* x, const float* b, float* y, int rows, int cols) {
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            std::size_t i = static_cast<std::size_t>(r) * cols + c;
            y[i] = x[i] + b[c];
        }
}

void col_sums(const float* x, float* out, int rows, int cols) {
    for (int c = 0; c < cols; ++c) {
        double acc = 0.0;
        for (int r = 0; r < rows; ++r) acc += x[static_cast<std::size_t>(r) * cols + c];
        out[c] = static_cast<float>(acc);
    }
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

inline double gelu_one(double x) {
    double u = kGeluC * (x + 0.044715 * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}
inline double gelu_grad_one(double x) {
    double u = kGeluC * (x + 0.044715 * x * x * x);
    double th = std::tanh(u);
    double du = kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
}
}  // namespace

void gelu_forward(const float* x, float* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = static_cast<float>(gelu_one(x[i]));
}

void gelu_backward(const float* x, const float* dy, float* dx, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i)
        dx[i] += static_cast<float>(gelu_grad_one(x[i]) * dy[i]);
}

void layernorm_forward(const float* x, const float* w, const float* b, float* y,
                       float* mean, float* rstd, int rows, int cols, float eps) {
    for (int r = 0; r < rows; ++r) {
        const float* xr = x + static_cast<std::size_t>(r) * cols;
        double mu = 0.0;
        for (int c = 0; c < cols; ++c) mu += xr[c];
        mu /= cols;
        double var = 0.0;
        for (int c = 0; c < cols; ++c) {
            double d = xr[c] - mu;
            var += d * d;
        }
        var /= cols;
        double rs = 1.0 / std::sqrt(var + eps);
        mean[r] = static_cast<float>(mu);
        rstd[r] = static_cast<float>(rs);
        float* yr = y + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c)
            yr[c] = static_cast<float>((xr[c] - mu) * rs * w[c] + b[c]);
    }
}

void layernorm_backward(const float* x, const float* w, const float* dy,
                        const float* mean, const float* rstd,
                        float* dx, float* dw, float* db, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const float* xr = x + static_cast<std::size_t>(r) * cols;
        const float* dyr = dy + static_cast<std::size_t>(r) * cols;
        double mu = mean[r], rs = rstd[r];
        double s1 = 0.0, s2 = 0.0;  // mean(dxhat), mean(dxhat * xhat)
        for (int c = 0; c < cols; ++c) {
            double xhat = (xr[c] - mu) * rs;
            double dxhat = static_cast<double>(dyr[c]) * w[c];
            s1 += dxhat;
            s2 += dxhat * xhat;
        }
        s1 /= cols;
        s2 /= cols;
        float* dxr = dx + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) {
            double xhat = (xr[c] - mu) * rs;
            double dxhat = static_cast<double>(dyr[c]) * w[c];
            dxr[c] += static_cast<float>((dxhat - s1 - xhat * s2) * rs);
        }
    }
    if (dw != nullptr || db != nullptr) {
        for (int c = 0; c < cols; ++c) {
            double aw = 0.0, ab = 0.0;
            for (int r = 0; r < rows; ++r) {
                std::size_t i = static_cast<std::size_t>(r) * cols + c;
                double xhat = (x[i] - mean[r]) * static_cast<double>(rstd[r]);
                aw += static_cast<double>(dy[i]) * xhat;
                ab += dy[i];
            }
            if (dw) dw[c] += static_cast<float>(aw);
            if (db) db[c] += static_cast<float>(ab);
        }
    }
}

void softmax_rows(const float* x, float* y, int rows, int cols, bool causal) {
    for (int r = 0; r < rows; ++r) {
        const float* xr = x + static_cast<std::size_t>(r) * cols;
        float* yr = y + static_cast<std::size_t>(r) * cols;
        int limit = causal ? r + 1 : cols;
        double mx = xr[0];
        for (int c = 1; c < limit; ++c) mx = std::max(mx, static_cast<double>(xr[c]));
        double z = 0.0;
        for (int c = 0; c < limit; ++c) z += std::exp(xr[c] - mx);
        for (int c = 0; c < limit; ++c)
            yr[c] = static_cast<float>(std::exp(xr[c] - mx) / z);
        for (int c = limit; c < cols; ++c) yr[c] = 0.0f;
    }
}

void softmax_rows_backward(const float* y, const float* dy, float* dx, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const float* yr = y + static_cast<std::size_t>(r) * cols;
        const float* dyr = dy + static_cast<std::size_t>(r) * cols;
        double dot = 0.0;
        for (int c = 0; c < cols; ++c) dot += static_cast<double>(yr[c]) * dyr[c];
        float* dxr = dx + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c)
            dxr[c] += static_cast<float>(yr[c] * (dyr[c] - dot));
    }
}

void attention_forward(const float* q, const float* k, const float* v, float* out,
                       float* probs, int t, int d, int n_heads) {
    int hd = d / n_heads;
    double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    for (int h = 0; h < n_heads; ++h) {
        for (int i = 0; i < t; ++i) {
            const float* qi = q + static_cast<std::size_t>(i) * d + h * hd;
            float* prow = probs + (static_cast<std::size_t>(h) * t + i) * t;
            double mx = -1e30;
            for (int j = 0; j <= i; ++j) {
                const float* kj = k + static_cast<std::size_t>(j) * d + h * hd;
                double s = 0.0;
                for (int p = 0; p < hd; ++p) s += static_cast<double>(qi[p]) * kj[p];
                s *= scale;
                prow[j] = static_cast<float>(s);
                mx = std::max(mx, s);
            }
            double z = 0.0;
            for (int j = 0; j <= i; ++j) z += std::exp(prow[j] - mx);
            for (int j = 0; j <= i; ++j)
                prow[j] = static_cast<float>(std::exp(prow[j] - mx) / z);
            for (int j = i + 1; j < t; ++j) prow[j] = 0.0f;

            float* oi = out + static_cast<std::size_t>(i) * d + h * hd;
            for (int p = 0; p < hd; ++p) {
                double acc = 0.0;
                for (int j = 0; j <= i; ++j)
                    acc += static_cast<double>(prow[j]) * v[static_cast<std::size_t>(j) * d + h * hd + p];
                oi[p] = static_cast<float>(acc);
            }
        }
    }
}

void attention_backward(const float* q, const float* k, const float* v, const float* probs,
                        const float* dout, float* dq, float* dk, float* dv,
                        int t, int d, int n_heads) {
    int hd = d / n_heads;
    double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    std::vector<double> ds(static_cast<std::size_t>(t) * t);
    for (int h = 0; h < n_heads; ++h) {
        // dS = softmax-backward(probs, dP) with dP[i][j] = <dout_i, v_j>
        for (int i = 0; i < t; ++i) {
            const float* prow = probs + (static_cast<std::size_t>(h) * t + i) * t;
            const float* doi = dout + static_cast<std::size_t>(i) * d + h * hd;
            double dot = 0.0;
            for (int j = 0; j <= i; ++j) {
                const float* vj = v + static_cast<std::size_t>(j) * d + h * hd;
                double dp = 0.0;
                for (int p = 0; p < hd; ++p) dp += static_cast<double>(doi[p]) * vj[p];
                ds[static_cast<std::size_t>(i) * t + j] = dp;
                dot += static_cast<double>(prow[j]) * dp;
            }
            for (int j = 0; j <= i; ++j) {
                std::size_t idx = static_cast<std::size_t>(i) * t + j;
                ds[idx] = prow[j] * (ds[idx] - dot) * scale;
            }
        }
        for (int i = 0; i < t; ++i) {
            float* dqi = dq + static_cast<std::size_t>(i) * d + h * hd;
            for (int p = 0; p < hd; ++p) {
                double acc = 0.0;
                for (int j = 0; j <= i; ++j)
                    acc += ds[static_cast<std::size_t>(i) * t + j] *
                           k[static_cast<std::size_t>(j) * d + h * hd + p];
                dqi[p] += static_cast<float>(acc);
            }
        }
        for (int j = 0; j < t; ++j) {
            float* dkj = dk + static_cast<std::size_t>(j) * d + h * hd;
            float* dvj = dv + static_cast<std::size_t>(j) * d + h * hd;
            for (int p = 0; p < hd; ++p) {
                double ak = 0.0, av = 0.0;
                for (int i = j; i < t; ++i) {
                    ak += ds[static_cast<std::size_t>(i) * t + j] *
                          q[static_cast<std::size_t>(i) * d + h * hd + p];
                    av += static_cast<double>(probs[(static_cast<std::size_t>(h) * t + i) * t + j]) *
                          dout[static_cast<std::size_t>(i) * d + h * hd + p];
                }
                dkj[p] += static_cast<float>(ak);
                dvj[p] += static_cast<float>(av);
            }
        }
    }
}

}  // namespace rectify::serial_kern
