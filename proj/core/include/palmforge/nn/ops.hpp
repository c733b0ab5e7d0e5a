#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <limits>
#include <vector>

#include "palmforge/errors.hpp"

// Dense layer primitives with exact analytic backward passes. Every loop has a
// fixed accumulation order so results are bit-reproducible run to run.

namespace palmforge::nn {

// C[MxN] (+)= A[MxK] * B[KxN], all row-major
template <class T>
void gemm(int M, int N, int K, const T* A, const T* B, T* C, bool acc = false) {
    for (int i = 0; i < M; ++i) {
        T* crow = C + static_cast<std::size_t>(i) * N;
        if (!acc)
            for (int j = 0; j < N; ++j) crow[j] = T(0);
        const T* arow = A + static_cast<std::size_t>(i) * K;
        for (int k = 0; k < K; ++k) {
            const T a = arow[k];
            const T* brow = B + static_cast<std::size_t>(k) * N;
            for (int j = 0; j < N; ++j) crow[j] += a * brow[j];
        }
    }
}

// C[MxN] (+)= A[MxK] * B[NxK]^T
template <class T>
void gemm_abt(int M, int N, int K, const T* A, const T* B, T* C, bool acc = false) {
    for (int i = 0; i < M; ++i) {
        const T* arow = A + static_cast<std::size_t>(i) * K;
        for (int j = 0; j < N; ++j) {
            const T* brow = B + static_cast<std::size_t>(j) * K;
            T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
            int k = 0;
            for (; k + 4 <= K; k += 4) {
                s0 += arow[k] * brow[k];
                s1 += arow[k + 1] * brow[k + 1];
                s2 += arow[k + 2] * brow[k + 2];
                s3 += arow[k + 3] * brow[k + 3];
            }
            T s = ((s0 + s1) + (s2 + s3));
            for (; k < K; ++k) s += arow[k] * brow[k];
            T& c = C[static_cast<std::size_t>(i) * N + j];
            c = acc ? c + s : s;
        }
    }
}

// C[MxN] (+)= A[KxM]^T * B[KxN]
template <class T>
void gemm_atb(int M, int N, int K, const T* A, const T* B, T* C, bool acc = false) {
    if (!acc) std::memset(C, 0, sizeof(T) * static_cast<std::size_t>(M) * N);
    for (int k = 0; k < K; ++k) {
        const T* arow = A + static_cast<std::size_t>(k) * M;
        const T* brow = B + static_cast<std::size_t>(k) * N;
        for (int i = 0; i < M; ++i) {
            const T a = arow[i];
            T* crow = C + static_cast<std::size_t>(i) * N;
            for (int j = 0; j < N; ++j) crow[j] += a * brow[j];
        }
    }
}

inline int conv_out_dim(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// col[C*k*k, Ho*Wo]
template <class T>
void im2col(const T* x, int C, int H, int W, int k, int stride, int pad, T* col) {
    const int Ho = conv_out_dim(H, k, stride, pad);
    const int Wo = conv_out_dim(W, k, stride, pad);
    const std::size_t plane = static_cast<std::size_t>(Ho) * Wo;
    for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                T* dst = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * plane;
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= H) {
                        for (int ox = 0; ox < Wo; ++ox) dst[oy * Wo + ox] = T(0);
                        continue;
                    }
                    const T* src = x + (static_cast<std::size_t>(c) * H + iy) * W;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        dst[oy * Wo + ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
                    }
                }
            }
}

// dx += col scattered back (dx must be pre-zeroed by the caller)
template <class T>
void col2im(const T* col, int C, int H, int W, int k, int stride, int pad, T* dx) {
    const int Ho = conv_out_dim(H, k, stride, pad);
    const int Wo = conv_out_dim(W, k, stride, pad);
    const std::size_t plane = static_cast<std::size_t>(Ho) * Wo;
    for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const T* src = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * plane;
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= H) continue;
                    T* dst = dx + (static_cast<std::size_t>(c) * H + iy) * W;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < W) dst[ix] += src[oy * Wo + ox];
                    }
                }
            }
}

template <class T>
std::vector<T>& conv_scratch() {
    thread_local std::vector<T> buf;
    return buf;
}

// y[N,Cout,Ho,Wo] = w[Cout,Cin,k,k] * x + b
template <class T>
void conv2d_forward(const T* x, int N, int Cin, int H, int W, const T* w, const T* b, int Cout,
                    int k, int stride, int pad, T* y) {
    const int Ho = conv_out_dim(H, k, stride, pad);
    const int Wo = conv_out_dim(W, k, stride, pad);
    const int K = Cin * k * k;
    const std::size_t plane = static_cast<std::size_t>(Ho) * Wo;
    auto& col = conv_scratch<T>();
    col.resize(static_cast<std::size_t>(K) * plane);
    for (int n = 0; n < N; ++n) {
        const T* xn = x + static_cast<std::size_t>(n) * Cin * H * W;
        T* yn = y + static_cast<std::size_t>(n) * Cout * plane;
        im2col(xn, Cin, H, W, k, stride, pad, col.data());
        gemm(Cout, static_cast<int>(plane), K, w, col.data(), yn);
        if (b)
            for (int c = 0; c < Cout; ++c) {
                const T bc = b[c];
                T* row = yn + static_cast<std::size_t>(c) * plane;
                for (std::size_t i = 0; i < plane; ++i) row[i] += bc;
            }
    }
}

// dw/db accumulate; dx (optional) is overwritten
template <class T>
void conv2d_backward(const T* x, const T* dy, int N, int Cin, int H, int W, const T* w, int Cout,
                     int k, int stride, int pad, T* dx, T* dw, T* db) {
    const int Ho = conv_out_dim(H, k, stride, pad);
    const int Wo = conv_out_dim(W, k, stride, pad);
    const int K = Cin * k * k;
    const std::size_t plane = static_cast<std::size_t>(Ho) * Wo;
    auto& col = conv_scratch<T>();
    col.resize(static_cast<std::size_t>(K) * plane);
    std::vector<T> dcol(static_cast<std::size_t>(K) * plane);
    if (dx) std::memset(dx, 0, sizeof(T) * static_cast<std::size_t>(N) * Cin * H * W);
    for (int n = 0; n < N; ++n) {
        const T* xn = x + static_cast<std::size_t>(n) * Cin * H * W;
        const T* dyn = dy + static_cast<std::size_t>(n) * Cout * plane;
        im2col(xn, Cin, H, W, k, stride, pad, col.data());
        gemm_abt(Cout, K, static_cast<int>(plane), dyn, col.data(), dw, true);
        if (db)
            for (int c = 0; c < Cout; ++c) {
                const T* row = dyn + static_cast<std::size_t>(c) * plane;
                T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
                std::size_t i = 0;
                for (; i + 4 <= plane; i += 4) {
                    s0 += row[i];
                    s1 += row[i + 1];
                    s2 += row[i + 2];
                    s3 += row[i + 3];
                }
                T s = ((s0 + s1) + (s2 + s3));
                for (; i < plane; ++i) s += row[i];
                db[c] += s;
            }
        if (dx) {
            gemm_atb(K, static_cast<int>(plane), Cout, w, dyn, dcol.data());
            col2im(dcol.data(), Cin, H, W, k, stride, pad,
                   dx + static_cast<std::size_t>(n) * Cin * H * W);
        }
    }
}

template <class T>
void silu_forward(const T* x, std::size_t n, T* y) {
    for (std::size_t i = 0; i < n; ++i) {
        const T s = T(1) / (T(1) + std::exp(-x[i]));
        y[i] = x[i] * s;
    }
}

template <class T>
void silu_backward(const T* x, const T* dy, std::size_t n, T* dx, bool acc = false) {
    for (std::size_t i = 0; i < n; ++i) {
        const T s = T(1) / (T(1) + std::exp(-x[i]));
        const T g = dy[i] * (s * (T(1) + x[i] * (T(1) - s)));
        dx[i] = acc ? dx[i] + g : g;
    }
}

// mean/invstd have shape [N*G]
template <class T>
void groupnorm_forward(const T* x, int N, int C, int HW, int G, const T* gamma, const T* beta,
                       T* y, T* mean, T* invstd) {
    if (C % G != 0) throw InvalidArgument("groupnorm: channels not divisible by groups");
    const int cg = C / G;
    const std::size_t m = static_cast<std::size_t>(cg) * HW;
    constexpr T kEps = T(1e-5);
    for (int n = 0; n < N; ++n)
        for (int g = 0; g < G; ++g) {
            const T* xg = x + (static_cast<std::size_t>(n) * C + static_cast<std::size_t>(g) * cg) * HW;
            T mu = 0;
            for (std::size_t i = 0; i < m; ++i) mu += xg[i];
            mu /= static_cast<T>(m);
            T var = 0;
            for (std::size_t i = 0; i < m; ++i) {
                const T d = xg[i] - mu;
                var += d * d;
            }
            var /= static_cast<T>(m);
            const T is = T(1) / std::sqrt(var + kEps);
            mean[n * G + g] = mu;
            invstd[n * G + g] = is;
            T* yg = y + (static_cast<std::size_t>(n) * C + static_cast<std::size_t>(g) * cg) * HW;
            for (int c = 0; c < cg; ++c) {
                const T ga = gamma[g * cg + c], be = beta[g * cg + c];
                for (int i = 0; i < HW; ++i) {
                    const std::size_t off = static_cast<std::size_t>(c) * HW + i;
                    yg[off] = ga * (xg[off] - mu) * is + be;
                }
            }
        }
}

// dgamma/dbeta accumulate; dx is overwritten
template <class T>
void groupnorm_backward(const T* x, const T* dy, int N, int C, int HW, int G, const T* gamma,
                        const T* mean, const T* invstd, T* dx, T* dgamma, T* dbeta) {
    const int cg = C / G;
    const std::size_t m = static_cast<std::size_t>(cg) * HW;
    for (int n = 0; n < N; ++n)
        for (int g = 0; g < G; ++g) {
            const std::size_t base =
                (static_cast<std::size_t>(n) * C + static_cast<std::size_t>(g) * cg) * HW;
            const T* xg = x + base;
            const T* dyg = dy + base;
            const T mu = mean[n * G + g], is = invstd[n * G + g];

            // per-channel param grads and the two group-wide reductions
            T sum_dxhat = 0, sum_dxhat_xhat = 0;
            for (int c = 0; c < cg; ++c) {
                const T ga = gamma[g * cg + c];
                T dg = 0, db = 0;
                for (int i = 0; i < HW; ++i) {
                    const std::size_t off = static_cast<std::size_t>(c) * HW + i;
                    const T xhat = (xg[off] - mu) * is;
                    dg += dyg[off] * xhat;
                    db += dyg[off];
                    const T dxhat = dyg[off] * ga;
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat;
                }
                dgamma[g * cg + c] += dg;
                dbeta[g * cg + c] += db;
            }
            T* dxg = dx + base;
            const T inv_m = T(1) / static_cast<T>(m);
            for (int c = 0; c < cg; ++c) {
                const T ga = gamma[g * cg + c];
                for (int i = 0; i < HW; ++i) {
                    const std::size_t off = static_cast<std::size_t>(c) * HW + i;
                    const T xhat = (xg[off] - mu) * is;
                    const T dxhat = dyg[off] * ga;
                    dxg[off] = is * (dxhat - inv_m * (sum_dxhat + xhat * sum_dxhat_xhat));
                }
            }
        }
}

// y[N,Out] = x[N,In] * w[Out,In]^T + b
template <class T>
void linear_forward(const T* x, int N, int In, const T* w, const T* b, int Out, T* y) {
    gemm_abt(N, Out, In, x, w, y);
    if (b)
        for (int n = 0; n < N; ++n)
            for (int o = 0; o < Out; ++o) y[static_cast<std::size_t>(n) * Out + o] += b[o];
}

// dw/db accumulate; dx (optional) accumulates when acc_dx
template <class T>
void linear_backward(const T* x, const T* dy, int N, int In, int Out, const T* w, T* dx, T* dw,
                     T* db, bool acc_dx = false) {
    gemm_atb(Out, In, N, dy, x, dw, true);
    if (db)
        for (int n = 0; n < N; ++n)
            for (int o = 0; o < Out; ++o) db[o] += dy[static_cast<std::size_t>(n) * Out + o];
    if (dx) gemm(N, In, Out, dy, w, dx, acc_dx);
}

template <class T>
void upsample2x_forward(const T* x, int N, int C, int H, int W, T* y) {
    const int H2 = 2 * H, W2 = 2 * W;
    for (int nc = 0; nc < N * C; ++nc) {
        const T* src = x + static_cast<std::size_t>(nc) * H * W;
        T* dst = y + static_cast<std::size_t>(nc) * H2 * W2;
        for (int yy = 0; yy < H2; ++yy)
            for (int xx = 0; xx < W2; ++xx)
                dst[yy * W2 + xx] = src[(yy / 2) * W + (xx / 2)];
    }
}

template <class T>
void upsample2x_backward(const T* dy, int N, int C, int H, int W, T* dx) {
    const int H2 = 2 * H, W2 = 2 * W;
    for (int nc = 0; nc < N * C; ++nc) {
        const T* src = dy + static_cast<std::size_t>(nc) * H2 * W2;
        T* dst = dx + static_cast<std::size_t>(nc) * H * W;
        for (int yy = 0; yy < H; ++yy)
            for (int xx = 0; xx < W; ++xx)
                dst[yy * W + xx] = src[(2 * yy) * W2 + 2 * xx] + src[(2 * yy) * W2 + 2 * xx + 1] +
                                   src[(2 * yy + 1) * W2 + 2 * xx] +
                                   src[(2 * yy + 1) * W2 + 2 * xx + 1];
    }
}

template <class T>
void avgpool2x2_forward(const T* x, int N, int C, int H, int W, T* y) {
    const int Ho = H / 2, Wo = W / 2;
    for (int nc = 0; nc < N * C; ++nc) {
        const T* src = x + static_cast<std::size_t>(nc) * H * W;
        T* dst = y + static_cast<std::size_t>(nc) * Ho * Wo;
        for (int yy = 0; yy < Ho; ++yy)
            for (int xx = 0; xx < Wo; ++xx)
                dst[yy * Wo + xx] =
                    (src[(2 * yy) * W + 2 * xx] + src[(2 * yy) * W + 2 * xx + 1] +
                     src[(2 * yy + 1) * W + 2 * xx] + src[(2 * yy + 1) * W + 2 * xx + 1]) *
                    T(0.25);
    }
}

template <class T>
void avgpool2x2_backward(const T* dy, int N, int C, int H, int W, T* dx) {
    const int Ho = H / 2, Wo = W / 2;
    for (int nc = 0; nc < N * C; ++nc) {
        const T* src = dy + static_cast<std::size_t>(nc) * Ho * Wo;
        T* dst = dx + static_cast<std::size_t>(nc) * H * W;
        for (int yy = 0; yy < Ho; ++yy)
            for (int xx = 0; xx < Wo; ++xx) {
                const T g = src[yy * Wo + xx] * T(0.25);
                dst[(2 * yy) * W + 2 * xx] = g;
                dst[(2 * yy) * W + 2 * xx + 1] = g;
                dst[(2 * yy + 1) * W + 2 * xx] = g;
                dst[(2 * yy + 1) * W + 2 * xx + 1] = g;
            }
    }
}

template <class T>
void global_avgpool_forward(const T* x, int N, int C, int HW, T* y) {
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const T* src = x + (static_cast<std::size_t>(n) * C + c) * HW;
            T s = 0;
            for (int i = 0; i < HW; ++i) s += src[i];
            y[static_cast<std::size_t>(n) * C + c] = s / static_cast<T>(HW);
        }
}

template <class T>
void global_avgpool_backward(const T* dy, int N, int C, int HW, T* dx) {
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const T g = dy[static_cast<std::size_t>(n) * C + c] / static_cast<T>(HW);
            T* dst = dx + (static_cast<std::size_t>(n) * C + c) * HW;
            for (int i = 0; i < HW; ++i) dst[i] = g;
        }
}

// y[N, Ca+Cb, HW] from a[N,Ca,HW], b[N,Cb,HW]
template <class T>
void concat_channels(const T* a, int Ca, const T* b, int Cb, int N, int HW, T* y) {
    for (int n = 0; n < N; ++n) {
        std::memcpy(y + static_cast<std::size_t>(n) * (Ca + Cb) * HW,
                    a + static_cast<std::size_t>(n) * Ca * HW,
                    sizeof(T) * static_cast<std::size_t>(Ca) * HW);
        std::memcpy(y + (static_cast<std::size_t>(n) * (Ca + Cb) + Ca) * HW,
                    b + static_cast<std::size_t>(n) * Cb * HW,
                    sizeof(T) * static_cast<std::size_t>(Cb) * HW);
    }
}

template <class T>
void split_channels(const T* dy, int Ca, int Cb, int N, int HW, T* da, T* db) {
    for (int n = 0; n < N; ++n) {
        std::memcpy(da + static_cast<std::size_t>(n) * Ca * HW,
                    dy + static_cast<std::size_t>(n) * (Ca + Cb) * HW,
                    sizeof(T) * static_cast<std::size_t>(Ca) * HW);
        std::memcpy(db + static_cast<std::size_t>(n) * Cb * HW,
                    dy + (static_cast<std::size_t>(n) * (Ca + Cb) + Ca) * HW,
                    sizeof(T) * static_cast<std::size_t>(Cb) * HW);
    }
}

// x[n,c,:] += e[n,c]
template <class T>
void add_channel_bias(T* x, const T* e, int N, int C, int HW) {
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const T v = e[static_cast<std::size_t>(n) * C + c];
            T* row = x + (static_cast<std::size_t>(n) * C + c) * HW;
            for (int i = 0; i < HW; ++i) row[i] += v;
        }
}

// de[n,c] = sum_hw dy[n,c,:]
template <class T>
void channel_bias_backward(const T* dy, int N, int C, int HW, T* de) {
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const T* row = dy + (static_cast<std::size_t>(n) * C + c) * HW;
            T s = 0;
            for (int i = 0; i < HW; ++i) s += row[i];
            de[static_cast<std::size_t>(n) * C + c] = s;
        }
}

// mean cross entropy over the batch; dlogits (optional) overwritten
template <class T>
T softmax_cross_entropy(const T* logits, const int* labels, int N, int K, T* dlogits) {
    T loss = 0;
    std::vector<T> p(K);
    for (int n = 0; n < N; ++n) {
        const T* l = logits + static_cast<std::size_t>(n) * K;
        T mx = l[0];
        for (int k = 1; k < K; ++k) mx = std::max(mx, l[k]);
        T z = 0;
        for (int k = 0; k < K; ++k) {
            p[k] = std::exp(l[k] - mx);
            z += p[k];
        }
        for (int k = 0; k < K; ++k) p[k] /= z;
        loss -= std::log(std::max(p[labels[n]], std::numeric_limits<T>::min()));
        if (dlogits) {
            T* d = dlogits + static_cast<std::size_t>(n) * K;
            for (int k = 0; k < K; ++k) d[k] = (p[k] - (k == labels[n] ? T(1) : T(0))) / T(N);
        }
    }
    return loss / T(N);
}

// half sines then half cosines, geometric frequency ladder
template <class T>
void sinusoidal_embedding(const int* t, int N, int dim, T* y) {
    const int half = dim / 2;
    for (int n = 0; n < N; ++n) {
        T* row = y + static_cast<std::size_t>(n) * dim;
        for (int i = 0; i < half; ++i) {
            const T freq = std::exp(T(-std::log(10000.0)) * T(i) / T(half));
            row[i] = std::sin(T(t[n]) * freq);
            row[half + i] = std::cos(T(t[n]) * freq);
        }
    }
}

template <class T>
bool all_finite(const T* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(x[i])) return false;
    return true;
}

}  // namespace palmforge::nn
