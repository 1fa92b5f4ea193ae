#include "exprsaug/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace exprsaug::kernels {

namespace {

// Four interleaved partial sums; the combination order is fixed.
inline double dot(const double* a, const double* b, std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    double t = (s0 + s1) + (s2 + s3);
    for (; i < n; ++i) t += a[i] * b[i];
    return t;
}

constexpr std::size_t kSampleBlock = 16;

inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

void affine_forward(const Matrix& x, const Matrix& w, std::span<const double> bias, Matrix& z) {
    const std::size_t n = x.rows();
    const std::size_t in = x.cols();
    const std::size_t out = w.rows();
    if (z.rows() != n || z.cols() != out) z = Matrix(n, out);
    const Matrix xt = x.transposed();  // in x n: one feature across the batch is contiguous
    const double* xd = xt.data();
    const double* wd = w.data();
    double* zd = z.data();
    const long long pairs = static_cast<long long>((out + 1) / 2);

    // Each output accumulates its inputs in index order with one running sum,
    // vectorized across a block of samples. Two weight rows share each load.
#pragma omp parallel for schedule(static)
    for (long long op = 0; op < pairs; ++op) {
        const std::size_t o0 = static_cast<std::size_t>(op) * 2;
        const bool two = o0 + 1 < out;
        const double* w0 = wd + o0 * in;
        const double* w1 = two ? w0 + in : w0;
        for (std::size_t s0 = 0; s0 < n; s0 += kSampleBlock) {
            const std::size_t sb = std::min(kSampleBlock, n - s0);
            double acc0[kSampleBlock], acc1[kSampleBlock];
            for (std::size_t r = 0; r < kSampleBlock; ++r) {
                acc0[r] = 0.0;
                acc1[r] = 0.0;
            }
            if (sb == kSampleBlock) {
                for (std::size_t i = 0; i < in; ++i) {
                    const double* xr = xd + i * n + s0;
                    const double a = w0[i], b = w1[i];
                    for (std::size_t r = 0; r < kSampleBlock; ++r) {
                        acc0[r] += a * xr[r];
                        acc1[r] += b * xr[r];
                    }
                }
            } else {
                for (std::size_t i = 0; i < in; ++i) {
                    const double* xr = xd + i * n + s0;
                    const double a = w0[i], b = w1[i];
                    for (std::size_t r = 0; r < sb; ++r) {
                        acc0[r] += a * xr[r];
                        acc1[r] += b * xr[r];
                    }
                }
            }
            for (std::size_t r = 0; r < sb; ++r) {
                zd[(s0 + r) * out + o0] = bias[o0] + acc0[r];
                if (two) zd[(s0 + r) * out + o0 + 1] = bias[o0 + 1] + acc1[r];
            }
        }
    }
}

void weight_gradient(const Matrix& dz, const Matrix& a, Matrix& dw, std::span<double> dbias) {
    const std::size_t n = dz.rows();
    const std::size_t out = dz.cols();
    const std::size_t in = a.cols();
    if (dw.rows() != out || dw.cols() != in) dw = Matrix(out, in);
    const double* dzd = dz.data();
    const double* ad = a.data();
    double* dwd = dw.data();
    const long long outs = static_cast<long long>(out);

#pragma omp parallel for schedule(static)
    for (long long oo = 0; oo < outs; ++oo) {
        const std::size_t o = static_cast<std::size_t>(oo);
        double* wrow = dwd + o * in;
        std::fill(wrow, wrow + in, 0.0);
        double bsum = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            const double g = dzd[s * out + o];
            bsum += g;
            // Skipping exact zeros (ReLU / dropout) leaves the sum unchanged.
            if (g != 0.0) axpy(g, ad + s * in, wrow, in);
        }
        dbias[o] = bsum;
    }
}

void input_gradient(const Matrix& dz, const Matrix& w, Matrix& da) {
    const std::size_t n = dz.rows();
    const std::size_t out = dz.cols();
    const std::size_t in = w.cols();
    if (da.rows() != n || da.cols() != in) da = Matrix(n, in);
    const double* dzd = dz.data();
    const double* wd = w.data();
    double* dad = da.data();
    const long long ns = static_cast<long long>(n);

#pragma omp parallel for schedule(static)
    for (long long ss = 0; ss < ns; ++ss) {
        const std::size_t s = static_cast<std::size_t>(ss);
        double* arow = dad + s * in;
        std::fill(arow, arow + in, 0.0);
        for (std::size_t o = 0; o < out; ++o) {
            const double g = dzd[s * out + o];
            if (g != 0.0) axpy(g, wd + o * in, arow, in);
        }
    }
}

void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                 std::span<double> v, const AdamCoefficients& c) {
    const long long count = static_cast<long long>(params.size());
    double* p = params.data();
    const double* g = grads.data();
    double* md = m.data();
    double* vd = v.data();
#pragma omp parallel for schedule(static)
    for (long long ii = 0; ii < count; ++ii) {
        const std::size_t i = static_cast<std::size_t>(ii);
        md[i] = c.beta1 * md[i] + (1.0 - c.beta1) * g[i];
        vd[i] = c.beta2 * vd[i] + (1.0 - c.beta2) * g[i] * g[i];
        const double m_hat = md[i] / c.bias_correction1;
        const double v_hat = vd[i] / c.bias_correction2;
        p[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
}

namespace serial {

void affine_forward(const Matrix& x, const Matrix& w, std::span<const double> bias, Matrix& z) {
    z = Matrix(x.rows(), w.rows());
    for (std::size_t s = 0; s < x.rows(); ++s)
        for (std::size_t o = 0; o < w.rows(); ++o) {
            double acc = bias[o];
            for (std::size_t i = 0; i < x.cols(); ++i) acc += w(o, i) * x(s, i);
            z(s, o) = acc;
        }
}

void weight_gradient(const Matrix& dz, const Matrix& a, Matrix& dw, std::span<double> dbias) {
    dw = Matrix(dz.cols(), a.cols());
    for (std::size_t o = 0; o < dz.cols(); ++o) {
        double bsum = 0.0;
        for (std::size_t s = 0; s < dz.rows(); ++s) bsum += dz(s, o);
        dbias[o] = bsum;
        for (std::size_t i = 0; i < a.cols(); ++i) {
            double acc = 0.0;
            for (std::size_t s = 0; s < dz.rows(); ++s) acc += dz(s, o) * a(s, i);
            dw(o, i) = acc;
        }
    }
}

void input_gradient(const Matrix& dz, const Matrix& w, Matrix& da) {
    da = Matrix(dz.rows(), w.cols());
    for (std::size_t s = 0; s < dz.rows(); ++s)
        for (std::size_t i = 0; i < w.cols(); ++i) {
            double acc = 0.0;
            for (std::size_t o = 0; o < dz.cols(); ++o) acc += dz(s, o) * w(o, i);
            da(s, i) = acc;
        }
}

void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                 std::span<double> v, const AdamCoefficients& c) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * grads[i];
        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * grads[i] * grads[i];
        const double m_hat = m[i] / c.bias_correction1;
        const double v_hat = v[i] / c.bias_correction2;
        params[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
}

}  // namespace serial

}  // namespace exprsaug::kernels
